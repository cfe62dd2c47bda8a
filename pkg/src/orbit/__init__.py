"""Ground-truth-free, search-based generation of failure-inducing inputs for a
planetary terrain segmentation model."""

from .errors import ProtocolError, TransportError, ValidationError
from .fitness import FitnessConfig, FitnessPipeline, ObjectivePair, calibrate_threshold, evaluate
from .model import ConstantModel, Prediction, ReferenceModel
from .scene import Genome, LabeledScene, SceneConfig, genome_to_scene, render_scene
from .search import Archive, SearchSettings, run_search

__version__ = "0.1.0"

__all__ = [
    "Archive",
    "ConstantModel",
    "FitnessConfig",
    "FitnessPipeline",
    "Genome",
    "LabeledScene",
    "ObjectivePair",
    "Prediction",
    "ProtocolError",
    "ReferenceModel",
    "SceneConfig",
    "SearchSettings",
    "TransportError",
    "ValidationError",
    "calibrate_threshold",
    "evaluate",
    "genome_to_scene",
    "render_scene",
    "run_search",
]
