import numpy as np
import pytest

from orbit.errors import ValidationError
from orbit.metrics import flip_consistency, hflip_grid
from orbit.model import ConstantModel, ReferenceModel, labels_from_scores
from orbit.scene import Genome, genome_to_scene, random_genome, render_scene


def test_predict_is_deterministic(default_model, mid_scene):
    a = default_model.predict(mid_scene.image)
    b = default_model.predict(mid_scene.image)
    assert np.array_equal(a.labels, b.labels) and np.array_equal(a.scores, b.scores)


def test_all_zero_image_gives_valid_labels(default_model):
    p = default_model.predict(np.zeros((64, 64)))
    assert p.labels.shape == (64, 64)
    assert p.labels.min() >= 0 and p.labels.max() < default_model.num_classes


@pytest.mark.parametrize("mode", ["default", "flip_robust", "planted_defect"])
def test_scores_are_a_distribution_and_labels_their_argmax(mode, mid_scene):
    p = ReferenceModel(seed=3, mode=mode).predict(mid_scene.image)
    assert p.scores.shape == (6, 64, 64)
    assert np.all(p.scores >= 0) and np.all(p.scores <= 1)
    assert np.allclose(p.scores.sum(axis=0), 1.0, atol=1e-6)
    assert np.array_equal(p.labels, labels_from_scores(p.scores))


def test_argmax_ties_pick_lowest_index():
    scores = np.full((3, 1, 2), 1 / 3)
    scores[:, 0, 1] = (0.2, 0.4, 0.4)
    assert labels_from_scores(scores).tolist() == [[0, 1]]


def test_wrong_image_shape_rejected(default_model):
    with pytest.raises(ValidationError):
        default_model.predict(np.zeros((32, 64)))


def test_unknown_mode_rejected():
    with pytest.raises(ValidationError):
        ReferenceModel(mode="sloppy")


def test_same_seed_models_agree_everywhere(mid_scene):
    a, b = ReferenceModel(seed=11), ReferenceModel(seed=11)
    assert np.array_equal(a.predict(mid_scene.image).scores, b.predict(mid_scene.image).scores)
    assert np.array_equal(a.activations(mid_scene.image), b.activations(mid_scene.image))
    assert np.array_equal(a.predict_with_dropout(mid_scene.image, 4).labels,
                          b.predict_with_dropout(mid_scene.image, 4).labels)


def test_different_seeds_give_different_weights():
    assert not np.array_equal(ReferenceModel(seed=1).weights, ReferenceModel(seed=2).weights)


def test_zero_dropout_equals_predict(mid_scene):
    m = ReferenceModel(seed=0, dropout_rate=0.0)
    a = m.predict(mid_scene.image)
    b = m.predict_with_dropout(mid_scene.image, 99)
    assert np.array_equal(a.labels, b.labels) and np.array_equal(a.scores, b.scores)


def test_dropout_is_seeded(default_model, mid_scene):
    a = default_model.predict_with_dropout(mid_scene.image, 5)
    b = default_model.predict_with_dropout(mid_scene.image, 5)
    assert np.array_equal(a.scores, b.scores)


def test_dropout_passes_are_not_degenerate(default_model, mid_scene):
    passes = [default_model.predict_with_dropout(mid_scene.image, s).labels for s in range(1, 6)]
    assert any(not np.array_equal(passes[0], p) for p in passes[1:])


def test_activation_vector_length_and_determinism(default_model, mid_scene):
    a = default_model.activations(mid_scene.image)
    assert a.shape == (16,)
    assert np.array_equal(a, default_model.activations(mid_scene.image))


def test_rocky_and_sandy_scenes_activate_differently(default_model):
    rocky = render_scene(genome_to_scene(Genome((0.4, 0.5, 0.5, 1.0, 1.0, 0.0, 0.0, 0.5))), 1)
    sandy = render_scene(genome_to_scene(Genome((0.4, 0.5, 0.5, 0.0, 0.5, 1.0, 0.0, 0.5))), 1)
    d = np.linalg.norm(default_model.activations(rocky.image) - default_model.activations(sandy.image))
    assert d > 0


def test_flip_robust_mode_commutes_exactly_with_flip(robust_model):
    rng = np.random.default_rng(0)
    for _ in range(10):
        g = random_genome(rng)
        img = render_scene(genome_to_scene(g), g.seed).image
        assert np.array_equal(hflip_grid(robust_model.predict(img).labels),
                              robust_model.predict(hflip_grid(img)).labels)


def test_planted_defect_is_dormant_in_sparse_scenes(defect_model):
    sparse = render_scene(genome_to_scene(Genome((0.5, 0.5, 0.5, 0.05, 0.5, 0.5, 0.5, 0.5))), 2)
    assert flip_consistency(defect_model, sparse.image) == 1.0


def test_planted_defect_breaks_flip_consistency_in_rock_dense_scenes(defect_model):
    dense = render_scene(genome_to_scene(Genome((0.0, 0.5, 0.5, 1.0, 1.0, 0.0, 0.0, 0.5))), 2)
    assert flip_consistency(defect_model, dense.image) < 0.7


def test_default_mode_is_not_flip_equivariant(default_model):
    rng = np.random.default_rng(1)
    values = []
    for _ in range(10):
        g = random_genome(rng)
        values.append(flip_consistency(default_model, render_scene(genome_to_scene(g), g.seed).image))
    assert min(values) < 1.0


def test_constant_model():
    m = ConstantModel(label=4)
    p = m.predict(np.zeros((64, 64)))
    assert np.all(p.labels == 4)
    assert m.activations(np.zeros((64, 64))).shape == (1,)
