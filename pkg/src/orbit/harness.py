"""Experiment orchestration: seeded repetitions per fitness variant, the random
baseline, archive persistence, per-image tables and comparison reports."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import math
import os
from dataclasses import asdict, dataclass, field, replace
from functools import lru_cache
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from . import metrics, stats
from .errors import ValidationError
from .fitness import (
    FitnessConfig,
    FitnessPipeline,
    calibrate_threshold,
    derive_seed,
    training_activations,
)
from .model import ReferenceModel
from .scene import Genome, genome_to_scene, random_genome, render_scene, to_pgm_bytes
from .search import Archive, ArchiveEntry, ArchiveEvent, SearchSettings, log_record, run_search

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
RANDOM = "random"
APPROACHES = ("flip", "noise", "sa", "mcd", "ground_truth", RANDOM)
TABLE_COLUMNS = (
    "variant",
    "rep",
    "index",
    "generation",
    "genome",
    "seed",
    "raw_metric",
    "gated_accuracy",
    "ground_truth_miou",
    "feature_distance_to_nearest_in_archive",
)


@dataclass(frozen=True)
class ExperimentPlan:
    variants: tuple[str, ...] = ("flip",)
    repetitions: int = 10
    settings: SearchSettings = SearchSettings(generations=20)
    out_dir: str = "orbit_out"
    master_seed: int = 0
    model: str = "builtin"
    transform: str = "identity"
    t_similarity: Optional[float] = None
    sky_threshold: float = 0.7
    noise_variance: float = metrics.NOISE_VARIANCE
    mcd_passes: int = metrics.MCD_PASSES
    calibration_images: int = 1000
    training_images: int = 200
    random_metric: str = "flip"  # variant whose metric scores random-baseline images
    random_archive: bool = True

    def __post_init__(self):
        object.__setattr__(self, "variants", tuple(self.variants))
        if self.repetitions < 1:
            raise ValidationError("repetitions must be >= 1")
        if len(set(self.variants)) != len(self.variants):
            raise ValidationError("variant ids must be distinct")
        for v in self.variants:
            if v not in APPROACHES:
                raise ValidationError(f"unknown variant {v!r}")

    def fitness_config(self, variant: str, threshold: float) -> FitnessConfig:
        return FitnessConfig(
            variant=self.random_metric if variant == RANDOM else variant,
            sky_threshold=self.sky_threshold,
            noise_variance=self.noise_variance,
            mcd_passes=self.mcd_passes,
            similarity_threshold=threshold,
        )


@dataclass
class RunArtifacts:
    variant: str
    rep: int
    seed: int
    run_dir: Path
    archive_dir: Path
    run_log: Path
    table_path: Path
    rows: list[dict] = field(default_factory=list, repr=False)
    archive: Optional[Archive] = field(default=None, repr=False)
    evaluations: int = 0


def cell_seed(master_seed: int, variant: str, rep: int) -> int:
    """master_seed XOR a stable hash of (variant, rep); other cells never shift."""
    digest = hashlib.sha256(f"{variant}\x00{rep}".encode()).digest()
    return (int(master_seed) ^ int.from_bytes(digest[:8], "big")) & (2**63 - 1)


# -- model construction ----------------------------------------------------------


def build_model(spec: str):
    """``builtin``, ``builtin:<mode>`` or ``adapter:<command line>``."""
    if spec == "builtin" or spec.startswith("builtin:"):
        mode = spec.split(":", 1)[1] if ":" in spec else "default"
        return ReferenceModel(seed=0, mode=mode)
    if spec.startswith("adapter:"):
        from .adapter import AdapterModel

        return AdapterModel(spec.split(":", 1)[1])
    raise ValidationError(f"unknown model spec {spec!r}")


@lru_cache(maxsize=16)
def cached_threshold(n_images: int, seed: int, transform: str) -> float:
    return calibrate_threshold(n_images, seed, transform)


# -- diversity ------------------------------------------------------------------


def archive_diversity(features) -> list[float]:
    """Distance from every archived input to its closest other archived input."""
    if isinstance(features, Archive):
        features = features.feature_matrix()
    f = np.asarray(features, dtype=np.float64)
    if f.ndim != 2 or f.shape[0] < 2:
        raise ValidationError("diversity needs at least two archived inputs")
    diff = f[:, None, :] - f[None, :, :]
    d = np.sqrt((diff**2).sum(axis=2))
    np.fill_diagonal(d, np.inf)
    return d.min(axis=1).tolist()


# -- persistence ------------------------------------------------------------------


def _sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def _dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def _write(path: Path, data: bytes, manifest_files: dict, root: Path) -> None:
    path.write_bytes(data)
    manifest_files[path.relative_to(root).as_posix()] = _sha256(data)


def ensure_writable(out_dir: str | Path) -> Path:
    root = Path(out_dir)
    try:
        root.mkdir(parents=True, exist_ok=True)
        probe = root / ".orbit_write_probe"
        probe.write_bytes(b"")
        probe.unlink()
    except OSError as exc:
        raise ValidationError(f"output directory {root} is not writable: {exc}") from exc
    return root


def _table_rows(variant: str, rep: int, archive: Archive, model, transform: str) -> list[dict]:
    feats = archive.feature_matrix()
    nn = archive_diversity(feats) if len(archive) >= 2 else [None] * len(archive)
    rows = []
    for i, (entry, d) in enumerate(zip(archive.entries, nn)):
        # evaluation-only: the simulator mask never feeds back into the search
        mask = render_scene(genome_to_scene(entry.genome), entry.genome.seed).mask
        gt = metrics.miou(model.predict(entry.image).labels, mask, model.num_classes)
        rows.append(
            {
                "variant": variant,
                "rep": rep,
                "index": i,
                "generation": entry.generation,
                "genome": " ".join(repr(g) for g in entry.genome.genes),
                "seed": entry.genome.seed,
                "raw_metric": entry.raw_metric,
                "gated_accuracy": entry.f_accuracy,
                "ground_truth_miou": gt,
                "feature_distance_to_nearest_in_archive": d,
            }
        )
    return rows


def persist_run(run_dir: Path, variant: str, rep: int, seed: int, archive: Archive, run_log: list[dict],
                rows: list[dict]) -> RunArtifacts:
    archive_dir = run_dir / "archive"
    archive_dir.mkdir(parents=True, exist_ok=True)
    files: dict[str, str] = {}
    entries = []
    for i, e in enumerate(archive.entries):
        scene = render_scene(genome_to_scene(e.genome), e.genome.seed)
        img_name, mask_name = f"img_{i:04d}.pgm", f"mask_{i:04d}.pgm"
        _write(archive_dir / img_name, to_pgm_bytes(e.image), files, run_dir)
        _write(archive_dir / mask_name, to_pgm_bytes(scene.mask, is_mask=True), files, run_dir)
        entries.append(
            {
                "index": i,
                "image": f"archive/{img_name}",
                "mask": f"archive/{mask_name}",
                "genome": e.genome.to_dict(),
                "scene": scene.config.as_dict(),
                "f_accuracy": e.f_accuracy,
                "raw_metric": e.raw_metric,
                "event": e.event,
                "generation": e.generation,
            }
        )
    log_path = run_dir / "run_log.ndjson"
    _write(log_path, "".join(_dumps(r) + "\n" for r in run_log).encode(), files, run_dir)
    table_path = run_dir / "metrics.csv"
    _write(table_path, table_to_csv(rows).encode(), files, run_dir)
    manifest = {
        "schema_version": SCHEMA_VERSION,
        "variant": variant,
        "rep": rep,
        "seed": seed,
        "threshold": archive.threshold,
        "entries": entries,
        "files": dict(sorted(files.items())),
    }
    (archive_dir / "manifest.json").write_text(json.dumps(manifest, sort_keys=True, indent=1) + "\n")
    return RunArtifacts(variant, rep, seed, run_dir, archive_dir, log_path, table_path, rows, archive,
                        len(run_log))


# -- runs -------------------------------------------------------------------------


class KeepAllArchive(Archive):
    """Archive that keeps every relevant input (random baseline without filtering)."""

    def update(self, candidate, generation: int = 0) -> ArchiveEvent:
        obj = candidate.objectives
        if obj.gated:
            ev = ArchiveEvent("gated", None, None, generation, obj.f_accuracy)
        else:
            self.entries.append(ArchiveEntry(candidate.genome, candidate.image, candidate.features,
                                             obj.f_accuracy, obj.raw_metric, "appended", generation))
            ev = ArchiveEvent("appended", len(self.entries) - 1, None, generation, obj.f_accuracy,
                              features=candidate.features)
        self.events.append(ev)
        return ev


def run_random_baseline(settings: SearchSettings, n_images: Optional[int] = None, seed: Optional[int] = None,
                        *, pipeline: FitnessPipeline, use_archive: bool = True) -> tuple[Archive, list[dict]]:
    """Uniform random genomes under the search's archive policy and evaluation budget.

    Images are processed in batches of ``population_size`` against an archive
    snapshot, exactly as the search does per generation.
    """
    n = settings.evaluations if n_images is None else int(n_images)
    if n < 1:
        raise ValidationError("random baseline needs at least one image")
    seed = settings.master_seed if seed is None else seed
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x4A2D]))
    run_seed = derive_seed(seed, "evaluation")
    threshold = pipeline.cfg.similarity_threshold
    archive = Archive(threshold) if use_archive else KeepAllArchive(threshold)
    run_log: list[dict] = []
    genomes = [random_genome(rng) for _ in range(n)]
    batch = settings.population_size
    for start in range(0, n, batch):
        gen = start // batch
        snapshot = archive.feature_matrix()
        evals = [pipeline.evaluate(g, snapshot, run_seed) for g in genomes[start : start + batch]]
        for i, ev in enumerate(evals):
            event = archive.update(ev, gen)
            run_log.append(log_record(gen, i, ev, event))
    return archive, run_log


class Experiment:
    """Shared state (model, threshold, training activations) for one plan."""

    def __init__(self, plan: ExperimentPlan, model=None):
        self.plan = plan
        self.model = model if model is not None else build_model(plan.model)
        if plan.t_similarity is not None:
            self.threshold = float(plan.t_similarity)
        else:
            self.threshold = cached_threshold(plan.calibration_images, plan.master_seed, plan.transform)
        self._train_acts = None

    @property
    def train_acts(self):
        if self._train_acts is None:
            self._train_acts = training_activations(
                self.model, self.plan.training_images, self.plan.master_seed, self.plan.transform
            )
        return self._train_acts

    def pipeline(self, variant: str) -> FitnessPipeline:
        cfg = self.plan.fitness_config(variant, self.threshold)
        acts = self.train_acts if cfg.variant == "sa" else None
        return FitnessPipeline(cfg, self.model, self.plan.transform, acts)

    def run_cell(self, variant: str, rep: int, root: Path) -> RunArtifacts:
        seed = cell_seed(self.plan.master_seed, variant, rep)
        settings = replace(self.plan.settings, master_seed=seed)
        pipe = self.pipeline(variant)
        if variant == RANDOM:
            archive, run_log = run_random_baseline(settings, None, seed, pipeline=pipe,
                                                   use_archive=self.plan.random_archive)
        else:
            archive, run_log = run_search(settings, pipe.cfg, self.model, pipeline=pipe)
        rows = _table_rows(variant, rep, archive, self.model, self.plan.transform)
        run_dir = root / variant / f"rep_{rep:02d}"
        run_dir.mkdir(parents=True, exist_ok=True)
        log.info("%s rep %d: %d evaluations, archive %d", variant, rep, len(run_log), len(archive))
        return persist_run(run_dir, variant, rep, seed, archive, run_log, rows)


def run_experiment(plan: ExperimentPlan, model=None) -> dict[tuple[str, int], RunArtifacts]:
    root = ensure_writable(plan.out_dir)
    exp = Experiment(plan, model)
    results = {}
    for variant in plan.variants:
        for rep in range(plan.repetitions):
            results[(variant, rep)] = exp.run_cell(variant, rep, root)
    rows = [r for key in sorted(results) for r in results[key].rows]
    write_report(rows, "csv", root / "metrics.csv")
    write_report(rows, "json", root / "metrics.json")
    summary = summarize(rows, plan, exp.threshold)
    (root / "report.json").write_text(json.dumps(summary, sort_keys=True, indent=1) + "\n")
    return results


def summarize(rows: list[dict], plan: ExperimentPlan, threshold: float) -> dict:
    by_variant: dict[str, list[dict]] = {}
    for r in rows:
        by_variant.setdefault(r["variant"], []).append(r)
    out = {"schema_version": SCHEMA_VERSION, "threshold": threshold, "plan": _plan_dict(plan), "variants": {},
           "comparisons": []}
    for v, vr in sorted(by_variant.items()):
        entry = {"images": len(vr)}
        for col in ("raw_metric", "ground_truth_miou", "feature_distance_to_nearest_in_archive"):
            vals = [x[col] for x in vr if x[col] is not None]
            if vals:
                entry[col] = stats.describe(vals)
        out["variants"][v] = entry
    names = sorted(by_variant)
    for a in names:
        for b in names:
            if a >= b:
                continue
            for col in ("ground_truth_miou", "feature_distance_to_nearest_in_archive"):
                xa = [x[col] for x in by_variant[a] if x[col] is not None]
                xb = [x[col] for x in by_variant[b] if x[col] is not None]
                if xa and xb:
                    res = stats.compare_unpaired(xa, xb)
                    out["comparisons"].append({"a": a, "b": b, "column": col, **res.to_dict()})
    return out


def _plan_dict(plan: ExperimentPlan) -> dict:
    d = asdict(plan)
    d["variants"] = list(plan.variants)
    d.pop("out_dir")
    return d


# -- tables and reports ----------------------------------------------------------------


def _sort_key(row: dict):
    return (str(row.get("variant", "")), int(row.get("rep", 0) or 0), int(row.get("generation", 0) or 0),
            int(row.get("individual", row.get("index", 0)) or 0))


def _columns(rows: Sequence[dict]) -> list[str]:
    cols = list(TABLE_COLUMNS)
    extra = sorted({k for r in rows for k in r} - set(cols))
    present = [c for c in cols if not rows or any(c in r for r in rows)]
    return present + extra


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def table_to_csv(rows: Sequence[dict]) -> str:
    rows = sorted(rows, key=_sort_key)
    cols = _columns(rows)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for r in rows:
        w.writerow([_cell(r.get(c)) for c in cols])
    return buf.getvalue()


def write_report(results: Sequence[dict], format: str, path: str | Path) -> Path:
    """Per-image rows as CSV (header row names the columns) or versioned JSON."""
    path = Path(path)
    if format == "csv":
        path.write_text(table_to_csv(results))
    elif format == "json":
        rows = sorted(results, key=_sort_key)
        doc = {"schema_version": SCHEMA_VERSION, "columns": _columns(rows), "rows": rows}
        path.write_text(json.dumps(doc, sort_keys=True, indent=1) + "\n")
    else:
        raise ValidationError(f"unknown report format {format!r}")
    return path


def read_report(path: str | Path) -> list[dict]:
    path = Path(path)
    if path.suffix == ".json":
        return json.loads(path.read_text())["rows"]
    return read_table(path)


def _parse(v: str):
    if v == "":
        return None
    for conv in (int, float):
        try:
            return conv(v)
        except ValueError:
            pass
    return v


def read_table(path: str | Path) -> list[dict]:
    with open(path, newline="") as fh:
        return [{k: (_parse(v) if k != "genome" else v) for k, v in row.items()} for row in csv.DictReader(fh)]


def compare_runs(table_a, table_b, metric_column: str, paired: bool = False,
                 key_columns: Sequence[str] = ("rep", "index")) -> stats.ComparisonResult:
    """Mann-Whitney + A12 (unpaired) or Wilcoxon + E-hat (paired) on one column."""
    a = read_report(table_a) if isinstance(table_a, (str, Path)) else list(table_a)
    b = read_report(table_b) if isinstance(table_b, (str, Path)) else list(table_b)
    for name, t in (("a", a), ("b", b)):
        if t and metric_column not in t[0]:
            raise ValidationError(f"column {metric_column!r} missing from table {name}")
    if paired:
        if len(a) != len(b):
            raise ValidationError("paired comparison needs tables of equal length")
        keys = [k for k in key_columns if a and k in a[0] and k in b[0]]
        for ra, rb in zip(a, b):
            if any(ra[k] != rb[k] for k in keys):
                raise ValidationError("paired tables are not aligned")
        xa = [r[metric_column] for r in a]
        xb = [r[metric_column] for r in b]
        return stats.compare_paired(xa, xb)
    xa = [r[metric_column] for r in a if r[metric_column] is not None]
    xb = [r[metric_column] for r in b if r[metric_column] is not None]
    return stats.compare_unpaired(xa, xb)


# -- audit -----------------------------------------------------------------------------


def audit_run_dir(run_dir: str | Path, model=None, transform: str = "identity") -> list[str]:
    """Re-derive a persisted run from its manifest and log; returns problems found."""
    run_dir = Path(run_dir)
    problems = []
    manifest = json.loads((run_dir / "archive" / "manifest.json").read_text())
    for rel, digest in manifest["files"].items():
        if _sha256((run_dir / rel).read_bytes()) != digest:
            problems.append(f"hash mismatch for {rel}")
    records = [json.loads(line) for line in (run_dir / "run_log.ndjson").read_text().splitlines() if line]
    # replay the archive membership from the logged events
    slots: list[dict] = []
    for rec in records:
        ev = rec["archive_event"]
        if ev["kind"] == "appended":
            slots.append(rec)
        elif ev["kind"] == "replaced":
            slots[ev["index"]] = rec
    if [s["genome"] for s in slots] != [e["genome"] for e in manifest["entries"]]:
        problems.append("archive contents do not match the replayed log")
    rows = sorted(read_table(run_dir / "metrics.csv"), key=lambda r: r["index"])
    for rec, row, entry in zip(slots, rows, manifest["entries"]):
        if rec["f_accuracy_raw"] != row["raw_metric"] or rec["f_accuracy_gated"] != row["gated_accuracy"]:
            problems.append(f"row {row['index']} disagrees with the run log")
        if entry["f_accuracy"] != rec["f_accuracy_gated"]:
            problems.append(f"manifest entry {entry['index']} disagrees with the run log")
    if len(slots) >= 2:
        from .scene import apply_realism_transform

        feats = []
        for s in slots:
            g = Genome.from_dict(s["genome"])
            img = apply_realism_transform(render_scene(genome_to_scene(g), g.seed).image, transform, g.seed)
            feats.append(metrics.extract_features(img))
        for row, d in zip(rows, archive_diversity(np.array(feats))):
            if not math.isclose(row["feature_distance_to_nearest_in_archive"], d, rel_tol=1e-9, abs_tol=1e-12):
                problems.append(f"row {row['index']} diversity not reproducible")
    return problems


def iter_run_dirs(root: str | Path) -> Iterable[Path]:
    for manifest in sorted(Path(root).glob("*/rep_*/archive/manifest.json")):
        yield manifest.parent.parent
