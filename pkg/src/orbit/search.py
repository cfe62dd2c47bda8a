"""NSGA-II extended with a distance-threshold archive.

Determinism rules: every random draw comes from one generator seeded by the
master seed, consumed in a fixed order (initial genomes, then per generation:
tournaments, crossover, mutation); ties are always broken by lower index.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import _core
from .errors import ValidationError
from .fitness import GATE_VALUE, Evaluation, FitnessConfig, FitnessPipeline, derive_seed
from .scene import Genome, random_genome


@dataclass(frozen=True)
class SearchSettings:
    population_size: int = 12
    generations: int = 100
    mutation_probability: float = 0.3
    crossover_probability: float = 0.7
    sbx_eta: float = 15.0
    mutation_eta: float = 20.0
    master_seed: int = 0

    def __post_init__(self):
        if self.population_size < 4 or self.population_size % 2:
            raise ValidationError("population size must be even and at least 4")
        if self.generations < 0:
            raise ValidationError("generations must be >= 0")
        for name in ("mutation_probability", "crossover_probability"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ValidationError(f"{name} must lie in [0, 1]")

    @property
    def evaluations(self) -> int:
        return self.population_size * (self.generations + 1)


# -- ranking ------------------------------------------------------------------


def dominates(p: Sequence[float], q: Sequence[float]) -> bool:
    return all(a <= b for a, b in zip(p, q)) and any(a < b for a, b in zip(p, q))


def fast_nondominated_sort(objective_pairs) -> list[list[int]]:
    objs = np.asarray([tuple(o) for o in objective_pairs], dtype=np.float64)
    if objs.size == 0:
        return []
    if not np.all(np.isfinite(objs)):
        raise ValidationError("objectives must be finite")
    ranks = _core.nondominated_ranks(objs)
    fronts: list[list[int]] = [[] for _ in range(int(ranks.max()) + 1)]
    for i, r in enumerate(ranks):
        fronts[int(r)].append(i)
    return fronts


def crowding_distance(front_objectives) -> list[float]:
    f = np.asarray([tuple(o) for o in front_objectives], dtype=np.float64)
    n = len(f)
    if n == 0:
        raise ValidationError("empty front")
    if n <= 2:
        return [math.inf] * n
    dist = np.zeros(n)
    for m in range(f.shape[1]):
        order = np.argsort(f[:, m], kind="stable")
        lo, hi = f[order[0], m], f[order[-1], m]
        span = hi - lo
        if span == 0:
            continue
        dist[order[0]] = math.inf
        dist[order[-1]] = math.inf
        for k in range(1, n - 1):
            dist[order[k]] += (f[order[k + 1], m] - f[order[k - 1], m]) / span
    return dist.tolist()


def rank_and_crowding(objective_pairs) -> tuple[list[int], list[float]]:
    fronts = fast_nondominated_sort(objective_pairs)
    n = len(objective_pairs)
    ranks = [0] * n
    crowd = [0.0] * n
    objs = [tuple(o) for o in objective_pairs]
    for r, front in enumerate(fronts):
        cd = crowding_distance([objs[i] for i in front])
        for i, d in zip(front, cd):
            ranks[i] = r
            crowd[i] = d
    return ranks, crowd


def survivor_order(ranks, crowd) -> list[int]:
    """Indices best-first: lower rank, then larger crowding, then lower index."""
    return sorted(range(len(ranks)), key=lambda i: (ranks[i], -crowd[i], i))


def binary_tournament(ranks, crowd, n_picks: int, rng: np.random.Generator) -> list[int]:
    pool = len(ranks)
    picks = []
    for _ in range(n_picks):
        a, b = (int(x) for x in rng.integers(0, pool, 2))
        ka = (ranks[a], -crowd[a], a)
        kb = (ranks[b], -crowd[b], b)
        picks.append(a if ka <= kb else b)
    return picks


# -- variation ------------------------------------------------------------------


def _rng(seed_or_rng) -> np.random.Generator:
    if isinstance(seed_or_rng, np.random.Generator):
        return seed_or_rng
    return np.random.default_rng(seed_or_rng)


def sbx_crossover(parent_a, parent_b, eta_c: float, prob: float, seed) -> tuple[tuple, tuple]:
    """Simulated binary crossover, per gene, children clamped to [0, 1].

    Draw order: one uniform for the crossover decision, then one per gene
    (always drawn, so the stream advances identically either way).
    """
    a = np.asarray(parent_a, dtype=np.float64)
    b = np.asarray(parent_b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValidationError("parents differ in length")
    rng = _rng(seed)
    do_cross = rng.random() < prob
    u = rng.random(a.size)
    if not do_cross:
        return tuple(a.tolist()), tuple(b.tolist())
    beta = np.where(
        u <= 0.5,
        (2.0 * u) ** (1.0 / (eta_c + 1.0)),
        (1.0 / (2.0 * (1.0 - u))) ** (1.0 / (eta_c + 1.0)),
    )
    c1 = 0.5 * ((1.0 + beta) * a + (1.0 - beta) * b)
    c2 = 0.5 * ((1.0 - beta) * a + (1.0 + beta) * b)
    same = a == b
    c1 = np.where(same, a, np.clip(c1, 0.0, 1.0))
    c2 = np.where(same, b, np.clip(c2, 0.0, 1.0))
    return tuple(c1.tolist()), tuple(c2.tolist())


def polynomial_mutation(genes, eta_m: float, prob: float, seed) -> tuple:
    """Deb's bounded polynomial mutation on [0, 1]; draws: per-gene trigger, then per-gene r."""
    y = np.asarray(genes, dtype=np.float64)
    rng = _rng(seed)
    trigger = rng.random(y.size) < prob
    r = rng.random(y.size)
    power = 1.0 / (eta_m + 1.0)
    d1 = y  # distance to lower bound
    d2 = 1.0 - y
    with np.errstate(invalid="ignore"):
        lower = (2.0 * r + (1.0 - 2.0 * r) * (1.0 - d1) ** (eta_m + 1.0)) ** power - 1.0
        upper = 1.0 - (2.0 * (1.0 - r) + 2.0 * (r - 0.5) * (1.0 - d2) ** (eta_m + 1.0)) ** power
    delta = np.where(r < 0.5, lower, upper)
    out = np.where(trigger, np.clip(y + delta, 0.0, 1.0), y)
    return tuple(out.tolist())


# -- archive ------------------------------------------------------------------


@dataclass(frozen=True)
class ArchiveEvent:
    kind: str  # appended | replaced | discarded | gated
    index: Optional[int]
    distance: Optional[float]  # to the closest entry at decision time
    generation: int
    f_accuracy: float
    previous_f_accuracy: Optional[float] = None
    features: Optional[np.ndarray] = field(default=None, repr=False, compare=False)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "index": self.index,
            "distance": None if self.distance is None or math.isinf(self.distance) else self.distance,
            "previous_f_accuracy": self.previous_f_accuracy,
        }


@dataclass
class ArchiveEntry:
    genome: Genome
    image: np.ndarray = field(repr=False)
    features: np.ndarray = field(repr=False)
    f_accuracy: float
    raw_metric: float
    event: str
    generation: int


class Archive:
    """Keeps inputs more than ``threshold`` apart; a close candidate may replace its neighbour."""

    def __init__(self, threshold: float):
        if not threshold > 0:
            raise ValidationError("archive threshold must be positive")
        self.threshold = float(threshold)
        self.entries: list[ArchiveEntry] = []
        self.events: list[ArchiveEvent] = []

    def __len__(self):
        return len(self.entries)

    def feature_matrix(self) -> np.ndarray:
        if not self.entries:
            return np.zeros((0, 0))
        return np.array([e.features for e in self.entries])

    def update(self, candidate: Evaluation, generation: int = 0) -> ArchiveEvent:
        obj = candidate.objectives
        f_acc = obj.f_accuracy
        feats = np.asarray(candidate.features, dtype=np.float64)
        if obj.gated or f_acc >= GATE_VALUE:
            ev = ArchiveEvent("gated", None, None, generation, f_acc, features=feats)
            self.events.append(ev)
            return ev
        entry = ArchiveEntry(candidate.genome, candidate.image, feats, f_acc, obj.raw_metric, "appended", generation)
        if not self.entries:
            self.entries.append(entry)
            ev = ArchiveEvent("appended", 0, math.inf, generation, f_acc, features=feats)
        else:
            d, k = _core.nearest(feats, self.feature_matrix())
            if d > self.threshold:
                self.entries.append(entry)
                ev = ArchiveEvent("appended", len(self.entries) - 1, d, generation, f_acc, features=feats)
            elif f_acc < self.entries[k].f_accuracy:
                prev = self.entries[k].f_accuracy
                entry.event = "replaced"
                self.entries[k] = entry
                ev = ArchiveEvent("replaced", k, d, generation, f_acc, prev, features=feats)
            else:
                ev = ArchiveEvent("discarded", k, d, generation, f_acc, self.entries[k].f_accuracy, features=feats)
        self.events.append(ev)
        return ev


def archive_update(archive: Archive, candidate: Evaluation, generation: int = 0) -> ArchiveEvent:
    return archive.update(candidate, generation)


def audit_archive(archive: Archive) -> list[str]:
    """Replay the event log from scratch; returns a list of violations (empty if sound)."""
    problems = []
    slots: list[tuple[np.ndarray, float]] = []
    t = archive.threshold
    for n, ev in enumerate(archive.events):
        if ev.kind == "gated":
            continue
        if ev.f_accuracy >= GATE_VALUE:
            problems.append(f"event {n}: gated candidate {ev.kind}")
        if ev.kind == "appended":
            if slots:
                d = min(float(np.linalg.norm(ev.features - f)) for f, _ in slots)
                if not d > t:
                    problems.append(f"event {n}: appended at distance {d} <= {t}")
            slots.append((ev.features, ev.f_accuracy))
        elif ev.kind == "replaced":
            prev = slots[ev.index][1]
            if not ev.f_accuracy < prev:
                problems.append(f"event {n}: replacement {ev.f_accuracy} did not improve {prev}")
            slots[ev.index] = (ev.features, ev.f_accuracy)
    if len(slots) != len(archive.entries):
        problems.append("replayed archive size differs")
    else:
        for i, ((f, acc), e) in enumerate(zip(slots, archive.entries)):
            if acc != e.f_accuracy or not np.array_equal(f, e.features):
                problems.append(f"slot {i} differs from replay")
            if e.f_accuracy >= GATE_VALUE:
                problems.append(f"slot {i} holds a gated input")
    return problems


# -- main loop ------------------------------------------------------------------


class SearchAborted(RuntimeError):
    def __init__(self, message, archive, log):
        super().__init__(message)
        self.archive = archive
        self.log = log


def log_record(generation: int, individual: int, ev: Evaluation, event: ArchiveEvent) -> dict:
    obj = ev.objectives
    return {
        "generation": generation,
        "individual": individual,
        "genome": ev.genome.to_dict(),
        "f_accuracy_raw": obj.raw_metric,
        "f_accuracy_gated": obj.f_accuracy,
        "f_similarity": obj.f_similarity,
        "archive_event": event.to_dict(),
    }


def _offspring(pop: list[Genome], ranks, crowd, settings: SearchSettings, rng) -> list[Genome]:
    n = settings.population_size
    mates = binary_tournament(ranks, crowd, n, rng)
    children = []
    for k in range(0, n, 2):
        pa, pb = pop[mates[k]], pop[mates[k + 1]]
        ca, cb = sbx_crossover(pa.genes, pb.genes, settings.sbx_eta, settings.crossover_probability, rng)
        ca = polynomial_mutation(ca, settings.mutation_eta, settings.mutation_probability, rng)
        cb = polynomial_mutation(cb, settings.mutation_eta, settings.mutation_probability, rng)
        children.append(Genome(ca, pa.seed))
        children.append(Genome(cb, pb.seed))
    return children


def run_search(
    settings: SearchSettings,
    fitness_config: FitnessConfig,
    model,
    *,
    transform: str = "identity",
    train_acts=None,
    pipeline: Optional[FitnessPipeline] = None,
    on_evaluation: Optional[Callable[[dict], None]] = None,
) -> tuple[Archive, list[dict]]:
    """Run the archive-extended NSGA-II; returns the archive and one log record per evaluation."""
    pipe = pipeline or FitnessPipeline(fitness_config, model, transform, train_acts)
    cfg = pipe.cfg
    archive = Archive(cfg.similarity_threshold)
    log: list[dict] = []
    rng = np.random.default_rng(np.random.SeedSequence([settings.master_seed, 0x5EA]))
    run_seed = derive_seed(settings.master_seed, "evaluation")

    def evaluate_batch(genomes, generation):
        snapshot = archive.feature_matrix()
        try:
            batch = [pipe.evaluate(g, snapshot, run_seed) for g in genomes]
        except Exception as exc:
            raise SearchAborted(f"evaluation failed in generation {generation}: {exc}", archive, log) from exc
        for i, ev in enumerate(batch):
            event = archive.update(ev, generation)
            rec = log_record(generation, i, ev, event)
            log.append(rec)
            if on_evaluation:
                on_evaluation(rec)
        return batch

    pop = [random_genome(rng) for _ in range(settings.population_size)]
    pop_evals = evaluate_batch(pop, 0)
    ranks, crowd = rank_and_crowding([e.objectives.as_tuple() for e in pop_evals])

    for gen in range(1, settings.generations + 1):
        children = _offspring(pop, ranks, crowd, settings, rng)
        child_evals = evaluate_batch(children, gen)
        merged = pop_evals + child_evals
        m_ranks, m_crowd = rank_and_crowding([e.objectives.as_tuple() for e in merged])
        keep = survivor_order(m_ranks, m_crowd)[: settings.population_size]
        pop_evals = [merged[i] for i in keep]
        pop = [e.genome for e in pop_evals]
        ranks, crowd = rank_and_crowding([e.objectives.as_tuple() for e in pop_evals])

    return archive, log
