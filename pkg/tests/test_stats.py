import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from orbit import stats
from orbit.errors import ValidationError


def enum_mwu_p(x, y):
    """Two-sided exact p by enumerating every split of the pooled midranks."""
    pooled = list(x) + list(y)
    ranks = stats.midranks(pooled)
    nx, n = len(x), len(pooled)
    mu = nx * (n - nx) / 2.0

    def u_of(idx):
        return sum(ranks[i] for i in idx) - nx * (nx + 1) / 2.0

    obs = abs(u_of(range(nx)) - mu)
    splits = list(itertools.combinations(range(n), nx))
    hits = sum(1 for s in splits if abs(u_of(s) - mu) >= obs - 1e-9)
    return hits / len(splits)


def enum_wilcoxon_p(d):
    d = [v for v in d if v != 0]
    ranks = stats.midranks(np.abs(d))
    total = ranks.sum()
    obs = abs(2 * sum(r for r, v in zip(ranks, d) if v > 0) - total)
    hits = 0
    for signs in itertools.product((0, 1), repeat=len(d)):
        rp = sum(r for r, s in zip(ranks, signs) if s)
        hits += abs(2 * rp - total) >= obs - 1e-9
    return hits / 2 ** len(d)


def test_midranks():
    assert stats.midranks([10, 20, 20, 5]).tolist() == [2.0, 3.5, 3.5, 1.0]


def test_mwu_examples():
    assert stats.mann_whitney_u([1, 2], [3, 4]).u == 0.0
    x = [3.0, 1.0, 2.0, 2.0]
    assert stats.mann_whitney_u(x, x).u == 8.0
    r = stats.mann_whitney_u([1, 2, 3], [4, 5, 6])
    assert r.method == "exact" and r.p_value == pytest.approx(0.1, abs=1e-12)


def test_mwu_empty_sample_rejected():
    with pytest.raises(ValidationError):
        stats.mann_whitney_u([], [1.0])


def test_mwu_exact_matches_enumeration_for_every_size_up_to_8():
    rng = np.random.default_rng(0)
    for nx in range(1, 9):
        for ny in range(1, 9):
            for _ in range(3):
                x = rng.integers(0, 6, nx).astype(float)  # ties on purpose
                y = rng.integers(0, 6, ny).astype(float)
                got = stats.mann_whitney_u(x, y, method="exact").p_value
                assert got == pytest.approx(enum_mwu_p(x, y), abs=1e-12)


def test_wilcoxon_exact_matches_enumeration_for_every_size_up_to_8():
    rng = np.random.default_rng(1)
    for n in range(1, 9):
        for _ in range(5):
            d = rng.integers(-4, 5, n).astype(float)
            if not d.any():
                continue
            got = stats.wilcoxon_signed_rank(d, method="exact").p_value
            assert got == pytest.approx(enum_wilcoxon_p(d), abs=1e-12)


def test_mwu_switches_to_normal_above_twenty():
    assert stats.mann_whitney_u(range(10), range(5, 15)).method == "exact"
    assert stats.mann_whitney_u(range(11), range(5, 15)).method == "normal"


def test_normal_approximation_tracks_exact_p():
    # holds for tie-free samples with at least three observations per group
    rng = np.random.default_rng(2)
    for nx in range(3, 11):
        for ny in range(3, 11):
            for _ in range(20):
                x, y = rng.random(nx), rng.random(ny) + rng.normal() * 0.3
                e = stats.mann_whitney_u(x, y, "exact").p_value
                a = stats.mann_whitney_u(x, y, "normal").p_value
                assert abs(e - a) <= 0.05
    for n in range(4, 13):
        for _ in range(50):
            d = rng.normal(size=n) + 0.3
            e = stats.wilcoxon_signed_rank(d, "exact").p_value
            a = stats.wilcoxon_signed_rank(d, "normal").p_value
            assert abs(e - a) <= 0.05


def test_a12_examples():
    assert stats.vargha_delaney_a12([5, 6], [1, 2]) == 1.0
    assert stats.vargha_delaney_a12([1, 2], [1, 2]) == 0.5
    assert stats.vargha_delaney_a12([2], [1]) == 1.0


samples = st.lists(st.integers(-5, 5), min_size=1, max_size=12)


@given(x=samples, y=samples)
def test_a12_duality_and_u_consistency(x, y):
    a = stats.vargha_delaney_a12(x, y)
    assert a + stats.vargha_delaney_a12(y, x) == pytest.approx(1.0, abs=1e-12)
    u = stats.mann_whitney_u(x, y, method="normal").u
    assert a == pytest.approx(u / (len(x) * len(y)), abs=1e-12)


@pytest.mark.parametrize(
    "a,cls",
    [
        (0.0, "large"), (0.29, "large"), (0.2901, "medium"), (0.31, "medium"), (0.36, "medium"),
        (0.3601, "small"), (0.44, "small"), (0.4401, "negligible"), (0.5, "negligible"),
        (0.5599, "negligible"), (0.56, "small"), (0.60, "small"), (0.6399, "small"), (0.64, "medium"),
        (0.7099, "medium"), (0.71, "large"), (1.0, "large"),
    ],
)
def test_classification_bands(a, cls):
    assert stats.classify_a12(a) == cls


def test_classification_rejects_out_of_range():
    with pytest.raises(ValidationError):
        stats.classify_a12(1.2)


def test_wilcoxon_examples():
    r = stats.wilcoxon_signed_rank([1, 2, 3])
    assert (r.r_plus, r.r_minus) == (6.0, 0.0)
    r = stats.wilcoxon_signed_rank([1, -2, 3])
    assert (r.r_plus, r.r_minus) == (4.0, 2.0)
    with pytest.raises(ValidationError):
        stats.wilcoxon_signed_rank([0, 0])


def test_wilcoxon_drops_zero_differences():
    assert stats.wilcoxon_signed_rank([0, 1, -2, 3]).n == 3


def test_e_hat_examples():
    assert stats.e_hat(6, 0) == 1.0
    assert stats.e_hat(3, 3) == 0.5
    assert stats.e_hat(4, 2) == pytest.approx(2 / 3, abs=1e-15)
    with pytest.raises(ValidationError):
        stats.e_hat(0, 0)


def test_compare_helpers():
    r = stats.compare_unpaired([1, 2, 3], [1, 2, 3])
    assert r.effect == 0.5 and r.effect_class == "negligible"
    r = stats.compare_paired([2, 0, 5], [1, 2, 2])
    assert r.effect == pytest.approx(2 / 3) and (r.r_plus, r.r_minus) == (4.0, 2.0)
    with pytest.raises(ValidationError):
        stats.compare_paired([1, 2], [1])


def test_p_values_are_probabilities(rng):
    for _ in range(50):
        x, y = rng.normal(size=int(rng.integers(1, 30))), rng.normal(size=int(rng.integers(1, 30)))
        assert 0.0 <= stats.mann_whitney_u(x, y).p_value <= 1.0


def test_describe():
    d = stats.describe([1, 2, 3, 4, 5])
    assert d == {"n": 5, "median": 3.0, "p5": 1.2, "q1": 2.0, "q3": 4.0, "mean": 3.0}
