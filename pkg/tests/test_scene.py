import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from orbit.errors import ValidationError
from orbit.scene import (
    BIG_ROCK,
    FIELD_RANGES,
    NUM_CLASSES,
    SKY,
    SMALL_ROCK,
    Genome,
    SceneConfig,
    apply_realism_transform,
    genome_to_scene,
    read_pgm,
    render_scene,
    sky_proportion,
    to_pgm_bytes,
    write_pgm,
)

genes8 = st.lists(st.floats(0.0, 1.0, allow_nan=False), min_size=8, max_size=8)
seeds = st.integers(0, 2**64 - 1)


def scene(genes, seed=3):
    return render_scene(genome_to_scene(Genome(tuple(genes), seed)), seed)


def test_genome_zero_maps_to_lower_bounds():
    c = genome_to_scene(Genome((0.0,) * 8))
    assert c.as_dict() == {k: lo for k, (lo, _) in FIELD_RANGES.items()}


def test_genome_half_maps_to_midpoints():
    c = genome_to_scene(Genome((0.5,) * 8))
    for k, (lo, hi) in FIELD_RANGES.items():
        assert getattr(c, k) == pytest.approx((lo + hi) / 2, abs=1e-15)


def test_genome_one_maps_to_upper_bounds_exactly():
    c = genome_to_scene(Genome((1.0,) * 8))
    assert c.as_dict() == {k: hi for k, (_, hi) in FIELD_RANGES.items()}


@pytest.mark.parametrize("genes", [(1.2,) + (0.5,) * 7, (-0.1,) + (0.5,) * 7, (float("nan"),) * 8])
def test_gene_outside_unit_interval_rejected(genes):
    with pytest.raises(ValidationError):
        Genome(genes)


def test_wrong_genome_length_rejected():
    with pytest.raises(ValidationError):
        genome_to_scene(Genome((0.5,) * 7))


def test_seed_must_fit_u64():
    with pytest.raises(ValidationError):
        Genome((0.5,) * 8, seed=2**64)


def test_genome_dict_round_trip():
    g = Genome((0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8), seed=2**64 - 1)
    assert Genome.from_dict(g.to_dict()) == g


@settings(max_examples=25, deadline=None)
@given(genes=genes8, seed=seeds)
def test_rendering_is_pure(genes, seed):
    a, b = scene(genes, seed), scene(genes, seed)
    assert np.array_equal(a.image, b.image) and np.array_equal(a.mask, b.mask)
    assert a.image.shape == a.mask.shape == (64, 64)
    assert a.image.min() >= 0.0 and a.image.max() <= 1.0
    assert a.mask.min() >= 0 and a.mask.max() < NUM_CLASSES


@settings(max_examples=25, deadline=None)
@given(genes=genes8, seed=seeds)
def test_rock_labels_lie_inside_rock_blobs(genes, seed):
    s = scene(genes, seed)
    rows, cols = np.nonzero((s.mask == BIG_ROCK) | (s.mask == SMALL_ROCK))
    for r, c in zip(rows, cols):
        assert any(rock.contains(r, c) for rock in s.rocks)


@settings(max_examples=20, deadline=None)
@given(genes=genes8, seed=st.integers(0, 2**32))
def test_sky_grows_with_pitch(genes, seed):
    props = []
    for pitch in np.linspace(0.0, 1.0, 6):
        g = list(genes)
        g[0] = float(pitch)
        props.append(sky_proportion(scene(g, seed).mask))
    assert all(a <= b for a, b in zip(props, props[1:]))


def test_max_pitch_makes_sky_dominate():
    for seed in range(10):
        s = scene((1.0,) + (0.5,) * 7, seed)
        assert sky_proportion(s.mask) >= 0.7


def test_zero_density_means_no_rocks():
    for seed in range(10):
        s = scene((0.5, 0.5, 0.5, 0.0, 0.5, 0.5, 0.5, 0.5), seed)
        assert not np.isin(s.mask, (BIG_ROCK, SMALL_ROCK)).any()


def test_density_controls_rock_count():
    counts = [len(scene((0.5, 0.5, 0.5, d, 0.5, 0.5, 0.5, 0.5)).rocks) for d in (0.1, 0.5, 1.0)]
    assert counts[0] < counts[1] < counts[2]


def test_config_outside_range_rejected():
    bad = SceneConfig(**{**genome_to_scene(Genome((0.5,) * 8)).as_dict(), "sand_coverage": 1.5})
    with pytest.raises(ValidationError):
        render_scene(bad, 0)


def test_sky_proportion_examples():
    assert sky_proportion(np.full((4, 4), SKY)) == 1.0
    assert sky_proportion(np.zeros((4, 4), dtype=int)) == 0.0
    half = np.zeros((64, 64), dtype=int)
    half[:32] = SKY
    assert sky_proportion(half) == 0.5
    with pytest.raises(ValidationError):
        sky_proportion(np.zeros((0, 0)))


def test_identity_transform_returns_input(mid_scene):
    assert apply_realism_transform(mid_scene.image, "identity", 5) is mid_scene.image


def test_style_perturb_is_seeded_and_bounded(mid_scene):
    a = apply_realism_transform(mid_scene.image, "style-perturb", 5)
    b = apply_realism_transform(mid_scene.image, "style-perturb", 5)
    c = apply_realism_transform(mid_scene.image, "style-perturb", 6)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)
    assert a.shape == mid_scene.image.shape
    assert a.min() >= 0.0 and a.max() <= 1.0


def test_unknown_transform_rejected(mid_scene):
    with pytest.raises(ValidationError):
        apply_realism_transform(mid_scene.image, "gan", 0)


def test_pgm_round_trip(tmp_path, mid_scene):
    write_pgm(tmp_path / "i.pgm", mid_scene.image)
    write_pgm(tmp_path / "m.pgm", mid_scene.mask, is_mask=True)
    img = read_pgm(tmp_path / "i.pgm")
    assert np.array_equal(img, np.rint(mid_scene.image * 255).astype(np.uint8))
    assert np.array_equal(read_pgm(tmp_path / "m.pgm"), mid_scene.mask)


def test_pgm_header():
    data = to_pgm_bytes(np.array([[0.0, 1.0]]))
    assert data == b"P5\n2 1\n255\n\x00\xff"
