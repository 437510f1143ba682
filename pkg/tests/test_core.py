import numpy as np
import pytest
from scipy import stats

from core import (
    Embedding,
    Panorama,
    SeededStream,
    ViewImage,
    circular_view_distance,
    cosine_similarity,
    heading_to_view,
    median_filter,
    require_navigable,
    seeded_stream,
)
from utils.error_handler import DegenerateVector, InvalidImage, InvalidKernel, NoNavigableViews, ShapeError

from tests.conftest import constant_view, random_view


def test_cosine_examples():
    assert cosine_similarity([1, 0], [1, 0]) == 1.0
    assert cosine_similarity([1, 0], [0, 1]) == 0.0
    assert cosine_similarity([1, 1], [1, 0]) == pytest.approx(1 / np.sqrt(2), abs=1e-12)


def test_cosine_properties():
    stream = SeededStream(7)
    a = stream.normal(size=50)
    b = stream.normal(size=50)
    assert cosine_similarity(a, a) == pytest.approx(1.0)
    assert cosine_similarity(a, b) == pytest.approx(cosine_similarity(b, a))
    assert cosine_similarity(3.5 * a, b) == pytest.approx(cosine_similarity(a, b))
    assert -1.0 <= cosine_similarity(a, -a) <= 1.0


def test_cosine_rejects_zero_and_mismatch():
    with pytest.raises(DegenerateVector):
        cosine_similarity([0, 0], [1, 0])
    with pytest.raises(DegenerateVector):
        cosine_similarity(Embedding.masked(4), Embedding(np.ones(4)))
    with pytest.raises(ShapeError):
        cosine_similarity([1, 0, 0], [1, 0])


def test_cosine_accepts_views_and_embeddings():
    view = random_view(SeededStream(1))
    assert cosine_similarity(view, view) == pytest.approx(1.0)
    emb = Embedding([1.0, 2.0])
    assert cosine_similarity(emb, Embedding([2.0, 4.0])) == pytest.approx(1.0)


def test_stream_is_deterministic():
    a = seeded_stream(42).uniform(size=1000)
    b = seeded_stream(42).uniform(size=1000)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, seeded_stream(43).uniform(size=1000))


def test_fork_does_not_advance_parent():
    parent = SeededStream(5)
    parent.fork("env")
    assert np.array_equal(parent.uniform(size=10), SeededStream(5).uniform(size=10))


def test_forked_streams_are_independent():
    env = SeededStream(0).fork("env").uniform(size=10_000)
    hsh = SeededStream(0).fork("hash").uniform(size=10_000)
    table, _, _ = np.histogram2d(env, hsh, bins=10, range=[[0, 1], [0, 1]])
    _, p_value, _, _ = stats.chi2_contingency(table)
    assert p_value > 0.001


def test_normal_draws_are_centred():
    draws = SeededStream(11).normal(size=100_000)
    assert abs(draws.mean()) < 0.05


def test_view_image_validation():
    with pytest.raises(InvalidImage):
        ViewImage(np.full((3, 4, 4), 1.5))
    with pytest.raises(InvalidImage):
        ViewImage(np.zeros((4, 4)))
    with pytest.raises(InvalidImage):
        ViewImage(np.full((3, 4, 4), np.nan))
    clamped = ViewImage.clamped(np.full((3, 4, 4), 1.5))
    assert clamped.data.max() == 1.0
    assert clamped.flatten().shape == (48,)


def test_panorama_needs_36_views():
    views = tuple(constant_view(0.5, 8) for _ in range(35))
    with pytest.raises(ShapeError):
        Panorama(views, frozenset({1}))
    pano = Panorama(views + (constant_view(0.1, 8),), frozenset({36}))
    assert pano.view(36).data[0, 0, 0] == 0.1
    with pytest.raises(ShapeError):
        Panorama(views + (constant_view(0.1, 8),), frozenset({37}))


def test_require_navigable():
    with pytest.raises(NoNavigableViews):
        require_navigable([])
    assert require_navigable([3, 3, 4]) == frozenset({3, 4})


def test_heading_and_ring_distance():
    assert heading_to_view(0.0) == 36
    assert heading_to_view(90.0) == 9
    assert heading_to_view(95.0) == 10
    assert heading_to_view(359.9) == 36
    assert circular_view_distance(1, 36) == 1
    assert circular_view_distance(5, 23) == 18


def test_median_filter_constant_and_identity():
    img = constant_view(0.3)
    assert np.array_equal(median_filter(img, 5).data, img.data)
    noisy = random_view(SeededStream(2))
    assert median_filter(noisy, 1) is noisy


def test_median_filter_removes_salt_pixel():
    data = np.full((3, 9, 9), 0.2)
    data[1, 4, 4] = 1.0
    restored = median_filter(ViewImage(data), 3)
    assert restored.data[1, 4, 4] == 0.2
    assert np.array_equal(restored.data, np.full((3, 9, 9), 0.2))


def test_median_filter_stays_within_channel_range():
    img = random_view(SeededStream(9), 16)
    out = median_filter(img, 5)
    assert out.shape == img.shape
    for c in range(3):
        assert out.data[c].min() >= img.data[c].min()
        assert out.data[c].max() <= img.data[c].max()


def test_median_filter_rejects_bad_kernels():
    img = constant_view(0.5, 8)
    with pytest.raises(InvalidKernel):
        median_filter(img, 4)
    with pytest.raises(InvalidKernel):
        median_filter(img, 9)
    with pytest.raises(InvalidKernel):
        median_filter(img, 0)
