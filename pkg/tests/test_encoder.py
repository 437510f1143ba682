import numpy as np
import pytest

from core import SeededStream, cosine_similarity
from encoder import (
    MIN_EXIT_LAYER,
    EncoderConfig,
    encode_batch_budgeted,
    encode_full,
    encode_mue,
    get_profile,
    run_budgeted_batch,
    saturation_curve,
)
from utils.error_handler import BatchShapeError, ConfigError, EmptySample, RangeError, ShapeError

from tests.conftest import random_view


@pytest.fixture(scope="module")
def views():
    stream = SeededStream(21)
    return [random_view(stream.fork(i)) for i in range(6)]


def test_full_encoding_is_deterministic(desk, views):
    a, trace_a = encode_full(views[0], desk)
    b, trace_b = encode_full(views[0], desk)
    assert np.array_equal(a.values, b.values)
    assert trace_a.layers == desk.layers
    assert len(trace_a.similarities) == desk.layers - 1
    assert trace_a.similarities == trace_b.similarities
    assert len(a) == desk.embedding_dim


def test_different_seeds_give_different_weights(views):
    a, _ = encode_full(views[0], get_profile("desk"))
    b, _ = encode_full(views[0], get_profile("desk", seed=5))
    assert not np.allclose(a.values, b.values)


def test_threshold_one_runs_every_layer(desk, views):
    record = encode_mue(views[1], desk, 1.0)
    full, _ = encode_full(views[1], desk)
    assert record.exit_layer == desk.layers
    assert np.array_equal(record.embedding.values, full.values)


def test_threshold_zero_exits_at_second_layer(desk, views):
    _, trace = encode_full(views[2], desk)
    record = encode_mue(views[2], desk, 0.0)
    if trace.similarities[0] > 0.0:
        assert record.exit_layer == MIN_EXIT_LAYER
    assert record.exit_layer >= MIN_EXIT_LAYER


def test_exit_layer_matches_first_crossing(desk, views):
    _, trace = encode_full(views[3], desk)
    threshold = float(np.median(trace.similarities))
    record = encode_mue(views[3], desk, threshold)
    crossings = [i + 2 for i, s in enumerate(trace.similarities) if s > threshold]
    expected = crossings[0] if crossings else desk.layers
    assert record.exit_layer == expected
    assert np.allclose(record.embedding.values, trace.pooled[expected - 1].values)


def test_exit_layer_grows_with_threshold(desk, views):
    layers = [encode_mue(views[4], desk, t).exit_layer for t in (0.5, 0.9, 0.99, 0.999, 1.0)]
    assert layers == sorted(layers)


def test_batch_matches_individual_runs(desk, views):
    thresholds = [1.0, 0.999, 0.99, 0.95, 0.9, 0.0]
    batch = run_budgeted_batch(views, thresholds, desk)
    for img, t, record in zip(views, thresholds, batch.records):
        single = encode_mue(img, desk, t)
        assert record.exit_layer == single.exit_layer
        assert np.array_equal(record.embedding.values, single.embedding.values)
    assert batch.layer_executions == sum(r.exit_layer for r in batch.records)
    assert batch.layer_executions <= batch.budget == len(views) * desk.layers


def test_batch_budget_is_enforced(desk, views):
    with pytest.raises(RangeError):
        run_budgeted_batch(views[:2], [1.0, 1.0], desk, budget=desk.layers)


def test_batch_shape_mismatch(desk, views):
    with pytest.raises(BatchShapeError):
        encode_batch_budgeted(views[:3], [1.0, 1.0], desk)


def test_empty_batch(desk):
    assert encode_batch_budgeted([], [], desk) == []


def test_threshold_out_of_range(desk, views):
    with pytest.raises(RangeError):
        encode_mue(views[0], desk, 1.5)
    with pytest.raises(RangeError):
        encode_mue(views[0], desk, -0.1)


def test_wrong_image_size(desk):
    with pytest.raises(ShapeError):
        encode_full(random_view(SeededStream(1), side=16), desk)


def test_cost_only_profile_cannot_run(views):
    with pytest.raises(ConfigError):
        encode_full(views[0], get_profile("vit_b16"))


def test_profile_validation():
    with pytest.raises(ConfigError):
        get_profile("resnet")
    with pytest.raises(ConfigError):
        EncoderConfig(image_side=30, patch=8)
    with pytest.raises(ConfigError):
        EncoderConfig(layers=1)


def test_residual_scale_decays(desk):
    assert desk.alpha(1) == pytest.approx(0.5)
    assert desk.alpha(3) == pytest.approx(0.5 * 0.36)


def test_saturation_curve_rises(desk, views):
    curve = saturation_curve(views, desk)
    assert len(curve) == desk.layers - 1
    assert all(-1.0 <= v <= 1.0 for v in curve)
    assert np.mean(curve[-3:]) > np.mean(curve[:3])
    assert curve[-1] > 0.99


def test_saturation_curve_needs_images(desk):
    with pytest.raises(EmptySample):
        saturation_curve([], desk)


def test_final_states_of_neighbouring_layers_agree(desk, views):
    _, trace = encode_full(views[5], desk)
    assert cosine_similarity(trace.pooled[-2], trace.pooled[-1]) == pytest.approx(trace.similarities[-1])
