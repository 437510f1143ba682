import networkx as nx
import numpy as np
import pytest
from scipy import stats

from benchmark import run_suite
from config import RunConfig
from core import Embedding, SeededStream, cosine_similarity
from simenv import (
    CORRUPTIONS,
    STOP,
    EnvParams,
    EpisodeSpec,
    Trajectory,
    compute_metrics,
    corrupt,
    corruption_stream,
    episode_metrics,
    generate_env,
    generate_from_params,
    greedy_policy,
    render_view,
)
from utils.error_handler import ConfigError, GenError, PolicyDegenerate

from tests.conftest import constant_view, random_view


def test_generation_is_deterministic():
    a = generate_env(nodes=12, branching=3, seed=4)
    b = generate_env(nodes=12, branching=3, seed=4)
    assert np.array_equal(a.positions, b.positions)
    assert a.edges == b.edges
    assert np.array_equal(a.pano_latents, b.pano_latents)
    assert a.navigable == b.navigable


def test_different_seeds_differ():
    a = generate_env(nodes=12, branching=3, seed=4)
    b = generate_env(nodes=12, branching=3, seed=5)
    assert not np.array_equal(a.positions, b.positions)


def test_graph_is_connected_with_enough_neighbours(default_env):
    assert nx.is_connected(default_env.graph)
    for node in range(default_env.node_count):
        views = default_env.navigable_views(node)
        assert len(views) >= default_env.params.branching
        assert len(views) == len(default_env.neighbors(node))
        for view in views:
            neighbor = default_env.view_to_neighbor(node, view)
            assert neighbor in default_env.neighbors(node)


def test_navigable_views_face_their_neighbours(default_env):
    for node in range(0, default_env.node_count, 7):
        for view, neighbor in default_env.navigable[node].items():
            heading = default_env.heading(node, neighbor)
            centre = view * 10.0 - 5.0
            offset = abs((heading - centre + 180.0) % 360.0 - 180.0)
            # collisions are moved to the nearest free view
            assert offset <= 5.0 + 10.0 * len(default_env.navigable[node])


def test_geodesic_and_hops(small_env):
    u, v, length = small_env.edges[0]
    assert small_env.geodesic(u, v) == pytest.approx(length)
    assert small_env.hops(u, v) == 1
    assert small_env.geodesic(u, u) == 0.0


def test_navigable_view_shows_neighbour_place(small_env):
    node = 0
    view, neighbor = next(iter(small_env.navigable[node].items()))
    pano = small_env.panorama(node)
    assert np.array_equal(pano.view(view).data, small_env.goal_view(neighbor).data)
    assert pano.navigable == small_env.navigable_views(node)


def test_temporal_locality_repeats_views():
    repeated = generate_env(nodes=16, branching=3, rho_temporal=1.0, seed=2)
    fresh = generate_env(nodes=16, branching=3, rho_temporal=0.0, seed=2)
    u, v, _ = repeated.edges[0]
    masked = [j for j in range(1, 37)
              if j not in repeated.navigable[u] and j not in repeated.navigable[v]]
    near = [cosine_similarity(repeated.pano_latents[u, j - 1], repeated.pano_latents[v, j - 1]) for j in masked]
    far = [cosine_similarity(fresh.pano_latents[u, j - 1], fresh.pano_latents[v, j - 1]) for j in masked]
    assert np.mean(near) > 0.95
    assert np.mean(far) < 0.5


def test_spatial_locality_correlates_ring_neighbours():
    smooth = generate_env(nodes=8, branching=2, sigma_spatial=0.9, seed=1)
    rough = generate_env(nodes=8, branching=2, sigma_spatial=0.0, seed=1)

    def ring_similarity(env):
        return np.mean([cosine_similarity(env.pano_latents[n, j], env.pano_latents[n, j + 1])
                        for n in range(8) for j in range(35)])

    assert ring_similarity(smooth) > 0.7
    assert abs(ring_similarity(rough)) < 0.2


@pytest.mark.parametrize("rho", [0.0, 0.4, 0.8, 1.0])
def test_ring_correlation_does_not_depend_on_temporal_overlap(rho):
    env = generate_env(nodes=24, branching=3, sigma_spatial=0.9, rho_temporal=rho, seed=4)
    similarity = np.mean([cosine_similarity(env.pano_latents[n, j], env.pano_latents[n, j + 1])
                          for n in range(24) for j in range(35)])
    assert similarity == pytest.approx(0.9, abs=0.05)


@pytest.mark.slow
def test_cache_hits_grow_with_temporal_overlap():
    rc = RunConfig().with_overrides({'suite.episodes': 3, 'suite.step_limit': 8})
    rhos, hit_rates = [], []
    for rho in (0.0, 0.4, 0.8):
        for seed in range(20):
            env = generate_env(rho_temporal=rho, seed=seed)
            rhos.append(rho)
            hit_rates.append(run_suite(env, rc).cache.hit_rate)
    correlation, _ = stats.spearmanr(rhos, hit_rates)
    assert correlation > 0


def test_generation_errors():
    with pytest.raises(GenError):
        generate_env(nodes=1)
    with pytest.raises(GenError):
        generate_env(nodes=5, branching=5)
    with pytest.raises(GenError):
        generate_env(rho_temporal=1.5)
    with pytest.raises(GenError):
        generate_from_params(EnvParams(nodes=10, branching=2, extent=1.0, min_spacing=1.0))


def test_render_view_is_deterministic_and_bounded():
    latent = SeededStream(3).normal(size=64)
    a = render_view(latent, 16)
    b = render_view(latent, 16)
    assert np.array_equal(a.data, b.data)
    assert a.shape == (3, 16, 16)
    assert 0.05 <= a.data.min() and a.data.max() <= 0.95


def test_independent_latents_render_distinct_images():
    stream = SeededStream(17).fork("render")
    distinct = 0
    for i in range(1000):
        pair = stream.fork(i)
        a = render_view(pair.normal(size=64), 32)
        b = render_view(pair.normal(size=64), 32)
        distinct += cosine_similarity(a, b) < 0.99
    assert distinct >= 990


def test_resolution_keeps_similarity_ordering():
    stream = SeededStream(23)
    anchor = stream.normal(size=64)
    near = anchor + 0.3 * stream.normal(size=64)
    far = stream.normal(size=64)
    for resolution in (16, 32, 64):
        a, b, c = (render_view(latent, resolution) for latent in (anchor, near, far))
        assert cosine_similarity(a, b) > cosine_similarity(a, c)


def test_scan_has_openings_towards_neighbours(small_env):
    scan = small_env.scan(0)
    for neighbor in small_env.neighbors(0):
        bin_index = int(small_env.heading(0, neighbor)) % 360
        assert scan.readings[bin_index] >= small_env.params.min_spacing
    assert scan.readings.min() >= 0.2


def test_low_light_scales_brightness():
    assert np.allclose(corrupt(constant_view(0.8), "low_light", 5).data, 0.2)


def test_defocus_keeps_constant_images():
    assert np.allclose(corrupt(constant_view(0.5), "defocus", 3).data, 0.5)
    assert np.allclose(corrupt(constant_view(0.5), "motion_blur", 2).data, 0.5)


def test_speckle_is_seeded():
    img = random_view(SeededStream(1))
    a = corrupt(img, "speckle", 3, corruption_stream(0, 1, 2, 3))
    b = corrupt(img, "speckle", 3, corruption_stream(0, 1, 2, 3))
    c = corrupt(img, "speckle", 3, corruption_stream(0, 1, 2, 4))
    assert np.array_equal(a.data, b.data)
    assert not np.array_equal(a.data, c.data)
    assert 0.0 <= a.data.min() and a.data.max() <= 1.0


def test_corruption_errors():
    img = constant_view(0.5)
    with pytest.raises(ConfigError):
        corrupt(img, "spatter", 1)
    with pytest.raises(ConfigError):
        corrupt(img, "speckle", 6)
    with pytest.raises(ConfigError):
        corrupt(img, "speckle", True)
    assert set(CORRUPTIONS) == {"speckle", "low_light", "defocus", "motion_blur"}


def _embeddings(vectors):
    out = [Embedding.masked(2) for _ in range(36)]
    for index, vector in vectors.items():
        out[index - 1] = Embedding(vector)
    return out


def test_policy_picks_most_similar_view():
    embeddings = _embeddings({3: [1.0, 0.2], 10: [0.2, 1.0], 20: [1.0, 0.9]})
    goal = Embedding([0.0, 1.0])
    assert greedy_policy(embeddings, goal, [3, 10, 20], stop_threshold=1.0) == 10


def test_policy_stops_near_goal():
    embeddings = _embeddings({3: [0.0, 1.0], 10: [1.0, 0.0]})
    assert greedy_policy(embeddings, Embedding([0.0, 1.0]), [3, 10], stop_threshold=0.99) == STOP


def test_policy_ties_go_to_lowest_view():
    embeddings = _embeddings({4: [1.0, 1.0], 9: [1.0, 1.0]})
    assert greedy_policy(embeddings, Embedding([1.0, 0.0]), [9, 4], stop_threshold=1.0) == 4


def test_policy_uses_ring_context():
    embeddings = _embeddings({5: [1.0, 0.1], 6: [0.0, 1.0], 20: [1.0, 0.2], 21: [1.0, 0.0]})
    goal = Embedding([1.0, 0.0])
    assert greedy_policy(embeddings, goal, [5, 20], stop_threshold=1.0) == 5
    assert greedy_policy(embeddings, goal, [5, 20], stop_threshold=1.0, context_weight=1.0) == 20


def test_policy_with_only_masked_views():
    with pytest.raises(PolicyDegenerate):
        greedy_policy(_embeddings({}), Embedding([1.0, 0.0]), [3], stop_threshold=0.9)


def _trajectory(distances, length, stopped=True, shortest=4.0, radius=3.0):
    spec = EpisodeSpec(start=0, goal=1, shortest_path=shortest, success_radius=radius)
    return Trajectory(spec, list(range(len(distances))), list(distances), length, stopped)


def test_metrics_of_successful_episode():
    metrics = episode_metrics(_trajectory([4.0, 2.0, 0.5], length=5.0))
    assert metrics.TL == 5.0
    assert metrics.SR == 1.0
    assert metrics.OSR == 1.0
    assert metrics.SPL == pytest.approx(4.0 / 5.0)
    assert metrics.GP == pytest.approx(3.5)


def test_oracle_success_without_final_success():
    metrics = episode_metrics(_trajectory([4.0, 1.0, 6.0], length=7.0))
    assert metrics.OSR == 1.0
    assert metrics.SR == 0.0
    assert metrics.SPL == 0.0
    assert metrics.GP == pytest.approx(-2.0)


def test_zero_length_episode():
    metrics = episode_metrics(_trajectory([0.0], length=0.0, shortest=0.0))
    assert metrics.SR == 1.0
    assert metrics.SPL == 1.0


def test_aggregate_is_mean():
    report = compute_metrics([_trajectory([4.0, 0.5], 4.0), _trajectory([4.0, 5.0], 3.0)])
    assert report.SR == 0.5
    assert report.TL == 3.5
    assert set(report.aggregate()) == {'TL', 'OSR', 'SR', 'SPL', 'GP'}
    assert compute_metrics([]).SR == 0.0
