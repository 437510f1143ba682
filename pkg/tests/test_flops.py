import pytest

from encoder import get_profile
from flops import (
    POLICY_COST_RATIO,
    SUBGOAL_MACS_PER_STEP,
    CostLedger,
    StepCost,
    baseline_step_cost,
    cost_exit,
    cost_full_view,
    hash_op_cost,
    layer_macs,
    ledger_step,
    patch_embed_macs,
    policy_step_cost,
)
from spatial import build_plan
from utils.error_handler import RangeError

VIT = get_profile("vit_b16")


def test_vit_b16_costs():
    assert layer_macs(VIT) == 1_453_954_560
    assert patch_embed_macs(VIT) == 115_605_504
    assert cost_full_view(VIT) == pytest.approx(17.563, abs=1e-3)
    assert baseline_step_cost(VIT, include_policy=False) == pytest.approx(632.27, abs=0.01)


def test_exit_cost_is_linear_in_layers():
    step = layer_macs(VIT) / 1e9
    assert cost_exit(VIT, 12) == pytest.approx(cost_full_view(VIT))
    assert cost_exit(VIT, 5) - cost_exit(VIT, 4) == pytest.approx(step)
    with pytest.raises(RangeError):
        cost_exit(VIT, 13)
    with pytest.raises(RangeError):
        cost_exit(VIT, 0)


def test_policy_share_of_full_step():
    total = baseline_step_cost(VIT)
    assert policy_step_cost(VIT) == pytest.approx(POLICY_COST_RATIO * 36 * cost_full_view(VIT))
    assert baseline_step_cost(VIT, include_policy=False) / total == pytest.approx(0.995, abs=1e-6)


def test_ledger_step_components():
    plan = build_plan({10}, 2)
    exits = {8: 4, 9: 12, 11: 12}
    cost = ledger_step(plan, exits, cache_hits=[12], cfg=VIT, hash_ops=6, n_bits=10,
                       subgoal_macs=SUBGOAL_MACS_PER_STEP)
    expected_encoder = cost_full_view(VIT) + cost_exit(VIT, 4) + 2 * cost_exit(VIT, 12)
    assert cost.encoder == pytest.approx(expected_encoder)
    assert cost.hash == pytest.approx(6 * 10 * 3 * 224 * 224 / 1e9)
    assert cost.hash == pytest.approx(6 * hash_op_cost(VIT, 10))
    assert cost.subgoal == pytest.approx(720 / 1e9)
    assert cost.total == pytest.approx(cost.encoder + cost.policy + cost.hash + cost.subgoal)


def test_all_views_full_matches_baseline():
    plan = build_plan(set(range(1, 37)), 0)
    cost = ledger_step(plan, {}, [], VIT)
    assert cost.total == pytest.approx(baseline_step_cost(VIT))


def test_masked_and_cached_views_are_free():
    plan = build_plan({1}, 0)
    assert ledger_step(plan, {}, [1], VIT, include_policy=False).total == 0.0


def test_ledger_totals_and_shares():
    ledger = CostLedger()
    ledger.record(StepCost(encoder=9.0, policy=1.0))
    ledger.record(StepCost(encoder=7.0, policy=1.0, hash=2.0))
    totals = ledger.totals()
    assert totals['total_gflops'] == pytest.approx(20.0)
    assert totals['encoder_gflops'] == pytest.approx(16.0)
    assert totals['per_step_mean'] == pytest.approx(10.0)
    assert totals['steps'] == 2
    shares = ledger.shares()
    assert sum(shares.values()) == pytest.approx(1.0)
    assert shares['encoder'] == pytest.approx(0.8)


def test_empty_ledger():
    ledger = CostLedger()
    assert ledger.total == 0.0
    assert ledger.totals()['per_step_mean'] == 0.0
    assert set(ledger.shares().values()) == {0.0}


def test_desk_profile_is_cheaper():
    assert cost_full_view(get_profile("desk")) < cost_full_view(VIT)
