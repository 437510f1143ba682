import pytest

from spatial import ViewClass, build_plan, k_extension, rank
from utils.error_handler import NoNavigableViews, RangeError


def test_k_extension_examples():
    assert k_extension({10}, 2) == frozenset({8, 9, 10, 11, 12})
    assert k_extension({1}, 3) == frozenset({1, 2, 3, 4})
    assert k_extension({36}, 2) == frozenset({34, 35, 36})
    assert k_extension({5, 20}, 0) == frozenset({5, 20})


def test_k_extension_covers_everything_at_35():
    assert k_extension({17}, 35) == frozenset(range(1, 37))


def test_k_extension_is_monotone():
    nav = {3, 18, 30}
    previous = frozenset()
    for k in range(0, 8):
        current = k_extension(nav, k)
        assert previous <= current
        assert frozenset(nav) <= current
        previous = current


def test_circular_extension_wraps():
    assert k_extension({1}, 2, circular=True) == frozenset({35, 36, 1, 2, 3})
    assert k_extension({1}, 2) == frozenset({1, 2, 3})


def test_k_extension_errors():
    with pytest.raises(NoNavigableViews):
        k_extension(set(), 2)
    with pytest.raises(RangeError):
        k_extension({4}, -1)


def test_rank_and_anchor():
    assert rank(12, {10, 20}) == (2, 10)
    # equidistant views anchor on the smaller index
    assert rank(15, {10, 20}) == (5, 10)
    assert rank(36, {1}) == (35, 1)
    assert rank(36, {1}, circular=True) == (1, 1)


def test_plan_classifies_every_view():
    plan = build_plan({10, 20}, 2)
    assert len(plan.views) == 36
    assert plan.indices(ViewClass.NAVIGABLE) == [10, 20]
    assert plan.extended == {8: 2, 9: 1, 11: 1, 12: 2, 18: 2, 19: 1, 21: 1, 22: 2}
    assert plan.count(ViewClass.MASKED) == 36 - 2 - 8
    assert plan.get(12).anchor == 10
    assert plan.get(1).kind == ViewClass.MASKED


def test_plan_with_k_zero_has_no_extended_views():
    plan = build_plan({7}, 0)
    assert plan.extended == {}
    assert plan.count(ViewClass.MASKED) == 35
