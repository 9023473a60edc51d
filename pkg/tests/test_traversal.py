import numpy as np
import pytest

from polytraverse import (ActivationCode, BoundedRegion, InvalidInputError, TraversalConfig,
                          VisitOutcome, interior_point, polytope_from_code, random_network, traverse,
                          traverse_level, traverse_with_shrinking)
from polytraverse.oracle import enumerate_bruteforce


def codeset(*texts):
    return {ActivationCode.parse(t) for t in texts}


def box(P, r=1.0):
    return BoundedRegion.box(-r * np.ones(P), r * np.ones(P))


def random_case(seed, depth=None):
    rng = np.random.default_rng(seed)
    P = int(rng.integers(2, 4))
    L = depth or int(rng.integers(1, 4))
    net = random_network(rng, P, [int(rng.integers(2, 6)) for _ in range(L)])
    return rng, P, net


# ---- examples ----------------------------------------------------------------


def test_identity_quadrants(identity_net, unit_box):
    found, stats = traverse(identity_net, [0.5, 0.5], TraversalConfig(unit_box))
    assert set(found) == codeset("11", "10", "01", "00")
    assert found[0] == ActivationCode.parse("11")
    assert stats.polytopes_visited == 4 and not stats.truncated


def test_two_level_partition(two_level_net, unit_box):
    found, _ = traverse(two_level_net, [0.7, 0], TraversalConfig(unit_box))
    assert set(found) == codeset("0|0", "1|0", "1|1")


def test_level_two_inside_active_parent(two_level_net, unit_box):
    got = traverse_level(two_level_net, ActivationCode.parse("1"), unit_box, [0.7, 0], 2)
    assert got == codeset("1|0", "1|1")


def test_level_two_inside_dead_parent(two_level_net, unit_box):
    cfg = TraversalConfig(unit_box)
    got = traverse_level(two_level_net, ActivationCode.parse("0"), unit_box, [-0.5, 0], 2, config=cfg)
    assert got == codeset("0|0")


def test_traverse_level_start_outside_parent(two_level_net, unit_box):
    with pytest.raises(InvalidInputError):
        traverse_level(two_level_net, ActivationCode.parse("1"), unit_box, [-0.5, 0], 2)


def test_start_outside_region(identity_net, unit_box):
    with pytest.raises(InvalidInputError):
        traverse(identity_net, [3, 0], TraversalConfig(unit_box))
    with pytest.raises(InvalidInputError):
        traverse(identity_net, [0, 0, 0], TraversalConfig(unit_box))


def test_start_on_hyperplanes(identity_net, unit_box):
    found, _ = traverse(identity_net, [0.0, 0.0], TraversalConfig(unit_box))
    assert set(found) == codeset("11", "10", "01", "00")


def test_unbounded_default_region_uses_sentinel(identity_net):
    found, _ = traverse(identity_net, [0.5, 0.5])
    assert len(found) == 4


# ---- limits -------------------------------------------------------------------


def test_max_polytopes_truncates(identity_net, unit_box):
    found, stats = traverse(identity_net, [0.5, 0.5], TraversalConfig(unit_box, max_polytopes=2))
    assert len(found) == 2 and stats.truncated and stats.polytopes_visited == 2


def test_time_budget_truncates():
    rng = np.random.default_rng(0)
    net = random_network(rng, 3, [12, 12])
    _, stats = traverse(net, np.zeros(3), TraversalConfig(box(3), time_budget=1e-4))
    assert stats.truncated


@pytest.mark.parametrize("kwargs", [{"max_polytopes": 0}, {"time_budget": 0}, {"workers": 0}])
def test_bad_limits(kwargs):
    with pytest.raises(InvalidInputError):
        TraversalConfig(**kwargs)


# ---- visitor contract --------------------------------------------------------------


def test_visitor_sees_each_code_once_with_its_model():
    for seed in range(10):
        rng, P, net = random_case(seed)
        seen = []

        def visit(poly, model):
            seen.append(poly.code)
            x = interior_point(poly.system.stack(box(P).to_system())).witness
            from polytraverse import forward
            np.testing.assert_allclose(model(x), forward(net, x), atol=1e-9)

        found, _ = traverse(net, np.zeros(P), TraversalConfig(box(P)), visit)
        assert len(seen) == len(set(seen))
        assert tuple(seen) == found


def test_stop_halts_immediately(identity_net, unit_box):
    found, stats = traverse(identity_net, [0.5, 0.5], TraversalConfig(unit_box),
                            lambda p, m: VisitOutcome.stop())
    assert len(found) == 1 and stats.stopped and not stats.truncated


def test_shrink_skips_excluded_polytopes(identity_net, unit_box):
    def visit(poly, model):
        if str(poly.code) == "11":
            return VisitOutcome.shrink(BoundedRegion.box([0.1, -1], [1, 1]))
        return None

    found, stats = traverse(identity_net, [0.5, 0.5], TraversalConfig(unit_box), visit)
    assert set(found) == codeset("11", "10")
    assert stats.shrinks == 1


def test_shrink_must_be_a_subset(identity_net, unit_box):
    def visit(poly, model):
        return VisitOutcome.shrink(BoundedRegion.box([-2, -2], [0.5, 0.5]))

    with pytest.raises(InvalidInputError):
        traverse(identity_net, [0.5, 0.5], TraversalConfig(unit_box), visit)


def test_no_shrink_equals_plain_traversal():
    for seed in range(5):
        _, P, net = random_case(seed)

        class Keep:
            best = None

            def __call__(self, poly, model):
                return None

        plain, s1 = traverse(net, np.zeros(P), TraversalConfig(box(P)))
        best, s2 = traverse_with_shrinking(net, np.zeros(P), TraversalConfig(box(P)), Keep())
        assert best is None and s1.counts() == s2.counts()


def test_shrinking_still_covers_final_region():
    for seed in range(20):
        rng, P, net = random_case(100 + seed)
        final = BoundedRegion.box(rng.uniform(-1, -0.2, P), rng.uniform(0.2, 1, P))
        after = int(rng.integers(1, 4))
        count = [0]

        def visit(poly, model):
            count[0] += 1
            if count[0] == after:
                return VisitOutcome.shrink(final)
            return None

        found, stats = traverse(net, np.zeros(P), TraversalConfig(box(P)), visit)
        assert enumerate_bruteforce(net, final).codes <= set(found)
        assert len(found) == len(set(found))


# ---- invariants ----------------------------------------------------------------------


def test_equals_bruteforce_with_and_without_prescreen():
    for seed in range(30):
        _, P, net = random_case(200 + seed)
        oracle = enumerate_bruteforce(net, box(P)).codes
        a, sa = traverse(net, np.zeros(P), TraversalConfig(box(P)))
        b, sb = traverse(net, np.zeros(P), TraversalConfig(box(P), prescreen=False))
        assert set(a) == oracle == set(b)


def test_general_region_matches_bruteforce():
    from polytraverse import LinearConstraint
    for seed in range(10):
        rng, P, net = random_case(300 + seed)
        region = BoundedRegion.intersection([box(P), BoundedRegion.halfspaces(
            [LinearConstraint(rng.normal(size=P), 0.3)])])
        start = interior_point(region.to_system()).witness
        found, _ = traverse(net, start, TraversalConfig(region))
        assert set(found) == enumerate_bruteforce(net, region).codes


def test_deterministic_order_and_counts():
    for seed in range(10):
        _, P, net = random_case(400 + seed)
        a, sa = traverse(net, np.full(P, 0.3), TraversalConfig(box(P)))
        b, sb = traverse(net, np.full(P, 0.3), TraversalConfig(box(P)))
        assert a == b and sa.counts() == sb.counts()


def test_start_anywhere():
    for seed in range(10):
        rng, P, net = random_case(500 + seed)
        ref = set(traverse(net, np.zeros(P), TraversalConfig(box(P)))[0])
        for x in rng.uniform(-1, 1, size=(3, P)):
            assert set(traverse(net, x, TraversalConfig(box(P)))[0]) == ref


def test_parallel_workers_give_the_same_set():
    for seed in range(8):
        _, P, net = random_case(600 + seed)
        one, s1 = traverse(net, np.zeros(P), TraversalConfig(box(P), workers=1))
        many, s4 = traverse(net, np.zeros(P), TraversalConfig(box(P), workers=4))
        assert set(one) == set(many) and len(many) == len(set(many))
        assert s4.workers == 4


def test_union_of_level_two_sets_equals_bruteforce():
    for seed in range(10):
        _, P, net = random_case(700 + seed, depth=2)
        region = box(P)
        leaves = enumerate_bruteforce(net, region).codes
        union = set()
        for parent in {c.prefix(1) for c in leaves}:
            sys = polytope_from_code(net, parent).system.stack(region.to_system())
            start = interior_point(sys).witness
            union |= traverse_level(net, parent, region, start, 2)
        assert union == leaves
