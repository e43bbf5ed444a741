from __future__ import annotations

import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from crisissim.alloc import (
    N_ACTIONS,
    N_SLOTS,
    N_TYPES,
    NOOP_ACTION,
    AllocWorld,
    IncidentSlot,
    InvalidActionError,
    ResourcePool,
    baseline_policy,
    decode_action,
    encode_action,
    encode_state,
    optimal_assignment,
    oracle_pairs,
    step,
)


def make_slot(severity=5.0, unmet=(1, 0, 0, 0), elapsed=0.0, initial=None,
              travel=10.0, slot_id="i"):
    return IncidentSlot(active=True, incident_id=slot_id, severity=severity,
                        unmet=unmet, initial_demand=initial or sum(unmet),
                        elapsed_s=elapsed, travel_minutes=travel)


def world_with(slots: list[IncidentSlot], units=3, step_s=60.0) -> AllocWorld:
    padded = list(slots) + [IncidentSlot.empty()] * (N_SLOTS - len(slots))
    return AllocWorld(pool=ResourcePool.fresh(units), slots=tuple(padded),
                      step_s=step_s)


class TestActions:
    def test_bijection_over_action_space(self):
        seen = set()
        for a in range(1, N_ACTIONS):
            r, i = decode_action(a)
            assert encode_action(r, i) == a
            seen.add((r, i))
        assert len(seen) == N_TYPES * N_SLOTS
        assert decode_action(NOOP_ACTION) is None

    def test_out_of_range_action_rejected(self):
        with pytest.raises(InvalidActionError):
            decode_action(N_ACTIONS)
        with pytest.raises(InvalidActionError):
            decode_action(-1)

    @given(st.integers(0, N_TYPES - 1), st.integers(0, N_SLOTS - 1))
    def test_encode_decode_property(self, r, i):
        assert decode_action(encode_action(r, i)) == (r, i)


class TestStep:
    def test_noop_in_empty_world_costs_step_only(self):
        world = world_with([])
        _, reward, done = step(world, NOOP_ACTION)
        assert reward == pytest.approx(-0.01)
        assert done  # nothing to do

    def test_dispatch_to_inactive_slot_is_wasted(self):
        world = world_with([make_slot()])
        _, reward, _ = step(world, encode_action(0, 4))  # slot 4 inactive
        # waste 0.5 + waiting 0.5*(60/3600) + step cost
        assert reward == pytest.approx(-0.5 - 0.5 * 60 / 3600 - 0.01)

    def test_greedy_completion_matches_hand_computation(self):
        # one incident needing one fire unit, completed on step 3 after two no-ops
        world = world_with([make_slot(unmet=(0, 1, 0, 0))])
        total = 0.0
        world1, r1, d1 = step(world, NOOP_ACTION)
        world2, r2, d2 = step(world1, NOOP_ACTION)
        world3, r3, d3 = step(world2, encode_action(1, 0))
        total = r1 + r2 + r3
        per_wait = 0.5 * 60 / 3600
        # steps 1-2: waiting + step cost; step 3 adds full coverage of the
        # single outstanding demand
        expected = 2 * (-per_wait - 0.01) + (1.0 - per_wait - 0.01)
        assert total == pytest.approx(expected)
        assert (d1, d2, d3) == (False, False, True)

    def test_unit_conservation_across_random_episodes(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            world = world_with([
                make_slot(severity=float(rng.uniform(1, 10)),
                          unmet=tuple(int(x) for x in rng.integers(0, 3, size=4)))
                for _ in range(int(rng.integers(1, 4)))
            ])
            total = world.pool.total
            for _ in range(30):
                a = int(rng.integers(0, N_ACTIONS))
                world, _, done = step(world, a)
                assert world.pool.total == total
                assert tuple(av + dp for av, dp in
                             zip(world.pool.available, world.pool.deployed)) == total
                if done:
                    break

    def test_reward_bounds(self):
        rng = np.random.default_rng(7)
        for _ in range(200):
            world = world_with([
                make_slot(severity=float(rng.uniform(0, 10)),
                          unmet=tuple(int(x) for x in rng.integers(0, 3, size=4)))
            ])
            _, reward, _ = step(world, int(rng.integers(0, N_ACTIONS)))
            assert -1.51 <= reward <= 1.0

    def test_invalid_action_raises(self):
        with pytest.raises(InvalidActionError):
            step(world_with([make_slot()]), 99)


class TestEncodeState:
    def test_empty_world_zeros_except_clock_and_availability(self):
        world = AllocWorld(pool=ResourcePool.fresh(3), clock_s=1800.0,
                           horizon_s=3600.0)
        v = encode_state(world)
        assert v[0] == v[2] == v[4] == v[6] == 1.0  # full availability
        assert np.all(v[8:23] == 0.0)
        assert v[23] == pytest.approx(0.5)

    def test_full_availability_dims(self):
        v = encode_state(world_with([make_slot()]))
        assert v[0] == v[2] == v[4] == v[6] == 1.0
        assert v[1] == v[3] == v[5] == v[7] == 0.0

    def test_random_worlds_match_bookkeeping_oracle(self):
        rng = np.random.default_rng(13)
        for _ in range(50):
            n_active = int(rng.integers(0, N_SLOTS + 1))
            slots = [make_slot(severity=float(rng.uniform(0, 10)),
                               unmet=tuple(int(x) for x in rng.integers(0, 4, size=4)),
                               elapsed=float(rng.uniform(0, 7200)),
                               initial=int(rng.integers(1, 12)))
                     for _ in range(n_active)]
            world = world_with(slots, units=int(rng.integers(1, 5)))
            world, _, _ = step(world, int(rng.integers(0, N_ACTIONS)))
            v = encode_state(world)
            assert v.shape == (24,)
            assert np.all((0.0 <= v) & (v <= 1.0))
            for r in range(N_TYPES):
                assert v[2 * r] == pytest.approx(
                    world.pool.available[r] / world.pool.total[r])
                assert v[2 * r + 1] == pytest.approx(
                    world.pool.deployed[r] / world.pool.total[r])
            for i, s in enumerate(world.slots):
                base = 8 + 3 * i
                if s.active:
                    assert v[base] == pytest.approx(s.severity / 10.0)
                    assert v[base + 1] == pytest.approx(
                        min(1.0, s.total_unmet() / max(1, s.initial_demand)))
                    assert v[base + 2] == pytest.approx(min(1.0, s.elapsed_s / 3600.0))
                else:
                    assert np.all(v[base:base + 3] == 0.0)


def reference_ladder(world: AllocWorld) -> int:
    """Independent reimplementation of the rule ladder for cross-checking."""
    best = None
    for i, s in enumerate(world.slots):
        if not s.active or s.total_unmet() == 0:
            continue
        if best is None or s.severity > world.slots[best].severity:
            best = i
    if best is None:
        return NOOP_ACTION
    s = world.slots[best]
    r_best, top = 0, -1
    for r in range(N_TYPES):
        if s.unmet[r] > top:
            top, r_best = s.unmet[r], r
    if top == 0 or world.pool.available[r_best] == 0:
        return NOOP_ACTION
    return encode_action(r_best, best)


class TestBaselinePolicy:
    def test_single_incident_single_type(self):
        world = world_with([make_slot(unmet=(0, 0, 2, 0))])
        assert baseline_policy(world) == encode_action(2, 0)

    def test_severity_orders_service(self):
        world = world_with([make_slot(severity=3.0, unmet=(1, 0, 0, 0)),
                            make_slot(severity=7.0, unmet=(0, 1, 0, 0))])
        assert baseline_policy(world) == encode_action(1, 1)

    def test_rigid_noop_when_chosen_type_unavailable(self):
        world = world_with([make_slot(unmet=(0, 3, 1, 0))])
        pool = ResourcePool(total=(1, 2, 1, 1), available=(1, 0, 1, 1),
                            deployed=(0, 2, 0, 0))
        world = AllocWorld(pool=pool, slots=world.slots)
        # largest unmet type (fire) has no units; the ladder stands down even
        # though rescue is available and needed
        assert baseline_policy(world) == NOOP_ACTION

    def test_matches_reference_ladder_on_random_worlds(self):
        rng = np.random.default_rng(31)
        for _ in range(300):
            n_active = int(rng.integers(0, N_SLOTS + 1))
            slots = [make_slot(severity=float(rng.integers(0, 11)),
                               unmet=tuple(int(x) for x in rng.integers(0, 3, size=4)))
                     for _ in range(n_active)]
            pool = ResourcePool.fresh(tuple(int(x) for x in rng.integers(0, 3, size=4)))
            world = AllocWorld(pool=pool, slots=tuple(
                slots + [IncidentSlot.empty()] * (N_SLOTS - len(slots))))
            assert baseline_policy(world) == reference_ladder(world)

    def test_pure_function_of_world(self):
        world = world_with([make_slot(unmet=(1, 1, 0, 0))])
        assert baseline_policy(world) == baseline_policy(world)


# ---------------------------------------------------------------------------
# assignment oracle
# ---------------------------------------------------------------------------

def brute_force_assignment(costs):
    """Exhaustive reference: min cost, lexicographically-smallest assignment."""
    c = np.asarray(costs, dtype=np.float64)
    n, m = c.shape
    k = min(n, m)
    best_cost, best_vec, best_pairs = None, None, None
    for rows in itertools.combinations(range(n), k):
        for cols in itertools.permutations(range(m), k):
            cost = float(sum(c[r, col] for r, col in zip(rows, cols)))
            by_row = dict(zip(rows, cols))
            vec = tuple(by_row.get(r, m) for r in range(n))
            if (best_cost is None or cost < best_cost - 1e-12
                    or (abs(cost - best_cost) <= 1e-12 and vec < best_vec)):
                best_cost, best_vec = cost, vec
                best_pairs = sorted(by_row.items())
    return best_cost, best_pairs


class TestOptimalAssignment:
    def test_identity_favoring_diagonal(self):
        costs = np.full((4, 4), 10.0)
        np.fill_diagonal(costs, 1.0)
        assert optimal_assignment(costs) == [(i, i) for i in range(4)]

    def test_one_by_one(self):
        assert optimal_assignment([[3.0]]) == [(0, 0)]

    def test_random_6x6_integer_matrices_match_brute_force(self):
        rng = np.random.default_rng(100)
        for _ in range(30):
            costs = rng.integers(0, 20, size=(6, 6)).astype(float)
            got = optimal_assignment(costs)
            want_cost, want_pairs = brute_force_assignment(costs)
            got_cost = sum(costs[r, c] for r, c in got)
            assert got_cost == want_cost
            assert got == want_pairs

    def test_rectangular_and_ties(self):
        rng = np.random.default_rng(200)
        for _ in range(30):
            n = int(rng.integers(1, 6))
            m = int(rng.integers(1, 6))
            costs = rng.integers(0, 4, size=(n, m)).astype(float)  # many ties
            got = optimal_assignment(costs)
            want_cost, want_pairs = brute_force_assignment(costs)
            assert sum(costs[r, c] for r, c in got) == want_cost
            assert got == want_pairs

    def test_all_zero_costs_lexicographic(self):
        got = optimal_assignment(np.zeros((3, 5)))
        assert got == [(0, 0), (1, 1), (2, 2)]

    def test_nonfinite_rejected(self):
        with pytest.raises(ValueError):
            optimal_assignment([[np.inf, 1.0]])


class TestOraclePairs:
    def test_matching_spreads_over_incidents(self):
        # two incidents both needing fire; only one fire unit available;
        # the closer (lower travel) incident must win the pair
        near = make_slot(severity=5.0, unmet=(0, 1, 0, 0), travel=5.0, slot_id="a")
        far = make_slot(severity=5.0, unmet=(0, 1, 0, 0), travel=30.0, slot_id="b")
        pool = ResourcePool(total=(0, 1, 0, 0), available=(0, 1, 0, 0),
                            deployed=(0, 0, 0, 0))
        world = AllocWorld(pool=pool, slots=(near, far) + (IncidentSlot.empty(),) * 3)
        assert oracle_pairs(world) == {(1, 0)}

    def test_severity_discount_prefers_severe_incident_at_equal_travel(self):
        mild = make_slot(severity=2.0, unmet=(1, 0, 0, 0), travel=10.0)
        severe = make_slot(severity=9.0, unmet=(1, 0, 0, 0), travel=10.0)
        pool = ResourcePool(total=(1, 0, 0, 0), available=(1, 0, 0, 0),
                            deployed=(0, 0, 0, 0))
        world = AllocWorld(pool=pool, slots=(mild, severe) + (IncidentSlot.empty(),) * 3)
        assert oracle_pairs(world) == {(0, 1)}

    def test_empty_world_no_pairs(self):
        world = AllocWorld(pool=ResourcePool.fresh(2))
        assert oracle_pairs(world) == set()
