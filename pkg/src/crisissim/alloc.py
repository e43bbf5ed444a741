"""Resource-allocation world: state encoding, actions, reward, baselines.

The world tracks four resource pools (medical, fire, rescue, logistics) and
up to five concurrent incident slots; extra incidents wait in a severity-
ordered queue that backfills slots as they free up. The observation is a
fixed 24-dimensional vector (layout version 1, documented on
:func:`encode_state`); actions are the no-op plus one dispatch per
(type, slot) pair, 21 in total.

The reward for a step is

    1.0 * newly-covered demand fraction
  - 0.5 * normalized mean waiting-time increment over active incidents
  - 0.5 * wasted-action indicator
  - 0.01 step cost

where the covered fraction is (units of demand met this step) / (total unmet
demand before the step), the waiting increment is the step length divided by
one hour (clamped to 1), and an action is wasted when it dispatches to an
inactive slot, names an unavailable unit type, or names a type the slot does
not need (such dispatches have no effect).

The rule-based baseline mirrors a rigid command ladder: serve the
highest-severity incident that still has unmet demand, dispatch its
largest-unmet resource type, and stand down if that exact type is
unavailable. It never falls back to a different type or incident within a
step; that rigidity is the point of comparison.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.optimize import linear_sum_assignment

__all__ = [
    "RESOURCE_TYPES",
    "N_TYPES",
    "N_SLOTS",
    "N_ACTIONS",
    "NOOP_ACTION",
    "STATE_DIM",
    "STATE_LAYOUT_VERSION",
    "ResourcePool",
    "IncidentSlot",
    "AllocWorld",
    "RewardWeights",
    "encode_action",
    "decode_action",
    "encode_state",
    "step",
    "baseline_policy",
    "optimal_assignment",
]

RESOURCE_TYPES = ("medical", "fire", "rescue", "logistics")
N_TYPES = 4
N_SLOTS = 5
N_ACTIONS = 1 + N_TYPES * N_SLOTS  # 21
NOOP_ACTION = 0
STATE_DIM = 24
STATE_LAYOUT_VERSION = 1


class InvalidActionError(ValueError):
    pass


def encode_action(type_idx: int, slot_idx: int) -> int:
    if not (0 <= type_idx < N_TYPES and 0 <= slot_idx < N_SLOTS):
        raise InvalidActionError(f"bad (type, slot) = ({type_idx}, {slot_idx})")
    return 1 + type_idx * N_SLOTS + slot_idx


def decode_action(action: int) -> tuple[int, int] | None:
    """(type, slot) for a dispatch action, None for the no-op."""
    if not (0 <= action < N_ACTIONS):
        raise InvalidActionError(f"action {action} outside [0, {N_ACTIONS})")
    if action == NOOP_ACTION:
        return None
    k = action - 1
    return k // N_SLOTS, k % N_SLOTS


@dataclass(frozen=True)
class ResourcePool:
    total: tuple[int, int, int, int]
    available: tuple[int, int, int, int]
    deployed: tuple[int, int, int, int]

    def __post_init__(self):
        for t, a, d in zip(self.total, self.available, self.deployed):
            if a < 0 or d < 0 or a + d != t:
                raise ValueError(f"pool inconsistent: {self}")

    @staticmethod
    def fresh(units_per_type) -> "ResourcePool":
        if isinstance(units_per_type, int):
            units_per_type = (units_per_type,) * N_TYPES
        total = tuple(int(u) for u in units_per_type)
        return ResourcePool(total=total, available=total, deployed=(0,) * N_TYPES)

    def dispatch(self, type_idx: int) -> "ResourcePool":
        a = list(self.available)
        d = list(self.deployed)
        a[type_idx] -= 1
        d[type_idx] += 1
        return ResourcePool(self.total, tuple(a), tuple(d))

    def release(self, counts: tuple[int, ...]) -> "ResourcePool":
        a = list(self.available)
        d = list(self.deployed)
        for r, c in enumerate(counts):
            a[r] += c
            d[r] -= c
        return ResourcePool(self.total, tuple(a), tuple(d))


@dataclass(frozen=True)
class IncidentSlot:
    active: bool = False
    incident_id: str = ""
    severity: float = 0.0
    unmet: tuple[int, int, int, int] = (0, 0, 0, 0)
    initial_demand: int = 0
    elapsed_s: float = 0.0
    onset_s: float = 0.0
    travel_minutes: float = 0.0   # dispatch travel estimate used by the scoring oracle

    @staticmethod
    def empty() -> "IncidentSlot":
        return IncidentSlot()

    def total_unmet(self) -> int:
        return sum(self.unmet)


@dataclass(frozen=True)
class RewardWeights:
    coverage: float = 1.0
    waiting: float = 0.5
    waste: float = 0.5
    step_cost: float = 0.01


@dataclass(frozen=True)
class AllocWorld:
    pool: ResourcePool
    slots: tuple[IncidentSlot, ...] = (IncidentSlot.empty(),) * N_SLOTS
    queue: tuple[IncidentSlot, ...] = ()        # overflow incidents, severity-ordered
    clock_s: float = 0.0
    horizon_s: float = 3600.0
    step_s: float = 60.0
    weights: RewardWeights = RewardWeights()

    def __post_init__(self):
        if len(self.slots) != N_SLOTS:
            raise ValueError(f"world needs exactly {N_SLOTS} slots")
        for s in self.slots:
            if not s.active and (s.severity != 0.0 or s.total_unmet() != 0
                                 or s.elapsed_s != 0.0):
                raise ValueError("inactive slot has nonzero fields")

    def active_slots(self) -> list[int]:
        return [i for i, s in enumerate(self.slots) if s.active]

    def total_unmet(self) -> int:
        return sum(s.total_unmet() for s in self.slots if s.active)

    def done(self) -> bool:
        return (self.total_unmet() == 0 and not self.queue) or self.clock_s >= self.horizon_s


def encode_state(world: AllocWorld) -> np.ndarray:
    """Fixed 24-dim observation (layout version 1).

    dims 0..7   per type: available/total, deployed/total
    dims 8..22  per slot: severity/10, unmet/initial_demand, elapsed/3600 (clamped)
    dim  23     clock/horizon (clamped)
    """
    v = np.zeros(STATE_DIM)
    for r in range(N_TYPES):
        tot = max(1, world.pool.total[r])
        v[2 * r] = world.pool.available[r] / tot
        v[2 * r + 1] = world.pool.deployed[r] / tot
    for i, s in enumerate(world.slots):
        base = 8 + 3 * i
        if s.active:
            v[base] = s.severity / 10.0
            v[base + 1] = s.total_unmet() / max(1, s.initial_demand)
            v[base + 2] = min(1.0, s.elapsed_s / 3600.0)
    v[23] = min(1.0, world.clock_s / max(1e-9, world.horizon_s))
    return np.clip(v, 0.0, 1.0)


def _advance_slots(slots, dt: float):
    out = []
    for s in slots:
        out.append(replace(s, elapsed_s=s.elapsed_s + dt) if s.active else s)
    return tuple(out)


def step(world: AllocWorld, action: int) -> tuple[AllocWorld, float, bool]:
    """Apply one action and advance the clock by one step."""
    target = decode_action(action)  # validates

    pool = world.pool
    slots = list(world.slots)
    unmet_before = world.total_unmet()
    covered = 0
    wasted = False

    if target is not None:
        r, i = target
        slot = slots[i]
        if not slot.active or pool.available[r] == 0 or slot.unmet[r] == 0:
            wasted = True
        else:
            pool = pool.dispatch(r)
            unmet = list(slot.unmet)
            unmet[r] -= 1
            slots[i] = replace(slot, unmet=tuple(unmet))
            covered = 1

    dt = world.step_s
    slots = _advance_slots(slots, dt)
    w = world.weights
    reward = (
        w.coverage * (covered / max(1, unmet_before))
        - w.waiting * min(1.0, dt / 3600.0) * (1 if world.active_slots() else 0)
        - w.waste * (1.0 if wasted else 0.0)
        - w.step_cost
    )
    new_world = replace(world, pool=pool, slots=tuple(slots),
                        clock_s=world.clock_s + dt)
    return new_world, reward, new_world.done()


def baseline_policy(world: AllocWorld) -> int:
    """Rigid command-ladder action for the current world (pure function)."""
    candidates = [(i, s) for i, s in enumerate(world.slots)
                  if s.active and s.total_unmet() > 0]
    if not candidates:
        return NOOP_ACTION
    # highest severity first; equal severities resolve to the lower slot index
    i, slot = max(candidates, key=lambda t: (t[1].severity, -t[0]))
    r = max(range(N_TYPES), key=lambda r: (slot.unmet[r], -r))
    if slot.unmet[r] == 0 or world.pool.available[r] == 0:
        return NOOP_ACTION
    return encode_action(r, i)


# ---------------------------------------------------------------------------
# optimal assignment (scoring oracle)
# ---------------------------------------------------------------------------

def _min_completion(c: np.ndarray, rows: list[int], cols: list[int]) -> float:
    """Exact minimum cost of maximally assigning the given rows x cols."""
    if not rows or not cols:
        return 0.0
    sub = c[np.ix_(rows, cols)]
    ri, ci = linear_sum_assignment(sub)
    return float(sub[ri, ci].sum())


def optimal_assignment(costs) -> list[tuple[int, int]]:
    """Minimum-cost assignment of rows to columns, lexicographically smallest.

    Assigns min(n, m) pairs. Among all minimum-cost maximal assignments the
    result is the one whose per-row column vector (unassigned rows sorting
    last) is lexicographically smallest. The optimum value comes from the
    Jonker-Volgenant solver; the representative is fixed row by row, keeping
    the smallest candidate column whose completion still achieves the
    optimum, so the whole computation stays polynomial even on tie-heavy
    matrices.
    """
    c = np.asarray(costs, dtype=np.float64)
    if c.ndim != 2 or c.size == 0:
        raise ValueError("costs must be a nonempty 2-d matrix")
    if not np.all(np.isfinite(c)):
        raise ValueError("costs must be finite")
    n, m = c.shape
    k = min(n, m)
    rows, cols = linear_sum_assignment(c)
    best = float(c[rows, cols].sum())
    tol = 1e-9 * max(1.0, abs(best))

    assigned: list[tuple[int, int]] = []
    free_cols = list(range(m))
    acc = 0.0
    for row in range(n):
        need = k - len(assigned)
        if need == 0:
            break
        rest = list(range(row + 1, n))
        fixed = None
        for col in free_cols:
            rem = [x for x in free_cols if x != col]
            if acc + c[row, col] + _min_completion(c, rest, rem) <= best + tol:
                fixed = col
                break
        if fixed is None:
            # leaving the row unassigned sorts after any real column and is
            # only allowed while enough rows remain to reach k pairs
            if len(rest) >= need and \
                    acc + _min_completion(c, rest, free_cols) <= best + tol:
                continue
            raise RuntimeError("no assignment reached the solver optimum")
        assigned.append((row, fixed))
        free_cols.remove(fixed)
        acc += c[row, fixed]
    return assigned


def oracle_costs(world: AllocWorld) -> tuple[np.ndarray, list[int], list[tuple[int, int]]]:
    """Cost matrix for scoring a decision-time snapshot.

    Rows are individual available units (grouped by type); columns are unmet
    demand slots, one per outstanding (incident, type, unit) need. The cost of
    serving a need with a matching unit is the incident's travel estimate
    discounted by severity; a type mismatch carries a large penalty so the
    optimum never crosses types unless forced.

    Returns (costs, row_types, col_needs) where col_needs[j] = (slot, type).
    """
    row_types: list[int] = []
    for r in range(N_TYPES):
        row_types.extend([r] * world.pool.available[r])
    col_needs: list[tuple[int, int]] = []
    for i, s in enumerate(world.slots):
        if not s.active:
            continue
        for r in range(N_TYPES):
            col_needs.extend([(i, r)] * s.unmet[r])
    if not row_types or not col_needs:
        return np.zeros((0, 0)), row_types, col_needs
    costs = np.zeros((len(row_types), len(col_needs)))
    for a, r in enumerate(row_types):
        for b, (i, req) in enumerate(col_needs):
            s = world.slots[i]
            base = s.travel_minutes * (1.0 + (10.0 - s.severity) / 10.0)
            costs[a, b] = base if r == req else 1e6 + base
    return costs, row_types, col_needs


def oracle_pairs(world: AllocWorld) -> set[tuple[int, int]]:
    """(type, slot) pairs the optimal assignment would serve right now."""
    costs, row_types, col_needs = oracle_costs(world)
    if costs.size == 0:
        return set()
    pairs = set()
    for a, b in optimal_assignment(costs):
        if costs[a, b] < 1e6:  # ignore forced type mismatches
            i, r = col_needs[b]
            pairs.add((r, i))
    return pairs


