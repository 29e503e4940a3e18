"""Configuration-matrix generation and laser accounting.

A configuration matrix is a 0/1 matrix with at most one nonzero per row
and per column: one simultaneous set of conflict-free laser transmissions.
A sub-traffic-matrix is covered by a short list of such matrices, each
carrying a fixed payload of ``coefficient_bits`` per active link.
"""

import math
from dataclasses import dataclass, replace

import numpy as np

__all__ = [
    "ScheduleError",
    "ConfigurationMatrix",
    "LaserCount",
    "SegmentSchedule",
    "SchedulePlan",
    "max_line_sum",
    "schedule_coefficient_bits",
    "decompose",
    "laser_count",
    "average_lasers",
    "build_plan",
    "materialize_plan",
    "render_plan",
]


class ScheduleError(ValueError):
    """Raised on invalid scheduling inputs."""


@dataclass(frozen=True)
class ConfigurationMatrix:
    """One schedule: 0/1 conflict-free link pattern plus its payload in bits."""

    pattern: np.ndarray
    coefficient_bits: float

    def __post_init__(self):
        p = np.asarray(self.pattern)
        if p.ndim != 2 or p.shape[0] != p.shape[1]:
            raise ScheduleError(f"pattern must be square, got shape {p.shape}")
        if not np.isin(p, (0, 1)).all():
            raise ScheduleError("pattern entries must be 0 or 1")
        if p.sum(axis=0).max(initial=0) > 1 or p.sum(axis=1).max(initial=0) > 1:
            raise ScheduleError("pattern must have at most one 1 per row and column")
        if self.coefficient_bits <= 0:
            raise ScheduleError("coefficient_bits must be positive")
        p = p.astype(np.int8).copy()
        p.setflags(write=False)
        object.__setattr__(self, "pattern", p)


def max_line_sum(matrix) -> float:
    """Largest row sum or column sum of a non-negative matrix."""
    m = np.asarray(matrix, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ScheduleError(f"matrix must be square, got shape {m.shape}")
    if np.any(m < 0):
        raise ScheduleError("matrix entries must be non-negative")
    if m.size == 0:
        return 0.0
    return float(max(m.sum(axis=1).max(), m.sum(axis=0).max()))


def schedule_coefficient_bits(max_line_bits: float, num_schedules: float,
                              size: int, n0: float) -> float:
    """Payload carried per schedule so that the budget of matrices suffices.

    Equals ``n0 * max_line_bits / (num_schedules - size)``; the budget must
    strictly exceed the matrix dimension.
    """
    if num_schedules <= size:
        raise ScheduleError(
            f"num_schedules must exceed the matrix size {size}, got {num_schedules}")
    if max_line_bits < 0:
        raise ScheduleError("max_line_bits must be non-negative")
    return n0 * max_line_bits / (num_schedules - size)


def _perfect_matching(support: np.ndarray) -> list[int]:
    """Row -> column perfect matching on a square 0/1 support (Kuhn's DFS)."""
    n = support.shape[0]
    col_owner = [-1] * n

    def try_assign(i: int, banned: set) -> bool:
        for j in range(n):
            if support[i, j] and j not in banned:
                banned.add(j)
                if col_owner[j] < 0 or try_assign(col_owner[j], banned):
                    col_owner[j] = i
                    return True
        return False

    for i in range(n):
        if not try_assign(i, set()):
            raise ScheduleError("internal error: regular support lost its matching")
    row_to_col = [-1] * n
    for j, i in enumerate(col_owner):
        row_to_col[i] = j
    return row_to_col


def _pad_to_regular(q: np.ndarray, degree: int) -> np.ndarray:
    """Filler entries that raise every line sum of ``q`` to ``degree``."""
    row_def = degree - q.sum(axis=1)
    col_def = degree - q.sum(axis=0)
    filler = np.zeros_like(q)
    j = 0
    for i in range(q.shape[0]):
        while row_def[i] > 0:
            while col_def[j] == 0:
                j += 1
            take = min(row_def[i], col_def[j])
            filler[i, j] += take
            row_def[i] -= take
            col_def[j] -= take
    return filler


def _split_quotient(q: np.ndarray) -> list[np.ndarray]:
    """Split an integer matrix with max line sum D into D sub-permutations.

    Viewing q as a bipartite multigraph, each pass extracts a matching that
    covers every row and column currently at the maximum line sum (found as
    a perfect matching of the multigraph padded to regularity), so the
    maximum drops by exactly one per pass.
    """
    q = q.copy()
    patterns = []
    degree = int(max(q.sum(axis=1).max(), q.sum(axis=0).max()))
    while degree > 0:
        filler = _pad_to_regular(q, degree)
        assignment = _perfect_matching((q + filler) > 0)
        pattern = np.zeros_like(q, dtype=np.int8)
        for i, j in enumerate(assignment):
            if q[i, j] > 0:
                pattern[i, j] = 1
        q -= pattern
        if pattern.any():
            patterns.append(pattern)
        degree -= 1
    return patterns


def decompose(stm, num_schedules: float, n0: float = 1.0) -> list[ConfigurationMatrix]:
    """Cover ``n0 * stm`` by at most ``num_schedules`` configuration matrices.

    The scaled matrix is written as coefficient * quotient + remainder with
    the quotient floored entrywise.  The quotient's line sums cannot exceed
    ``num_schedules - size``, so it splits into that many matchings; the
    remainder (every entry below one coefficient) is swept by the cyclic
    off-diagonals, emitting only the ones that are actually populated.
    Every emitted matrix carries ``coefficient_bits`` per active entry and
    the stack covers the demand entrywise with per-entry slack below one
    coefficient.
    """
    m = np.asarray(stm, dtype=float)
    size = m.shape[0]
    if np.any(m < 0):
        raise ScheduleError("sub-traffic-matrix entries must be non-negative")
    if num_schedules <= size:
        raise ScheduleError(
            f"num_schedules must exceed the matrix size {size}, got {num_schedules}")
    bottleneck = max_line_sum(m)
    if bottleneck == 0.0:
        return []
    coeff = schedule_coefficient_bits(bottleneck, num_schedules, size, n0)
    scaled = n0 * m
    quotient = np.floor(scaled / coeff).astype(np.int64)
    remainder = np.maximum(scaled - coeff * quotient, 0.0)

    matrices = [ConfigurationMatrix(p, coeff) for p in _split_quotient(quotient)]
    for shift in range(1, size):
        pattern = np.zeros((size, size), dtype=np.int8)
        for i in range(size):
            j = (i + shift) % size
            if remainder[i, j] > 0.0:
                pattern[i, j] = 1
        if pattern.any():
            matrices.append(ConfigurationMatrix(pattern, coeff))
    return matrices


@dataclass(frozen=True)
class LaserCount:
    """Lasers a satellite needs to finish a segment's schedules in time."""

    required: float
    count: int
    fits: bool


def laser_count(max_line_bits: float, num_schedules: float, size: int,
                n0: float, seconds_per_bit: float, overhead_s: float,
                alpha: float, tau_s: float) -> LaserCount:
    """Per-satellite laser count for one segment, with its feasibility flag.

    ``required = (num_schedules / (alpha * tau)) * per_schedule_time`` where
    the per-schedule time is transmission plus overhead; ``fits`` reports
    whether a single schedule fits in the usable segment width at all.
    """
    if num_schedules <= size:
        raise ScheduleError(
            f"num_schedules must exceed the matrix size {size}, got {num_schedules}")
    width = alpha * tau_s
    if width <= 0:
        raise ScheduleError("alpha * tau_s must be positive")
    per_schedule = (n0 * seconds_per_bit * max_line_bits / (num_schedules - size)
                    + overhead_s)
    required = num_schedules / width * per_schedule
    return LaserCount(required=required, count=math.ceil(required),
                      fits=per_schedule <= width)


def average_lasers(segments, alpha: float, window_kstar_s: float) -> float:
    """Time-weighted average active lasers over the whole relay budget.

    ``segments`` yields (num_schedules, per_schedule_s) pairs; the average
    is their product summed, over ``alpha * window_kstar_s``.
    """
    budget = alpha * window_kstar_s
    if budget <= 0:
        raise ScheduleError("relay budget alpha * window must be positive")
    return sum(n * t for n, t in segments) / budget


@dataclass(frozen=True)
class SegmentSchedule:
    """Scheduling figures for one time segment."""

    segment: int
    max_line_bits: float
    num_schedules: float
    coefficient_bits: float
    per_schedule_s: float
    usable_width_s: float
    lasers: LaserCount | None
    matrices: tuple[ConfigurationMatrix, ...] | None = None


@dataclass(frozen=True)
class SchedulePlan:
    """Per-segment schedules plus the plan-wide laser average."""

    segments: tuple[SegmentSchedule, ...]
    k_star: int
    alpha: float
    n0: float
    avg_lasers: float
    relay_budget_s: float


def build_plan(stm_line_bits, layout, seconds_per_bit: float, overhead_s: float,
               n0: float, schedule_counts) -> SchedulePlan:
    """Assemble a plan from per-segment bottleneck bits and matrix budgets.

    ``stm_line_bits[v]`` is the max line sum of segment v's sub-traffic-
    matrix at base scale, ``schedule_counts[v]`` its matrix budget (ignored
    for empty segments, which get no schedules and no lasers).
    """
    line_bits = np.asarray(stm_line_bits, dtype=float)
    size = len(line_bits)
    counts = np.asarray(schedule_counts, dtype=float)
    if counts.shape != line_bits.shape:
        raise ScheduleError("schedule_counts must align with stm_line_bits")
    segments = []
    weighted = []
    for v in range(layout.k_star, size):
        width = layout.alpha * layout.tau_s[v]
        if line_bits[v] <= 0.0:
            segments.append(SegmentSchedule(
                segment=v, max_line_bits=0.0, num_schedules=0.0,
                coefficient_bits=0.0, per_schedule_s=0.0,
                usable_width_s=width, lasers=None))
            continue
        count = counts[v]
        coeff = schedule_coefficient_bits(line_bits[v], count, size, n0)
        per_schedule = coeff * seconds_per_bit + overhead_s
        lasers = laser_count(line_bits[v], count, size, n0, seconds_per_bit,
                             overhead_s, layout.alpha, layout.tau_s[v])
        segments.append(SegmentSchedule(
            segment=v, max_line_bits=float(line_bits[v]), num_schedules=float(count),
            coefficient_bits=coeff, per_schedule_s=per_schedule,
            usable_width_s=width, lasers=lasers))
        weighted.append((count, per_schedule))
    window_kstar = sum(layout.tau_s[layout.k_star:])
    avg = average_lasers(weighted, layout.alpha, window_kstar) if weighted else 0.0
    return SchedulePlan(segments=tuple(segments), k_star=layout.k_star,
                        alpha=layout.alpha, n0=n0, avg_lasers=avg,
                        relay_budget_s=layout.alpha * window_kstar)


def materialize_plan(plan: SchedulePlan, stms) -> SchedulePlan:
    """Fill in the actual configuration matrices of every non-empty segment."""
    segments = []
    for seg in plan.segments:
        if seg.max_line_bits <= 0.0:
            segments.append(replace(seg, matrices=()))
            continue
        matrices = decompose(stms.matrices[seg.segment], seg.num_schedules, plan.n0)
        if len(matrices) > seg.num_schedules:
            raise ScheduleError("internal error: schedule budget exceeded")
        segments.append(replace(seg, matrices=tuple(matrices)))
    return replace(plan, segments=tuple(segments))


def render_plan(plan: SchedulePlan) -> str:
    """Human-readable dump: one block per segment, matrices as 0/1 rows.

    Format: a ``segment v:`` header with the scheduling figures, then one
    ``schedule k (payload N bits)`` line per matrix followed by its rows.
    """
    lines = [
        f"relay plan: k_star={plan.k_star + 1} alpha={plan.alpha:.6g} "
        f"n0={plan.n0:g} avg_lasers={plan.avg_lasers:.6g} "
        f"relay_budget_s={plan.relay_budget_s:.6g}",
    ]
    for seg in plan.segments:
        lines.append(
            f"segment {seg.segment + 1}: bottleneck_bits={seg.max_line_bits:.6g} "
            f"schedules={seg.num_schedules:g} payload_bits={seg.coefficient_bits:.6g} "
            f"per_schedule_s={seg.per_schedule_s:.6g} "
            f"lasers={seg.lasers.count if seg.lasers else 0}")
        if not seg.matrices:
            lines.append("  (idle)")
            continue
        for k, cm in enumerate(seg.matrices, start=1):
            lines.append(f"  schedule {k} (payload {cm.coefficient_bits:.6g} bits)")
            for row in cm.pattern:
                lines.append("    " + " ".join(str(int(x)) for x in row))
    return "\n".join(lines) + "\n"
