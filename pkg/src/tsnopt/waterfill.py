"""Geometric water-filling and the tapped variant that splits a traffic
matrix into per-time-segment sub-traffic-matrices.

All matrices are dense S x S numpy arrays of bits; indices are 0-based.
"""

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "WaterfillError",
    "WaterLevels",
    "TrafficMatrix",
    "StmSet",
    "water_fill",
    "tapped_water_fill",
]


class WaterfillError(ValueError):
    """Raised on infeasible or malformed water-filling inputs."""


@dataclass(frozen=True)
class WaterLevels:
    """Solution of one geometric water-filling call.

    ``added[i] = max(0, level - heights[i])`` and the carried volumes
    ``widths[i] * added[i]`` sum to the requested volume.  Steps at or
    above the water level receive nothing.
    """

    widths: np.ndarray
    heights: np.ndarray
    added: np.ndarray
    level: float
    volume: float

    def carried(self) -> np.ndarray:
        return self.widths * self.added


def water_fill(widths, heights, volume: float) -> WaterLevels:
    """Distribute ``volume`` over steps of given widths and heights.

    Returns the unique water level ``mu`` with
    ``sum(widths * max(0, mu - heights)) == volume``.  Zero-width steps are
    permitted and carry no volume.  ``volume == 0`` leaves every step dry
    with the level at the lowest positive-width step.
    """
    w = np.asarray(widths, dtype=float)
    h = np.asarray(heights, dtype=float)
    if w.ndim != 1 or h.shape != w.shape:
        raise WaterfillError("widths and heights must be 1-d arrays of equal length")
    if np.any(w < 0) or np.any(h < 0):
        raise WaterfillError("widths and heights must be non-negative")
    if volume < 0:
        raise WaterfillError(f"volume must be non-negative, got {volume}")
    active = w > 0
    if volume == 0.0:
        level = float(h[active].min()) if active.any() else 0.0
        return WaterLevels(widths=w, heights=h, added=np.zeros_like(w),
                           level=level, volume=0.0)
    if not active.any():
        raise WaterfillError("positive volume cannot be held by zero total width")

    # Raise the level plateau by plateau over the sorted active heights;
    # within a plateau the level is linear in the remaining volume.
    order = np.argsort(h[active], kind="stable")
    hs = h[active][order]
    ws = w[active][order]
    cum_w = np.cumsum(ws)
    filled = 0.0
    level = hs[0]
    k = 0
    n = len(hs)
    while k < n - 1:
        step_cap = cum_w[k] * (hs[k + 1] - level)
        if filled + step_cap >= volume:
            break
        filled += step_cap
        level = hs[k + 1]
        k += 1
    level += (volume - filled) / cum_w[k]
    added = np.maximum(0.0, level - h)
    return WaterLevels(widths=w, heights=h, added=added,
                       level=float(level), volume=float(volume))


@dataclass(frozen=True)
class TrafficMatrix:
    """Inter-satellite demand in bits over one base serving period."""

    bits: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.bits, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise WaterfillError(f"traffic matrix must be square, got shape {a.shape}")
        if np.any(a < 0):
            raise WaterfillError("traffic entries must be non-negative")
        if np.any(np.diag(a) != 0):
            raise WaterfillError("traffic matrix must have a zero diagonal")
        a = a.copy()
        a.setflags(write=False)
        object.__setattr__(self, "bits", a)

    @property
    def size(self) -> int:
        return self.bits.shape[0]

    @property
    def total_bits(self) -> float:
        return float(self.bits.sum())

    def row_sums(self) -> np.ndarray:
        return self.bits.sum(axis=1)

    def col_sums(self) -> np.ndarray:
        return self.bits.sum(axis=0)


@dataclass(frozen=True)
class StmSet:
    """Per-segment sub-traffic-matrices produced by the tapped pass.

    ``matrices[v]`` holds the bits relayed in segment v; segments below
    ``k_star`` are all-zero and the matrices sum back to the input traffic.
    ``rounds`` keeps each internal water-fill solution for inspection.
    """

    matrices: tuple[np.ndarray, ...]
    k_star: int
    rounds: tuple[WaterLevels, ...] = field(default=(), compare=False)

    @property
    def size(self) -> int:
        return self.matrices[0].shape[0]

    def max_line_bits(self) -> np.ndarray:
        """Largest row or column sum of each sub-traffic-matrix."""
        out = np.empty(len(self.matrices))
        for v, m in enumerate(self.matrices):
            out[v] = max(m.sum(axis=1).max(), m.sum(axis=0).max()) if m.size else 0.0
        return out

    def combined(self) -> np.ndarray:
        return np.sum(self.matrices, axis=0)


def tapped_water_fill(traffic: TrafficMatrix, k_star: int, widths) -> StmSet:
    """Split a traffic matrix into per-segment matrices, widest window last.

    Runs one water-filling round per satellite from the last segment back
    to ``k_star``.  Round m distributes row m and column m of the traffic
    over segments m..S-1 against the heights accumulated so far ("taps"
    between segments open one at a time); the final round spreads the
    remaining top-left block over all usable segments.  Each round scales
    its row/column (or block) into the touched sub-traffic-matrices by the
    fraction of volume each segment received.
    """
    a = traffic.bits
    s = traffic.size
    w = np.asarray(widths, dtype=float)
    if w.shape != (s,):
        raise WaterfillError(f"widths must have length {s}, got shape {w.shape}")
    if not 0 <= k_star < s:
        raise WaterfillError(f"k_star must lie in [0, {s - 1}], got {k_star}")
    if np.any(w < 0):
        raise WaterfillError("widths must be non-negative")
    if np.any(w[:k_star] != 0):
        raise WaterfillError("widths before k_star must be zero")
    if traffic.total_bits > 0 and w[k_star:].sum() == 0:
        raise WaterfillError("positive traffic with all usable widths zero")

    stms = [np.zeros((s, s)) for _ in range(s)]
    heights = np.zeros(s)
    rounds = []
    allocated = 0.0
    for m in range(s - 1, k_star - 1, -1):
        if m > k_star:
            row = a[m, : m + 1].copy()
            col = a[: m + 1, m].copy()
            volume = float(row.sum() + col.sum())  # a[m, m] == 0, no overlap
            allocated += volume
        else:
            volume = traffic.total_bits - allocated
            block = a[: k_star + 1, : k_star + 1].copy()
        levels = water_fill(w[m:], heights[m:], max(volume, 0.0))
        heights[m:] += levels.added
        rounds.append(levels)
        if volume <= 0:
            continue
        for v in range(m, s):
            share = w[v] * levels.added[v - m] / volume
            if share == 0.0:
                continue
            if m > k_star:
                stms[v][m, : m + 1] += share * row
                stms[v][: m + 1, m] += share * col
            else:
                stms[v][: k_star + 1, : k_star + 1] += share * block
    for m in stms:
        m.setflags(write=False)
    return StmSet(matrices=tuple(stms), k_star=k_star, rounds=tuple(rounds))
