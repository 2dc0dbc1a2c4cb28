"""Piecewise-constant weighted digraphs with the exosystem as node 0."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

__all__ = [
    "WeightedDigraph",
    "TopologySchedule",
    "LaplacianPair",
    "UndecidableError",
    "laplacian",
    "union_digraph",
    "is_globally_reachable",
    "check_uniform_reachability",
]

ALPHA_MIN = 0.1


class UndecidableError(ValueError):
    """Raised when a reachability question has no finite answer."""


class LaplacianPair(NamedTuple):
    L: np.ndarray
    L_minus: np.ndarray


@dataclass(frozen=True)
class WeightedDigraph:
    """Weighted digraph on nodes ``0..N``.

    ``weights[i, j]`` is the weight on edge ``j -> i`` (information flows
    from ``j`` to ``i``).  Node 0 never has in-edges.
    """

    weights: np.ndarray
    alpha_min: float = ALPHA_MIN

    def __post_init__(self):
        W = np.array(self.weights, dtype=float)
        if W.ndim != 2 or W.shape[0] != W.shape[1]:
            raise ValueError(f"weights must be square, got shape {W.shape}")
        if np.any(W < 0):
            raise ValueError("weights must be nonnegative")
        if np.any(np.diag(W) != 0):
            raise ValueError("self-loops are not allowed")
        if np.any(W[0] != 0):
            raise ValueError("node 0 (exosystem) cannot have in-edges")
        nz = W[W > 0]
        if nz.size and nz.min() < self.alpha_min:
            raise ValueError(f"nonzero weight {nz.min()} below alpha_min={self.alpha_min}")
        W.setflags(write=False)
        object.__setattr__(self, "weights", W)

    @classmethod
    def from_edges(cls, node_count: int, edges, alpha_min: float = ALPHA_MIN):
        """Build from ``(src, dst, weight)`` triples."""
        W = np.zeros((node_count, node_count))
        for src, dst, w in edges:
            W[dst, src] = w
        return cls(W, alpha_min)

    @property
    def node_count(self) -> int:
        return self.weights.shape[0]

    def edges(self):
        dst, src = np.nonzero(self.weights)
        return [(int(s), int(d), float(self.weights[d, s])) for s, d in zip(src, dst)]

    def edge_set(self):
        return {(s, d) for s, d, _ in self.edges()}

    def __eq__(self, other):
        if not isinstance(other, WeightedDigraph):
            return NotImplemented
        return np.array_equal(self.weights, other.weights) and self.alpha_min == other.alpha_min

    __hash__ = None


@dataclass(frozen=True)
class TopologySchedule:
    """Sequence of ``(duration, graph)`` segments, optionally repeated forever.

    A non-repeating schedule keeps its last graph after the final segment.
    """

    segments: tuple
    repeat: bool = True

    def __post_init__(self):
        segs = tuple((float(d), g) for d, g in self.segments)
        if not segs:
            raise ValueError("schedule needs at least one segment")
        if any(d <= 0 for d, _ in segs):
            raise ValueError("segment durations must be positive")
        counts = {g.node_count for _, g in segs}
        if len(counts) != 1:
            raise ValueError("all graphs in a schedule must share node_count")
        object.__setattr__(self, "segments", segs)

    @property
    def node_count(self) -> int:
        return self.segments[0][1].node_count

    @property
    def period(self) -> float:
        return float(sum(d for d, _ in self.segments))

    @property
    def starts(self) -> np.ndarray:
        return np.concatenate([[0.0], np.cumsum([d for d, _ in self.segments])[:-1]])

    def segment_index(self, t: float) -> int:
        """Index of the segment active at time ``t`` (segments are ``[start, end)``)."""
        if t < 0:
            raise ValueError("t must be nonnegative")
        period = self.period
        if self.repeat:
            t = t % period
        elif t >= period:
            return len(self.segments) - 1
        ends = np.cumsum([d for d, _ in self.segments])
        return int(min(np.searchsorted(ends, t, side="right"), len(self.segments) - 1))

    def graph_at(self, t: float) -> WeightedDigraph:
        return self.segments[self.segment_index(t)][1]

    def _segments_overlapping(self, t1, t2):
        """Graphs whose active interval overlaps ``(t1, t2)`` with positive length."""
        out = []
        period = self.period
        durations = [d for d, _ in self.segments]
        if self.repeat:
            cycle0 = int(np.floor(t1 / period))
            cycle1 = int(np.floor(t2 / period))
            cycles = range(cycle0, cycle1 + 1)
        else:
            cycles = [0]
        for c in cycles:
            start = c * period
            for idx, d in enumerate(durations):
                end = start + d
                if not self.repeat and idx == len(durations) - 1:
                    end = np.inf
                if min(end, t2) - max(start, t1) > 0:
                    out.append(self.segments[idx][1])
                start += d
        return out

    def __eq__(self, other):
        if not isinstance(other, TopologySchedule):
            return NotImplemented
        return self.repeat == other.repeat and len(self.segments) == len(other.segments) and all(
            d1 == d2 and g1 == g2 for (d1, g1), (d2, g2) in zip(self.segments, other.segments)
        )

    __hash__ = None


def laplacian(g: WeightedDigraph) -> LaplacianPair:
    """Row-sum-zero Laplacian ``L = diag(W 1) - W`` and its node-0-deleted block."""
    W = g.weights
    L = np.diag(W.sum(axis=1)) - W
    return LaplacianPair(L, L[1:, 1:].copy())


def union_digraph(s: TopologySchedule, t1: float, t2: float) -> WeightedDigraph:
    """Union of all graphs active on ``[t1, t2]``; weights are the segment maxima."""
    if not t1 < t2:
        raise ValueError(f"invalid interval [{t1}, {t2}]")
    graphs = s._segments_overlapping(t1, t2)
    W = np.max(np.stack([g.weights for g in graphs]), axis=0)
    return WeightedDigraph(W, graphs[0].alpha_min)


def is_globally_reachable(g: WeightedDigraph, root: int = 0) -> bool:
    """True iff every node can be reached from ``root`` along directed edges."""
    n = g.node_count
    if not 0 <= root < n:
        raise ValueError(f"root {root} out of range")
    # weights[i, j] > 0 means j -> i
    adj = g.weights.T > 0
    seen = np.zeros(n, dtype=bool)
    seen[root] = True
    queue = deque([root])
    while queue:
        u = queue.popleft()
        for v in np.flatnonzero(adj[u] & ~seen):
            seen[v] = True
            queue.append(v)
    return bool(seen.all())


def check_uniform_reachability(s: TopologySchedule, T: float, horizon: float | None = None) -> bool:
    """Check that node 0 is globally reachable in every window ``[t1, t1 + T]``.

    For a repeating schedule the windows starting at segment boundaries of
    one period cover all cases: the union only shrinks when the left end
    passes a segment boundary.  A non-repeating schedule needs a finite
    ``horizon`` for the left end; otherwise :class:`UndecidableError` is raised.
    """
    if T <= 0:
        raise ValueError("T must be positive")
    if s.repeat:
        starts = list(s.starts)
    else:
        if horizon is None:
            raise UndecidableError("non-repeating schedule: reachability undecidable beyond horizon")
        starts = [t for t in s.starts if t <= horizon]
    return all(is_globally_reachable(union_digraph(s, t1, t1 + T), 0) for t1 in starts)
