"""Depth-aware longest-path traversal of a simulation graph.

For a given FIFO depth vector, each floating write-after-read edge either
disappears (depth covers the write) or binds to a concrete read node; the
completion time of every node is then the maximum over in-edges of source
time plus delay. Back edges introduced by bound floating edges can form a
cycle, which is reported as a deadlock with the cycle as witness.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np
from numba import njit

from .graph import FloatingEdge, SimGraph


class TraversalError(ValueError):
    pass


@dataclass(frozen=True)
class DepthVector:
    depths: Mapping[str, int]

    def __post_init__(self):
        object.__setattr__(self, "depths", dict(self.depths))
        for fifo, d in self.depths.items():
            if d < 1:
                raise ValueError(f"fifo {fifo!r}: depth must be >= 1, got {d}")

    @property
    def total(self) -> int:
        return sum(self.depths.values())

    def __getitem__(self, fifo: str) -> int:
        return self.depths[fifo]

    def key(self) -> tuple[tuple[str, int], ...]:
        return tuple(sorted(self.depths.items()))


@dataclass(frozen=True)
class SimResult:
    cycles: int | None
    witness: tuple[int, ...] | None = None

    @property
    def is_deadlock(self) -> bool:
        return self.cycles is None


def resolve_floating(graph: SimGraph, edge: FloatingEdge, depths: DepthVector) -> int | None:
    """Source node the floating edge binds to under `depths`, or None if the
    FIFO is deep enough that the write never waits."""
    d = depths[edge.fifo]
    if edge.write_seq <= d:
        return None
    fi = graph.fifo_index(edge.fifo)
    pos = graph.reads_off[fi] + (edge.write_seq - d - 1)
    if pos >= graph.reads_off[fi + 1]:
        raise TraversalError(
            f"fifo {edge.fifo}: write {edge.write_seq} waits on read {edge.write_seq - d}, "
            "which does not exist"
        )
    return int(graph.reads_flat[pos])


def _depth_array(graph: SimGraph, depths: DepthVector) -> np.ndarray:
    if set(depths.depths) != set(graph.fifos):
        missing = set(graph.fifos) - set(depths.depths)
        extra = set(depths.depths) - set(graph.fifos)
        raise TraversalError(
            f"depth vector does not match graph fifos (missing={sorted(missing)}, extra={sorted(extra)})"
        )
    return np.asarray([depths[f] for f in graph.fifos], dtype=np.int64)


def _bind_floating(graph: SimGraph, darr: np.ndarray):
    """Vectorized binding of all floating edges for one depth vector.

    Returns (f_off, f_src, f_delay): a CSR of extra in-edges per target node,
    target-sorted because the stored floating edges are.
    """
    d_per = darr[graph.float_fifo]
    mask = graph.float_seq > d_per
    tgt = graph.float_target[mask]
    pos = graph.reads_off[graph.float_fifo[mask]] + (graph.float_seq[mask] - d_per[mask] - 1)
    if np.any(pos >= graph.reads_off[graph.float_fifo[mask] + 1]):
        raise TraversalError("floating edge waits on a read that does not exist")
    src = graph.reads_flat[pos]
    delay = graph.float_delay[mask]
    f_off = np.zeros(graph.node_count + 1, dtype=np.int64)
    np.cumsum(np.bincount(tgt, minlength=graph.node_count), out=f_off[1:])
    return f_off, src.astype(np.int64), delay


@njit(cache=True, nogil=True)
def _longest_path(in_off, in_src, in_delay, f_off, f_src, f_delay, end, time, color, ptr, stack, witness):
    # iterative reverse depth-first search from the end node;
    # color: 0 unvisited, 1 on stack, 2 finished
    sp = 0
    stack[sp] = end
    sp = 1
    color[end] = 1
    while sp > 0:
        v = stack[sp - 1]
        c0 = in_off[v]
        nc = in_off[v + 1] - c0
        g0 = f_off[v]
        total = nc + (f_off[v + 1] - g0)
        advanced = False
        while ptr[v] < total:
            i = ptr[v]
            ptr[v] += 1
            if i < nc:
                u = in_src[c0 + i]
            else:
                u = f_src[g0 + (i - nc)]
            cu = color[u]
            if cu == 0:
                color[u] = 1
                stack[sp] = u
                sp += 1
                advanced = True
                break
            if cu == 1:
                # u is on the stack: the segment from u to v is a cycle
                idx = sp - 1
                while stack[idx] != u:
                    idx -= 1
                m = sp - idx
                for j in range(m):
                    witness[j] = stack[sp - 1 - j]
                return 1, m
        if not advanced:
            t = 0
            for e in range(c0, in_off[v + 1]):
                tt = time[in_src[e]] + in_delay[e]
                if tt > t:
                    t = tt
            for e in range(g0, f_off[v + 1]):
                tt = time[f_src[e]] + f_delay[e]
                if tt > t:
                    t = tt
            time[v] = t
            color[v] = 2
            sp -= 1
    return 0, 0


class Scratch:
    """Reusable per-worker buffers so repeated runs allocate nothing."""

    def __init__(self, node_count: int):
        self.time = np.zeros(node_count, dtype=np.int64)
        self.color = np.zeros(node_count, dtype=np.int8)
        self.ptr = np.zeros(node_count, dtype=np.int64)
        self.stack = np.zeros(node_count, dtype=np.int64)
        self.witness = np.zeros(node_count, dtype=np.int64)

    def reset(self):
        self.time[:] = 0
        self.color[:] = 0
        self.ptr[:] = 0


def simulate(graph: SimGraph, depths: DepthVector, scratch: Scratch | None = None) -> SimResult:
    """Cycle count of the design under `depths`, or a deadlock witness."""
    darr = _depth_array(graph, depths)
    f_off, f_src, f_delay = _bind_floating(graph, darr)
    if scratch is None:
        scratch = Scratch(graph.node_count)
    else:
        scratch.reset()
    status, wlen = _longest_path(
        graph.in_off, graph.in_src, graph.in_delay,
        f_off, f_src, f_delay,
        graph.end,
        scratch.time, scratch.color, scratch.ptr, scratch.stack, scratch.witness,
    )
    if status == 1:
        return SimResult(None, tuple(int(x) for x in scratch.witness[:wlen]))
    return SimResult(int(scratch.time[graph.end]))


def node_times(graph: SimGraph, depths: DepthVector) -> np.ndarray:
    """Completion time of every node reachable from the end node (0 for
    unreachable nodes). Raises on deadlock."""
    scratch = Scratch(graph.node_count)
    darr = _depth_array(graph, depths)
    f_off, f_src, f_delay = _bind_floating(graph, darr)
    status, _ = _longest_path(
        graph.in_off, graph.in_src, graph.in_delay,
        f_off, f_src, f_delay,
        graph.end,
        scratch.time, scratch.color, scratch.ptr, scratch.stack, scratch.witness,
    )
    if status == 1:
        raise TraversalError("deadlock: no node times")
    return scratch.time


def critical_path(graph: SimGraph, depths: DepthVector) -> list[int]:
    """One chain of nodes from an in-degree-0 node to the end node on which
    every edge is tight (source time + delay == target time)."""
    darr = _depth_array(graph, depths)
    f_off, f_src, f_delay = _bind_floating(graph, darr)
    time = node_times(graph, depths)
    path = [graph.end]
    v = graph.end
    while True:
        best = -1
        for e in range(graph.in_off[v], graph.in_off[v + 1]):
            u = int(graph.in_src[e])
            if time[u] + graph.in_delay[e] == time[v] and (best < 0 or u < best):
                best = u
        for e in range(f_off[v], f_off[v + 1]):
            u = int(f_src[e])
            if time[u] + f_delay[e] == time[v] and (best < 0 or u < best):
                best = u
        if best < 0:
            break
        path.append(best)
        v = best
    path.reverse()
    return path


def warm_up() -> None:
    """Force JIT compilation of the traversal kernel on a 2-node graph."""
    in_off = np.array([0, 0, 1], dtype=np.int64)
    in_src = np.array([0], dtype=np.int64)
    in_delay = np.array([1], dtype=np.int64)
    f_off = np.zeros(3, dtype=np.int64)
    empt = np.zeros(0, dtype=np.int64)
    s = Scratch(2)
    _longest_path(in_off, in_src, in_delay, f_off, empt, empt, 1,
                  s.time, s.color, s.ptr, s.stack, s.witness)
