"""FIFO-depth design-space exploration.

Samples or enumerates depth vectors and evaluates each one with the graph
traversal. The compiled graph is immutable, so workers share the parent's
copy through fork with no serialization; each worker keeps one reusable
scratch buffer. Results are deterministic regardless of worker count.
"""

from __future__ import annotations

import json
import multiprocessing
import random
import time
from dataclasses import dataclass, field

from .graph import SimGraph
from .traversal import DepthVector, Scratch, SimResult, simulate, warm_up


class DseError(ValueError):
    pass


@dataclass(frozen=True)
class DseSpec:
    mode: str  # "explicit" | "random" | "sweep"
    parallelism: int = 1
    points: tuple[DepthVector, ...] = ()
    # random mode
    fifos: tuple[str, ...] = ()
    count: int = 0
    seed: int = 0
    depth_range: tuple[int, int] = (1, 16)
    # sweep mode
    sweep_fifo: str = ""
    sweep_range: tuple[int, int] = (1, 8)
    base: DepthVector | None = None

    def __post_init__(self):
        if self.mode not in ("explicit", "random", "sweep"):
            raise DseError(f"unknown mode {self.mode!r}")
        if self.parallelism < 1:
            raise DseError("parallelism must be >= 1")
        # Accept plain dicts for convenience; store canonical DepthVectors.
        object.__setattr__(
            self,
            "points",
            tuple(p if isinstance(p, DepthVector) else DepthVector(p) for p in self.points),
        )
        if self.base is not None and not isinstance(self.base, DepthVector):
            object.__setattr__(self, "base", DepthVector(self.base))


def sample(spec: DseSpec) -> list[DepthVector]:
    if spec.mode == "explicit":
        if not spec.points:
            raise DseError("explicit mode needs at least one point")
        return list(spec.points)
    if spec.mode == "random":
        lo, hi = spec.depth_range
        if lo < 1 or lo > hi:
            raise DseError(f"bad depth range ({lo}, {hi})")
        if spec.count < 1 or not spec.fifos:
            raise DseError("random mode needs a count and fifo ids")
        rng = random.Random(spec.seed)
        return [
            DepthVector({f: rng.randint(lo, hi) for f in spec.fifos})
            for _ in range(spec.count)
        ]
    lo, hi = spec.sweep_range
    if lo < 1 or lo > hi:
        raise DseError(f"bad sweep range ({lo}, {hi})")
    if spec.base is None or spec.sweep_fifo not in spec.base.depths:
        raise DseError("sweep mode needs a base vector containing the swept fifo")
    out = []
    for v in range(lo, hi + 1):
        depths = dict(spec.base.depths)
        depths[spec.sweep_fifo] = v
        out.append(DepthVector(depths))
    return out


@dataclass(frozen=True)
class DsePoint:
    depths: DepthVector
    result: SimResult
    micros: float


@dataclass
class DseReport:
    points: list[DsePoint]
    parallelism: int
    wall_seconds: float

    @property
    def deadlock_count(self) -> int:
        return sum(1 for p in self.points if p.result.is_deadlock)

    @property
    def best(self) -> DsePoint | None:
        live = [p for p in self.points if not p.result.is_deadlock]
        if not live:
            return None
        return min(live, key=lambda p: (p.result.cycles, p.depths.total, p.depths.key()))

    @property
    def total_point_seconds(self) -> float:
        return sum(p.micros for p in self.points) / 1e6

    @property
    def mean_point_micros(self) -> float:
        return sum(p.micros for p in self.points) / len(self.points)

    @property
    def effective_speedup(self) -> float:
        """Aggregate per-point compute time over wall time: an estimate of
        how much parallelism actually paid off."""
        return self.total_point_seconds / self.wall_seconds if self.wall_seconds else 0.0


# fork-shared state: set in the parent right before the pool is created
_shared_graph: SimGraph | None = None
_scratch: Scratch | None = None


def _eval_point(arg: tuple[int, DepthVector]):
    global _scratch
    index, depths = arg
    graph = _shared_graph
    if _scratch is None or len(_scratch.time) != graph.node_count:
        _scratch = Scratch(graph.node_count)
    t0 = time.perf_counter()
    try:
        result = simulate(graph, depths, _scratch)
    except Exception as exc:  # recorded per point, not fatal
        result = SimResult(None, None)
        micros = (time.perf_counter() - t0) * 1e6
        return index, result, micros, str(exc)
    micros = (time.perf_counter() - t0) * 1e6
    return index, result, micros, None


def evaluate(graph: SimGraph, points: list[DepthVector], parallelism: int = 1) -> DseReport:
    if not points:
        raise DseError("no points to evaluate")
    global _shared_graph
    warm_up()  # JIT once in the parent so forked workers inherit it
    _shared_graph = graph
    args = list(enumerate(points))
    t0 = time.perf_counter()
    try:
        if parallelism <= 1:
            raw = [_eval_point(a) for a in args]
        else:
            ctx = multiprocessing.get_context("fork")
            with ctx.Pool(parallelism) as pool:
                raw = list(pool.imap_unordered(_eval_point, args, chunksize=1))
    finally:
        _shared_graph = None
    wall = time.perf_counter() - t0
    raw.sort(key=lambda r: r[0])
    pts = []
    for index, result, micros, err in raw:
        if err is not None:
            raise DseError(f"point {points[index].key()}: {err}")
        pts.append(DsePoint(points[index], result, micros))
    return DseReport(pts, parallelism, wall)


def best_under_budget(report: DseReport, budget: int) -> DepthVector | None:
    """Minimum-cycles deadlock-free point with total depth within budget;
    ties prefer smaller total depth, then lexicographic fifo order."""
    live = [
        p for p in report.points
        if not p.result.is_deadlock and p.depths.total <= budget
    ]
    if not live:
        return None
    return min(live, key=lambda p: (p.result.cycles, p.depths.total, p.depths.key())).depths


def report_to_dict(report: DseReport, include_timing: bool = True) -> dict:
    doc = {
        "points": [
            {
                "depths": dict(sorted(p.depths.depths.items())),
                "cycles": p.result.cycles,
                "deadlock": p.result.is_deadlock,
                **({"micros": round(p.micros, 1)} if include_timing else {}),
            }
            for p in report.points
        ],
        "aggregate": {
            "count": len(report.points),
            "deadlock_count": report.deadlock_count,
            "min_cycles": None if report.best is None else report.best.result.cycles,
            "argmin": None if report.best is None else dict(sorted(report.best.depths.depths.items())),
            "argmin_total_depth": None if report.best is None else report.best.depths.total,
        },
    }
    if include_timing:
        doc["aggregate"].update(
            {
                "parallelism": report.parallelism,
                "wall_seconds": round(report.wall_seconds, 6),
                "total_point_seconds": round(report.total_point_seconds, 6),
                "mean_point_micros": round(report.mean_point_micros, 1),
                "effective_speedup": round(report.effective_speedup, 2),
            }
        )
    return doc


def report_to_json(report: DseReport, include_timing: bool = True) -> str:
    return json.dumps(report_to_dict(report, include_timing), sort_keys=True, indent=2) + "\n"


def report_to_csv(report: DseReport, include_timing: bool = True) -> str:
    fifos = sorted(report.points[0].depths.depths) if report.points else []
    header = fifos + ["cycles", "deadlock"] + (["micros"] if include_timing else [])
    lines = [",".join(header)]
    for p in report.points:
        row = [str(p.depths[f]) for f in fifos]
        row.append("" if p.result.is_deadlock else str(p.result.cycles))
        row.append("1" if p.result.is_deadlock else "0")
        if include_timing:
            row.append(f"{p.micros:.1f}")
        lines.append(",".join(row))
    return "\n".join(lines) + "\n"
