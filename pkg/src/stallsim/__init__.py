"""Cycle-count simulation for dataflow hardware designs.

Pipeline: parse a loop-compressed execution trace and a static schedule,
resolve events to dynamic stages, compile them once into a depth-agnostic
dependency graph, then answer "how many cycles at these FIFO depths?" with a
single longest-path traversal per depth vector (or a deadlock witness).
"""

from .dse import DseReport, DseSpec, best_under_budget, evaluate, sample
from .generator import Design, GenParams, gen_design
from .graph import (
    CompilerConfig,
    Edge,
    FloatingEdge,
    GraphError,
    GraphStats,
    SimGraph,
    compile,
    dump_graph,
    load_graph,
)
from .oracle import OracleError, simulate_events
from .schedule import (
    AxiParams,
    ResolveError,
    ResolvedEvent,
    Schedule,
    ScheduleError,
    loop_end_stage,
    parse_schedule,
    resolve,
    write_schedule,
)
from .trace import (
    Trace,
    TraceError,
    Violation,
    expand_loops,
    parse_trace,
    validate_trace,
    write_trace,
)
from .traversal import (
    DepthVector,
    SimResult,
    TraversalError,
    critical_path,
    resolve_floating,
    simulate,
)

__version__ = "0.1.0"

__all__ = [
    "AxiParams",
    "CompilerConfig",
    "DepthVector",
    "Design",
    "DseReport",
    "DseSpec",
    "Edge",
    "FloatingEdge",
    "GenParams",
    "GraphError",
    "GraphStats",
    "OracleError",
    "ResolveError",
    "ResolvedEvent",
    "Schedule",
    "ScheduleError",
    "SimGraph",
    "SimResult",
    "Trace",
    "TraceError",
    "TraversalError",
    "Violation",
    "best_under_budget",
    "compile",
    "critical_path",
    "dump_graph",
    "evaluate",
    "expand_loops",
    "gen_design",
    "load_graph",
    "loop_end_stage",
    "parse_schedule",
    "parse_trace",
    "resolve",
    "resolve_floating",
    "sample",
    "simulate",
    "simulate_events",
    "validate_trace",
    "write_schedule",
    "write_trace",
]
