from __future__ import annotations

import pytest

from stallsim import (
    CompilerConfig,
    DepthVector,
    compile as compile_graph,
    gen_design,
    parse_schedule,
    parse_trace,
    resolve,
    simulate,
    simulate_events,
)
from stallsim.generator import Design, GenParams, cross_design, backpressure_design


def build_graph(design: Design, *, eliminate: bool = True):
    config = CompilerConfig(eliminate=eliminate)
    events = list(resolve(design.trace, design.schedule))
    return compile_graph(events, design.schedule, config)


def run_both(design: Design, depths: dict[str, int], *, eliminate: bool = True):
    """Run the graph simulator and the event oracle; return both results."""
    dv = DepthVector(depths)
    config = CompilerConfig(eliminate=eliminate)
    events = list(resolve(design.trace, design.schedule))
    graph = compile_graph(events, design.schedule, config)
    return simulate(graph, dv), simulate_events(events, design.schedule, dv, config)


def make_design(schedule_text: str, trace_text: str) -> Design:
    return Design(schedule_text=schedule_text, trace_text=trace_text, tokens={})


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = next(
        (m for name, m in sys.modules.items() if name.endswith("test_acceptance")),
        None,
    )
    if mod is None:
        return
    CRITERION_LINES = getattr(mod, "CRITERION_LINES", [])
    if CRITERION_LINES:
        terminalreporter.section("acceptance criteria")
        for line in CRITERION_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def backpressure():
    return backpressure_design()


@pytest.fixture(scope="session")
def backpressure_graph(backpressure):
    return build_graph(backpressure)


@pytest.fixture(scope="session")
def cross():
    return cross_design()


@pytest.fixture(scope="session")
def small_corpus():
    """A deterministic batch of generated designs for cross-module checks."""
    return [gen_design(GenParams(seed=1000 + i)) for i in range(40)]
