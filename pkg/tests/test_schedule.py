from __future__ import annotations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stallsim import (
    ResolveError,
    ScheduleError,
    expand_loops,
    loop_end_stage,
    parse_schedule,
    parse_trace,
    resolve,
    write_schedule,
)
from stallsim.generator import GenParams, backpressure_design, gen_design
from stallsim.schedule import LoopInfo

SCHED = """\
top top
fifo f0
fn top
block t len=1
end_fn
fn m
block a len=3 slot 1 fifo_write f0
block b len=2 slot 0 fifo_read f0
loopinfo a pipelined=1 ii=1 overlap=2
end_fn
"""


def test_parse_write_round_trip():
    sched = parse_schedule(SCHED)
    assert parse_schedule(write_schedule(sched)) == sched
    # Writing is canonical: writing twice gives identical text.
    once = write_schedule(sched)
    assert write_schedule(parse_schedule(once)) == once


def test_parse_errors():
    with pytest.raises(ScheduleError):
        parse_schedule("fn m\nblock a len=1\nend_fn\n")  # no top
    with pytest.raises(ScheduleError):
        parse_schedule("top nope\nfn m\nblock a len=1\nend_fn\n")  # unknown top
    with pytest.raises(ScheduleError):
        parse_schedule("top m\nfn m\nblock a len=1 slot 5 fifo_read f0\nend_fn\n")
    with pytest.raises(ScheduleError):
        # overlap must be at least span-1 for a pipelined loop
        parse_schedule(
            "top m\nfifo f0\nfn m\nblock a len=3 slot 0 fifo_read f0\n"
            "loopinfo a pipelined=1 ii=1 overlap=0\nend_fn\n"
        )


@pytest.mark.parametrize(
    "info, start, trip, header_len, expected",
    [
        # Pipelined: start + overlap + ii*(trip-1) + header_len.
        (LoopInfo(True, 1, 0), 1, 4, 1, 5),
        (LoopInfo(True, 2, 0), 1, 4, 1, 8),
        (LoopInfo(True, 1, 2), 5, 3, 3, 12),
        # Non-pipelined: start + overlap + (overlap+1)*(trip-1) + header_len.
        (LoopInfo(False, 1, 0), 1, 4, 1, 5),
        (LoopInfo(False, 1, 2), 2, 3, 3, 13),
    ],
)
def test_loop_end_stage_frozen(info, start, trip, header_len, expected):
    assert loop_end_stage(start, info, trip, header_len) == expected


def test_loop_end_stage_monotone_in_tripcount():
    for info in (LoopInfo(True, 3, 4), LoopInfo(False, 1, 4)):
        ends = [loop_end_stage(2, info, t, 5) for t in range(1, 20)]
        assert ends == sorted(ends)
        assert len(set(ends)) == len(ends)


def test_resolve_single_block_event_stage():
    sched = parse_schedule(
        "top top\nfifo f0\nfn top\nblock t len=1\nend_fn\n"
        "fn m\nblock a len=3 slot 2 fifo_write f0\nend_fn\n"
    )
    trace = parse_trace("v1\ncall top\nbb t\ncall m\nbb a\nfifo_write f0\nreturn\nreturn\n")
    events = list(resolve(trace, sched))
    ev = [e for e in events if e.kind.tag == "fifo_write"]
    assert len(ev) == 1
    # Block starts at stage 1 of the activation; slot 2 lands at dynamic stage 3.
    assert ev[0].dyn_stage == 3
    assert ev[0].module == "m"


def test_resolve_pipelined_write_stages():
    sched = parse_schedule(
        "top top\nfifo f0\nfn top\nblock t len=1\nend_fn\n"
        "fn m\nblock a len=1 slot 0 fifo_write f0\n"
        "loopinfo a pipelined=1 ii=1 overlap=0\nend_fn\n"
    )
    trace = parse_trace(
        "v1\ncall top\nbb t\ncall m\nloop 3 a\nbb a\nfifo_write f0\nend_loop\nreturn\nreturn\n"
    )
    events = [e for e in resolve(trace, sched) if e.kind.tag == "fifo_write"]
    assert [e.dyn_stage for e in events] == [1, 2, 3]
    # Commit bound: static stage never decreases the floor below the iteration base.
    assert [e.static_stage for e in events] == [0, 0, 0]


def test_resolve_nonpipelined_iterations_do_not_overlap():
    sched = parse_schedule(
        "top top\nfifo f0\nfn top\nblock t len=1\nend_fn\n"
        "fn m\nblock a len=2 slot 1 fifo_write f0\n"
        "loopinfo a pipelined=0 ii=1 overlap=1\nend_fn\n"
    )
    trace = parse_trace(
        "v1\ncall top\nbb t\ncall m\nloop 3 a\nbb a\nfifo_write f0\nend_loop\nreturn\nreturn\n"
    )
    events = [e for e in resolve(trace, sched) if e.kind.tag == "fifo_write"]
    assert [e.dyn_stage for e in events] == [2, 4, 6]


def test_resolve_compressed_equals_expanded(backpressure):
    comp = list(resolve(backpressure.trace, backpressure.schedule))
    expa = list(resolve(expand_loops(backpressure.trace), backpressure.schedule))
    assert comp == expa


@settings(max_examples=25, deadline=None)
@given(st.integers(min_value=0, max_value=10_000))
def test_resolve_compressed_equals_expanded_generated(seed):
    design = gen_design(GenParams(seed=seed))
    comp = list(resolve(design.trace, design.schedule))
    expa = list(resolve(expand_loops(design.trace), design.schedule))
    assert comp == expa


def test_resolve_dyn_stage_monotone_per_instance(small_corpus):
    for design in small_corpus:
        last: dict[tuple, int] = {}
        floors: dict[tuple, int] = {}
        for ev in resolve(design.trace, design.schedule):
            assert ev.static_stage >= 0
            assert ev.dyn_stage >= 1
            prev = last.get(ev.instance, 0)
            # Events within one activation may interleave across pipelined
            # iterations, but the commit floor can never move backward.
            floor = ev.dyn_stage - ev.static_stage
            assert floor >= floors.get(ev.instance, 0)
            floors[ev.instance] = floor
            last[ev.instance] = max(prev, ev.dyn_stage)


def test_resolve_unknown_callee():
    sched = parse_schedule("top top\nfn top\nblock t len=1\nend_fn\n")
    trace = parse_trace("v1\ncall top\nbb t\ncall ghost\nreturn\nreturn\n")
    with pytest.raises(ResolveError):
        list(resolve(trace, sched))


def test_resolve_block_not_in_schedule():
    sched = parse_schedule("top top\nfn top\nblock t len=1\nend_fn\n")
    trace = parse_trace("v1\ncall top\nbb ghost\nreturn\n")
    with pytest.raises(ResolveError):
        list(resolve(trace, sched))
