from __future__ import annotations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stallsim import (
    TraceError,
    expand_loops,
    parse_schedule,
    parse_trace,
    validate_trace,
    write_trace,
)
from stallsim.trace import Block, EventRec, LoopBegin, LoopEnd

FIG3_TRACE = """\
v1
call top
bb top_entry
call producer
loop 4 p_body
bb p_body
fifo_write f0
end_loop
bb p_tail
return
call consumer
loop 4 c_body
bb c_body
fifo_read f0
end_loop
return
return
"""


def test_parse_write_round_trip():
    trace = parse_trace(FIG3_TRACE)
    assert write_trace(trace) == FIG3_TRACE
    assert parse_trace(write_trace(trace)) == trace


def test_parse_accepts_bytes_and_blank_lines():
    noisy = FIG3_TRACE.replace("call producer\n", "call producer\n\n")
    assert parse_trace(noisy.encode()) == parse_trace(FIG3_TRACE)


def test_expand_loops_unrolls_bodies():
    trace = parse_trace(FIG3_TRACE)
    expanded = expand_loops(trace)
    # 4 iterations of each single-block loop body (block + one event).
    blocks = [r.block for r in expanded.records if isinstance(r, Block)]
    assert blocks.count("p_body") == 4
    assert blocks.count("c_body") == 4
    assert not any(isinstance(r, (LoopBegin, LoopEnd)) for r in expanded.records)


def test_expand_loops_idempotent():
    trace = parse_trace(FIG3_TRACE)
    expanded = expand_loops(trace)
    assert expand_loops(expanded) == expanded


def test_expand_nested_loop_counts():
    text = (
        "v1\ncall top\nbb t\ncall m\n"
        "loop 3 outer_h outer_t\nbb outer_h\n"
        "loop 5 inner\nbb inner\nfifo_write f0\nend_loop\n"
        "bb outer_t\nend_loop\nreturn\nreturn\n"
    )
    expanded = expand_loops(parse_trace(text))
    blocks = [r.block for r in expanded.records if isinstance(r, Block)]
    assert blocks.count("inner") == 15
    assert blocks.count("outer_h") == 3
    events = [r for r in expanded.records if isinstance(r, EventRec)]
    writes = [r for r in events if r.event.tag == "fifo_write"]
    assert len(writes) == 15


def test_compression_ratio_bound():
    """A tripcount-N loop costs O(body) compressed lines, O(N*body) expanded."""
    n = 10_000
    text = (
        f"v1\ncall top\nbb t\ncall m\nloop {n} b\nbb b\nfifo_write f0\n"
        "end_loop\nreturn\nreturn\n"
    )
    trace = parse_trace(text)
    compressed_lines = len(write_trace(trace).splitlines())
    expanded_lines = len(write_trace(expand_loops(trace)).splitlines())
    assert compressed_lines <= expanded_lines * 0.01


@pytest.mark.parametrize(
    "text, fragment",
    [
        ("", "empty"),
        ("v2\nbb a\n", "version"),
        ("v1\nbogus a\n", "line 2"),
        ("v1\nloop x b\n", "line 2"),
        ("v1\nloop 3\n", "line 2"),
        ("v1\nfifo_read\n", "line 2"),
        ("v1\naxi_rreq a\n", "line 2"),
        ("v1\naxi_rreq a x\n", "line 2"),
        ("v1\naxi_r a maybe\n", "line 2"),
    ],
)
def test_parse_errors(text, fragment):
    with pytest.raises(TraceError) as exc:
        parse_trace(text)
    assert fragment in str(exc.value)


CROSS_SCHED = """\
top top
fifo f0
axi a0 read_latency=4 write_resp_latency=2 rctl_depth=2 request_overhead=1
fn top
block t len=1
end_fn
fn m
block b len=4 slot 0 fifo_write f0 slot 1 axi_rreq a0 slot 2 axi_r a0 slot 3 axi_r a0
end_fn
"""


def _validate(trace_text: str):
    sched = parse_schedule(CROSS_SCHED)
    return validate_trace(parse_trace(trace_text), sched)


def test_validate_clean():
    text = "v1\ncall top\nbb t\ncall m\nbb b\nfifo_write f0\naxi_rreq a0 2\naxi_r a0\naxi_r a0 last\nreturn\nreturn\n"
    assert _validate(text) == []


def test_validate_unknown_names():
    text = "v1\ncall top\nbb t\ncall m\nbb b\nfifo_write nope\nreturn\nreturn\n"
    violations = _validate(text)
    assert violations and any("nope" in v.message for v in violations)


def test_validate_open_burst_at_return():
    text = "v1\ncall top\nbb t\ncall m\nbb b\naxi_rreq a0 2\naxi_r a0\nreturn\nreturn\n"
    violations = _validate(text)
    assert violations
    assert all(isinstance(v.index, int) for v in violations)


def test_validate_burst_overrun_and_last_flag():
    over = "v1\ncall top\nbb t\ncall m\nbb b\naxi_rreq a0 1\naxi_r a0 last\naxi_r a0 last\nreturn\nreturn\n"
    assert _validate(over)
    nolast = "v1\ncall top\nbb t\ncall m\nbb b\naxi_rreq a0 2\naxi_r a0 last\naxi_r a0\nreturn\nreturn\n"
    assert _validate(nolast)


def test_validate_call_inside_loop_rejected():
    text = "v1\ncall top\nbb t\ncall m\nloop 2 b\nbb b\ncall m\nreturn\nend_loop\nreturn\nreturn\n"
    assert _validate(text)


def test_validate_loop_structure():
    dangling = "v1\ncall top\nbb t\nend_loop\nreturn\n"
    assert any("loop" in v.message for v in _validate(dangling))
    unclosed = "v1\ncall top\nbb t\ncall m\nloop 2 b\nbb b\nreturn\nreturn\n"
    assert any("loop" in v.message for v in _validate(unclosed))


_tags = st.sampled_from(["fifo_read", "fifo_write"])


@st.composite
def _tiny_traces(draw):
    lines = ["v1", "call top", "bb t", "call m"]
    body = draw(st.lists(_tags, min_size=0, max_size=6))
    lines.append("bb b")
    lines.extend(f"{tag} f0" for tag in body)
    trip = draw(st.integers(min_value=1, max_value=9))
    loop_body = draw(st.lists(_tags, min_size=0, max_size=3))
    lines.append(f"loop {trip} lb")
    lines.append("bb lb")
    lines.extend(f"{tag} f1" for tag in loop_body)
    lines.append("end_loop")
    lines.extend(["return", "return"])
    return "\n".join(lines) + "\n"


@settings(max_examples=60, deadline=None)
@given(_tiny_traces())
def test_round_trip_property(text):
    trace = parse_trace(text)
    assert write_trace(trace) == text
    expanded = expand_loops(trace)
    assert parse_trace(write_trace(expanded)) == expanded
