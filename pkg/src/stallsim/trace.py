"""Execution trace data model and loop-compressed text format.

A trace is a flat, line-oriented record of one run of a dataflow design:
basic-block executions, hardware events (FIFO/AXI traffic, calls, returns)
and fixed-bound loop regions stored once instead of once per iteration.
"""

from __future__ import annotations

from typing import Iterator, NamedTuple, Optional, TYPE_CHECKING

if TYPE_CHECKING:
    from .schedule import Schedule

TRACE_VERSION = "v1"

# Event tags that may appear both in trace records and in schedule slots.
FIFO_TAGS = ("fifo_read", "fifo_write")
AXI_TAGS = ("axi_rreq", "axi_r", "axi_wreq", "axi_w", "axi_b")
EVENT_TAGS = ("call", "return") + FIFO_TAGS + AXI_TAGS


class Event(NamedTuple):
    """One hardware event. `arg` is a fifo id, axi id or callee name."""

    tag: str
    arg: Optional[str] = None
    burst: int = 0
    last: bool = False


class Block(NamedTuple):
    block: str


class LoopBegin(NamedTuple):
    blocks: tuple[str, ...]
    tripcount: int


class LoopEnd(NamedTuple):
    pass


class EventRec(NamedTuple):
    event: Event


Record = Block | LoopBegin | LoopEnd | EventRec


class Trace(NamedTuple):
    version: str
    records: tuple[Record, ...]


class TraceError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class Violation(NamedTuple):
    """One validation finding, pointing at the offending record index."""

    index: int
    message: str


def _need(parts: list[str], n: int, line: int) -> None:
    if len(parts) != n:
        raise TraceError(f"'{parts[0]}' expects {n - 1} argument(s)", line)


def _pos_int(text: str, what: str, line: int) -> int:
    try:
        value = int(text)
    except ValueError:
        raise TraceError(f"bad {what} {text!r}", line) from None
    if value < 1:
        raise TraceError(f"{what} must be >= 1, got {value}", line)
    return value


def parse_trace(data: bytes | str) -> Trace:
    """Parse the line-oriented trace format. Raises TraceError with the
    offending line number on malformed input."""
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    lines = data.splitlines()
    if not lines:
        raise TraceError("empty trace", 1)
    header = lines[0].split("#", 1)[0].strip()
    if header != TRACE_VERSION:
        raise TraceError(f"unsupported trace version {header!r}", 1)

    records: list[Record] = []
    for lineno, raw in enumerate(lines[1:], start=2):
        text = raw.split("#", 1)[0].strip()
        if not text:
            continue
        parts = text.split()
        tag = parts[0]
        if tag == "bb":
            _need(parts, 2, lineno)
            records.append(Block(parts[1]))
        elif tag == "loop":
            if len(parts) < 3:
                raise TraceError("'loop' expects a tripcount and block ids", lineno)
            trip = _pos_int(parts[1], "tripcount", lineno)
            records.append(LoopBegin(tuple(parts[2:]), trip))
        elif tag == "end_loop":
            _need(parts, 1, lineno)
            records.append(LoopEnd())
        elif tag == "call":
            _need(parts, 2, lineno)
            records.append(EventRec(Event("call", parts[1])))
        elif tag == "return":
            _need(parts, 1, lineno)
            records.append(EventRec(Event("return")))
        elif tag in FIFO_TAGS:
            _need(parts, 2, lineno)
            records.append(EventRec(Event(tag, parts[1])))
        elif tag in ("axi_rreq", "axi_wreq"):
            _need(parts, 3, lineno)
            records.append(EventRec(Event(tag, parts[1], burst=_pos_int(parts[2], "burst", lineno))))
        elif tag in ("axi_r", "axi_w"):
            if len(parts) not in (2, 3) or (len(parts) == 3 and parts[2] != "last"):
                raise TraceError(f"'{tag}' expects an axi id and optional 'last'", lineno)
            records.append(EventRec(Event(tag, parts[1], last=len(parts) == 3)))
        elif tag == "axi_b":
            _need(parts, 2, lineno)
            records.append(EventRec(Event(tag, parts[1])))
        else:
            raise TraceError(f"unknown record tag {tag!r}", lineno)
    return Trace(TRACE_VERSION, tuple(records))


def _record_line(rec: Record) -> str:
    if isinstance(rec, Block):
        return f"bb {rec.block}"
    if isinstance(rec, LoopBegin):
        return f"loop {rec.tripcount} " + " ".join(rec.blocks)
    if isinstance(rec, LoopEnd):
        return "end_loop"
    ev = rec.event
    if ev.tag == "call":
        return f"call {ev.arg}"
    if ev.tag == "return":
        return "return"
    if ev.tag in FIFO_TAGS or ev.tag == "axi_b":
        return f"{ev.tag} {ev.arg}"
    if ev.tag in ("axi_rreq", "axi_wreq"):
        return f"{ev.tag} {ev.arg} {ev.burst}"
    # axi_r / axi_w
    return f"{ev.tag} {ev.arg} last" if ev.last else f"{ev.tag} {ev.arg}"


def write_trace(trace: Trace) -> str:
    """Serialize a trace; parse_trace(write_trace(t)) == t."""
    out = [trace.version]
    out.extend(_record_line(r) for r in trace.records)
    return "\n".join(out) + "\n"


def expand_loops(trace: Trace) -> Trace:
    """Replace every loop region by tripcount copies of its body.

    Idempotent on loop-free traces; the output contains no loop records.
    """

    def expand(records: list[Record], base_index: int) -> list[Record]:
        out: list[Record] = []
        i = 0
        while i < len(records):
            rec = records[i]
            if isinstance(rec, LoopBegin):
                depth = 1
                j = i + 1
                while j < len(records):
                    if isinstance(records[j], LoopBegin):
                        depth += 1
                    elif isinstance(records[j], LoopEnd):
                        depth -= 1
                        if depth == 0:
                            break
                    j += 1
                if depth != 0:
                    raise TraceError(f"record {base_index + i}: loop region never closed")
                body = expand(list(records[i + 1 : j]), base_index + i + 1)
                out.extend(body * rec.tripcount)
                i = j + 1
            elif isinstance(rec, LoopEnd):
                raise TraceError(f"record {base_index + i}: end_loop without loop")
            else:
                out.append(rec)
                i += 1
        return out

    return Trace(trace.version, tuple(expand(list(trace.records), 0)))


class _Cursor:
    """Index-tracking reader over trace records for validation."""

    def __init__(self, records: tuple[Record, ...]):
        self.records = records
        self.i = 0

    def peek(self) -> Record | None:
        return self.records[self.i] if self.i < len(self.records) else None

    def take(self) -> Record | None:
        rec = self.peek()
        if rec is not None:
            self.i += 1
        return rec


def validate_trace(trace: Trace, schedule: "Schedule") -> list[Violation]:
    """Structural cross-check of a trace against its schedule.

    Empty report means the trace is safe to resolve: block ids exist, event
    records pair with block slots, AXI bursts are complete, calls balance and
    every FIFO read has a matching write.
    """
    report: list[Violation] = []
    cur = _Cursor(trace.records)
    fifo_writes: dict[str, int] = {}
    fifo_reads: dict[str, int] = {}

    def bad(msg: str, index: int | None = None) -> None:
        report.append(Violation(cur.i - 1 if index is None else index, msg))

    def check_event(ev: Event) -> None:
        if ev.tag in FIFO_TAGS:
            if ev.arg not in schedule.fifos:
                bad(f"undeclared fifo {ev.arg!r}")
            elif ev.tag == "fifo_write":
                fifo_writes[ev.arg] = fifo_writes.get(ev.arg, 0) + 1
            else:
                fifo_reads[ev.arg] = fifo_reads.get(ev.arg, 0) + 1
        elif ev.tag in AXI_TAGS and ev.arg not in schedule.axis:
            bad(f"undeclared axi interface {ev.arg!r}")

    def take_block_events(fn: str, block: str, bursts: dict) -> None:
        fsched = schedule.functions[fn]
        bsched = fsched.blocks.get(block)
        if bsched is None:
            bad(f"block {block!r} not in schedule of function {fn!r}")
            return
        for slot in bsched.slots:
            rec = cur.peek()
            if not isinstance(rec, EventRec) or rec.event.tag in ("call", "return"):
                bad(f"block {block!r}: missing event for slot {slot.tag} {slot.arg}", cur.i)
                return
            cur.take()
            ev = rec.event
            if ev.tag != slot.tag or ev.arg != slot.arg:
                bad(f"event {ev.tag} {ev.arg} does not match slot {slot.tag} {slot.arg}")
            check_event(ev)
            track_burst(ev, bursts)

    def track_burst(ev: Event, bursts: dict) -> None:
        if ev.tag not in AXI_TAGS or ev.arg not in schedule.axis:
            return
        state = bursts.setdefault(ev.arg, {"r": 0, "w": 0, "w_done": False})
        if ev.tag == "axi_rreq":
            if state["r"]:
                bad(f"axi {ev.arg}: read request while burst open (underrun)")
            state["r"] = ev.burst
        elif ev.tag == "axi_r":
            if not state["r"]:
                bad(f"axi {ev.arg}: read transfer with no open request")
            else:
                state["r"] -= 1
                if ev.last != (state["r"] == 0):
                    bad(f"axi {ev.arg}: 'last' flag wrong within read burst")
        elif ev.tag == "axi_wreq":
            if state["w"]:
                bad(f"axi {ev.arg}: write request while burst open (underrun)")
            state["w"] = ev.burst
            state["w_done"] = False
        elif ev.tag == "axi_w":
            if not state["w"]:
                bad(f"axi {ev.arg}: write transfer with no open request")
            else:
                state["w"] -= 1
                if ev.last != (state["w"] == 0):
                    bad(f"axi {ev.arg}: 'last' flag wrong within write burst")
                if state["w"] == 0:
                    state["w_done"] = True
        elif ev.tag == "axi_b":
            if not state["w_done"]:
                bad(f"axi {ev.arg}: write response with no completed write burst")
            state["w_done"] = False

    def check_bursts_closed(bursts: dict, where: str) -> None:
        for axi, state in bursts.items():
            if state["r"]:
                bad(f"axi {axi}: read burst underrun at {where}", cur.i - 1)
            if state["w"]:
                bad(f"axi {axi}: write burst underrun at {where}", cur.i - 1)

    def walk_body(fn: str, bursts: dict, in_loop: bool) -> None:
        while True:
            rec = cur.peek()
            if rec is None:
                if not in_loop:
                    bad("unexpected end of trace (missing return)", cur.i)
                return
            if isinstance(rec, LoopEnd):
                if not in_loop:
                    bad("end_loop outside a loop region", cur.i)
                    cur.take()
                    continue
                return
            cur.take()
            if isinstance(rec, Block):
                take_block_events(fn, rec.block, bursts)
            elif isinstance(rec, LoopBegin):
                fsched = schedule.functions[fn]
                if rec.blocks not in fsched.loops:
                    bad(f"no loop info for blocks {' '.join(rec.blocks)} in {fn!r}")
                check_bursts_closed(bursts, "loop entry")
                walk_body(fn, bursts, in_loop=True)
                end = cur.take()
                if not isinstance(end, LoopEnd):
                    bad("loop region never closed", cur.i - 1)
                    return
                check_bursts_closed(bursts, "loop exit")
            elif isinstance(rec, EventRec):
                ev = rec.event
                if ev.tag == "call":
                    if in_loop:
                        bad("call inside a loop region")
                    if ev.arg not in schedule.functions:
                        bad(f"call to unknown function {ev.arg!r}")
                        return
                    walk_activation(ev.arg)
                elif ev.tag == "return":
                    if in_loop:
                        bad("return inside a loop region")
                    check_bursts_closed(bursts, "return")
                    return
                else:
                    bad(f"event {ev.tag} {ev.arg or ''} not tied to any block slot")
                    check_event(ev)

    def walk_activation(fn: str) -> None:
        bursts: dict = {}
        walk_body(fn, bursts, in_loop=False)

    first = cur.take()
    if not (isinstance(first, EventRec) and first.event.tag == "call"):
        bad("trace must start with a call to the top function", 0)
        return report
    if first.event.arg != schedule.top:
        bad(f"first call names {first.event.arg!r}, schedule top is {schedule.top!r}", 0)
    if first.event.arg in schedule.functions:
        walk_activation(first.event.arg)
    if cur.peek() is not None:
        bad("records after top-level return", cur.i)
    for fifo, n_reads in fifo_reads.items():
        if n_reads > fifo_writes.get(fifo, 0):
            bad(f"fifo {fifo}: {n_reads} reads but only {fifo_writes.get(fifo, 0)} writes", len(trace.records) - 1)
    return report


def iter_loop_regions(records: tuple[Record, ...]) -> Iterator[tuple[int, int, LoopBegin]]:
    """Yield (begin_index, end_index, header) for each loop region."""
    stack: list[int] = []
    for i, rec in enumerate(records):
        if isinstance(rec, LoopBegin):
            stack.append(i)
        elif isinstance(rec, LoopEnd):
            if not stack:
                raise TraceError(f"record {i}: end_loop without loop")
            begin = stack.pop()
            yield begin, i, records[begin]  # type: ignore[misc]
    if stack:
        raise TraceError(f"record {stack[-1]}: loop region never closed")
