"""Static schedule model and schedule resolution.

The schedule assigns every basic block a stage count and every event a
static stage inside its block. Resolution replays a trace against the
schedule and emits each event at its dynamic stage within its module
instance, applying pipelined / non-pipelined loop stage arithmetic.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, NamedTuple

from .trace import (
    AXI_TAGS,
    FIFO_TAGS,
    Block,
    Event,
    EventRec,
    LoopBegin,
    LoopEnd,
    Trace,
)

SLOT_TAGS = FIFO_TAGS + AXI_TAGS


class ScheduleError(ValueError):
    pass


class Slot(NamedTuple):
    stage: int  # 0-based offset within the block
    tag: str
    arg: str  # fifo or axi id


@dataclass(frozen=True)
class BlockSchedule:
    length: int
    slots: tuple[Slot, ...] = ()


@dataclass(frozen=True)
class LoopInfo:
    pipelined: bool
    ii: int
    overlap: int


@dataclass(frozen=True)
class AxiParams:
    read_latency: int = 64
    write_resp_latency: int = 4
    rctl_depth: int = 16
    request_overhead: int = 2


@dataclass(frozen=True)
class FunctionSchedule:
    blocks: dict[str, BlockSchedule] = field(default_factory=dict)
    loops: dict[tuple[str, ...], LoopInfo] = field(default_factory=dict)


@dataclass(frozen=True)
class Schedule:
    top: str
    functions: dict[str, FunctionSchedule]
    fifos: frozenset[str]
    axis: dict[str, AxiParams]

    def fifo_order(self) -> list[str]:
        return sorted(self.fifos)


class ResolvedEvent(NamedTuple):
    """An event bound to (module instance, dynamic stage).

    `static_stage` is the offset of the event above its commit floor: no
    later event of the same activation can land below
    dyn_stage - static_stage.
    """

    instance: tuple[int, ...]
    module: str
    dyn_stage: int
    static_stage: int
    kind: Event


def _kv(parts: list[str], lineno: int) -> dict[str, str]:
    out = {}
    for p in parts:
        if "=" not in p:
            raise ScheduleError(f"line {lineno}: expected key=value, got {p!r}")
        k, v = p.split("=", 1)
        out[k] = v
    return out


def parse_schedule(data: bytes | str) -> Schedule:
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    top: str | None = None
    fifos: set[str] = set()
    axis: dict[str, AxiParams] = {}
    functions: dict[str, FunctionSchedule] = {}
    cur_fn: str | None = None
    cur_blocks: dict[str, BlockSchedule] = {}
    cur_loops: dict[tuple[str, ...], LoopInfo] = {}

    for lineno, raw in enumerate(data.splitlines(), start=1):
        text = raw.split("#", 1)[0].strip()
        if not text:
            continue
        parts = text.split()
        tag = parts[0]
        if tag == "top":
            if top is not None:
                raise ScheduleError(f"line {lineno}: duplicate top")
            top = parts[1]
        elif tag == "fifo":
            if parts[1] in fifos:
                raise ScheduleError(f"line {lineno}: duplicate fifo {parts[1]!r}")
            fifos.add(parts[1])
        elif tag == "axi":
            name = parts[1]
            if name in axis:
                raise ScheduleError(f"line {lineno}: duplicate axi {name!r}")
            kv = _kv(parts[2:], lineno)
            axis[name] = AxiParams(
                read_latency=int(kv.get("read_latency", 64)),
                write_resp_latency=int(kv.get("write_resp_latency", 4)),
                rctl_depth=int(kv.get("rctl_depth", 16)),
                request_overhead=int(kv.get("request_overhead", 2)),
            )
            if axis[name].rctl_depth < 1:
                raise ScheduleError(f"line {lineno}: rctl_depth must be >= 1")
        elif tag == "fn":
            if cur_fn is not None:
                raise ScheduleError(f"line {lineno}: nested fn")
            cur_fn = parts[1]
            if cur_fn in functions:
                raise ScheduleError(f"line {lineno}: duplicate function {cur_fn!r}")
            cur_blocks, cur_loops = {}, {}
        elif tag == "end_fn":
            if cur_fn is None:
                raise ScheduleError(f"line {lineno}: end_fn outside fn")
            functions[cur_fn] = FunctionSchedule(cur_blocks, cur_loops)
            cur_fn = None
        elif tag == "block":
            if cur_fn is None:
                raise ScheduleError(f"line {lineno}: block outside fn")
            name = parts[1]
            if name in cur_blocks:
                raise ScheduleError(f"line {lineno}: duplicate block {name!r}")
            if not parts[2].startswith("len="):
                raise ScheduleError(f"line {lineno}: block expects len=<n>")
            length = int(parts[2][4:])
            if length < 1:
                raise ScheduleError(f"line {lineno}: block length must be >= 1")
            slots = []
            rest = parts[3:]
            while rest:
                if rest[0] != "slot" or len(rest) < 4:
                    raise ScheduleError(f"line {lineno}: expected 'slot <stage> <kind> <id>'")
                stage, kind, arg = int(rest[1]), rest[2], rest[3]
                if kind not in SLOT_TAGS:
                    raise ScheduleError(f"line {lineno}: unknown slot kind {kind!r}")
                if not 0 <= stage < length:
                    raise ScheduleError(f"line {lineno}: slot stage {stage} outside block of length {length}")
                slots.append(Slot(stage, kind, arg))
                rest = rest[4:]
            if any(a.stage > b.stage for a, b in zip(slots, slots[1:])):
                raise ScheduleError(f"line {lineno}: slots must be ordered by stage")
            cur_blocks[name] = BlockSchedule(length, tuple(slots))
        elif tag == "loopinfo":
            if cur_fn is None:
                raise ScheduleError(f"line {lineno}: loopinfo outside fn")
            blocks = tuple(p for p in parts[1:] if "=" not in p)
            kv = _kv([p for p in parts[1:] if "=" in p], lineno)
            info = LoopInfo(
                pipelined=kv.get("pipelined", "0") == "1",
                ii=int(kv.get("ii", 1)),
                overlap=int(kv.get("overlap", 0)),
            )
            if info.pipelined and info.ii < 1:
                raise ScheduleError(f"line {lineno}: ii must be >= 1 for a pipelined loop")
            if info.overlap < 0:
                raise ScheduleError(f"line {lineno}: overlap must be >= 0")
            if not blocks:
                raise ScheduleError(f"line {lineno}: loopinfo needs block ids")
            cur_loops[blocks] = info
        else:
            raise ScheduleError(f"line {lineno}: unknown directive {tag!r}")

    if cur_fn is not None:
        raise ScheduleError("fn without end_fn")
    if top is None:
        raise ScheduleError("missing top directive")
    if top not in functions:
        raise ScheduleError(f"dangling callee: top function {top!r} is not defined")

    sched = Schedule(top, functions, frozenset(fifos), axis)
    _check_schedule(sched)
    return sched


def _check_schedule(sched: Schedule) -> None:
    for fn, fsched in sched.functions.items():
        for bname, block in fsched.blocks.items():
            for slot in block.slots:
                if slot.tag in FIFO_TAGS and slot.arg not in sched.fifos:
                    raise ScheduleError(f"{fn}/{bname}: slot references undeclared fifo {slot.arg!r}")
                if slot.tag in AXI_TAGS and slot.arg not in sched.axis:
                    raise ScheduleError(f"{fn}/{bname}: slot references undeclared axi {slot.arg!r}")
        for blocks, info in fsched.loops.items():
            span = 0
            for b in blocks:
                if b not in fsched.blocks:
                    raise ScheduleError(f"{fn}: loopinfo references unknown block {b!r}")
                span += fsched.blocks[b].length
            # Iterations spaced by ii (pipelined) or overlap+1 must be able
            # to hold one body execution inside the overlap window.
            if info.overlap < span - 1:
                raise ScheduleError(
                    f"{fn}: loop over {' '.join(blocks)} has overlap {info.overlap} < body span {span} - 1"
                )


def write_schedule(sched: Schedule) -> str:
    """Canonical serialization; parse_schedule(write_schedule(s)) == s."""
    out = [f"top {sched.top}"]
    for fifo in sorted(sched.fifos):
        out.append(f"fifo {fifo}")
    for name in sorted(sched.axis):
        p = sched.axis[name]
        out.append(
            f"axi {name} read_latency={p.read_latency} write_resp_latency={p.write_resp_latency} "
            f"rctl_depth={p.rctl_depth} request_overhead={p.request_overhead}"
        )
    for fn in sorted(sched.functions):
        fsched = sched.functions[fn]
        out.append(f"fn {fn}")
        for bname in sorted(fsched.blocks):
            block = fsched.blocks[bname]
            line = f"block {bname} len={block.length}"
            for slot in block.slots:
                line += f" slot {slot.stage} {slot.tag} {slot.arg}"
            out.append(line)
        for blocks in sorted(fsched.loops):
            info = fsched.loops[blocks]
            out.append(
                f"loopinfo {' '.join(blocks)} pipelined={int(info.pipelined)} "
                f"ii={info.ii} overlap={info.overlap}"
            )
        out.append("end_fn")
    return "\n".join(out) + "\n"


def loop_end_stage(start: int, info: LoopInfo, tripcount: int, header_len: int) -> int:
    """Dynamic stage at which a loop region completes.

    The header block runs once more than the body, accounted for by adding
    its length once.
    """
    if tripcount < 1:
        raise ValueError("tripcount must be >= 1")
    if info.pipelined:
        return start + info.overlap + info.ii * (tripcount - 1) + header_len
    return start + info.overlap + (info.overlap + 1) * (tripcount - 1) + header_len


class ResolveError(ValueError):
    pass


class _Reader:
    __slots__ = ("records", "i")

    def __init__(self, records):
        self.records = records
        self.i = 0

    def peek(self):
        return self.records[self.i] if self.i < len(self.records) else None

    def take(self):
        rec = self.peek()
        if rec is None:
            raise ResolveError("unexpected end of trace")
        self.i += 1
        return rec


def resolve(trace: Trace, schedule: Schedule) -> Iterator[ResolvedEvent]:
    """Map every trace event to its dynamic stage, streaming in trace order.

    Loop regions may appear either compressed (explicit loop markers) or
    fully expanded; both resolve to the identical event stream. Expanded
    simple loops are recognized by their header block reappearing, so the
    per-iteration stage arithmetic is applied either way.
    """
    reader = _Reader(trace.records)
    first = reader.take()
    if not (isinstance(first, EventRec) and first.event.tag == "call"):
        raise ResolveError("trace must start with a call record")
    if first.event.arg != schedule.top:
        raise ResolveError(f"top-level call is {first.event.arg!r}, expected {schedule.top!r}")
    yield from _resolve_activation(reader, schedule, schedule.top, ())
    if reader.peek() is not None:
        raise ResolveError(f"record {reader.i}: records after top-level return")


def _block_events(reader: _Reader, fn: str, bsched: BlockSchedule) -> list[Event]:
    events = []
    for slot in bsched.slots:
        rec = reader.take()
        if not isinstance(rec, EventRec) or rec.event.tag in ("call", "return"):
            raise ResolveError(f"record {reader.i - 1}: expected event for slot {slot.tag} {slot.arg}")
        ev = rec.event
        if ev.tag != slot.tag or ev.arg != slot.arg:
            raise ResolveError(
                f"record {reader.i - 1}: event {ev.tag} {ev.arg} does not match slot {slot.tag} {slot.arg}"
            )
        events.append(ev)
    return events


def _emit_block(
    instance, fn, bsched: BlockSchedule, events: list[Event], cursor: int, floor: int
) -> Iterator[ResolvedEvent]:
    for slot, ev in zip(bsched.slots, events):
        dyn = cursor + slot.stage
        yield ResolvedEvent(instance, fn, dyn, dyn - min(floor, cursor), ev)


def _resolve_activation(
    reader: _Reader, schedule: Schedule, fn: str, instance: tuple[int, ...]
) -> Iterator[ResolvedEvent]:
    fsched = schedule.functions.get(fn)
    if fsched is None:
        raise ResolveError(f"call to unknown function {fn!r}")
    headers = {blocks[0]: blocks for blocks in fsched.loops}
    cursor = 1
    ordinal = 0
    while True:
        rec = reader.peek()
        if rec is None:
            raise ResolveError("unexpected end of trace (missing return)")
        if isinstance(rec, EventRec) and rec.event.tag == "return":
            reader.take()
            yield ResolvedEvent(instance, fn, cursor, 0, rec.event)
            return
        if isinstance(rec, EventRec) and rec.event.tag == "call":
            reader.take()
            yield ResolvedEvent(instance, fn, cursor, 0, rec.event)
            yield from _resolve_activation(reader, schedule, rec.event.arg, instance + (ordinal,))
            ordinal += 1
            cursor += 1
        elif isinstance(rec, LoopBegin):
            reader.take()
            info = fsched.loops.get(rec.blocks)
            if info is None:
                raise ResolveError(f"record {reader.i - 1}: no loop info for blocks {' '.join(rec.blocks)}")
            body = _collect_loop_body(reader)
            iterations = (_Reader(body) for _ in range(rec.tripcount))
            cursor = yield from _run_loop(fn, instance, fsched, rec.blocks, info, iterations, cursor)
        elif isinstance(rec, Block):
            if rec.block in headers:
                blocks = headers[rec.block]
                info = fsched.loops[blocks]
                cursor = yield from _run_loop(
                    fn, instance, fsched, blocks, info, _DetectedIterations(reader, blocks), cursor
                )
            else:
                reader.take()
                bsched = fsched.blocks.get(rec.block)
                if bsched is None:
                    raise ResolveError(f"record {reader.i - 1}: block {rec.block!r} not in schedule of {fn!r}")
                events = _block_events(reader, fn, bsched)
                yield from _emit_block(instance, fn, bsched, events, cursor, cursor)
                cursor += bsched.length
        else:
            raise ResolveError(f"record {reader.i}: unexpected {type(rec).__name__} record")


def _collect_loop_body(reader: _Reader):
    body = []
    depth = 1
    while True:
        rec = reader.take()
        if isinstance(rec, LoopBegin):
            depth += 1
        elif isinstance(rec, LoopEnd):
            depth -= 1
            if depth == 0:
                return tuple(body)
        body.append(rec)


class _DetectedIterations:
    """Iteration source for expanded loops: keeps yielding the main reader
    as long as the loop's header block is next."""

    def __init__(self, reader: _Reader, blocks: tuple[str, ...]):
        self.reader = reader
        self.header = blocks[0]

    def __iter__(self):
        while True:
            rec = self.reader.peek()
            if isinstance(rec, Block) and rec.block == self.header:
                yield self.reader
            else:
                return


def _run_loop(
    fn: str,
    instance: tuple[int, ...],
    fsched: FunctionSchedule,
    blocks: tuple[str, ...],
    info: LoopInfo,
    iterations,
    start: int,
    floor_cap: int = 1 << 60,
) -> Iterator[ResolvedEvent]:
    """Emit the events of every loop iteration; returns the end stage."""
    step = info.ii if info.pipelined else info.overlap + 1
    headers = {b[0]: b for b in fsched.loops if b != blocks}
    tripcount = 0
    for k, body_reader in enumerate(iterations):
        tripcount += 1
        base = start + k * step
        # No later event can land before this iteration's start, nor before
        # any enclosing loop's next iteration start.
        floor = min(floor_cap, base)
        nested_cap = min(floor_cap, start + (k + 1) * step)
        cursor = base
        expected = list(blocks)
        while expected:
            rec = body_reader.peek()
            if rec is None:
                raise ResolveError(f"loop over {' '.join(blocks)}: truncated iteration")
            if isinstance(rec, LoopBegin):
                body_reader.take()
                inner = fsched.loops.get(rec.blocks)
                if inner is None:
                    raise ResolveError(f"no loop info for nested blocks {' '.join(rec.blocks)}")
                inner_body = _collect_loop_body(body_reader)
                inner_iters = (_Reader(inner_body) for _ in range(rec.tripcount))
                cursor = yield from _run_loop(
                    fn, instance, fsched, rec.blocks, inner, inner_iters, cursor, nested_cap
                )
            elif isinstance(rec, Block):
                if rec.block != expected[0] and rec.block in headers:
                    # expanded form of a nested loop: its header reappears
                    inner_blocks = headers[rec.block]
                    cursor = yield from _run_loop(
                        fn,
                        instance,
                        fsched,
                        inner_blocks,
                        fsched.loops[inner_blocks],
                        _DetectedIterations(body_reader, inner_blocks),
                        cursor,
                        nested_cap,
                    )
                    continue
                body_reader.take()
                if rec.block == expected[0]:
                    expected.pop(0)
                else:
                    raise ResolveError(
                        f"loop over {' '.join(blocks)}: unexpected block {rec.block!r} in iteration"
                    )
                bsched = fsched.blocks[rec.block]
                events = _block_events(body_reader, fn, bsched)
                yield from _emit_block(instance, fn, bsched, events, cursor, floor)
                cursor += bsched.length
            else:
                raise ResolveError(f"unexpected record inside loop over {' '.join(blocks)}")
    if tripcount == 0:
        raise ResolveError(f"loop over {' '.join(blocks)} has no iterations")
    header_len = fsched.blocks[blocks[0]].length
    return loop_end_stage(start, info, tripcount, header_len)
