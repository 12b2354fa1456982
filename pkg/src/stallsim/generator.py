"""Synthetic dataflow design generator.

Produces (schedule, trace) pairs for tests and benchmarks: a top function
launching worker modules connected by FIFOs in a forward (acyclic) topology,
with fixed-bound loops carrying the FIFO traffic and optional AXI bursts.
Deterministic per seed. Every generated design validates cleanly and
completes when each FIFO is at least as deep as its token count.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field

from .schedule import Schedule, parse_schedule
from .trace import Trace, parse_trace

TOPOLOGIES = ("chain", "tree", "random-dag")


@dataclass(frozen=True)
class GenParams:
    seed: int = 0
    modules: tuple[int, int] = (2, 5)
    fifos: tuple[int, int] = (1, 6)
    max_tripcount: int = 16
    pipelined_prob: float = 0.7
    axi_interfaces: tuple[int, int] = (0, 1)
    tokens: tuple[int, int] = (2, 12)
    topology: str = "random-dag"

    def __post_init__(self):
        for name in ("modules", "fifos", "axi_interfaces", "tokens"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ValueError(f"{name}: empty range ({lo}, {hi})")
        if self.topology not in TOPOLOGIES:
            raise ValueError(f"unknown topology {self.topology!r}")
        if self.max_tripcount < 1:
            raise ValueError("max_tripcount must be >= 1")
        if self.modules[0] < 1 or self.fifos[0] < 1 or self.tokens[0] < 1:
            raise ValueError("modules, fifos and tokens ranges must start at >= 1")
        if self.axi_interfaces[0] < 0:
            raise ValueError("axi_interfaces range must start at >= 0")
        if not 0.0 <= self.pipelined_prob <= 1.0:
            raise ValueError("pipelined_prob must be in [0, 1]")


@dataclass
class Design:
    schedule_text: str
    trace_text: str
    tokens: dict[str, int]

    @property
    def schedule(self) -> Schedule:
        return parse_schedule(self.schedule_text)

    @property
    def trace(self) -> Trace:
        return parse_trace(self.trace_text)

    def max_depths(self) -> dict[str, int]:
        """Depth vector guaranteed deadlock-free by construction."""
        return dict(self.tokens)


class _FnBuilder:
    """Accumulates one function's schedule blocks/loops and trace records."""

    def __init__(self, name: str):
        self.name = name
        self.blocks: list[str] = []  # schedule lines
        self.loops: list[str] = []
        self.trace: list[str] = []
        self._n = 0

    def block(self, length: int, slots: list[tuple[int, str, str]] = ()) -> str:
        bname = f"{self.name}_b{self._n}"
        self._n += 1
        line = f"block {bname} len={length}"
        for stage, tag, arg in sorted(slots):
            line += f" slot {stage} {tag} {arg}"
        self.blocks.append(line)
        return bname

    def loopinfo(self, blocks: list[str], pipelined: bool, ii: int, overlap: int) -> None:
        self.loops.append(
            f"loopinfo {' '.join(blocks)} pipelined={int(pipelined)} ii={ii} overlap={overlap}"
        )

    def schedule_lines(self) -> list[str]:
        return [f"fn {self.name}", *self.blocks, *self.loops, "end_fn"]


def _emit_block_trace(fb: _FnBuilder, bname: str, events: list[str]) -> None:
    fb.trace.append(f"bb {bname}")
    fb.trace.extend(events)


def _fifo_loop(fb: _FnBuilder, rng: random.Random, ports: list[tuple[str, str]],
               tripcount: int, pipelined_prob: float) -> None:
    """One loop executing `tripcount` iterations, each firing every port once.

    ports: list of (slot tag, fifo id). Nested form is chosen occasionally
    when the tripcount factors evenly.
    """
    inner_trip = None
    if tripcount >= 4 and rng.random() < 0.2:
        inner_trip = next(
            (k for k in rng.sample(range(2, tripcount), min(8, tripcount - 2))
             if tripcount % k == 0),
            None,
        )
    if inner_trip is not None:
        outer_trip = tripcount // inner_trip
        head_len = rng.randint(1, 2)
        tail_len = rng.randint(1, 2)
        head = fb.block(head_len)
        tail = fb.block(tail_len)
        # outer loops around a nested region are kept non-pipelined
        span = head_len + tail_len
        fb.loopinfo([head, tail], False, 1, span - 1 + rng.randint(0, 2))
        fb.trace.append(f"loop {outer_trip} {head} {tail}")
        _emit_block_trace(fb, head, [])
        _fifo_loop(fb, rng, ports, inner_trip, pipelined_prob)
        _emit_block_trace(fb, tail, [])
        fb.trace.append("end_loop")
        return

    nblocks = rng.randint(1, 2)
    length = rng.randint(max(1, len(ports)), len(ports) + 3)
    stages = rng.sample(range(length), len(ports))
    slots = [(stage, tag, fifo) for stage, (tag, fifo) in zip(sorted(stages), ports)]
    names = [fb.block(length, slots)]
    span = length
    if nblocks == 2:
        extra = rng.randint(1, 3)
        names.append(fb.block(extra))
        span += extra
    pipelined = rng.random() < pipelined_prob
    ii = rng.randint(1, 3) if pipelined else 1
    overlap = span - 1 + rng.randint(0, 2)
    fb.loopinfo(names, pipelined, ii, overlap)
    events = [f"{tag} {fifo}" for _, tag, fifo in slots]
    fb.trace.append(f"loop {tripcount} {' '.join(names)}")
    _emit_block_trace(fb, names[0], events)
    for extra_name in names[1:]:
        _emit_block_trace(fb, extra_name, [])
    fb.trace.append("end_loop")


def _axi_read_burst(fb: _FnBuilder, rng: random.Random, iface: str) -> None:
    burst = rng.randint(1, 4)
    req = fb.block(rng.randint(1, 2), [(0, "axi_rreq", iface)])
    _emit_block_trace(fb, req, [f"axi_rreq {iface} {burst}"])
    data = fb.block(max(burst, rng.randint(burst, burst + 2)),
                    [(i, "axi_r", iface) for i in range(burst)])
    events = [f"axi_r {iface}" for _ in range(burst - 1)] + [f"axi_r {iface} last"]
    _emit_block_trace(fb, data, events)


def _axi_read_loop(fb: _FnBuilder, rng: random.Random, iface: str, trips: int) -> None:
    req_len = rng.randint(1, 2)
    data_len = rng.randint(1, 2)
    req = fb.block(req_len, [(0, "axi_rreq", iface)])
    data = fb.block(data_len, [(0, "axi_r", iface)])
    span = req_len + data_len
    pipelined = rng.random() < 0.5
    fb.loopinfo([req, data], pipelined, rng.randint(1, 3) if pipelined else 1,
                span - 1 + rng.randint(0, 2))
    fb.trace.append(f"loop {trips} {req} {data}")
    _emit_block_trace(fb, req, [f"axi_rreq {iface} 1"])
    _emit_block_trace(fb, data, [f"axi_r {iface} last"])
    fb.trace.append("end_loop")


def _axi_write_burst(fb: _FnBuilder, rng: random.Random, iface: str) -> None:
    burst = rng.randint(1, 4)
    req = fb.block(rng.randint(1, 2), [(0, "axi_wreq", iface)])
    _emit_block_trace(fb, req, [f"axi_wreq {iface} {burst}"])
    data = fb.block(max(burst, rng.randint(burst, burst + 2)),
                    [(i, "axi_w", iface) for i in range(burst)])
    events = [f"axi_w {iface}" for _ in range(burst - 1)] + [f"axi_w {iface} last"]
    _emit_block_trace(fb, data, events)
    resp = fb.block(rng.randint(1, 2), [(0, "axi_b", iface)])
    _emit_block_trace(fb, resp, [f"axi_b {iface}"])


def gen_design(params: GenParams) -> Design:
    rng = random.Random(params.seed)
    nmod = rng.randint(*params.modules)
    if params.topology in ("chain", "tree"):
        nmod = max(nmod, 2)
        nfifo = nmod - 1
    else:
        nmod = max(nmod, 2)
        nfifo = max(1, rng.randint(*params.fifos))
    fifo_ids = [f"f{i}" for i in range(nfifo)]
    mod_ids = [f"m{i}" for i in range(nmod)]

    # writer/reader module index per fifo; always writer < reader (forward DAG)
    links: list[tuple[int, int]] = []
    if params.topology == "chain":
        links = [(i, i + 1) for i in range(nmod - 1)]
    elif params.topology == "tree":
        links = [(rng.randint(0, i - 1), i) for i in range(1, nmod)]
    else:
        for _ in fifo_ids:
            i = rng.randint(0, nmod - 2)
            links.append((i, rng.randint(i + 1, nmod - 1)))

    tok_hi = min(params.tokens[1], params.max_tripcount)
    tok_lo = min(params.tokens[0], tok_hi)
    tokens = {f: rng.randint(tok_lo, tok_hi) for f in fifo_ids}

    naxi = rng.randint(*params.axi_interfaces)
    naxi = min(naxi, nmod)
    axi_ids = [f"a{i}" for i in range(naxi)]
    # one owner module per interface so rctl ordering stays acyclic
    axi_owner = dict(zip(rng.sample(range(nmod), naxi), axi_ids))

    schedule_lines = ["top top"]
    for f in fifo_ids:
        schedule_lines.append(f"fifo {f}")
    for a in axi_ids:
        schedule_lines.append(
            f"axi {a} read_latency={rng.randint(4, 64)} "
            f"write_resp_latency={rng.randint(1, 8)} "
            f"rctl_depth={rng.randint(2, 16)} "
            f"request_overhead={rng.randint(1, 4)}"
        )

    trace_lines = ["v1", "call top"]
    top = _FnBuilder("top")
    entry = top.block(rng.randint(1, 2))
    _emit_block_trace(top, entry, [])
    mod_trace: dict[str, list[str]] = {}

    for mi, mod in enumerate(mod_ids):
        fb = _FnBuilder(mod)
        if rng.random() < 0.4:
            _emit_block_trace(fb, fb.block(rng.randint(1, 3)), [])

        segments = []
        reads = [("fifo_read", fifo_ids[k]) for k, (w, r) in enumerate(links) if r == mi]
        writes = [("fifo_write", fifo_ids[k]) for k, (w, r) in enumerate(links) if w == mi]
        # pass-through fusion: one read + one write with equal token counts
        if (len(reads) == 1 and len(writes) == 1
                and tokens[reads[0][1]] == tokens[writes[0][1]] and rng.random() < 0.5):
            t = tokens[reads[0][1]]
            segments.append(("fifo", [reads[0], writes[0]], t))
        else:
            for port in reads + writes:
                segments.append(("fifo", [port], tokens[port[1]]))
        if mi in axi_owner:
            for _ in range(rng.randint(1, 2)):
                segments.append(("axi", axi_owner[mi], 0))
        rng.shuffle(segments)

        for seg in segments:
            if seg[0] == "fifo":
                _fifo_loop(fb, rng, seg[1], seg[2], params.pipelined_prob)
            else:
                choice = rng.random()
                if choice < 0.4:
                    _axi_read_burst(fb, rng, seg[1])
                elif choice < 0.7:
                    _axi_read_loop(fb, rng, seg[1], rng.randint(2, 24))
                else:
                    _axi_write_burst(fb, rng, seg[1])
        if rng.random() < 0.3:
            _emit_block_trace(fb, fb.block(rng.randint(1, 3)), [])
        fb.trace.append("return")
        schedule_lines.extend(fb.schedule_lines())
        top.trace.append(f"call {mod}")
        mod_trace[mod] = fb.trace

    top.trace.append("return")
    schedule_lines.extend(top.schedule_lines())

    # assemble the full trace: top's records with each call followed by the
    # callee's records
    for line in top.trace:
        trace_lines.append(line)
        if line.startswith("call "):
            trace_lines.extend(mod_trace[line.split()[1]])

    return Design(
        "\n".join(schedule_lines) + "\n",
        "\n".join(trace_lines) + "\n",
        tokens,
    )


def _design(schedule_lines: list[str], trace_lines: list[str], tokens: dict[str, int]) -> Design:
    return Design("\n".join(schedule_lines) + "\n", "\n".join(trace_lines) + "\n", tokens)


def backpressure_design(tokens: int = 4) -> Design:
    """Two-module producer/consumer pair over one FIFO.

    The producer writes one token per cycle (ii=1) and then runs a fixed
    tail; the consumer takes two cycles per read (ii=2). The FIFO depth
    controls how long the producer stalls on back-pressure, which shows up
    in the total because of the tail.
    """
    schedule = [
        "top top",
        "fifo f0",
        "fn top",
        "block top_entry len=1",
        "end_fn",
        "fn producer",
        "block p_body len=1 slot 0 fifo_write f0",
        "block p_tail len=8",
        "loopinfo p_body pipelined=1 ii=1 overlap=0",
        "end_fn",
        "fn consumer",
        "block c_body len=1 slot 0 fifo_read f0",
        "loopinfo c_body pipelined=1 ii=2 overlap=0",
        "end_fn",
    ]
    trace = [
        "v1",
        "call top",
        "bb top_entry",
        "call producer",
        f"loop {tokens} p_body",
        "bb p_body",
        "fifo_write f0",
        "end_loop",
        "bb p_tail",
        "return",
        "call consumer",
        f"loop {tokens} c_body",
        "bb c_body",
        "fifo_read f0",
        "end_loop",
        "return",
        "return",
    ]
    return _design(schedule, trace, {"f0": tokens})


def cross_design() -> Design:
    """Two modules coupled in both directions: ma writes two tokens to fx
    then reads two from fy; mb writes two to fy then reads two from fx.
    Deadlocks at depths (1,1); completes at (2,2)."""
    schedule = [
        "top top",
        "fifo fx",
        "fifo fy",
        "fn top",
        "block top_entry len=1",
        "end_fn",
    ]
    for mod, wr, rd in (("ma", "fx", "fy"), ("mb", "fy", "fx")):
        schedule += [
            f"fn {mod}",
            f"block {mod}_w len=1 slot 0 fifo_write {wr}",
            f"block {mod}_r len=1 slot 0 fifo_read {rd}",
            f"loopinfo {mod}_w pipelined=1 ii=1 overlap=0",
            f"loopinfo {mod}_r pipelined=1 ii=1 overlap=0",
            "end_fn",
        ]
    trace = ["v1", "call top", "bb top_entry"]
    for mod, wr, rd in (("ma", "fx", "fy"), ("mb", "fy", "fx")):
        trace += [
            f"call {mod}",
            f"loop 2 {mod}_w",
            f"bb {mod}_w",
            f"fifo_write {wr}",
            "end_loop",
            f"loop 2 {mod}_r",
            f"bb {mod}_r",
            f"fifo_read {rd}",
            "end_loop",
            "return",
        ]
    trace.append("return")
    return _design(schedule, trace, {"fx": 2, "fy": 2})


def chain_loop_design(tripcount: int = 10_000) -> Design:
    """Writer and reader modules, each a long non-overlapping loop whose body
    spans 12 stages but fires a single FIFO event per iteration: most stage
    nodes are event-free chain nodes, so elimination removes ~92% of them."""
    schedule = [
        "top top",
        "fifo f0",
        "fn top",
        "block top_entry len=1",
        "end_fn",
        "fn writer",
        "block w_body len=12 slot 2 fifo_write f0",
        "loopinfo w_body pipelined=1 ii=12 overlap=11",
        "end_fn",
        "fn reader",
        "block r_body len=12 slot 5 fifo_read f0",
        "loopinfo r_body pipelined=1 ii=12 overlap=11",
        "end_fn",
    ]
    trace = [
        "v1",
        "call top",
        "bb top_entry",
        "call writer",
        f"loop {tripcount} w_body",
        "bb w_body",
        "fifo_write f0",
        "end_loop",
        "return",
        "call reader",
        f"loop {tripcount} r_body",
        "bb r_body",
        "fifo_read f0",
        "end_loop",
        "return",
        "return",
    ]
    return _design(schedule, trace, {"f0": tripcount})


def big_design(modules: int = 6, tripcount: int = 100_000) -> Design:
    """Chain of pass-through modules at ii=1; the compiled graph has roughly
    modules x tripcount nodes, sized for the throughput benchmarks."""
    if modules < 2:
        raise ValueError("need at least 2 modules")
    fifos = [f"f{i}" for i in range(modules - 1)]
    schedule = ["top top"] + [f"fifo {f}" for f in fifos]
    schedule += ["fn top", "block top_entry len=1", "end_fn"]
    trace = ["v1", "call top", "bb top_entry"]
    for i in range(modules):
        mod = f"m{i}"
        slots = []
        if i > 0:
            slots.append((0, "fifo_read", fifos[i - 1]))
        if i < modules - 1:
            slots.append((len(slots), "fifo_write", fifos[i]))
        length = len(slots)
        line = f"block {mod}_body len={length}"
        for stage, tag, arg in slots:
            line += f" slot {stage} {tag} {arg}"
        schedule += [
            f"fn {mod}",
            line,
            f"loopinfo {mod}_body pipelined=1 ii=1 overlap={length - 1}",
            "end_fn",
        ]
        trace += [f"call {mod}", f"loop {tripcount} {mod}_body", f"bb {mod}_body"]
        trace += [f"{tag} {arg}" for _, tag, arg in slots]
        trace += ["end_loop", "return"]
    trace.append("return")
    return _design(schedule, trace, {f: tripcount for f in fifos})
