"""Event-based reference simulator.

Each module activation holds its events sorted by dynamic stage and advances
one stage group at a time; a group completes only when every one of its
events is unstalled. Global time advances to the earliest unstall time among
all active modules (a pure optimization over stepping cycle by cycle — the
completion times are the same). Deadlock is declared when active modules
remain but none can ever unstall.

Kept deliberately simple and slow: this is the reference the graph-based
simulator is checked against, so it shares only the input contract and the
delay constants (CompilerConfig), not the implementation.
"""

from __future__ import annotations

from typing import Iterable

from .graph import CompilerConfig
from .schedule import ResolvedEvent, Schedule
from .traversal import DepthVector, SimResult


class OracleError(ValueError):
    pass


# dependency encodings attached to events:
#   ("unit", key, delay)  completion of another (instance, stage) unit
#   ("raw", fifo, seq)    seq-th write of fifo, + fifo_raw_delay
#   ("war", fifo, seq)    depth-dependent: (seq - depth)-th read, + fifo_war_delay


class _OEvent:
    __slots__ = ("tag", "arg", "deps", "war", "child")

    def __init__(self, tag: str, arg: str | None):
        self.tag = tag
        self.arg = arg
        self.deps: list[tuple] = []
        self.war: tuple[str, int] | None = None
        self.child: "ModuleState | None" = None


class ModuleState:
    """One activation: its event groups in dynamic-stage order plus the
    stage cursor and local clock used for the unstall checks."""

    __slots__ = ("instance", "fn", "groups", "idx", "prev_stage", "local_clock", "active")

    def __init__(self, instance: tuple[int, ...], fn: str):
        self.instance = instance
        self.fn = fn
        self.groups: list[tuple[int, list[_OEvent]]] = []
        self.idx = 0
        self.prev_stage = 1
        self.local_clock = 0  # completion time of the previous stage group
        self.active = False

    @property
    def finished(self) -> bool:
        return self.idx >= len(self.groups)


class HardwareState:
    """Per-fifo occupancy and per-axi rctl occupancy, updated at unstall
    times; kept as a checked invariant alongside the time bookkeeping."""

    def __init__(self, fifos: Iterable[str], axis: Iterable[str]):
        self.occupancy = {f: 0 for f in fifos}
        self.rctl_inflight = {a: 0 for a in axis}


class _Frame:
    __slots__ = ("module", "groups", "child_finals", "rctl", "axi")

    def __init__(self, module: ModuleState):
        self.module = module
        self.groups: dict[int, list[_OEvent]] = {}
        self.child_finals: list[tuple] = []
        self.rctl: dict[str, list[tuple]] = {}
        self.axi: dict[str, dict] = {}


def simulate_events(
    events: Iterable[ResolvedEvent],
    schedule: Schedule,
    depths: DepthVector,
    config: CompilerConfig | None = None,
) -> SimResult:
    config = config or CompilerConfig()
    modules: list[ModuleState] = []
    stack: list[_Frame] = []
    calls_per_frame: list[int] = []
    fifo_writes: dict[str, list[tuple]] = {f: [] for f in schedule.fifos}
    fifo_reads: dict[str, list[tuple]] = {f: [] for f in schedule.fifos}
    end_key = None

    def group_event(frame: _Frame, stage: int, oev: _OEvent) -> tuple:
        frame.groups.setdefault(stage, []).append(oev)
        return (frame.module.instance, stage)

    top_module = ModuleState((), schedule.top)
    top_module.active = True  # the top module starts at time 0
    modules.append(top_module)
    stack.append(_Frame(top_module))
    calls_per_frame.append(0)

    for ev in events:
        tag = ev.kind.tag
        if tag == "call":
            parent = stack[-1]
            oev = _OEvent(tag, ev.kind.arg)
            group_event(parent, ev.dyn_stage, oev)
            inst = parent.module.instance + (calls_per_frame[-1],)
            calls_per_frame[-1] += 1
            child = ModuleState(inst, ev.kind.arg)
            modules.append(child)
            oev.child = child
            stack.append(_Frame(child))
            calls_per_frame.append(0)
        elif tag == "return":
            frame = stack.pop()
            calls_per_frame.pop()
            oev = _OEvent(tag, None)
            key = group_event(frame, ev.dyn_stage, oev)
            for child_key in frame.child_finals:
                oev.deps.append(("unit", child_key, config.subcall_return_delay))
            frame.module.groups = sorted(frame.groups.items())
            if stack:
                parent = stack[-1]
                parent.child_finals.append(key)
                for iface, reqs in frame.rctl.items():
                    parent.rctl.setdefault(iface, []).extend(reqs)
            else:
                end_key = key
                for iface, reqs in frame.rctl.items():
                    d = schedule.axis[iface].rctl_depth
                    for k in range(d, len(reqs)):
                        first_ev = reqs[k][0]
                        first_ev.deps.append(("unit", reqs[k - d][2], config.rctl_delay))
        elif tag in ("fifo_read", "fifo_write"):
            frame = stack[-1]
            fifo = ev.kind.arg
            if fifo not in schedule.fifos:
                raise OracleError(f"undeclared fifo {fifo!r}")
            oev = _OEvent(tag, fifo)
            key = group_event(frame, ev.dyn_stage, oev)
            if tag == "fifo_write":
                fifo_writes[fifo].append(key)
                n = len(fifo_writes[fifo])
                if n >= 2:
                    oev.war = (fifo, n)
            else:
                fifo_reads[fifo].append(key)
                oev.deps.append(("raw", fifo, len(fifo_reads[fifo])))
        else:
            frame = stack[-1]
            iface = ev.kind.arg
            params = schedule.axis.get(iface)
            if params is None:
                raise OracleError(f"undeclared axi interface {iface!r}")
            oev = _OEvent(tag, iface)
            key = group_event(frame, ev.dyn_stage, oev)
            st = frame.axi.setdefault(iface, {"req": None, "rem": 0, "first": None, "wlast": None, "wrem": 0})
            if tag == "axi_rreq":
                if st["rem"]:
                    raise OracleError(f"axi {iface}: request while read burst open")
                st["req"], st["rem"], st["first"] = key, ev.kind.burst, None
            elif tag == "axi_r":
                if not st["rem"]:
                    raise OracleError(f"axi {iface}: read transfer with no open request")
                if st["first"] is None:
                    st["first"] = (oev, key)
                    oev.deps.append(
                        ("unit", st["req"], params.read_latency + params.request_overhead)
                    )
                st["rem"] -= 1
                if st["rem"] == 0:
                    first_ev, first_key = st["first"]
                    frame.rctl.setdefault(iface, []).append((first_ev, first_key, key))
                    st["req"], st["first"] = None, None
            elif tag == "axi_wreq":
                st["wrem"] = ev.kind.burst
            elif tag == "axi_w":
                if not st["wrem"]:
                    raise OracleError(f"axi {iface}: write transfer with no open request")
                st["wrem"] -= 1
                if st["wrem"] == 0:
                    st["wlast"] = key
            elif tag == "axi_b":
                if st["wlast"] is None:
                    raise OracleError(f"axi {iface}: write response with no completed burst")
                oev.deps.append(("unit", st["wlast"], params.write_resp_latency))
                st["wlast"] = None

    if stack:
        raise OracleError("event stream ended inside an activation")
    if end_key is None:
        raise OracleError("empty event stream")
    for fifo in schedule.fifos:
        if len(fifo_reads[fifo]) > len(fifo_writes[fifo]):
            raise OracleError(f"fifo {fifo}: more reads than writes")

    return _run(
        modules, fifo_writes, fifo_reads, schedule, depths, config, end_key
    )


def _run(modules, fifo_writes, fifo_reads, schedule, depths, config, end_key) -> SimResult:
    completion: dict[tuple, int] = {}
    hw = HardwareState(schedule.fifos, schedule.axis)

    def dep_time(dep) -> int | None:
        kind = dep[0]
        if kind == "unit":
            t = completion.get(dep[1])
            return None if t is None else t + dep[2]
        if kind == "raw":
            fifo, seq = dep[1], dep[2]
            t = completion.get(fifo_writes[fifo][seq - 1])
            return None if t is None else t + config.fifo_raw_delay
        raise AssertionError(dep)

    def unstall_time(m: ModuleState) -> int | None:
        """Earliest global time at which the module's current stage group
        completes, or None while some dependency is itself still stalled."""
        stage, group = m.groups[m.idx]
        t = m.local_clock + (stage - m.prev_stage)
        for oev in group:
            for dep in oev.deps:
                dt = dep_time(dep)
                if dt is None:
                    return None
                t = max(t, dt)
            if oev.war is not None:
                fifo, seq = oev.war
                d = depths[fifo]
                if seq > d:
                    idx = seq - d - 1
                    if idx >= len(fifo_reads[fifo]):
                        raise OracleError(
                            f"fifo {fifo}: write {seq} waits on a read that never happens"
                        )
                    rt = completion.get(fifo_reads[fifo][idx])
                    if rt is None:
                        return None
                    t = max(t, rt + config.fifo_war_delay)
        return t

    while True:
        best = None
        best_m = None
        done = True
        for m in modules:
            if m.finished:
                continue
            done = False
            if not m.active:
                continue
            t = unstall_time(m)
            if t is not None and (best is None or t < best):
                best, best_m = t, m
        if done:
            return SimResult(completion[end_key])
        if best_m is None:
            return SimResult(None)  # no active module can ever unstall

        m = best_m
        stage, group = m.groups[m.idx]
        completion[(m.instance, stage)] = best
        m.prev_stage = stage
        m.local_clock = best
        m.idx += 1
        for oev in group:
            if oev.tag == "fifo_write":
                hw.occupancy[oev.arg] += 1
                if hw.occupancy[oev.arg] > depths[oev.arg]:
                    raise OracleError(f"fifo {oev.arg}: occupancy exceeded depth")
            elif oev.tag == "fifo_read":
                hw.occupancy[oev.arg] -= 1
                if hw.occupancy[oev.arg] < 0:
                    raise OracleError(f"fifo {oev.arg}: read from empty buffer")
            elif oev.tag == "call":
                child = oev.child
                child.active = True
                child.local_clock = best + config.subcall_start_delay
                child.prev_stage = 1
