"""One-pass compilation of the resolved event stream into a simulation graph.

The graph is independent of FIFO depths: depth-dependent write-after-read
dependencies are kept as floating edges whose source is bound during
traversal. Nodes are created per (activation, dynamic stage), held pending
until no later event can reference them, then committed to a dense index
space; committed in-edges live in a CSR layout grouped by target node.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Iterator, NamedTuple

import numpy as np

from .schedule import ResolvedEvent, Schedule

E_CONTROL = 0
E_FIFO_RAW = 1
E_AXI_READ = 2
E_AXI_WRITE_RESP = 3
E_AXI_RCTL = 4

EDGE_KIND_NAMES = {
    E_CONTROL: "control_flow",
    E_FIFO_RAW: "fifo_raw",
    E_AXI_READ: "axi_read",
    E_AXI_WRITE_RESP: "axi_write_resp",
    E_AXI_RCTL: "axi_rctl",
}

GRAPH_DUMP_VERSION = 1


class GraphError(ValueError):
    pass


@dataclass(frozen=True)
class CompilerConfig:
    """Delay constants shared by the graph compiler and the reference
    event simulator; both must use the same values for results to agree."""

    eliminate: bool = True
    subcall_start_delay: int = 1
    subcall_return_delay: int = 1
    fifo_raw_delay: int = 1
    fifo_war_delay: int = 1
    rctl_delay: int = 1

    def to_dict(self) -> dict:
        return {
            "eliminate": self.eliminate,
            "subcall_start_delay": self.subcall_start_delay,
            "subcall_return_delay": self.subcall_return_delay,
            "fifo_raw_delay": self.fifo_raw_delay,
            "fifo_war_delay": self.fifo_war_delay,
            "rctl_delay": self.rctl_delay,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CompilerConfig":
        return cls(**d)


@dataclass
class GraphStats:
    nodes_before_elim: int = 0
    nodes_after_elim: int = 0
    edges_before_elim: int = 0
    edges_after_elim: int = 0
    max_pending: int = 0
    max_static_stage: int = 0

    @property
    def node_reduction(self) -> float:
        if not self.nodes_before_elim:
            return 0.0
        return 1.0 - self.nodes_after_elim / self.nodes_before_elim

    @property
    def edge_reduction(self) -> float:
        if not self.edges_before_elim:
            return 0.0
        return 1.0 - self.edges_after_elim / self.edges_before_elim


class FloatingEdge(NamedTuple):
    target: int
    fifo: str
    write_seq: int  # >= 2: the first write never waits on a read
    delay: int


class Edge(NamedTuple):
    source: int
    target: int
    delay: int
    kind: int
    channel: str | None  # fifo or axi id for typed edges
    seq: int


@dataclass
class SimGraph:
    node_count: int
    # committed in-edges, CSR grouped by target (targets ascending)
    in_off: np.ndarray
    in_src: np.ndarray
    in_delay: np.ndarray
    in_kind: np.ndarray
    in_channel: np.ndarray  # fifo/axi index, -1 for control flow
    in_seq: np.ndarray
    # floating WAR edges, sorted by target
    float_target: np.ndarray
    float_fifo: np.ndarray  # index into `fifos`
    float_seq: np.ndarray
    float_delay: np.ndarray
    # committed node index of every FIFO read, CSR per fifo in seq order
    fifos: tuple[str, ...]
    reads_off: np.ndarray
    reads_flat: np.ndarray
    axis: tuple[str, ...]
    end: int
    stats: GraphStats
    config: CompilerConfig
    # per-node diagnostics
    modules: tuple[str, ...]
    instances: tuple[tuple[int, ...], ...]
    node_module: np.ndarray
    node_instance: np.ndarray
    node_stage: np.ndarray

    def fifo_index(self, fifo: str) -> int:
        return self.fifos.index(fifo)

    def fifo_reads(self, fifo: str) -> np.ndarray:
        fi = self.fifo_index(fifo)
        return self.reads_flat[self.reads_off[fi] : self.reads_off[fi + 1]]

    def floating_edges(self) -> Iterator[FloatingEdge]:
        for i in range(len(self.float_target)):
            yield FloatingEdge(
                int(self.float_target[i]),
                self.fifos[self.float_fifo[i]],
                int(self.float_seq[i]),
                int(self.float_delay[i]),
            )

    def in_edges(self, node: int) -> Iterator[Edge]:
        for e in range(self.in_off[node], self.in_off[node + 1]):
            kind = int(self.in_kind[e])
            ch = int(self.in_channel[e])
            if kind == E_FIFO_RAW:
                channel = self.fifos[ch]
            elif kind in (E_AXI_READ, E_AXI_WRITE_RESP, E_AXI_RCTL):
                channel = self.axis[ch]
            else:
                channel = None
            yield Edge(int(self.in_src[e]), node, int(self.in_delay[e]), kind, channel, int(self.in_seq[e]))

    def edges(self) -> Iterator[Edge]:
        for v in range(self.node_count):
            yield from self.in_edges(v)

    def node_label(self, node: int) -> str:
        inst = self.instances[self.node_instance[node]]
        path = "/".join(str(i) for i in inst) or "top"
        return f"{self.modules[self.node_module[node]]}[{path}]@{int(self.node_stage[node])}"


class _Node:
    __slots__ = (
        "stage",
        "index",
        "alias_src",
        "alias_delay",
        "has_events",
        "boundary",
        "exempt",
        "in_count",
        "src_edge",
    )

    def __init__(self, stage: int):
        self.stage = stage
        self.index = -1
        self.alias_src: "_Node | None" = None
        self.alias_delay = 0
        self.has_events = False
        self.boundary = False
        # exempt from elimination: fifo nodes (RAW/WAR/fifo_reads), AXI typed
        # edge endpoints, rctl endpoints, and the end node
        self.exempt = False
        self.in_count = 0
        self.src_edge: "tuple[_Node, int] | None" = None  # only while in_count == 1

    @property
    def committed(self) -> bool:
        return self.index >= 0 or self.alias_src is not None


class _Activation:
    __slots__ = (
        "fn",
        "instance",
        "pending",
        "by_stage",
        "last",
        "max_stage",
        "calls",
        "child_finals",
        "axi_state",
        "rctl",
        "pending_real",
    )

    def __init__(self, fn: str, instance: tuple[int, ...]):
        self.fn = fn
        self.instance = instance
        self.pending: deque[_Node] = deque()
        self.by_stage: dict[int, _Node] = {}
        self.last: _Node | None = None
        self.max_stage = 0
        self.calls = 0
        self.child_finals: list[_Node] = []
        self.axi_state: dict[str, dict] = {}
        self.rctl: dict[str, list[tuple[_Node, _Node]]] = {}
        self.pending_real = 0  # pending nodes carrying events or a boundary role


class _Fifo:
    __slots__ = ("writes", "reads")

    def __init__(self):
        self.writes: list[_Node] = []
        self.reads: list[_Node] = []


def compile(
    events: Iterable[ResolvedEvent], schedule: Schedule, config: CompilerConfig | None = None
) -> SimGraph:
    """Consume the resolved event stream once and build the simulation graph."""
    config = config or CompilerConfig()
    fifos = tuple(sorted(schedule.fifos))
    axis = tuple(sorted(schedule.axis))
    fifo_idx = {f: i for i, f in enumerate(fifos)}
    axi_idx = {a: i for i, a in enumerate(axis)}

    stats = GraphStats()
    trackers: dict[str, _Fifo] = {f: _Fifo() for f in fifos}
    edges: list[tuple[_Node, _Node, int, int, int, int]] = []
    floating: list[tuple[_Node, int, int, int]] = []  # (target, fifo idx, write seq, delay)

    stack: list[_Activation] = []
    end_node: _Node | None = None

    modules: list[str] = []
    module_idx: dict[str, int] = {}
    instances: list[tuple[int, ...]] = []
    instance_idx: dict[tuple[int, ...], int] = {}

    committed: list[_Node] = []
    node_module: list[int] = []
    node_instance: list[int] = []
    node_stage: list[int] = []

    def commit(act: _Activation, node: _Node) -> None:
        del act.by_stage[node.stage]
        if node.has_events or node.boundary:
            act.pending_real -= 1
        if config.eliminate and not node.exempt and node.in_count == 1 and node.src_edge is not None:
            # Single in-edge, not referenced by any tracker: splice it out.
            # Edges sourced here re-route to the predecessor with this
            # in-edge's delay folded in.
            node.alias_src, node.alias_delay = node.src_edge
            return
        node.index = len(committed)
        committed.append(node)
        if act.fn not in module_idx:
            module_idx[act.fn] = len(modules)
            modules.append(act.fn)
        if act.instance not in instance_idx:
            instance_idx[act.instance] = len(instances)
            instances.append(act.instance)
        node_module.append(module_idx[act.fn])
        node_instance.append(instance_idx[act.instance])
        node_stage.append(node.stage)

    def commit_below(act: _Activation, floor: int) -> None:
        while act.pending and act.pending[0].stage < floor:
            commit(act, act.pending.popleft())

    def commit_all(act: _Activation) -> None:
        while act.pending:
            commit(act, act.pending.popleft())

    def mark_real(act: _Activation, node: _Node, boundary: bool = False) -> None:
        if not (node.has_events or node.boundary):
            act.pending_real += 1
            stats.max_pending = max(stats.max_pending, act.pending_real)
        if boundary:
            node.boundary = True
        else:
            node.has_events = True

    def materialize(act: _Activation, stage: int) -> _Node:
        node = act.by_stage.get(stage)
        if node is not None:
            return node
        if stage <= act.max_stage:
            raise GraphError(
                f"{act.fn}: event at stage {stage} arrived after that node was committed"
            )
        # One node per stage; event-free fillers carry a single control-flow
        # in-edge and disappear again at commit time under eliminate=on.
        for s in range(act.max_stage + 1, stage + 1):
            node = _Node(s)
            stats.nodes_before_elim += 1
            if act.last is not None:
                add_edge(act.last, node, 1, E_CONTROL, -1, 0)
            act.by_stage[s] = node
            act.pending.append(node)
            act.last = node
        act.max_stage = stage
        return act.by_stage[stage]

    def add_edge(src: _Node, tgt: _Node, delay: int, kind: int, channel: int, seq: int) -> None:
        edges.append((src, tgt, delay, kind, channel, seq))
        stats.edges_before_elim += 1
        tgt.in_count += 1
        tgt.src_edge = (src, delay) if tgt.in_count == 1 else None

    def handle_fifo(ev: ResolvedEvent, node: _Node) -> None:
        tr = trackers.get(ev.kind.arg)
        if tr is None:
            raise GraphError(f"event references undeclared fifo {ev.kind.arg!r}")
        node.exempt = True  # RAW/WAR endpoints and fifo_reads entries must survive
        fi = fifo_idx[ev.kind.arg]
        if ev.kind.tag == "fifo_write":
            tr.writes.append(node)
            n = len(tr.writes)
            if n >= 2:
                floating.append((node, fi, n, config.fifo_war_delay))
            if n <= len(tr.reads):
                add_edge(node, tr.reads[n - 1], config.fifo_raw_delay, E_FIFO_RAW, fi, n)
        else:
            tr.reads.append(node)
            n = len(tr.reads)
            if n <= len(tr.writes):
                add_edge(tr.writes[n - 1], node, config.fifo_raw_delay, E_FIFO_RAW, fi, n)

    def handle_axi(ev: ResolvedEvent, act: _Activation, node: _Node, index: int) -> None:
        iface = ev.kind.arg
        params = schedule.axis.get(iface)
        if params is None:
            raise GraphError(f"event {index}: undeclared axi interface {iface!r}")
        ai = axi_idx[iface]
        st = act.axi_state.setdefault(iface, {"req": None, "remaining": 0, "first": None, "wlast": None, "wrem": 0})
        tag = ev.kind.tag
        if tag == "axi_rreq":
            if st["remaining"]:
                raise GraphError(f"event {index}: axi {iface}: request while read burst open")
            node.exempt = True  # AxiRead edge source
            st["req"], st["remaining"], st["first"] = node, ev.kind.burst, None
        elif tag == "axi_r":
            if not st["remaining"]:
                raise GraphError(f"event {index}: axi {iface}: read transfer with no open request")
            if st["first"] is None:
                st["first"] = node
                node.exempt = True  # AxiRead edge and possible rctl target
                add_edge(
                    st["req"], node, params.read_latency + params.request_overhead, E_AXI_READ, ai, 0
                )
            st["remaining"] -= 1
            if st["remaining"] == 0:
                node.exempt = True  # possible rctl edge source
                act.rctl.setdefault(iface, []).append((st["first"], node))
                st["req"], st["first"] = None, None
        elif tag == "axi_wreq":
            st["wrem"] = ev.kind.burst
        elif tag == "axi_w":
            if not st["wrem"]:
                raise GraphError(f"event {index}: axi {iface}: write transfer with no open request")
            st["wrem"] -= 1
            if st["wrem"] == 0:
                node.exempt = True  # AxiWriteResp edge source
                st["wlast"] = node
        elif tag == "axi_b":
            if st["wlast"] is None:
                raise GraphError(f"event {index}: axi {iface}: write response with no completed burst")
            node.exempt = True  # AxiWriteResp edge target
            add_edge(st["wlast"], node, params.write_resp_latency, E_AXI_WRITE_RESP, ai, 0)
            st["wlast"] = None

    top = _Activation(schedule.top, ())
    stack.append(top)
    mark_real(top, materialize(top, 1), boundary=True)

    for index, ev in enumerate(events):
        tag = ev.kind.tag
        if tag == "call":
            act = stack[-1]
            if act.instance != ev.instance:
                raise GraphError(f"event {index}: out-of-order instance {ev.instance}")
            commit_below(act, ev.dyn_stage)
            node = materialize(act, ev.dyn_stage)
            mark_real(act, node)
            # commit the call node itself so the launch edge points forward
            # in index order before any callee node commits
            commit_below(act, ev.dyn_stage)
            if act.pending and act.pending[0] is node:
                commit(act, act.pending.popleft())
            child = _Activation(ev.kind.arg, act.instance + (act.calls,))
            act.calls += 1
            stack.append(child)
            start = materialize(child, 1)
            mark_real(child, start, boundary=True)
            add_edge(node, start, config.subcall_start_delay, E_CONTROL, -1, 0)
        elif tag == "return":
            act = stack[-1]
            if act.instance != ev.instance:
                raise GraphError(f"event {index}: out-of-order instance {ev.instance}")
            commit_below(act, ev.dyn_stage)
            final = materialize(act, ev.dyn_stage)
            mark_real(act, final, boundary=True)
            final.has_events = True
            if len(stack) == 1:
                final.exempt = True  # the end node always survives
            for child_final in act.child_finals:
                add_edge(child_final, final, config.subcall_return_delay, E_CONTROL, -1, 0)
            commit_all(act)
            stack.pop()
            if stack:
                parent = stack[-1]
                parent.child_finals.append(final)
                for iface, reqs in act.rctl.items():
                    parent.rctl.setdefault(iface, []).extend(reqs)
            else:
                end_node = final
                for iface, reqs in act.rctl.items():
                    depth = schedule.axis[iface].rctl_depth
                    ai = axi_idx[iface]
                    for k in range(depth, len(reqs)):
                        add_edge(
                            reqs[k - depth][1], reqs[k][0], config.rctl_delay, E_AXI_RCTL, ai, k + 1
                        )
        else:
            act = stack[-1]
            if act.instance != ev.instance:
                raise GraphError(f"event {index}: out-of-order instance {ev.instance}")
            stats.max_static_stage = max(stats.max_static_stage, ev.static_stage)
            commit_below(act, ev.dyn_stage - ev.static_stage)
            node = materialize(act, ev.dyn_stage)
            mark_real(act, node)
            commit_below(act, ev.dyn_stage - ev.static_stage)
            if tag in ("fifo_read", "fifo_write"):
                handle_fifo(ev, node)
            else:
                handle_axi(ev, act, node, index)

    if stack:
        raise GraphError("event stream ended inside an activation")
    if end_node is None:
        raise GraphError("empty event stream")
    for fifo, tr in trackers.items():
        if len(tr.reads) > len(tr.writes):
            raise GraphError(
                f"fifo {fifo}: {len(tr.reads)} reads but only {len(tr.writes)} writes in trace"
            )

    return _finalize(
        config, stats, fifos, axis, trackers, edges, floating, end_node,
        committed, modules, instances, node_module, node_instance, node_stage,
    )


def _resolve_src(node: _Node) -> tuple[int, int]:
    delay = 0
    while node.alias_src is not None:
        delay += node.alias_delay
        node = node.alias_src
    if node.index < 0:
        raise GraphError("edge source node was never committed")
    return node.index, delay


def _finalize(
    config, stats, fifos, axis, trackers, edges, floating, end_node,
    committed, modules, instances, node_module, node_instance, node_stage,
) -> SimGraph:
    n = len(committed)
    stats.nodes_after_elim = n

    src_l, tgt_l, delay_l, kind_l, chan_l, seq_l = [], [], [], [], [], []
    for src, tgt, delay, kind, chan, seq in edges:
        if tgt.index < 0 and tgt.alias_src is not None:
            continue  # in-edge folded into the eliminated node's alias
        si, extra = _resolve_src(src)
        src_l.append(si)
        tgt_l.append(tgt.index)
        delay_l.append(delay + extra)
        kind_l.append(kind)
        chan_l.append(chan)
        seq_l.append(seq)
    stats.edges_after_elim = len(src_l)

    src_a = np.asarray(src_l, dtype=np.int64)
    tgt_a = np.asarray(tgt_l, dtype=np.int64)
    delay_a = np.asarray(delay_l, dtype=np.int64)
    kind_a = np.asarray(kind_l, dtype=np.int8)
    chan_a = np.asarray(chan_l, dtype=np.int32)
    seq_a = np.asarray(seq_l, dtype=np.int64)
    order = np.argsort(tgt_a, kind="stable")
    in_off = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(tgt_a, minlength=n), out=in_off[1:])

    f_tgt = np.asarray([t.index for t, _, _, _ in floating], dtype=np.int64)
    f_fifo = np.asarray([fi for _, fi, _, _ in floating], dtype=np.int32)
    f_seq = np.asarray([s for _, _, s, _ in floating], dtype=np.int64)
    f_delay = np.asarray([d for _, _, _, d in floating], dtype=np.int64)
    f_order = np.argsort(f_tgt, kind="stable")

    reads_off = np.zeros(len(fifos) + 1, dtype=np.int64)
    reads_flat_l: list[int] = []
    for i, f in enumerate(fifos):
        for node in trackers[f].reads:
            reads_flat_l.append(node.index)
        reads_off[i + 1] = len(reads_flat_l)

    return SimGraph(
        node_count=n,
        in_off=in_off,
        in_src=src_a[order],
        in_delay=delay_a[order],
        in_kind=kind_a[order],
        in_channel=chan_a[order],
        in_seq=seq_a[order],
        float_target=f_tgt[f_order],
        float_fifo=f_fifo[f_order],
        float_seq=f_seq[f_order],
        float_delay=f_delay[f_order],
        fifos=fifos,
        reads_off=reads_off,
        reads_flat=np.asarray(reads_flat_l, dtype=np.int64),
        axis=axis,
        end=end_node.index,
        stats=stats,
        config=config,
        modules=tuple(modules),
        instances=tuple(instances),
        node_module=np.asarray(node_module, dtype=np.int32),
        node_instance=np.asarray(node_instance, dtype=np.int32),
        node_stage=np.asarray(node_stage, dtype=np.int64),
    )


def dump_graph(graph: SimGraph) -> bytes:
    """Deterministic JSON dump: identical graphs give identical bytes."""
    doc = {
        "version": GRAPH_DUMP_VERSION,
        "node_count": graph.node_count,
        "end": graph.end,
        "in_off": graph.in_off.tolist(),
        "in_src": graph.in_src.tolist(),
        "in_delay": graph.in_delay.tolist(),
        "in_kind": graph.in_kind.tolist(),
        "in_channel": graph.in_channel.tolist(),
        "in_seq": graph.in_seq.tolist(),
        "float_target": graph.float_target.tolist(),
        "float_fifo": graph.float_fifo.tolist(),
        "float_seq": graph.float_seq.tolist(),
        "float_delay": graph.float_delay.tolist(),
        "fifos": list(graph.fifos),
        "reads_off": graph.reads_off.tolist(),
        "reads_flat": graph.reads_flat.tolist(),
        "axis": list(graph.axis),
        "stats": {
            "nodes_before_elim": graph.stats.nodes_before_elim,
            "nodes_after_elim": graph.stats.nodes_after_elim,
            "edges_before_elim": graph.stats.edges_before_elim,
            "edges_after_elim": graph.stats.edges_after_elim,
            "max_pending": graph.stats.max_pending,
            "max_static_stage": graph.stats.max_static_stage,
        },
        "config": graph.config.to_dict(),
        "modules": list(graph.modules),
        "instances": [list(i) for i in graph.instances],
        "node_module": graph.node_module.tolist(),
        "node_instance": graph.node_instance.tolist(),
        "node_stage": graph.node_stage.tolist(),
    }
    return json.dumps(doc, sort_keys=True, separators=(",", ":")).encode()


def load_graph(data: bytes) -> SimGraph:
    doc = json.loads(data)
    if doc.get("version") != GRAPH_DUMP_VERSION:
        raise GraphError(f"unsupported graph dump version {doc.get('version')!r}")
    stats = GraphStats(**doc["stats"])
    return SimGraph(
        node_count=doc["node_count"],
        in_off=np.asarray(doc["in_off"], dtype=np.int64),
        in_src=np.asarray(doc["in_src"], dtype=np.int64),
        in_delay=np.asarray(doc["in_delay"], dtype=np.int64),
        in_kind=np.asarray(doc["in_kind"], dtype=np.int8),
        in_channel=np.asarray(doc["in_channel"], dtype=np.int32),
        in_seq=np.asarray(doc["in_seq"], dtype=np.int64),
        float_target=np.asarray(doc["float_target"], dtype=np.int64),
        float_fifo=np.asarray(doc["float_fifo"], dtype=np.int32),
        float_seq=np.asarray(doc["float_seq"], dtype=np.int64),
        float_delay=np.asarray(doc["float_delay"], dtype=np.int64),
        fifos=tuple(doc["fifos"]),
        reads_off=np.asarray(doc["reads_off"], dtype=np.int64),
        reads_flat=np.asarray(doc["reads_flat"], dtype=np.int64),
        axis=tuple(doc["axis"]),
        end=doc["end"],
        stats=stats,
        config=CompilerConfig.from_dict(doc["config"]),
        modules=tuple(doc["modules"]),
        instances=tuple(tuple(i) for i in doc["instances"]),
        node_module=np.asarray(doc["node_module"], dtype=np.int32),
        node_instance=np.asarray(doc["node_instance"], dtype=np.int32),
        node_stage=np.asarray(doc["node_stage"], dtype=np.int64),
    )
