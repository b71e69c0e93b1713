"""System call graph construction.

The graph has one node per retained call invocation plus one node per
canonical file path seen as an argument.  Edges run from a path entity to
every call that names it, and from an fd-producing call to every later call
that consumes that fd while it is live.  A new producer overwrites the table
entry for its fd number, so kernel-level fd reuse never links across
lifetimes; ``close`` ends a lifetime.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Union

from .trace import Trace, TraceEvent

Node = Union[str, TraceEvent]          # entities are their path strings
Edge = tuple[Node, TraceEvent]


@dataclass(eq=False)
class Scg:
    """Directed graph over one trace: call invocations plus path entities."""

    call_nodes: tuple[TraceEvent, ...]
    entity_nodes: frozenset[str]
    edges: frozenset[Edge]

    def out_edges(self, node: Node) -> list[Edge]:
        return sorted((e for e in self.edges if e[0] == node),
                      key=lambda e: e[1].index)

    def in_edges(self, node: TraceEvent) -> list[Edge]:
        return [e for e in self.edges if e[1] == node]


def entity_canonical(path: str) -> str:
    """Canonical entity name for a path argument.

    Exact string identity after trimming one layer of surrounding double
    quotes; no filesystem resolution, so two spellings of one file stay
    distinct entities.
    """
    if len(path) >= 2 and path.startswith('"') and path.endswith('"'):
        return path[1:-1]
    return path


def build_scg(trace: Trace, retained: Iterable[str]) -> Scg:
    """Build the call graph of a trace, restricted to retained call names.

    Events outside the retained set are ignored entirely, including any fd
    side effects.  Unknown fd arguments simply produce no edge; calls with no
    connections become isolated nodes.
    """
    retained = frozenset(retained)
    call_nodes: list[TraceEvent] = []
    entities: set[str] = set()
    edges: set[Edge] = set()
    fd_table: dict[int, TraceEvent] = {}

    for ev in trace.events:
        if ev.name not in retained:
            continue
        call_nodes.append(ev)
        for raw_path in ev.path_args:
            entity = entity_canonical(raw_path)
            entities.add(entity)
            edges.add((entity, ev))
        for fd in ev.fd_args:
            producer = fd_table.get(fd)
            if producer is not None and producer is not ev:
                edges.add((producer, ev))
        if ev.ret_is_fd:
            fd_table[ev.ret] = ev
        if ev.name == "close":
            for fd in ev.fd_args:
                fd_table.pop(fd, None)

    return Scg(call_nodes=tuple(call_nodes), entity_nodes=frozenset(entities),
               edges=frozenset(edges))


def to_dot(scg: Scg) -> str:
    """Render a graph in DOT format for visual inspection.

    Entities draw as boxes, call invocations as ellipses labeled
    ``name#index``.
    """
    lines = ["digraph scg {"]
    entity_ids = {}
    for i, entity in enumerate(sorted(scg.entity_nodes)):
        entity_ids[entity] = f"e{i}"
        label = entity.replace("\\", "\\\\").replace('"', '\\"')
        lines.append(f'  e{i} [shape=box, label="{label}"];')
    call_ids = {ev: f"c{ev.index}" for ev in scg.call_nodes}
    for ev in scg.call_nodes:
        lines.append(f'  c{ev.index} [shape=ellipse, label="{ev.name}#{ev.index}"];')

    def node_id(node: Node) -> str:
        return entity_ids[node] if isinstance(node, str) else call_ids[node]

    for src, dst in sorted(scg.edges, key=_edge_sort_key):
        lines.append(f"  {node_id(src)} -> {node_id(dst)};")
    lines.append("}")
    return "\n".join(lines) + "\n"


def _edge_sort_key(edge: Edge):
    src, dst = edge
    if isinstance(src, str):
        return (0, src, dst.index)
    return (1, src.index, dst.index)
