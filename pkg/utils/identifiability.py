"""Small DAG engine: d-separation and backdoor identifiability with a selection node.

Selection nodes (S) live in ``always_conditioned``: every adjustment set
implicitly contains them. Dashed S-arrows are ordinary directed edges here.
"""
import re
import logging
import itertools
from collections import deque
from dataclasses import dataclass, replace
from enum import Enum
from functools import cached_property
from typing import Optional

import networkx as nx

from utils.errors import SchemaError, StructuralError


class Estimand(str, Enum):
    EARLY = "EARLY"
    LATE = "LATE"
    JOINT = "JOINT"


TREATMENT_NODES = {
    Estimand.EARLY: ("A0",),
    Estimand.LATE: ("A1",),
    Estimand.JOINT: ("A0", "A1"),
}
OUTCOME_NODE = "Y"

_UP, _DOWN = "up", "down"

EDGE_RE = re.compile(r"^([A-Za-z_][\w]*)\s*->\s*([A-Za-z_][\w]*)$")
HEADER_RE = re.compile(r"^(measured|conditioned)\s*:\s*(.*)$", re.IGNORECASE)


@dataclass(frozen=True)
class Dag:
    nodes: frozenset
    edges: frozenset
    measured: frozenset
    always_conditioned: frozenset = frozenset()

    def __post_init__(self):
        for name in ("nodes", "edges", "measured", "always_conditioned"):
            object.__setattr__(self, name, frozenset(getattr(self, name)))
        object.__setattr__(self, "edges", frozenset(tuple(e) for e in self.edges))
        referenced = {n for edge in self.edges for n in edge} | self.measured | self.always_conditioned
        unknown = referenced - self.nodes
        if unknown:
            raise StructuralError(f"unknown node(s): {', '.join(sorted(unknown))}")
        if not nx.is_directed_acyclic_graph(self.graph):
            cycle = nx.find_cycle(self.graph)
            raise StructuralError(f"graph is cyclic: {' -> '.join(u for u, _ in cycle)} -> {cycle[0][0]}")

    @cached_property
    def graph(self):
        g = nx.DiGraph()
        g.add_nodes_from(sorted(self.nodes))
        g.add_edges_from(sorted(self.edges))
        return g

    def with_measured(self, *names):
        return replace(self, measured=self.measured | set(names))


@dataclass(frozen=True)
class IdentifiabilityVerdict:
    estimand: Estimand
    identifiable: bool
    witness: Optional[tuple] = None
    open_path: Optional[tuple] = None

    def __post_init__(self):
        if (self.witness is None) == (self.open_path is None):
            raise ValueError("exactly one of witness / open_path must be set")


def catalog_graphs():
    base = {("A0", "A1"), ("A0", "Y"), ("A1", "Y"), ("U", "S"), ("U", "Y")}
    panel_b = base | {("A0", "S")}
    panel_c = panel_b | {("U", "A0"), ("U", "A1")}
    nodes = {"A0", "A1", "S", "U", "Y"}
    measured = {"A0", "A1", "S", "Y"}
    return {
        "FIG3A": Dag(nodes, base, measured, {"S"}),
        "FIG3B": Dag(nodes, panel_b, measured, {"S"}),
        "FIG3C": Dag(nodes, panel_c, measured, {"S"}),
    }


# ==============================================================================
# D-SEPARATION
# ==============================================================================

def _as_set(nodes):
    if isinstance(nodes, str):
        return {nodes}
    return set(nodes)


def _closure_up(g, z):
    out = set(z)
    for v in z:
        out |= nx.ancestors(g, v)
    return out


def _reachable_blocked(g, x, y, z):
    """Bayes-ball reachability; True when no active trail joins x and y given z."""
    opens_collider = _closure_up(g, z)
    queue = deque((v, _UP) for v in sorted(x))
    visited = set()
    while queue:
        v, direction = queue.popleft()
        if (v, direction) in visited:
            continue
        visited.add((v, direction))
        if v in y and v not in z:
            return False
        if direction == _UP and v not in z:
            queue.extend((p, _UP) for p in g.predecessors(v))
            queue.extend((c, _DOWN) for c in g.successors(v))
        elif direction == _DOWN:
            if v not in z:
                queue.extend((c, _DOWN) for c in g.successors(v))
            if v in opens_collider:
                queue.extend((p, _UP) for p in g.predecessors(v))
    return True


def _check_query(dag, x, y, z):
    x, y, z = _as_set(x), _as_set(y), _as_set(z)
    unknown = (x | y | z) - dag.nodes
    if unknown:
        raise StructuralError(f"unknown node(s): {', '.join(sorted(unknown))}")
    if x & y or x & z or y & z:
        raise StructuralError("x, y and z must be disjoint")
    return x, y, z


def d_separated(dag, x, y, z=()):
    x, y, z = _check_query(dag, x, y, z)
    if not x or not y:
        return True
    return _reachable_blocked(dag.graph, x, y, z)


def _path_active(g, path, z, opens_collider):
    for prev, v, nxt in zip(path, path[1:], path[2:]):
        if g.has_edge(prev, v) and g.has_edge(nxt, v):
            if v not in opens_collider:
                return False
        elif v in z:
            return False
    return True


def d_separated_by_paths(dag, x, y, z=()):
    """Reference test: enumerate every simple path of the skeleton."""
    x, y, z = _check_query(dag, x, y, z)
    g = dag.graph
    skeleton = g.to_undirected(as_view=True)
    opens_collider = _closure_up(g, z)
    for a in sorted(x):
        for b in sorted(y):
            for path in nx.all_simple_paths(skeleton, a, b):
                if _path_active(g, path, z, opens_collider):
                    return False
    return True


# ==============================================================================
# BACKDOOR IDENTIFICATION
# ==============================================================================

def _mutilated(g, treatment, later):
    m = g.copy()
    m.remove_edges_from(list(g.out_edges(treatment)))
    for t in later:
        m.remove_edges_from(list(g.in_edges(t)))
    return m


def _is_clean(g, member, others, conditioned, hidden):
    """False when conditioning on the selection set alone connects ``member`` to a hidden cause of Y."""
    for u in hidden:
        if u == member or u in others:
            continue
        if _reachable_blocked(g, {member}, {u}, others) and not _reachable_blocked(g, {member}, {u}, others | conditioned):
            return False
    return True


def _hidden_causes(dag):
    return sorted(nx.ancestors(dag.graph, OUTCOME_NODE) - dag.measured - dag.always_conditioned)


def _step_admissible(dag, order, k, z, hidden):
    g = dag.graph
    treatment, history, later = order[k], set(order[:k]), order[k + 1:]
    conditioned = set(dag.always_conditioned)
    adjust = set(z) | history
    if not _reachable_blocked(_mutilated(g, treatment, later), {treatment}, {OUTCOME_NODE}, adjust | conditioned):
        return False
    return all(_is_clean(g, m, adjust - {m}, conditioned, hidden) for m in sorted(adjust))


def _treatment_order(dag, estimand):
    treatments = TREATMENT_NODES[estimand]
    missing = (set(treatments) | {OUTCOME_NODE}) - dag.nodes
    if missing:
        raise StructuralError(f"estimand {estimand.value} needs node(s) {', '.join(sorted(missing))}")
    rank = {v: i for i, v in enumerate(nx.topological_sort(dag.graph))}
    return sorted(treatments, key=rank.__getitem__)


def _rank_path(dag, path):
    through_hidden = any(v not in dag.measured for v in path)
    return (not through_hidden, len(path), path)


def _open_path(dag, order, hidden):
    g = dag.graph
    conditioned = set(dag.always_conditioned)
    for k, treatment in enumerate(order):
        history = set(order[:k])
        clean = {m for m in history if _is_clean(g, m, history - {m}, conditioned, hidden)}
        given = clean | conditioned
        m = _mutilated(g, treatment, order[k + 1:])
        opens_collider = _closure_up(m, given)
        paths = [tuple(p) for p in nx.all_simple_paths(m.to_undirected(as_view=True), treatment, OUTCOME_NODE)
                 if _path_active(m, p, given, opens_collider)]
        if paths:
            return min(paths, key=lambda p: _rank_path(dag, p))
    skeleton = g.to_undirected(as_view=True)
    paths = [tuple(p) for p in nx.all_simple_paths(skeleton, order[0], OUTCOME_NODE)]
    return min(paths, key=lambda p: _rank_path(dag, p)) if paths else (order[0], OUTCOME_NODE)


def check_identifiable(dag, estimand):
    estimand = Estimand(estimand)
    order = _treatment_order(dag, estimand)
    g = dag.graph
    descendants = set().union(*(nx.descendants(g, t) for t in order))
    candidates = sorted(dag.measured - set(order) - {OUTCOME_NODE} - descendants - dag.always_conditioned)
    hidden = _hidden_causes(dag)

    for size in range(len(candidates) + 1):
        for z in itertools.combinations(candidates, size):
            if all(_step_admissible(dag, order, k, z, hidden) for k in range(len(order))):
                witness = tuple(sorted(set(z) | dag.always_conditioned))
                logging.debug(f"{estimand.value}: identifiable, adjust for {witness}")
                return IdentifiabilityVerdict(estimand, True, witness=witness)

    path = _open_path(dag, order, hidden)
    logging.debug(f"{estimand.value}: not identifiable, open path {path}")
    return IdentifiabilityVerdict(estimand, False, open_path=path)


def check_all(dag):
    return [check_identifiable(dag, e) for e in Estimand]


# ==============================================================================
# TEXT FORMATS
# ==============================================================================

def parse_edge_list(text):
    nodes, edges = set(), set()
    measured, conditioned = None, set()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        header = HEADER_RE.match(line)
        if header:
            names = {n.strip() for n in header.group(2).split(",") if n.strip()}
            bad = [n for n in names if not re.fullmatch(r"[A-Za-z_]\w*", n)]
            if bad:
                raise SchemaError(f"invalid node name(s) {', '.join(sorted(bad))}", line=lineno)
            if header.group(1).lower() == "measured":
                measured = names
            else:
                conditioned = names
            nodes |= names
            continue
        edge = EDGE_RE.match(line)
        if not edge:
            raise SchemaError(f"expected 'A -> B' or a header, got '{raw.strip()}'", line=lineno)
        edges.add((edge.group(1), edge.group(2)))
        nodes |= {edge.group(1), edge.group(2)}
    if measured is None:
        raise SchemaError("missing 'measured:' header")
    return Dag(nodes, edges, measured, conditioned)


def format_path(dag, path):
    out = [path[0]]
    for a, b in zip(path, path[1:]):
        out.append("->" if (a, b) in dag.edges else "<-")
        out.append(b)
    return " ".join(out)


def verdict_records(dag, verdicts, graph_name=""):
    return [{
        "graph": graph_name,
        "estimand": v.estimand.value,
        "identifiable": v.identifiable,
        "witness": list(v.witness) if v.witness is not None else None,
        "open_path": list(v.open_path) if v.open_path is not None else None,
        "open_path_text": format_path(dag, v.open_path) if v.open_path is not None else None,
    } for v in verdicts]


def verdict_table(dag, verdicts):
    lines = [f"{'ESTIMAND':<10}{'IDENTIFIABLE':<14}DETAIL", f"{'-' * 8:<10}{'-' * 12:<14}{'-' * 6}"]
    for v in verdicts:
        if v.identifiable:
            detail = "adjust for {" + ", ".join(v.witness) + "}"
        else:
            detail = "open path " + format_path(dag, v.open_path)
        lines.append(f"{v.estimand.value:<10}{'yes' if v.identifiable else 'no':<14}{detail}")
    return "\n".join(lines)
