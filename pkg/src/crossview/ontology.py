"""Domain schema: objects, parts, actions, attributes and their relations.

The ontology is stored as a JSON document::

    {"nodes": [{"id": "person", "kind": "Object", "label": "Person"}, ...],
     "edges": [{"src": "walking", "dst": "person", "relation": "CanPerform"}, ...]}

Edges point from the dependent node to its owner (a part to its object, an
action/attribute to the object or part it applies to).
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from itertools import combinations

KINDS = ("Object", "Part", "Action", "Attribute")
RELATIONS = ("PartOf", "CanPerform", "CanHave", "Incompatible")

# relation -> (allowed src kinds, allowed dst kinds)
_ENDPOINTS = {
    "PartOf": ({"Part"}, {"Object", "Part"}),
    "CanPerform": ({"Action"}, {"Object", "Part"}),
    "CanHave": ({"Attribute"}, {"Object", "Part"}),
    "Incompatible": ({"Action"}, {"Action"}),
}


class MalformedDocument(ValueError):
    pass


class SchemaViolation(ValueError):
    pass


class UnknownNodeId(KeyError):
    pass


@dataclass(frozen=True)
class OntologyNode:
    id: str
    kind: str
    label: str = ""

    def __post_init__(self):
        if self.kind not in KINDS:
            raise SchemaViolation(f"node {self.id!r}: unknown kind {self.kind!r}")


@dataclass(frozen=True)
class OntologyEdge:
    src: str
    dst: str
    relation: str


@dataclass(frozen=True)
class ParseGraph:
    """Grounded subgraph for one entity at one time.

    ``nodes`` are ontology ids; ``edges`` are (src, dst, relation) triples
    drawn from the ontology.
    """

    nodes: tuple[str, ...] = ()
    edges: tuple[tuple[str, str, str], ...] = ()


class OntologyGraph:
    """Immutable, validated ontology."""

    def __init__(self, nodes=(), edges=()):
        self._nodes: dict[str, OntologyNode] = {}
        for n in nodes:
            if n.id in self._nodes:
                raise SchemaViolation(f"duplicate node id {n.id!r}")
            self._nodes[n.id] = n
        seen = set()
        for e in edges:
            if e.relation not in RELATIONS:
                raise SchemaViolation(f"edge {e.src}->{e.dst}: unknown relation {e.relation!r}")
            for end in (e.src, e.dst):
                if end not in self._nodes:
                    raise SchemaViolation(f"edge {e.src}->{e.dst} ({e.relation}) references unknown node {end!r}")
            src_ok, dst_ok = _ENDPOINTS[e.relation]
            if self._nodes[e.src].kind not in src_ok or self._nodes[e.dst].kind not in dst_ok:
                raise SchemaViolation(
                    f"edge {e.src}->{e.dst}: {e.relation} cannot connect "
                    f"{self._nodes[e.src].kind} to {self._nodes[e.dst].kind}")
            seen.add(e)
            if e.relation == "Incompatible":
                # stored symmetrically
                seen.add(OntologyEdge(e.dst, e.src, e.relation))
        self._edges = frozenset(seen)
        self._check_partof_forest()

        self._incompatible = {(e.src, e.dst) for e in self._edges if e.relation == "Incompatible"}
        self._actions: dict[str, list[str]] = {}
        self._attrs: dict[str, list[str]] = {}
        for e in self._edges:
            if e.relation == "CanPerform":
                self._actions.setdefault(e.dst, []).append(e.src)
            elif e.relation == "CanHave":
                self._attrs.setdefault(e.dst, []).append(e.src)
        for d in (self._actions, self._attrs):
            for k in d:
                d[k].sort()

    def _check_partof_forest(self):
        parent: dict[str, str] = {}
        for e in self._edges:
            if e.relation != "PartOf":
                continue
            if e.src in parent and parent[e.src] != e.dst:
                raise SchemaViolation(f"part {e.src!r} has two PartOf parents")
            parent[e.src] = e.dst
        for start in parent:
            node, steps = start, 0
            while node in parent:
                node = parent[node]
                steps += 1
                if node == start or steps > len(parent):
                    raise SchemaViolation(f"PartOf cycle through {start!r}")

    @property
    def nodes(self) -> tuple[OntologyNode, ...]:
        return tuple(self._nodes.values())

    @property
    def edges(self) -> frozenset[OntologyEdge]:
        return self._edges

    def node(self, node_id: str) -> OntologyNode:
        try:
            return self._nodes[node_id]
        except KeyError:
            raise UnknownNodeId(node_id) from None

    def __contains__(self, node_id) -> bool:
        return node_id in self._nodes

    def ids_of_kind(self, kind: str) -> list[str]:
        return sorted(n.id for n in self._nodes.values() if n.kind == kind)

    def object_types(self) -> list[str]:
        return self.ids_of_kind("Object")

    def actions_for(self, type_id: str) -> list[str]:
        """Actions an object (or part) can perform, sorted by id."""
        self.node(type_id)
        return list(self._actions.get(type_id, []))

    def attributes_for(self, type_id: str) -> list[str]:
        self.node(type_id)
        return list(self._attrs.get(type_id, []))

    def parts_of(self, type_id: str) -> list[str]:
        return sorted(e.src for e in self._edges if e.relation == "PartOf" and e.dst == type_id)

    def incompatible(self, a: str, b: str) -> bool:
        return (a, b) in self._incompatible

    def has_edge(self, src: str, dst: str, relation: str) -> bool:
        return OntologyEdge(src, dst, relation) in self._edges

    def __eq__(self, other):
        if not isinstance(other, OntologyGraph):
            return NotImplemented
        return set(self.nodes) == set(other.nodes) and self.edges == other.edges

    def __repr__(self):
        return f"OntologyGraph({len(self._nodes)} nodes, {len(self._edges)} edges)"


_NODE_FIELDS = {"id", "kind", "label"}
_EDGE_FIELDS = {"src", "dst", "relation"}


def load_ontology(doc) -> OntologyGraph:
    """Parse an ontology document (JSON text, or an already-decoded dict)."""
    if isinstance(doc, (str, bytes)):
        try:
            doc = json.loads(doc)
        except json.JSONDecodeError as exc:
            raise MalformedDocument(f"ontology is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict) or set(doc) != {"nodes", "edges"}:
        raise MalformedDocument("ontology must be an object with exactly 'nodes' and 'edges'")
    nodes, edges = [], []
    for i, rec in enumerate(doc["nodes"]):
        if not isinstance(rec, dict) or not {"id", "kind"} <= set(rec) or set(rec) - _NODE_FIELDS:
            raise SchemaViolation(f"nodes[{i}]: expected fields {sorted(_NODE_FIELDS)}, got {rec!r}")
        nodes.append(OntologyNode(str(rec["id"]), rec["kind"], str(rec.get("label", rec["id"]))))
    for i, rec in enumerate(doc["edges"]):
        if not isinstance(rec, dict) or set(rec) != _EDGE_FIELDS:
            raise SchemaViolation(f"edges[{i}]: expected fields {sorted(_EDGE_FIELDS)}, got {rec!r}")
        edges.append(OntologyEdge(str(rec["src"]), str(rec["dst"]), rec["relation"]))
    return OntologyGraph(nodes, edges)


def dump_ontology(ont: OntologyGraph) -> str:
    nodes = [{"id": n.id, "kind": n.kind, "label": n.label} for n in sorted(ont.nodes, key=lambda n: n.id)]
    emitted, edges = set(), []
    for e in sorted(ont.edges, key=lambda e: (e.relation, e.src, e.dst)):
        if e.relation == "Incompatible":
            key = frozenset((e.src, e.dst))
            if key in emitted:
                continue
            emitted.add(key)
        edges.append({"src": e.src, "dst": e.dst, "relation": e.relation})
    return json.dumps({"nodes": nodes, "edges": edges}, indent=1)


def is_valid_parse_graph(ont: OntologyGraph, pg: ParseGraph) -> tuple[bool, list[str]]:
    """Check that ``pg`` is a legal grounded subgraph of ``ont``.

    Returns (valid, violations). Raises UnknownNodeId for ids not in the
    ontology.
    """
    violations = []
    for nid in pg.nodes:
        ont.node(nid)
    grounded = set(pg.nodes)
    for src, dst, rel in pg.edges:
        ont.node(src)
        ont.node(dst)
        if not ont.has_edge(src, dst, rel):
            violations.append(f"relation {src}-{rel}->{dst} is not in the ontology")
        if src not in grounded or dst not in grounded:
            violations.append(f"relation {src}-{rel}->{dst} touches an ungrounded node")
    actions = sorted({n for n in grounded if ont.node(n).kind == "Action"})
    for a, b in combinations(actions, 2):
        if ont.incompatible(a, b):
            violations.append(f"incompatible actions grounded together: {a}, {b}")
    return not violations, violations


def entity_parse_graph(object_type: str, action: str | None = None, attributes=None) -> ParseGraph:
    """Parse graph for a single entity: its type, action and true attributes."""
    nodes = [object_type]
    edges = []
    if action is not None:
        nodes.append(action)
        edges.append((action, object_type, "CanPerform"))
    for attr, val in sorted((attributes or {}).items()):
        if val:
            nodes.append(attr)
            edges.append((attr, object_type, "CanHave"))
    return ParseGraph(tuple(nodes), tuple(edges))


PERSON_ACTIONS = ("bending", "running", "sitting", "standing", "walking")
PERSON_ATTRIBUTES = ("glasses", "hat", "jeans", "long_hair", "long_pants",
                     "long_sleeve", "male", "shorts", "tshirt")


def default_ontology() -> OntologyGraph:
    """People, vehicles and bicycles with parts, actions and attributes."""
    nodes = [
        OntologyNode("person", "Object", "Person"),
        OntologyNode("vehicle", "Object", "Vehicle"),
        OntologyNode("bicycle", "Object", "Bicycle"),
    ]
    edges = []
    for part, owner in [("head", "person"), ("torso", "person"), ("arm", "person"), ("leg", "person"),
                        ("hand", "arm"), ("wheel", "vehicle"), ("door", "vehicle"),
                        ("bike_wheel", "bicycle"), ("handlebar", "bicycle")]:
        nodes.append(OntologyNode(part, "Part", part.replace("_", " ")))
        edges.append(OntologyEdge(part, owner, "PartOf"))
    for a in PERSON_ACTIONS:
        nodes.append(OntologyNode(a, "Action", a))
        edges.append(OntologyEdge(a, "person", "CanPerform"))
    nodes.append(OntologyNode("waving", "Action", "waving"))
    edges.append(OntologyEdge("waving", "arm", "CanPerform"))
    for a in ("moving", "parked"):
        nodes.append(OntologyNode(a, "Action", a))
        edges.append(OntologyEdge(a, "vehicle", "CanPerform"))
        edges.append(OntologyEdge(a, "bicycle", "CanPerform"))
    for a in PERSON_ATTRIBUTES:
        nodes.append(OntologyNode(a, "Attribute", a.replace("_", " ")))
        edges.append(OntologyEdge(a, "person", "CanHave"))
    for a in ("red", "large"):
        nodes.append(OntologyNode(a, "Attribute", a))
        edges.append(OntologyEdge(a, "vehicle", "CanHave"))
    for a, b in [("sitting", "standing"), ("sitting", "walking"), ("sitting", "running"),
                 ("standing", "walking"), ("standing", "running"), ("walking", "running"),
                 ("moving", "parked")]:
        edges.append(OntologyEdge(a, b, "Incompatible"))
    return OntologyGraph(nodes, edges)
