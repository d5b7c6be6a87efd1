"""Operator-provided system model: a weighted tree plus signal exclusion rules.

The tree has one root (the monitored system), group/device levels below it,
and template leaves. Device nodes match real devices by literal name or by a
trailing-``*`` prefix pattern; devices matched through a pattern get a
concrete node auto-created beneath the pattern node, and unknown devices land
under an ``unassigned`` group. Template leaves are auto-created per device on
first sight. Weights live on nodes in [0, 100]; nodes declared without a
weight take the default and are treated as implicitly weighted by the
aggregation step.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

from .aggregate import SignalKey
from .detector import AnomalousPoint

logger = logging.getLogger(__name__)

KIND_ROOT = "root"
KIND_GROUP = "group"
KIND_DEVICE = "device"
KIND_LEAF = "template-leaf"
_KINDS = (KIND_ROOT, KIND_GROUP, KIND_DEVICE, KIND_LEAF)

UNASSIGNED_GROUP = "unassigned"

_NODE_KEYS = {"id", "parent", "kind", "weight", "match"}
_FILTER_KEYS = {"field", "pattern"}
_DOC_KEYS = {"nodes", "filters", "default_weight"}


class TopologyError(ValueError):
    """Invalid topology document."""


@dataclass
class TopologyNode:
    node_id: str
    parent: str | None
    kind: str
    weight: float = 50.0
    match: str | None = None
    explicit_weight: bool = False


@dataclass
class FilterRule:
    field: str  # "device" | "template"
    pattern: str

    def matches(self, point: AnomalousPoint) -> bool:
        value = point.key.device if self.field == "device" else str(point.key.template_id)
        return match_pattern(self.pattern, value)


def match_pattern(pattern: str, value: str) -> bool:
    if pattern.endswith("*"):
        return value.startswith(pattern[:-1])
    return value == pattern


@dataclass
class Topology:
    nodes: dict[str, TopologyNode]
    children: dict[str, list[str]]
    root_id: str
    filters: list[FilterRule] = field(default_factory=list)
    default_weight: float = 50.0

    def __post_init__(self) -> None:
        self.depth: dict[str, int] = {}
        self.by_depth: dict[int, list[str]] = {}
        self._index_depths()
        self._device_literals: dict[str, str] = {}
        self._device_patterns: list[tuple[str, str]] = []  # (prefix, node_id)
        for node in self.nodes.values():
            if node.kind != KIND_DEVICE:
                continue
            rule = node.match if node.match is not None else node.node_id
            if rule.endswith("*"):
                self._device_patterns.append((rule[:-1], node.node_id))
            else:
                self._device_literals[rule] = node.node_id
        # Longest prefix first; ties broken lexicographically by node id.
        self._device_patterns.sort(key=lambda item: (-len(item[0]), item[1]))
        self._device_cache: dict[str, str] = {}
        self._leaf_cache: dict[tuple[str, int], str] = {}
        self._path_weights: dict[str, list[float]] = {}

    def _index_depths(self) -> None:
        self.depth.clear()
        self.by_depth.clear()
        stack = [(self.root_id, 0)]
        while stack:
            node_id, d = stack.pop()
            self.depth[node_id] = d
            self.by_depth.setdefault(d, []).append(node_id)
            for child in reversed(self.children.get(node_id, [])):
                stack.append((child, d + 1))
        for ids in self.by_depth.values():
            ids.sort()

    def _add_node(self, node: TopologyNode) -> None:
        if node.node_id in self.nodes:
            raise TopologyError(f"auto-created node id collides with declared node {node.node_id!r}")
        self.nodes[node.node_id] = node
        self.children.setdefault(node.parent, []).append(node.node_id)
        self.children.setdefault(node.node_id, [])
        d = self.depth[node.parent] + 1
        self.depth[node.node_id] = d
        self.by_depth.setdefault(d, []).append(node.node_id)

    def _ensure_unassigned(self) -> str:
        node = self.nodes.get(UNASSIGNED_GROUP)
        if node is not None:
            return node.node_id
        self._add_node(
            TopologyNode(UNASSIGNED_GROUP, self.root_id, KIND_GROUP, self.default_weight)
        )
        return UNASSIGNED_GROUP

    def resolve_device(self, device: str) -> str:
        node_id = self._device_cache.get(device)
        if node_id is not None:
            return node_id
        literal = self._device_literals.get(device)
        if literal is not None:
            node_id = literal
        else:
            for prefix, pattern_node in self._device_patterns:
                if device.startswith(prefix):
                    node_id = f"{pattern_node}/{device}"
                    if node_id not in self.nodes:
                        self._add_node(
                            TopologyNode(node_id, pattern_node, KIND_DEVICE, self.default_weight)
                        )
                    break
            else:
                group = self._ensure_unassigned()
                node_id = f"{group}/{device}"
                if node_id not in self.nodes:
                    self._add_node(TopologyNode(node_id, group, KIND_DEVICE, self.default_weight))
        self._device_cache[device] = node_id
        return node_id

    def resolve_leaf(self, key: SignalKey) -> str:
        """Leaf node for a signal, auto-created under its device on first sight."""
        cache_key = (key.device, key.template_id)
        leaf = self._leaf_cache.get(cache_key)
        if leaf is not None:
            return leaf
        device_node = self.resolve_device(key.device)
        wanted = str(key.template_id)
        best: tuple[int, str] | None = None  # (prefix length, node id)
        for child_id in self.children[device_node]:
            child = self.nodes[child_id]
            if child.kind != KIND_LEAF or child.match is None:
                continue
            if child.match.endswith("*"):
                prefix = child.match[:-1]
                if wanted.startswith(prefix):
                    # Longest prefix wins; ties break toward the smaller node id.
                    if (
                        best is None
                        or len(prefix) > best[0]
                        or (len(prefix) == best[0] and child_id < best[1])
                    ):
                        best = (len(prefix), child_id)
            elif child.match == wanted:
                best = (len(wanted) + 1, child_id)
                break
        if best is not None:
            leaf = best[1]
        else:
            leaf = f"{device_node}/t{key.template_id}"
            if leaf not in self.nodes:
                self._add_node(TopologyNode(leaf, device_node, KIND_LEAF, self.default_weight))
        self._leaf_cache[cache_key] = leaf
        return leaf

    def path_weights(self, leaf_id: str) -> list[float]:
        """Weights along leaf -> root, root excluded, leaf first."""
        cached = self._path_weights.get(leaf_id)
        if cached is not None:
            return cached
        weights: list[float] = []
        node = self.nodes[leaf_id]
        while node.parent is not None:
            weights.append(node.weight)
            node = self.nodes[node.parent]
        self._path_weights[leaf_id] = weights
        return weights

    def keep(self, point: AnomalousPoint) -> bool:
        """False when any exclusion rule matches the point's device or template."""
        return not any(rule.matches(point) for rule in self.filters)


def load_topology(doc: dict, path: str = "<topology>") -> Topology:
    """Validate a topology document and build the indexed tree."""
    if not isinstance(doc, dict):
        raise TopologyError(f"{path}: document must be a mapping")
    unknown = set(doc) - _DOC_KEYS
    if unknown:
        raise TopologyError(f"{path}: unknown keys {sorted(unknown)}")
    default_weight = float(doc.get("default_weight", 50.0))
    if not 0.0 <= default_weight <= 100.0:
        raise TopologyError(f"{path}: default_weight {default_weight} outside [0, 100]")

    raw_nodes = doc.get("nodes", [])
    if not raw_nodes:
        raise TopologyError(f"{path}: no nodes declared")
    nodes: dict[str, TopologyNode] = {}
    children: dict[str, list[str]] = {}
    roots: list[str] = []
    for i, entry in enumerate(raw_nodes):
        if not isinstance(entry, dict):
            raise TopologyError(f"{path}: nodes[{i}] must be a mapping")
        unknown = set(entry) - _NODE_KEYS
        if unknown:
            raise TopologyError(f"{path}: nodes[{i}] unknown keys {sorted(unknown)}")
        if "id" not in entry:
            raise TopologyError(f"{path}: nodes[{i}] missing id")
        node_id = str(entry["id"])
        if node_id in nodes:
            raise TopologyError(f"{path}: duplicate node id {node_id!r}")
        kind = entry.get("kind", KIND_GROUP)
        if kind not in _KINDS:
            raise TopologyError(f"{path}: node {node_id!r} has unknown kind {kind!r}")
        parent = entry.get("parent")
        parent = None if parent is None else str(parent)
        explicit = "weight" in entry
        weight = float(entry.get("weight", default_weight))
        if not 0.0 <= weight <= 100.0:
            raise TopologyError(f"{path}: node {node_id!r} weight {weight} outside [0, 100]")
        match = entry.get("match")
        nodes[node_id] = TopologyNode(
            node_id, parent, kind, weight, None if match is None else str(match), explicit
        )
        children.setdefault(node_id, [])
        if parent is None:
            roots.append(node_id)

    if len(roots) != 1:
        raise TopologyError(f"{path}: expected exactly one root, found {sorted(roots) or 'none'}")
    root_id = roots[0]
    if nodes[root_id].kind != KIND_ROOT:
        raise TopologyError(f"{path}: root node {root_id!r} must have kind 'root'")

    for node in nodes.values():
        if node.parent is None:
            continue
        if node.parent not in nodes:
            raise TopologyError(f"{path}: node {node.node_id!r} references missing parent {node.parent!r}")
        children[node.parent].append(node.node_id)
        if node.kind == KIND_LEAF:
            parent_node = nodes[node.parent]
            if parent_node.kind != KIND_DEVICE:
                raise TopologyError(
                    f"{path}: template-leaf {node.node_id!r} must sit under a device node"
                )
            rule = parent_node.match if parent_node.match is not None else parent_node.node_id
            if rule.endswith("*"):
                raise TopologyError(
                    f"{path}: template-leaf {node.node_id!r} cannot sit under pattern device "
                    f"{parent_node.node_id!r}"
                )

    reachable = set()
    stack = [root_id]
    while stack:
        node_id = stack.pop()
        if node_id in reachable:
            raise TopologyError(f"{path}: cycle involving node {node_id!r}")
        reachable.add(node_id)
        stack.extend(children[node_id])
    orphans = set(nodes) - reachable
    if orphans:
        raise TopologyError(f"{path}: orphan nodes unreachable from root: {sorted(orphans)}")

    filters: list[FilterRule] = []
    for i, entry in enumerate(doc.get("filters", [])):
        if not isinstance(entry, dict):
            raise TopologyError(f"{path}: filters[{i}] must be a mapping")
        unknown = set(entry) - _FILTER_KEYS
        if unknown:
            raise TopologyError(f"{path}: filters[{i}] unknown keys {sorted(unknown)}")
        fld = entry.get("field")
        if fld not in ("device", "template"):
            raise TopologyError(f"{path}: filters[{i}] field must be 'device' or 'template'")
        filters.append(FilterRule(fld, str(entry.get("pattern", ""))))

    return Topology(nodes, children, root_id, filters, default_weight)
