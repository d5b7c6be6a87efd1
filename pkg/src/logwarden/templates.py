"""Online log template mining with a Drain-style fixed-depth parse tree.

Each message is tokenized, routed through a tree keyed first by token count
and then by its leading tokens (digit-bearing tokens are wildcarded as tree
keys), and matched against the templates stored at the reached leaf. A match
above the similarity threshold updates the template in place, wildcarding
mismatched positions; anything else becomes a new template with a fresh id.
Ids are stable for the lifetime of the miner and across export/import.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

WILDCARD = "<*>"

_WHITESPACE = re.compile(r"\s+")
_HAS_DIGIT = re.compile(r"\d")


@dataclass
class LogTemplate:
    """A mined event type: token skeleton with wildcard slots and a stable id."""

    template_id: int
    tokens: list[str]
    match_count: int = 0

    def render(self) -> str:
        return " ".join(self.tokens)


@dataclass
class MinerConfig:
    tree_depth: int = 4
    similarity_threshold: float = 0.5
    max_children: int = 100
    # Ordered (regex, placeholder) pairs applied to the message before tokenizing.
    masking: list[tuple[str, str]] = field(default_factory=list)

    def validate(self) -> None:
        if self.tree_depth < 2:
            raise ValueError("miner.tree_depth: must be >= 2")
        if not 0.0 < self.similarity_threshold <= 1.0:
            raise ValueError("miner.similarity_threshold: must be in (0, 1]")
        if self.max_children < 1:
            raise ValueError("miner.max_children: must be >= 1")


class _Node:
    __slots__ = ("children", "templates")

    def __init__(self) -> None:
        self.children: dict = {}
        self.templates: list[LogTemplate] = []


class TemplateMiner:
    """Single-writer template miner; shard one instance per datacenter."""

    def __init__(self, config: MinerConfig | None = None) -> None:
        self.config = config or MinerConfig()
        self.config.validate()
        self._root = _Node()
        self._templates: dict[int, LogTemplate] = {}
        self._next_id = 1
        self._masks = [(re.compile(pat), repl) for pat, repl in self.config.masking]

    @property
    def templates(self) -> list[LogTemplate]:
        return [self._templates[tid] for tid in sorted(self._templates)]

    def tokenize(self, message: str) -> list[str]:
        for pattern, placeholder in self._masks:
            message = pattern.sub(placeholder, message)
        return [tok for tok in _WHITESPACE.split(message) if tok]

    def assign(self, message: str) -> tuple[int, bool]:
        """Tokenize and match one message; returns (template_id, is_new)."""
        return self.match_template(self.tokenize(message))

    def match_template(self, tokens: list[str]) -> tuple[int, bool]:
        if not tokens:
            raise ValueError("cannot match an empty token list")
        leaf = self._descend(tokens, create=True)
        best: LogTemplate | None = None
        best_sim = 0.0
        length = len(tokens)
        # Leaf templates are kept in creation (id) order, so a strict comparison
        # breaks similarity ties toward the oldest template.
        for tpl in leaf.templates:
            same = 0
            for stored, got in zip(tpl.tokens, tokens):
                if stored == got or stored == WILDCARD:
                    same += 1
            sim = same / length
            if sim > best_sim:
                best, best_sim = tpl, sim
        if best is not None and best_sim >= self.config.similarity_threshold:
            for i, got in enumerate(tokens):
                if best.tokens[i] != got:
                    best.tokens[i] = WILDCARD
            best.match_count += 1
            return best.template_id, False
        tpl = LogTemplate(template_id=self._next_id, tokens=list(tokens), match_count=1)
        self._next_id += 1
        self._templates[tpl.template_id] = tpl
        leaf.templates.append(tpl)
        return tpl.template_id, True

    def _descend(self, tokens: list[str], create: bool) -> _Node:
        node = self._root
        path_keys = [len(tokens)]
        # Levels below the token-count level use the leading tokens as keys.
        for i in range(min(len(tokens), self.config.tree_depth - 1)):
            tok = tokens[i]
            path_keys.append(WILDCARD if _HAS_DIGIT.search(tok) else tok)
        for key in path_keys:
            child = node.children.get(key)
            if child is None:
                if key != WILDCARD and len(node.children) >= self.config.max_children:
                    # Full internal node: overflow keys share a catch-all child.
                    key = WILDCARD
                    child = node.children.get(key)
                if child is None:
                    if not create:
                        raise KeyError(key)
                    child = _Node()
                    node.children[key] = child
            node = child
        return node

    def export_templates(self) -> list[dict]:
        """Stable export document: list of {id, tokens, match_count} ordered by id."""
        return [
            {"id": tpl.template_id, "tokens": list(tpl.tokens), "match_count": tpl.match_count}
            for tpl in self.templates
        ]

    @classmethod
    def import_templates(cls, doc: list[dict], config: MinerConfig | None = None) -> "TemplateMiner":
        """Rebuild a miner whose assignments match the exporting miner's."""
        miner = cls(config)
        seen: set[int] = set()
        for entry in sorted(doc, key=lambda e: e["id"]):
            tid = entry["id"]
            if tid in seen:
                raise ValueError(f"duplicate template id {tid} in import document")
            seen.add(tid)
            tokens = list(entry["tokens"])
            if not tokens:
                raise ValueError(f"template id {tid} has no tokens")
            tpl = LogTemplate(template_id=tid, tokens=tokens, match_count=entry.get("match_count", 0))
            miner._templates[tid] = tpl
            miner._descend(tokens, create=True).templates.append(tpl)
            miner._next_id = max(miner._next_id, tid + 1)
        return miner
