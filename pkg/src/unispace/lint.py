"""Structure linter: checks groupings against the cognitive limits.

Two regimes apply. A *mental* grouping is a classification the user must
hold in mind to pick a branch (menu, tab row, partition list); it is
capped by ``mental_elements`` and its nesting by ``mental_depth``. A
*perceptual* grouping is a flat collection displayed at once (toolbar,
desktop); it is capped by ``perceptual_elements`` / ``perceptual_depth``.
Depth is counted within a run of same-regime nodes, not across the whole
containment chain, so a domain > partition > site path does not trip the
mental depth rule by construction.

Mixed-scheme groupings are linted under the mental limits.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import UniError, CYCLE_DETECTED, INVALID_TEMPLATE
from .model import ComplexityLimits, MANDATORY_WORKPLACES

MENTAL_KINDS = {"menu", "tabs", "partitions", "sites", "workplaces", "group", "mixed"}
PERCEPTUAL_KINDS = {"toolbar", "desktop", "collection"}
LEAF_KINDS = {"tool", "item", "object", "portal", "label"}

RULE_MENTAL = "mental_elements"
RULE_PERCEPTUAL = "perceptual_elements"
RULE_MENTAL_DEPTH = "mental_depth"
RULE_PERCEPTUAL_DEPTH = "perceptual_depth"


@dataclass
class LintNode:
    name: str
    kind: str
    children: list["LintNode"] = field(default_factory=list)


@dataclass(frozen=True)
class Violation:
    path: str
    rule: str
    observed: int
    limit: int

    def row(self) -> tuple[str, str, int, int]:
        return (self.path, self.rule, self.observed, self.limit)


@dataclass
class ValidationReport:
    violations: list[Violation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def add(self, path: str, rule: str, observed: int, limit: int) -> None:
        self.violations.append(Violation(path, rule, observed, limit))


def _regime(kind: str) -> str | None:
    if kind in MENTAL_KINDS:
        return "mental"
    if kind in PERCEPTUAL_KINDS:
        return "perceptual"
    return None


def validate_complexity(root: LintNode, limits: ComplexityLimits | None = None) -> ValidationReport:
    """Walk the tree and report every limit violation as (path, rule,
    observed, limit). An empty report means the structure passes."""
    limits = limits or ComplexityLimits()
    report = ValidationReport()
    on_path: set[int] = set()

    def walk(node: LintNode, path: str, mental_run: int, perceptual_run: int) -> None:
        if id(node) in on_path:
            raise UniError(CYCLE_DETECTED, f"cycle through {path}")
        on_path.add(id(node))
        try:
            regime = _regime(node.kind)
            if regime == "mental":
                mental_run += 1
                perceptual_run = 0
                if len(node.children) > limits.mental_elements:
                    report.add(path, RULE_MENTAL, len(node.children), limits.mental_elements)
                if mental_run > limits.mental_depth:
                    report.add(path, RULE_MENTAL_DEPTH, mental_run, limits.mental_depth)
            elif regime == "perceptual":
                perceptual_run += 1
                mental_run = 0
                if len(node.children) > limits.perceptual_elements:
                    report.add(path, RULE_PERCEPTUAL, len(node.children), limits.perceptual_elements)
                if perceptual_run > limits.perceptual_depth:
                    report.add(path, RULE_PERCEPTUAL_DEPTH, perceptual_run, limits.perceptual_depth)
            else:
                mental_run = 0
                perceptual_run = 0
            for child in node.children:
                walk(child, f"{path}/{child.name}", mental_run, perceptual_run)
        finally:
            on_path.discard(id(node))

    walk(root, root.name, 0, 0)
    return report


def node_from_json(data: dict) -> LintNode:
    """Parse a lint fixture document (schema in docs/templates.md)."""
    if not isinstance(data, dict):
        raise UniError(INVALID_TEMPLATE, "lint node must be an object")
    name = data.get("name")
    kind = data.get("kind")
    if not isinstance(name, str) or not name:
        raise UniError(INVALID_TEMPLATE, "lint node needs a non-empty 'name'")
    if kind not in MENTAL_KINDS | PERCEPTUAL_KINDS | LEAF_KINDS:
        raise UniError(INVALID_TEMPLATE, f"unknown lint node kind: {kind!r}")
    children_raw = data.get("children", [])
    if not isinstance(children_raw, list):
        raise UniError(INVALID_TEMPLATE, "'children' must be an array")
    return LintNode(name=name, kind=kind, children=[node_from_json(c) for c in children_raw])


MAP_KINDS = {
    "domain": "partitions",
    "partition": "sites",
    "site": "workplaces",
    "workplace": "item",
}


def node_from_map(tree: dict) -> LintNode:
    """Adapt an environment-map tree (`uni map` output) to lint nodes.

    Mandatory workplaces are system-provided on every site; only the
    specialist stages count against the site's grouping limit.
    """
    children = tree.get("children", [])
    if tree.get("kind") == "site":
        children = [c for c in children if c.get("name") not in MANDATORY_WORKPLACES]
    return LintNode(
        name=tree.get("name", tree.get("kind", "node")),
        kind=MAP_KINDS.get(tree.get("kind", ""), "item"),
        children=[node_from_map(c) for c in children],
    )


def load_fixture(path: str | Path) -> LintNode:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise UniError(INVALID_TEMPLATE, f"cannot read lint fixture: {exc}") from exc
    if isinstance(data, dict) and data.get("kind") in MAP_KINDS:
        return node_from_map(data)
    return node_from_json(data)
