"""Wire contract between interface clients and executive servers.

One frame is one JSON object on one line, UTF-8, newline-terminated,
at most 1 MiB. Top-level fields are fixed to (v, type, seq, body) in
that order; body keys are sorted. Unknown fields are rejected so the
encode/decode round trip is the identity on canonical frames.

Replies to a command reuse the command's seq, so both directions stay
strictly monotone per session and every failed command gets exactly one
matching error reply.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .errors import UniError, MALFORMED, NO_ROUTE, UNSUPPORTED_VERSION
from .portals import LOCAL, Portal

PROTOCOL_VERSION = 1
MAX_FRAME = 1 << 20
DEFAULT_PORT = 7048

MESSAGE_TYPES = ("hello", "command", "render", "event", "error", "bye")


@dataclass
class Message:
    type: str
    seq: int
    body: dict
    v: int = PROTOCOL_VERSION


def _canon(value):
    if isinstance(value, dict):
        return {k: _canon(value[k]) for k in sorted(value)}
    if isinstance(value, list):
        return [_canon(v) for v in value]
    return value


def encode(message: Message) -> bytes:
    if message.type not in MESSAGE_TYPES:
        raise UniError(MALFORMED, f"unknown message type {message.type!r}")
    frame = {
        "v": message.v,
        "type": message.type,
        "seq": message.seq,
        "body": _canon(message.body),
    }
    data = json.dumps(frame, separators=(",", ":"), ensure_ascii=False)
    raw = data.encode("utf-8") + b"\n"
    if len(raw) > MAX_FRAME:
        raise UniError(MALFORMED, "frame exceeds 1 MiB")
    return raw


def decode(raw: bytes) -> Message:
    if len(raw) > MAX_FRAME:
        raise UniError(MALFORMED, "frame exceeds 1 MiB")
    try:
        data = json.loads(raw.decode("utf-8"))
    except (ValueError, UnicodeDecodeError) as exc:
        raise UniError(MALFORMED, f"frame is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise UniError(MALFORMED, "frame must be a JSON object")
    keys = set(data.keys())
    if keys != {"v", "type", "seq", "body"}:
        extra = keys - {"v", "type", "seq", "body"}
        missing = {"v", "type", "seq", "body"} - keys
        raise UniError(MALFORMED, f"frame fields wrong (extra={sorted(extra)}, missing={sorted(missing)})")
    if data["v"] != PROTOCOL_VERSION:
        raise UniError(UNSUPPORTED_VERSION, f"protocol version {data['v']!r} not supported")
    if data["type"] not in MESSAGE_TYPES:
        raise UniError(MALFORMED, f"unknown message type {data['type']!r}")
    if not isinstance(data["seq"], int) or isinstance(data["seq"], bool) or data["seq"] < 0:
        raise UniError(MALFORMED, "seq must be a non-negative integer")
    if not isinstance(data["body"], dict):
        raise UniError(MALFORMED, "body must be an object")
    return Message(type=data["type"], seq=data["seq"], body=data["body"], v=data["v"])


# ----------------------------------------------------------- render trees

RENDER_KINDS = (
    "space", "desktop", "toolbar", "tool", "portal",
    "object", "container", "label", "task_tab",
)


@dataclass
class RenderNode:
    node_id: str
    kind: str
    bounds: tuple[float, float, float, float]  # x, y, w, h in 0..1000 units
    label: str = ""
    sign: str | None = None
    command: str | None = None  # command_key for tool nodes
    meta: dict = field(default_factory=dict)
    children: list["RenderNode"] = field(default_factory=list)

    def to_dict(self) -> dict:
        out: dict = {
            "node_id": self.node_id,
            "kind": self.kind,
            "bounds": list(self.bounds),
            "label": self.label,
        }
        if self.sign is not None:
            out["sign"] = self.sign
        if self.command is not None:
            out["command"] = self.command
        if self.meta:
            out["meta"] = self.meta
        out["children"] = [c.to_dict() for c in self.children]
        return out


def validate_render_tree(tree: dict, is_root_space: bool) -> list[str]:
    """Structural check applied to every reply in test mode. Returns a
    list of problems; empty means the tree is valid."""
    problems: list[str] = []
    seen: set[str] = set()

    def within(child: list, parent: list) -> bool:
        cx, cy, cw, ch = child
        px, py, pw, ph = parent
        eps = 1e-6
        return (
            cx >= px - eps and cy >= py - eps
            and cx + cw <= px + pw + eps and cy + ch <= py + ph + eps
        )

    def walk(node: dict, parent_bounds: list | None) -> None:
        nid = node.get("node_id")
        if not isinstance(nid, str):
            problems.append("node without node_id")
            return
        if nid in seen:
            problems.append(f"duplicate node_id {nid} (tree must be acyclic)")
            return
        seen.add(nid)
        if node.get("kind") not in RENDER_KINDS:
            problems.append(f"{nid}: unknown kind {node.get('kind')!r}")
        bounds = node.get("bounds")
        if (
            not isinstance(bounds, list) or len(bounds) != 4
            or not all(isinstance(b, (int, float)) for b in bounds)
        ):
            problems.append(f"{nid}: bad bounds")
            return
        if parent_bounds is not None and not within(bounds, parent_bounds):
            problems.append(f"{nid}: bounds escape parent")
        for child in node.get("children", []):
            walk(child, bounds)

    if tree.get("kind") != "space":
        problems.append("root node must be a space")
    walk(tree, None)

    if not is_root_space:
        if not _has_exit(tree):
            problems.append("non-root space lacks an exit control")
    return problems


def _has_exit(node: dict) -> bool:
    if node.get("kind") == "tool" and node.get("command") == "exit":
        return True
    return any(_has_exit(c) for c in node.get("children", []))


# ------------------------------------------------------------------ route


@dataclass(frozen=True)
class Route:
    transport: str  # "Loopback" | "Tcp"
    address: str = ""
    description_language: str = "render-tree/1"


def route_select(portal: Portal, local_domain_id: str) -> Route:
    """Loopback for portals into the local domain, the portal's own
    communication descriptor otherwise."""
    target = portal.target
    if not target.remote and target.target.domain_id == local_domain_id:
        return Route(transport="Loopback")
    if portal.comm_agent and portal.comm_agent.get("address"):
        return Route(
            transport="Tcp",
            address=portal.comm_agent["address"],
            description_language=portal.interface_agent_hint or "render-tree/1",
        )
    if target.remote and target.endpoint.startswith("tcp:"):
        return Route(transport="Tcp", address=target.endpoint[4:])
    raise UniError(NO_ROUTE, "portal names a remote space but carries no route")
