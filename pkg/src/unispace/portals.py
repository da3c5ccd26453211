"""Portals: the signs that both name a place or task and carry the user
there.

A portal stores its destination plus everything needed to get there:
agent hints, the data sites the work needs, parameters, a route
descriptor and a work context id. Indirection collapses when the portal
is created — a portal made from another portal stores the original
destination — so resolution is always a single step.

Portable records are canonical one-line JSON with a fixed field order,
signed by the exporting domain so a peer can verify where a portal came
from.
"""

from __future__ import annotations

import base64
import json
from dataclasses import dataclass, field

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
    Ed25519PublicKey,
)

from .errors import (
    UniError,
    AT_ROOT,
    BAD_RECORD,
    PORTAL_DANGLING,
    SIGNATURE_INVALID,
    not_found,
)
from .signs import ConceptualType, IdFactory, Sign, SignId, SignRegistry

TARGET_KINDS = {
    "Domain", "Partition", "Site", "Workplace",
    "StorageSection", "Container", "ObjectPart", "Task",
}

LOCAL = "local"
RECORD_VERSION = 1


@dataclass(frozen=True)
class PortalTarget:
    kind: str
    target: SignId
    endpoint: str = LOCAL  # "local" or "tcp:host:port"

    def __post_init__(self):
        if self.kind not in TARGET_KINDS:
            raise UniError(BAD_RECORD, f"unknown portal target kind {self.kind!r}")

    @property
    def remote(self) -> bool:
        return self.endpoint != LOCAL

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "domain": self.target.domain_id,
            "id": self.target.local_id,
            "endpoint": self.endpoint,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "PortalTarget":
        return cls(
            kind=data["kind"],
            target=SignId(data["domain"], data["id"]),
            endpoint=data.get("endpoint", LOCAL),
        )


@dataclass
class Portal:
    sign: Sign
    target: PortalTarget
    interface_agent_hint: str = "render-tree/1"
    software_agent_ref: str | None = None
    data_site_refs: list[str] = field(default_factory=list)
    parameters: dict[str, str] = field(default_factory=dict)
    comm_agent: dict | None = None  # {"protocol": ..., "address": ...}
    context_id: str = ""
    spawn_task: bool = False  # entering may open an implicit task tab

    @property
    def id(self) -> SignId:
        return self.sign.id


@dataclass
class Frame:
    space: PortalTarget
    entry_portal: str | None  # portal sign id, None for the bottom frame
    storage_mark: int = 0  # command-log position for exit-without-save
    workplace: str | None = None  # workplace sign id when space is a workplace
    subtask: str | None = None  # task id when the frame was opened by a spawn

    def snapshot(self) -> tuple:
        return (self.space.kind, self.space.target.compact(), self.space.endpoint,
                self.entry_portal)


@dataclass
class SessionLocation:
    """Stack of entered spaces. The bottom frame is the task-management
    workplace of the system site and can never be popped."""

    frames: list[Frame]

    @property
    def current(self) -> Frame:
        return self.frames[-1]

    @property
    def depth(self) -> int:
        return len(self.frames)

    def push(self, frame: Frame) -> None:
        self.frames.append(frame)

    def pop(self) -> Frame:
        if len(self.frames) <= 1:
            raise UniError(AT_ROOT, "already at the task-management workplace")
        return self.frames.pop()

    def value(self) -> tuple:
        return tuple(f.snapshot() for f in self.frames)


class DomainKeys:
    """Ed25519 signing identity of a domain plus the verify keys it has
    learned about (its own, and peers' after a card exchange).

    Only raw key bytes are held, so instances deepcopy cleanly; key
    objects are built per call, which is cheap at desk scale.
    """

    def __init__(self, private_raw: bytes | None = None):
        if private_raw is None:
            from cryptography.hazmat.primitives.serialization import (
                Encoding, NoEncryption, PrivateFormat,
            )
            private_raw = Ed25519PrivateKey.generate().private_bytes(
                Encoding.Raw, PrivateFormat.Raw, NoEncryption()
            )
        self._raw = private_raw
        self.known: dict[str, bytes] = {}  # domain_id -> raw public key

    def private_raw(self) -> bytes:
        return self._raw

    def public_raw(self) -> bytes:
        from cryptography.hazmat.primitives.serialization import Encoding, PublicFormat
        key = Ed25519PrivateKey.from_private_bytes(self._raw)
        return key.public_key().public_bytes(Encoding.Raw, PublicFormat.Raw)

    def trust(self, domain_id: str, public_raw: bytes) -> None:
        self.known[domain_id] = public_raw

    def sign(self, payload: bytes) -> bytes:
        return Ed25519PrivateKey.from_private_bytes(self._raw).sign(payload)

    def verify(self, domain_id: str, payload: bytes, signature: bytes) -> bool:
        raw = self.known.get(domain_id)
        if raw is None:
            return False
        try:
            Ed25519PublicKey.from_public_bytes(raw).verify(signature, payload)
            return True
        except InvalidSignature:
            return False

    def verify_any(self, payload: bytes, signature: bytes) -> str | None:
        for domain_id, raw in self.known.items():
            try:
                Ed25519PublicKey.from_public_bytes(raw).verify(signature, payload)
                return domain_id
            except InvalidSignature:
                continue
        return None


class PortalCatalog:
    """All portals of one domain, with collapse-at-creation."""

    def __init__(self, ids: IdFactory, registry: SignRegistry):
        self.ids = ids
        self.registry = registry
        self.portals: dict[str, Portal] = {}

    def get(self, portal_id: str) -> Portal:
        portal = self.portals.get(portal_id)
        if portal is None:
            raise not_found("portal")
        return portal

    def find_by_target(self, target: SignId) -> Portal | None:
        for portal in self.portals.values():
            if portal.target.target == target:
                return portal
        return None

    def create(
        self,
        target: PortalTarget,
        name: str,
        tags: set[str] | None = None,
        context_id: str = "",
        parameters: dict[str, str] | None = None,
        comm_agent: dict | None = None,
        software_agent_ref: str | None = None,
        data_site_refs: list[str] | None = None,
        spawn_task: bool = False,
        _id: SignId | None = None,
    ) -> Portal:
        # One level of indirection only: a portal to a portal stores the
        # original destination.
        existing = self.portals.get(target.target.compact())
        if existing is not None:
            if comm_agent is None:
                comm_agent = dict(existing.comm_agent) if existing.comm_agent else None
            if parameters is None:
                parameters = dict(existing.parameters)
            if data_site_refs is None:
                data_site_refs = list(existing.data_site_refs)
            software_agent_ref = software_agent_ref or existing.software_agent_ref
            target = existing.target
        sign = Sign(
            id=_id or self.ids.new(),
            name=name,
            ctype=ConceptualType.PORTAL,
            tags=set(tags or set()),
        )
        portal = Portal(
            sign=sign,
            target=target,
            parameters=dict(parameters or {}),
            comm_agent=comm_agent,
            context_id=context_id,
            software_agent_ref=software_agent_ref,
            data_site_refs=list(data_site_refs or []),
            spawn_task=spawn_task,
        )
        self.portals[sign.id.compact()] = portal
        self.registry.register(sign, "portal")
        return portal

    def remove(self, portal_id: str) -> None:
        portal = self.portals.pop(portal_id, None)
        if portal is not None:
            self.registry.unregister(portal.sign.id)

    def resolve(self, portal: Portal) -> PortalTarget:
        """Return the stored destination; never chases chains (there are
        none by construction). Local destinations must still exist."""
        if not portal.target.remote and portal.target.target.domain_id == self.ids.domain_id:
            if not self.registry.exists(portal.target.target):
                raise UniError(PORTAL_DANGLING, "portal destination was deleted")
        return portal.target


# ------------------------------------------------------- portable records


def record_payload(portal: Portal) -> list:
    """Record fields in their fixed order, sans signature."""
    route = portal.comm_agent if portal.comm_agent else None
    return [
        ("v", RECORD_VERSION),
        ("target", portal.target.to_dict()),
        ("name", portal.sign.name),
        ("params", {k: portal.parameters[k] for k in sorted(portal.parameters)}),
        ("route", route),
        ("context", portal.context_id),
    ]


def _encode_fields(fields: list) -> bytes:
    return json.dumps(dict(fields), separators=(",", ":"), ensure_ascii=False).encode("utf-8")


def export_portal(portal: Portal, keys: DomainKeys) -> bytes:
    fields = record_payload(portal)
    payload = _encode_fields(fields)
    sig = base64.b64encode(keys.sign(payload)).decode("ascii")
    return _encode_fields(fields + [("sig", sig)])


RECORD_FIELDS = ("v", "target", "name", "params", "route", "context", "sig")
TARGET_FIELDS = ("kind", "domain", "id", "endpoint")


def parse_record(record: bytes) -> dict:
    """Structural validation only; raises BAD_RECORD on any defect."""
    try:
        pairs = json.loads(
            record.decode("utf-8"), object_pairs_hook=lambda p: p
        )
    except (ValueError, UnicodeDecodeError) as exc:
        raise UniError(BAD_RECORD, f"record is not valid JSON: {exc}") from exc
    if not isinstance(pairs, list) or tuple(k for k, _ in pairs) != RECORD_FIELDS:
        raise UniError(BAD_RECORD, "record fields missing or out of order")
    data = {k: v for k, v in pairs}
    target_pairs = data["target"]
    if not isinstance(target_pairs, list) or tuple(k for k, _ in target_pairs) != TARGET_FIELDS:
        raise UniError(BAD_RECORD, "target fields missing or out of order")
    data["target"] = {k: v for k, v in target_pairs}
    data["params"] = dict(data["params"]) if isinstance(data["params"], list) else data["params"]
    if isinstance(data["route"], list):
        data["route"] = dict(data["route"])
    if data["v"] != RECORD_VERSION:
        raise UniError(BAD_RECORD, f"unsupported record version {data['v']!r}")
    if data["target"]["kind"] not in TARGET_KINDS or data["target"]["kind"] == "Portal":
        raise UniError(BAD_RECORD, "record target kind is invalid")
    if not isinstance(data["name"], str) or not isinstance(data["context"], str):
        raise UniError(BAD_RECORD, "record name/context must be text")
    if not isinstance(data["sig"], str):
        raise UniError(BAD_RECORD, "record signature must be text")
    return data


def verify_record(record: bytes, keys: DomainKeys, expect_from: str | None = None) -> dict:
    """Parse and authenticate a record.

    Any corruption — broken JSON, schema drift, a signature that no
    longer matches the bytes — is BAD_RECORD. SIGNATURE_INVALID is
    reserved for an intact record whose origin cannot be pinned to the
    expected peer (federation's strict path).
    """
    data = parse_record(record)
    fields = [
        ("v", data["v"]),
        ("target", {k: data["target"][k] for k in TARGET_FIELDS}),
        ("name", data["name"]),
        ("params", {k: data["params"][k] for k in sorted(data["params"])}),
        ("route", data["route"]),
        ("context", data["context"]),
    ]
    payload = _encode_fields(fields)
    try:
        sig = base64.b64decode(data["sig"].encode("ascii"), validate=True)
    except (ValueError, UnicodeDecodeError) as exc:
        raise UniError(BAD_RECORD, "record signature is not base64") from exc
    if base64.b64encode(sig).decode("ascii") != data["sig"]:
        raise UniError(BAD_RECORD, "record signature is not canonical base64")
    if expect_from is not None:
        if not keys.verify(expect_from, payload, sig):
            if keys.verify_any(payload, sig) is not None:
                raise UniError(SIGNATURE_INVALID, "record was signed by a different domain")
            raise UniError(BAD_RECORD, "record bytes do not match the signature")
        return data
    signer = keys.verify_any(payload, sig)
    if signer is None:
        raise UniError(BAD_RECORD, "record bytes do not match any known signer")
    data["signer"] = signer
    return data


def import_portal(
    record: bytes,
    catalog: PortalCatalog,
    keys: DomainKeys,
    expect_from: str | None = None,
    tags: set[str] | None = None,
) -> Portal:
    data = verify_record(record, keys, expect_from=expect_from)
    target = PortalTarget.from_dict(data["target"])
    return catalog.create(
        target=target,
        name=data["name"],
        tags=tags,
        context_id=data["context"],
        parameters=dict(data["params"]),
        comm_agent=dict(data["route"]) if data["route"] else None,
    )
