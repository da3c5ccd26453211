"""Access confinement.

Every operation on a user's data runs through ``Policy.check``; there is
no other path to a storage mutation. External agents can be granted
rights only at storage or zone scope, so whatever they are allowed to
touch stays inside the associated storage. Default is deny.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

from .errors import UniError, NOT_FOUND, NOT_OWNER, SCOPE_ESCALATION


class Right(str, Enum):
    READ = "Read"
    WRITE = "Write"
    MOVE = "Move"
    DELETE = "Delete"
    SHARE = "Share"


# op-token -> right it requires
OP_RIGHTS: dict[str, Right] = {
    "read": Right.READ,
    "get": Right.READ,
    "open_view": Right.READ,
    "search": Right.READ,
    "fetch_part": Right.READ,
    "versions": Right.READ,
    "write": Right.WRITE,
    "put": Right.WRITE,
    "edit": Right.WRITE,
    "open_edit": Right.WRITE,
    "save": Right.WRITE,
    "create_zone": Right.WRITE,
    "move": Right.MOVE,
    "cut": Right.MOVE,
    "paste": Right.MOVE,
    "restore": Right.MOVE,
    "delete": Right.DELETE,
    "share": Right.SHARE,
}


@dataclass(frozen=True)
class Principal:
    kind: str  # "Owner" | "LocalAgent" | "ExternalAgent" | "RemoteUser"
    domain_id: str
    agent_id: str = ""

    def key(self) -> str:
        return f"{self.kind}:{self.domain_id}:{self.agent_id}"

    @classmethod
    def owner(cls, domain_id: str) -> "Principal":
        return cls("Owner", domain_id)

    @classmethod
    def local_agent(cls, domain_id: str, site_id: str) -> "Principal":
        return cls("LocalAgent", domain_id, site_id)

    @classmethod
    def external_agent(cls, domain_id: str, agent_id: str) -> "Principal":
        return cls("ExternalAgent", domain_id, agent_id)

    @classmethod
    def remote_user(cls, domain_id: str, card_name: str) -> "Principal":
        return cls("RemoteUser", domain_id, card_name)


@dataclass(frozen=True)
class AccessTarget:
    """What is being touched: a storage, optionally narrowed to a zone.

    ``zone_chain`` lists the zone ids from the section down to the
    object's immediate parent, so a zone-scoped grant covers the whole
    subtree under it.
    """

    storage_id: str
    zone_chain: tuple[str, ...] = ()


@dataclass
class Grant:
    grant_id: str
    subject: str  # Principal.key()
    storage_id: str
    zone_id: str | None
    rights: frozenset[Right]
    issued_by: str
    expiry: float | None = None

    def covers(self, target: AccessTarget) -> bool:
        if self.storage_id != target.storage_id:
            return False
        if self.zone_id is None:
            return True
        return self.zone_id in target.zone_chain

    def scope_within(self, other: "Grant") -> bool:
        """True when this grant's scope is inside ``other``'s scope."""
        if self.storage_id != other.storage_id:
            return False
        if other.zone_id is None:
            return True
        return self.zone_id == other.zone_id  # deeper nesting checked by caller via chain

    def to_dict(self) -> dict:
        return {
            "grant_id": self.grant_id,
            "subject": self.subject,
            "storage_id": self.storage_id,
            "zone_id": self.zone_id,
            "rights": sorted(r.value for r in self.rights),
            "issued_by": self.issued_by,
            "expiry": self.expiry,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Grant":
        return cls(
            grant_id=data["grant_id"],
            subject=data["subject"],
            storage_id=data["storage_id"],
            zone_id=data.get("zone_id"),
            rights=frozenset(Right(r) for r in data["rights"]),
            issued_by=data["issued_by"],
            expiry=data.get("expiry"),
        )


@dataclass
class Decision:
    allow: bool
    reason: str
    matched_grant: str | None = None


@dataclass
class Policy:
    """Grant table for one domain. Checks are pure over a snapshot."""

    domain_id: str
    grants: dict[str, Grant] = field(default_factory=dict)
    now: float = 0.0  # advanced by the domain clock; grants expire against it

    def _live(self, grant: Grant) -> bool:
        return grant.expiry is None or grant.expiry > self.now

    def check(self, subject: Principal, op: str, target: AccessTarget) -> Decision:
        if subject.kind == "Owner" and subject.domain_id == self.domain_id:
            return Decision(True, "OWNER")
        right = OP_RIGHTS.get(op)
        if right is None:
            return Decision(False, "UNKNOWN_OP")
        key = subject.key()
        for grant in self.grants.values():
            if grant.subject != key or not self._live(grant):
                continue
            if right in grant.rights and grant.covers(target):
                return Decision(True, "GRANT", matched_grant=grant.grant_id)
        return Decision(False, "NO_GRANT")

    def issue(
        self,
        issuer: Principal,
        grant_id: str,
        subject: Principal,
        storage_id: str,
        zone_id: str | None,
        rights: set[Right],
        expiry: float | None = None,
    ) -> Grant:
        if issuer.kind == "Owner" and issuer.domain_id == self.domain_id:
            pass  # owner may grant anything in the domain
        else:
            holder = self._share_authority(issuer, storage_id, zone_id)
            if holder is None:
                raise UniError(NOT_OWNER, "issuer holds no Share right over this scope")
            if not rights <= holder.rights:
                raise UniError(SCOPE_ESCALATION, "delegated rights exceed the issuer's grant")
        grant = Grant(
            grant_id=grant_id,
            subject=subject.key(),
            storage_id=storage_id,
            zone_id=zone_id,
            rights=frozenset(rights),
            issued_by=issuer.key(),
            expiry=expiry,
        )
        self.grants[grant_id] = grant
        return grant

    def _share_authority(
        self, issuer: Principal, storage_id: str, zone_id: str | None
    ) -> Grant | None:
        """The live Share grant that lets ``issuer`` delegate this scope."""
        key = issuer.key()
        for grant in self.grants.values():
            if grant.subject != key or not self._live(grant):
                continue
            if Right.SHARE not in grant.rights or grant.storage_id != storage_id:
                continue
            if grant.zone_id is None or grant.zone_id == zone_id:
                return grant
        return None

    def revoke(self, issuer: Principal, grant_id: str) -> Grant:
        grant = self.grants.get(grant_id)
        if grant is None:
            raise UniError(NOT_FOUND, f"no such grant: {grant_id}")
        if not (issuer.kind == "Owner" and issuer.domain_id == self.domain_id):
            if grant.issued_by != issuer.key():
                raise UniError(NOT_OWNER, "only the owner or the issuer may revoke")
        del self.grants[grant_id]
        return grant

    def to_dict(self) -> dict:
        return {
            "domain_id": self.domain_id,
            "grants": [g.to_dict() for g in self.grants.values()],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Policy":
        policy = cls(domain_id=data["domain_id"])
        for raw in data.get("grants", []):
            grant = Grant.from_dict(raw)
            policy.grants[grant.grant_id] = grant
        return policy
