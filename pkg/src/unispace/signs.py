"""Signs: the universal addressable entities of the environment.

Everything a user can point at — people, tools, data objects, portals,
and the places they live in — is registered here under a SignId. Ids
are 128-bit values scoped by the owning domain, assigned by the system
and hidden from the user; names are user-chosen and free to repeat.
"""

from __future__ import annotations

import random
import uuid
from dataclasses import dataclass, field, replace
from enum import Enum

from .errors import UniError, not_found, NOT_FOUND


class ConceptualType(str, Enum):
    PERSON = "Person"
    TOOL = "Tool"
    DATA_OBJECT = "DataObject"
    PORTAL = "Portal"


@dataclass(frozen=True)
class SignId:
    """(domain_id, local_id) pair, unique across the federation."""

    domain_id: str
    local_id: str

    def compact(self) -> str:
        return f"{self.domain_id}/{self.local_id}"

    @classmethod
    def parse(cls, text: str) -> "SignId":
        domain_id, sep, local_id = text.partition("/")
        if not sep or not domain_id or not local_id:
            raise UniError(NOT_FOUND, f"not a sign id: {text!r}")
        return cls(domain_id, local_id)


@dataclass
class Sign:
    """Identifier + personal name + conceptual type + properties."""

    id: SignId
    name: str
    ctype: ConceptualType
    properties: dict[str, str] = field(default_factory=dict)
    structure_ref: SignId | None = None
    agent_ref: str | None = None
    tags: set[str] = field(default_factory=set)


@dataclass
class PersonCard:
    """Immutable calling card; an update produces a new card version."""

    sign: Sign
    contact_endpoints: list[tuple[str, str]] = field(default_factory=list)
    version: int = 1

    def updated(self, endpoints: list[tuple[str, str]]) -> "PersonCard":
        return PersonCard(
            sign=replace(self.sign), contact_endpoints=list(endpoints), version=self.version + 1
        )


class IdFactory:
    """Generates domain-scoped 128-bit ids.

    Unseeded, ids come from uuid4. A seed makes the stream reproducible,
    which differential tests rely on to get byte-identical transcripts
    from two fresh servers.
    """

    def __init__(self, domain_id: str, seed: int | None = None):
        self.domain_id = domain_id
        self.count = 0  # persisted so a seeded reload skips used ids
        self._rng = random.Random(seed) if seed is not None else None

    def new(self) -> SignId:
        self.count += 1
        if self._rng is not None:
            local = f"{self._rng.getrandbits(128):032x}"
        else:
            local = uuid.uuid4().hex
        return SignId(self.domain_id, local)

    def derived(self, label: str) -> SignId:
        # Stable across remounts of the same source.
        local = uuid.uuid5(uuid.NAMESPACE_URL, f"{self.domain_id}:{label}").hex
        return SignId(self.domain_id, local)

    def skip_used(self, exists_fn) -> None:
        """After a reload of a seeded domain, advance past ids that a
        torn command may have handed out before the counter was saved."""
        if self._rng is None:
            return
        while True:
            state = self._rng.getstate()
            candidate = SignId(self.domain_id, f"{self._rng.getrandbits(128):032x}")
            if exists_fn(candidate):
                self.count += 1
                continue
            self._rng.setstate(state)
            return


#: entity kinds a registry record may describe (places included;
#: only the four conceptual types are full user-facing signs)
PLACE_KINDS = {
    "domain",
    "partition",
    "site",
    "workplace",
    "section",
    "container",
    "task",
}


@dataclass
class RegistryEntry:
    sign: Sign
    entity_kind: str  # "person" | "tool" | "object" | "portal" | a PLACE_KINDS member
    alive: bool = True


class SignRegistry:
    """Per-domain index of every live sign.

    Insertion order is remembered; searches and listings report in that
    order so output stays deterministic.
    """

    def __init__(self) -> None:
        self._entries: dict[SignId, RegistryEntry] = {}

    def register(self, sign: Sign, entity_kind: str) -> Sign:
        existing = self._entries.get(sign.id)
        if existing is not None and existing.alive:
            raise UniError(NOT_FOUND, f"sign id already registered: {sign.id.compact()}")
        self._entries[sign.id] = RegistryEntry(sign=sign, entity_kind=entity_kind)
        return sign

    def unregister(self, sid: SignId) -> None:
        entry = self._entries.get(sid)
        if entry is not None:
            entry.alive = False

    def get(self, sid: SignId) -> RegistryEntry:
        entry = self._entries.get(sid)
        if entry is None or not entry.alive:
            raise not_found("sign")
        return entry

    def exists(self, sid: SignId) -> bool:
        entry = self._entries.get(sid)
        return entry is not None and entry.alive

    def all_live(self) -> list[RegistryEntry]:
        return [e for e in self._entries.values() if e.alive]

    def describe(self, sid: SignId) -> str:
        """Human text for the "What is this?" tool.

        Never leaks the raw id; that is only available through the
        Properties operation.
        """
        entry = self.get(sid)
        sign = entry.sign
        kind = entry.entity_kind
        if kind in PLACE_KINDS:
            type_text = f"Portal-target {kind}"
        else:
            type_text = sign.ctype.value
        parts = [f"type={type_text}", f"name={sign.name!r}"]
        purpose = sign.properties.get("purpose")
        if purpose:
            parts.append(f"purpose {purpose}")
        return ", ".join(parts)

    def properties(self, sid: SignId) -> dict[str, str]:
        """Full property view, id included (the explicit ask)."""
        entry = self.get(sid)
        props = dict(entry.sign.properties)
        props["id"] = entry.sign.id.compact()
        props["name"] = entry.sign.name
        props["ctype"] = entry.sign.ctype.value
        props["entity_kind"] = entry.entity_kind
        return props
