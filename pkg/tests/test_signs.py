from __future__ import annotations

import pytest

from unispace.errors import UniError
from unispace.signs import (
    ConceptualType,
    IdFactory,
    PersonCard,
    Sign,
    SignId,
    SignRegistry,
)


def test_id_uniqueness_mass_construction():
    # collision scan by exhaustive set insertion
    factory = IdFactory("domA")
    seen = set()
    for _ in range(100_000):
        sid = factory.new()
        assert sid not in seen
        seen.add(sid)


def test_seeded_factory_is_reproducible():
    a = IdFactory("d", seed=7)
    b = IdFactory("d", seed=7)
    assert [a.new() for _ in range(10)] == [b.new() for _ in range(10)]


def test_derived_ids_stable():
    factory = IdFactory("d", seed=1)
    assert factory.derived("mount:usb-A") == factory.derived("mount:usb-A")
    assert factory.derived("mount:usb-A") != factory.derived("mount:usb-B")


def test_compact_round_trip():
    sid = SignId("dom", "abc123")
    assert SignId.parse(sid.compact()) == sid
    with pytest.raises(UniError):
        SignId.parse("no-separator")


def test_names_may_repeat_ids_may_not():
    registry = SignRegistry()
    factory = IdFactory("d")
    s1 = Sign(id=factory.new(), name="report", ctype=ConceptualType.DATA_OBJECT)
    s2 = Sign(id=factory.new(), name="report", ctype=ConceptualType.DATA_OBJECT)
    registry.register(s1, "object")
    registry.register(s2, "object")  # same name is fine
    with pytest.raises(UniError):
        registry.register(Sign(id=s1.id, name="other", ctype=ConceptualType.TOOL), "tool")


def test_describe_hides_id_properties_reveal_it():
    registry = SignRegistry()
    factory = IdFactory("d")
    sign = Sign(id=factory.new(), name="find", ctype=ConceptualType.TOOL,
                properties={"purpose": "search for resources"})
    registry.register(sign, "tool")
    text = registry.describe(sign.id)
    assert "search for resources" in text
    assert sign.id.local_id not in text
    props = registry.properties(sign.id)
    assert props["id"] == sign.id.compact()


def test_describe_place_kind():
    registry = SignRegistry()
    factory = IdFactory("d")
    sign = Sign(id=factory.new(), name="System", ctype=ConceptualType.PORTAL)
    registry.register(sign, "site")
    assert "Portal-target site" in registry.describe(sign.id)


def test_describe_unknown_id_not_found():
    registry = SignRegistry()
    with pytest.raises(UniError) as err:
        registry.describe(SignId("d", "missing"))
    assert err.value.code == "NOT_FOUND"


def test_card_updates_make_new_versions():
    factory = IdFactory("d")
    card = PersonCard(sign=Sign(id=factory.new(), name="Alice",
                                ctype=ConceptualType.PERSON))
    card2 = card.updated([("tcp", "1.2.3.4:7048")])
    assert card.version == 1 and card2.version == 2
    assert card.contact_endpoints == []
