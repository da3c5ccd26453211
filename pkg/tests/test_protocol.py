from __future__ import annotations

import json
import random

import pytest

from unispace.errors import UniError
from unispace.portals import Portal, PortalTarget
from unispace.protocol import (
    MAX_FRAME,
    Message,
    Route,
    decode,
    encode,
    route_select,
    validate_render_tree,
)
from unispace.signs import ConceptualType, Sign, SignId


FIXTURE_FRAMES = [
    b'{"v":1,"type":"hello","seq":1,"body":{"agent":"cli","credentials":{"principal":"owner","secret":"x"}}}\n',
    b'{"v":1,"type":"command","seq":2,"body":{"params":{},"session":"s1","tool":"create_task"}}\n',
    b'{"v":1,"type":"render","seq":2,"body":{"bounds":[0,1000,0,1000],"children":[],"kind":"space","label":"x","node_id":"n1"}}\n',
    b'{"v":1,"type":"event","seq":3,"body":{"entries":[]}}\n',
    b'{"v":1,"type":"error","seq":4,"body":{"code":"NOT_FOUND","message":"no such portal"}}\n',
    b'{"v":1,"type":"bye","seq":5,"body":{}}\n',
]


def test_round_trip_identity_on_fixtures():
    for frame in FIXTURE_FRAMES:
        assert encode(decode(frame)) == frame


def test_decode_encode_inverse():
    message = Message(type="command", seq=9, body={"tool": "find", "params": {"z": 1, "a": 2}})
    assert decode(encode(message)) == Message(type="command", seq=9,
                                              body={"tool": "find", "params": {"z": 1, "a": 2}})


def test_unsupported_version_rejected():
    frame = b'{"v":2,"type":"bye","seq":1,"body":{}}\n'
    with pytest.raises(UniError) as err:
        decode(frame)
    assert err.value.code == "UNSUPPORTED_VERSION"


def test_unknown_fields_rejected():
    frame = b'{"v":1,"type":"bye","seq":1,"body":{},"extra":true}\n'
    with pytest.raises(UniError) as err:
        decode(frame)
    assert err.value.code == "MALFORMED"


def test_missing_fields_rejected():
    with pytest.raises(UniError):
        decode(b'{"v":1,"type":"bye","seq":1}\n')


def test_bad_seq_rejected():
    for bad in [b'"x"', b"-1", b"true", b"1.5"]:
        frame = b'{"v":1,"type":"bye","seq":' + bad + b',"body":{}}\n'
        with pytest.raises(UniError):
            decode(frame)


def test_frame_size_gate():
    big = Message(type="event", seq=1, body={"blob": "x" * MAX_FRAME})
    with pytest.raises(UniError) as err:
        encode(big)
    assert err.value.code == "MALFORMED"


def test_fuzz_decode_never_crashes():
    rng = random.Random(99)
    for _ in range(10_000):
        blob = bytes(rng.randrange(256) for _ in range(rng.randrange(0, 80)))
        try:
            decode(blob)
        except UniError as exc:
            assert exc.code in ("MALFORMED", "UNSUPPORTED_VERSION")


def test_fuzz_mutated_valid_frames():
    rng = random.Random(7)
    base = FIXTURE_FRAMES[1]
    for _ in range(2000):
        corrupted = bytearray(base)
        for _ in range(rng.randint(1, 4)):
            corrupted[rng.randrange(len(base))] = rng.randrange(256)
        try:
            decode(bytes(corrupted))
        except UniError as exc:
            assert exc.code in ("MALFORMED", "UNSUPPORTED_VERSION")


# ------------------------------------------------------------ render trees


def leaf(node_id, kind="label", bounds=(0, 0, 10, 10), command=None):
    node = {"node_id": node_id, "kind": kind, "bounds": list(bounds),
            "label": node_id, "children": []}
    if command:
        node["command"] = command
    return node


def space(children, bounds=(0, 0, 1000, 1000)):
    return {"node_id": "root", "kind": "space", "bounds": list(bounds),
            "label": "s", "children": children}


def test_valid_tree_passes():
    tree = space([leaf("a"), leaf("exit", kind="tool", command="exit")])
    assert validate_render_tree(tree, is_root_space=False) == []


def test_root_must_be_space():
    assert validate_render_tree(leaf("a"), is_root_space=True)


def test_child_bounds_containment():
    tree = space([leaf("a", bounds=(990, 990, 50, 50))])
    problems = validate_render_tree(tree, is_root_space=True)
    assert any("escape" in p for p in problems)


def test_duplicate_node_ids_flagged():
    tree = space([leaf("a"), leaf("a")])
    assert any("acyclic" in p for p in validate_render_tree(tree, True))


def test_non_root_requires_exit():
    tree = space([leaf("a")])
    assert validate_render_tree(tree, is_root_space=True) == []
    problems = validate_render_tree(tree, is_root_space=False)
    assert any("exit" in p for p in problems)


# ------------------------------------------------------------------ routes


def portal_to(domain: str, endpoint: str = "local", comm: dict | None = None) -> Portal:
    return Portal(
        sign=Sign(id=SignId("me", "p1"), name="p", ctype=ConceptualType.PORTAL),
        target=PortalTarget(kind="Site", target=SignId(domain, "s1"), endpoint=endpoint),
        comm_agent=comm,
    )


def test_local_portal_routes_loopback():
    assert route_select(portal_to("me"), "me") == Route(transport="Loopback")


def test_remote_portal_uses_comm_agent():
    portal = portal_to("other", endpoint="tcp:10.0.0.2:7048",
                       comm={"protocol": "ndjson/tcp", "address": "10.0.0.2:7048"})
    route = route_select(portal, "me")
    assert route.transport == "Tcp" and route.address == "10.0.0.2:7048"


def test_remote_without_route_is_no_route():
    portal = Portal(
        sign=Sign(id=SignId("me", "p2"), name="p", ctype=ConceptualType.PORTAL),
        target=PortalTarget(kind="Site", target=SignId("other", "s1")),
    )
    with pytest.raises(UniError) as err:
        route_select(portal, "me")
    assert err.value.code == "NO_ROUTE"
