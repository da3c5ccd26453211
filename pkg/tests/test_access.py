from __future__ import annotations

import itertools
import random

import pytest

from unispace.access import AccessTarget, Policy, Principal, Right
from unispace.errors import UniError


OWNER = Principal.owner("dA")
AGENT = Principal.external_agent("dB", "bot")
OTHER = Principal.external_agent("dC", "crawler")


def policy() -> Policy:
    return Policy(domain_id="dA")


def test_owner_always_allowed_in_own_domain():
    p = policy()
    decision = p.check(OWNER, "delete", AccessTarget("s1"))
    assert decision.allow and decision.reason == "OWNER"


def test_foreign_owner_not_special():
    p = policy()
    assert not p.check(Principal.owner("dB"), "read", AccessTarget("s1")).allow


def test_deny_by_default_and_grant_scope():
    p = policy()
    assert not p.check(AGENT, "read", AccessTarget("s1")).allow
    p.issue(OWNER, "g1", AGENT, "s1", None, {Right.READ})
    allowed = p.check(AGENT, "read", AccessTarget("s1"))
    assert allowed.allow and allowed.matched_grant == "g1"
    # other storage stays closed
    assert not p.check(AGENT, "read", AccessTarget("s2")).allow
    assert p.check(AGENT, "read", AccessTarget("s2")).reason == "NO_GRANT"
    # rights not granted stay closed
    assert not p.check(AGENT, "write", AccessTarget("s1")).allow


def test_zone_scoped_grant_covers_subtree_only():
    p = policy()
    p.issue(OWNER, "g1", AGENT, "s1", "zoneA", {Right.READ})
    assert p.check(AGENT, "read", AccessTarget("s1", ("obj-zone", "zoneA"))).allow
    assert not p.check(AGENT, "read", AccessTarget("s1", ("zoneB",))).allow
    assert not p.check(AGENT, "read", AccessTarget("s1")).allow


def test_expiry_boundary():
    p = policy()
    p.issue(OWNER, "g1", AGENT, "s1", None, {Right.READ}, expiry=10.0)
    p.now = 9.9
    assert p.check(AGENT, "read", AccessTarget("s1")).allow
    p.now = 10.0
    assert not p.check(AGENT, "read", AccessTarget("s1")).allow


def test_share_holder_may_delegate_subset_only():
    p = policy()
    p.issue(OWNER, "g1", AGENT, "s1", None, {Right.READ, Right.SHARE})
    p.issue(AGENT, "g2", OTHER, "s1", None, {Right.READ})
    assert p.check(OTHER, "read", AccessTarget("s1")).allow
    with pytest.raises(UniError) as err:
        p.issue(AGENT, "g3", OTHER, "s1", None, {Right.WRITE})
    assert err.value.code == "SCOPE_ESCALATION"
    with pytest.raises(UniError) as err:
        p.issue(AGENT, "g4", OTHER, "s2", None, {Right.READ})
    assert err.value.code == "NOT_OWNER"


def test_delegation_chain_never_widens():
    p = policy()
    p.issue(OWNER, "g1", AGENT, "s1", "zone1", {Right.READ, Right.SHARE})
    p.issue(AGENT, "g2", OTHER, "s1", "zone1", {Right.READ, Right.SHARE})
    third = Principal.external_agent("dD", "x")
    p.issue(OTHER, "g3", third, "s1", "zone1", {Right.READ})
    for grant in p.grants.values():
        assert grant.storage_id == "s1"
        assert grant.zone_id in (None, "zone1")
        assert grant.rights <= {Right.READ, Right.SHARE}


def test_revoke_closes_access():
    p = policy()
    p.issue(OWNER, "g1", AGENT, "s1", None, {Right.READ})
    p.revoke(OWNER, "g1")
    assert not p.check(AGENT, "read", AccessTarget("s1")).allow
    with pytest.raises(UniError) as err:
        p.revoke(OWNER, "gX")
    assert err.value.code == "NOT_FOUND"


def test_non_owner_cannot_revoke_others_grants():
    p = policy()
    p.issue(OWNER, "g1", AGENT, "s1", None, {Right.READ})
    with pytest.raises(UniError) as err:
        p.revoke(OTHER, "g1")
    assert err.value.code == "NOT_OWNER"


def test_check_never_throws():
    p = policy()
    assert not p.check(AGENT, "made-up-op", AccessTarget("s1")).allow


def test_policy_serialization_round_trip():
    p = policy()
    p.issue(OWNER, "g1", AGENT, "s1", "z", {Right.READ, Right.MOVE}, expiry=42.0)
    clone = Policy.from_dict(p.to_dict())
    assert clone.domain_id == "dA"
    assert clone.grants["g1"].rights == frozenset({Right.READ, Right.MOVE})
    assert clone.grants["g1"].expiry == 42.0


def test_fuzz_grant_revoke_interleavings_match_set_oracle():
    """check() must equal a brute-force scan over the live grant set."""
    rng = random.Random(2024)
    p = policy()
    subjects = [AGENT, OTHER, Principal.remote_user("dB", "alice")]
    storages = ["s1", "s2"]
    zones = [None, "z1", "z2"]
    rights = [Right.READ, Right.WRITE, Right.MOVE, Right.DELETE]
    oracle: dict[str, tuple] = {}
    counter = itertools.count()
    for _ in range(3000):
        action = rng.random()
        if action < 0.4:
            gid = f"g{next(counter)}"
            subject = rng.choice(subjects)
            storage = rng.choice(storages)
            zone = rng.choice(zones)
            rset = set(rng.sample(rights, rng.randint(1, 3)))
            p.issue(OWNER, gid, subject, storage, zone, rset)
            oracle[gid] = (subject.key(), storage, zone, frozenset(rset))
        elif action < 0.6 and oracle:
            gid = rng.choice(list(oracle))
            p.revoke(OWNER, gid)
            del oracle[gid]
        else:
            subject = rng.choice(subjects)
            op = rng.choice(["read", "write", "move", "delete"])
            needed = {"read": Right.READ, "write": Right.WRITE,
                      "move": Right.MOVE, "delete": Right.DELETE}[op]
            storage = rng.choice(storages)
            chain = tuple(rng.sample(["z1", "z2", "z3"], rng.randint(0, 2)))
            target = AccessTarget(storage, chain)
            expected = any(
                key == subject.key() and st == storage
                and (zn is None or zn in chain) and needed in rset
                for key, st, zn, rset in oracle.values()
            )
            assert p.check(subject, op, target).allow == expected
