from __future__ import annotations

import random
from pathlib import Path

import pytest
from hypothesis import given, settings, strategies as st

from unispace.errors import UniError
from unispace.signs import IdFactory, SignRegistry
from unispace.storage import CommandLog, Storage, parts_hash


def make_storage(tmp_path: Path | None = None, seed: int = 5,
                 max_depth: int = 5) -> Storage:
    ids = IdFactory("dom", seed=seed)
    storage = Storage(
        storage_id=ids.new(), owner_site=ids.new(), ids=ids,
        registry=SignRegistry(), root=tmp_path, max_container_depth=max_depth,
    )
    storage.create_section("main")
    return storage


def put(storage: Storage, zone: str | None = None, name: str = "obj",
        text: bytes = b"hello"):
    zone = zone or storage.section_order[0]
    return storage.put_object(zone, name, {"content": ("text/plain", text)})


# ------------------------------------------------------------- structure


def test_nesting_to_limit_ok_beyond_fails():
    storage = make_storage()
    zone = storage.section_order[0]
    for depth in range(1, 6):
        zone = storage.create_container(zone, f"c{depth}").id
        assert storage.zones[zone].depth == depth
    with pytest.raises(UniError) as err:
        storage.create_container(zone, "too-deep")
    assert err.value.code == "DEPTH_LIMIT"


def test_section_names_not_unique():
    storage = make_storage()
    storage.create_section("docs")
    storage.create_section("docs")
    names = [storage.zones[z].name for z in storage.section_order]
    assert names.count("docs") == 2


def test_zone_listing_counts():
    storage = make_storage()
    for i in range(3):
        section = storage.create_section(f"s{i}")
        for j in range(2):
            storage.create_container(section.id, f"c{i}{j}")
    sections = [z for z in storage.zones.values() if z.kind == "section"]
    containers = [z for z in storage.zones.values() if z.kind == "container"]
    assert len(sections) == 4 and len(containers) == 6


# --------------------------------------------------------------- objects


def test_aggregate_parts_round_trip():
    storage = make_storage()
    obj = storage.put_object(storage.section_order[0], "movie", {
        "video": ("video/mkv", b"\x00v"),
        "audio": ("audio/aac", b"\x00a"),
        "subtitles": ("text/srt", b"1\n00:00"),
    })
    oid = obj.sign.id.compact()
    assert sorted(storage.obj(oid).parts) == ["audio", "subtitles", "video"]
    assert storage.obj(oid).parts["video"].data == b"\x00v"
    assert obj.versions[0].vid == 1


def test_put_requires_a_part():
    storage = make_storage()
    with pytest.raises(UniError):
        storage.put_object(storage.section_order[0], "empty", {})


def test_versions_append_and_restore():
    storage = make_storage()
    obj = put(storage)
    oid = obj.sign.id.compact()
    lease = storage.open_to_desktop(oid, "wp", "Edit")
    for i in range(3):
        storage.edit_part(lease.lease_id, "content", "text/plain", f"v{i+2}".encode())
        storage.save(lease.lease_id, "NewVersion")
    assert [v.vid for v in obj.versions] == [1, 2, 3, 4]
    assert obj.current == 4
    # overwrite: bytes change, count unchanged
    storage.edit_part(lease.lease_id, "content", "text/plain", b"patched")
    storage.save(lease.lease_id, "Overwrite")
    assert len(obj.versions) == 4
    assert obj.parts["content"].data == b"patched"
    # restore v2: parts match the v2 snapshot hash
    storage.restore_version(oid, 2)
    assert parts_hash(obj.parts) == obj.versions[1].hash
    assert obj.versions[1].snapshot["content"].data == b"v2"


def test_old_version_hashes_never_change():
    storage = make_storage()
    obj = put(storage)
    lease = storage.open_to_desktop(obj.sign.id.compact(), "wp", "Edit")
    hashes = [obj.versions[0].hash]
    for i in range(4):
        storage.edit_part(lease.lease_id, "content", "text/plain", f"x{i}".encode())
        storage.save(lease.lease_id, "NewVersion")
        assert [v.hash for v in obj.versions[:-1]] == hashes
        hashes.append(obj.versions[-1].hash)
    assert [v.vid for v in obj.versions] == sorted(v.vid for v in obj.versions)


# ---------------------------------------------------------------- leases


def test_single_edit_lease():
    storage = make_storage()
    obj = put(storage)
    oid = obj.sign.id.compact()
    storage.open_to_desktop(oid, "wp", "Edit")
    with pytest.raises(UniError) as err:
        storage.open_to_desktop(oid, "wp", "Edit")
    assert err.value.code == "LEASE_CONFLICT"


def test_view_leases_share_and_stay_pure():
    storage = make_storage()
    obj = put(storage)
    oid = obj.sign.id.compact()
    leases = [storage.open_to_desktop(oid, "wp", "View") for _ in range(3)]
    assert len(leases) == 3
    before = parts_hash(obj.parts)
    with pytest.raises(UniError):
        storage.edit_part(leases[0].lease_id, "content", "text/plain", b"mutate")
    assert parts_hash(obj.parts) == before


def test_stale_handle():
    storage = make_storage()
    obj = put(storage)
    lease = storage.open_to_desktop(obj.sign.id.compact(), "wp", "Edit")
    storage.close_handle(lease.lease_id)
    with pytest.raises(UniError) as err:
        storage.save(lease.lease_id)
    assert err.value.code == "STALE_HANDLE"


# ------------------------------------------------------ clipboard / trash


def test_cut_paste_moves():
    storage = make_storage()
    zone2 = storage.create_section("zone2").id
    obj = put(storage)
    oid = obj.sign.id.compact()
    storage.clipboard_cut([oid])
    assert obj.zone == storage.section_order[0]  # still in place until commit
    storage.paste(zone2)
    assert obj.zone == zone2
    assert oid not in storage.zones[storage.section_order[0]].child_objects


def test_copy_paste_duplicates():
    storage = make_storage()
    zone2 = storage.create_section("zone2").id
    obj = put(storage)
    storage.clipboard_copy([obj.sign.id.compact()])
    new_ids = storage.paste(zone2)
    assert len(new_ids) == 1 and new_ids[0] != obj.sign.id.compact()
    copy = storage.obj(new_ids[0])
    assert copy.parts["content"].data == obj.parts["content"].data
    assert storage.object_count() == 2


def test_paste_empty_clipboard():
    storage = make_storage()
    with pytest.raises(UniError) as err:
        storage.paste(storage.section_order[0])
    assert err.value.code == "EMPTY_CLIPBOARD"


def test_container_paste_respects_depth():
    storage = make_storage(max_depth=3)
    root = storage.section_order[0]
    deep = storage.create_container(root, "a")
    deeper = storage.create_container(deep.id, "b")  # heights: a->b = 2
    target = storage.create_container(storage.create_container(root, "x").id, "y")
    storage.clipboard_cut([deep.id])
    with pytest.raises(UniError) as err:
        storage.paste(target.id)  # 2 (target) + 2 (subtree) > 3
    assert err.value.code == "DEPTH_LIMIT"


def test_trash_round_trip():
    storage = make_storage()
    container = storage.create_container(storage.section_order[0], "box")
    obj = storage.put_object(container.id, "doc", {"c": ("t", b"x")})
    oid = obj.sign.id.compact()
    storage.delete_to_trash(oid)
    assert obj.zone is None
    assert [e.object_id for e in storage.trash] == [oid]
    storage.restore_from_trash(oid)
    assert obj.zone == container.id


def test_delete_leased_object_blocked():
    storage = make_storage()
    obj = put(storage)
    storage.open_to_desktop(obj.sign.id.compact(), "wp", "Edit")
    with pytest.raises(UniError) as err:
        storage.delete_to_trash(obj.sign.id.compact())
    assert err.value.code == "LEASE_CONFLICT"


def test_restore_not_in_trash():
    storage = make_storage()
    obj = put(storage)
    with pytest.raises(UniError) as err:
        storage.restore_from_trash(obj.sign.id.compact())
    assert err.value.code == "NOT_IN_TRASH"


def test_trash_count():
    storage = make_storage()
    ids = [put(storage, name=f"o{i}").sign.id.compact() for i in range(10)]
    for oid in ids:
        storage.delete_to_trash(oid)
    assert len(storage.trash) == 10


# ---------------------------------------------------------------- search


def test_scoped_search_excludes_other_sections():
    storage = make_storage()
    section_b = storage.create_section("B").id
    put(storage, name="report-a")
    storage.put_object(section_b, "report-b", {"c": ("t", b"")})
    hits = storage.search("report", storage.section_order[0])
    assert [o.sign.name for o in hits] == ["report-a"]


def test_empty_query_returns_scope():
    storage = make_storage()
    for i in range(4):
        put(storage, name=f"o{i}")
    assert len(storage.search("")) == 4


def test_search_matches_linear_scan_oracle():
    rng = random.Random(9)
    storage = make_storage()
    zones = [storage.section_order[0]]
    for i in range(3):
        zones.append(storage.create_section(f"s{i}").id)
    names = ["alpha", "beta", "report", "notes", "summary"]
    tags_pool = ["work", "home", "draft"]
    for i in range(50):
        storage.put_object(
            rng.choice(zones), rng.choice(names) + str(i % 3),
            {"c": ("t", b"")}, tags={rng.choice(tags_pool)},
        )
    for query in ["report", "alp", "", "summary2"]:
        for scope in [None] + zones:
            hits = storage.search(query, scope)
            oracle = []
            for obj in sorted(storage.objects.values(), key=lambda o: o.seq):
                if obj.zone is None:
                    continue
                scope_ok = scope is None or obj.zone == scope  # sections are flat
                if scope_ok and (not query or query.lower() in obj.sign.name.lower()):
                    oracle.append(obj.sign.id.compact())
            assert [o.sign.id.compact() for o in hits] == oracle


# ----------------------------------------------------------- undo / redo


def test_undo_redo_edit():
    storage = make_storage()
    obj = put(storage)
    lease = storage.open_to_desktop(obj.sign.id.compact(), "wp", "Edit")
    storage.edit_part(lease.lease_id, "content", "text/plain", b"second")
    assert obj.parts["content"].data == b"second"
    assert storage.undo()
    assert obj.parts["content"].data == b"hello"
    assert storage.redo()
    assert obj.parts["content"].data == b"second"


def test_undo_stops_at_save_checkpoint():
    storage = make_storage()
    obj = put(storage)
    lease = storage.open_to_desktop(obj.sign.id.compact(), "wp", "Edit")
    storage.edit_part(lease.lease_id, "content", "text/plain", b"v2")
    storage.save(lease.lease_id, "Overwrite")
    assert not storage.undo()  # checkpoint fences the stack
    assert obj.parts["content"].data == b"v2"


def test_rollback_to_mark():
    storage = make_storage()
    obj = put(storage)
    mark = storage.frame_mark()
    lease = storage.open_to_desktop(obj.sign.id.compact(), "wp", "Edit")
    storage.edit_part(lease.lease_id, "content", "text/plain", b"a")
    storage.edit_part(lease.lease_id, "content", "text/plain", b"ab")
    put(storage, name="scratch")
    assert storage.rollback_to(mark) == 3
    assert obj.parts["content"].data == b"hello"
    assert storage.object_count() == 1


# ------------------------------------------------------------ conservation


@settings(max_examples=25, deadline=None)
@given(st.lists(st.integers(min_value=0, max_value=4), min_size=1, max_size=40),
       st.integers(min_value=0, max_value=2**32 - 1))
def test_conservation_property(ops, seed):
    """move/cut/paste/delete/restore sequences never change the count."""
    rng = random.Random(seed)
    storage = make_storage(seed=seed % 1000 + 1)
    zones = [storage.section_order[0], storage.create_section("z2").id]
    ids = [put(storage, zone=rng.choice(zones), name=f"o{i}").sign.id.compact()
           for i in range(5)]
    total = storage.object_count()
    for op in ops:
        try:
            if op == 0:
                storage.clipboard_cut([rng.choice(ids)])
            elif op == 1:
                storage.paste(rng.choice(zones))
            elif op == 2:
                storage.delete_to_trash(rng.choice(ids))
            elif op == 3:
                storage.restore_from_trash(rng.choice(ids))
            elif op == 4:
                obj = storage.obj(rng.choice(ids))
                if obj.zone is not None:
                    storage.clipboard_cut([rng.choice(ids)])
                    storage.paste(rng.choice(zones))
        except UniError:
            pass  # guarded op; counts must still hold
        assert storage.object_count() == total


# --------------------------------------------------------------- recovery


def play_workload(storage: Storage) -> None:
    zone2 = storage.create_section("work").id
    obj = put(storage, name="doc")
    oid = obj.sign.id.compact()
    lease = storage.open_to_desktop(oid, "wp", "Edit")
    for i in range(7):
        storage.edit_part(lease.lease_id, "content", "text/plain", f"edit{i}".encode())
    storage.save(lease.lease_id, "NewVersion")
    storage.close_handle(lease.lease_id)
    storage.clipboard_cut([oid])
    storage.paste(zone2)
    storage.undo()
    storage.delete_to_trash(oid)
    storage.restore_from_trash(oid)
    storage.set_setting("k", "v")
    storage.undo()
    storage.redo()


def test_recover_rebuilds_state(tmp_path):
    storage = make_storage(tmp_path / "st")
    play_workload(storage)
    want = storage.state_digest_dict()
    storage.log.close()

    ids = IdFactory("dom", seed=5)
    again = Storage(storage_id=storage.id, owner_site=storage.owner_site, ids=ids,
                    registry=SignRegistry(), root=tmp_path / "st")
    again.recover()
    got = again.state_digest_dict()
    # leases are runtime-only; everything logged must match
    assert got == want


def test_recover_idempotent(tmp_path):
    storage = make_storage(tmp_path / "st")
    play_workload(storage)
    state1 = storage.state_digest_dict()
    storage.recover()
    state2 = storage.state_digest_dict()
    storage.recover()
    assert state1 == state2 == storage.state_digest_dict()


def test_truncation_sweep_always_yields_prefix_state(tmp_path):
    storage = make_storage(tmp_path / "st")
    storage.create_section("w")
    obj = put(storage, name="doc")
    lease = storage.open_to_desktop(obj.sign.id.compact(), "wp", "Edit")
    for i in range(3):
        storage.edit_part(lease.lease_id, "content", "text/plain", f"v{i}".encode())
    storage.log.close()
    log_path = tmp_path / "st" / "cmdlog.ndjson"
    raw = log_path.read_bytes()
    lines = [l for l in raw.split(b"\n") if l]

    def recovered_digest(root: Path) -> str:
        ids = IdFactory("dom", seed=5)
        st2 = Storage(storage_id=storage.id, owner_site=storage.owner_site,
                      ids=ids, registry=SignRegistry(), root=root)
        st2.recover()
        st2.log.close()
        import json
        return json.dumps(st2.state_digest_dict(), sort_keys=True)

    prefix_digests = set()
    for upto in range(len(lines) + 1):
        work = tmp_path / f"prefix{upto}"
        work.mkdir()
        (work / "cmdlog.ndjson").write_bytes(b"".join(l + b"\n" for l in lines[:upto]))
        prefix_digests.add(recovered_digest(work))

    for cut in range(len(raw) + 1):
        work = tmp_path / f"case{cut}"
        work.mkdir()
        (work / "cmdlog.ndjson").write_bytes(raw[:cut])
        assert recovered_digest(work) in prefix_digests  # never panics, prefix state


def test_corruption_before_checkpoint_detected(tmp_path):
    storage = make_storage(tmp_path / "st")
    put(storage, name="a")
    put(storage, name="b")
    storage.checkpoint("c")
    storage.log.close()
    log_path = tmp_path / "st" / "cmdlog.ndjson"
    lines = log_path.read_bytes().split(b"\n")
    lines[1] = lines[1][:10] + b"X" + lines[1][11:]  # damage an early record
    log_path.write_bytes(b"\n".join(lines))
    ids = IdFactory("dom", seed=5)
    st2 = Storage(storage_id=storage.id, owner_site=storage.owner_site,
                  ids=ids, registry=SignRegistry(), root=tmp_path / "st")
    with pytest.raises(UniError) as err:
        st2.recover()
    assert err.value.code == "LOG_CORRUPT"


def test_command_log_checksum_round_trip(tmp_path):
    log = CommandLog(tmp_path / "log.ndjson")
    for i in range(5):
        log.append({"seq": i + 1, "op": "noop", "args": {"i": i}, "inverse": []})
    log.close()
    records, _ = CommandLog.read_valid_prefix(tmp_path / "log.ndjson")
    assert [r["seq"] for r in records] == [1, 2, 3, 4, 5]
