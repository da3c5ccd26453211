"""Data sites: sections, nested containers, aggregate objects with
versions, desktop leases, clipboard, trash and the command log.

The command log is the linearization point. Every mutation is executed,
then appended (with a checksum and the steps needed to invert it) and
fsynced before the caller sees an acknowledgement. Undo, redo and the
exit-without-save rollback are themselves logged, so recovery is a
single forward replay of the log: rebuild from scratch, stop at the
first unacknowledged (truncated) tail. A checksum failure in front of
later valid records means acknowledged history was damaged and recovery
refuses with LOG_CORRUPT.
"""

from __future__ import annotations

import base64
import hashlib
import json
import os
import shutil
from dataclasses import dataclass, field
from pathlib import Path

from .errors import (
    UniError,
    ACCESS_DENIED,
    DEPTH_LIMIT,
    EMPTY_CLIPBOARD,
    LEASE_CONFLICT,
    LOG_CORRUPT,
    NOT_IN_TRASH,
    STALE_HANDLE,
    not_found,
)
from .signs import ConceptualType, IdFactory, Sign, SignId, SignRegistry

DEFAULT_MAX_CONTAINER_DEPTH = 5

UNDOABLE = {
    "section", "container", "put", "edit", "cut", "copy",
    "paste", "delete", "restore_trash", "restore_version", "set_setting",
}


def _b64(data: bytes) -> str:
    return base64.b64encode(data).decode("ascii")


def _unb64(text: str) -> bytes:
    return base64.b64decode(text.encode("ascii"))


def canonical_json(value) -> str:
    return json.dumps(value, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def parts_hash(parts: dict[str, "ObjectPart"]) -> str:
    blob = canonical_json(
        {name: [p.media_type, _b64(p.data)] for name, p in sorted(parts.items())}
    )
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


@dataclass
class ObjectPart:
    name: str
    media_type: str
    data: bytes


@dataclass
class Version:
    vid: int
    snapshot: dict[str, ObjectPart]
    hash: str
    author: str
    at: float


@dataclass
class DataObject:
    sign: Sign
    parts: dict[str, ObjectPart]
    versions: list[Version]
    current: int  # vid of the version the payload last matched
    zone: str | None  # containing zone id, None while in trash
    seq: int  # insertion order, drives search result ordering


@dataclass
class Zone:
    id: str
    name: str
    kind: str  # "section" | "container"
    parent: str | None
    depth: int  # 0 for sections
    child_zones: list[str] = field(default_factory=list)
    child_objects: list[str] = field(default_factory=list)


@dataclass
class TrashEntry:
    object_id: str
    origin_zone: str


@dataclass
class ClipEntry:
    target_id: str  # object or container id
    op: str  # "cut" | "copy"


@dataclass
class DesktopHandle:
    lease_id: str
    object_id: str
    workplace: str
    mode: str  # "Edit" | "View"
    dirty: bool = False
    closed: bool = False


class CommandLog:
    """Append-only NDJSON log with a per-line checksum."""

    def __init__(self, path: Path | None):
        self.path = path
        self.records: list[dict] = []
        self._fh = None
        if path is not None:
            path.parent.mkdir(parents=True, exist_ok=True)
            self._fh = open(path, "ab")

    @staticmethod
    def _checksum(record: dict) -> str:
        body = {k: v for k, v in record.items() if k != "sum"}
        return hashlib.sha256(canonical_json(body).encode("utf-8")).hexdigest()[:16]

    def append(self, record: dict) -> None:
        record = dict(record)
        record["sum"] = self._checksum(record)
        self.records.append(record)
        if self._fh is not None:
            line = canonical_json(record) + "\n"
            self._fh.write(line.encode("utf-8"))
            self._fh.flush()
            os.fsync(self._fh.fileno())

    def close(self) -> None:
        if self._fh is not None:
            self._fh.close()
            self._fh = None

    @classmethod
    def read_valid_prefix(cls, path: Path) -> tuple[list[dict], int]:
        """Parse the log, returning (valid records, byte length of the
        valid prefix). Raises LOG_CORRUPT when damage sits in front of
        later valid records."""
        raw = path.read_bytes() if path.exists() else b""
        records: list[dict] = []
        good_end = 0
        offset = 0
        bad_seen = False
        for chunk in raw.split(b"\n"):
            if not chunk:
                offset += 1
                continue
            end = offset + len(chunk) + 1
            record = None
            if not bad_seen:
                try:
                    parsed = json.loads(chunk.decode("utf-8"))
                    if isinstance(parsed, dict) and parsed.get("sum") == cls._checksum(parsed):
                        record = parsed
                except (ValueError, UnicodeDecodeError):
                    record = None
            else:
                # Already hit damage: any further valid record proves the
                # damage was inside acknowledged history.
                try:
                    parsed = json.loads(chunk.decode("utf-8"))
                    if isinstance(parsed, dict) and parsed.get("sum") == cls._checksum(parsed):
                        raise UniError(LOG_CORRUPT, "valid records follow a damaged line")
                except (ValueError, UnicodeDecodeError):
                    pass
            if record is not None:
                records.append(record)
                good_end = end
            else:
                bad_seen = True
            offset = end
        return records, good_end


class Storage:
    """State and operations of one data site."""

    def __init__(
        self,
        storage_id: SignId,
        owner_site: SignId,
        ids: IdFactory,
        registry: SignRegistry,
        root: Path | None = None,
        max_container_depth: int = DEFAULT_MAX_CONTAINER_DEPTH,
        clock=None,
    ):
        self.id = storage_id
        self.owner_site = owner_site
        self.ids = ids
        self.registry = registry
        self.root = root
        self.max_container_depth = max_container_depth
        self.clock = clock or (lambda: 0.0)

        self.zones: dict[str, Zone] = {}
        self.section_order: list[str] = []
        self.objects: dict[str, DataObject] = {}
        self.trash: list[TrashEntry] = []
        self.clipboard: list[ClipEntry] = []
        self.settings_area: dict[str, str] = {}
        self.leases: dict[str, DesktopHandle] = {}

        self._seq = 0
        self._obj_seq = 0
        self._undo_stack: list[dict] = []  # log records of undoable ops
        self._redo_stack: list[dict] = []
        self._replaying = False
        self.log = CommandLog(self._log_path())

    # ------------------------------------------------------------- paths

    def _log_path(self) -> Path | None:
        if self.root is None:
            return None
        return self.root / "cmdlog.ndjson"

    # ------------------------------------------------------- log plumbing

    def _record(self, op: str, args: dict, inverse: list[dict]) -> dict:
        self._seq += 1
        record = {"seq": self._seq, "op": op, "args": args, "inverse": inverse}
        if not self._replaying:
            self.log.append(record)
        if op in UNDOABLE:
            self._undo_stack.append(record)
            self._redo_stack.clear()
        return record

    def _fence(self) -> None:
        self._undo_stack.clear()
        self._redo_stack.clear()

    # --------------------------------------------------------- zone model

    def zone(self, zone_id: str) -> Zone:
        z = self.zones.get(zone_id)
        if z is None:
            raise not_found("zone")
        return z

    def obj(self, object_id: str) -> DataObject:
        o = self.objects.get(object_id)
        if o is None:
            raise not_found("object")
        return o

    def zone_chain(self, zone_id: str) -> tuple[str, ...]:
        chain: list[str] = []
        cursor: str | None = zone_id
        while cursor is not None:
            chain.append(cursor)
            cursor = self.zones[cursor].parent
        return tuple(chain)

    def create_section(self, name: str, *, _id: str | None = None) -> Zone:
        zid = _id or self.ids.new().compact()
        self._apply_section({"id": zid, "name": name})
        self._record("section", {"id": zid, "name": name}, [{"s": "remove_zone", "id": zid}])
        return self.zones[zid]

    def _apply_section(self, args: dict) -> None:
        zone = Zone(id=args["id"], name=args["name"], kind="section", parent=None, depth=0)
        self.zones[zone.id] = zone
        self.section_order.append(zone.id)
        self.registry.register(
            Sign(id=SignId.parse(zone.id), name=zone.name, ctype=ConceptualType.PORTAL),
            "section",
        )

    def create_container(self, parent_id: str, name: str, *, _id: str | None = None) -> Zone:
        parent = self.zone(parent_id)
        depth = parent.depth + 1
        if depth > self.max_container_depth:
            raise UniError(
                DEPTH_LIMIT,
                f"containers nest at most {self.max_container_depth} deep",
            )
        zid = _id or self.ids.new().compact()
        args = {"id": zid, "parent": parent_id, "name": name}
        self._apply_container(args)
        self._record("container", args, [{"s": "remove_zone", "id": zid}])
        return self.zones[zid]

    def _apply_container(self, args: dict) -> None:
        parent = self.zone(args["parent"])
        zone = Zone(
            id=args["id"], name=args["name"], kind="container",
            parent=parent.id, depth=parent.depth + 1,
        )
        self.zones[zone.id] = zone
        parent.child_zones.append(zone.id)
        self.registry.register(
            Sign(id=SignId.parse(zone.id), name=zone.name, ctype=ConceptualType.PORTAL),
            "container",
        )

    # ------------------------------------------------------------ objects

    def put_object(
        self,
        dest_zone: str,
        name: str,
        parts: dict[str, tuple[str, bytes]],
        tags: set[str] | None = None,
        *,
        author: str = "owner",
        _id: str | None = None,
    ) -> DataObject:
        if not parts:
            raise UniError(ACCESS_DENIED, "a data object needs at least one part")
        self.zone(dest_zone)
        oid = _id or self.ids.new().compact()
        args = {
            "id": oid,
            "zone": dest_zone,
            "name": name,
            "tags": sorted(tags or set()),
            "parts": {pn: [media, _b64(data)] for pn, (media, data) in parts.items()},
            "author": author,
            "at": self.clock(),
        }
        self._apply_put(args)
        self._record("put", args, [{"s": "remove_object", "id": oid}])
        return self.objects[oid]

    def _apply_put(self, args: dict) -> None:
        parts = {
            pn: ObjectPart(pn, media, _unb64(b64)) for pn, (media, b64) in args["parts"].items()
        }
        sign = Sign(
            id=SignId.parse(args["id"]),
            name=args["name"],
            ctype=ConceptualType.DATA_OBJECT,
            tags=set(args["tags"]),
        )
        self.registry.register(sign, "object")
        self._obj_seq += 1
        h = parts_hash(parts)
        obj = DataObject(
            sign=sign,
            parts=parts,
            versions=[Version(1, dict(parts), h, args["author"], args["at"])],
            current=1,
            zone=args["zone"],
            seq=self._obj_seq,
        )
        self.objects[args["id"]] = obj
        self.zones[args["zone"]].child_objects.append(args["id"])

    # ------------------------------------------------------------- leases

    def open_to_desktop(self, object_id: str, workplace: str, mode: str) -> DesktopHandle:
        obj = self.obj(object_id)
        if mode not in ("Edit", "View"):
            raise UniError(ACCESS_DENIED, f"unknown lease mode {mode!r}")
        if mode == "Edit":
            for lease in self.leases.values():
                if not lease.closed and lease.object_id == object_id and lease.mode == "Edit":
                    raise UniError(LEASE_CONFLICT, "object already open for edit")
        lease = DesktopHandle(
            lease_id=self.ids.new().compact(),
            object_id=obj.sign.id.compact(),
            workplace=workplace,
            mode=mode,
        )
        self.leases[lease.lease_id] = lease
        return lease

    def close_handle(self, lease_id: str) -> None:
        lease = self.leases.get(lease_id)
        if lease is None or lease.closed:
            raise UniError(STALE_HANDLE, "lease already closed")
        lease.closed = True

    def _live_edit_lease(self, object_id: str) -> DesktopHandle | None:
        for lease in self.leases.values():
            if not lease.closed and lease.object_id == object_id and lease.mode == "Edit":
                return lease
        return None

    def handle(self, lease_id: str) -> DesktopHandle:
        lease = self.leases.get(lease_id)
        if lease is None or lease.closed:
            raise UniError(STALE_HANDLE, "no live lease")
        return lease

    # -------------------------------------------------------------- edits

    def edit_part(self, lease_id: str, part: str, media_type: str, data: bytes) -> None:
        lease = self.handle(lease_id)
        if lease.mode != "Edit":
            raise UniError(ACCESS_DENIED, "a View lease cannot change the object")
        obj = self.obj(lease.object_id)
        prev = obj.parts.get(part)
        inverse = [{
            "s": "set_part",
            "object": lease.object_id,
            "part": part,
            "media": prev.media_type if prev else None,
            "b64": _b64(prev.data) if prev else None,
        }]
        args = {
            "object": lease.object_id,
            "part": part,
            "media": media_type,
            "b64": _b64(data),
        }
        self._apply_edit(args)
        lease.dirty = True
        self._record("edit", args, inverse)

    def _apply_edit(self, args: dict) -> None:
        obj = self.obj(args["object"])
        obj.parts[args["part"]] = ObjectPart(args["part"], args["media"], _unb64(args["b64"]))

    def save(self, lease_id: str, mode: str = "NewVersion", *, author: str = "owner") -> Version:
        lease = self.handle(lease_id)
        if lease.mode != "Edit":
            raise UniError(STALE_HANDLE, "save needs an Edit lease")
        version = self.save_object(lease.object_id, mode, author=author)
        lease.dirty = False
        return version

    def save_object(self, object_id: str, mode: str, *, author: str = "owner") -> Version:
        obj = self.obj(object_id)
        args = {"object": object_id, "mode": mode, "author": author, "at": self.clock()}
        version = self._apply_save(args)
        self._record("save", args, [])
        self._fence()  # saves are checkpoints: undo never crosses them
        self.flush()
        return version

    def _apply_save(self, args: dict) -> Version:
        obj = self.obj(args["object"])
        if args["mode"] == "NewVersion":
            vid = obj.versions[-1].vid + 1
            version = Version(
                vid, dict(obj.parts), parts_hash(obj.parts), args["author"], args["at"]
            )
            obj.versions.append(version)
            obj.current = vid
            return version
        # Overwrite: the live payload is already current; the log record
        # itself is the durable checkpoint.
        return obj.versions[obj.current - 1]

    def restore_version(self, object_id: str, vid: int) -> DataObject:
        obj = self.obj(object_id)
        if not any(v.vid == vid for v in obj.versions):
            raise not_found("version")
        inverse = [{
            "s": "set_live",
            "object": object_id,
            "parts": {pn: [p.media_type, _b64(p.data)] for pn, p in obj.parts.items()},
            "current": obj.current,
        }]
        args = {"object": object_id, "vid": vid}
        self._apply_restore_version(args)
        self._record("restore_version", args, inverse)
        return obj

    def _apply_restore_version(self, args: dict) -> None:
        obj = self.obj(args["object"])
        version = next(v for v in obj.versions if v.vid == args["vid"])
        obj.parts = dict(version.snapshot)
        obj.current = version.vid

    # --------------------------------------------------- clipboard / trash

    def clipboard_cut(self, selection: list[str]) -> None:
        self._clip_op("cut", selection)

    def clipboard_copy(self, selection: list[str]) -> None:
        self._clip_op("copy", selection)

    def _clip_op(self, op: str, selection: list[str]) -> None:
        if not selection:
            raise UniError(EMPTY_CLIPBOARD, "nothing selected")
        for tid in selection:
            if tid not in self.objects and tid not in self.zones:
                raise not_found("selection target")
            if tid in self.zones and self.zones[tid].kind == "section":
                raise UniError(ACCESS_DENIED, "sections cannot be moved")
        prev = [[e.target_id, e.op] for e in self.clipboard]
        args = {"ids": list(selection), "op": op}
        self._apply_clip(args)
        self._record(op, args, [{"s": "clip_set", "entries": prev}])

    def _apply_clip(self, args: dict) -> None:
        self.clipboard = [ClipEntry(tid, args["op"]) for tid in args["ids"]]

    def paste(self, dest_zone: str) -> list[str]:
        """Commit the clipboard into ``dest_zone``; returns ids now there."""
        if not self.clipboard:
            raise UniError(EMPTY_CLIPBOARD, "clipboard is empty")
        dest = self.zone(dest_zone)
        moves: list[dict] = []
        copies: list[dict] = []
        for entry in self.clipboard:
            if entry.target_id in self.objects:
                obj = self.objects[entry.target_id]
                if entry.op == "cut":
                    moves.append({"id": entry.target_id, "from": obj.zone})
                else:
                    copies.append({
                        "src": entry.target_id,
                        "new_id": self.ids.new().compact(),
                    })
            else:
                zone = self.zone(entry.target_id)
                new_depth = dest.depth + 1
                if new_depth + self._subtree_height(zone) - 1 > self.max_container_depth:
                    raise UniError(DEPTH_LIMIT, "pasted container would nest too deep")
                if entry.op == "cut":
                    if self._is_ancestor(zone.id, dest.id):
                        raise UniError(DEPTH_LIMIT, "cannot paste a container into itself")
                    moves.append({"id": entry.target_id, "from": zone.parent})
                else:
                    copies.append({
                        "src": entry.target_id,
                        "new_id": self.ids.new().compact(),
                        "ids": self._fresh_subtree_ids(zone),
                    })
        prev_clip = [[e.target_id, e.op] for e in self.clipboard]
        args = {"dest": dest_zone, "moves": moves, "copies": copies}
        new_ids = self._apply_paste(args)
        inverse: list[dict] = []
        for m in moves:
            inverse.append({"s": "move_back", "id": m["id"], "zone": m["from"]})
        for c in copies:
            inverse.append({"s": "remove_tree", "id": c["new_id"]})
        inverse.append({"s": "clip_set", "entries": prev_clip})
        self._record("paste", args, inverse)
        return new_ids

    def _subtree_height(self, zone: Zone) -> int:
        if not zone.child_zones:
            return 1
        return 1 + max(self._subtree_height(self.zones[z]) for z in zone.child_zones)

    def _is_ancestor(self, maybe_ancestor: str, zone_id: str) -> bool:
        return maybe_ancestor in self.zone_chain(zone_id)

    def _fresh_subtree_ids(self, zone: Zone) -> dict[str, str]:
        mapping: dict[str, str] = {}
        for zid in zone.child_zones:
            mapping[zid] = self.ids.new().compact()
            mapping.update(self._fresh_subtree_ids(self.zones[zid]))
        for oid in zone.child_objects:
            mapping[oid] = self.ids.new().compact()
        return mapping

    def _apply_paste(self, args: dict) -> list[str]:
        dest = self.zone(args["dest"])
        new_ids: list[str] = []
        for m in args["moves"]:
            tid = m["id"]
            if tid in self.objects:
                self._move_object(tid, dest.id)
            else:
                self._move_zone(tid, dest.id)
            new_ids.append(tid)
        for c in args["copies"]:
            if c["src"] in self.objects:
                new_ids.append(self._copy_object(c["src"], c["new_id"], dest.id))
            else:
                new_ids.append(
                    self._copy_zone(c["src"], c["new_id"], dest.id, c.get("ids", {}))
                )
        self.clipboard = []
        return new_ids

    def _move_object(self, object_id: str, dest_zone: str) -> None:
        obj = self.obj(object_id)
        if obj.zone is not None:
            self.zones[obj.zone].child_objects.remove(object_id)
        obj.zone = dest_zone
        self.zones[dest_zone].child_objects.append(object_id)

    def _move_zone(self, zone_id: str, dest_zone: str) -> None:
        zone = self.zone(zone_id)
        if zone.parent is not None:
            self.zones[zone.parent].child_zones.remove(zone_id)
        zone.parent = dest_zone
        self.zones[dest_zone].child_zones.append(zone_id)
        self._recompute_depths(zone_id)

    def _recompute_depths(self, zone_id: str) -> None:
        zone = self.zone(zone_id)
        parent_depth = self.zones[zone.parent].depth if zone.parent else 0
        zone.depth = parent_depth + 1 if zone.kind == "container" else 0
        for child in zone.child_zones:
            self._recompute_depths(child)

    def _copy_object(self, src_id: str, new_id: str, dest_zone: str) -> str:
        src = self.obj(src_id)
        sign = Sign(
            id=SignId.parse(new_id),
            name=src.sign.name,
            ctype=ConceptualType.DATA_OBJECT,
            tags=set(src.sign.tags),
        )
        self.registry.register(sign, "object")
        parts = {pn: ObjectPart(pn, p.media_type, p.data) for pn, p in src.parts.items()}
        self._obj_seq += 1
        h = parts_hash(parts)
        self.objects[new_id] = DataObject(
            sign=sign,
            parts=parts,
            versions=[Version(1, dict(parts), h, "copy", self.clock())],
            current=1,
            zone=dest_zone,
            seq=self._obj_seq,
        )
        self.zones[dest_zone].child_objects.append(new_id)
        return new_id

    def _copy_zone(self, src_id: str, new_id: str, dest_zone: str, ids: dict[str, str]) -> str:
        src = self.zone(src_id)
        self._apply_container({"id": new_id, "parent": dest_zone, "name": src.name})
        for child_zone in src.child_zones:
            self._copy_zone(child_zone, ids[child_zone], new_id, ids)
        for child_obj in src.child_objects:
            self._copy_object(child_obj, ids[child_obj], new_id)
        return new_id

    def delete_to_trash(self, object_id: str) -> None:
        obj = self.obj(object_id)
        if self._live_edit_lease(object_id) is not None:
            raise UniError(LEASE_CONFLICT, "object is open for edit")
        if obj.zone is None:
            raise UniError(NOT_IN_TRASH, "object is already in the trash")
        args = {"object": object_id, "origin": obj.zone}
        self._apply_delete(args)
        self._record(
            "delete", args, [{"s": "untrash_obj", "id": object_id, "zone": args["origin"]}]
        )

    def _apply_delete(self, args: dict) -> None:
        obj = self.obj(args["object"])
        self.zones[obj.zone].child_objects.remove(args["object"])
        obj.zone = None
        self.trash.append(TrashEntry(args["object"], args["origin"]))

    def restore_from_trash(self, object_id: str) -> str:
        entry = next((e for e in self.trash if e.object_id == object_id), None)
        if entry is None:
            raise UniError(NOT_IN_TRASH, "object is not in the trash")
        dest = entry.origin_zone if entry.origin_zone in self.zones else (
            self.section_order[0] if self.section_order else None
        )
        if dest is None:
            raise not_found("destination section")
        args = {"object": object_id, "zone": dest}
        self._apply_restore_trash(args)
        self._record(
            "restore_trash", args,
            [{"s": "trash_obj", "id": object_id, "origin": entry.origin_zone}],
        )
        return dest

    def _apply_restore_trash(self, args: dict) -> None:
        self.trash = [e for e in self.trash if e.object_id != args["object"]]
        obj = self.obj(args["object"])
        obj.zone = args["zone"]
        self.zones[args["zone"]].child_objects.append(args["object"])

    # ------------------------------------------------------------ settings

    def set_setting(self, key: str, value: str | None, *, quiet: bool = False) -> None:
        """``quiet`` writes (history, favorites bookkeeping) are logged
        for recovery but stay off the user's undo stack."""
        prev = self.settings_area.get(key)
        args = {"key": key, "value": value}
        self._apply_setting(args)
        op = "note_setting" if quiet else "set_setting"
        self._record(op, args, [{"s": "set_setting", "key": key, "value": prev}])

    def _apply_setting(self, args: dict) -> None:
        if args["value"] is None:
            self.settings_area.pop(args["key"], None)
        else:
            self.settings_area[args["key"]] = args["value"]

    # -------------------------------------------------------------- search

    def search(self, query: str, zone_scope: str | None = None, tags: set[str] | None = None) -> list[DataObject]:
        scope_ids: set[str] | None = None
        if zone_scope is not None:
            scope_ids = set()
            stack = [zone_scope]
            while stack:
                zid = stack.pop()
                scope_ids.add(zid)
                stack.extend(self.zone(zid).child_zones)
        hits: list[DataObject] = []
        needle = query.lower()
        for obj in self.objects.values():
            if obj.zone is None:
                continue
            if scope_ids is not None and obj.zone not in scope_ids:
                continue
            if needle and needle not in obj.sign.name.lower():
                if not (tags and tags & obj.sign.tags):
                    continue
            if tags and not tags & obj.sign.tags:
                continue
            hits.append(obj)
        hits.sort(key=lambda o: o.seq)
        return hits

    # -------------------------------------------------- undo / redo / exit

    def checkpoint(self, label: str = "") -> None:
        self._record("checkpoint", {"label": label}, [])
        self._fence()

    def frame_mark(self) -> int:
        """Position used by exit-without-save to roll back a space visit."""
        return len(self._undo_stack)

    def undo(self) -> bool:
        if not self._undo_stack:
            return False
        self._apply_undo()
        self._record("undo", {}, [])
        return True

    def _apply_undo(self) -> None:
        record = self._undo_stack.pop()
        for step in reversed(record["inverse"]):
            self._run_step(step)
        self._redo_stack.append(record)

    def redo(self) -> bool:
        if not self._redo_stack:
            return False
        self._apply_redo()
        self._record("redo", {}, [])
        return True

    def _apply_redo(self) -> None:
        record = self._redo_stack.pop()
        self._reapply(record)
        self._undo_stack.append(record)

    def rollback_to(self, mark: int) -> int:
        """Undo every op past ``mark``; used by exit(save=false)."""
        n = max(0, len(self._undo_stack) - mark)
        if n == 0:
            return 0
        self._apply_rollback(n)
        self._record("rollback", {"n": n}, [])
        return n

    def _apply_rollback(self, n: int) -> None:
        for _ in range(n):
            if not self._undo_stack:
                break
            record = self._undo_stack.pop()
            for step in reversed(record["inverse"]):
                self._run_step(step)
        self._redo_stack.clear()

    def _reapply(self, record: dict) -> None:
        op, args = record["op"], record["args"]
        if op == "section":
            self._apply_section(args)
        elif op == "container":
            self._apply_container(args)
        elif op == "put":
            self._apply_put(args)
        elif op == "edit":
            self._apply_edit(args)
        elif op in ("cut", "copy"):
            self._apply_clip(args)
        elif op == "paste":
            self._apply_paste(args)
        elif op == "delete":
            self._apply_delete(args)
        elif op == "restore_trash":
            self._apply_restore_trash(args)
        elif op == "restore_version":
            self._apply_restore_version(args)
        elif op in ("set_setting", "note_setting"):
            self._apply_setting(args)
        else:
            raise UniError(LOG_CORRUPT, f"cannot replay op {op!r}")

    def _run_step(self, step: dict) -> None:
        s = step["s"]
        if s == "remove_zone":
            zone = self.zones.pop(step["id"], None)
            if zone is None:
                return
            if zone.parent is not None and zone.parent in self.zones:
                self.zones[zone.parent].child_zones.remove(zone.id)
            if zone.kind == "section":
                self.section_order.remove(zone.id)
            self.registry.unregister(SignId.parse(zone.id))
        elif s == "remove_object":
            obj = self.objects.pop(step["id"], None)
            if obj is None:
                return
            if obj.zone is not None:
                self.zones[obj.zone].child_objects.remove(step["id"])
            self.trash = [e for e in self.trash if e.object_id != step["id"]]
            self.registry.unregister(obj.sign.id)
        elif s == "remove_tree":
            if step["id"] in self.objects:
                self._run_step({"s": "remove_object", "id": step["id"]})
            elif step["id"] in self.zones:
                zone = self.zones[step["id"]]
                for oid in list(zone.child_objects):
                    self._run_step({"s": "remove_object", "id": oid})
                for zid in list(zone.child_zones):
                    self._run_step({"s": "remove_tree", "id": zid})
                self._run_step({"s": "remove_zone", "id": step["id"]})
        elif s == "move_back":
            tid = step["id"]
            if tid in self.objects:
                self._move_object(tid, step["zone"])
            else:
                self._move_zone(tid, step["zone"])
        elif s == "set_part":
            obj = self.obj(step["object"])
            if step["b64"] is None:
                obj.parts.pop(step["part"], None)
            else:
                obj.parts[step["part"]] = ObjectPart(
                    step["part"], step["media"], _unb64(step["b64"])
                )
        elif s == "set_live":
            obj = self.obj(step["object"])
            obj.parts = {
                pn: ObjectPart(pn, media, _unb64(b64))
                for pn, (media, b64) in step["parts"].items()
            }
            obj.current = step["current"]
        elif s == "clip_set":
            self.clipboard = [ClipEntry(tid, op) for tid, op in step["entries"]]
        elif s == "trash_obj":
            self._apply_delete({"object": step["id"], "origin": step["origin"]})
        elif s == "untrash_obj":
            self._apply_restore_trash({"object": step["id"], "zone": step["zone"]})
        elif s == "set_setting":
            self._apply_setting(step)
        else:
            raise UniError(LOG_CORRUPT, f"unknown inverse step {s!r}")

    # ------------------------------------------------------------ recovery

    def recover(self) -> int:
        """Rebuild state by replaying the on-disk log. Returns the number
        of records applied. Idempotent; truncates an unacknowledged tail."""
        if self.root is None:
            return 0
        path = self._log_path()
        self.log.close()
        records, good_end = CommandLog.read_valid_prefix(path)
        raw_len = path.stat().st_size if path.exists() else 0

        self._reset_state()
        self._replaying = True
        try:
            for record in records:
                op = record["op"]
                if op == "undo":
                    self._apply_undo()
                elif op == "redo":
                    self._apply_redo()
                elif op == "rollback":
                    self._apply_rollback(record["args"]["n"])
                elif op == "checkpoint":
                    self._fence()
                elif op == "save":
                    self._apply_save(record["args"])
                    self._fence()
                else:
                    self._reapply(record)
                    if op in UNDOABLE:
                        self._undo_stack.append(record)
                        self._redo_stack.clear()
                self._seq = record["seq"]
                self.log.records.append(record)
        finally:
            self._replaying = False

        if raw_len > good_end:
            with open(path, "ab") as fh:
                fh.truncate(good_end)
        self.log._fh = open(path, "ab")
        return len(records)

    def _reset_state(self) -> None:
        for zid in list(self.zones):
            self.registry.unregister(SignId.parse(zid))
        for obj in self.objects.values():
            self.registry.unregister(obj.sign.id)
        self.zones = {}
        self.section_order = []
        self.objects = {}
        self.trash = []
        self.clipboard = []
        self.settings_area = {}
        self.leases = {}
        self._seq = 0
        self._obj_seq = 0
        self._undo_stack = []
        self._redo_stack = []
        self.log.records = []

    # ------------------------------------------------------ materialization

    def flush(self) -> None:
        """Write the browsable on-disk view: sections tree with raw part
        files and a meta.json per object, plus settings.json."""
        if self.root is None:
            return
        self.root.mkdir(parents=True, exist_ok=True)
        (self.root / "settings.json").write_text(
            canonical_json(self.settings_area), encoding="utf-8"
        )
        sections_dir = self.root / "sections"
        if sections_dir.exists():
            shutil.rmtree(sections_dir)
        for sid in self.section_order:
            self._flush_zone(self.zones[sid], sections_dir)

    def _flush_zone(self, zone: Zone, parent_dir: Path) -> None:
        local = zone.id.split("/", 1)[-1]
        zdir = parent_dir / f"{zone.kind}-{local}"
        zdir.mkdir(parents=True, exist_ok=True)
        (zdir / "zone.json").write_text(
            canonical_json({"id": zone.id, "name": zone.name, "kind": zone.kind}),
            encoding="utf-8",
        )
        for oid in zone.child_objects:
            obj = self.objects[oid]
            odir = zdir / f"object-{oid.split('/', 1)[-1]}"
            (odir / "parts").mkdir(parents=True, exist_ok=True)
            meta = {
                "id": oid,
                "name": obj.sign.name,
                "tags": sorted(obj.sign.tags),
                "current": obj.current,
                "versions": [
                    {"vid": v.vid, "hash": v.hash, "author": v.author, "at": v.at}
                    for v in obj.versions
                ],
                "parts": {pn: p.media_type for pn, p in obj.parts.items()},
            }
            (odir / "meta.json").write_text(canonical_json(meta), encoding="utf-8")
            for pn, part in obj.parts.items():
                (odir / "parts" / pn).write_bytes(part.data)
        for zid in zone.child_zones:
            self._flush_zone(self.zones[zid], zdir)

    # --------------------------------------------------------------- state

    def object_count(self) -> int:
        return len(self.objects)

    def state_digest_dict(self) -> dict:
        return {
            "zones": {
                zid: {
                    "name": z.name,
                    "kind": z.kind,
                    "parent": z.parent,
                    "depth": z.depth,
                    "zones": list(z.child_zones),
                    "objects": list(z.child_objects),
                }
                for zid, z in sorted(self.zones.items())
            },
            "sections": list(self.section_order),
            "objects": {
                oid: {
                    "name": o.sign.name,
                    "tags": sorted(o.sign.tags),
                    "zone": o.zone,
                    "live": parts_hash(o.parts),
                    "current": o.current,
                    "versions": [[v.vid, v.hash] for v in o.versions],
                }
                for oid, o in sorted(self.objects.items())
            },
            "trash": [[e.object_id, e.origin_zone] for e in self.trash],
            "clipboard": [[e.target_id, e.op] for e in self.clipboard],
            "settings": dict(sorted(self.settings_area.items())),
            "undo_depth": len(self._undo_stack),
            "redo_depth": len(self._redo_stack),
        }
