"""Executive server hosting one personal domain.

Commands from every session funnel through one lock (the serialized
command queue); replies carry the command's seq. Tool tokens are gated
against the current site's toolbars plus the base tools, every effect
passes the access policy, and task-relevant effects land in the journal.

The same dispatch path serves the in-process loopback transport, TCP
sessions and federation peers, so semantics cannot drift between routes.
"""

from __future__ import annotations

import base64
import hashlib
import io
import json
import socketserver
import tarfile
import threading
from pathlib import Path

from .access import Principal, Right
from .domain import Domain, DomainConfig, Session
from .errors import (
    UniError,
    ACCESS_DENIED,
    ARCHIVE_CORRUPT,
    AUTH_FAILED,
    BIND_FAILED,
    LEASES_OPEN,
    MALFORMED,
    NOT_FOUND,
    REJECTED,
    UNKNOWN_TOOL,
    UNREACHABLE,
    not_found,
)
from .portals import PortalTarget
from .protocol import (
    DEFAULT_PORT,
    MAX_FRAME,
    Message,
    decode,
    encode,
    route_select,
    validate_render_tree,
)
from .render import build_render
from .signs import SignId
from .storage import canonical_json
from .templates import REGISTRY as TEMPLATE_REGISTRY

# the primal gesture (clicking a portal) plus the peer-side entry point
# for federated visits; both always pass the tool gate
IMPLICIT_TOOLS = {"activate", "activate_remote_target"}

# tools forwarded to the peer while the session stands in a remote space
FORWARDABLE = {
    "find", "what_is_this", "get", "put", "open", "open_view", "close", "edit",
    "save", "versions", "restore_version", "create_section", "create_container",
    "move", "copy", "insert", "delete", "restore", "fetch_part", "properties",
    "activate",
}


class FederationLink:
    def __init__(self, endpoint: str, peer_domain: str, peer_name: str):
        self.endpoint = endpoint
        self.peer_domain = peer_domain
        self.peer_name = peer_name
        self.state = "Connected"


class DomainServer:
    def __init__(self, config: DomainConfig, validate_replies: bool = True):
        self.config = config
        self.domain = Domain.create_or_load(config)
        from .client import dial
        self.domain.dialer = dial
        self.lock = threading.RLock()
        self.sessions: dict[str, Session] = {}
        self._session_n = 0
        self.links: dict[str, FederationLink] = {}
        self.validate_replies = validate_replies
        self.listen_address = ""
        self._tcp_server: "_TcpServer | None" = None
        self._remote: dict[tuple[str, str], "object"] = {}  # (session, endpoint) -> client

    # ------------------------------------------------------------ transport

    def handle_frame(self, raw: bytes, conn: dict | None = None) -> bytes:
        """One request frame in, one reply frame out. Works identically
        for loopback calls and TCP connections."""
        conn = conn if conn is not None else {}
        try:
            message = decode(raw)
        except UniError as exc:
            return encode(Message(type="error", seq=0,
                                  body={"code": exc.code, "message": exc.message}))
        with self.lock:
            try:
                reply = self._handle_message(message, conn)
            except UniError as exc:
                reply = Message(type="error", seq=message.seq,
                                body={"code": exc.code, "message": exc.message})
        return encode(reply)

    def _handle_message(self, message: Message, conn: dict) -> Message:
        if message.type == "hello":
            return self._hello(message, conn)
        if message.type == "bye":
            token = message.body.get("session") or conn.get("session")
            if token in self.sessions:
                self.domain.flush_all()
                del self.sessions[token]
            return Message(type="bye", seq=message.seq, body={})
        if message.type != "command":
            raise UniError(MALFORMED, f"servers accept hello/command/bye, not {message.type}")
        session = self._session_for(message, conn)
        if message.seq <= session.seq_in:
            raise UniError(MALFORMED, "seq must increase per session")
        session.seq_in = message.seq
        body = message.body
        tool = body.get("tool")
        if not isinstance(tool, str):
            raise UniError(MALFORMED, "command needs a tool token")
        reply_type, reply_body = self.dispatch(
            session, tool, body.get("params") or {}, body.get("target")
        )
        if reply_type == "render" and self.validate_replies:
            problems = validate_render_tree(
                reply_body, is_root_space=session.location.depth <= 1
            )
            if problems:
                raise UniError(MALFORMED, f"render invariant broken: {problems[0]}")
        return Message(type=reply_type, seq=message.seq, body=reply_body)

    def _session_for(self, message: Message, conn: dict) -> Session:
        token = message.body.get("session") or conn.get("session")
        session = self.sessions.get(token)
        if session is None:
            raise UniError(AUTH_FAILED, "no such session; say hello first")
        return session

    def _hello(self, message: Message, conn: dict) -> Message:
        creds = message.body.get("credentials") or {}
        kind = creds.get("principal")
        domain = self.domain
        if kind == "probe":
            return Message(type="hello", seq=message.seq,
                           body={"probe": True, "domain": domain.id})
        if kind == "owner":
            if creds.get("secret") != domain.owner_secret:
                raise UniError(AUTH_FAILED, "owner secret does not match")
            principal = Principal.owner(domain.id)
        elif kind == "federate":
            if not domain.config.allow_federation:
                raise UniError(REJECTED, "this domain does not federate")
            peer = creds.get("domain", "")
            key_hex = creds.get("key", "")
            if not peer or not key_hex:
                raise UniError(AUTH_FAILED, "federation hello needs domain and key")
            domain.keys.trust(peer, bytes.fromhex(key_hex))
            domain._save_secret()
            self.links[peer] = FederationLink(
                endpoint=creds.get("endpoint", ""), peer_domain=peer,
                peer_name=creds.get("name", peer[:8]),
            )
            principal = Principal.remote_user(peer, creds.get("name", ""))
        elif kind == "external":
            peer = creds.get("domain", "")
            agent = creds.get("agent", "")
            sig = creds.get("sig", "")
            payload = canonical_json({"agent": agent, "domain": peer}).encode("utf-8")
            try:
                raw_sig = base64.b64decode(sig.encode("ascii"), validate=True)
            except Exception as exc:
                raise UniError(AUTH_FAILED, "external hello carries no valid signature") from exc
            if not domain.keys.verify(peer, payload, raw_sig):
                raise UniError(AUTH_FAILED, "unknown or unverifiable external agent")
            principal = Principal.external_agent(peer, agent)
        else:
            raise UniError(AUTH_FAILED, f"unknown principal kind {kind!r}")

        self._session_n += 1
        token = f"s{self._session_n}"
        location, focus = domain.resume_location()
        if principal.kind != "Owner":
            location = domain.initial_location()
            focus = None
        session = Session(token=token, principal=principal, location=location,
                          focus_task=focus, seq_in=message.seq)
        self.sessions[token] = session
        conn["session"] = token
        return Message(type="hello", seq=message.seq, body={
            "session": token,
            "domain": domain.id,
            "name": domain.owner_card.sign.name,
            "key": domain.keys.public_raw().hex(),
            "principal": principal.kind,
        })

    # ------------------------------------------------------------- dispatch

    def dispatch(self, session: Session, tool: str, params: dict,
                 target: str | None) -> tuple[str, dict]:
        domain = self.domain
        domain.clock.tick()
        domain.policy.now = domain.clock.now()

        current = session.location.current.space
        if current.remote and tool in FORWARDABLE:
            return self._forward(session, tool, params, target)

        allowed = domain.available_tools(session) | IMPLICIT_TOOLS
        if tool not in allowed:
            raise UniError(UNKNOWN_TOOL, f"tool {tool!r} is not available in this space")

        handler = getattr(self, f"_tool_{tool}", None)
        if handler is None:
            handler = self._tool_agent  # template tools go to their site agent
        mutations_before = domain.storage_mutations()
        domain.begin_command()
        result = handler(session, params, target)
        if domain.storage_mutations() != mutations_before and not domain.decisions_recorded():
            # architectural rule: no storage mutation without a decision
            raise UniError(ACCESS_DENIED, "internal: storage mutated without mediation")
        if tool not in ("repeat",):
            session.last_command = {"tool": tool, "params": params, "target": target}
        self._autosave_tick()
        if self.config.root is not None:
            domain.save_structure()
        if result is None:
            return "render", build_render(domain, session)
        if isinstance(result, tuple):
            return result
        return "event", result

    def _autosave_tick(self) -> None:
        ticks = self.domain.clock.ticks
        interval = self.config.autosave_ticks
        if interval <= 0 or ticks % interval:
            return
        from .access import AccessTarget
        for storage in self.domain.storages.values():
            for lease in storage.leases.values():
                if not lease.closed and lease.mode == "Edit" and lease.dirty:
                    self.domain.check(self.domain.owner, "save",
                                      AccessTarget(storage.id.compact()))
                    storage.save_object(lease.object_id, "Overwrite")
                    lease.dirty = False

    # --------------------------------------------------------- base tools

    def _tool_system(self, session, params, target):
        session.location = self.domain.initial_location()
        if session.focus_task:
            focus = self.domain.tasks.tasks.get(session.focus_task)
            if focus is not None and focus.open:
                self.domain.tasks.note_space(
                    session.focus_task, session.location.current.space.to_dict(), None
                )
        return None

    def _tool_site(self, session, params, target):
        site = self.domain.site_for_space(session.location.current.space) \
            or self.domain.system_site()
        self.domain.goto_workplace(session, site, "TaskMgmt")
        return None

    def _tool_what_is_this(self, session, params, target):
        sign = params.get("sign") or target or session.selection
        if not sign:
            raise not_found("sign")
        sign = self.domain.resolve_sign_ref(sign)
        if not (session.principal.kind == "Owner"
                and session.principal.domain_id == self.domain.id):
            try:
                storage = self.domain.storage_of_zone(sign)
            except UniError as exc:
                raise UniError(ACCESS_DENIED, "descriptions are scoped to granted"
                                              " storages") from exc
            self.domain.check_storage(session.principal, "read", storage, sign)
        text = self.domain.registry.describe(SignId.parse(sign))
        tree = build_render(self.domain, session)
        tree["meta"] = dict(tree.get("meta", {}), info=text)
        tree["children"].append({
            "node_id": "info", "kind": "label",
            "bounds": [0.0, 940.0, 1000.0, 60.0],
            "label": text, "children": [],
        })
        return "render", tree

    def _tool_find(self, session, params, target):
        query = params.get("query", "")
        scope = params.get("scope")
        tags = set(params.get("tags", [])) or None
        results = self.domain.system_search(session.principal, query, scope, tags)
        session.last_results = results
        tree = build_render(self.domain, session)
        tree["meta"] = dict(tree.get("meta", {}), results=results)
        return "render", tree

    def _tool_select(self, session, params, target):
        ref = params.get("sign") or target
        session.selection = self.domain.resolve_sign_ref(ref) if ref else None
        return None

    def _tool_undo(self, session, params, target):
        self.domain.undo_command(session)
        return None

    def _tool_redo(self, session, params, target):
        self.domain.redo_command(session)
        return None

    def _tool_repeat(self, session, params, target):
        last = session.last_command
        if last is None:
            return None
        return self.dispatch(session, last["tool"], last["params"], last["target"])

    def _tool_save(self, session, params, target):
        lease_id = params.get("lease")
        mode = params.get("mode", "NewVersion")
        object_id = params.get("object") or target or session.selection
        if lease_id:
            storage = self._storage_of_lease(lease_id)
            self.domain.check_storage(session.principal, "save", storage,
                                      storage.handle(lease_id).object_id)
            version = storage.save(lease_id, mode)
        elif object_id:
            object_id = self.domain.resolve_object_ref(object_id)
            storage = self.domain.storage_of_zone(object_id)
            self.domain.check_storage(session.principal, "save", storage, object_id)
            version = storage.save_object(object_id, mode)
        else:
            raise not_found("object to save")
        return {"saved": object_id or lease_id, "vid": version.vid, "mode": mode}

    def _storage_of_lease(self, lease_id: str):
        for storage in self.domain.storages.values():
            if lease_id in storage.leases:
                return storage
        raise UniError(NOT_FOUND, "no such lease")

    def _tool_command(self, session, params, target):
        return {"tools": sorted(self.domain.available_tools(session) | IMPLICIT_TOOLS)}

    def _tool_create_task(self, session, params, target):
        self.domain.create_task(
            session, name=params.get("name"),
            params=params.get("params"), sub=bool(params.get("sub")),
        )
        return None

    def _tool_complete_task(self, session, params, target):
        ref = params.get("task") or target
        task_id = self.domain.resolve_task_ref(ref) if ref else None
        self.domain.complete_task(session, task_id, results=params.get("results"))
        return None

    def _tool_exit(self, session, params, target):
        save = bool(params.get("save"))
        self.domain.exit_space(session, save=save, results=params.get("results"))
        return None

    def _tool_enter(self, session, params, target):
        return None

    # --------------------------------------------------------- task tools

    def _tool_switch_task(self, session, params, target):
        task_id = params.get("task") or target
        if not task_id:
            raise not_found("task")
        self.domain.switch_task(session, self.domain.resolve_task_ref(task_id))
        return None

    def _tool_query_journal(self, session, params, target):
        self.domain.require_owner(session.principal)
        entries = self.domain.journal.query(
            task=params.get("task"), event=params.get("event"),
            since=params.get("since"), until=params.get("until"),
        )
        return {"entries": [e.to_dict() for e in entries]}

    def _tool_activate(self, session, params, target):
        portal_id = params.get("portal") or target
        if not portal_id:
            raise not_found("portal")
        portal_id = self.domain.resolve_portal_ref(portal_id)
        portal = self.domain.catalog.get(portal_id)
        resolved = self.domain.catalog.resolve(portal)
        if resolved.remote:
            return self._activate_remote(session, portal_id, portal)
        self.domain.activate(session, portal_id)
        return None

    # ---------------------------------------------------------- data tools

    def _default_storage(self, session):
        site = self.domain.site_for_space(session.location.current.space) \
            or self.domain.system_site()
        return self.domain.storages[site.storage_ref.compact()]

    def _zone_storage(self, session, zone: str | None):
        if zone:
            return self.domain.storage_of_zone(zone)
        return self._default_storage(session)

    def _tool_create_section(self, session, params, target):
        storage = self._zone_storage(session, params.get("storage"))
        self.domain.check_storage(session.principal, "create_zone", storage)
        zone = storage.create_section(params.get("name", "section"))
        return {"zone": zone.id, "kind": "section"}

    def _tool_create_container(self, session, params, target):
        parent = params.get("zone") or target
        if not parent:
            raise not_found("parent zone")
        parent = self.domain.resolve_zone_ref(parent)
        storage = self.domain.storage_of_zone(parent)
        self.domain.check_storage(session.principal, "create_zone", storage, parent)
        zone = storage.create_container(parent, params.get("name", "container"))
        return {"zone": zone.id, "kind": "container", "depth": zone.depth}

    def _decode_parts(self, raw: dict) -> dict:
        parts = {}
        for name, spec in (raw or {}).items():
            parts[name] = (spec.get("media", "application/octet-stream"),
                           base64.b64decode(spec.get("b64", "").encode("ascii")))
        return parts

    def _tool_put(self, session, params, target):
        zone_ref = params.get("zone")
        zone = self.domain.resolve_zone_ref(zone_ref) if zone_ref else None
        storage = self._zone_storage(session, zone)
        zone = zone or storage.section_order[0]
        self.domain.check_storage(session.principal, "put", storage, zone)
        parts = self._decode_parts(params.get("parts"))
        if not parts:
            parts = {"content": ("text/plain", params.get("text", "").encode("utf-8"))}
        obj = storage.put_object(zone, params.get("name", "object"), parts,
                                 set(params.get("tags", [])))
        return {"object": obj.sign.id.compact(), "zone": zone}

    _tool_create_object = _tool_put

    def _tool_get(self, session, params, target):
        object_id = self.domain.resolve_object_ref(params.get("object") or target or "")
        storage = self.domain.storage_of_zone(object_id)
        self.domain.check_storage(session.principal, "get", storage, object_id)
        obj = storage.obj(object_id)
        return {
            "object": object_id,
            "name": obj.sign.name,
            "tags": sorted(obj.sign.tags),
            "current": obj.current,
            "parts": {
                pn: {"media": p.media_type,
                     "b64": base64.b64encode(p.data).decode("ascii")}
                for pn, p in sorted(obj.parts.items())
            },
        }

    def _tool_open(self, session, params, target, mode: str = "Edit"):
        object_id = self.domain.resolve_object_ref(params.get("object") or target or "")
        mode = params.get("mode", mode)
        storage = self.domain.storage_of_zone(object_id)
        op = "open_edit" if mode == "Edit" else "open_view"
        self.domain.check_storage(session.principal, op, storage, object_id)
        workplace = session.location.current.workplace or "desktop"
        lease = storage.open_to_desktop(object_id, workplace, mode)
        return {"lease": lease.lease_id, "object": object_id, "mode": mode}

    def _tool_open_view(self, session, params, target):
        return self._tool_open(session, dict(params, mode="View"), target)

    def _tool_close(self, session, params, target):
        lease_id = params.get("lease") or target
        storage = self._storage_of_lease(lease_id)
        storage.close_handle(lease_id)
        return {"closed": lease_id}

    def _tool_edit(self, session, params, target):
        lease_id = params.get("lease") or target
        storage = self._storage_of_lease(lease_id)
        lease = storage.handle(lease_id)
        self.domain.check_storage(session.principal, "edit", storage, lease.object_id)
        data = base64.b64decode(params.get("b64", "").encode("ascii"))
        storage.edit_part(lease_id, params.get("part", "content"),
                          params.get("media", "text/plain"), data)
        return {"edited": lease.object_id, "part": params.get("part", "content")}

    def _tool_versions(self, session, params, target):
        object_id = self.domain.resolve_object_ref(params.get("object") or target or "")
        storage = self.domain.storage_of_zone(object_id)
        self.domain.check_storage(session.principal, "versions", storage, object_id)
        obj = storage.obj(object_id)
        return {"object": object_id, "current": obj.current,
                "versions": [{"vid": v.vid, "hash": v.hash, "author": v.author,
                              "at": v.at} for v in obj.versions]}

    def _tool_restore_version(self, session, params, target):
        object_id = self.domain.resolve_object_ref(params.get("object") or target or "")
        storage = self.domain.storage_of_zone(object_id)
        self.domain.check_storage(session.principal, "write", storage, object_id)
        storage.restore_version(object_id, int(params["vid"]))
        return {"object": object_id, "current": int(params["vid"])}

    def _selection_ids(self, session, params, target) -> list[str]:
        ids = params.get("ids")
        if not ids:
            one = params.get("object") or target or session.selection
            ids = [one] if one else []
        resolved = []
        for ref in ids:
            try:
                resolved.append(self.domain.resolve_object_ref(ref))
            except UniError:
                resolved.append(self.domain.resolve_zone_ref(ref))
        return resolved

    def _tool_move(self, session, params, target):
        ids = self._selection_ids(session, params, target)
        if not ids:
            raise not_found("selection")
        storage = self.domain.storage_of_zone(ids[0])
        self.domain.check_storage(session.principal, "cut", storage, ids[0])
        storage.clipboard_cut(ids)
        return {"clipboard": [[e.target_id, e.op] for e in storage.clipboard]}

    def _tool_copy(self, session, params, target):
        ids = self._selection_ids(session, params, target)
        if not ids:
            raise not_found("selection")
        storage = self.domain.storage_of_zone(ids[0])
        self.domain.check_storage(session.principal, "read", storage, ids[0])
        storage.clipboard_copy(ids)
        return {"clipboard": [[e.target_id, e.op] for e in storage.clipboard]}

    def _tool_insert(self, session, params, target):
        zone = params.get("zone") or target
        if not zone:
            raise not_found("destination zone")
        # a named destination means the storage whose clipboard is loaded
        loaded = [sid for sid, st in self.domain.storages.items() if st.clipboard]
        zone = self.domain.resolve_zone_ref(
            zone, prefer_storage=loaded[0] if len(loaded) == 1 else None)
        storage = self.domain.storage_of_zone(zone)
        self.domain.check_storage(session.principal, "paste", storage, zone)
        pasted = storage.paste(zone)
        return {"pasted": pasted, "zone": zone}

    def _tool_delete(self, session, params, target):
        object_id = self.domain.resolve_object_ref(
            params.get("object") or target or session.selection or "")
        storage = self.domain.storage_of_zone(object_id)
        self.domain.check_storage(session.principal, "delete", storage, object_id)
        storage.delete_to_trash(object_id)
        return {"trashed": object_id}

    def _tool_restore(self, session, params, target):
        object_id = params.get("object") or target or ""
        if not any(object_id in st.objects for st in self.domain.storages.values()):
            hits = [e.object_id for st in self.domain.storages.values()
                    for e in st.trash
                    if st.objects[e.object_id].sign.name == object_id]
            if hits:
                object_id = hits[0]
        storage = self.domain.storage_of_zone(object_id)
        self.domain.check_storage(session.principal, "restore", storage)
        zone = storage.restore_from_trash(object_id)
        return {"restored": object_id, "zone": zone}

    def _tool_fetch_part(self, session, params, target):
        object_id = self.domain.resolve_object_ref(params.get("object") or target or "")
        storage = self.domain.storage_of_zone(object_id)
        self.domain.check_storage(session.principal, "fetch_part", storage, object_id)
        obj = storage.obj(object_id)
        part = obj.parts.get(params.get("part", ""))
        if part is None:
            raise not_found("part")
        offset = int(params.get("offset", 0))
        length = int(params.get("length", len(part.data)))
        chunk = part.data[offset:offset + length]
        return {"object": object_id, "part": part.name, "offset": offset,
                "total": len(part.data),
                "b64": base64.b64encode(chunk).decode("ascii")}

    def _tool_properties(self, session, params, target):
        sign = params.get("sign") or target or session.selection
        if not sign:
            raise not_found("sign")
        sign = self.domain.resolve_sign_ref(sign)
        sid = SignId.parse(sign)
        entry = self.domain.registry.get(sid)
        if not (session.principal.kind == "Owner"
                and session.principal.domain_id == self.domain.id):
            try:
                storage = self.domain.storage_of_zone(sign)
                self.domain.check_storage(session.principal, "read", storage, sign)
            except UniError as exc:
                if exc.code == NOT_FOUND:
                    raise UniError(ACCESS_DENIED, "properties are owner-only here") from exc
                raise
        return {"properties": self.domain.registry.properties(sid),
                "entity_kind": entry.entity_kind}

    def _tool_structure(self, session, params, target):
        sign = params.get("sign") or target or session.selection
        if not sign:
            raise not_found("sign")
        try:
            sign = self.domain.resolve_object_ref(sign)
        except UniError:
            sign = self.domain.resolve_zone_ref(sign)
        storage = self.domain.storage_of_zone(sign)
        self.domain.check_storage(session.principal, "read", storage, sign)
        if sign in storage.objects:
            space = PortalTarget(kind="ObjectPart", target=SignId.parse(sign))
        else:
            zone = storage.zones[sign]
            kind = "StorageSection" if zone.kind == "section" else "Container"
            space = PortalTarget(kind=kind, target=SignId.parse(sign))
        from .portals import Frame
        session.location.push(Frame(space=space, entry_portal=None,
                                    storage_mark=storage.frame_mark()))
        return None

    # --------------------------------------------------------- admin tools

    def _tool_mount_partition(self, session, params, target):
        partition = self.domain.mount_partition(
            session.principal, params.get("kind", "device"), params["source"]
        )
        return {"partition": partition.id.compact(), "mount": partition.mount.value,
                "name": partition.name}

    def _tool_unmount_partition(self, session, params, target):
        partition = self.domain.unmount_partition(session.principal, params["source"])
        return {"partition": partition.id.compact(), "mounted": False}

    def _resolve_partition_ref(self, ref: str) -> str:
        if ref in self.domain.partitions:
            return ref
        for pid, partition in self.domain.partitions.items():
            if partition.name == ref:
                return pid
        raise not_found("partition")

    def _tool_install_site(self, session, params, target):
        template = params.get("template_doc") or params.get("template", "empty")
        partition = params.get("partition")
        site = self.domain.install_site(
            session.principal,
            self._resolve_partition_ref(partition) if partition else None, template)
        return {"site": site.id.compact(), "name": site.name,
                "workplaces": [wp.name for wp in site.workplaces]}

    def _tool_list_templates(self, session, params, target):
        return {"templates": sorted(TEMPLATE_REGISTRY)}

    def _resolve_storage_ref(self, ref: str) -> str:
        if ref in self.domain.storages:
            return ref
        for site in self.domain.sites.values():
            if site.name == ref or site.id.compact() == ref:
                return site.storage_ref.compact()
        raise not_found("storage")

    def _tool_grant(self, session, params, target):
        subject_raw = params.get("subject") or {}
        kind = subject_raw.get("kind", "ExternalAgent")
        subject = Principal(kind=kind, domain_id=subject_raw.get("domain", ""),
                            agent_id=subject_raw.get("agent", ""))
        rights = {Right(r) for r in params.get("rights", ["Read"])}
        zone = params.get("zone")
        grant = self.domain.grant_op(
            session.principal, subject, self._resolve_storage_ref(params["storage"]),
            self.domain.resolve_zone_ref(zone) if zone else None,
            rights, params.get("expiry"),
        )
        return {"grant": grant}

    def _tool_revoke(self, session, params, target):
        grant = self.domain.revoke_op(session.principal, params.get("grant") or target)
        return {"revoked": grant["grant_id"]}

    def _tool_create_portal(self, session, params, target):
        sign = params.get("sign") or target or session.selection
        if not sign:
            raise not_found("sign")
        sign = self.domain.resolve_sign_ref(sign)
        portal = self.domain.create_portal_op(
            session.principal, sign, params.get("name", "portal"),
            tags=set(params.get("tags", [])), context=params.get("context", ""),
            spawn_task=bool(params.get("spawn_task")),
        )
        return {"portal": portal.sign.id.compact(), "name": portal.sign.name,
                "target": portal.target.to_dict()}

    def _tool_export_portal(self, session, params, target):
        portal_id = self.domain.resolve_portal_ref(params.get("portal") or target or "")
        record = self.domain.export_portal_op(session.principal, portal_id)
        return {"record": record.decode("utf-8")}

    def _tool_import_portal(self, session, params, target):
        record = params.get("record", "").encode("utf-8")
        partition = params.get("partition")
        portal = self.domain.import_portal_op(
            session.principal, record,
            self._resolve_partition_ref(partition) if partition else None,
            expect_from=params.get("expect_from"),
        )
        return {"portal": portal.sign.id.compact(), "name": portal.sign.name,
                "target": portal.target.to_dict()}

    def _tool_list_portals(self, session, params, target):
        self.domain.require_owner(session.principal)
        return {"portals": [
            {"id": pid, "name": p.sign.name, "kind": p.target.kind,
             "endpoint": p.target.endpoint, "tags": sorted(p.sign.tags),
             "context": p.context_id}
            for pid, p in self.domain.catalog.portals.items()
        ]}

    def _tool_mark_favorite(self, session, params, target):
        favorites = self.domain.mark_favorite(
            session.principal,
            self.domain.resolve_portal_ref(params.get("portal") or target or ""))
        return {"favorites": favorites}

    def _tool_map(self, session, params, target):
        return {"map": self.domain.build_map(session.principal)}

    def _tool_federate(self, session, params, target):
        self.domain.require_owner(session.principal)
        link = self.federate(params["endpoint"])
        return {"peer": link.peer_domain, "name": link.peer_name,
                "state": link.state}

    def _tool_snapshot(self, session, params, target):
        self.domain.require_owner(session.principal)
        out = Path(params["out"])
        checksum = make_snapshot(self.domain, out)
        return {"archive": str(out), "checksum": checksum}

    def _tool_agent(self, session, params, target):
        """Template tools dispatch to their site agent; the stock agent
        acknowledges and leaves a journal trace under the active task."""
        focus = self.domain.tasks.tasks.get(session.focus_task) if session.focus_task else None
        if focus is not None and focus.open:
            self.domain.tasks.journal.append(
                focus.id, "space_entered",
                {"space": session.location.current.space.to_dict(), "portal": None},
            )
        return None

    # ----------------------------------------------------------- federation

    def _make_client(self, endpoint: str):
        from .client import RawClient
        return RawClient(endpoint)

    def federate(self, endpoint: str) -> FederationLink:
        domain = self.domain
        try:
            client = self._make_client(endpoint)
        except UniError as exc:
            raise UniError(UNREACHABLE, f"cannot reach {endpoint}: {exc.message}") from exc
        try:
            reply = client.request(Message(type="hello", seq=1, body={
                "agent": "domain-system",
                "credentials": {
                    "principal": "federate",
                    "domain": domain.id,
                    "name": domain.owner_card.sign.name,
                    "key": domain.keys.public_raw().hex(),
                    "endpoint": self.listen_address,
                },
            }))
        except UniError as exc:
            client.close()
            raise UniError(UNREACHABLE, f"no handshake from {endpoint}") from exc
        finally:
            client.close()
        if reply.type == "error":
            raise UniError(reply.body.get("code", REJECTED),
                           reply.body.get("message", "peer rejected federation"))
        peer_domain = reply.body["domain"]
        domain.keys.trust(peer_domain, bytes.fromhex(reply.body["key"]))
        domain._save_secret()
        link = FederationLink(endpoint=endpoint, peer_domain=peer_domain,
                              peer_name=reply.body.get("name", ""))
        self.links[peer_domain] = link
        return link

    def link_for_endpoint(self, endpoint: str) -> FederationLink | None:
        for link in self.links.values():
            if link.endpoint == endpoint and link.state == "Connected":
                return link
        return None

    def _remote_client(self, session: Session, endpoint: str):
        key = (session.token, endpoint)
        client = self._remote.get(key)
        if client is not None and client.alive():
            return client
        link = self.link_for_endpoint(endpoint)
        if link is None:
            raise UniError(UNREACHABLE, f"no connected federation link to {endpoint}")
        from .client import ProtocolClient
        client = ProtocolClient(endpoint)
        payload = canonical_json({"agent": "owner", "domain": self.domain.id}).encode("utf-8")
        sig = base64.b64encode(self.domain.keys.sign(payload)).decode("ascii")
        client.hello({"principal": "external", "domain": self.domain.id,
                      "agent": "owner", "sig": sig})
        self._remote[key] = client
        return client

    def _activate_remote(self, session: Session, portal_id: str, portal) -> tuple[str, dict]:
        route = route_select(portal, self.domain.id)
        if route.transport != "Tcp":
            raise UniError(UNREACHABLE, "remote portal without a TCP route")
        client = self._remote_client(session, route.address)
        reply = client.invoke("activate_remote_target", {
            "kind": portal.target.kind,
            "id": portal.target.target.compact(),
            "context": portal.context_id,
        })
        if reply.type == "error":
            raise UniError(reply.body.get("code", UNREACHABLE),
                           reply.body.get("message", ""))
        from .portals import Frame
        session.location.push(Frame(space=portal.target, entry_portal=portal_id))
        focus = self.domain.tasks.tasks.get(session.focus_task) if session.focus_task else None
        self.domain.tasks.note_space(
            session.focus_task if focus is not None and focus.open else None,
            portal.target.to_dict(), portal_id,
        )
        return reply.type, reply.body

    def _tool_activate_remote_target(self, session, params, target):
        """Peer-side entry for a remote activation: checks confinement
        and renders the target space for the visiting principal."""
        sid = params.get("id", "")
        kind = params.get("kind", "Site")
        space = PortalTarget(kind=kind, target=SignId.parse(sid))
        self.domain._check_space_read(session.principal, space)
        from .portals import Frame
        session.location.push(Frame(space=space, entry_portal=None,
                                    storage_mark=self.domain._mark_for_space(space)))
        return None

    def _forward(self, session: Session, tool: str, params: dict,
                 target: str | None) -> tuple[str, dict]:
        space = session.location.current.space
        endpoint = space.endpoint[4:] if space.endpoint.startswith("tcp:") else space.endpoint
        client = self._remote_client(session, endpoint)
        reply = client.invoke(tool, params, target)
        if reply.type == "error":
            raise UniError(reply.body.get("code", UNREACHABLE), reply.body.get("message", ""))
        return reply.type, reply.body

    # ------------------------------------------------------------ lifecycle

    def serve_tcp(self, listen: str) -> str:
        host, _, port_text = listen.partition(":")
        host = host or "127.0.0.1"
        port = int(port_text) if port_text else DEFAULT_PORT
        try:
            self._tcp_server = _TcpServer((host, port), _TcpHandler, self)
        except OSError as exc:
            raise UniError(BIND_FAILED, f"cannot bind {listen}: {exc}") from exc
        actual = self._tcp_server.server_address
        self.listen_address = f"{actual[0]}:{actual[1]}"
        self.domain.listen_address = self.listen_address
        thread = threading.Thread(target=self._tcp_server.serve_forever, daemon=True)
        thread.start()
        return self.listen_address

    def stop(self) -> None:
        if self._tcp_server is not None:
            self._tcp_server.shutdown()
            self._tcp_server.server_close()
            self._tcp_server = None
        for client in self._remote.values():
            try:
                client.close()
            except Exception:
                pass
        self._remote.clear()
        with self.lock:
            self.domain.flush_all()
            self.domain.close()


class _TcpServer(socketserver.ThreadingTCPServer):
    allow_reuse_address = True
    daemon_threads = True

    def __init__(self, addr, handler, domain_server: DomainServer):
        super().__init__(addr, handler)
        self.domain_server = domain_server


class _TcpHandler(socketserver.StreamRequestHandler):
    def handle(self):
        conn: dict = {}
        server: DomainServer = self.server.domain_server
        while True:
            try:
                line = self.rfile.readline(MAX_FRAME + 2)
            except (ConnectionError, OSError):
                break
            if not line:
                break
            if len(line) > MAX_FRAME:
                reply = encode(Message(type="error", seq=0,
                                       body={"code": MALFORMED,
                                             "message": "frame exceeds 1 MiB"}))
            else:
                reply = server.handle_frame(line, conn)
            try:
                self.wfile.write(reply)
                self.wfile.flush()
            except (ConnectionError, OSError):
                break


# ------------------------------------------------------------- snapshots


def make_snapshot(domain: Domain, out_path: Path) -> str:
    """Deterministic archive of the whole domain root with a manifest."""
    if domain.config.root is None:
        raise UniError(NOT_FOUND, "an in-memory domain has nothing to archive")
    if domain.edit_leases_open():
        raise UniError(LEASES_OPEN, "close or save all edit leases before a snapshot")
    domain.flush_all()
    root = domain.config.root
    files: dict[str, str] = {}
    for path in sorted(p for p in root.rglob("*") if p.is_file()):
        rel = path.relative_to(root).as_posix()
        files[rel] = hashlib.sha256(path.read_bytes()).hexdigest()
    manifest = canonical_json({"files": files})
    total = hashlib.sha256(manifest.encode("utf-8")).hexdigest()

    out_path.parent.mkdir(parents=True, exist_ok=True)
    with tarfile.open(out_path, "w") as tar:
        info = tarfile.TarInfo("MANIFEST.json")
        payload = canonical_json({"files": files, "total": total}).encode("utf-8")
        info.size = len(payload)
        info.mtime = 0
        tar.addfile(info, io.BytesIO(payload))
        for rel in sorted(files):
            data = (root / rel).read_bytes()
            info = tarfile.TarInfo(rel)
            info.size = len(data)
            info.mtime = 0
            tar.addfile(info, io.BytesIO(data))
    return total


def restore_snapshot(archive: Path, new_root: Path) -> None:
    """Unpack and verify; nothing is written unless the archive checks out."""
    try:
        with tarfile.open(archive, "r") as tar:
            names = tar.getnames()
            if "MANIFEST.json" not in names:
                raise UniError(ARCHIVE_CORRUPT, "archive has no manifest")
            manifest = json.loads(tar.extractfile("MANIFEST.json").read().decode("utf-8"))
            files = manifest["files"]
            recomputed = hashlib.sha256(
                canonical_json({"files": files}).encode("utf-8")
            ).hexdigest()
            if recomputed != manifest.get("total"):
                raise UniError(ARCHIVE_CORRUPT, "manifest checksum mismatch")
            contents: dict[str, bytes] = {}
            for rel, digest in files.items():
                member = tar.extractfile(rel)
                if member is None:
                    raise UniError(ARCHIVE_CORRUPT, f"archive is missing {rel}")
                data = member.read()
                if hashlib.sha256(data).hexdigest() != digest:
                    raise UniError(ARCHIVE_CORRUPT, f"checksum mismatch on {rel}")
                contents[rel] = data
    except (tarfile.TarError, KeyError, ValueError, OSError) as exc:
        raise UniError(ARCHIVE_CORRUPT, f"unreadable archive: {exc}") from exc
    for rel, data in contents.items():
        path = new_root / rel
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(data)
