"""One personal domain: the owner's managed subspace.

Holds the partition/site structure, the sign registry, the portal
catalog, the task engine with its journal, every site's storage and the
access policy. All mutation funnels through the server's serialized
command queue; this module assumes it is called under that discipline.

Persistence: ``domain.json`` carries the structure and is rewritten
atomically before a structural command is acknowledged; the task journal
and the per-storage command logs are append-only and fsynced per entry;
``policy.json`` holds grants; ``secret.json`` the owner credential and
signing key. Everything else is derived on load.
"""

from __future__ import annotations

import json
import os
import time
from dataclasses import dataclass, field
from pathlib import Path

from .access import AccessTarget, Policy, Principal, Right
from .errors import (
    UniError,
    ACCESS_DENIED,
    ALREADY_MOUNTED,
    AT_ROOT,
    INVALID_TEMPLATE,
    LEASES_OPEN,
    NOT_FOUND,
    SOURCE_UNREACHABLE,
    WRONG_STATE,
    denied,
    not_found,
)
from .lint import LintNode, ValidationReport, validate_complexity
from .model import (
    ComplexityLimits,
    Desktop,
    MANDATORY_WORKPLACES,
    MountKind,
    Partition,
    SELECTION_TOOLS,
    SYSTEM_TOOLS,
    Scheme,
    Site,
    SiteKind,
    Tool,
    Toolbar,
    Workplace,
)
from .portals import (
    DomainKeys,
    Frame,
    Portal,
    PortalCatalog,
    PortalTarget,
    SessionLocation,
    export_portal,
    import_portal,
)
from .signs import ConceptualType, IdFactory, PersonCard, Sign, SignId, SignRegistry
from .storage import Storage, canonical_json
from .tasks import TaskEngine, TaskJournal, TaskState
from .templates import SiteTemplate, get_template, template_from_json

HISTORY_LIMIT = 50

# entity kind in the registry -> portal target kind
_TARGET_KIND = {
    "domain": "Domain",
    "partition": "Partition",
    "site": "Site",
    "workplace": "Workplace",
    "section": "StorageSection",
    "container": "Container",
    "object": "ObjectPart",
    "task": "Task",
}


class Clock:
    """Logical ticks when deterministic, wall time otherwise."""

    def __init__(self, deterministic: bool):
        self.deterministic = deterministic
        self.ticks = 0

    def tick(self) -> None:
        self.ticks += 1

    def now(self) -> float:
        if self.deterministic:
            return float(self.ticks)
        return time.time()


@dataclass
class DomainConfig:
    root: Path | None = None
    limits: ComplexityLimits = field(default_factory=ComplexityLimits)
    max_container_depth: int = 5
    autosave_ticks: int = 30
    strict_lint: bool = False
    seed: int | None = None
    deterministic: bool | None = None
    owner_name: str = "Owner"
    allow_federation: bool = True

    def __post_init__(self):
        if isinstance(self.root, str):
            self.root = Path(self.root)
        if self.deterministic is None:
            self.deterministic = self.seed is not None


@dataclass
class Session:
    """Per-connection state; business state stays in the domain."""

    token: str
    principal: Principal
    location: SessionLocation
    focus_task: str | None = None
    selection: str | None = None
    last_results: list = field(default_factory=list)
    last_command: dict | None = None
    seq_in: int = 0
    seq_out: int = 0


class Domain:
    """State and operations of one personal domain."""

    def __init__(self, config: DomainConfig):
        self.config = config
        self.clock = Clock(bool(config.deterministic))
        self.id: str = ""
        self.ids: IdFactory | None = None
        self.registry = SignRegistry()
        self.keys: DomainKeys | None = None
        self.owner_secret: str = ""
        self.owner_card: PersonCard | None = None
        self.sign: Sign | None = None
        self.partitions: dict[str, Partition] = {}
        self.partition_order: list[str] = []
        self.sites: dict[str, Site] = {}
        self.site_order: list[str] = []
        self.storages: dict[str, Storage] = {}
        self.catalog: PortalCatalog | None = None
        self.journal: TaskJournal | None = None
        self.tasks: TaskEngine | None = None
        self.policy: Policy | None = None
        self.system_site_id: str = ""
        self.listen_address: str = ""  # set by the server when TCP is up
        self.dialer = None  # injected by the server for cloud/federation reach
        self._decision_trail: list = []  # access decisions of the running command

    # ------------------------------------------------------------ lifecycle

    @classmethod
    def create_or_load(cls, config: DomainConfig) -> "Domain":
        domain = cls(config)
        root = config.root
        if root is not None and (root / "domain.json").exists():
            domain._load()
        else:
            domain._create()
        return domain

    def _create(self) -> None:
        import random
        import uuid

        rng = random.Random(self.config.seed) if self.config.seed is not None else None
        self.id = f"{rng.getrandbits(128):032x}" if rng else uuid.uuid4().hex
        self.ids = IdFactory(self.id, self.config.seed)
        self.keys = DomainKeys(rng.randbytes(32) if rng else None)
        self.keys.trust(self.id, self.keys.public_raw())
        self.owner_secret = (
            f"{rng.getrandbits(128):032x}" if rng else uuid.uuid4().hex
        )
        self.catalog = PortalCatalog(self.ids, self.registry)
        self.policy = Policy(domain_id=self.id)

        self.sign = self.registry.register(
            Sign(id=self.ids.new(), name="Personal domain", ctype=ConceptualType.PORTAL),
            "domain",
        )
        owner_sign = self.registry.register(
            Sign(
                id=self.ids.new(),
                name=self.config.owner_name,
                ctype=ConceptualType.PERSON,
                properties={"purpose": "owner of this personal domain"},
            ),
            "person",
        )
        self.owner_card = PersonCard(sign=owner_sign)

        if self.config.root is not None:
            self.config.root.mkdir(parents=True, exist_ok=True)
            self.journal = TaskJournal(self.config.root / "journal.ndjson", self.clock.now)
        else:
            self.journal = TaskJournal(None, self.clock.now)
        self.tasks = TaskEngine(self.journal)

        resident = Partition(
            id=self.ids.new(), name="Resident", mount=MountKind.RESIDENT
        )
        self.registry.register(
            Sign(id=resident.id, name=resident.name, ctype=ConceptualType.PORTAL),
            "partition",
        )
        self.partitions[resident.id.compact()] = resident
        self.partition_order.append(resident.id.compact())

        self._build_system_site(resident)
        self._save_secret()
        self.save_structure()
        self._save_policy()

    # ------------------------------------------------------ system site

    def _tool(self, key: str, name: str, purpose: str, group: str = "", agent: str | None = None) -> Tool:
        sign = self.registry.register(
            Sign(
                id=self.ids.new(),
                name=name,
                ctype=ConceptualType.TOOL,
                properties={"purpose": purpose},
                agent_ref=agent,
            ),
            "tool",
        )
        return Tool(sign=sign, command_key=key, group=group)

    def _toolbar(self, name: str, tools: list[Tool]) -> Toolbar:
        return Toolbar(id=self.ids.new(), name=name, tools=tools)

    def _workplace(self, name: str, toolbars: list[Toolbar], scheme: Scheme = Scheme.TECHNOLOGICAL) -> Workplace:
        wp = Workplace(
            id=self.ids.new(),
            name=name,
            desktop=Desktop(id=self.ids.new()),
            toolbars=toolbars,
            scheme=scheme,
        )
        self.registry.register(
            Sign(id=wp.id, name=name, ctype=ConceptualType.PORTAL), "workplace"
        )
        return wp

    def _mandatory_workplaces(self) -> list[Workplace]:
        task_wp = self._workplace(
            "TaskMgmt",
            [self._toolbar("tasks", [
                self._tool("switch_task", "Switch task", "switch to another open task"),
                self._tool("query_journal", "Journal", "inspect the task journal"),
            ])],
        )
        objects_bar = self._toolbar("objects", [
            self._tool("create_object", "Create Object", "create a new data object on the desktop"),
            self._tool("put", "Put", "store an object into the storage"),
            self._tool("get", "Get", "fetch an object's parts"),
            self._tool("open", "Move object", "move an object from the storage to the desktop"),
            self._tool("open_view", "Move for View", "use an object without changing its structure"),
            self._tool("close", "Return object", "return the object from the desktop"),
            self._tool("edit", "Edit", "change a part of the opened object"),
            self._tool("versions", "Versions", "list saved versions of the object"),
            self._tool("restore_version", "Restore version", "bring back a saved version"),
        ])
        zones_bar = self._toolbar("zones", [
            self._tool("create_section", "Create section", "add a storage section"),
            self._tool("create_container", "Create container", "add a nested container"),
            self._tool("move", *SELECTION_TOOLS["move"]),
            self._tool("copy", *SELECTION_TOOLS["copy"]),
            self._tool("insert", *SELECTION_TOOLS["insert"]),
            self._tool("delete", *SELECTION_TOOLS["delete"]),
            self._tool("restore", "Restore", "bring an object back from the trash container"),
            self._tool("properties", *SELECTION_TOOLS["properties"]),
            self._tool("structure", *SELECTION_TOOLS["structure"]),
            self._tool("fetch_part", "Fetch part", "ranged transfer of one object part"),
        ])
        data_wp = self._workplace("DataMgmt", [objects_bar, zones_bar])
        return [task_wp, data_wp]

    def _build_system_site(self, partition: Partition) -> None:
        storage = self._new_storage()
        workplaces = self._mandatory_workplaces()
        base_bar = self._toolbar("base", [
            self._tool(key, name, purpose)
            for key, (name, purpose) in SYSTEM_TOOLS.items()
        ])
        workplaces[0].toolbars.insert(0, base_bar)
        workplaces += [
            self._workplace("Search", [self._toolbar("search", [
                self._tool("find", "Find", "search for resources"),
                self._tool("map", "Map", "environment map of the domain"),
                self._tool("mark_favorite", "Favorite", "mark a portal as a favorite"),
            ])]),
            self._workplace("Install", [self._toolbar("install", [
                self._tool("install_site", "Install site", "install a new site into a partition"),
                self._tool("list_templates", "Templates", "list installable site templates"),
            ])]),
            self._workplace("Devices", [self._toolbar("devices", [
                self._tool("mount_partition", "Mount", "attach a device or cloud partition"),
                self._tool("unmount_partition", "Unmount", "detach a mounted partition"),
            ])]),
            self._workplace("Settings", [self._toolbar("settings", [
                self._tool("grant", "Grant", "provide access to the resources of the environment"),
                self._tool("revoke", "Revoke", "withdraw a previously granted access"),
                self._tool("federate", "Federate", "exchange calling cards with a peer domain"),
                self._tool("snapshot", "Snapshot", "archive the whole domain for transfer"),
                self._tool("create_portal", "Create portal", "make a portal to a chosen sign"),
                self._tool("export_portal", "Export portal", "produce a portable portal record"),
                self._tool("import_portal", "Import portal", "bring in a portable portal record"),
                self._tool("list_portals", "Portals", "list portals of this domain"),
            ])]),
        ]
        site = Site(
            id=self.ids.new(),
            name="System",
            workplaces=workplaces,
            storage_ref=storage.id,
            kind=SiteKind.SYSTEM,
        )
        self.registry.register(
            Sign(id=site.id, name=site.name, ctype=ConceptualType.PORTAL,
                 properties={"purpose": "management site of the personal domain"}),
            "site",
        )
        storage.owner_site = site.id
        self.sites[site.id.compact()] = site
        self.site_order.append(site.id.compact())
        self.system_site_id = site.id.compact()
        self._register_site_portals(site, partition)

    def _new_storage(self) -> Storage:
        sid = self.ids.new()
        storage_root = None
        if self.config.root is not None:
            storage_root = self.config.root / "storages" / sid.local_id
        storage = Storage(
            storage_id=sid,
            owner_site=sid,  # rebound by the caller
            ids=self.ids,
            registry=self.registry,
            root=storage_root,
            max_container_depth=self.config.max_container_depth,
            clock=self.clock.now,
        )
        self.storages[sid.compact()] = storage
        storage.create_section("main")
        return storage

    def _register_site_portals(self, site: Site, partition: Partition) -> Portal:
        site_portal = self.catalog.create(
            target=PortalTarget(kind="Site", target=site.id),
            name=site.name,
            data_site_refs=[site.storage_ref.compact()],
        )
        partition.site_portals.append(site_portal.sign.id)
        for wp in site.workplaces:
            self.catalog.create(
                target=PortalTarget(kind="Workplace", target=wp.id),
                name=wp.name,
                parameters={"site": site.id.compact()},
            )
        return site_portal

    # ------------------------------------------------------------- lookups

    @property
    def owner(self) -> Principal:
        return Principal.owner(self.id)

    def system_site(self) -> Site:
        return self.sites[self.system_site_id]

    def system_storage(self) -> Storage:
        return self.storages[self.system_site().storage_ref.compact()]

    def site_of_workplace(self, workplace_id: str) -> tuple[Site, Workplace]:
        for site in self.sites.values():
            for wp in site.workplaces:
                if wp.id.compact() == workplace_id:
                    return site, wp
        raise not_found("workplace")

    def storage_of_zone(self, zone_or_object_id: str) -> Storage:
        for storage in self.storages.values():
            if zone_or_object_id in storage.zones or zone_or_object_id in storage.objects:
                return storage
        raise not_found("storage zone")

    def site_for_space(self, space: PortalTarget) -> Site | None:
        compact = space.target.compact()
        if space.kind == "Site":
            return self.sites.get(compact)
        if space.kind == "Workplace":
            try:
                site, _ = self.site_of_workplace(compact)
                return site
            except UniError:
                return None
        if space.kind in ("StorageSection", "Container", "ObjectPart"):
            try:
                storage = self.storage_of_zone(compact)
            except UniError:
                return None
            for site in self.sites.values():
                if site.storage_ref.compact() == storage.id.compact():
                    return site
        return None

    def workplace_target(self, site: Site, name: str) -> PortalTarget:
        return PortalTarget(kind="Workplace", target=site.workplace(name).id)

    def initial_location(self) -> SessionLocation:
        target = self.workplace_target(self.system_site(), "TaskMgmt")
        return SessionLocation(frames=[Frame(space=target, entry_portal=None)])

    def resume_location(self) -> tuple[SessionLocation, str | None]:
        """New sessions pick up where the journal says work stopped."""
        location = self.initial_location()
        active = self.tasks.last_active_id()
        focus = active
        if active is None:
            searching = [t for t in self.tasks.open_tasks() if t.state is TaskState.SEARCHING]
            if searching:
                focus = searching[-1].id
                target = self.workplace_target(self.system_site(), "Search")
                location.push(Frame(space=target, entry_portal=None))
        else:
            task = self.tasks.tasks[active]
            if task.saved_space:
                space = PortalTarget.from_dict(task.saved_space)
                mark = self._mark_for_space(space)
                location.push(Frame(space=space, entry_portal=task.portal, storage_mark=mark))
        return location, focus

    def _mark_for_space(self, space: PortalTarget) -> int:
        site = self.site_for_space(space)
        if site is None:
            return 0
        return self.storages[site.storage_ref.compact()].frame_mark()

    def available_tools(self, session: Session) -> set[str]:
        """Union of the current site's toolbars plus the base tools."""
        keys = set(SYSTEM_TOOLS)
        site = self.site_for_space(session.location.current.space) or self.system_site()
        keys |= site.command_keys()
        return keys

    # ------------------------------------------------- name-based addressing

    def resolve_portal_ref(self, ref: str) -> str:
        """Portal by id, else first portal with that name (insertion
        order); names may repeat, ids never do."""
        if ref in self.catalog.portals:
            return ref
        for pid, portal in self.catalog.portals.items():
            if portal.sign.name == ref:
                return pid
        raise not_found("portal")

    def resolve_task_ref(self, ref: str) -> str:
        if ref in self.tasks.tasks:
            return ref
        for task in self.tasks.open_tasks():
            portal = self.catalog.portals.get(task.portal)
            if portal is not None and portal.sign.name == ref:
                return task.id
        raise not_found("task")

    def resolve_object_ref(self, ref: str) -> str:
        for storage in self.storages.values():
            if ref in storage.objects:
                return ref
        hits = []
        for storage in self.storages.values():
            for oid, obj in storage.objects.items():
                if obj.sign.name == ref:
                    hits.append((obj.seq, oid))
        if hits:
            return min(hits)[1]
        raise not_found("object")

    def resolve_zone_ref(self, ref: str, prefer_storage: str | None = None) -> str:
        for storage in self.storages.values():
            if ref in storage.zones:
                return ref
        if prefer_storage is not None:
            preferred = self.storages.get(prefer_storage)
            if preferred is not None:
                for zid, zone in preferred.zones.items():
                    if zone.name == ref:
                        return zid
        for storage in self.storages.values():
            for zid, zone in storage.zones.items():
                if zone.name == ref:
                    return zid
        raise not_found("zone")

    def resolve_sign_ref(self, ref: str) -> str:
        """Any live sign by id or name; places, tools and objects alike."""
        try:
            sid = SignId.parse(ref)
            if self.registry.exists(sid):
                return ref
        except UniError:
            pass
        for entry in self.registry.all_live():
            if entry.sign.name == ref:
                return entry.sign.id.compact()
        raise not_found("sign")

    # --------------------------------------------------------- access gate

    def begin_command(self) -> None:
        self._decision_trail.clear()

    def decisions_recorded(self) -> int:
        return len(self._decision_trail)

    def storage_mutations(self) -> int:
        return sum(st._seq for st in self.storages.values())

    def check(self, principal: Principal, op: str, target: AccessTarget):
        decision = self.policy.check(principal, op, target)
        self._decision_trail.append(decision)
        if not decision.allow:
            raise denied(f"{decision.reason} for {op}")
        return decision

    def check_storage(self, principal: Principal, op: str, storage: Storage,
                      zone_or_object: str | None = None):
        chain: tuple[str, ...] = ()
        if zone_or_object is not None:
            if zone_or_object in storage.objects:
                zone = storage.objects[zone_or_object].zone
                chain = storage.zone_chain(zone) if zone else ()
            elif zone_or_object in storage.zones:
                chain = storage.zone_chain(zone_or_object)
        return self.check(principal, op, AccessTarget(storage.id.compact(), chain))

    def require_owner(self, principal: Principal, code: str = ACCESS_DENIED):
        if not (principal.kind == "Owner" and principal.domain_id == self.id):
            raise UniError(code, "the domain owner must perform this operation")
        from .access import Decision
        self._decision_trail.append(Decision(True, "OWNER"))

    # -------------------------------------------------------- task commands

    def create_task(self, session: Session, name: str | None = None,
                    params: dict | None = None, sub: bool = False) -> dict:
        if sub:
            return self.spawn_subtask(session, params or {})
        task_id = self.ids.new().compact()
        label = name or f"Task {len(self.tasks.tasks) + 1}"
        portal = self.catalog.create(
            target=PortalTarget(kind="Task", target=SignId.parse(task_id)),
            name=label,
        )
        suspended = None
        if session.focus_task is not None:
            focus = self.tasks.tasks.get(session.focus_task)
            if focus is not None and focus.state is TaskState.ACTIVE:
                suspended = session.focus_task
                focus.saved_space = session.location.current.space.to_dict()
        self.registry.register(
            Sign(id=SignId.parse(task_id), name=label, ctype=ConceptualType.PORTAL), "task"
        )
        task = self.tasks.create(task_id, portal.sign.id.compact(), suspended, name=label)
        session.focus_task = task_id
        search = self.workplace_target(self.system_site(), "Search")
        session.location = self.initial_location()
        session.location.push(Frame(space=search, entry_portal=None))
        return {"task": task_id, "portal": portal.sign.id.compact(), "name": label}

    def spawn_subtask(self, session: Session, params: dict[str, str],
                      name: str | None = None) -> dict:
        parent_id = session.focus_task
        if parent_id is None:
            raise UniError(WRONG_STATE, "no task is active in this session")
        child_id = self.ids.new().compact()
        label = name or f"Subtask {len(self.tasks.tasks) + 1}"
        portal = self.catalog.create(
            target=PortalTarget(kind="Task", target=SignId.parse(child_id)),
            name=label,
        )
        self.registry.register(
            Sign(id=SignId.parse(child_id), name=label, ctype=ConceptualType.PORTAL), "task"
        )
        context = self.ids.new().local_id[:12]
        child = self.tasks.spawn(parent_id, child_id, portal.sign.id.compact(), params,
                                 context, name=label)
        site_space = PortalTarget.from_dict(child.site)
        mark = self._mark_for_space(site_space)
        session.location.push(
            Frame(space=site_space, entry_portal=portal.sign.id.compact(),
                  storage_mark=mark, subtask=child_id)
        )
        session.focus_task = child_id
        return {"task": child_id, "parent": parent_id, "portal": portal.sign.id.compact()}

    def undo_command(self, session: Session) -> dict:
        """The UnDo tool: abandons a task still searching, otherwise
        steps the current site's storage back one log entry."""
        focus = self.tasks.tasks.get(session.focus_task) if session.focus_task else None
        if focus is not None and focus.state is TaskState.SEARCHING:
            return self.cancel_creation(session, focus.id)
        site = self.site_for_space(session.location.current.space) or self.system_site()
        storage = self.storages[site.storage_ref.compact()]
        self.check_storage(session.principal, "write", storage)
        undone = storage.undo()
        return {"undone": undone}

    def redo_command(self, session: Session) -> dict:
        site = self.site_for_space(session.location.current.space) or self.system_site()
        storage = self.storages[site.storage_ref.compact()]
        self.check_storage(session.principal, "write", storage)
        return {"redone": storage.redo()}

    def cancel_creation(self, session: Session, task_id: str) -> dict:
        created = self.journal.query(task=task_id, event="created")
        resumed = created[0].payload.get("suspended") if created else None
        if resumed is not None:
            resumed_task = self.tasks.tasks.get(resumed)
            if resumed_task is None or resumed_task.state is not TaskState.SUSPENDED:
                resumed = None
        task = self.tasks.cancel_creation(task_id, resumed)
        self.catalog.remove(task.portal)
        self.registry.unregister(SignId.parse(task_id))
        if session.focus_task == task_id:
            session.focus_task = resumed
            session.location = self.initial_location()
            if resumed is not None:
                saved = self.tasks.tasks[resumed].saved_space
                if saved:
                    space = PortalTarget.from_dict(saved)
                    session.location.push(Frame(
                        space=space, entry_portal=self.tasks.tasks[resumed].portal,
                        storage_mark=self._mark_for_space(space),
                    ))
        return {"cancelled": task_id, "resumed": resumed}

    def switch_task(self, session: Session, task_id: str) -> dict:
        from_id = session.focus_task
        from_space = None
        if from_id is not None and from_id in self.tasks.tasks:
            from_space = session.location.current.space.to_dict()
        task = self.tasks.switch(task_id, from_id, from_space)
        session.focus_task = task_id
        session.location = self.initial_location()
        if task.state is TaskState.SEARCHING:
            # back to finding a site for it
            search = self.workplace_target(self.system_site(), "Search")
            session.location.push(Frame(space=search, entry_portal=None))
        elif task.saved_space:
            space = PortalTarget.from_dict(task.saved_space)
            session.location.push(Frame(
                space=space, entry_portal=task.portal,
                storage_mark=self._mark_for_space(space),
            ))
        return {"task": task_id, "state": task.state.value}

    def complete_task(self, session: Session, task_id: str | None = None,
                      results: dict | None = None) -> dict:
        target = task_id or session.focus_task
        if target is None:
            raise UniError(WRONG_STATE, "no task in focus")
        task = self.tasks.complete(target, results)
        self.catalog.remove(task.portal)
        self.registry.unregister(SignId.parse(target))
        if task.site is not None:
            site = self.sites.get(task.site.get("domain", "") + "/" + task.site.get("id", ""))
            if site is not None:
                self.storages[site.storage_ref.compact()].flush()
        if session.focus_task == target:
            session.focus_task = None
            session.location = self.initial_location()
        return {"completed": target}

    def exit_space(self, session: Session, save: bool = False,
                   results: dict | None = None) -> dict:
        if session.location.depth <= 1:
            raise UniError(AT_ROOT, "already at the task-management workplace")
        frame = session.location.current
        site = self.site_for_space(frame.space)
        storage = self.storages[site.storage_ref.compact()] if site else None
        out: dict = {"exited": frame.space.to_dict()}
        if frame.subtask is not None:
            parent = self.tasks.return_from_subtask(frame.subtask, results, save)
            session.focus_task = parent.id
            out["returned_to"] = parent.id
        if storage is not None:
            if save:
                self.check_storage(session.principal, "save", storage)
                for lease in list(storage.leases.values()):
                    if not lease.closed and lease.mode == "Edit" and lease.dirty:
                        storage.save_object(lease.object_id, "Overwrite")
                        lease.dirty = False
                storage.checkpoint("exit-save")
                storage.flush()
            elif storage.frame_mark() > frame.storage_mark:
                self.check_storage(session.principal, "write", storage)
                out["rolled_back"] = storage.rollback_to(frame.storage_mark)
            else:
                out["rolled_back"] = 0
        session.location.pop()
        return out

    # ------------------------------------------------------------- portals

    def target_for_sign(self, sign_id: str) -> PortalTarget:
        sid = SignId.parse(sign_id)
        entry = self.registry.get(sid)
        kind = _TARGET_KIND.get(entry.entity_kind)
        if kind is None:
            if entry.entity_kind == "portal":
                portal = self.catalog.get(sign_id)
                return portal.target
            raise UniError(NOT_FOUND, f"signs of kind {entry.entity_kind} have no spaces")
        return PortalTarget(kind=kind, target=sid)

    def create_portal_op(self, principal: Principal, sign_id: str, name: str,
                         tags: set[str] | None = None, context: str = "",
                         spawn_task: bool = False) -> Portal:
        target = self.target_for_sign(sign_id)
        if not target.remote and not self.registry.exists(target.target):
            raise not_found("portal target")
        self._check_space_read(principal, target)
        portal = self.catalog.create(
            target=target, name=name, tags=tags, context_id=context, spawn_task=spawn_task
        )
        self.save_structure()
        return portal

    def _check_space_read(self, principal: Principal, target: PortalTarget) -> None:
        if principal.kind == "Owner" and principal.domain_id == self.id:
            return
        site = self.site_for_space(target)
        if site is None:
            raise denied("only the owner can reach spaces outside storages")
        storage = self.storages[site.storage_ref.compact()]
        zone = target.target.compact()
        self.check_storage(
            principal, "read", storage,
            zone if (zone in storage.zones or zone in storage.objects) else None,
        )

    def activate(self, session: Session, portal_id: str) -> dict:
        portal = self.catalog.get(portal_id)
        target = self.catalog.resolve(portal)
        if target.remote:
            raise UniError(NOT_FOUND, "remote activation is routed by the server")
        self._check_space_read(session.principal, target)

        if target.kind == "Task":
            return self.switch_task(session, target.target.compact())

        focus = self.tasks.tasks.get(session.focus_task) if session.focus_task else None
        if (
            focus is not None
            and focus.state is TaskState.SEARCHING
            and target.kind == "Site"
        ):
            context = portal.context_id or self.ids.new().local_id[:12]
            self.tasks.bind(focus.id, target.to_dict(), context)
            session.location = self.initial_location()
            session.location.push(Frame(
                space=target, entry_portal=portal_id,
                storage_mark=self._mark_for_space(target),
            ))
            self._note_history(session.principal, portal_id)
            return {"bound": focus.id, "space": target.to_dict()}

        if portal.spawn_task and focus is not None and focus.state is TaskState.ACTIVE \
                and target.kind == "Site":
            self.create_task(session)
            return self.activate(session, portal_id)

        session.location.push(Frame(
            space=target, entry_portal=portal_id,
            storage_mark=self._mark_for_space(target),
        ))
        self.tasks.note_space(
            session.focus_task if focus is not None and focus.open else None,
            target.to_dict(), portal_id,
        )
        self._note_history(session.principal, portal_id)
        return {"space": target.to_dict()}

    def goto_workplace(self, session: Session, site: Site, name: str) -> dict:
        target = self.workplace_target(site, name)
        if session.location.current.space == target:
            return {"space": target.to_dict()}
        session.location.push(Frame(
            space=target, entry_portal=None,
            storage_mark=self._mark_for_space(target),
        ))
        focus = self.tasks.tasks.get(session.focus_task) if session.focus_task else None
        self.tasks.note_space(
            session.focus_task if focus is not None and focus.open else None,
            target.to_dict(), None,
        )
        return {"space": target.to_dict()}

    def _note_history(self, principal: Principal, portal_id: str) -> None:
        if principal.kind != "Owner" or principal.domain_id != self.id:
            return
        storage = self.system_storage()
        self.check(principal, "write", AccessTarget(storage.id.compact()))
        history = json.loads(storage.settings_area.get("history", "[]"))
        history = [portal_id] + [p for p in history if p != portal_id]
        storage.set_setting("history", json.dumps(history[:HISTORY_LIMIT]), quiet=True)

    def mark_favorite(self, principal: Principal, portal_id: str) -> list[str]:
        self.require_owner(principal)
        self.catalog.get(portal_id)
        storage = self.system_storage()
        self.check(principal, "write", AccessTarget(storage.id.compact()))
        favorites = json.loads(storage.settings_area.get("favorites", "[]"))
        if portal_id not in favorites:
            favorites.append(portal_id)
        storage.set_setting("favorites", json.dumps(favorites), quiet=True)
        return favorites

    def history(self) -> list[str]:
        return json.loads(self.system_storage().settings_area.get("history", "[]"))

    def favorites(self) -> list[str]:
        return json.loads(self.system_storage().settings_area.get("favorites", "[]"))

    def export_portal_op(self, principal: Principal, portal_id: str) -> bytes:
        portal = self.catalog.get(portal_id)
        self.require_owner(principal)
        record = portal
        if portal.target.target.domain_id == self.id and not portal.target.remote:
            # fill the route so the record works from anywhere
            if self.listen_address:
                record = Portal(
                    sign=portal.sign,
                    target=PortalTarget(portal.target.kind, portal.target.target,
                                        f"tcp:{self.listen_address}"),
                    parameters=portal.parameters,
                    comm_agent={"protocol": "ndjson/tcp", "address": self.listen_address},
                    context_id=portal.context_id,
                )
        return export_portal(record, self.keys)

    def import_portal_op(self, principal: Principal, record: bytes,
                         partition_id: str | None = None,
                         expect_from: str | None = None) -> Portal:
        self.require_owner(principal)
        portal = import_portal(record, self.catalog, self.keys, expect_from=expect_from)
        if partition_id is not None:
            partition = self.partitions.get(partition_id)
            if partition is None:
                raise not_found("partition")
            partition.site_portals.append(portal.sign.id)
        self.save_structure()
        return portal

    # --------------------------------------------------------- structure ops

    def mount_partition(self, principal: Principal, kind: str, source: str) -> Partition:
        self.require_owner(principal)
        for partition in self.partitions.values():
            if partition.source == source and partition.mounted:
                raise UniError(ALREADY_MOUNTED, f"{source!r} is already mounted")
        if kind == "cloud":
            if self.dialer is None or not self.dialer(source):
                raise UniError(SOURCE_UNREACHABLE, f"cloud endpoint {source!r} failed handshake")
            mount = MountKind.CLOUD_REMOTE
        else:
            mount = MountKind.MOUNTED_DEVICE
        pid = self.ids.derived(f"mount:{source}")
        existing = self.partitions.get(pid.compact())
        if existing is not None:
            existing.mounted = True
            self.save_structure()
            return existing
        partition = Partition(id=pid, name=source, mount=mount, source=source)
        self.registry.register(
            Sign(id=pid, name=source, ctype=ConceptualType.PORTAL), "partition"
        )
        self.partitions[pid.compact()] = partition
        self.partition_order.append(pid.compact())
        self.save_structure()
        return partition

    def unmount_partition(self, principal: Principal, source: str) -> Partition:
        self.require_owner(principal)
        for partition in self.partitions.values():
            if partition.source == source and partition.mounted:
                partition.mounted = False
                self.save_structure()
                return partition
        raise not_found("mounted partition")

    def mounted_partitions(self) -> list[Partition]:
        return [self.partitions[pid] for pid in self.partition_order
                if self.partitions[pid].mounted]

    def install_site(self, principal: Principal, partition_id: str | None,
                     template: str | dict) -> Site:
        self.require_owner(principal)
        if partition_id is None:
            partition = self.partitions[self.partition_order[0]]
        else:
            partition = self.partitions.get(partition_id)
            if partition is None or not partition.mounted:
                raise not_found("partition")
        tpl: SiteTemplate = (
            template_from_json(template) if isinstance(template, dict) else get_template(template)
        )
        if self.config.strict_lint:
            lint = self.lint_template(tpl)
            if not lint.ok:
                first = lint.violations[0]
                raise UniError(
                    INVALID_TEMPLATE,
                    f"strict lint: {first.path} breaks {first.rule}"
                    f" ({first.observed} > {first.limit})",
                )
        storage = self._new_storage()
        workplaces = self._mandatory_workplaces()
        for wp_spec in tpl.workplaces:
            bars = []
            for bar in wp_spec.toolbars:
                bars.append(self._toolbar(bar.name, [
                    self._tool(t.command_key, t.name, t.purpose, t.group, agent=t.agent)
                    for t in bar.tools
                ]))
            workplaces.append(self._workplace(wp_spec.name, bars, wp_spec.scheme))
        site = Site(
            id=self.ids.new(),
            name=tpl.name if tpl.name != "empty" else f"Site {len(self.sites)}",
            workplaces=workplaces,
            storage_ref=storage.id,
            kind=SiteKind.APPLICATION,
        )
        self.registry.register(
            Sign(id=site.id, name=site.name, ctype=ConceptualType.PORTAL), "site"
        )
        storage.owner_site = site.id
        self.sites[site.id.compact()] = site
        self.site_order.append(site.id.compact())
        self._register_site_portals(site, partition)
        self.save_structure()
        return site

    # ----------------------------------------------------------- search/map

    def visible_sites(self, principal: Principal) -> list[Site]:
        sites = []
        for sid in self.site_order:
            site = self.sites[sid]
            if principal.kind == "Owner" and principal.domain_id == self.id:
                sites.append(site)
                continue
            storage = self.storages[site.storage_ref.compact()]
            decision = self.policy.check(
                principal, "read", AccessTarget(storage.id.compact())
            )
            if decision.allow:
                sites.append(site)
        return sites

    def system_search(self, principal: Principal, query: str,
                      scope: str | None = None, tags: set[str] | None = None) -> list[dict]:
        """Search sites, portals and data objects by name/tag, optionally
        narrowed to one partition (by name) or one storage zone."""
        results: list[dict] = []
        needle = query.lower()
        scope_partition: Partition | None = None
        scope_zone: str | None = None
        if scope:
            for partition in self.mounted_partitions():
                if partition.name == scope or partition.id.compact() == scope:
                    scope_partition = partition
                    break
            if scope_partition is None:
                for storage in self.storages.values():
                    if scope in storage.zones:
                        scope_zone = scope
                        break
                if scope_zone is None:
                    raise not_found("search scope")

        allowed_sites = {s.id.compact() for s in self.visible_sites(principal)}
        site_ids: list[str] = []
        if scope_partition is not None:
            for portal_sign in scope_partition.site_portals:
                portal = self.catalog.portals.get(portal_sign.compact())
                if portal is not None and portal.target.kind == "Site":
                    site_ids.append(portal.target.target.compact())
        else:
            site_ids = list(self.site_order)

        if scope_zone is None:
            for sid in site_ids:
                site = self.sites.get(sid)
                if site is None or sid not in allowed_sites:
                    continue
                if not needle or needle in site.name.lower():
                    portal = self.catalog.find_by_target(site.id)
                    results.append({
                        "kind": "site", "name": site.name, "sign": sid,
                        "portal": portal.sign.id.compact() if portal else None,
                    })
            is_owner = principal.kind == "Owner" and principal.domain_id == self.id
            if scope_partition is None and is_owner:
                # the portal catalog is owner metadata, never shown to guests
                for portal_id, portal in self.catalog.portals.items():
                    if portal.target.kind in ("Site", "Workplace"):
                        continue
                    hit = (not needle and not tags) or (needle and needle in portal.sign.name.lower()) \
                        or (tags and tags & portal.sign.tags)
                    if hit:
                        results.append({
                            "kind": "portal", "name": portal.sign.name,
                            "sign": portal_id, "portal": portal_id,
                        })

        for sid in site_ids:
            site = self.sites.get(sid)
            if site is None or sid not in allowed_sites:
                continue
            storage = self.storages[site.storage_ref.compact()]
            if scope_zone is not None and scope_zone not in storage.zones:
                continue
            decision = self.policy.check(
                principal, "read",
                AccessTarget(storage.id.compact(),
                             storage.zone_chain(scope_zone) if scope_zone else ()),
            )
            if not decision.allow:
                continue
            for obj in storage.search(query, scope_zone, tags):
                results.append({
                    "kind": "object", "name": obj.sign.name,
                    "sign": obj.sign.id.compact(), "portal": None,
                    "zone": obj.zone,
                })
        return results

    def build_map(self, principal: Principal) -> dict:
        """Environment map: the portal hyper-network with lint annotations."""
        sites = self.visible_sites(principal)
        if principal.kind != "Owner" or principal.domain_id != self.id:
            if not sites:
                raise denied("no visible sites")
        visible_ids = {s.id.compact() for s in sites}

        def site_node(site: Site, depth: int) -> dict:
            return {
                "kind": "site", "name": site.name, "sign": site.id.compact(),
                "depth": depth, "violations": [],
                "children": [
                    {"kind": "workplace", "name": wp.name, "sign": wp.id.compact(),
                     "depth": depth + 1, "violations": [], "children": []}
                    for wp in site.workplaces
                ],
            }

        partitions = []
        for partition in self.mounted_partitions():
            children = []
            for portal_sign in partition.site_portals:
                portal = self.catalog.portals.get(portal_sign.compact())
                if portal is None:
                    continue
                if portal.target.kind == "Site":
                    compact = portal.target.target.compact()
                    if compact in visible_ids:
                        children.append(site_node(self.sites[compact], 2))
                    elif portal.target.remote:
                        children.append({
                            "kind": "site", "name": portal.sign.name,
                            "sign": compact, "depth": 2, "violations": [],
                            "endpoint": portal.target.endpoint, "children": [],
                        })
            partitions.append({
                "kind": "partition", "name": partition.name,
                "sign": partition.id.compact(), "depth": 1,
                "violations": [], "children": children,
            })
        root = {
            "kind": "domain", "name": "Personal domain",
            "sign": self.sign.id.compact(), "depth": 0,
            "violations": [], "children": partitions,
        }
        report = self.lint_map(root)
        by_path: dict[str, list] = {}
        for violation in report.violations:
            by_path.setdefault(violation.path, []).append(list(violation.row()))

        def attach(node: dict, path: str) -> None:
            if path in by_path:
                node["violations"] = by_path[path]
            for child in node["children"]:
                attach(child, f"{path}/{child['name']}")

        attach(root, root["name"])
        return root

    def lint_map(self, root: dict) -> ValidationReport:
        from .lint import node_from_map
        return validate_complexity(node_from_map(root), self.config.limits)

    def lint_template(self, tpl: SiteTemplate) -> ValidationReport:
        root = LintNode(
            name=tpl.name, kind="workplaces",
            children=[
                LintNode(
                    name=wp.name, kind="item",
                    children=[
                        LintNode(
                            name=bar.name, kind="toolbar",
                            children=[LintNode(name=t.name, kind="tool")
                                      for t in bar.tools],
                        )
                        for bar in wp.toolbars
                    ],
                )
                for wp in tpl.workplaces
            ],
        )
        return validate_complexity(root, self.config.limits)

    # --------------------------------------------------------------- grants

    def grant_op(self, principal: Principal, subject: Principal, storage_id: str,
                 zone_id: str | None, rights: set[Right],
                 expiry: float | None = None) -> dict:
        if storage_id not in self.storages:
            raise not_found("storage")
        grant = self.policy.issue(
            principal, self.ids.new().local_id[:12], subject, storage_id, zone_id,
            rights, expiry,
        )
        self.journal.append("", "access_audit", {"action": "grant", **grant.to_dict()})
        self._save_policy()
        return grant.to_dict()

    def revoke_op(self, principal: Principal, grant_id: str) -> dict:
        grant = self.policy.revoke(principal, grant_id)
        self.journal.append("", "access_audit", {"action": "revoke", "grant_id": grant_id})
        self._save_policy()
        return grant.to_dict()

    # -------------------------------------------------------------- persist

    def _atomic_write(self, path: Path, data: str) -> None:
        tmp = path.with_suffix(path.suffix + ".tmp")
        tmp.write_text(data, encoding="utf-8")
        with open(tmp, "rb") as fh:
            os.fsync(fh.fileno())
        tmp.replace(path)

    def _save_secret(self) -> None:
        if self.config.root is None:
            return
        data = {
            "owner_secret": self.owner_secret,
            "signing_key": self.keys.private_raw().hex(),
            "trusted": {d: raw.hex() for d, raw in self.keys.known.items()},
        }
        path = self.config.root / "secret.json"
        self._atomic_write(path, canonical_json(data))
        os.chmod(path, 0o600)

    def _save_policy(self) -> None:
        if self.config.root is None:
            return
        self._atomic_write(self.config.root / "policy.json", canonical_json(self.policy.to_dict()))

    def save_structure(self) -> None:
        if self.config.root is None:
            return
        self._atomic_write(self.config.root / "domain.json", canonical_json(self.to_dict()))

    def to_dict(self) -> dict:
        def sign_dict(sign: Sign) -> dict:
            return {
                "id": sign.id.compact(), "name": sign.name, "ctype": sign.ctype.value,
                "properties": sign.properties, "tags": sorted(sign.tags),
                "agent": sign.agent_ref,
            }

        return {
            "domain_id": self.id,
            "ids_burned": self.ids.count,
            "clock_ticks": self.clock.ticks,
            "deterministic": self.clock.deterministic,
            "sign": sign_dict(self.sign),
            "owner": {
                "sign": sign_dict(self.owner_card.sign),
                "endpoints": self.owner_card.contact_endpoints,
                "version": self.owner_card.version,
            },
            "system_site": self.system_site_id,
            "partitions": [
                {
                    "id": p.id.compact(), "name": p.name, "mount": p.mount.value,
                    "source": p.source, "mounted": p.mounted,
                    "site_portals": [s.compact() for s in p.site_portals],
                }
                for pid in self.partition_order
                for p in [self.partitions[pid]]
            ],
            "sites": [
                {
                    "id": site.id.compact(), "name": site.name, "kind": site.kind.value,
                    "storage": site.storage_ref.compact(),
                    "workplaces": [
                        {
                            "id": wp.id.compact(), "name": wp.name,
                            "scheme": wp.scheme.value,
                            "desktop": wp.desktop.id.compact(),
                            "toolbars": [
                                {
                                    "id": bar.id.compact(), "name": bar.name,
                                    "tools": [
                                        {
                                            "id": t.sign.id.compact(),
                                            "name": t.sign.name,
                                            "command_key": t.command_key,
                                            "group": t.group,
                                            "purpose": t.sign.properties.get("purpose", ""),
                                            "agent": t.sign.agent_ref,
                                        }
                                        for t in bar.tools
                                    ],
                                }
                                for bar in wp.toolbars
                            ],
                        }
                        for wp in site.workplaces
                    ],
                }
                for sid in self.site_order
                for site in [self.sites[sid]]
            ],
            "portals": [
                {
                    "id": pid, "name": portal.sign.name,
                    "tags": sorted(portal.sign.tags),
                    "target": portal.target.to_dict(),
                    "params": portal.parameters,
                    "route": portal.comm_agent,
                    "context": portal.context_id,
                    "agent": portal.software_agent_ref,
                    "data_sites": portal.data_site_refs,
                    "spawn_task": portal.spawn_task,
                    "hint": portal.interface_agent_hint,
                }
                for pid, portal in self.catalog.portals.items()
                if portal.target.kind != "Task"
            ],
        }

    def _load(self) -> None:
        root = self.config.root
        secret = json.loads((root / "secret.json").read_text(encoding="utf-8"))
        self.owner_secret = secret["owner_secret"]
        self.keys = DomainKeys(bytes.fromhex(secret["signing_key"]))
        for domain_id, raw in secret.get("trusted", {}).items():
            self.keys.trust(domain_id, bytes.fromhex(raw))

        data = json.loads((root / "domain.json").read_text(encoding="utf-8"))
        self.id = data["domain_id"]
        self.clock.deterministic = data.get("deterministic", False)
        self.clock.ticks = data.get("clock_ticks", 0)
        self.ids = IdFactory(self.id, self.config.seed)
        if self.config.seed is not None:
            for _ in range(data.get("ids_burned", 0)):
                self.ids.new()  # skip ids already handed out by this seed
        self.catalog = PortalCatalog(self.ids, self.registry)

        def load_sign(raw_sign: dict, entity_kind: str) -> Sign:
            sign = Sign(
                id=SignId.parse(raw_sign["id"]), name=raw_sign["name"],
                ctype=ConceptualType(raw_sign["ctype"]),
                properties=dict(raw_sign.get("properties", {})),
                tags=set(raw_sign.get("tags", [])),
                agent_ref=raw_sign.get("agent"),
            )
            return self.registry.register(sign, entity_kind)

        self.sign = load_sign(data["sign"], "domain")
        owner_raw = data["owner"]
        self.owner_card = PersonCard(
            sign=load_sign(owner_raw["sign"], "person"),
            contact_endpoints=[tuple(e) for e in owner_raw.get("endpoints", [])],
            version=owner_raw.get("version", 1),
        )
        self.system_site_id = data["system_site"]

        for raw in data["partitions"]:
            partition = Partition(
                id=SignId.parse(raw["id"]), name=raw["name"],
                mount=MountKind(raw["mount"]), source=raw.get("source", ""),
                mounted=raw.get("mounted", True),
                site_portals=[SignId.parse(s) for s in raw.get("site_portals", [])],
            )
            self.registry.register(
                Sign(id=partition.id, name=partition.name, ctype=ConceptualType.PORTAL),
                "partition",
            )
            self.partitions[raw["id"]] = partition
            self.partition_order.append(raw["id"])

        for raw in data["sites"]:
            workplaces = []
            for wp_raw in raw["workplaces"]:
                toolbars = []
                for bar_raw in wp_raw["toolbars"]:
                    tools = []
                    for t_raw in bar_raw["tools"]:
                        sign = self.registry.register(
                            Sign(
                                id=SignId.parse(t_raw["id"]), name=t_raw["name"],
                                ctype=ConceptualType.TOOL,
                                properties={"purpose": t_raw.get("purpose", "")},
                                agent_ref=t_raw.get("agent"),
                            ),
                            "tool",
                        )
                        tools.append(Tool(sign=sign, command_key=t_raw["command_key"],
                                          group=t_raw.get("group", "")))
                    toolbars.append(Toolbar(id=SignId.parse(bar_raw["id"]),
                                            name=bar_raw["name"], tools=tools))
                wp = Workplace(
                    id=SignId.parse(wp_raw["id"]), name=wp_raw["name"],
                    desktop=Desktop(id=SignId.parse(wp_raw["desktop"])),
                    toolbars=toolbars, scheme=Scheme(wp_raw.get("scheme", "Technological")),
                )
                self.registry.register(
                    Sign(id=wp.id, name=wp.name, ctype=ConceptualType.PORTAL), "workplace"
                )
                workplaces.append(wp)
            site = Site(
                id=SignId.parse(raw["id"]), name=raw["name"], workplaces=workplaces,
                storage_ref=SignId.parse(raw["storage"]), kind=SiteKind(raw["kind"]),
            )
            self.registry.register(
                Sign(id=site.id, name=site.name, ctype=ConceptualType.PORTAL), "site"
            )
            self.sites[raw["id"]] = site
            self.site_order.append(raw["id"])

        for raw in data["sites"]:
            sid = SignId.parse(raw["storage"])
            storage = Storage(
                storage_id=sid,
                owner_site=SignId.parse(raw["id"]),
                ids=self.ids,
                registry=self.registry,
                root=root / "storages" / sid.local_id,
                max_container_depth=self.config.max_container_depth,
                clock=self.clock.now,
            )
            storage.recover()
            self.storages[raw["storage"]] = storage

        for raw in data.get("portals", []):
            self.catalog.create(
                target=PortalTarget.from_dict(raw["target"]),
                name=raw["name"], tags=set(raw.get("tags", [])),
                context_id=raw.get("context", ""),
                parameters=dict(raw.get("params", {})),
                comm_agent=raw.get("route"),
                software_agent_ref=raw.get("agent"),
                data_site_refs=list(raw.get("data_sites", [])),
                spawn_task=raw.get("spawn_task", False),
                _id=SignId.parse(raw["id"]),
            )

        policy_path = root / "policy.json"
        if policy_path.exists():
            self.policy = Policy.from_dict(json.loads(policy_path.read_text(encoding="utf-8")))
        else:
            self.policy = Policy(domain_id=self.id)

        self.journal = TaskJournal.load(root / "journal.ndjson", self.clock.now)
        replayed = TaskEngine.replay(self.journal.entries)
        self.tasks = TaskEngine(self.journal)
        self.tasks.tasks = replayed.tasks
        for task in self.tasks.tasks.values():
            if task.open:
                created = [e for e in self.journal.entries
                           if e.task == task.id and e.event in ("created", "spawned")]
                label = (created[0].payload.get("name") or f"Task {task.id[-6:]}") if created \
                    else f"Task {task.id[-6:]}"
                self.registry.register(
                    Sign(id=SignId.parse(task.id), name=label, ctype=ConceptualType.PORTAL),
                    "task",
                )
                portal_id = created[0].payload.get("portal") if created else task.portal
                if portal_id and portal_id not in self.catalog.portals:
                    self.catalog.create(
                        target=PortalTarget(kind="Task", target=SignId.parse(task.id)),
                        name=label,
                        _id=SignId.parse(portal_id),
                    )

        self.ids.skip_used(self.registry.exists)

    # ---------------------------------------------------------------- state

    def edit_leases_open(self) -> bool:
        for storage in self.storages.values():
            for lease in storage.leases.values():
                if not lease.closed and lease.mode == "Edit":
                    return True
        return False

    def flush_all(self) -> None:
        for storage in self.storages.values():
            storage.flush()
        self.save_structure()
        self._save_policy()

    def state_digest_dict(self) -> dict:
        return {
            "domain": self.id,
            "partitions": [
                [p.name, p.mount.value, p.mounted, len(p.site_portals)]
                for pid in self.partition_order
                for p in [self.partitions[pid]]
            ],
            "sites": [
                [self.sites[sid].name, [wp.name for wp in self.sites[sid].workplaces]]
                for sid in self.site_order
            ],
            "portals": sorted(
                [pid, p.sign.name, p.target.kind, p.target.target.compact()]
                for pid, p in self.catalog.portals.items()
            ),
            "tasks": self.tasks.state_digest_dict(),
            "storages": {
                sid: self.storages[sid].state_digest_dict() for sid in sorted(self.storages)
            },
            "grants": sorted(
                canonical_json(g.to_dict()) for g in self.policy.grants.values()
            ),
        }

    def state_digest(self) -> str:
        import hashlib
        return hashlib.sha256(
            canonical_json(self.state_digest_dict()).encode("utf-8")
        ).hexdigest()

    def close(self) -> None:
        self.journal.close()
        for storage in self.storages.values():
            storage.log.close()
