"""Builds the render tree the server sends after every command.

Layout lives in an abstract 0-1000 coordinate space; clients scale.
Bands from top to bottom: base tool strip (always carries the exit
tool), the task tab row, workplace toolbars, then the desktop. Node ids
are assigned in walk order, so identical state renders identically.
"""

from __future__ import annotations

from .domain import Domain, Session
from .model import SYSTEM_TOOLS, Site, Workplace
from .protocol import RenderNode
from .tasks import TaskState

BAND_H = 60.0
WIDTH = 1000.0
HEIGHT = 1000.0


class _Ids:
    def __init__(self):
        self.n = 0

    def next(self) -> str:
        self.n += 1
        return f"n{self.n}"


def _row(nodes_parent: RenderNode, ids: _Ids, items: list[tuple], kind: str, y: float,
         h: float = BAND_H) -> None:
    count = max(1, len(items))
    cell = WIDTH / count
    for i, (label, sign, command, meta) in enumerate(items):
        nodes_parent.children.append(RenderNode(
            node_id=ids.next(), kind=kind,
            bounds=(i * cell, y, cell, h),
            label=label, sign=sign, command=command, meta=meta or {},
        ))


def build_render(domain: Domain, session: Session) -> dict:
    ids = _Ids()
    is_owner = (session.principal.kind == "Owner"
                and session.principal.domain_id == domain.id)
    frame = session.location.current
    space = frame.space
    site = domain.site_for_space(space)
    workplace: Workplace | None = None
    if space.kind == "Workplace":
        try:
            _, workplace = domain.site_of_workplace(space.target.compact())
        except Exception:
            workplace = None

    label = _space_label(domain, space, site, workplace)
    root = RenderNode(
        node_id=ids.next(), kind="space", bounds=(0.0, 0.0, WIDTH, HEIGHT),
        label=label, sign=space.target.compact(),
        meta={"space_kind": space.kind, "depth": session.location.depth},
    )

    y = 0.0
    # base strip: the hardware-key tools, exit included
    strip = RenderNode(node_id=ids.next(), kind="toolbar", bounds=(0.0, y, WIDTH, BAND_H),
                       label="base")
    root.children.append(strip)
    _row(strip, ids, [
        (name, None, key, None) for key, (name, _) in SYSTEM_TOOLS.items()
    ], "tool", y)
    y += BAND_H

    # task tabs: one per open task, like browser tabs; they are the
    # owner's work and stay invisible to visiting principals
    tabs = RenderNode(node_id=ids.next(), kind="desktop", bounds=(0.0, y, WIDTH, BAND_H),
                      label="tasks")
    root.children.append(tabs)
    open_tasks = (sorted(domain.tasks.open_tasks(), key=lambda t: t.created_at)
                  if is_owner else [])
    _row(tabs, ids, [
        (
            domain.catalog.portals[t.portal].sign.name
            if t.portal in domain.catalog.portals else t.id[-6:],
            t.id,
            None,
            {"state": t.state.value, "active": t.id == session.focus_task,
             "portal": t.portal},
        )
        for t in open_tasks
    ], "task_tab", y)
    y += BAND_H

    # workplace toolbars
    if workplace is not None:
        for bar in workplace.toolbars:
            bar_node = RenderNode(node_id=ids.next(), kind="toolbar",
                                  bounds=(0.0, y, WIDTH, BAND_H), label=bar.name,
                                  sign=bar.id.compact())
            root.children.append(bar_node)
            _row(bar_node, ids, [
                (t.sign.name, t.sign.id.compact(), t.command_key, None) for t in bar.tools
            ], "tool", y)
            y += BAND_H

    desktop = RenderNode(node_id=ids.next(), kind="desktop",
                         bounds=(0.0, y, WIDTH, HEIGHT - y), label="desktop")
    root.children.append(desktop)
    _fill_desktop(domain, session, ids, desktop, site, workplace, y, is_owner)
    return root.to_dict()


def _space_label(domain: Domain, space, site: Site | None, workplace) -> str:
    if workplace is not None and site is not None:
        return f"{site.name} / {workplace.name}"
    try:
        return domain.registry.get(space.target).sign.name
    except Exception:
        return space.kind


def _grid(parent: RenderNode, ids: _Ids, items: list[tuple], y0: float) -> None:
    if not items:
        return
    cols = 4
    cell_w = WIDTH / cols
    cell_h = 80.0
    max_h = parent.bounds[3]
    for i, (kind, label, sign, meta) in enumerate(items):
        row, col = divmod(i, cols)
        cy = y0 + row * cell_h
        if cy + cell_h > parent.bounds[1] + max_h:
            break
        parent.children.append(RenderNode(
            node_id=ids.next(), kind=kind,
            bounds=(col * cell_w, cy, cell_w, cell_h),
            label=label, sign=sign, meta=meta or {},
        ))


def _fill_desktop(domain: Domain, session: Session, ids: _Ids, desktop: RenderNode,
                  site: Site | None, workplace, y: float, is_owner: bool) -> None:
    space = session.location.current.space
    items: list[tuple] = []

    if workplace is not None and workplace.name == "TaskMgmt" and not is_owner:
        pass  # a guest gets an empty task desktop
    elif workplace is not None and workplace.name == "TaskMgmt":
        for task in sorted(domain.tasks.open_tasks(), key=lambda t: t.created_at):
            portal = domain.catalog.portals.get(task.portal)
            items.append((
                "portal",
                portal.sign.name if portal else task.id[-6:],
                task.portal,
                {"target_kind": "Task", "state": task.state.value},
            ))
    elif workplace is not None and workplace.name == "Search":
        for result in session.last_results:
            items.append((
                "portal" if result.get("portal") else "object",
                result["name"], result.get("portal") or result["sign"],
                {"result_kind": result["kind"]},
            ))
        if is_owner:
            favorites = domain.favorites()
            if favorites:
                items.append(("label", f"Favorites: {len(favorites)}", None,
                              {"portals": favorites}))
            history = domain.history()
            if history:
                items.append(("label", f"History: {len(history)}", None,
                              {"portals": history[:10]}))
    elif workplace is not None and workplace.name == "DataMgmt" and site is not None:
        storage = domain.storages[site.storage_ref.compact()]
        for sid in storage.section_order:
            zone = storage.zones[sid]
            items.append(("container", zone.name, sid,
                          {"zone_kind": "section",
                           "zones": len(zone.child_zones),
                           "objects": len(zone.child_objects)}))
        for entry in storage.trash:
            items.append(("label", f"trash:{entry.object_id[-6:]}", entry.object_id,
                          {"trash": True}))
    elif space.kind == "Site" and site is not None:
        for wp in site.workplaces:
            portal = domain.catalog.find_by_target(wp.id)
            items.append(("portal", wp.name,
                          portal.sign.id.compact() if portal else wp.id.compact(),
                          {"target_kind": "Workplace"}))
    elif space.kind in ("StorageSection", "Container"):
        storage = domain.storage_of_zone(space.target.compact())
        zone = storage.zones[space.target.compact()]
        for zid in zone.child_zones:
            child = storage.zones[zid]
            items.append(("container", child.name, zid, {"zone_kind": child.kind}))
        for oid in zone.child_objects:
            obj = storage.objects[oid]
            items.append(("object", obj.sign.name, oid,
                          {"parts": sorted(obj.parts)}))
    elif space.kind == "ObjectPart":
        storage = domain.storage_of_zone(space.target.compact())
        obj = storage.objects[space.target.compact()]
        for pn, part in sorted(obj.parts.items()):
            items.append(("object", pn, space.target.compact(),
                          {"media": part.media_type, "bytes": len(part.data)}))
    elif workplace is not None and site is not None:
        # specialist workplace: show open desktop handles of the site storage
        storage = domain.storages[site.storage_ref.compact()]
        for lease in storage.leases.values():
            if lease.closed:
                continue
            obj = storage.objects.get(lease.object_id)
            if obj is None:
                continue
            items.append(("object", obj.sign.name, lease.object_id,
                          {"lease": lease.lease_id, "mode": lease.mode,
                           "dirty": lease.dirty}))

    _grid(desktop, ids, items, y)
