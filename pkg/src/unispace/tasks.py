"""Task management: the journaled state machine behind the five-step
browser-like work cycle (create, search, go, work, complete) and the
subtask chains that pass parameters down and results back up.

The journal is the source of truth: every transition appends exactly one
entry, appends are fsynced before acknowledgement, and replaying the
journal rebuilds the full task set. Logical order is the entry sequence
number; wall-clock stamps are advisory.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Callable, Iterable

from .errors import UniError, NO_PARENT, OPEN_CHILDREN, WRONG_STATE


class TaskState(str, Enum):
    SEARCHING = "Searching"
    BOUND = "Bound"
    ACTIVE = "Active"
    SUSPENDED = "Suspended"
    COMPLETED = "Completed"
    CANCELLED = "Cancelled"


TERMINAL = {TaskState.COMPLETED, TaskState.CANCELLED}

ALLOWED_TRANSITIONS: set[tuple[TaskState, TaskState]] = {
    (TaskState.SEARCHING, TaskState.BOUND),
    (TaskState.SEARCHING, TaskState.CANCELLED),
    (TaskState.BOUND, TaskState.ACTIVE),
    (TaskState.ACTIVE, TaskState.SUSPENDED),
    (TaskState.SUSPENDED, TaskState.ACTIVE),
    (TaskState.ACTIVE, TaskState.COMPLETED),
    (TaskState.ACTIVE, TaskState.CANCELLED),
    (TaskState.SUSPENDED, TaskState.COMPLETED),
    (TaskState.SUSPENDED, TaskState.CANCELLED),
}

OPEN_STATES = {TaskState.SEARCHING, TaskState.BOUND, TaskState.ACTIVE, TaskState.SUSPENDED}


@dataclass
class Task:
    id: str
    portal: str
    state: TaskState = TaskState.SEARCHING
    site: dict | None = None  # portal-target dict once bound
    parent: str | None = None
    params_in: dict[str, str] = field(default_factory=dict)
    results_out: dict[str, str] | None = None
    context_id: str = ""
    created_at: float = 0.0
    closed_at: float | None = None
    saved_space: dict | None = None  # last entered space, resumed on switch
    subtask_results: dict[str, dict] = field(default_factory=dict)

    @property
    def open(self) -> bool:
        return self.state in OPEN_STATES


@dataclass
class JournalEntry:
    seq: int
    task: str
    event: str
    payload: dict
    at: float

    def to_dict(self) -> dict:
        return {"seq": self.seq, "task": self.task, "event": self.event,
                "payload": self.payload, "at": self.at}

    @classmethod
    def from_dict(cls, data: dict) -> "JournalEntry":
        return cls(seq=data["seq"], task=data["task"], event=data["event"],
                   payload=data.get("payload", {}), at=data.get("at", 0.0))


class TaskJournal:
    """Append-only per-domain journal (NDJSON, fsync on append)."""

    def __init__(self, path: Path | None, clock: Callable[[], float] | None = None):
        self.path = path
        self.entries: list[JournalEntry] = []
        self.clock = clock or (lambda: 0.0)
        self._fh = None
        if path is not None:
            path.parent.mkdir(parents=True, exist_ok=True)
            self._fh = open(path, "ab")

    def append(self, task: str, event: str, payload: dict | None = None) -> JournalEntry:
        entry = JournalEntry(
            seq=len(self.entries) + 1,
            task=task,
            event=event,
            payload=payload or {},
            at=self.clock(),
        )
        self.entries.append(entry)
        if self._fh is not None:
            line = json.dumps(entry.to_dict(), sort_keys=True, separators=(",", ":")) + "\n"
            self._fh.write(line.encode("utf-8"))
            self._fh.flush()
            os.fsync(self._fh.fileno())
        return entry

    def query(
        self,
        task: str | None = None,
        event: str | None = None,
        since: float | None = None,
        until: float | None = None,
    ) -> list[JournalEntry]:
        out = []
        for entry in self.entries:
            if task is not None and entry.task != task:
                continue
            if event is not None and entry.event != event:
                continue
            if since is not None and entry.at < since:
                continue
            if until is not None and entry.at > until:
                continue
            out.append(entry)
        return out

    def close(self) -> None:
        if self._fh is not None:
            self._fh.close()
            self._fh = None

    @classmethod
    def load(cls, path: Path, clock: Callable[[], float] | None = None) -> "TaskJournal":
        journal = cls(None, clock)
        if path.exists():
            with open(path, "rb") as fh:
                for raw in fh:
                    raw = raw.strip()
                    if not raw:
                        continue
                    try:
                        journal.entries.append(JournalEntry.from_dict(json.loads(raw)))
                    except (ValueError, KeyError):
                        break  # torn tail from a crash mid-append
        journal.path = path
        journal._fh = open(path, "ab")
        return journal


class TaskEngine:
    """Owns the task set of one domain and writes the journal."""

    def __init__(self, journal: TaskJournal):
        self.journal = journal
        self.tasks: dict[str, Task] = {}

    # ------------------------------------------------------------ helpers

    def task(self, task_id: str) -> Task:
        t = self.tasks.get(task_id)
        if t is None:
            raise UniError(WRONG_STATE, f"unknown task {task_id}")
        return t

    def open_tasks(self) -> list[Task]:
        return [t for t in self.tasks.values() if t.open]

    def children(self, task_id: str) -> list[Task]:
        return [t for t in self.tasks.values() if t.parent == task_id]

    def _transition(self, task: Task, to: TaskState) -> None:
        if (task.state, to) not in ALLOWED_TRANSITIONS:
            raise UniError(WRONG_STATE, f"{task.state.value} -> {to.value} is not allowed")
        task.state = to

    # --------------------------------------------------------- operations

    def create(self, task_id: str, portal_id: str, suspended: str | None,
               name: str = "") -> Task:
        if task_id in self.tasks:
            raise UniError(WRONG_STATE, f"task id {task_id} already exists")
        task = Task(id=task_id, portal=portal_id, created_at=self.journal.clock())
        self.tasks[task_id] = task
        if suspended is not None:
            self._transition(self.task(suspended), TaskState.SUSPENDED)
        self.journal.append(task_id, "created", {"portal": portal_id, "suspended": suspended,
                                                 "name": name})
        return task

    def cancel_creation(self, task_id: str, resumed: str | None = None) -> Task:
        task = self.task(task_id)
        if task.state is not TaskState.SEARCHING:
            raise UniError(WRONG_STATE, "only a task still searching can be cancelled this way")
        self._transition(task, TaskState.CANCELLED)
        task.closed_at = self.journal.clock()
        if resumed is not None:
            self._transition(self.task(resumed), TaskState.ACTIVE)
        self.journal.append(task_id, "cancelled", {"resumed": resumed})
        return task

    def bind(self, task_id: str, site_target: dict, context_id: str) -> Task:
        task = self.task(task_id)
        if task.state is not TaskState.SEARCHING:
            raise UniError(WRONG_STATE, "task is not searching for a site")
        self._transition(task, TaskState.BOUND)
        task.site = dict(site_target)
        task.context_id = context_id
        self._transition(task, TaskState.ACTIVE)
        task.saved_space = dict(site_target)
        self.journal.append(task_id, "bound", {"site": dict(site_target), "context": context_id})
        return task

    def switch(self, to_id: str, from_id: str | None, from_space: dict | None) -> Task:
        """Move the session's focus. The departing active task suspends;
        a suspended target resumes; a target still searching stays in
        Searching (the user returns to its search)."""
        target = self.task(to_id)
        if target.state not in (TaskState.ACTIVE, TaskState.SUSPENDED,
                                TaskState.SEARCHING):
            raise UniError(WRONG_STATE, "cannot switch to a closed task")
        if from_id is not None and from_id != to_id:
            source = self.tasks.get(from_id)
            if source is not None and source.state is TaskState.ACTIVE:
                self._transition(source, TaskState.SUSPENDED)
                if from_space is not None:
                    source.saved_space = dict(from_space)
        if target.state is TaskState.SUSPENDED:
            self._transition(target, TaskState.ACTIVE)
        self.journal.append(to_id, "switched", {"from": from_id, "to": to_id,
                                                "from_space": from_space})
        return target

    def spawn(
        self,
        parent_id: str,
        child_id: str,
        portal_id: str,
        params: dict[str, str],
        context_id: str,
        name: str = "",
    ) -> Task:
        parent = self.task(parent_id)
        if child_id in self.tasks:
            raise UniError(WRONG_STATE, f"task id {child_id} already exists")
        if parent.state is not TaskState.ACTIVE:
            raise UniError(WRONG_STATE, "only the active task can spawn a subtask")
        if parent.site is None:
            raise UniError(WRONG_STATE, "parent is not bound to a site")
        child = Task(
            id=child_id,
            portal=portal_id,
            parent=parent_id,
            params_in=dict(params),
            context_id=context_id,
            created_at=self.journal.clock(),
        )
        self.tasks[child_id] = child
        self._transition(parent, TaskState.SUSPENDED)
        # the child works on the parent's site, in its own context
        self._transition(child, TaskState.BOUND)
        child.site = dict(parent.site)
        self._transition(child, TaskState.ACTIVE)
        child.saved_space = dict(parent.site)
        self.journal.append(
            child_id,
            "spawned",
            {"parent": parent_id, "portal": portal_id, "params": dict(params),
             "context": context_id, "site": dict(parent.site), "name": name},
        )
        return child

    def return_from_subtask(
        self, child_id: str, results: dict[str, str] | None, save: bool
    ) -> Task:
        child = self.task(child_id)
        if child.state is not TaskState.ACTIVE:
            raise UniError(WRONG_STATE, "only the active subtask can return")
        if child.parent is None:
            raise UniError(NO_PARENT, "task has no calling task")
        parent = self.task(child.parent)
        if save:
            self._transition(child, TaskState.COMPLETED)
            child.results_out = dict(results or {})
            parent.subtask_results[child_id] = dict(results or {})
        else:
            self._transition(child, TaskState.CANCELLED)
        child.closed_at = self.journal.clock()
        self._transition(parent, TaskState.ACTIVE)
        self.journal.append(
            child_id,
            "returned",
            {"parent": parent.id, "save": save, "results": dict(results or {})},
        )
        return parent

    def complete(self, task_id: str, results: dict[str, str] | None = None) -> Task:
        task = self.task(task_id)
        if task.state not in (TaskState.ACTIVE, TaskState.SUSPENDED):
            raise UniError(WRONG_STATE, "task is not open for completion")
        if any(child.open for child in self.children(task_id)):
            raise UniError(OPEN_CHILDREN, "subtasks are still open")
        self._transition(task, TaskState.COMPLETED)
        task.results_out = dict(results) if results else None
        task.closed_at = self.journal.clock()
        self.journal.append(task_id, "completed", {"results": results})
        return task

    def cancel(self, task_id: str) -> Task:
        task = self.task(task_id)
        if task.state in TERMINAL:
            raise UniError(WRONG_STATE, "task already closed")
        if task.state is TaskState.SEARCHING:
            return self.cancel_creation(task_id)
        if any(child.open for child in self.children(task_id)):
            raise UniError(OPEN_CHILDREN, "subtasks are still open")
        self._transition(task, TaskState.CANCELLED)
        task.closed_at = self.journal.clock()
        self.journal.append(task_id, "cancelled", {"resumed": None})
        return task

    def note_space(self, task_id: str | None, space: dict, portal: str | None) -> None:
        if task_id is not None and task_id in self.tasks:
            self.tasks[task_id].saved_space = dict(space)
        self.journal.append(task_id or "", "space_entered",
                            {"space": dict(space), "portal": portal})

    # ------------------------------------------------------------- replay

    @classmethod
    def replay(cls, entries: Iterable[JournalEntry]) -> "TaskEngine":
        """Rebuild the task set from journal entries alone."""
        engine = cls(TaskJournal(None))
        for entry in entries:
            payload = entry.payload
            event = entry.event
            tasks = engine.tasks
            if event == "created":
                task = Task(id=entry.task, portal=payload.get("portal", ""),
                            created_at=entry.at)
                tasks[entry.task] = task
                prev = payload.get("suspended")
                if prev and prev in tasks:
                    tasks[prev].state = TaskState.SUSPENDED
            elif event == "bound":
                task = tasks[entry.task]
                task.state = TaskState.ACTIVE
                task.site = dict(payload["site"])
                task.context_id = payload.get("context", "")
                task.saved_space = dict(payload["site"])
            elif event == "switched":
                prev = payload.get("from")
                if prev and prev in tasks and tasks[prev].state is TaskState.ACTIVE:
                    tasks[prev].state = TaskState.SUSPENDED
                    if payload.get("from_space"):
                        tasks[prev].saved_space = dict(payload["from_space"])
                if tasks[payload["to"]].state is TaskState.SUSPENDED:
                    tasks[payload["to"]].state = TaskState.ACTIVE
            elif event == "spawned":
                parent = tasks[payload["parent"]]
                parent.state = TaskState.SUSPENDED
                child = Task(
                    id=entry.task,
                    portal=payload.get("portal", ""),
                    parent=payload["parent"],
                    params_in=dict(payload.get("params", {})),
                    context_id=payload.get("context", ""),
                    state=TaskState.ACTIVE,
                    site=dict(payload["site"]),
                    saved_space=dict(payload["site"]),
                    created_at=entry.at,
                )
                tasks[entry.task] = child
            elif event == "returned":
                child = tasks[entry.task]
                parent = tasks[payload["parent"]]
                if payload["save"]:
                    child.state = TaskState.COMPLETED
                    child.results_out = dict(payload.get("results", {}))
                    parent.subtask_results[entry.task] = dict(payload.get("results", {}))
                else:
                    child.state = TaskState.CANCELLED
                child.closed_at = entry.at
                parent.state = TaskState.ACTIVE
            elif event == "completed":
                task = tasks[entry.task]
                task.state = TaskState.COMPLETED
                task.results_out = dict(payload["results"]) if payload.get("results") else None
                task.closed_at = entry.at
            elif event == "cancelled":
                task = tasks[entry.task]
                task.state = TaskState.CANCELLED
                task.closed_at = entry.at
                resumed = payload.get("resumed")
                if resumed and resumed in tasks:
                    tasks[resumed].state = TaskState.ACTIVE
            elif event == "space_entered":
                if entry.task and entry.task in tasks:
                    tasks[entry.task].saved_space = dict(payload["space"])
            # access_audit and other non-task events carry no task state
        return engine

    def last_active_id(self) -> str | None:
        """Most recently active open task, per journal order."""
        active: str | None = None
        for entry in self.journal.entries:
            if entry.event in ("bound", "spawned"):
                active = entry.task
            elif entry.event == "switched":
                active = entry.payload["to"]
            elif entry.event == "created":
                active = None  # searching, nothing active yet
            elif entry.event == "returned":
                active = entry.payload["parent"]
            elif entry.event in ("completed", "cancelled"):
                if active == entry.task:
                    active = entry.payload.get("resumed")
        if active is not None:
            task = self.tasks.get(active)
            if task is not None and task.state in (TaskState.ACTIVE, TaskState.SUSPENDED):
                return active
        return None

    def state_digest_dict(self) -> dict:
        return {
            tid: {
                "state": t.state.value,
                "site": t.site,
                "parent": t.parent,
                "params": dict(t.params_in),
                "results": dict(t.results_out) if t.results_out else None,
                "context": t.context_id,
            }
            for tid, t in sorted(self.tasks.items())
        }
