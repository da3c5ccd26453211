from __future__ import annotations

import itertools
import random

import pytest

from unispace.errors import UniError
from unispace.tasks import (
    ALLOWED_TRANSITIONS,
    JournalEntry,
    Task,
    TaskEngine,
    TaskJournal,
    TaskState,
)

SITE = {"kind": "Site", "domain": "d", "id": "s1", "endpoint": "local"}


def engine() -> TaskEngine:
    return TaskEngine(TaskJournal(None))


def replay_oracle(entries: list[JournalEntry]) -> dict[str, str]:
    """Independent fold of journal events onto task states."""
    states: dict[str, str] = {}
    for e in entries:
        p = e.payload
        if e.event == "created":
            states[e.task] = "Searching"
            if p.get("suspended"):
                states[p["suspended"]] = "Suspended"
        elif e.event == "bound":
            states[e.task] = "Active"
        elif e.event == "switched":
            if p.get("from") and states.get(p["from"]) == "Active":
                states[p["from"]] = "Suspended"
            states[p["to"]] = "Active"
        elif e.event == "spawned":
            states[p["parent"]] = "Suspended"
            states[e.task] = "Active"
        elif e.event == "returned":
            states[e.task] = "Completed" if p["save"] else "Cancelled"
            states[p["parent"]] = "Active"
        elif e.event == "completed":
            states[e.task] = "Completed"
        elif e.event == "cancelled":
            states[e.task] = "Cancelled"
            if p.get("resumed"):
                states[p["resumed"]] = "Active"
    return states


def test_create_then_cancel_keeps_both_entries():
    eng = engine()
    task = eng.create("t1", "p1", None)
    assert task.state is TaskState.SEARCHING
    eng.cancel_creation("t1")
    assert [e.event for e in eng.journal.entries] == ["created", "cancelled"]
    assert not eng.open_tasks()


def test_cancel_guards():
    eng = engine()
    eng.create("t1", "p1", None)
    eng.bind("t1", SITE, "ctx")
    with pytest.raises(UniError) as err:
        eng.cancel_creation("t1")
    assert err.value.code == "WRONG_STATE"
    eng.create("t2", "p2", None)
    eng.cancel_creation("t2")
    with pytest.raises(UniError):
        eng.cancel_creation("t2")  # terminal states absorb


def test_bind_moves_to_active_with_site():
    eng = engine()
    eng.create("t1", "p1", None)
    task = eng.bind("t1", SITE, "ctx1")
    assert task.state is TaskState.ACTIVE
    assert task.site == SITE
    assert task.context_id == "ctx1"
    assert [e.event for e in eng.journal.entries] == ["created", "bound"]


def test_bind_failure_leaves_searching():
    eng = engine()
    eng.create("t1", "p1", None)
    eng.bind("t1", SITE, "c")
    with pytest.raises(UniError):
        eng.bind("t1", SITE, "c2")
    assert eng.task("t1").state is TaskState.ACTIVE


def test_two_tasks_same_site_distinct_contexts():
    eng = engine()
    eng.create("t1", "p1", None)
    eng.bind("t1", SITE, "ctx-a")
    eng.create("t2", "p2", "t1")
    eng.bind("t2", SITE, "ctx-b")
    t1, t2 = eng.task("t1"), eng.task("t2")
    assert t1.site == t2.site
    assert {t1.context_id, t2.context_id} == {"ctx-a", "ctx-b"}
    assert t1.open and t2.open


def test_switch_swaps_active_and_suspended():
    eng = engine()
    eng.create("a", "pa", None)
    eng.bind("a", SITE, "c1")
    eng.create("b", "pb", "a")
    eng.bind("b", SITE, "c2")
    assert eng.task("a").state is TaskState.SUSPENDED
    eng.switch("a", "b", {"kind": "Workplace", "domain": "d", "id": "w", "endpoint": "local"})
    assert eng.task("a").state is TaskState.ACTIVE
    assert eng.task("b").state is TaskState.SUSPENDED
    assert eng.task("b").saved_space["id"] == "w"


def test_switch_to_closed_task_rejected():
    eng = engine()
    eng.create("a", "pa", None)
    eng.bind("a", SITE, "c")
    eng.complete("a")
    with pytest.raises(UniError) as err:
        eng.switch("a", None, None)
    assert err.value.code == "WRONG_STATE"


def test_spawn_delivers_params_and_suspends_parent():
    eng = engine()
    eng.create("p", "pp", None)
    eng.bind("p", SITE, "c")
    child = eng.spawn("p", "c1", "pc", {"doc": "X"}, "cc")
    assert child.params_in == {"doc": "X"}
    assert child.site == SITE
    assert eng.task("p").state is TaskState.SUSPENDED
    assert child.state is TaskState.ACTIVE


def test_spawn_from_suspended_rejected():
    eng = engine()
    eng.create("p", "pp", None)
    eng.bind("p", SITE, "c")
    eng.spawn("p", "c1", "pc", {}, "cc")
    with pytest.raises(UniError) as err:
        eng.spawn("p", "c2", "pc2", {}, "cc2")
    assert err.value.code == "WRONG_STATE"


def test_chain_of_three_returns_reactivate_original():
    eng = engine()
    eng.create("root", "p0", None)
    eng.bind("root", SITE, "c")
    eng.spawn("root", "c1", "p1", {}, "x1")
    eng.spawn("c1", "c2", "p2", {}, "x2")
    eng.return_from_subtask("c2", {"r": "2"}, save=True)
    assert eng.task("c1").state is TaskState.ACTIVE
    eng.return_from_subtask("c1", None, save=False)
    assert eng.task("root").state is TaskState.ACTIVE
    assert eng.task("c1").state is TaskState.CANCELLED
    assert eng.task("c2").results_out == {"r": "2"}
    assert eng.task("c1").subtask_results["c2"] == {"r": "2"}


def test_return_without_save_drops_results():
    eng = engine()
    eng.create("p", "pp", None)
    eng.bind("p", SITE, "c")
    eng.spawn("p", "c1", "pc", {}, "cc")
    parent = eng.return_from_subtask("c1", {"x": "1"}, save=False)
    assert parent.subtask_results == {}
    assert eng.task("c1").results_out is None


def test_return_from_root_no_parent():
    eng = engine()
    eng.create("p", "pp", None)
    eng.bind("p", SITE, "c")
    with pytest.raises(UniError) as err:
        eng.return_from_subtask("p", None, save=True)
    assert err.value.code == "NO_PARENT"


def test_complete_with_open_children_rejected():
    eng = engine()
    eng.create("p", "pp", None)
    eng.bind("p", SITE, "c")
    eng.spawn("p", "c1", "pc", {}, "cc")
    eng.switch("p", "c1", None)
    with pytest.raises(UniError) as err:
        eng.complete("p")
    assert err.value.code == "OPEN_CHILDREN"


def test_journal_seq_strictly_increases():
    eng = engine()
    eng.create("a", "pa", None)
    eng.bind("a", SITE, "c")
    eng.complete("a")
    seqs = [e.seq for e in eng.journal.entries]
    assert seqs == sorted(set(seqs)) == [1, 2, 3]


def test_query_filters():
    eng = engine()
    for i in range(5):
        eng.create(f"t{i}", f"p{i}", None)
    assert len(eng.journal.query(event="created")) == 5
    assert len(eng.journal.query(task="t3")) == 1
    assert eng.journal.query(event="bound") == []


def test_empty_journal_query():
    assert engine().journal.query() == []


def test_replay_reconstructs_random_workload():
    rng = random.Random(1234)
    eng = engine()
    counter = itertools.count()
    for _ in range(200):
        open_tasks = eng.open_tasks()
        choice = rng.random()
        active_now = [t for t in open_tasks if t.state is TaskState.ACTIVE]
        try:
            if choice < 0.25 or not open_tasks:
                n = next(counter)
                # one-session discipline: creating suspends the active task
                eng.create(f"t{n}", f"p{n}", active_now[0].id if active_now else None)
            elif choice < 0.4:
                searching = [t for t in open_tasks if t.state is TaskState.SEARCHING]
                if searching and not active_now:
                    eng.bind(rng.choice(searching).id, SITE, f"c{next(counter)}")
            elif choice < 0.5:
                searching = [t for t in open_tasks if t.state is TaskState.SEARCHING]
                if searching:
                    eng.cancel_creation(rng.choice(searching).id)
            elif choice < 0.65:
                eligible = [t for t in open_tasks
                            if t.state in (TaskState.ACTIVE, TaskState.SUSPENDED)]
                if eligible:
                    active = [t for t in open_tasks if t.state is TaskState.ACTIVE]
                    eng.switch(rng.choice(eligible).id,
                               active[0].id if active else None, None)
            elif choice < 0.75:
                active = [t for t in open_tasks if t.state is TaskState.ACTIVE]
                if active:
                    n = next(counter)
                    eng.spawn(active[0].id, f"s{n}", f"ps{n}",
                              {"k": str(n)}, f"cx{n}")
            elif choice < 0.85:
                active = [t for t in open_tasks
                          if t.state is TaskState.ACTIVE and t.parent]
                if active:
                    eng.return_from_subtask(active[0].id, {"ok": "1"},
                                            save=rng.random() < 0.5)
            else:
                eligible = [
                    t for t in open_tasks
                    if t.state in (TaskState.ACTIVE, TaskState.SUSPENDED)
                    and not any(c.open for c in eng.children(t.id))
                ]
                if eligible:
                    eng.complete(rng.choice(eligible).id)
        except UniError:
            pass
        active = [t for t in eng.open_tasks() if t.state is TaskState.ACTIVE]
        assert len(active) <= 1  # single active task per session

    rebuilt = TaskEngine.replay(eng.journal.entries)
    assert rebuilt.state_digest_dict() == eng.state_digest_dict()
    # independent oracle agrees on every state
    oracle = replay_oracle(eng.journal.entries)
    for tid, state in oracle.items():
        assert eng.tasks[tid].state.value == state


def _apply_op(eng: TaskEngine, op: tuple) -> None:
    kind = op[0]
    if kind == "create":
        eng.create(op[1], "p" + op[1], None)
    elif kind == "bind":
        eng.bind(op[1], SITE, "c")
    elif kind == "cancel":
        eng.cancel_creation(op[1])
    elif kind == "switch":
        active = [t.id for t in eng.open_tasks() if t.state is TaskState.ACTIVE]
        eng.switch(op[1], active[0] if active else None, None)
    elif kind == "spawn":
        eng.spawn(op[1], op[1] + "x", "px", {}, "c")
    elif kind == "return":
        eng.return_from_subtask(op[1], None, True)
    elif kind == "complete":
        eng.complete(op[1])


def test_exhaustive_sequences_never_produce_illegal_transitions():
    """Model check: every op sequence of length <= 6 over two task names
    either fails cleanly or moves tasks along allowed edges only (one op
    may compose up to two edges, e.g. bind passes through Bound)."""
    composed = set(ALLOWED_TRANSITIONS) | {
        (a, c)
        for (a, b1) in ALLOWED_TRANSITIONS
        for (b2, c) in ALLOWED_TRANSITIONS
        if b1 == b2
    }
    ops = [("create", "a"), ("create", "b"), ("bind", "a"), ("bind", "b"),
           ("cancel", "a"), ("switch", "a"), ("switch", "b"),
           ("spawn", "a"), ("return", "ax"), ("complete", "a"), ("complete", "b")]
    explored = 0
    for length in range(1, 6):
        for seq in itertools.product(ops, repeat=length):
            eng = engine()
            before: dict[str, TaskState] = {}
            legal = True
            for op in seq:
                before = {t.id: t.state for t in eng.tasks.values()}
                try:
                    _apply_op(eng, op)
                except UniError:
                    # a refused op must not have changed any state
                    after = {t.id: t.state for t in eng.tasks.values()}
                    assert after == before
                    legal = False
                    break
                after = {t.id: t.state for t in eng.tasks.values()}
                for tid, state in after.items():
                    prev = before.get(tid)
                    if prev is not None and prev != state:
                        assert (prev, state) in composed, (prev, state, op)
            explored += 1
    assert explored > 10_000


def test_journal_persists_and_reloads(tmp_path):
    journal = TaskJournal(tmp_path / "journal.ndjson")
    eng = TaskEngine(journal)
    eng.create("t1", "p1", None)
    eng.bind("t1", SITE, "c")
    journal.close()
    again = TaskJournal.load(tmp_path / "journal.ndjson")
    assert [e.event for e in again.entries] == ["created", "bound"]
    rebuilt = TaskEngine.replay(again.entries)
    assert rebuilt.task("t1").state is TaskState.ACTIVE
