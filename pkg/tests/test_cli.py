from __future__ import annotations

import json
from pathlib import Path

import pytest

from unispace.cli import build_parser, main

from conftest import make_server

FIXTURES = Path(__file__).resolve().parents[1] / "fixtures"


def run_cli(argv, capsys) -> tuple[int, str, str]:
    code = main([str(a) for a in argv])
    captured = capsys.readouterr()
    return code, captured.out, captured.err


@pytest.fixture
def root(tmp_path):
    return tmp_path / "dom"


def test_fig10_chain_over_cli(root, capsys):
    base = ["--root", root, "--seed", "3"]
    assert run_cli(base + ["install", "document-editor"], capsys)[0] == 0
    assert run_cli(base + ["task", "new", "report"], capsys)[0] == 0
    code, out, _ = run_cli(base + ["find", "document"], capsys)
    assert code == 0 and "document-editor" in out
    assert run_cli(base + ["go", "document-editor"], capsys)[0] == 0
    assert run_cli(base + ["obj", "put", "draft", "--text", "hello"], capsys)[0] == 0
    assert run_cli(base + ["task", "done"], capsys)[0] == 0
    code, out, _ = run_cli(base + ["journal"], capsys)
    events = [line.split("\t")[1] for line in out.strip().splitlines()]
    assert events[:3] == ["created", "bound", "completed"]


def test_unknown_object_exits_one(root, capsys):
    code, _, err = run_cli(["--root", root, "obj", "get", "missing"], capsys)
    assert code == 1
    assert "NOT_FOUND" in err


def test_no_server_exits_three(capsys, monkeypatch):
    monkeypatch.delenv("UNISPACE_ROOT", raising=False)
    monkeypatch.delenv("UNISPACE_ADDR", raising=False)
    code, _, err = run_cli(["task", "ls"], capsys)
    assert code == 3


def test_unreachable_addr_exits_three(capsys):
    code, _, err = run_cli(["--addr", "127.0.0.1:1", "--secret", "x", "task", "ls"],
                           capsys)
    assert code == 3


def test_usage_error_exits_two(root, capsys):
    with pytest.raises(SystemExit) as err:
        main(["--root", str(root), "--bogus-flag", "task", "ls"])
    assert err.value.code == 2
    capsys.readouterr()
    # a verb group without its subverb is a domain-level parse error
    assert main(["--root", str(root), "obj"]) == 1


def test_lint_verbs(root, capsys):
    code, out, _ = run_cli(["lint", FIXTURES / "word-ribbon.json"], capsys)
    assert code == 0
    assert out.strip() == "tabs\tmental_elements\t10\t7"
    code, out, _ = run_cli(["lint", FIXTURES / "technological-workplaces.json"], capsys)
    assert code == 0 and out.strip() == "ok"
    code, _, _ = run_cli(["lint", FIXTURES / "word-ribbon.json", "--strict"], capsys)
    assert code == 1


def test_lint_figure_written(root, tmp_path, capsys):
    figure = tmp_path / "lint.png"
    code, _, _ = run_cli(["lint", FIXTURES / "toolbar-21.json", "--figure", figure],
                         capsys)
    assert code == 0 and figure.exists() and figure.stat().st_size > 0


def test_map_outputs_rows_and_figure(root, tmp_path, capsys):
    figure = tmp_path / "map.png"
    table = tmp_path / "map.tsv"
    code, out, _ = run_cli(["--root", root, "map", "--figure", figure, "--out", table],
                           capsys)
    assert code == 0
    assert figure.exists() and figure.stat().st_size > 0
    rows = [line.split("\t") for line in table.read_text().strip().splitlines()]
    assert rows[0][1] == "domain"
    assert any(r[1] == "site" and r[2] == "System" for r in rows)


def test_obj_round_trip_and_versions(root, tmp_path, capsys):
    base = ["--root", root]
    src = tmp_path / "part.bin"
    src.write_bytes(b"\x00\x01payload")
    assert run_cli(base + ["obj", "put", "blob", "--part", f"data={src}"], capsys)[0] == 0
    out_dir = tmp_path / "out"
    code, out, _ = run_cli(base + ["obj", "get", "blob", "--out", out_dir], capsys)
    assert code == 0
    assert (out_dir / "data").read_bytes() == b"\x00\x01payload"
    code, out, _ = run_cli(base + ["obj", "versions", "blob"], capsys)
    assert code == 0 and out.startswith("v1")


def test_obj_mv_between_zones(root, capsys):
    base = ["--root", root]
    run_cli(base + ["obj", "put", "doc", "--text", "x"], capsys)
    code, out, _ = run_cli(base + ["--json", "find", ""], capsys)
    run_cli(base + ["obj", "mv", "doc", "--to", "main"], capsys)
    code, out, _ = run_cli(base + ["obj", "rm", "doc"], capsys)
    assert code == 0
    code, out, _ = run_cli(base + ["obj", "restore", "doc"], capsys)
    assert code == 0 and "restored" in out


def test_portal_export_import(root, tmp_path, capsys):
    base = ["--root", root]
    record = tmp_path / "portal.json"
    code, _, _ = run_cli(base + ["portal", "export", "System", "--out", record], capsys)
    assert code == 0 and record.exists()
    code, out, _ = run_cli(base + ["portal", "import", record], capsys)
    assert code == 0
    code, out, _ = run_cli(base + ["portal", "ls"], capsys)
    assert out.count("System") >= 2


def test_json_mode_emits_protocol_bodies(root, capsys):
    code, out, _ = run_cli(["--root", root, "--json", "task", "new"], capsys)
    assert code == 0
    body = json.loads(out.strip().splitlines()[0])
    assert body["type"] == "render"
    assert body["body"]["kind"] == "space"


def test_script_runs_and_stops_on_failure(root, tmp_path, capsys):
    script = tmp_path / "s.uni"
    script.write_text(
        "task new build\n"
        "# comment\n"
        "find nothing-here\n"
        "obj get missing-object\n"
        "task ls\n"
    )
    code, out, err = run_cli(["--root", root, "script", script], capsys)
    assert code == 1
    assert "NOT_FOUND" in err
    replies = [json.loads(line) for line in out.strip().splitlines()]
    assert len(replies) == 2  # stops before task ls


def test_script_keep_going(root, tmp_path, capsys):
    script = tmp_path / "s.uni"
    script.write_text("obj get missing\ntask ls\n")
    code, out, err = run_cli(["--root", root, "script", script, "--keep-going"],
                             capsys)
    assert code == 0
    assert len(out.strip().splitlines()) == 1  # the failing line emits no body


def test_script_bad_verb_reports_line(root, tmp_path, capsys):
    script = tmp_path / "s.uni"
    script.write_text("task new\nfrobnicate all\n")
    code, _, err = run_cli(["--root", root, "script", script], capsys)
    assert code == 1
    assert "line 2" in err


def test_empty_script_ok(root, tmp_path, capsys):
    script = tmp_path / "s.uni"
    script.write_text("\n# only a comment\n")
    code, out, _ = run_cli(["--root", root, "script", script], capsys)
    assert code == 0 and out.strip() == ""


def test_protocol_economy_every_verb_two_commands_max(root, tmp_path, capsys):
    """Instrumented run: each CLI verb sends at most two command messages."""
    from unispace.cli import Runner

    parser = build_parser()
    cases = [
        ["install", "document-editor"],
        ["task", "new", "job"],
        ["find", "document"],
        ["go", "document-editor"],
        ["obj", "put", "d", "--text", "x"],
        ["obj", "save", "d"],
        ["obj", "rm", "d"],
        ["obj", "restore", "d"],
        ["obj", "mv", "d", "--to", "main"],
        ["task", "ls"],
        ["task", "done"],
        ["portal", "ls"],
        ["map"],
        ["journal"],
    ]
    for case in cases:
        args = parser.parse_args(["--root", str(root), "--seed", "5"] + case)
        runner = Runner(args)
        try:
            assert runner.run(args) == 0, case
            client = runner.client
            assert client is not None and client.commands_sent <= 2, case
        finally:
            runner.close()
