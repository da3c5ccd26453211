"""uni: scripting interface agent for the personal-domain server.

Connects over TCP (--addr / UNISPACE_ADDR) or runs the server in-process
against a domain root (--root / UNISPACE_ROOT). Every verb maps to at
most two protocol command messages. Exit codes: 0 ok, 1 domain error,
2 usage, 3 connectivity.
"""

from __future__ import annotations

import argparse
import base64
import json
import os
import shlex
import sys
from pathlib import Path

from .client import ProtocolClient
from .domain import DomainConfig
from .errors import UniError, SCRIPT_PARSE, UNREACHABLE
from .lint import load_fixture, validate_complexity
from .model import ComplexityLimits
from .protocol import DEFAULT_PORT

EXIT_OK = 0
EXIT_DOMAIN = 1
EXIT_USAGE = 2
EXIT_CONN = 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="uni", description="unified virtual environment client"
    )
    parser.add_argument("--root", default=os.environ.get("UNISPACE_ROOT"),
                        help="domain root directory (in-process server)")
    parser.add_argument("--addr", default=os.environ.get("UNISPACE_ADDR"),
                        help="server endpoint host:port")
    parser.add_argument("--secret", default=os.environ.get("UNISPACE_SECRET"),
                        help="owner secret for TCP sessions")
    parser.add_argument("--json", action="store_true", help="print raw protocol bodies")
    parser.add_argument("--seed", type=int, default=None,
                        help="deterministic ids/clock for a fresh root")
    sub = parser.add_subparsers(dest="verb", metavar="verb")

    p = sub.add_parser("serve", help="run the executive server")
    p.add_argument("--root", default=argparse.SUPPRESS,
                   help="domain root (may also be given before the verb)")
    p.add_argument("--seed", type=int, default=argparse.SUPPRESS)
    p.add_argument("--listen", default=f"127.0.0.1:{DEFAULT_PORT}")
    p.add_argument("--listen-ws", default=None, help="websocket bridge host:port")
    p.add_argument("--strict-lint", action="store_true")
    p.add_argument("--autosave", type=int, default=30, metavar="TICKS")
    p.add_argument("--no-federation", action="store_true")

    p = sub.add_parser("task", help="task management")
    tsub = p.add_subparsers(dest="task_verb", metavar="new|ls|switch|done")
    tp = tsub.add_parser("new")
    tp.add_argument("name", nargs="?")
    tp.add_argument("--sub", action="store_true", help="spawn a subtask of the active task")
    tp.add_argument("--param", action="append", default=[], metavar="K=V")
    tsub.add_parser("ls")
    tp = tsub.add_parser("switch")
    tp.add_argument("task")
    tp = tsub.add_parser("done")
    tp.add_argument("task", nargs="?")

    p = sub.add_parser("go", help="activate a portal")
    p.add_argument("portal")

    p = sub.add_parser("exit", help="leave the current space")
    p.add_argument("--save", action="store_true")
    p.add_argument("--result", action="append", default=[], metavar="K=V")

    p = sub.add_parser("find", help="search for resources")
    p.add_argument("query", nargs="?", default="")
    p.add_argument("--zone", default=None, help="partition or zone scope")
    p.add_argument("--tag", action="append", default=[])

    p = sub.add_parser("obj", help="data objects")
    osub = p.add_subparsers(dest="obj_verb",
                            metavar="put|get|mv|cp|rm|restore|versions|save|open|close|edit")
    op = osub.add_parser("put")
    op.add_argument("name")
    op.add_argument("--zone", default=None)
    op.add_argument("--part", action="append", default=[], metavar="NAME=FILE")
    op.add_argument("--text", default=None)
    op.add_argument("--tag", action="append", default=[])
    op = osub.add_parser("get")
    op.add_argument("object")
    op.add_argument("--out", default=None, metavar="DIR")
    op = osub.add_parser("mv")
    op.add_argument("object")
    op.add_argument("--to", required=True, metavar="ZONE")
    op = osub.add_parser("cp")
    op.add_argument("object")
    op.add_argument("--to", required=True, metavar="ZONE")
    op = osub.add_parser("rm")
    op.add_argument("object")
    op = osub.add_parser("restore")
    op.add_argument("object")
    op = osub.add_parser("versions")
    op.add_argument("object")
    op = osub.add_parser("save")
    op.add_argument("object")
    op.add_argument("--overwrite", action="store_true",
                    help="save in place instead of a new version")
    op = osub.add_parser("open")
    op.add_argument("object")
    op.add_argument("--view", action="store_true")
    op = osub.add_parser("close")
    op.add_argument("lease")
    op = osub.add_parser("edit")
    op.add_argument("lease")
    op.add_argument("--part", default="content")
    op.add_argument("--text", default=None)
    op.add_argument("--file", default=None)

    p = sub.add_parser("portal", help="portals")
    psub = p.add_subparsers(dest="portal_verb", metavar="mk|ls|export|import|fav")
    pp = psub.add_parser("mk")
    pp.add_argument("sign")
    pp.add_argument("name")
    pp.add_argument("--tag", action="append", default=[])
    pp.add_argument("--context", default="")
    psub.add_parser("ls")
    pp = psub.add_parser("export")
    pp.add_argument("portal")
    pp.add_argument("--out", default=None, metavar="FILE")
    pp = psub.add_parser("import")
    pp.add_argument("record", help="record file, or - for stdin")
    pp.add_argument("--partition", default=None)
    pp = psub.add_parser("fav")
    pp.add_argument("portal")

    p = sub.add_parser("map", help="environment map")
    p.add_argument("--figure", default=None, metavar="FILE.png")
    p.add_argument("--out", default=None, metavar="FILE.tsv")

    p = sub.add_parser("lint", help="check a structure fixture against the limits")
    p.add_argument("file")
    p.add_argument("--figure", default=None, metavar="FILE.png")
    p.add_argument("--strict", action="store_true")
    p.add_argument("--mental", type=int, default=7)
    p.add_argument("--perceptual", type=int, default=20)

    p = sub.add_parser("grant", help="grant access on a storage")
    p.add_argument("--subject", required=True, metavar="KIND:DOMAIN:AGENT")
    p.add_argument("--storage", required=True, help="site name or storage id")
    p.add_argument("--zone", default=None)
    p.add_argument("--rights", default="Read", metavar="CSV")
    p.add_argument("--expiry", type=float, default=None)

    p = sub.add_parser("revoke")
    p.add_argument("grant_id")

    p = sub.add_parser("federate")
    p.add_argument("endpoint")

    p = sub.add_parser("mount")
    p.add_argument("source")
    p.add_argument("--cloud", action="store_true")
    p = sub.add_parser("unmount")
    p.add_argument("source")

    p = sub.add_parser("install")
    p.add_argument("template", help="template name or JSON file path")
    p.add_argument("--partition", default=None)

    p = sub.add_parser("what", help="what is this? (purpose of a sign)")
    p.add_argument("sign")
    p = sub.add_parser("props", help="full properties of a sign, id included")
    p.add_argument("sign")

    p = sub.add_parser("journal", help="query the task journal")
    p.add_argument("--task", default=None)
    p.add_argument("--event", default=None)

    p = sub.add_parser("snapshot")
    p.add_argument("out")
    p = sub.add_parser("restore")
    p.add_argument("archive")
    p.add_argument("--to", required=True, metavar="NEWROOT")

    p = sub.add_parser("script", help="run one verb per line from a file")
    p.add_argument("file")
    p.add_argument("--keep-going", action="store_true")

    return parser


def _kv(pairs: list[str]) -> dict:
    out = {}
    for pair in pairs:
        key, sep, value = pair.partition("=")
        if not sep:
            raise UniError(SCRIPT_PARSE, f"expected K=V, got {pair!r}")
        out[key] = value
    return out


class Runner:
    """Holds one session and executes parsed verbs against it."""

    def __init__(self, args, out=None):
        self.args = args
        self.out = out or sys.stdout
        self.json_mode = args.json
        self.client: ProtocolClient | None = None
        self._inproc_server = None
        self.transcript: list[dict] = []

    # ------------------------------------------------------------- session

    def connect(self) -> ProtocolClient:
        if self.client is not None:
            return self.client
        args = self.args
        if args.addr:
            client = ProtocolClient(args.addr)
            secret = args.secret
            if not secret and args.root:
                secret = self._secret_from_root(Path(args.root))
            if not secret:
                raise UniError(UNREACHABLE, "owner secret required for TCP (--secret)")
        elif args.root:
            from .server import DomainServer
            self._inproc_server = DomainServer(
                DomainConfig(root=Path(args.root), seed=args.seed)
            )
            client = ProtocolClient(self._inproc_server)
            secret = self._inproc_server.domain.owner_secret
        else:
            raise UniError(UNREACHABLE, "no server: set --root or --addr")
        client.hello({"principal": "owner", "secret": secret})
        self.client = client
        return client

    @staticmethod
    def _secret_from_root(root: Path) -> str | None:
        path = root / "secret.json"
        if path.exists():
            return json.loads(path.read_text(encoding="utf-8")).get("owner_secret")
        return None

    def close(self) -> None:
        if self.client is not None:
            self.client.close()
            self.client = None
        if self._inproc_server is not None:
            self._inproc_server.stop()
            self._inproc_server = None

    # -------------------------------------------------------------- output

    def emit(self, reply, human: str | None = None) -> None:
        body = reply.body if hasattr(reply, "body") else reply
        kind = reply.type if hasattr(reply, "type") else "local"
        self.transcript.append({"type": kind, "body": body})
        if self.json_mode:
            self.out.write(json.dumps({"type": kind, "body": body},
                                      sort_keys=True, separators=(",", ":")) + "\n")
        elif human:
            self.out.write(human + "\n")

    def ok(self, tool: str, params: dict | None = None, target: str | None = None):
        return self.connect().invoke_ok(tool, params, target)

    def ok_admin(self, tool: str, params: dict | None = None):
        """Domain-management tools live on the system site; jump there
        first. Two protocol commands, inside the two-click budget."""
        client = self.connect()
        client.invoke_ok("system", {})
        return client.invoke_ok(tool, params)

    # --------------------------------------------------------------- verbs

    def run(self, args) -> int:
        verb = args.verb
        if verb is None:
            raise UniError(SCRIPT_PARSE, "no verb given")
        handler = getattr(self, f"verb_{verb}", None)
        if handler is None:
            raise UniError(SCRIPT_PARSE, f"unknown verb {verb!r}")
        return handler(args) or EXIT_OK

    def verb_task(self, args) -> int:
        tv = args.task_verb
        if tv == "new":
            reply = self.ok("create_task", {
                "name": args.name, "sub": args.sub, "params": _kv(args.param),
            })
            tabs = _task_tabs(reply.body)
            active = next((t for t in tabs if t["active"]), None)
            self.emit(reply, f"task {active['label'] if active else '?'} created"
                             f" ({len(tabs)} open)")
        elif tv == "ls":
            reply = self.ok("enter", {})
            tabs = _task_tabs(reply.body)
            lines = [
                f"{'*' if t['active'] else ' '} {t['label']}\t{t['state']}\t{t['task']}"
                for t in tabs
            ]
            self.emit(reply, "\n".join(lines) if lines else "(no open tasks)")
        elif tv == "switch":
            reply = self.ok("switch_task", {"task": args.task})
            self.emit(reply, f"switched to {args.task}")
        elif tv == "done":
            reply = self.ok("complete_task", {"task": args.task})
            self.emit(reply, "task completed")
        else:
            raise UniError(SCRIPT_PARSE, "task needs new|ls|switch|done")
        return EXIT_OK

    def verb_go(self, args) -> int:
        reply = self.ok("activate", {"portal": args.portal})
        self.emit(reply, f"at {reply.body.get('label', args.portal)}")
        return EXIT_OK

    def verb_exit(self, args) -> int:
        reply = self.ok("exit", {"save": args.save, "results": _kv(args.result)})
        self.emit(reply, f"at {reply.body.get('label', 'root')}")
        return EXIT_OK

    def verb_find(self, args) -> int:
        reply = self.ok("find", {"query": args.query, "scope": args.zone,
                                 "tags": args.tag})
        results = reply.body.get("meta", {}).get("results", [])
        lines = [f"{r['kind']}\t{r['name']}\t{r.get('portal') or r['sign']}"
                 for r in results]
        self.emit(reply, "\n".join(lines) if lines else "(nothing found)")
        return EXIT_OK

    def verb_obj(self, args) -> int:
        ov = args.obj_verb
        if ov == "put":
            parts = {}
            for spec in args.part:
                name, sep, path = spec.partition("=")
                if not sep:
                    raise UniError(SCRIPT_PARSE, f"expected NAME=FILE, got {spec!r}")
                data = Path(path).read_bytes()
                parts[name] = {"media": "application/octet-stream",
                               "b64": base64.b64encode(data).decode("ascii")}
            params = {"name": args.name, "zone": args.zone, "tags": args.tag}
            if parts:
                params["parts"] = parts
            if args.text is not None:
                params["text"] = args.text
            reply = self.ok("put", params)
            self.emit(reply, f"object {reply.body['object']}")
        elif ov == "get":
            reply = self.ok("get", {"object": args.object})
            if args.out:
                out_dir = Path(args.out)
                out_dir.mkdir(parents=True, exist_ok=True)
                for pn, spec in reply.body["parts"].items():
                    (out_dir / pn).write_bytes(base64.b64decode(spec["b64"]))
            names = ", ".join(sorted(reply.body["parts"]))
            self.emit(reply, f"{reply.body['name']}: parts [{names}]"
                             f" v{reply.body['current']}")
        elif ov in ("mv", "cp"):
            tool = "move" if ov == "mv" else "copy"
            self.ok(tool, {"ids": [args.object]})
            reply = self.ok("insert", {"zone": args.to})
            self.emit(reply, f"{ov} -> {args.to}")
        elif ov == "rm":
            reply = self.ok("delete", {"object": args.object})
            self.emit(reply, f"trashed {reply.body['trashed']}")
        elif ov == "restore":
            reply = self.ok("restore", {"object": args.object})
            self.emit(reply, f"restored into {reply.body['zone']}")
        elif ov == "versions":
            reply = self.ok("versions", {"object": args.object})
            lines = [f"v{v['vid']}\t{v['hash'][:12]}\t{v['author']}"
                     for v in reply.body["versions"]]
            self.emit(reply, "\n".join(lines))
        elif ov == "save":
            mode = "Overwrite" if args.overwrite else "NewVersion"
            reply = self.ok("save", {"object": args.object, "mode": mode})
            self.emit(reply, f"saved v{reply.body['vid']} ({mode})")
        elif ov == "open":
            reply = self.ok("open", {"object": args.object,
                                     "mode": "View" if args.view else "Edit"})
            self.emit(reply, f"lease {reply.body['lease']}")
        elif ov == "close":
            reply = self.ok("close", {"lease": args.lease})
            self.emit(reply, "closed")
        elif ov == "edit":
            if args.file:
                data = Path(args.file).read_bytes()
            else:
                data = (args.text or "").encode("utf-8")
            reply = self.ok("edit", {"lease": args.lease, "part": args.part,
                                     "b64": base64.b64encode(data).decode("ascii")})
            self.emit(reply, f"edited {reply.body['edited']}")
        else:
            raise UniError(SCRIPT_PARSE, "obj needs put|get|mv|cp|rm|restore|versions|save")
        return EXIT_OK

    def verb_portal(self, args) -> int:
        pv = args.portal_verb
        if pv == "mk":
            reply = self.ok_admin("create_portal", {"sign": args.sign, "name": args.name,
                                                    "tags": args.tag, "context": args.context})
            self.emit(reply, f"portal {reply.body['portal']} -> "
                             f"{reply.body['target']['kind']}")
        elif pv == "ls":
            reply = self.ok_admin("list_portals", {})
            lines = [f"{p['name']}\t{p['kind']}\t{p['endpoint']}\t{p['id']}"
                     for p in reply.body["portals"]]
            self.emit(reply, "\n".join(lines))
        elif pv == "export":
            reply = self.ok_admin("export_portal", {"portal": args.portal})
            record = reply.body["record"]
            if args.out:
                Path(args.out).write_text(record, encoding="utf-8")
                self.emit(reply, f"wrote {args.out}")
            else:
                self.emit(reply, record)
        elif pv == "import":
            if args.record == "-":
                record = sys.stdin.read()
            else:
                record = Path(args.record).read_text(encoding="utf-8")
            reply = self.ok_admin("import_portal", {"record": record,
                                                    "partition": args.partition})
            self.emit(reply, f"imported {reply.body['portal']}")
        elif pv == "fav":
            reply = self.ok_admin("mark_favorite", {"portal": args.portal})
            self.emit(reply, f"{len(reply.body['favorites'])} favorites")
        else:
            raise UniError(SCRIPT_PARSE, "portal needs mk|ls|export|import|fav")
        return EXIT_OK

    def verb_map(self, args) -> int:
        reply = self.ok_admin("map", {})
        from .report import map_rows, render_map_figure
        rows = map_rows(reply.body["map"])
        text = "\n".join(f"{d}\t{k}\t{n}\t{v}" for d, k, n, v in rows)
        if args.out:
            Path(args.out).write_text(text + "\n", encoding="utf-8")
        if args.figure:
            render_map_figure(reply.body["map"], args.figure)
        self.emit(reply, text)
        return EXIT_OK

    def verb_lint(self, args) -> int:
        limits = ComplexityLimits(mental_elements=args.mental,
                                  perceptual_elements=args.perceptual)
        root = load_fixture(args.file)
        report = validate_complexity(root, limits)
        rows = [v.row() for v in report.violations]
        body = {"file": args.file, "ok": report.ok,
                "violations": [list(r) for r in rows]}
        if args.figure:
            from .report import render_lint_figure
            render_lint_figure(report.violations, args.figure, title=Path(args.file).name)
        text = "\n".join(f"{p}\t{r}\t{o}\t{lim}" for p, r, o, lim in rows) or "ok"
        self.emit(body, text)
        if args.strict and not report.ok:
            return EXIT_DOMAIN
        return EXIT_OK

    def verb_grant(self, args) -> int:
        kind, _, rest = args.subject.partition(":")
        domain_id, _, agent = rest.partition(":")
        reply = self.ok_admin("grant", {
            "subject": {"kind": kind, "domain": domain_id, "agent": agent},
            "storage": args.storage, "zone": args.zone,
            "rights": [r.strip() for r in args.rights.split(",") if r.strip()],
            "expiry": args.expiry,
        })
        self.emit(reply, f"grant {reply.body['grant']['grant_id']}")
        return EXIT_OK

    def verb_revoke(self, args) -> int:
        reply = self.ok_admin("revoke", {"grant": args.grant_id})
        self.emit(reply, f"revoked {reply.body['revoked']}")
        return EXIT_OK

    def verb_federate(self, args) -> int:
        reply = self.ok_admin("federate", {"endpoint": args.endpoint})
        self.emit(reply, f"{reply.body['state']} to {reply.body['name']}")
        return EXIT_OK

    def verb_mount(self, args) -> int:
        reply = self.ok_admin("mount_partition", {
            "kind": "cloud" if args.cloud else "device", "source": args.source,
        })
        self.emit(reply, f"partition {reply.body['name']} ({reply.body['mount']})")
        return EXIT_OK

    def verb_unmount(self, args) -> int:
        reply = self.ok_admin("unmount_partition", {"source": args.source})
        self.emit(reply, "unmounted")
        return EXIT_OK

    def verb_install(self, args) -> int:
        params: dict = {"partition": args.partition}
        if args.template.endswith(".json") and Path(args.template).exists():
            params["template_doc"] = json.loads(Path(args.template).read_text(encoding="utf-8"))
        else:
            params["template"] = args.template
        reply = self.ok_admin("install_site", params)
        self.emit(reply, f"site {reply.body['name']}: "
                         + ", ".join(reply.body["workplaces"]))
        return EXIT_OK

    def verb_what(self, args) -> int:
        reply = self.ok("what_is_this", {"sign": args.sign})
        self.emit(reply, reply.body.get("meta", {}).get("info", ""))
        return EXIT_OK

    def verb_props(self, args) -> int:
        reply = self.ok("properties", {"sign": args.sign})
        props = reply.body["properties"]
        self.emit(reply, "\n".join(f"{k}\t{v}" for k, v in sorted(props.items())))
        return EXIT_OK

    def verb_journal(self, args) -> int:
        reply = self.ok("query_journal", {"task": args.task, "event": args.event})
        lines = [f"{e['seq']}\t{e['event']}\t{e['task']}"
                 for e in reply.body["entries"]]
        self.emit(reply, "\n".join(lines) if lines else "(empty journal)")
        return EXIT_OK

    def verb_snapshot(self, args) -> int:
        reply = self.ok_admin("snapshot", {"out": args.out})
        self.emit(reply, f"archive {reply.body['archive']} "
                         f"checksum {reply.body['checksum'][:12]}")
        return EXIT_OK

    def verb_restore(self, args) -> int:
        from .errors import ARCHIVE_CORRUPT
        from .server import restore_snapshot
        new_root = Path(args.to)
        if new_root.exists() and any(new_root.iterdir()):
            raise UniError(ARCHIVE_CORRUPT, "restore target directory must be empty")
        restore_snapshot(Path(args.archive), new_root)
        self.emit({"restored": str(new_root)}, f"restored into {new_root}")
        return EXIT_OK

    def verb_serve(self, args) -> int:
        from .server import DomainServer
        if not args.root:
            raise UniError(UNREACHABLE, "serve needs --root")
        config = DomainConfig(
            root=Path(args.root), seed=args.seed,
            strict_lint=args.strict_lint, autosave_ticks=args.autosave,
            allow_federation=not args.no_federation,
        )
        server = DomainServer(config)
        addr = server.serve_tcp(args.listen)
        bridges = []
        if args.listen_ws:
            from .ws import WsBridge
            bridge = WsBridge(server, args.listen_ws)
            bridges.append(bridge)
            self.out.write(f"websocket bridge on {bridge.address}\n")
        self.out.write(f"serving domain {server.domain.id} on {addr}\n")
        self.out.flush()
        try:
            import threading
            threading.Event().wait()
        except KeyboardInterrupt:
            pass
        finally:
            for bridge in bridges:
                bridge.stop()
            server.stop()
        return EXIT_OK

    def verb_script(self, args) -> int:
        self.json_mode = True  # transcripts are protocol bodies
        lines = Path(args.file).read_text(encoding="utf-8").splitlines()
        parser = build_parser()
        parsed = []
        for n, line in enumerate(lines, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            try:
                tokens = shlex.split(line)
                sub_args = parser.parse_args(_strip_conn_flags(tokens))
            except SystemExit:
                sys.stderr.write(f"SCRIPT_PARSE: line {n}: {line}\n")
                return EXIT_DOMAIN
            if sub_args.verb in (None, "script", "serve", "restore"):
                sys.stderr.write(f"SCRIPT_PARSE: line {n}: verb not allowed in scripts\n")
                return EXIT_DOMAIN
            parsed.append((n, sub_args))
        for n, sub_args in parsed:
            sub_args.json = True
            sub_args.root = self.args.root
            sub_args.addr = self.args.addr
            sub_args.secret = self.args.secret
            try:
                code = self.run(sub_args)
            except UniError as exc:
                sys.stderr.write(f"{exc.code}: line {n}: {exc.message}\n")
                if not args.keep_going:
                    return EXIT_CONN if exc.code == UNREACHABLE else EXIT_DOMAIN
                continue
            if code != EXIT_OK and not args.keep_going:
                return code
        return EXIT_OK


def _strip_conn_flags(tokens: list[str]) -> list[str]:
    out = []
    skip = False
    for token in tokens:
        if skip:
            skip = False
            continue
        if token in ("--root", "--addr", "--secret", "--seed"):
            skip = True
            continue
        out.append(token)
    return out


def _task_tabs(tree: dict) -> list[dict]:
    tabs = []

    def walk(node: dict):
        if node.get("kind") == "task_tab":
            tabs.append({
                "label": node.get("label", ""),
                "task": node.get("sign"),
                "state": node.get("meta", {}).get("state"),
                "active": node.get("meta", {}).get("active", False),
            })
        for child in node.get("children", []):
            walk(child)

    walk(tree)
    return tabs


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.verb is None:
        parser.print_help()
        return EXIT_USAGE
    runner = Runner(args)
    try:
        if args.verb == "script":
            # the script shares one runner so one session spans all lines
            return runner.verb_script(args)
        return runner.run(args)
    except UniError as exc:
        sys.stderr.write(f"{exc.code}: {exc.message}\n")
        return EXIT_CONN if exc.code == UNREACHABLE else EXIT_DOMAIN
    except OSError as exc:
        sys.stderr.write(f"IO: {exc}\n")
        return EXIT_DOMAIN
    finally:
        runner.close()


if __name__ == "__main__":
    sys.exit(main())
