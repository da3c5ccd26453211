"""Protocol clients: the interface-agent side of the wire contract.

Two transports, one behavior. Loopback hands frames straight to an
in-process server; TCP writes them to a socket. Both paths run the same
encode/decode, so a transcript recorded over one transport matches the
other after endpoint fields are erased.
"""

from __future__ import annotations

import socket
from dataclasses import dataclass, field

from .errors import UniError, MALFORMED, UNREACHABLE
from .protocol import MAX_FRAME, Message, decode, encode


class LoopbackTransport:
    """Direct in-process dispatch into a DomainServer."""

    def __init__(self, server):
        self.server = server
        self.conn: dict = {}
        self.endpoint = "loopback"

    def request(self, raw: bytes) -> bytes:
        return self.server.handle_frame(raw, self.conn)

    def alive(self) -> bool:
        return True

    def close(self) -> None:
        pass


class TcpTransport:
    def __init__(self, endpoint: str, timeout: float = 10.0):
        host, _, port_text = endpoint.partition(":")
        try:
            self.sock = socket.create_connection((host or "127.0.0.1", int(port_text)),
                                                 timeout=timeout)
        except (OSError, ValueError) as exc:
            raise UniError(UNREACHABLE, f"cannot connect to {endpoint}: {exc}") from exc
        self.rfile = self.sock.makefile("rb")
        self.endpoint = endpoint
        self._open = True

    def request(self, raw: bytes) -> bytes:
        try:
            self.sock.sendall(raw)
            line = self.rfile.readline(MAX_FRAME + 2)
        except (OSError, ValueError) as exc:
            self._open = False
            raise UniError(UNREACHABLE, f"connection lost: {exc}") from exc
        if not line:
            self._open = False
            raise UniError(UNREACHABLE, "server closed the connection")
        return line

    def alive(self) -> bool:
        return self._open

    def close(self) -> None:
        self._open = False
        try:
            self.rfile.close()
            self.sock.close()
        except OSError:
            pass


class RawClient:
    """One-shot framed request/response over TCP (probes, handshakes)."""

    def __init__(self, endpoint: str):
        self.transport = TcpTransport(endpoint)

    def request(self, message: Message) -> Message:
        return decode(self.transport.request(encode(message)))

    def alive(self) -> bool:
        return self.transport.alive()

    def close(self) -> None:
        self.transport.close()


@dataclass
class Transcript:
    """Reply bodies in order: the differential-test artifact."""

    entries: list[dict] = field(default_factory=list)

    def note(self, message: Message) -> None:
        self.entries.append({"type": message.type, "body": message.body})


class ProtocolClient:
    """Session-holding client: hello once, then invoke tools."""

    def __init__(self, target, record: bool = False):
        if isinstance(target, str):
            self.transport = TcpTransport(target)
        else:
            self.transport = LoopbackTransport(target)
        self.session: str | None = None
        self.seq = 0
        self.commands_sent = 0  # instrumentation for the two-click bound
        self.transcript = Transcript() if record else None
        self.server_info: dict = {}

    def _request(self, message: Message) -> Message:
        reply = decode(self.transport.request(encode(message)))
        if self.transcript is not None:
            self.transcript.note(reply)
        return reply

    def hello(self, credentials: dict, agent: str = "cli") -> Message:
        self.seq += 1
        reply = self._request(Message(type="hello", seq=self.seq,
                                      body={"agent": agent, "credentials": credentials}))
        if reply.type == "error":
            raise UniError(reply.body.get("code", MALFORMED),
                           reply.body.get("message", "hello failed"))
        self.session = reply.body.get("session")
        self.server_info = reply.body
        return reply

    def invoke(self, tool: str, params: dict | None = None,
               target: str | None = None) -> Message:
        if self.session is None:
            raise UniError(MALFORMED, "no session; call hello first")
        self.seq += 1
        self.commands_sent += 1
        body = {"tool": tool, "params": params or {}, "session": self.session}
        if target is not None:
            body["target"] = target
        return self._request(Message(type="command", seq=self.seq, body=body))

    def invoke_ok(self, tool: str, params: dict | None = None,
                  target: str | None = None) -> Message:
        reply = self.invoke(tool, params, target)
        if reply.type == "error":
            raise UniError(reply.body.get("code", MALFORMED),
                           reply.body.get("message", tool))
        return reply

    def bye(self) -> None:
        if self.session is None:
            return
        self.seq += 1
        try:
            self._request(Message(type="bye", seq=self.seq,
                                  body={"session": self.session}))
        except UniError:
            pass
        self.session = None

    def alive(self) -> bool:
        return self.transport.alive()

    def close(self) -> None:
        self.bye()
        self.transport.close()


def dial(endpoint: str) -> bool:
    """Reachability probe used by cloud mounts."""
    try:
        client = RawClient(endpoint)
    except UniError:
        return False
    try:
        reply = client.request(Message(type="hello", seq=1,
                                       body={"agent": "probe",
                                             "credentials": {"principal": "probe"}}))
        return reply.type == "hello"
    except UniError:
        return False
    finally:
        client.close()
