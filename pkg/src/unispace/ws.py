"""WebSocket-to-protocol bridge for browser interface agents.

Carries the same one-JSON-object-per-frame protocol: each websocket text
message is one request frame, each reply one text message. Implements
the minimal RFC 6455 server side (handshake, masked client frames, text
/ ping / close opcodes, no fragmentation or extensions).
"""

from __future__ import annotations

import base64
import hashlib
import socketserver
import struct
import threading

from .protocol import MAX_FRAME

_WS_GUID = "258EAFA5-E914-47DA-95CA-C5AB0DC85B11"


def _accept_key(client_key: str) -> str:
    digest = hashlib.sha1((client_key + _WS_GUID).encode("ascii")).digest()
    return base64.b64encode(digest).decode("ascii")


def read_frame(rfile) -> tuple[int, bytes] | None:
    """Returns (opcode, payload) or None on a clean close/EOF."""
    header = rfile.read(2)
    if len(header) < 2:
        return None
    b0, b1 = header
    opcode = b0 & 0x0F
    masked = bool(b1 & 0x80)
    length = b1 & 0x7F
    if length == 126:
        ext = rfile.read(2)
        if len(ext) < 2:
            return None
        length = struct.unpack(">H", ext)[0]
    elif length == 127:
        ext = rfile.read(8)
        if len(ext) < 8:
            return None
        length = struct.unpack(">Q", ext)[0]
    if length > MAX_FRAME:
        return None
    mask = rfile.read(4) if masked else b""
    payload = rfile.read(length)
    if len(payload) < length:
        return None
    if masked:
        payload = bytes(b ^ mask[i % 4] for i, b in enumerate(payload))
    return opcode, payload


def write_frame(wfile, payload: bytes, opcode: int = 0x1) -> None:
    header = bytes([0x80 | opcode])
    n = len(payload)
    if n < 126:
        header += bytes([n])
    elif n < (1 << 16):
        header += bytes([126]) + struct.pack(">H", n)
    else:
        header += bytes([127]) + struct.pack(">Q", n)
    wfile.write(header + payload)
    wfile.flush()


class _WsHandler(socketserver.StreamRequestHandler):
    def handle(self):
        if not self._handshake():
            return
        server = self.server.domain_server
        conn: dict = {}
        while True:
            frame = read_frame(self.rfile)
            if frame is None:
                break
            opcode, payload = frame
            if opcode == 0x8:  # close
                write_frame(self.wfile, payload, opcode=0x8)
                break
            if opcode == 0x9:  # ping
                write_frame(self.wfile, payload, opcode=0xA)
                continue
            if opcode not in (0x1, 0x2):
                continue
            if not payload.endswith(b"\n"):
                payload += b"\n"
            reply = server.handle_frame(payload, conn)
            write_frame(self.wfile, reply.rstrip(b"\n"))

    def _handshake(self) -> bool:
        request_line = self.rfile.readline(2048).decode("latin-1", "replace")
        if not request_line.startswith("GET"):
            self.wfile.write(b"HTTP/1.1 400 Bad Request\r\n\r\n")
            return False
        headers = {}
        while True:
            line = self.rfile.readline(2048).decode("latin-1", "replace").strip()
            if not line:
                break
            key, _, value = line.partition(":")
            headers[key.strip().lower()] = value.strip()
        key = headers.get("sec-websocket-key")
        if not key or "websocket" not in headers.get("upgrade", "").lower():
            self.wfile.write(b"HTTP/1.1 400 Bad Request\r\n\r\n")
            return False
        response = (
            "HTTP/1.1 101 Switching Protocols\r\n"
            "Upgrade: websocket\r\n"
            "Connection: Upgrade\r\n"
            f"Sec-WebSocket-Accept: {_accept_key(key)}\r\n"
            "\r\n"
        )
        self.wfile.write(response.encode("ascii"))
        self.wfile.flush()
        return True


class _WsServer(socketserver.ThreadingTCPServer):
    allow_reuse_address = True
    daemon_threads = True

    def __init__(self, addr, domain_server):
        super().__init__(addr, _WsHandler)
        self.domain_server = domain_server


class WsBridge:
    def __init__(self, domain_server, listen: str):
        host, _, port_text = listen.partition(":")
        self._server = _WsServer((host or "127.0.0.1", int(port_text or 0)), domain_server)
        actual = self._server.server_address
        self.address = f"{actual[0]}:{actual[1]}"
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)
        self._thread.start()

    def stop(self) -> None:
        self._server.shutdown()
        self._server.server_close()
