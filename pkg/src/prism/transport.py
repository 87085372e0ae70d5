"""Networked mode: each role is an OS process answering frames over TCP.

A role process reads one frame, feeds it to its state machine and writes
back every reply frame followed by a DONE frame.  ERROR frames carry the
failure text.  The hub is the only client, so servers never connect to one
another.
"""
from __future__ import annotations

import socket
import socketserver
import subprocess
import sys
from pathlib import Path

from .errors import ParameterError, ProtocolError
from .messages import MsgType, RoundMessage, decode_frame, encode_frame, read_frame, text_item

DEFAULT_TIMEOUT = 30.0


def make_node(role: str, params_dir=None, data=None, seed: int = 0):
    from .announcer import AnnouncerNode
    from .owner import OwnerNode
    from .params import load_view
    from .query import OwnerRelation
    from .server import ServerNode

    view = load_view(role, params_dir)
    if role.startswith("server"):
        return ServerNode(role, view, seed)
    if role == "announcer":
        return AnnouncerNode(view, seed)
    if role.startswith("owner"):
        if data is None:
            raise ParameterError(f"{role} needs its dataset (--data)")
        return OwnerNode(role, view, OwnerRelation.load(data), seed)
    raise ParameterError(f"unknown role {role!r}")


class _Handler(socketserver.BaseRequestHandler):
    def handle(self):
        node = self.server.node
        while True:
            try:
                frame = read_frame(self.request)
            except ConnectionError:
                return
            if not frame:
                return
            msg = decode_frame(frame)
            done = RoundMessage(MsgType.DONE, node.name, "orchestrator", msg.query_id)
            if msg.mtype == MsgType.SHUTDOWN:
                self.server.stopping = True
                self.request.sendall(encode_frame(done))
                return
            try:
                replies = [encode_frame(r) for r in node.handle(msg)]
            except Exception as exc:  # reported to the hub, which re-raises
                err = RoundMessage(MsgType.ERROR, node.name, "orchestrator", msg.query_id,
                                   {"error": text_item(f"{type(exc).__name__}: {exc}")})
                replies = [encode_frame(err)]
            self.request.sendall(b"".join(replies) + encode_frame(done))


class RoleServer(socketserver.TCPServer):
    allow_reuse_address = True

    def __init__(self, node, host: str = "127.0.0.1", port: int = 0):
        self.node = node
        self.stopping = False
        super().__init__((host, port), _Handler)

    @property
    def address(self) -> tuple:
        return self.server_address[:2]

    def serve_until_shutdown(self) -> None:
        while not self.stopping:
            self.handle_request()
        self.server_close()


def serve(role: str, port: int = 0, host: str = "127.0.0.1", params_dir=None, data=None,
          seed: int = 0, out=None) -> None:
    node = make_node(role, params_dir, data, seed)
    server = RoleServer(node, host, port)
    out = out or sys.stdout
    h, p = server.address
    print(f"listening on {h}:{p}", file=out, flush=True)
    server.serve_until_shutdown()


class NetTransport:
    """Hub side: one persistent connection per role endpoint."""

    def __init__(self, endpoints: dict, timeout: float = DEFAULT_TIMEOUT):
        self.endpoints = {r: (h, int(p)) for r, (h, p) in endpoints.items()}
        self.timeout = timeout
        self._socks: dict = {}

    def _sock(self, role: str):
        if role not in self._socks:
            try:
                addr = self.endpoints[role]
            except KeyError:
                raise ProtocolError(f"no endpoint for {role}") from None
            self._socks[role] = socket.create_connection(addr, timeout=self.timeout)
        return self._socks[role]

    def deliver(self, msg: RoundMessage) -> list[RoundMessage]:
        sock = self._sock(msg.receiver)
        sock.sendall(encode_frame(msg))
        replies = []
        while True:
            try:
                frame = read_frame(sock)
            except socket.timeout:
                raise ProtocolError(f"{msg.receiver} did not answer within {self.timeout} s") from None
            if not frame:
                raise ProtocolError(f"{msg.receiver} closed the connection")
            reply = decode_frame(frame)
            if reply.mtype == MsgType.DONE:
                return replies
            if reply.mtype == MsgType.ERROR:
                raise ProtocolError(f"{msg.receiver}: {reply.text('error')}")
            replies.append(reply)

    def close(self) -> None:
        for sock in self._socks.values():
            sock.close()
        self._socks.clear()

    def shutdown_all(self) -> None:
        for role in self.endpoints:
            try:
                sock = self._sock(role)
                sock.sendall(encode_frame(RoundMessage(MsgType.SHUTDOWN, "orchestrator", role, 0)))
                read_frame(sock)
            except OSError:
                pass
        self.close()


class RoleProcesses:
    """Spawn one OS process per role and collect their endpoints."""

    def __init__(self, roles: list, params_dir, data: dict | None = None, seed: int = 0,
                 host: str = "127.0.0.1"):
        self.procs = {}
        self.endpoints = {}
        data = data or {}
        try:
            for role in roles:
                cmd = [sys.executable, "-m", "prism", "serve", "--role", role, "--port", "0",
                       "--host", host, "--params-dir", str(params_dir), "--seed", str(seed)]
                if role in data:
                    cmd += ["--data", str(Path(data[role]))]
                proc = subprocess.Popen(cmd, stdout=subprocess.PIPE, text=True)
                self.procs[role] = proc
            for role, proc in self.procs.items():
                line = proc.stdout.readline().strip()
                if not line.startswith("listening on "):
                    raise ProtocolError(f"{role} failed to start: {line!r}")
                h, _, p = line[len("listening on "):].rpartition(":")
                self.endpoints[role] = (h, int(p))
        except Exception:
            self.close()
            raise

    def close(self) -> None:
        if self.endpoints:
            NetTransport(self.endpoints).shutdown_all()
        for proc in self.procs.values():
            try:
                proc.wait(timeout=10)
            except subprocess.TimeoutExpired:
                proc.kill()
            if proc.stdout:
                proc.stdout.close()
        self.procs.clear()
        self.endpoints = {}

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
