"""Frame channels: in-process queues and TCP sockets.

Both carry encoded frames, so the wire format is exercised either way. A
channel is one end of a worker/master link with ``send(frame)`` and a
blocking ``recv()`` that returns exactly one frame.
"""

from __future__ import annotations

import queue
import socket

from ..errors import TransportFailure
from .messages import HEADER_BYTES, parse_header

_CLOSED = object()


class InProcessChannel:
    def __init__(self, inbox: queue.Queue, outbox: queue.Queue, timeout: float | None = None):
        self.inbox = inbox
        self.outbox = outbox
        self.timeout = timeout
        self.received = 0

    def send(self, frame: bytes):
        self.outbox.put(bytes(frame))

    def recv(self) -> bytes:
        offset = self.received
        try:
            frame = self.inbox.get(timeout=self.timeout)
        except queue.Empty:
            raise TransportFailure("timed out waiting for a frame", offset) from None
        if frame is _CLOSED:
            raise TransportFailure("channel closed by peer", offset)
        # framing is validated here too so both transports fail the same way
        parse_header(frame[:HEADER_BYTES], offset)
        self.received += len(frame)
        return frame

    def close(self):
        self.outbox.put(_CLOSED)


def inproc_pair(timeout: float | None = None) -> tuple[InProcessChannel, InProcessChannel]:
    """``(master_end, worker_end)`` of one in-process link."""
    up, down = queue.Queue(), queue.Queue()
    return InProcessChannel(up, down, timeout), InProcessChannel(down, up, timeout)


class TcpChannel:
    def __init__(self, sock: socket.socket, timeout: float | None = None):
        self.sock = sock
        self.sock.settimeout(timeout)
        self.received = 0

    def send(self, frame: bytes):
        try:
            self.sock.sendall(frame)
        except OSError as exc:
            raise TransportFailure(f"send failed: {exc}") from exc

    def _exactly(self, nbytes: int, offset: int) -> bytes:
        chunks, got = [], 0
        while got < nbytes:
            try:
                chunk = self.sock.recv(nbytes - got)
            except OSError as exc:
                raise TransportFailure(f"receive failed: {exc}", offset) from exc
            if not chunk:
                raise TransportFailure(f"connection closed after {got} of {nbytes} bytes", offset)
            chunks.append(chunk)
            got += len(chunk)
        return b"".join(chunks)

    def recv(self) -> bytes:
        offset = self.received
        header = self._exactly(HEADER_BYTES, offset)
        _, length = parse_header(header, offset)
        payload = self._exactly(length, offset)
        self.received += HEADER_BYTES + length
        return header + payload

    def close(self):
        try:
            self.sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        self.sock.close()


class TcpListener:
    """Master side: listen on ``host:port`` (0 picks a free port) and accept workers."""

    def __init__(self, host: str = "127.0.0.1", port: int = 0, backlog: int = 64, timeout: float | None = 30.0):
        self.timeout = timeout
        self.sock = socket.create_server((host, port), backlog=backlog)
        self.sock.settimeout(timeout)
        self.host, self.port = self.sock.getsockname()[:2]

    def accept(self) -> TcpChannel:
        try:
            conn, _ = self.sock.accept()
        except OSError as exc:
            raise TransportFailure(f"accept failed: {exc}") from exc
        conn.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        return TcpChannel(conn, self.timeout)

    def close(self):
        self.sock.close()


def tcp_connect(host: str, port: int, timeout: float | None = 30.0) -> TcpChannel:
    try:
        sock = socket.create_connection((host, port), timeout=timeout)
    except OSError as exc:
        raise TransportFailure(f"cannot connect to {host}:{port}: {exc}") from exc
    sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
    return TcpChannel(sock, timeout)
