"""Reliable ordered byte streams between localities.

One TCP connection per locality pair: the higher-id side connects to the
lower-id side at boot and announces itself with an 8-byte preamble
("AMTH" + locality id), so every link has a known peer before any frame
flows.  Each link gets one writer thread (frames are enqueued whole, so a
parcel is never interleaved) and one reader thread (decodes frame
boundaries and hands complete frames up).  Connection loss is surfaced
once per peer; there is no reconnect.
"""

from __future__ import annotations

import logging
import queue
import socket
import struct
import threading
import time

from .errors import BootError, TransportError
from .wire import HEADER_LEN, read_header

log = logging.getLogger("amt.transport")

_PREAMBLE = struct.Struct(">4sI")
_PREAMBLE_MAGIC = b"AMTH"

_CONNECT_RETRY_S = 0.05


def _teardown(sock: socket.socket) -> None:
    """Actively tear a connection down.  close() alone does not send FIN
    while another thread is blocked in recv() on the same socket (the
    in-progress call keeps the kernel socket alive), so shut it down first."""
    try:
        sock.shutdown(socket.SHUT_RDWR)
    except OSError:
        pass
    try:
        sock.close()
    except OSError:
        pass


def _recv_exact(sock: socket.socket, n: int) -> bytes:
    buf = bytearray()
    while len(buf) < n:
        chunk = sock.recv(n - len(buf))
        if not chunk:
            raise ConnectionError("peer closed connection")
        buf += chunk
    return bytes(buf)


class _Link:
    def __init__(self, peer: int, sock: socket.socket):
        self.peer = peer
        self.sock = sock
        self.sendq: queue.SimpleQueue = queue.SimpleQueue()
        self.alive = True


class Transport:
    """Byte-stream fabric for one locality.

    on_frame(peer_id, frame_bytes) is called on the reader thread for every
    complete frame; on_peer_down(peer_id) once when a link dies.
    """

    def __init__(self, locality: int, table: dict[int, tuple[str, int]], on_frame, on_peer_down):
        self.locality = locality
        self.table = table
        self.on_frame = on_frame
        self.on_peer_down = on_peer_down
        self._lock = threading.Lock()
        self._links: dict[int, _Link] = {}
        self._dead: set[int] = set()  # peers whose link died; no reconnect
        self._listener: socket.socket | None = None
        self._threads: list[threading.Thread] = []
        self._closing = False

    # -- lifecycle ------------------------------------------------------------

    def listen(self, sock: socket.socket | None = None) -> None:
        if sock is None:
            host, port = self.table[self.locality]
            sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
            sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
            try:
                sock.bind((host, port))
            except OSError as exc:
                sock.close()
                raise BootError(f"cannot listen on {host}:{port}: {exc}") from exc
            sock.listen(16)
        self._listener = sock
        t = threading.Thread(target=self._accept_loop, name=f"amt-accept-{self.locality}", daemon=True)
        self._threads.append(t)
        t.start()

    def connect_lower(self, timeout: float) -> None:
        """Establish links to every lower-id locality, retrying while peers boot."""
        for peer in sorted(self.table):
            if peer >= self.locality:
                continue
            self._connect(peer, timeout)

    def _connect(self, peer: int, timeout: float) -> None:
        host, port = self.table[peer]
        deadline = time.monotonic() + timeout
        last_error: Exception | None = None
        while time.monotonic() < deadline:
            try:
                sock = socket.create_connection((host, port), timeout=timeout)
                sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
                sock.sendall(_PREAMBLE.pack(_PREAMBLE_MAGIC, self.locality))
                self._register_link(peer, sock)
                return
            except OSError as exc:
                last_error = exc
                time.sleep(_CONNECT_RETRY_S)
        raise BootError(f"cannot reach locality {peer} at {host}:{port}: {last_error}")

    def _register_link(self, peer: int, sock: socket.socket) -> _Link:
        link = _Link(peer, sock)
        with self._lock:
            if peer in self._links:
                # Should not happen under the higher-connects-to-lower rule.
                sock.close()
                raise TransportError(f"duplicate link to locality {peer}")
            self._links[peer] = link
        for target, name in ((self._writer_loop, "wr"), (self._reader_loop, "rd")):
            t = threading.Thread(target=target, args=(link,), name=f"amt-{name}-{self.locality}-{peer}", daemon=True)
            self._threads.append(t)
            t.start()
        return link

    def _accept_loop(self) -> None:
        listener = self._listener
        while True:
            try:
                sock, _addr = listener.accept()
            except OSError:
                return  # listener closed
            try:
                magic, peer = _PREAMBLE.unpack(_recv_exact(sock, _PREAMBLE.size))
                if magic != _PREAMBLE_MAGIC:
                    raise ConnectionError(f"bad preamble {magic!r}")
                sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
                self._register_link(peer, sock)
            except (ConnectionError, TransportError, OSError) as exc:
                log.warning("rejected inbound connection: %s", exc)
                sock.close()

    # -- data path --------------------------------------------------------------

    def send(self, peer: int, frame: bytes) -> None:
        link = self._wait_link(peer)
        if link is None or not link.alive:
            raise TransportError(f"no connection to locality {peer}")
        link.sendq.put(frame)

    def _wait_link(self, peer: int, timeout: float = 10.0) -> _Link | None:
        with self._lock:
            if peer in self._dead:
                return None
            link = self._links.get(peer)
        if link is not None:
            return link
        if peer not in self.table or peer == self.locality:
            return None
        # The peer may still be booting; lower-id side waits for the inbound
        # connection, higher-id side dials out.  Dead peers never reconnect.
        if peer < self.locality:
            try:
                self._connect(peer, timeout)
            except BootError as exc:
                raise TransportError(str(exc)) from exc
            with self._lock:
                return self._links.get(peer)
        deadline = time.monotonic() + timeout
        while time.monotonic() < deadline:
            with self._lock:
                if peer in self._dead:
                    return None
                link = self._links.get(peer)
            if link is not None:
                return link
            if self._closing:
                return None
            time.sleep(0.01)
        return None

    def _writer_loop(self, link: _Link) -> None:
        while True:
            frame = link.sendq.get()
            if frame is None:
                return
            try:
                link.sock.sendall(frame)
            except OSError:
                self._link_down(link)
                return

    def _reader_loop(self, link: _Link) -> None:
        sock = link.sock
        try:
            while True:
                header = _recv_exact(sock, HEADER_LEN)
                payload_len = read_header(header)
                payload = _recv_exact(sock, payload_len) if payload_len else b""
                self.on_frame(link.peer, header + payload)
        except (ConnectionError, OSError):
            self._link_down(link)
        except Exception as exc:  # malformed stream: fail the link loudly
            log.error("protocol error on link to %d: %s", link.peer, exc)
            self._link_down(link)

    def _link_down(self, link: _Link) -> None:
        with self._lock:
            was_alive = link.alive
            link.alive = False
            self._links.pop(link.peer, None)
            closing = self._closing
            if not closing:
                self._dead.add(link.peer)
        if not was_alive:
            return
        _teardown(link.sock)
        link.sendq.put(None)
        if not closing:
            self.on_peer_down(link.peer)

    # -- teardown ---------------------------------------------------------------

    def close(self) -> None:
        with self._lock:
            self._closing = True
            links = list(self._links.values())
        self._close_listener()
        for link in links:
            link.sendq.put(None)
        time.sleep(0.05)  # let writers flush their queues
        for link in links:
            self._link_down(link)

    def kill(self) -> None:
        """Abrupt teardown: reset every socket with no goodbye (fault injection)."""
        with self._lock:
            self._closing = True
            links = list(self._links.values())
        self._close_listener()
        for link in links:
            try:
                link.sock.setsockopt(socket.SOL_SOCKET, socket.SO_LINGER, struct.pack("ii", 1, 0))
            except OSError:
                pass
            _teardown(link.sock)
            link.sendq.put(None)

    def _close_listener(self) -> None:
        if self._listener is None:
            return
        # shutdown() wakes a thread blocked in accept(); plain close() on
        # Linux leaves it parked while the in-progress call pins the socket.
        try:
            self._listener.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        try:
            self._listener.close()
        except OSError:
            pass

    def peers(self) -> list[int]:
        with self._lock:
            return sorted(self._links)
