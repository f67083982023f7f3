"""TCP service hosting a broker and a parameter store on one port.

One thread per connection; requests are dispatched to the in-memory
Broker/ParamStore and any runtime error travels back as a typed ERROR
frame. Endpoints look like ``tcp://127.0.0.1:4711``.
"""

from __future__ import annotations

import logging
import socket
import struct
import threading
from typing import Optional

from . import wire
from .broker import Broker, ConsumerGroup, Offset
from .errors import PilotEdgeError, TruncatedFrame
from .params import ParamStore

log = logging.getLogger(__name__)


def read_exact(sock: socket.socket, n: int) -> bytes:
    """Read exactly n bytes or raise EOFError on a closed peer."""
    chunks = []
    remaining = n
    while remaining > 0:
        chunk = sock.recv(min(remaining, 1 << 20))
        if not chunk:
            raise EOFError("peer closed connection")
        chunks.append(chunk)
        remaining -= len(chunk)
    return b"".join(chunks)


def read_frame(sock: socket.socket) -> bytes:
    """Read one full frame including its length prefix."""
    header = read_exact(sock, 4)
    (length,) = struct.unpack("<I", header)
    if length < 1 or length > wire.MAX_FRAME_BYTES:
        raise TruncatedFrame(f"frame length {length} out of bounds")
    return header + read_exact(sock, length)


class BrokerServer:
    """Serves broker ops 1-5 and parameter ops 6-7 over the shared framing."""

    def __init__(self, host: str = "127.0.0.1", port: int = 0,
                 broker: Optional[Broker] = None, params: Optional[ParamStore] = None):
        self.broker = broker if broker is not None else Broker()
        self.params = params if params is not None else ParamStore()
        self._listener = socket.create_server((host, port))
        self._host, self._port = self._listener.getsockname()[:2]
        self._accept_thread: Optional[threading.Thread] = None
        self._stop = threading.Event()
        self._conns = set()
        self._conns_lock = threading.Lock()

    @property
    def endpoint(self) -> str:
        return f"tcp://{self._host}:{self._port}"

    def start(self) -> "BrokerServer":
        self._accept_thread = threading.Thread(target=self._accept_loop, name="broker-accept", daemon=True)
        self._accept_thread.start()
        return self

    def _accept_loop(self):
        while not self._stop.is_set():
            try:
                conn, addr = self._listener.accept()
            except OSError:
                return
            conn.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
            with self._conns_lock:
                self._conns.add(conn)
            threading.Thread(
                target=self._serve_conn, args=(conn, addr), name=f"broker-conn-{addr[1]}", daemon=True
            ).start()

    def _serve_conn(self, conn: socket.socket, addr):
        try:
            while not self._stop.is_set():
                try:
                    frame = read_frame(conn)
                except (EOFError, OSError, TruncatedFrame):
                    # malformed length prefix: drop the peer, keep serving
                    return
                try:
                    request = wire.decode_message(frame)
                    response = self._dispatch(request)
                except PilotEdgeError as exc:
                    response = wire.encode_error(exc)
                except Exception as exc:  # noqa: BLE001 - surface as generic wire error
                    log.exception("unhandled error serving %s", addr)
                    response = wire.ErrorResp(code=1, message=str(exc))
                try:
                    conn.sendall(wire.encode_message(response))
                except OSError:
                    return
        finally:
            with self._conns_lock:
                self._conns.discard(conn)
            try:
                conn.close()
            except OSError:
                pass

    def _dispatch(self, request):
        if isinstance(request, wire.CreateTopicReq):
            topic = self.broker.create_topic(request.topic, request.partitions, request.retention)
            return wire.CreateTopicResp(topic.partition_count, topic.retention_records)
        if isinstance(request, wire.ProduceReq):
            offset = self.broker.produce(request.topic, request.partition, request.record)
            return wire.ProduceResp(offset.value)
        if isinstance(request, wire.FetchReq):
            records = self.broker.fetch(
                request.topic, request.partition, request.from_offset,
                request.max_records, timeout=request.timeout_ms / 1000.0,
            )
            return wire.FetchResp(tuple(records))
        if isinstance(request, wire.CommitReq):
            self.broker.commit_offset(request.group, Offset(request.topic, request.partition, request.offset))
            return wire.CommitResp()
        if isinstance(request, wire.AssignReq):
            group = ConsumerGroup(group_id=request.group, members=list(request.members))
            assignment = self.broker.assign_partitions(group, request.topic)
            return wire.AssignResp(tuple(sorted(assignment.items())))
        if isinstance(request, wire.PutParamReq):
            expected = request.expected_version if request.has_expected else None
            version = self.params.put_model(request.key, request.blob, expected)
            return wire.PutParamResp(version)
        if isinstance(request, wire.GetParamReq):
            min_version = request.min_version if request.has_min else None
            blob, version = self.params.get_model(
                request.key, min_version, timeout=request.timeout_ms / 1000.0
            )
            return wire.GetParamResp(version, blob)
        raise PilotEdgeError(f"unexpected request {type(request).__name__}")

    def stop(self) -> None:
        self._stop.set()
        try:
            self._listener.close()
        except OSError:
            pass
        with self._conns_lock:
            conns = list(self._conns)
        for conn in conns:
            try:
                conn.shutdown(socket.SHUT_RDWR)
            except OSError:
                pass
            try:
                conn.close()
            except OSError:
                pass
