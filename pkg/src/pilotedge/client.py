"""Client-side access to a broker and parameter store.

Two transports share one API surface:

* ``inproc://<name>`` resolves to shared in-process objects through a
  registry. No sockets, no copies beyond what the broker itself does.
* ``tcp://host:port`` speaks the binary framing to a BrokerServer. Each
  client owns one socket and serializes its requests on it.

WAN emulation hooks in on the client: when a LinkTable is supplied, the
outbound frame is held according to the link matching (src_tier,
dst_tier) and the response according to the reverse link, so shaped
latency and bandwidth show up in end-to-end timings without any help
from the server.
"""

from __future__ import annotations

import socket
import struct
import threading
from typing import Dict, List, Optional, Tuple

from . import wire
from .broker import Broker, ConsumerGroup, Offset, Record
from .errors import BrokerUnreachable, PilotEdgeError
from .netem import LinkShaper, LinkTable
from .params import ParamStore
from .server import read_frame

_INPROC: Dict[str, Tuple[Broker, ParamStore]] = {}
_INPROC_LOCK = threading.Lock()


def register_inproc(name: str, broker: Broker, params: ParamStore) -> str:
    """Expose a broker/param-store pair at ``inproc://<name>``."""
    with _INPROC_LOCK:
        _INPROC[name] = (broker, params)
    return f"inproc://{name}"


def unregister_inproc(name: str) -> None:
    with _INPROC_LOCK:
        _INPROC.pop(name, None)


def _resolve_inproc(endpoint: str) -> Tuple[Broker, ParamStore]:
    name = endpoint[len("inproc://"):]
    with _INPROC_LOCK:
        pair = _INPROC.get(name)
    if pair is None:
        raise BrokerUnreachable(f"no in-process service registered at {endpoint}")
    return pair


class BrokerClient:
    """Abstract broker API. Concrete clients differ only in transport."""

    def create_topic(self, topic: str, partitions: int, retention: int = 4096):
        raise NotImplementedError

    def produce(self, topic: str, partition: int, record: Record) -> Offset:
        raise NotImplementedError

    def fetch(self, topic: str, partition: int, from_offset: int,
              max_records: int, timeout: float = 0.0) -> List[Record]:
        raise NotImplementedError

    def commit(self, group: str, topic: str, partition: int, offset: int) -> None:
        raise NotImplementedError

    def assign(self, group: str, topic: str, members: List[str]) -> Dict[int, str]:
        raise NotImplementedError

    def close(self) -> None:
        pass


class ParamClient:
    """Abstract parameter-store API."""

    def put_model(self, key: str, blob: bytes, expected_version: Optional[int] = None) -> int:
        raise NotImplementedError

    def get_model(self, key: str, min_version: Optional[int] = None,
                  timeout: float = 0.0) -> Tuple[bytes, int]:
        raise NotImplementedError

    def close(self) -> None:
        pass


class InprocBrokerClient(BrokerClient):
    def __init__(self, endpoint: str):
        self._broker, _ = _resolve_inproc(endpoint)

    def create_topic(self, topic, partitions, retention=4096):
        return self._broker.create_topic(topic, partitions, retention)

    def produce(self, topic, partition, record):
        return self._broker.produce(topic, partition, record)

    def fetch(self, topic, partition, from_offset, max_records, timeout=0.0):
        return self._broker.fetch(topic, partition, from_offset, max_records, timeout=timeout)

    def commit(self, group, topic, partition, offset):
        self._broker.commit_offset(group, Offset(topic, partition, offset))

    def assign(self, group, topic, members):
        return self._broker.assign_partitions(ConsumerGroup(group, list(members)), topic)


class InprocParamClient(ParamClient):
    def __init__(self, endpoint: str):
        _, self._params = _resolve_inproc(endpoint)

    def put_model(self, key, blob, expected_version=None):
        return self._params.put_model(key, blob, expected_version)

    def get_model(self, key, min_version=None, timeout=0.0):
        return self._params.get_model(key, min_version, timeout=timeout)


def _parse_tcp(endpoint: str) -> Tuple[str, int]:
    rest = endpoint[len("tcp://"):]
    host, _, port = rest.rpartition(":")
    return host, int(port)


class _TCPTransport:
    """One socket plus optional request/response shaping.

    All request/response exchanges are serialized under a lock, so a
    transport can be shared by the broker and param clients of one
    logical peer without interleaving frames.
    """

    def __init__(self, endpoint: str, links: Optional[LinkTable] = None,
                 src_tier: str = "", dst_tier: str = ""):
        host, port = _parse_tcp(endpoint)
        try:
            self._sock = socket.create_connection((host, port), timeout=None)
        except OSError as exc:
            raise BrokerUnreachable(f"cannot connect to {endpoint}: {exc}") from exc
        self._sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        self._lock = threading.Lock()
        self._forward: Optional[LinkShaper] = None
        self._reverse: Optional[LinkShaper] = None
        if links is not None and src_tier and dst_tier:
            self._forward = links.lookup(src_tier, dst_tier)
            self._reverse = links.lookup(dst_tier, src_tier)

    def request(self, message) -> object:
        with self._lock:
            frame = wire.encode_message(message)
            if self._forward is not None:
                self._forward.hold(len(frame))
            try:
                self._sock.sendall(frame)
                reply_frame = read_frame(self._sock)
            except (OSError, EOFError) as exc:
                raise BrokerUnreachable(f"transport failed: {exc}") from exc
            if self._reverse is not None:
                self._reverse.hold(len(reply_frame))
        reply = wire.decode_message(reply_frame)
        if isinstance(reply, wire.ErrorResp):
            raise wire.decode_error(reply)
        return reply

    def close(self) -> None:
        try:
            self._sock.close()
        except OSError:
            pass


class TCPBrokerClient(BrokerClient):
    def __init__(self, endpoint: str, links: Optional[LinkTable] = None,
                 src_tier: str = "", dst_tier: str = "",
                 transport: Optional[_TCPTransport] = None):
        self._transport = transport or _TCPTransport(endpoint, links, src_tier, dst_tier)

    def create_topic(self, topic, partitions, retention=4096):
        self._transport.request(wire.CreateTopicReq(topic, partitions, retention))

    def produce(self, topic, partition, record):
        resp = self._transport.request(wire.ProduceReq(topic, partition, record))
        return Offset(topic, partition, resp.offset)

    def fetch(self, topic, partition, from_offset, max_records, timeout=0.0):
        resp = self._transport.request(
            wire.FetchReq(topic, partition, from_offset, max_records, int(timeout * 1000))
        )
        return list(resp.records)

    def commit(self, group, topic, partition, offset):
        self._transport.request(wire.CommitReq(group, topic, partition, offset))

    def assign(self, group, topic, members):
        resp = self._transport.request(wire.AssignReq(group, topic, tuple(members)))
        return dict(resp.assignment)

    def close(self):
        self._transport.close()


class TCPParamClient(ParamClient):
    def __init__(self, endpoint: str, links: Optional[LinkTable] = None,
                 src_tier: str = "", dst_tier: str = "",
                 transport: Optional[_TCPTransport] = None):
        self._transport = transport or _TCPTransport(endpoint, links, src_tier, dst_tier)

    def put_model(self, key, blob, expected_version=None):
        req = wire.PutParamReq(
            key=key, blob=blob,
            expected_version=expected_version if expected_version is not None else 0,
            has_expected=expected_version is not None,
        )
        resp = self._transport.request(req)
        return resp.version

    def get_model(self, key, min_version=None, timeout=0.0):
        req = wire.GetParamReq(
            key=key,
            min_version=min_version if min_version is not None else 0,
            has_min=min_version is not None,
            timeout_ms=int(timeout * 1000),
        )
        resp = self._transport.request(req)
        return resp.blob, resp.version

    def close(self):
        self._transport.close()


def connect_broker(endpoint: str, links: Optional[LinkTable] = None,
                   src_tier: str = "", dst_tier: str = "") -> BrokerClient:
    """Open a broker client for either transport scheme."""
    if endpoint.startswith("inproc://"):
        return InprocBrokerClient(endpoint)
    if endpoint.startswith("tcp://"):
        return TCPBrokerClient(endpoint, links, src_tier, dst_tier)
    raise PilotEdgeError(f"unsupported endpoint scheme: {endpoint}")


def connect_params(endpoint: str, links: Optional[LinkTable] = None,
                   src_tier: str = "", dst_tier: str = "") -> ParamClient:
    """Open a parameter-store client for either transport scheme."""
    if endpoint.startswith("inproc://"):
        return InprocParamClient(endpoint)
    if endpoint.startswith("tcp://"):
        return TCPParamClient(endpoint, links, src_tier, dst_tier)
    raise PilotEdgeError(f"unsupported endpoint scheme: {endpoint}")
