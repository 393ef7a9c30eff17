"""Application-facing SDK: sessions, stub objects and the passive get path.

A stub behaves as a plain local object until it is persisted; from then on
every method call is a transparent INVOKE round-trip. The passive baseline
(`fetch_full` + client-side compute) uses the same server with GET traffic
only and performs no client-side caching, so every fetch hits the wire.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

from .engine import ByRef, ByValue, ResultPlacement, RoutineCatalog
from .errors import InvalidRequestError, NotFoundError
from .model import (
    BlockPayload,
    ClassDescriptor,
    FloatArray,
    MethodDescriptor,
    ObjectId,
    SEM_SCALAR,
    decode_payload,
)
from .tiers import TierKind
from . import wire


@dataclass
class SessionCounters:
    """Client-side view of traffic plus operation tallies."""

    bytes_sent: int = 0
    bytes_received: int = 0
    per_type: dict[int, int] = field(default_factory=dict)
    gets: int = 0
    puts: int = 0
    invokes: int = 0


class Session:
    """One client endpoint; usable from a single thread at a time."""

    def __init__(self, connection: wire.Connection, catalog: RoutineCatalog | None = None):
        self._conn = connection
        self.catalog = catalog
        self._methods: dict[tuple[str, str], MethodDescriptor] = {}
        self._tallies = SessionCounters()

    @classmethod
    def connect_loopback(cls, core: wire.ServerCore, catalog: RoutineCatalog | None = None) -> "Session":
        return cls(wire.LoopbackConnection(core), catalog)

    @classmethod
    def connect_tcp(cls, host: str, port: int, catalog: RoutineCatalog | None = None) -> "Session":
        return cls(wire.TcpConnection(host, port), catalog)

    # -- protocol operations -------------------------------------------------

    def register_class(self, desc: ClassDescriptor) -> None:
        self._conn.request(wire.MSG_REGISTER_CLASS, wire.encode_register_class(desc))

    def register_method(self, desc: MethodDescriptor) -> None:
        self._conn.request(wire.MSG_REGISTER_METHOD, wire.encode_register_method(desc))
        self._methods[(desc.class_name, desc.method_name)] = desc

    def remember_method(self, desc: MethodDescriptor) -> None:
        """Cache a descriptor registered by an earlier session on this server."""
        self._methods[(desc.class_name, desc.method_name)] = desc

    def make_persistent(self, class_name: str, payload: BlockPayload, tier: TierKind) -> ObjectId:
        _, body = self._conn.request(
            wire.MSG_MAKE_PERSISTENT, wire.encode_make_persistent(class_name, tier, payload)
        )
        self._tallies.puts += 1
        return ObjectId(body)

    def get(self, oid: ObjectId) -> BlockPayload:
        _, body = self._conn.request(wire.MSG_GET, oid.raw)
        self._tallies.gets += 1
        return decode_payload(body)

    def invoke(
        self,
        oid: ObjectId,
        method_name: str,
        args: list[ByValue | ByRef] = (),
        placement: ResultPlacement = ResultPlacement.value(),
    ):
        _, body = self._conn.request(
            wire.MSG_INVOKE, wire.encode_invoke(oid, method_name, list(args), placement)
        )
        self._tallies.invokes += 1
        return wire.decode_invoke_reply(body)

    def invoke_fma_in_place(
        self, acc: ObjectId, a: ObjectId, b: ObjectId, method_name: str = "fma"
    ) -> None:
        if acc == a or acc == b:
            raise InvalidRequestError("accumulator must be distinct from both inputs")
        self.invoke(acc, method_name, [ByRef(a), ByRef(b)])

    def delete(self, oid: ObjectId) -> None:
        self._conn.request(wire.MSG_DELETE, oid.raw)

    def flush(self, tier: TierKind | None = None) -> None:
        code = 0xFF if tier is None else int(tier)
        self._conn.request(wire.MSG_FLUSH, struct.pack("<B", code))

    def stats(self) -> wire.ServerStats:
        _, body = self._conn.request(wire.MSG_STATS, b"")
        return wire.decode_stats(body)

    def counters(self) -> SessionCounters:
        c = self._conn.counters
        return SessionCounters(
            bytes_sent=c.bytes_sent,
            bytes_received=c.bytes_received,
            per_type=dict(c.per_type),
            gets=self._tallies.gets,
            puts=self._tallies.puts,
            invokes=self._tallies.invokes,
        )

    def method_descriptor(self, class_name: str, method_name: str) -> MethodDescriptor:
        try:
            return self._methods[(class_name, method_name)]
        except KeyError:
            raise NotFoundError(
                f"method {method_name!r} of class {class_name!r} not known to this session"
            ) from None

    def close(self) -> None:
        self._conn.close()


def fetch_full(session: Session, oid: ObjectId) -> BlockPayload:
    """Passive path: transfer the whole payload to the client."""
    return session.get(oid)


class Stub:
    """Local object until persisted; transparent RPC proxy afterwards."""

    def __init__(self, session: Session, class_name: str, payload: BlockPayload):
        self._session = session
        self.class_name = class_name
        self._payload: BlockPayload | None = payload
        self._oid: ObjectId | None = None

    @property
    def is_remote(self) -> bool:
        return self._oid is not None

    @property
    def object_id(self) -> ObjectId:
        if self._oid is None:
            raise InvalidRequestError("stub is local; persist it first")
        return self._oid

    @property
    def payload(self) -> BlockPayload:
        if self._payload is None:
            raise InvalidRequestError("stub is remote; use get or call")
        return self._payload

    def persist(self, tier: TierKind) -> ObjectId:
        if self._oid is not None:
            raise InvalidRequestError("stub already persisted")
        self._oid = self._session.make_persistent(self.class_name, self._payload, tier)
        self._payload = None
        return self._oid

    def call(
        self,
        method_name: str,
        args: list[ByValue | ByRef] = (),
        placement: ResultPlacement = ResultPlacement.value(),
    ):
        desc = self._session.method_descriptor(self.class_name, method_name)
        if self._oid is not None:
            result = self._session.invoke(self._oid, method_name, list(args), placement)
            return _unwrap(result, desc)
        # local execution through the same routine catalog, zero wire traffic
        if self._session.catalog is None:
            raise InvalidRequestError("session has no local catalog for local stub calls")
        routine = self._session.catalog.get(desc.routine_key)
        resolved = []
        for arg in args:
            if isinstance(arg, ByRef):
                raise InvalidRequestError("local stub calls cannot take object references")
            resolved.append(arg.payload)
        out = routine.fn(self._payload, resolved)
        if routine.mutates and out.target_update is not None:
            self._payload = type(self._payload)(out.target_update)
        return _unwrap(out.result, desc)


def _unwrap(result, desc: MethodDescriptor):
    if result is None:
        return None
    if desc.result_schema == SEM_SCALAR and isinstance(result, FloatArray):
        return float(result.values[0])
    return result
