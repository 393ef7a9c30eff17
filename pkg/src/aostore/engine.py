"""The active heart of the store: registries, object persistence, invocation.

Registered routines execute directly over tier-resident payloads: for DRAM and
NVM-direct objects the routine sees numpy arrays aliasing the stored region
(no payload-sized copy); for Memory-Mode objects it sees the cached copy.
Results are delivered by value, stored volatile in DRAM, or stored into a
named tier. Mutating routines update their target through the tier's
write-in-place path under an exclusive per-object lock.
"""

from __future__ import annotations

import enum
import threading
import time
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import (
    DuplicateError,
    InvalidRequestError,
    NotFoundError,
    ShapeMismatchError,
    UnknownNameError,
)
from .model import (
    BlockPayload,
    ClassDescriptor,
    MethodDescriptor,
    ObjectId,
    ObjectIdFactory,
    StoredObject,
    payload_from_region,
    payload_size_bytes,
    encoded_size,
)
from .tiers import TierHandle, TierKind

SMALL_RESULT_LIMIT = 1 << 20  # return-by-value ceiling, 1 MiB


class PlacementKind(enum.IntEnum):
    RETURN_BY_VALUE = 0
    VOLATILE_DRAM = 1
    STORE_IN_TIER = 2


@dataclass(frozen=True)
class ResultPlacement:
    kind: PlacementKind
    tier: Optional[TierKind] = None

    @classmethod
    def value(cls) -> "ResultPlacement":
        return cls(PlacementKind.RETURN_BY_VALUE)

    @classmethod
    def volatile(cls) -> "ResultPlacement":
        return cls(PlacementKind.VOLATILE_DRAM)

    @classmethod
    def store_in(cls, tier: TierKind) -> "ResultPlacement":
        return cls(PlacementKind.STORE_IN_TIER, tier)


@dataclass(frozen=True)
class ByValue:
    payload: BlockPayload


@dataclass(frozen=True)
class ByRef:
    object_id: ObjectId


@dataclass
class RoutineOutput:
    """What a routine produced: an optional result payload and, for mutating
    routines, the full replacement values for the target."""

    result: Optional[BlockPayload] = None
    target_update: Optional[np.ndarray] = None


@dataclass(frozen=True)
class Routine:
    key: str
    fn: Callable[[BlockPayload, list[BlockPayload]], RoutineOutput]
    mutates: bool = False


class RoutineCatalog:
    """Server-side catalog of executable routines, keyed by routine_key."""

    def __init__(self, routines: list[Routine] | None = None):
        self._routines: dict[str, Routine] = {}
        for r in routines or []:
            self.register(r)

    def register(self, routine: Routine) -> None:
        if routine.key in self._routines:
            raise DuplicateError(f"routine {routine.key!r} already in catalog")
        self._routines[routine.key] = routine

    def get(self, key: str) -> Routine:
        try:
            return self._routines[key]
        except KeyError:
            raise UnknownNameError(f"unknown routine {key!r}") from None

    def has(self, key: str) -> bool:
        return key in self._routines

    def keys(self) -> list[str]:
        return sorted(self._routines)


class _RWLock:
    """Shared/exclusive lock; writers wait for readers, readers for a writer."""

    def __init__(self):
        self._cond = threading.Condition()
        self._readers = 0
        self._writer = False

    def acquire_shared(self) -> None:
        with self._cond:
            while self._writer:
                self._cond.wait()
            self._readers += 1

    def release_shared(self) -> None:
        with self._cond:
            self._readers -= 1
            if self._readers == 0:
                self._cond.notify_all()

    def acquire_exclusive(self) -> None:
        with self._cond:
            while self._writer or self._readers:
                self._cond.wait()
            self._writer = True

    def release_exclusive(self) -> None:
        with self._cond:
            self._writer = False
            self._cond.notify_all()


@dataclass
class _ObjectMeta:
    class_name: Optional[str]
    tier: TierKind
    variant: Optional[int]
    shape: Optional[tuple[int, ...]]
    read_count: int = 0
    write_count: int = 0
    lock: _RWLock = field(default_factory=_RWLock)


@dataclass(slots=True)
class OpRecord:
    """One engine operation and the tier traffic it caused.

    ``op`` is "invoke" for method execution and a double-underscore name for
    the plumbing operations (__persist__, __get__, __delete__, __flush__), so
    the conservation law (sum of record deltas == tier counter totals) can be
    checked over every byte moved.
    """

    op: str
    object_id: Optional[ObjectId]
    method_name: str
    args_bytes: int
    result_bytes: int
    input_bytes: int
    method_ns: int
    wall_ns: int
    tier_deltas: dict


class Engine:
    """Single-node active object store engine over a set of open tiers."""

    def __init__(
        self,
        tiers: dict[TierKind, TierHandle],
        catalog: RoutineCatalog,
        id_factory: ObjectIdFactory | None = None,
        small_result_limit: int = SMALL_RESULT_LIMIT,
    ):
        self._tiers = dict(tiers)
        self._catalog = catalog
        self._ids = id_factory or ObjectIdFactory()
        self._small_result_limit = small_result_limit
        self._classes: dict[str, ClassDescriptor] = {}
        self._methods: dict[tuple[str, str], MethodDescriptor] = {}
        self._objects: dict[ObjectId, _ObjectMeta] = {}
        self._records: list[OpRecord] = []
        self._lock = threading.Lock()
        # Adopt objects recovered from persistent arenas; their schema was not
        # persisted, so they are readable at the byte level only.
        for kind, handle in self._tiers.items():
            for oid in handle.ids():
                self._objects[oid] = _ObjectMeta(None, kind, None, None)

    # -- registries ----------------------------------------------------------

    def register_class(self, desc: ClassDescriptor) -> None:
        with self._lock:
            if desc.class_name in self._classes:
                raise DuplicateError(f"class {desc.class_name!r} already registered")
            self._classes[desc.class_name] = desc

    def register_method(self, desc: MethodDescriptor) -> None:
        with self._lock:
            if desc.class_name not in self._classes:
                raise UnknownNameError(f"unknown class {desc.class_name!r}")
            key = (desc.class_name, desc.method_name)
            if key in self._methods:
                raise DuplicateError(f"method {key} already registered")
            routine = self._catalog.get(desc.routine_key)
            if routine.mutates != desc.mutates_target:
                raise InvalidRequestError(
                    f"method {key} declares mutates_target={desc.mutates_target} but "
                    f"routine {desc.routine_key!r} has mutates={routine.mutates}"
                )
            self._methods[key] = desc

    def list_classes(self) -> list[str]:
        with self._lock:
            return sorted(self._classes)

    def has_method(self, class_name: str, method_name: str) -> bool:
        with self._lock:
            return (class_name, method_name) in self._methods

    def tier(self, kind: TierKind) -> TierHandle:
        try:
            return self._tiers[kind]
        except KeyError:
            raise InvalidRequestError(f"tier {kind.name} is not open") from None

    @property
    def tiers(self) -> dict[TierKind, TierHandle]:
        return dict(self._tiers)

    # -- record keeping --------------------------------------------------------

    def _counter_snapshot(self) -> dict:
        snap = {}
        for kind, handle in self._tiers.items():
            for medium, counters in handle.media_counters().items():
                snap[(kind, medium)] = counters.raw()
        return snap

    @staticmethod
    def _delta(before: dict, after: dict) -> dict:
        out = {}
        for key, post in after.items():
            pre = before.get(key, (0,) * 6)
            d = tuple(p - q for p, q in zip(post, pre))
            if any(d):
                out[key] = d
        return out

    def _record(self, rec: OpRecord) -> None:
        with self._lock:
            self._records.append(rec)

    @property
    def record_count(self) -> int:
        with self._lock:
            return len(self._records)

    def records(self, start: int = 0) -> list[OpRecord]:
        with self._lock:
            return self._records[start:]

    # -- object lifecycle ------------------------------------------------------

    def make_persistent(
        self, class_name: str, payload: BlockPayload, tier: TierKind
    ) -> ObjectId:
        with self._lock:
            if class_name not in self._classes:
                raise UnknownNameError(f"unknown class {class_name!r}")
        handle = self.tier(tier)
        oid = self._ids.new_object_id()
        t0 = time.perf_counter_ns()
        before = self._counter_snapshot()
        handle.store(oid, payload.data_bytes())
        meta = _ObjectMeta(class_name, tier, payload.tag, payload.shape_fields())
        with self._lock:
            self._objects[oid] = meta
        self._record(
            OpRecord(
                op="__persist__",
                object_id=oid,
                method_name="",
                args_bytes=payload_size_bytes(payload),
                result_bytes=0,
                input_bytes=0,
                method_ns=0,
                wall_ns=time.perf_counter_ns() - t0,
                tier_deltas=self._delta(before, self._counter_snapshot()),
            )
        )
        return oid

    def _meta(self, oid: ObjectId) -> _ObjectMeta:
        with self._lock:
            try:
                return self._objects[oid]
            except KeyError:
                raise NotFoundError(f"unknown object {oid.hex()}") from None

    def _payload_view(self, meta: _ObjectMeta, oid: ObjectId) -> BlockPayload:
        if meta.variant is None or meta.shape is None:
            raise InvalidRequestError(
                f"object {oid.hex()} was recovered without schema; only raw reads apply"
            )
        view = self.tier(meta.tier).read_view(oid)
        return payload_from_region(meta.variant, meta.shape, view)

    def get_object(self, oid: ObjectId) -> BlockPayload:
        meta = self._meta(oid)
        meta.lock.acquire_shared()
        t0 = time.perf_counter_ns()
        before = self._counter_snapshot()
        try:
            src = self._payload_view(meta, oid)
            payload = _copy_payload(src)
            with self._lock:
                meta.read_count += 1
        finally:
            meta.lock.release_shared()
        self._record(
            OpRecord(
                op="__get__",
                object_id=oid,
                method_name="",
                args_bytes=0,
                result_bytes=payload_size_bytes(payload),
                input_bytes=payload_size_bytes(payload),
                method_ns=0,
                wall_ns=time.perf_counter_ns() - t0,
                tier_deltas=self._delta(before, self._counter_snapshot()),
            )
        )
        return payload

    def delete_object(self, oid: ObjectId) -> None:
        meta = self._meta(oid)
        meta.lock.acquire_exclusive()
        t0 = time.perf_counter_ns()
        before = self._counter_snapshot()
        try:
            self.tier(meta.tier).free(oid)
            with self._lock:
                del self._objects[oid]
        finally:
            meta.lock.release_exclusive()
        self._record(
            OpRecord(
                op="__delete__",
                object_id=oid,
                method_name="",
                args_bytes=0,
                result_bytes=0,
                input_bytes=0,
                method_ns=0,
                wall_ns=time.perf_counter_ns() - t0,
                tier_deltas=self._delta(before, self._counter_snapshot()),
            )
        )

    def flush(self, tier: TierKind | None = None) -> None:
        t0 = time.perf_counter_ns()
        before = self._counter_snapshot()
        kinds = [tier] if tier is not None else list(self._tiers)
        for kind in kinds:
            self.tier(kind).flush()
        self._record(
            OpRecord(
                op="__flush__",
                object_id=None,
                method_name="",
                args_bytes=0,
                result_bytes=0,
                input_bytes=0,
                method_ns=0,
                wall_ns=time.perf_counter_ns() - t0,
                tier_deltas=self._delta(before, self._counter_snapshot()),
            )
        )

    # -- invocation --------------------------------------------------------------

    def invoke(
        self,
        oid: ObjectId,
        method_name: str,
        args: "list[ByValue | ByRef]" = (),
        placement: ResultPlacement = ResultPlacement.value(),
    ):
        """Execute a registered method against the tier-resident payload.

        Returns the result payload (RETURN_BY_VALUE), the new ObjectId
        (VOLATILE_DRAM / STORE_IN_TIER), or None for mutating routines that
        produce no result.
        """
        t_start = time.perf_counter_ns()
        meta = self._meta(oid)
        if meta.class_name is None:
            raise UnknownNameError(f"object {oid.hex()} has no registered class")
        with self._lock:
            desc = self._methods.get((meta.class_name, method_name))
        if desc is None:
            raise UnknownNameError(
                f"method {method_name!r} not registered for class {meta.class_name!r}"
            )
        routine = self._catalog.get(desc.routine_key)
        if len(args) != len(desc.arg_schema):
            raise ShapeMismatchError(
                f"method {method_name!r} expects {len(desc.arg_schema)} args, got {len(args)}"
            )

        ref_metas: list[tuple[ObjectId, _ObjectMeta]] = []
        for arg in args:
            if isinstance(arg, ByRef):
                if routine.mutates and arg.object_id == oid:
                    raise InvalidRequestError(
                        "argument aliases the mutation target; pass distinct objects"
                    )
                ref_metas.append((arg.object_id, self._meta(arg.object_id)))

        # Deadlock-free ordering: all locks acquired sorted by object id.
        plan = [(oid, meta, routine.mutates)] + [(i, m, False) for i, m in ref_metas]
        plan.sort(key=lambda item: item[0].raw)
        acquired: list[tuple[_ObjectMeta, bool]] = []
        before = self._counter_snapshot()
        try:
            for _, m, exclusive in plan:
                if exclusive:
                    m.lock.acquire_exclusive()
                else:
                    m.lock.acquire_shared()
                acquired.append((m, exclusive))

            target = self._payload_view(meta, oid)
            resolved: list[BlockPayload] = []
            input_bytes = 0 if routine.mutates else payload_size_bytes(target)
            args_bytes = 0
            ref_iter = iter(ref_metas)
            for arg, schema in zip(args, desc.arg_schema):
                if isinstance(arg, ByValue):
                    self._check_schema(arg.payload, schema, method_name)
                    resolved.append(arg.payload)
                    args_bytes += encoded_size(arg.payload)
                else:
                    ref_id, ref_meta = next(ref_iter)
                    view = self._payload_view(ref_meta, ref_id)
                    self._check_schema(view, schema, method_name)
                    resolved.append(view)
                    input_bytes += payload_size_bytes(view)
                    args_bytes += 16
                    with self._lock:
                        ref_meta.read_count += 1
            if not routine.mutates:
                with self._lock:
                    meta.read_count += 1

            t0 = time.perf_counter_ns()
            out = routine.fn(target, resolved)
            method_ns = time.perf_counter_ns() - t0

            if routine.mutates:
                if out.target_update is None:
                    raise InvalidRequestError(
                        f"mutating routine {routine.key!r} returned no target update"
                    )
                update = np.ascontiguousarray(out.target_update)
                self.tier(meta.tier).write_in_place(oid, 0, update.tobytes())
                with self._lock:
                    meta.write_count += 1

            result_value, result_bytes = self._place_result(out.result, meta, placement)
        finally:
            for m, exclusive in reversed(acquired):
                if exclusive:
                    m.lock.release_exclusive()
                else:
                    m.lock.release_shared()

        self._record(
            OpRecord(
                op="invoke",
                object_id=oid,
                method_name=method_name,
                args_bytes=args_bytes,
                result_bytes=result_bytes,
                input_bytes=input_bytes,
                method_ns=method_ns,
                wall_ns=time.perf_counter_ns() - t_start,
                tier_deltas=self._delta(before, self._counter_snapshot()),
            )
        )
        return result_value

    def invoke_fma_in_place(
        self,
        acc_id: ObjectId,
        a_id: ObjectId,
        b_id: ObjectId,
        method_name: str = "fma",
    ) -> None:
        """acc <- acc + a @ b, written through acc's tier region in place."""
        if acc_id == a_id or acc_id == b_id:
            raise InvalidRequestError("accumulator must be distinct from both inputs")
        for oid in (acc_id, a_id, b_id):
            meta = self._meta(oid)
            if meta.variant is not None and meta.variant != 3:  # TAG_SUBMATRIX
                raise ShapeMismatchError(
                    f"object {oid.hex()} is not a submatrix; in-place FMA needs k x k blocks"
                )
        self.invoke(acc_id, method_name, [ByRef(a_id), ByRef(b_id)])

    @staticmethod
    def _check_schema(payload: BlockPayload, schema: str, method_name: str) -> None:
        if schema and schema != payload.semantic:
            raise ShapeMismatchError(
                f"method {method_name!r} expects {schema!r} argument, got {payload.semantic!r}"
            )

    def _place_result(
        self,
        result: Optional[BlockPayload],
        target_meta: _ObjectMeta,
        placement: ResultPlacement,
    ):
        if result is None:
            return None, 0
        size = encoded_size(result)
        if placement.kind == PlacementKind.RETURN_BY_VALUE:
            if size > self._small_result_limit:
                raise InvalidRequestError(
                    f"result of {size} bytes exceeds the {self._small_result_limit}-byte "
                    f"return-by-value limit; use a stored placement"
                )
            return result, size
        tier = TierKind.DRAM if placement.kind == PlacementKind.VOLATILE_DRAM else placement.tier
        if tier is None:
            raise InvalidRequestError("STORE_IN_TIER placement needs a tier")
        handle = self.tier(tier)
        new_id = self._ids.new_object_id()
        handle.store(new_id, result.data_bytes())
        with self._lock:
            self._objects[new_id] = _ObjectMeta(
                target_meta.class_name, tier, result.tag, result.shape_fields()
            )
        return new_id, 16

    # -- introspection -------------------------------------------------------------

    def describe_object(self, oid: ObjectId) -> StoredObject:
        meta = self._meta(oid)
        payload = self.get_object(oid)
        return StoredObject(
            id=oid,
            class_name=meta.class_name,
            payload=payload,
            tier=meta.tier,
            read_count=meta.read_count,
            write_count=meta.write_count,
        )

    def read_counts(self) -> dict[ObjectId, int]:
        with self._lock:
            return {oid: m.read_count for oid, m in self._objects.items()}

    def object_ids(self) -> list[ObjectId]:
        with self._lock:
            return list(self._objects)

    def object_tier(self, oid: ObjectId) -> TierKind:
        return self._meta(oid).tier

    def close(self) -> None:
        for handle in self._tiers.values():
            handle.close()


def _copy_payload(p: BlockPayload) -> BlockPayload:
    cls = type(p)
    return cls(np.array(p.values, dtype=p.values.dtype, copy=True))
