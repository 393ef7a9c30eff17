"""Emulated memory tiers with exact byte accounting.

Three tier kinds:

* ``DRAM`` -- process-heap tier, volatile.
* ``NVM_DIRECT`` -- memory-mapped arena file with zero-copy views and
  clean-close durability (byte-addressable persistent memory analogue).
* ``MEMORY_MODE`` -- arena file fronted by a transparent whole-object LRU
  cache; the arena is reinitialized empty on every open, so the tier is
  volatile across restarts.

Arena file format (little-endian):

    magic "AOSA" (4) | version u16 | capacity u64 | dir_offset u64
    <data region of `capacity` bytes>
    directory at dir_offset: count u32, then per entry
        object id 16 bytes | offset u64 | length u64

Region offsets are relative to the start of the data region. The directory is
rewritten on flush/close. Timing is never simulated by sleeping; instead every
handle derives a ``modeled_time_ns`` as the exact rational dot product of its
integer traffic counters with the configured :class:`CostModel`.
"""

from __future__ import annotations

import enum
import os
import mmap
import struct
import threading
from collections import OrderedDict
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

from .errors import ArenaError, CapacityError, InvalidRequestError, NotFoundError
from .model import ObjectId

ARENA_MAGIC = b"AOSA"
ARENA_VERSION = 1
_HEADER = struct.Struct("<4sHQQ")
_DIR_COUNT = struct.Struct("<I")
_DIR_ENTRY = struct.Struct("<16sQQ")


class TierKind(enum.IntEnum):
    DRAM = 1
    NVM_DIRECT = 2
    MEMORY_MODE = 3


MEDIA_DRAM = "dram"
MEDIA_NVM = "nvm"


def _as_fraction(value) -> Fraction:
    # Fraction(str(float)) keeps "0.01" exactly 1/100 instead of the binary double.
    if isinstance(value, float):
        return Fraction(str(value))
    return Fraction(value)


@dataclass(frozen=True)
class CostModel:
    """Per-byte and per-operation costs, exact rationals (ns units).

    Default ordering follows the qualitative hardware behaviour: NVM writes
    cost more than NVM reads, which cost more than DRAM accesses.
    """

    dram_read_ns_per_byte: Fraction = Fraction(1, 100)
    dram_write_ns_per_byte: Fraction = Fraction(1, 100)
    nvm_read_ns_per_byte: Fraction = Fraction(3, 100)
    nvm_write_ns_per_byte: Fraction = Fraction(1, 10)
    per_op_latency_ns: Fraction = Fraction(1000)

    @classmethod
    def create(cls, **overrides) -> "CostModel":
        base = {
            "dram_read_ns_per_byte": Fraction(1, 100),
            "dram_write_ns_per_byte": Fraction(1, 100),
            "nvm_read_ns_per_byte": Fraction(3, 100),
            "nvm_write_ns_per_byte": Fraction(1, 10),
            "per_op_latency_ns": Fraction(1000),
        }
        for key, value in overrides.items():
            if key not in base:
                raise InvalidRequestError(f"unknown cost model field {key!r}")
            frac = _as_fraction(value)
            if frac < 0:
                raise InvalidRequestError(f"cost model field {key!r} must be non-negative")
            base[key] = frac
        return cls(**base)

    def rates_for(self, medium: str) -> tuple[Fraction, Fraction]:
        if medium == MEDIA_DRAM:
            return self.dram_read_ns_per_byte, self.dram_write_ns_per_byte
        if medium == MEDIA_NVM:
            return self.nvm_read_ns_per_byte, self.nvm_write_ns_per_byte
        raise InvalidRequestError(f"unknown medium {medium!r}")


DEFAULT_COST_MODEL = CostModel()


@dataclass(frozen=True)
class TierCounters:
    """Monotone traffic counters for one medium, plus derived modeled time."""

    bytes_read: int = 0
    bytes_written: int = 0
    cache_hits: int = 0
    cache_misses: int = 0
    read_ops: int = 0
    write_ops: int = 0
    modeled_time_ns: Fraction = Fraction(0)

    def raw(self) -> tuple[int, int, int, int, int, int]:
        return (
            self.bytes_read,
            self.bytes_written,
            self.cache_hits,
            self.cache_misses,
            self.read_ops,
            self.write_ops,
        )


def modeled_time_ns(counters: TierCounters, medium: str, cost: CostModel) -> Fraction:
    """Exact modeled cost of the counter vector under ``cost``; the tier
    handles compute their own snapshots with this same function, so the law
    ``modeled_time == dot(counters, cost)`` holds by construction and is
    recomputable by callers."""
    read_rate, write_rate = cost.rates_for(medium)
    return (
        counters.bytes_read * read_rate
        + counters.bytes_written * write_rate
        + (counters.read_ops + counters.write_ops) * cost.per_op_latency_ns
    )


class _MediumCounters:
    __slots__ = ("bytes_read", "bytes_written", "cache_hits", "cache_misses", "read_ops", "write_ops")

    def __init__(self):
        self.bytes_read = 0
        self.bytes_written = 0
        self.cache_hits = 0
        self.cache_misses = 0
        self.read_ops = 0
        self.write_ops = 0

    def snapshot(self, medium: str, cost: CostModel) -> TierCounters:
        plain = TierCounters(
            self.bytes_read,
            self.bytes_written,
            self.cache_hits,
            self.cache_misses,
            self.read_ops,
            self.write_ops,
        )
        return TierCounters(*plain.raw(), modeled_time_ns=modeled_time_ns(plain, medium, cost))


@dataclass(frozen=True)
class RegionRef:
    tier: TierKind
    offset: int
    length: int


@dataclass(frozen=True)
class ArenaConfig:
    """Configuration for opening a tier handle."""

    path: str | os.PathLike | None = None
    capacity_bytes: int = 1 << 30
    cache_capacity_bytes: int = 0
    cost_model: CostModel = field(default_factory=CostModel)

    def __post_init__(self) -> None:
        if self.capacity_bytes <= 0:
            raise InvalidRequestError("capacity_bytes must be positive")


class TierHandle:
    """Common surface of the three tier implementations."""

    kind: TierKind

    def __init__(self, config: ArenaConfig):
        self._config = config
        self._cost = config.cost_model
        self._lock = threading.Lock()
        self._dir: dict[ObjectId, tuple[int, int]] = {}

    # -- directory ---------------------------------------------------------

    def contains(self, oid: ObjectId) -> bool:
        with self._lock:
            return oid in self._dir

    def ids(self) -> list[ObjectId]:
        with self._lock:
            return list(self._dir)

    def size_of(self, oid: ObjectId) -> int:
        with self._lock:
            return self._entry(oid)[1]

    def _entry(self, oid: ObjectId) -> tuple[int, int]:
        try:
            return self._dir[oid]
        except KeyError:
            raise NotFoundError(f"object {oid.hex()} not in {self.kind.name} tier") from None

    # -- operations (implemented by subclasses) -----------------------------

    def store(self, oid: ObjectId, data: bytes) -> RegionRef:
        raise NotImplementedError

    def read_view(self, oid: ObjectId) -> memoryview:
        raise NotImplementedError

    def write_in_place(self, oid: ObjectId, offset: int, data: bytes) -> None:
        raise NotImplementedError

    def free(self, oid: ObjectId) -> None:
        raise NotImplementedError

    def flush(self) -> None:
        raise NotImplementedError

    def close(self) -> None:
        raise NotImplementedError

    def counters(self) -> TierCounters:
        raise NotImplementedError

    def media_counters(self) -> dict[str, TierCounters]:
        raise NotImplementedError

    @property
    def capacity_bytes(self) -> int:
        return self._config.capacity_bytes

    @property
    def cost_model(self) -> CostModel:
        return self._cost

    @property
    def used_bytes(self) -> int:
        with self._lock:
            return sum(length for _, length in self._dir.values())

    @property
    def free_bytes(self) -> int:
        return self.capacity_bytes - self.used_bytes

    def _check_range(self, oid: ObjectId, offset: int, length: int) -> tuple[int, int]:
        base, size = self._entry(oid)
        if offset < 0 or length < 0 or offset + length > size:
            raise InvalidRequestError(
                f"write range [{offset}, {offset + length}) overflows object of {size} bytes"
            )
        return base, size


class DramTier(TierHandle):
    """Process-memory tier; regions are plain bytearrays."""

    kind = TierKind.DRAM

    def __init__(self, config: ArenaConfig):
        super().__init__(config)
        self._bufs: dict[ObjectId, bytearray] = {}
        self._counters = _MediumCounters()
        self._next_offset = 0
        self._used = 0

    def store(self, oid: ObjectId, data: bytes) -> RegionRef:
        with self._lock:
            if oid in self._dir:
                raise InvalidRequestError(f"object {oid.hex()} already stored")
            if self._used + len(data) > self.capacity_bytes:
                raise CapacityError(
                    f"DRAM tier out of space: need {len(data)}, free {self.capacity_bytes - self._used}"
                )
            offset = self._next_offset
            self._next_offset += len(data)
            self._used += len(data)
            self._bufs[oid] = bytearray(data)
            self._dir[oid] = (offset, len(data))
            self._counters.bytes_written += len(data)
            self._counters.write_ops += 1
            return RegionRef(self.kind, offset, len(data))

    def read_view(self, oid: ObjectId) -> memoryview:
        with self._lock:
            _, size = self._entry(oid)
            self._counters.bytes_read += size
            self._counters.read_ops += 1
            return memoryview(self._bufs[oid])

    def write_in_place(self, oid: ObjectId, offset: int, data: bytes) -> None:
        with self._lock:
            self._check_range(oid, offset, len(data))
            self._bufs[oid][offset : offset + len(data)] = data
            self._counters.bytes_written += len(data)
            self._counters.write_ops += 1

    def free(self, oid: ObjectId) -> None:
        with self._lock:
            _, size = self._entry(oid)
            del self._dir[oid]
            del self._bufs[oid]
            self._used -= size

    def flush(self) -> None:
        pass

    def close(self) -> None:
        with self._lock:
            self._bufs.clear()
            self._dir.clear()

    @property
    def used_bytes(self) -> int:
        with self._lock:
            return self._used

    def counters(self) -> TierCounters:
        with self._lock:
            return self._counters.snapshot(MEDIA_DRAM, self._cost)

    def media_counters(self) -> dict[str, TierCounters]:
        return {MEDIA_DRAM: self.counters()}


class _ArenaFile:
    """A memory-mapped file: fixed header, data region, trailing directory."""

    def __init__(self, path: str | os.PathLike, capacity: int, recover: bool):
        self.path = Path(path)
        existing = recover and self.path.exists() and self.path.stat().st_size > 0
        if existing:
            self._open_existing(capacity)
        else:
            self._create(capacity)

    def _create(self, capacity: int) -> None:
        self.capacity = capacity
        self.dir_offset = _HEADER.size + capacity
        self._fd = os.open(self.path, os.O_RDWR | os.O_CREAT)
        os.ftruncate(self._fd, _HEADER.size + capacity)
        os.pwrite(
            self._fd,
            _HEADER.pack(ARENA_MAGIC, ARENA_VERSION, capacity, self.dir_offset),
            0,
        )
        self.mm = mmap.mmap(self._fd, _HEADER.size + capacity)
        self.entries: dict[ObjectId, tuple[int, int]] = {}
        self._write_directory({})

    def _open_existing(self, requested_capacity: int) -> None:
        self._fd = os.open(self.path, os.O_RDWR)
        header = os.pread(self._fd, _HEADER.size, 0)
        if len(header) < _HEADER.size:
            os.close(self._fd)
            raise ArenaError(f"arena {self.path}: truncated header")
        magic, version, capacity, dir_offset = _HEADER.unpack(header)
        if magic != ARENA_MAGIC:
            os.close(self._fd)
            raise ArenaError(f"arena {self.path}: bad magic {magic!r}")
        if version != ARENA_VERSION:
            os.close(self._fd)
            raise ArenaError(f"arena {self.path}: unsupported version {version}")
        self.capacity = capacity
        self.dir_offset = dir_offset
        self.entries = self._read_directory()
        high_water = max((off + length for off, length in self.entries.values()), default=0)
        if requested_capacity < high_water:
            os.close(self._fd)
            raise ArenaError(
                f"arena {self.path}: configured capacity {requested_capacity} smaller than "
                f"existing directory extent {high_water}"
            )
        if os.fstat(self._fd).st_size < _HEADER.size + capacity:
            os.ftruncate(self._fd, _HEADER.size + capacity)
        self.mm = mmap.mmap(self._fd, _HEADER.size + capacity)

    def _read_directory(self) -> dict[ObjectId, tuple[int, int]]:
        raw_count = os.pread(self._fd, _DIR_COUNT.size, self.dir_offset)
        if len(raw_count) < _DIR_COUNT.size:
            raise ArenaError(f"arena {self.path}: truncated directory header")
        (count,) = _DIR_COUNT.unpack(raw_count)
        raw = os.pread(self._fd, _DIR_ENTRY.size * count, self.dir_offset + _DIR_COUNT.size)
        if len(raw) < _DIR_ENTRY.size * count:
            raise ArenaError(f"arena {self.path}: truncated directory entries")
        entries: dict[ObjectId, tuple[int, int]] = {}
        for i in range(count):
            raw_id, offset, length = _DIR_ENTRY.unpack_from(raw, i * _DIR_ENTRY.size)
            if offset + length > self.capacity:
                raise ArenaError(
                    f"arena {self.path}: directory entry {i} [{offset}, {offset + length}) "
                    f"exceeds capacity {self.capacity}"
                )
            entries[ObjectId(raw_id)] = (offset, length)
        return entries

    def _write_directory(self, entries: dict[ObjectId, tuple[int, int]]) -> None:
        blob = _DIR_COUNT.pack(len(entries)) + b"".join(
            _DIR_ENTRY.pack(oid.raw, off, length) for oid, (off, length) in entries.items()
        )
        os.pwrite(self._fd, blob, self.dir_offset)
        os.ftruncate(self._fd, self.dir_offset + len(blob))

    def read(self, offset: int, length: int) -> memoryview:
        base = _HEADER.size + offset
        return memoryview(self.mm)[base : base + length]

    def write(self, offset: int, data: bytes) -> None:
        base = _HEADER.size + offset
        self.mm[base : base + len(data)] = data

    def flush(self, entries: dict[ObjectId, tuple[int, int]]) -> None:
        self.mm.flush()
        self._write_directory(entries)
        os.fsync(self._fd)

    def close(self, entries: dict[ObjectId, tuple[int, int]]) -> None:
        self.flush(entries)
        self.mm.close()
        os.close(self._fd)


class _Allocator:
    """First-fit free-list over a bump pointer; offsets are data-relative."""

    def __init__(self, capacity: int):
        self.capacity = capacity
        self.bump = 0
        self.holes: list[list[int]] = []  # sorted [offset, length]

    def seed(self, live: list[tuple[int, int]]) -> None:
        # Rebuild state from recovered regions: bump past them, holes between.
        regions = sorted(live)
        self.bump = 0
        self.holes = []
        for offset, length in regions:
            if offset > self.bump:
                self.holes.append([self.bump, offset - self.bump])
            self.bump = max(self.bump, offset + length)

    def allocate(self, length: int) -> int:
        for i, (off, hole_len) in enumerate(self.holes):
            if hole_len >= length:
                if hole_len == length:
                    self.holes.pop(i)
                else:
                    self.holes[i] = [off + length, hole_len - length]
                return off
        if self.bump + length > self.capacity:
            raise CapacityError(
                f"arena out of space: need {length}, bump {self.bump}, capacity {self.capacity}"
            )
        off = self.bump
        self.bump += length
        return off

    def release(self, offset: int, length: int) -> None:
        if length == 0:
            return
        self.holes.append([offset, length])
        self.holes.sort()
        merged: list[list[int]] = []
        for off, ln in self.holes:
            if merged and merged[-1][0] + merged[-1][1] == off:
                merged[-1][1] += ln
            else:
                merged.append([off, ln])
        # retract trailing hole into the bump pointer
        if merged and merged[-1][0] + merged[-1][1] == self.bump:
            self.bump = merged.pop()[0]
        self.holes = merged


class NvmDirectTier(TierHandle):
    """App-Direct analogue: zero-copy views over a persistent mapped arena."""

    kind = TierKind.NVM_DIRECT

    def __init__(self, config: ArenaConfig):
        if config.path is None:
            raise InvalidRequestError("NVM_DIRECT tier requires an arena path")
        super().__init__(config)
        self._arena = _ArenaFile(config.path, config.capacity_bytes, recover=True)
        self._config = ArenaConfig(
            path=config.path,
            capacity_bytes=self._arena.capacity,
            cache_capacity_bytes=config.cache_capacity_bytes,
            cost_model=config.cost_model,
        )
        self._dir = dict(self._arena.entries)
        self._alloc = _Allocator(self._arena.capacity)
        self._alloc.seed(list(self._dir.values()))
        self._counters = _MediumCounters()
        self._closed = False

    def store(self, oid: ObjectId, data: bytes) -> RegionRef:
        with self._lock:
            if oid in self._dir:
                raise InvalidRequestError(f"object {oid.hex()} already stored")
            offset = self._alloc.allocate(len(data))
            self._arena.write(offset, data)
            self._dir[oid] = (offset, len(data))
            self._counters.bytes_written += len(data)
            self._counters.write_ops += 1
            return RegionRef(self.kind, offset, len(data))

    def read_view(self, oid: ObjectId) -> memoryview:
        with self._lock:
            offset, size = self._entry(oid)
            self._counters.bytes_read += size
            self._counters.read_ops += 1
            return self._arena.read(offset, size)

    def write_in_place(self, oid: ObjectId, offset: int, data: bytes) -> None:
        with self._lock:
            base, _ = self._check_range(oid, offset, len(data))
            self._arena.write(base + offset, data)
            self._counters.bytes_written += len(data)
            self._counters.write_ops += 1

    def free(self, oid: ObjectId) -> None:
        with self._lock:
            offset, size = self._entry(oid)
            del self._dir[oid]
            self._alloc.release(offset, size)

    def flush(self) -> None:
        with self._lock:
            self._arena.flush(self._dir)

    def close(self) -> None:
        with self._lock:
            if not self._closed:
                self._arena.close(self._dir)
                self._closed = True

    def counters(self) -> TierCounters:
        with self._lock:
            return self._counters.snapshot(MEDIA_NVM, self._cost)

    def media_counters(self) -> dict[str, TierCounters]:
        return {MEDIA_NVM: self.counters()}


class _CacheEntry:
    __slots__ = ("buf", "dirty")

    def __init__(self, buf: bytearray, dirty: bool = False):
        self.buf = buf
        self.dirty = dirty


class MemoryModeTier(TierHandle):
    """NVM presented as volatile system memory with a DRAM LRU cache in front.

    Reads are served from the cache; a miss copies the region from the arena
    (NVM read) into the cache (DRAM write), evicting least-recently-used
    objects as needed. Dirty cached objects are written back to the arena on
    eviction or flush, each write-back accounted exactly once. The arena file
    is reinitialized empty on every open: nothing survives a restart.
    """

    kind = TierKind.MEMORY_MODE

    def __init__(self, config: ArenaConfig):
        if config.path is None:
            raise InvalidRequestError("MEMORY_MODE tier requires an arena path")
        if not 0 < config.cache_capacity_bytes < config.capacity_bytes:
            raise InvalidRequestError(
                "MEMORY_MODE needs 0 < cache_capacity_bytes < capacity_bytes"
            )
        super().__init__(config)
        self._arena = _ArenaFile(config.path, config.capacity_bytes, recover=False)
        self._alloc = _Allocator(config.capacity_bytes)
        self._cache: OrderedDict[ObjectId, _CacheEntry] = OrderedDict()
        self._cache_used = 0
        self._nvm = _MediumCounters()
        self._dram = _MediumCounters()
        self._closed = False

    # -- cache plumbing ------------------------------------------------------

    def _evict_for(self, incoming: int) -> None:
        while self._cache and self._cache_used + incoming > self._config.cache_capacity_bytes:
            oid, entry = self._cache.popitem(last=False)
            self._cache_used -= len(entry.buf)
            if entry.dirty:
                offset, _ = self._dir[oid]
                self._arena.write(offset, bytes(entry.buf))
                self._nvm.bytes_written += len(entry.buf)
                self._nvm.write_ops += 1

    def _fill(self, oid: ObjectId) -> _CacheEntry:
        """Miss path: arena -> cache copy, with eviction; returns the entry."""
        offset, size = self._entry(oid)
        self._nvm.bytes_read += size
        self._nvm.read_ops += 1
        self._dram.bytes_written += size
        self._dram.write_ops += 1
        self._dram.cache_misses += 1
        buf = bytearray(self._arena.read(offset, size))
        entry = _CacheEntry(buf)
        if size <= self._config.cache_capacity_bytes:
            self._evict_for(size)
            self._cache[oid] = entry
            self._cache_used += size
        return entry

    # -- tier operations -----------------------------------------------------

    def store(self, oid: ObjectId, data: bytes) -> RegionRef:
        with self._lock:
            if oid in self._dir:
                raise InvalidRequestError(f"object {oid.hex()} already stored")
            offset = self._alloc.allocate(len(data))
            self._arena.write(offset, data)
            self._dir[oid] = (offset, len(data))
            self._nvm.bytes_written += len(data)
            self._nvm.write_ops += 1
            return RegionRef(self.kind, offset, len(data))

    def read_view(self, oid: ObjectId) -> memoryview:
        with self._lock:
            _, size = self._entry(oid)
            entry = self._cache.get(oid)
            if entry is not None:
                self._cache.move_to_end(oid)
                self._dram.cache_hits += 1
            else:
                entry = self._fill(oid)
            self._dram.bytes_read += size
            self._dram.read_ops += 1
            return memoryview(entry.buf)

    def write_in_place(self, oid: ObjectId, offset: int, data: bytes) -> None:
        with self._lock:
            self._check_range(oid, offset, len(data))
            entry = self._cache.get(oid)
            if entry is not None:
                self._cache.move_to_end(oid)
                self._dram.cache_hits += 1
            else:
                entry = self._fill(oid)
            entry.buf[offset : offset + len(data)] = data
            entry.dirty = True
            self._dram.bytes_written += len(data)
            self._dram.write_ops += 1
            if oid not in self._cache:
                # object larger than the whole cache: write straight through
                base, _ = self._dir[oid]
                self._arena.write(base + offset, data)
                self._nvm.bytes_written += len(data)
                self._nvm.write_ops += 1
                entry.dirty = False

    def free(self, oid: ObjectId) -> None:
        with self._lock:
            offset, size = self._entry(oid)
            entry = self._cache.pop(oid, None)
            if entry is not None:
                self._cache_used -= len(entry.buf)
            del self._dir[oid]
            self._alloc.release(offset, size)

    def flush(self) -> None:
        with self._lock:
            for oid, entry in self._cache.items():
                if entry.dirty:
                    offset, _ = self._dir[oid]
                    self._arena.write(offset, bytes(entry.buf))
                    self._nvm.bytes_written += len(entry.buf)
                    self._nvm.write_ops += 1
                    entry.dirty = False
            self._arena.flush(self._dir)

    def close(self) -> None:
        with self._lock:
            if self._closed:
                return
            for oid, entry in self._cache.items():
                if entry.dirty:
                    offset, _ = self._dir[oid]
                    self._arena.write(offset, bytes(entry.buf))
                    self._nvm.bytes_written += len(entry.buf)
                    self._nvm.write_ops += 1
                    entry.dirty = False
            self._cache.clear()
            self._cache_used = 0
            self._arena.close(self._dir)
            self._closed = True

    @property
    def cache_used_bytes(self) -> int:
        with self._lock:
            return self._cache_used

    def counters(self) -> TierCounters:
        """Backing-medium (NVM) traffic plus cache hit/miss statistics."""
        with self._lock:
            total_model = modeled_time_ns(
                self._nvm.snapshot(MEDIA_NVM, self._cost), MEDIA_NVM, self._cost
            ) + modeled_time_ns(
                self._dram.snapshot(MEDIA_DRAM, self._cost), MEDIA_DRAM, self._cost
            )
            return TierCounters(
                bytes_read=self._nvm.bytes_read,
                bytes_written=self._nvm.bytes_written,
                cache_hits=self._dram.cache_hits,
                cache_misses=self._dram.cache_misses,
                read_ops=self._nvm.read_ops,
                write_ops=self._nvm.write_ops,
                modeled_time_ns=total_model,
            )

    def media_counters(self) -> dict[str, TierCounters]:
        with self._lock:
            return {
                MEDIA_DRAM: self._dram.snapshot(MEDIA_DRAM, self._cost),
                MEDIA_NVM: self._nvm.snapshot(MEDIA_NVM, self._cost),
            }


def open_tier(kind: TierKind, config: ArenaConfig) -> TierHandle:
    """Open a tier handle; arena kinds require a writable path."""
    if kind == TierKind.DRAM:
        return DramTier(config)
    if kind == TierKind.NVM_DIRECT:
        return NvmDirectTier(config)
    if kind == TierKind.MEMORY_MODE:
        return MemoryModeTier(config)
    raise InvalidRequestError(f"unknown tier kind {kind!r}")
