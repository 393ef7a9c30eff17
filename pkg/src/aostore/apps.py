"""End-to-end drivers: generate, persist, compute (active or passive), collect.

Active runs ship invocations; the object payloads never cross the client
boundary. Passive runs emulate a non-active store on the same engine: whole
objects are fetched with GET on every use (no client caching) and the same
kernel functions run client-side, so both modes produce bit-identical results.

Invocations are issued sequentially; per-object read counts afterwards equal
each kernel's reuse factor (histogram and matrix addition 1, k-means its
iteration count, matrix multiplication the submatrix grid side).
"""

from __future__ import annotations

import hashlib
import time
from dataclasses import dataclass, field as dc_field

import numpy as np

from .client import Session, fetch_full
from .engine import ByRef, ByValue, Engine, ResultPlacement
from .errors import DuplicateError, InvalidRequestError
from .kernels import (
    HIST_CLASS,
    HistogramSpec,
    KMeansSpec,
    MATRIX_CLASS,
    MatrixDescriptor,
    POINTS_CLASS,
    PartialSum,
    assemble_matrix,
    gen_f_array,
    gen_matrix,
    gen_points,
    histogram_block,
    initial_centroids,
    kernel_classes,
    kernel_methods,
    kmeans_partial,
    kmeans_reduce,
    matadd_block,
    merge_histograms,
    fma_values,
)
from .model import (
    Histogram,
    ObjectId,
    Submatrix,
    encode_payload,
    payload_size_bytes,
)
from .tiers import TierKind

MODE_ACTIVE = "active"
MODE_PASSIVE = "passive"

RESULT_VALUE = "value"
RESULT_VOLATILE = "volatile"
RESULT_STORE = "store"
RESULT_INPLACE_FMA = "inplace_fma"


@dataclass
class AppRunResult:
    app: str
    mode: str
    tier: TierKind
    final: object
    output_digest: str
    dataset_bytes: int
    output_bytes: int
    invocations: int
    method_input_bytes: int
    method_total_ns: int
    input_ids: list[ObjectId] = dc_field(default_factory=list)
    output_ids: list[ObjectId] = dc_field(default_factory=list)
    phases: dict[str, int] = dc_field(default_factory=dict)


def ensure_kernel_registration(session: Session) -> None:
    for cls in kernel_classes():
        try:
            session.register_class(cls)
        except DuplicateError:
            pass
    for method in kernel_methods():
        try:
            session.register_method(method)
        except DuplicateError:
            session.remember_method(method)


def _digest(chunks) -> str:
    h = hashlib.blake2b(digest_size=16)
    for chunk in chunks:
        h.update(chunk)
    return h.hexdigest()


class _Phases:
    def __init__(self):
        self.wall: dict[str, int] = {}
        self._t0 = 0
        self._name = ""

    def start(self, name: str) -> None:
        self._name = name
        self._t0 = time.perf_counter_ns()

    def stop(self) -> None:
        self.wall[self._name] = self.wall.get(self._name, 0) + (
            time.perf_counter_ns() - self._t0
        )


def _method_stats(engine: Engine | None, record_start: int, passive_ns: int):
    """Server-side method time for active runs, from engine invoke records."""
    if engine is None:
        return passive_ns
    total = passive_ns
    for rec in engine.records(record_start):
        if rec.op == "invoke":
            total += rec.method_ns
    return total


def _multiplicity_input_bytes(engine: Engine, input_ids: list[ObjectId], sizes: dict) -> int:
    counts = engine.read_counts()
    return sum(counts.get(oid, 0) * sizes[oid] for oid in input_ids)


def run_histogram(
    session: Session,
    *,
    seed: int,
    n_elems: int,
    block_elems: int,
    tier: TierKind,
    mode: str,
    engine: Engine | None = None,
    spec: HistogramSpec | None = None,
) -> AppRunResult:
    spec = spec or HistogramSpec()
    ensure_kernel_registration(session)
    phases = _Phases()
    record_start = engine.record_count if engine else 0

    phases.start("generate")
    blocks = gen_f_array(seed, n_elems, block_elems=block_elems)
    phases.stop()

    phases.start("persist")
    ids = [session.make_persistent(HIST_CLASS, b, tier) for b in blocks]
    sizes = {oid: payload_size_bytes(b) for oid, b in zip(ids, blocks)}
    del blocks
    phases.stop()

    passive_ns = 0
    partials: list[Histogram] = []
    phases.start("compute")
    if mode == MODE_ACTIVE:
        for oid in ids:
            partials.append(session.invoke(oid, "histogram"))
        final = merge_histograms(partials)
    else:
        for oid in ids:
            payload = fetch_full(session, oid)
            t0 = time.perf_counter_ns()
            partials.append(histogram_block(payload, spec))
            passive_ns += time.perf_counter_ns() - t0
        t0 = time.perf_counter_ns()
        final = merge_histograms(partials)
        passive_ns += time.perf_counter_ns() - t0
    phases.stop()

    method_input = (
        _multiplicity_input_bytes(engine, ids, sizes) if engine else sum(sizes.values())
    )
    return AppRunResult(
        app="histogram",
        mode=mode,
        tier=tier,
        final=final,
        output_digest=_digest([encode_payload(final)]),
        dataset_bytes=sum(sizes.values()),
        output_bytes=payload_size_bytes(final),
        invocations=len(ids),
        method_input_bytes=method_input,
        method_total_ns=_method_stats(engine, record_start, passive_ns),
        input_ids=ids,
        phases=phases.wall,
    )


def run_kmeans(
    session: Session,
    *,
    seed: int,
    n_points: int,
    block_rows: int,
    tier: TierKind,
    mode: str,
    engine: Engine | None = None,
    spec: KMeansSpec | None = None,
) -> AppRunResult:
    spec = spec or KMeansSpec()
    ensure_kernel_registration(session)
    phases = _Phases()
    record_start = engine.record_count if engine else 0

    phases.start("generate")
    blocks = gen_points(seed, n_points, spec.dims, block_rows)
    centroids = initial_centroids(blocks, spec.centers)
    phases.stop()

    phases.start("persist")
    ids = [session.make_persistent(POINTS_CLASS, b, tier) for b in blocks]
    sizes = {oid: payload_size_bytes(b) for oid, b in zip(ids, blocks)}
    del blocks
    phases.stop()

    passive_ns = 0
    invocations = 0
    phases.start("compute")
    for _ in range(spec.iterations):
        if mode == MODE_ACTIVE:
            acc_id = session.make_persistent(
                POINTS_CLASS, PartialSum.zeros(spec.centers, spec.dims).to_payload(), TierKind.DRAM
            )
            for oid in ids:
                session.invoke(acc_id, "accumulate", [ByRef(oid), ByValue(centroids)])
                invocations += 1
            centroids = session.invoke(acc_id, "finish", [ByValue(centroids)])
            invocations += 1
            session.delete(acc_id)
        else:
            partials = []
            for oid in ids:
                payload = fetch_full(session, oid)
                t0 = time.perf_counter_ns()
                partials.append(kmeans_partial(payload, centroids))
                passive_ns += time.perf_counter_ns() - t0
                invocations += 1
            t0 = time.perf_counter_ns()
            centroids = kmeans_reduce(partials, centroids)
            passive_ns += time.perf_counter_ns() - t0
    phases.stop()

    method_input = (
        _multiplicity_input_bytes(engine, ids, sizes)
        if engine
        else spec.iterations * sum(sizes.values())
    )
    return AppRunResult(
        app="kmeans",
        mode=mode,
        tier=tier,
        final=centroids,
        output_digest=_digest([encode_payload(centroids)]),
        dataset_bytes=sum(sizes.values()),
        output_bytes=payload_size_bytes(centroids),
        invocations=invocations,
        method_input_bytes=method_input,
        method_total_ns=_method_stats(engine, record_start, passive_ns),
        input_ids=ids,
        phases=phases.wall,
    )


def _persist_grid(session: Session, blocks: dict, tier: TierKind) -> dict:
    return {rc: session.make_persistent(MATRIX_CLASS, b, tier) for rc, b in blocks.items()}


def run_matadd(
    session: Session,
    *,
    seed: int,
    desc: MatrixDescriptor,
    tier: TierKind,
    mode: str,
    result: str = RESULT_VALUE,
    engine: Engine | None = None,
    assemble: bool = True,
) -> AppRunResult:
    if result == RESULT_INPLACE_FMA:
        raise InvalidRequestError("in-place FMA applies to matrix multiplication only")
    ensure_kernel_registration(session)
    phases = _Phases()
    record_start = engine.record_count if engine else 0

    phases.start("generate")
    a_blocks = gen_matrix(seed, desc, which=0)
    b_blocks = gen_matrix(seed, desc, which=1)
    phases.stop()

    phases.start("persist")
    a_ids = _persist_grid(session, a_blocks, tier)
    b_ids = _persist_grid(session, b_blocks, tier)
    sizes = {oid: desc.k * desc.k * 8 for oid in list(a_ids.values()) + list(b_ids.values())}
    del a_blocks, b_blocks
    phases.stop()

    placement = _placement_for(result, tier)
    passive_ns = 0
    invocations = 0
    out_values: dict[tuple[int, int], Submatrix] = {}
    out_ids: dict[tuple[int, int], ObjectId] = {}

    phases.start("compute")
    for rc in sorted(a_ids):
        if mode == MODE_ACTIVE:
            got = session.invoke(a_ids[rc], "add", [ByRef(b_ids[rc])], placement)
            invocations += 1
            if isinstance(got, ObjectId):
                out_ids[rc] = got
            else:
                out_values[rc] = got
        else:
            pa = fetch_full(session, a_ids[rc])
            pb = fetch_full(session, b_ids[rc])
            t0 = time.perf_counter_ns()
            block = matadd_block(pa, pb)
            passive_ns += time.perf_counter_ns() - t0
            invocations += 1
            if result == RESULT_STORE:
                out_ids[rc] = session.make_persistent(MATRIX_CLASS, block, tier)
            out_values[rc] = block
    phases.stop()

    return _finish_matrix_run(
        session,
        engine,
        record_start,
        app="matadd",
        mode=mode,
        tier=tier,
        desc=desc,
        input_ids=list(a_ids.values()) + list(b_ids.values()),
        sizes=sizes,
        out_values=out_values,
        out_ids=out_ids,
        invocations=invocations,
        passive_ns=passive_ns,
        phases=phases,
        assemble=assemble,
    )


def run_matmul(
    session: Session,
    *,
    seed: int,
    desc: MatrixDescriptor,
    tier: TierKind,
    mode: str,
    result: str = RESULT_VALUE,
    engine: Engine | None = None,
    assemble: bool = True,
) -> AppRunResult:
    ensure_kernel_registration(session)
    if mode == MODE_PASSIVE and result == RESULT_INPLACE_FMA:
        raise InvalidRequestError("in-place FMA is an active-store execution mode")
    phases = _Phases()
    record_start = engine.record_count if engine else 0
    grid = desc.grid

    phases.start("generate")
    a_blocks = gen_matrix(seed, desc, which=0)
    b_blocks = gen_matrix(seed, desc, which=1)
    phases.stop()

    phases.start("persist")
    a_ids = _persist_grid(session, a_blocks, tier)
    b_ids = _persist_grid(session, b_blocks, tier)
    sizes = {oid: desc.k * desc.k * 8 for oid in list(a_ids.values()) + list(b_ids.values())}
    del a_blocks, b_blocks
    phases.stop()

    passive_ns = 0
    invocations = 0
    out_values: dict[tuple[int, int], Submatrix] = {}
    out_ids: dict[tuple[int, int], ObjectId] = {}
    zeros = Submatrix(np.zeros((desc.k, desc.k)))

    phases.start("compute")
    if mode == MODE_ACTIVE:
        acc_tier = tier if result == RESULT_INPLACE_FMA else TierKind.DRAM
        acc_ids = {
            (i, j): session.make_persistent(MATRIX_CLASS, zeros, acc_tier)
            for i in range(grid)
            for j in range(grid)
        }
        for i in range(grid):
            for j in range(grid):
                for t in range(grid):
                    session.invoke_fma_in_place(acc_ids[(i, j)], a_ids[(i, t)], b_ids[(t, j)])
                    invocations += 1
        if result == RESULT_STORE:
            for rc, acc in sorted(acc_ids.items()):
                out_ids[rc] = session.invoke(acc, "identity", [], ResultPlacement.store_in(tier))
                invocations += 1
                session.delete(acc)
        elif result == RESULT_VALUE:
            for rc, acc in sorted(acc_ids.items()):
                out_values[rc] = session.get(acc)
            for acc in acc_ids.values():
                session.delete(acc)
        else:  # volatile or inplace_fma: results stay where they were computed
            out_ids = dict(acc_ids)
    else:
        accs = {
            (i, j): np.zeros((desc.k, desc.k)) for i in range(grid) for j in range(grid)
        }
        for i in range(grid):
            for j in range(grid):
                for t in range(grid):
                    pa = fetch_full(session, a_ids[(i, t)])
                    pb = fetch_full(session, b_ids[(t, j)])
                    t0 = time.perf_counter_ns()
                    accs[(i, j)] = fma_values(accs[(i, j)], pa.values, pb.values)
                    passive_ns += time.perf_counter_ns() - t0
                    invocations += 1
        out_values = {rc: Submatrix(arr) for rc, arr in accs.items()}
        if result == RESULT_STORE:
            for rc in sorted(out_values):
                out_ids[rc] = session.make_persistent(MATRIX_CLASS, out_values[rc], tier)
    phases.stop()

    return _finish_matrix_run(
        session,
        engine,
        record_start,
        app="matmul",
        mode=mode,
        tier=tier,
        desc=desc,
        input_ids=list(a_ids.values()) + list(b_ids.values()),
        sizes=sizes,
        out_values=out_values,
        out_ids=out_ids,
        invocations=invocations,
        passive_ns=passive_ns,
        phases=phases,
        assemble=assemble,
    )


def _placement_for(result: str, tier: TierKind) -> ResultPlacement:
    if result == RESULT_VALUE:
        return ResultPlacement.value()
    if result == RESULT_VOLATILE:
        return ResultPlacement.volatile()
    if result == RESULT_STORE:
        return ResultPlacement.store_in(tier)
    raise InvalidRequestError(f"unknown result placement {result!r}")


def _finish_matrix_run(
    session: Session,
    engine: Engine | None,
    record_start: int,
    *,
    app: str,
    mode: str,
    tier: TierKind,
    desc: MatrixDescriptor,
    input_ids: list[ObjectId],
    sizes: dict,
    out_values: dict,
    out_ids: dict,
    invocations: int,
    passive_ns: int,
    phases: _Phases,
    assemble: bool,
) -> AppRunResult:
    phases.start("collect")
    final = None
    digest_src = []
    if assemble:
        blocks = dict(out_values)
        for rc, oid in sorted(out_ids.items()):
            if rc not in blocks:
                blocks[rc] = session.get(oid)
        for rc in sorted(blocks):
            digest_src.append(blocks[rc].data_bytes())
        final = assemble_matrix(blocks, desc)
    phases.stop()

    output_bytes = desc.n * desc.n * 8
    method_input = (
        _multiplicity_input_bytes(engine, input_ids, sizes) if engine else sum(sizes.values())
    )
    return AppRunResult(
        app=app,
        mode=mode,
        tier=tier,
        final=final,
        output_digest=_digest(digest_src) if digest_src else "",
        dataset_bytes=sum(sizes.values()),
        output_bytes=output_bytes,
        invocations=invocations,
        method_input_bytes=method_input,
        method_total_ns=_method_stats(engine, record_start, passive_ns),
        input_ids=input_ids,
        output_ids=[oid for _, oid in sorted(out_ids.items())],
        phases=phases.wall,
    )


def run_app(
    app: str,
    mode: str,
    session: Session,
    *,
    seed: int,
    tier: TierKind,
    profile: dict,
    result: str = RESULT_VALUE,
    engine: Engine | None = None,
    assemble: bool = True,
) -> AppRunResult:
    """Dispatch one full application run; see the per-app drivers."""
    if mode not in (MODE_ACTIVE, MODE_PASSIVE):
        raise InvalidRequestError(f"unknown mode {mode!r}")
    if app == "histogram":
        return run_histogram(
            session,
            seed=seed,
            n_elems=profile["n_elems"],
            block_elems=profile["block_elems"],
            tier=tier,
            mode=mode,
            engine=engine,
            spec=profile.get("hist_spec"),
        )
    if app == "kmeans":
        return run_kmeans(
            session,
            seed=seed,
            n_points=profile["n_points"],
            block_rows=profile["block_rows"],
            tier=tier,
            mode=mode,
            engine=engine,
            spec=profile.get("kmeans_spec"),
        )
    if app == "matadd":
        return run_matadd(
            session,
            seed=seed,
            desc=profile["matrix"],
            tier=tier,
            mode=mode,
            result=result,
            engine=engine,
            assemble=assemble,
        )
    if app == "matmul":
        return run_matmul(
            session,
            seed=seed,
            desc=profile["matrix"],
            tier=tier,
            mode=mode,
            result=result,
            engine=engine,
            assemble=assemble,
        )
    raise InvalidRequestError(f"unknown app {app!r}")
