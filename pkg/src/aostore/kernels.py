"""The four kernel applications as routine-catalog entries plus generators.

histogram     -- 140 fixed bins over [0, inf) on F-distributed arrays
k-means       -- Lloyd iterations with per-block partial sums, 20 centers
matrix add    -- elementwise sum of k x k submatrix blocks, bit exact
matrix mul    -- blocked multiply-accumulate with a fixed summation order:
                 for each output element the k products are accumulated in
                 ascending inner index, so server-side, client-side and
                 in-place executions agree bit for bit.

Dataset generators are pure functions of (seed, shape); no external files.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .engine import Routine, RoutineCatalog, RoutineOutput
from .errors import InvalidRequestError, ShapeMismatchError
from .model import (
    BlockPayload,
    Centroids,
    ClassDescriptor,
    FloatArray,
    Histogram,
    MethodDescriptor,
    PointsBlock,
    SEM_CENTROIDS,
    SEM_FLOAT_ARRAY,
    SEM_HISTOGRAM,
    SEM_NONE,
    SEM_POINTS,
    SEM_SCALAR,
    SEM_SUBMATRIX,
    Submatrix,
)

HIST_CLASS = "HistBlock"
POINTS_CLASS = "PointsChunk"
MATRIX_CLASS = "MatBlock"

F_D1 = 10.0
F_D2 = 50.0


@dataclass(frozen=True)
class HistogramSpec:
    """140 bins spanning [0, inf): [0, e1), [e1, e2), ..., [e139, inf)."""

    edges: np.ndarray = field(
        default_factory=lambda: np.geomspace(2.0**-7, 2.0**6, num=139)
    )

    def __post_init__(self) -> None:
        e = np.asarray(self.edges, dtype=np.float64)
        if e.ndim != 1:
            raise InvalidRequestError("histogram edges must be a 1-d array")
        if not np.all(np.isfinite(e)) or not np.all(e > 0):
            raise InvalidRequestError("histogram edges must be finite and positive")
        if not np.all(np.diff(e) > 0):
            raise InvalidRequestError("histogram edges must be strictly increasing")
        object.__setattr__(self, "edges", e)

    @property
    def bin_count(self) -> int:
        return len(self.edges) + 1


@dataclass(frozen=True)
class KMeansSpec:
    centers: int = 20
    iterations: int = 10
    dims: int = 500

    def __post_init__(self) -> None:
        if self.centers < 1 or self.iterations < 1 or self.dims < 1:
            raise InvalidRequestError("k-means needs centers, iterations, dims >= 1")


@dataclass(frozen=True)
class MatrixDescriptor:
    """n x n matrix held as a grid of k x k submatrix objects."""

    n: int
    k: int

    def __post_init__(self) -> None:
        if self.n <= 0 or self.k <= 0 or self.n % self.k != 0:
            raise InvalidRequestError(
                f"submatrix side {self.k} must divide matrix side {self.n}"
            )

    @property
    def grid(self) -> int:
        return self.n // self.k


@dataclass
class PartialSum:
    """Per-block k-means accumulation: per-center coordinate sums and counts."""

    sums: np.ndarray  # (centers, dims) f64
    counts: np.ndarray  # (centers,) u64

    def to_payload(self) -> PointsBlock:
        # counts ride along as an extra trailing column; exact for < 2**53
        packed = np.empty((self.sums.shape[0], self.sums.shape[1] + 1), dtype=np.float64)
        packed[:, :-1] = self.sums
        packed[:, -1] = self.counts.astype(np.float64)
        return PointsBlock(packed)

    @classmethod
    def from_payload(cls, p: PointsBlock) -> "PartialSum":
        vals = p.values
        return cls(
            sums=np.array(vals[:, :-1], dtype=np.float64),
            counts=np.array(vals[:, -1], dtype=np.uint64),
        )

    @classmethod
    def zeros(cls, centers: int, dims: int) -> "PartialSum":
        return cls(np.zeros((centers, dims)), np.zeros(centers, dtype=np.uint64))


# -- generators -------------------------------------------------------------


def gen_f_array(
    seed: int, n: int, d1: float = F_D1, d2: float = F_D2, block_elems: int = 1 << 17
) -> list[FloatArray]:
    """Blocked F-distributed sample via a ratio of seeded chi-square draws."""
    if n <= 0 or block_elems <= 0:
        raise InvalidRequestError("n and block_elems must be positive")
    rng = np.random.default_rng(seed)
    blocks = []
    remaining = n
    while remaining > 0:
        size = min(block_elems, remaining)
        num = rng.chisquare(d1, size) / d1
        den = rng.chisquare(d2, size) / d2
        blocks.append(FloatArray(num / den))
        remaining -= size
    return blocks


def gen_points(seed: int, n_points: int, dims: int, block_rows: int) -> list[PointsBlock]:
    """Blocked uniform [0,1) point cloud."""
    if n_points <= 0 or dims <= 0 or block_rows <= 0:
        raise InvalidRequestError("n_points, dims and block_rows must be positive")
    rng = np.random.default_rng(seed)
    blocks = []
    remaining = n_points
    while remaining > 0:
        rows = min(block_rows, remaining)
        blocks.append(PointsBlock(rng.random((rows, dims))))
        remaining -= rows
    return blocks


def gen_matrix(seed: int, desc: MatrixDescriptor, which: int = 0) -> dict[tuple[int, int], Submatrix]:
    """Grid of uniform [-1,1) blocks; block (r, c) is seeded independently so
    assembly can be checked against direct regeneration."""
    blocks = {}
    for r in range(desc.grid):
        for c in range(desc.grid):
            rng = np.random.default_rng([seed, which, r, c])
            blocks[(r, c)] = Submatrix(rng.uniform(-1.0, 1.0, (desc.k, desc.k)))
    return blocks


def assemble_matrix(blocks: dict[tuple[int, int], Submatrix], desc: MatrixDescriptor) -> np.ndarray:
    out = np.empty((desc.n, desc.n))
    for (r, c), block in blocks.items():
        out[r * desc.k : (r + 1) * desc.k, c * desc.k : (c + 1) * desc.k] = block.values
    return out


def initial_centroids(blocks: list[PointsBlock], centers: int) -> Centroids:
    """First `centers` points of the dataset, in block order."""
    rows = []
    needed = centers
    for block in blocks:
        take = min(needed, block.rows)
        rows.append(block.values[:take])
        needed -= take
        if needed == 0:
            break
    if needed > 0:
        raise InvalidRequestError(f"dataset has fewer than {centers} points")
    return Centroids(np.vstack(rows))


# -- block operations ----------------------------------------------------------


def histogram_block(block: FloatArray, spec: HistogramSpec) -> Histogram:
    values = block.values
    nan_mask = np.isnan(values)
    if nan_mask.any():
        idx = int(np.argmax(nan_mask))
        raise InvalidRequestError(f"histogram input contains NaN at index {idx}")
    bins = np.searchsorted(spec.edges, values, side="right")
    counts = np.bincount(bins, minlength=spec.bin_count).astype(np.uint64)
    return Histogram(counts)


def merge_histograms(histograms: list[Histogram]) -> Histogram:
    if not histograms:
        raise InvalidRequestError("nothing to merge")
    width = histograms[0].counts.shape[0]
    total = np.zeros(width, dtype=np.uint64)
    for h in histograms:
        if h.counts.shape[0] != width:
            raise ShapeMismatchError(
                f"histogram width mismatch: {h.counts.shape[0]} vs {width}"
            )
        total += h.counts
    return Histogram(total)


def kmeans_partial(block: PointsBlock, centroids: Centroids) -> PartialSum:
    """Assign each point to the nearest centroid (squared Euclidean distance,
    ties to the lowest index) and accumulate per-center sums in row order."""
    pts = block.values
    cents = centroids.values
    if pts.shape[1] != cents.shape[1]:
        raise ShapeMismatchError(
            f"dims mismatch: points have {pts.shape[1]}, centroids {cents.shape[1]}"
        )
    if np.isnan(pts).any() or np.isnan(cents).any():
        raise InvalidRequestError("k-means input contains NaN")
    d2 = (
        np.sum(pts * pts, axis=1, keepdims=True)
        - 2.0 * (pts @ cents.T)
        + np.sum(cents * cents, axis=1)
    )
    assign = np.argmin(d2, axis=1)
    k = cents.shape[0]
    counts = np.bincount(assign, minlength=k).astype(np.uint64)
    sums = np.empty((k, pts.shape[1]))
    for dim in range(pts.shape[1]):
        # bincount accumulates weights sequentially in input order
        sums[:, dim] = np.bincount(assign, weights=pts[:, dim], minlength=k)
    return PartialSum(sums, counts)


def kmeans_reduce(partials: list[PartialSum], previous: Centroids) -> Centroids:
    """Combine partial sums; centers with no points keep their previous value."""
    if not partials:
        raise InvalidRequestError("nothing to reduce")
    shape = partials[0].sums.shape
    sums = np.zeros(shape)
    counts = np.zeros(shape[0], dtype=np.uint64)
    for p in partials:
        if p.sums.shape != shape:
            raise ShapeMismatchError(f"partial shape mismatch: {p.sums.shape} vs {shape}")
        sums += p.sums
        counts += p.counts
    if previous.values.shape != shape:
        raise ShapeMismatchError(
            f"previous centroids shape {previous.values.shape} does not match {shape}"
        )
    out = np.array(previous.values, copy=True)
    occupied = counts > 0
    out[occupied] = sums[occupied] / counts[occupied, None].astype(np.float64)
    return Centroids(out)


def matadd_block(a: Submatrix, b: Submatrix) -> Submatrix:
    if a.k != b.k:
        raise ShapeMismatchError(f"submatrix side mismatch: {a.k} vs {b.k}")
    return Submatrix(a.values + b.values)


def fma_values(acc: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """acc + a @ b with per-element accumulation in ascending inner index."""
    if a.shape != b.shape or a.shape != acc.shape or a.shape[0] != a.shape[1]:
        raise ShapeMismatchError(
            f"FMA needs equal square blocks, got {acc.shape}, {a.shape}, {b.shape}"
        )
    out = np.array(acc, dtype=np.float64, copy=True)
    tmp = np.empty_like(out)
    for t in range(a.shape[0]):
        np.outer(a[:, t], b[t, :], out=tmp)
        out += tmp
    return out


def matmul_block(acc: Submatrix, a: Submatrix, b: Submatrix) -> Submatrix:
    return Submatrix(fma_values(acc.values, a.values, b.values))


# -- routine catalog -------------------------------------------------------------


def build_catalog(
    hist_spec: HistogramSpec | None = None, kmeans_spec: KMeansSpec | None = None
) -> RoutineCatalog:
    hspec = hist_spec or HistogramSpec()

    def r_mean(target: BlockPayload, args: list[BlockPayload]) -> RoutineOutput:
        return RoutineOutput(result=FloatArray([float(np.mean(target.values))]))

    def r_hist(target: BlockPayload, args: list[BlockPayload]) -> RoutineOutput:
        return RoutineOutput(result=histogram_block(target, hspec))

    def r_partial(target: BlockPayload, args: list[BlockPayload]) -> RoutineOutput:
        return RoutineOutput(result=kmeans_partial(target, args[0]).to_payload())

    def r_accumulate(target: BlockPayload, args: list[BlockPayload]) -> RoutineOutput:
        block, centroids = args
        partial = kmeans_partial(block, centroids)
        acc = PartialSum.from_payload(target)
        if acc.sums.shape != partial.sums.shape:
            raise ShapeMismatchError(
                f"accumulator shape {acc.sums.shape} does not match partial {partial.sums.shape}"
            )
        merged = PartialSum(acc.sums + partial.sums, acc.counts + partial.counts)
        return RoutineOutput(target_update=merged.to_payload().values)

    def r_finish(target: BlockPayload, args: list[BlockPayload]) -> RoutineOutput:
        acc = PartialSum.from_payload(target)
        return RoutineOutput(result=kmeans_reduce([acc], args[0]))

    def r_add(target: BlockPayload, args: list[BlockPayload]) -> RoutineOutput:
        return RoutineOutput(result=matadd_block(target, args[0]))

    def r_fma(target: BlockPayload, args: list[BlockPayload]) -> RoutineOutput:
        a, b = args
        return RoutineOutput(target_update=fma_values(target.values, a.values, b.values))

    def r_identity(target: BlockPayload, args: list[BlockPayload]) -> RoutineOutput:
        return RoutineOutput(result=Submatrix(np.array(target.values, copy=True)))

    return RoutineCatalog(
        [
            Routine("stat.mean", r_mean),
            Routine("hist.block", r_hist),
            Routine("kmeans.partial", r_partial),
            Routine("kmeans.accumulate", r_accumulate, mutates=True),
            Routine("kmeans.finish", r_finish),
            Routine("mat.add", r_add),
            Routine("mat.fma", r_fma, mutates=True),
            Routine("mat.identity", r_identity),
        ]
    )


def kernel_classes() -> list[ClassDescriptor]:
    return [
        ClassDescriptor(HIST_CLASS, (("data", SEM_FLOAT_ARRAY),), ("histogram", "mean")),
        ClassDescriptor(
            POINTS_CLASS, (("data", SEM_POINTS),), ("partial", "accumulate", "finish")
        ),
        ClassDescriptor(MATRIX_CLASS, (("data", SEM_SUBMATRIX),), ("add", "fma", "identity")),
    ]


def kernel_methods() -> list[MethodDescriptor]:
    return [
        MethodDescriptor(HIST_CLASS, "histogram", "hist.block", (), SEM_HISTOGRAM),
        MethodDescriptor(HIST_CLASS, "mean", "stat.mean", (), SEM_SCALAR),
        MethodDescriptor(POINTS_CLASS, "partial", "kmeans.partial", (SEM_CENTROIDS,), SEM_POINTS),
        MethodDescriptor(
            POINTS_CLASS,
            "accumulate",
            "kmeans.accumulate",
            (SEM_POINTS, SEM_CENTROIDS),
            SEM_NONE,
            mutates_target=True,
        ),
        MethodDescriptor(POINTS_CLASS, "finish", "kmeans.finish", (SEM_CENTROIDS,), SEM_CENTROIDS),
        MethodDescriptor(MATRIX_CLASS, "add", "mat.add", (SEM_SUBMATRIX,), SEM_SUBMATRIX),
        MethodDescriptor(
            MATRIX_CLASS,
            "fma",
            "mat.fma",
            (SEM_SUBMATRIX, SEM_SUBMATRIX),
            SEM_NONE,
            mutates_target=True,
        ),
        MethodDescriptor(MATRIX_CLASS, "identity", "mat.identity", (), SEM_SUBMATRIX),
    ]
