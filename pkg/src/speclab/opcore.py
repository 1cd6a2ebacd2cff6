"""Block-diagonal self-adjoint operators with exact per-block functional calculus.

An operator is described by a pure generator of finite symmetric blocks over
disjoint groups of basis indices.  Every block is a small dense symmetric
matrix, so resolvents, shifted square roots and fractional powers can be
evaluated exactly (up to the dense eigensolver) one block at a time.
"""
from __future__ import annotations

import bisect
import math
import threading
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import AccumulationError, CalculusDomainError, StructuralError

BasisIndex = int

# dense per-block eigendecompositions are trusted to this relative tolerance
EIG_RTOL = 1e-14


# ---------------------------------------------------------------------------
# sparse coefficient vectors
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SparseVector:
    """Finite-support vector over the ambient orthonormal basis.

    Entries are parallel tuples with strictly increasing indices and no
    explicit zero coefficients.
    """

    indices: tuple[int, ...] = ()
    values: tuple[float, ...] = ()

    def __post_init__(self):
        if len(self.indices) != len(self.values):
            raise ValueError("indices and values must have equal length")
        if any(b <= a for a, b in zip(self.indices, self.indices[1:])):
            raise ValueError("indices must be strictly increasing")
        if self.indices and self.indices[0] < 0:
            raise ValueError("basis indices are non-negative")
        if any(v == 0.0 for v in self.values):
            raise ValueError("explicit zero coefficients are not allowed")

    @staticmethod
    def from_pairs(pairs: Iterable[tuple[int, float]]) -> "SparseVector":
        """Build a vector from (index, coefficient) pairs, merging duplicates."""
        acc: dict[int, float] = {}
        for i, v in pairs:
            acc[int(i)] = acc.get(int(i), 0.0) + float(v)
        items = sorted((i, v) for i, v in acc.items() if v != 0.0)
        return SparseVector(tuple(i for i, _ in items), tuple(v for _, v in items))

    @staticmethod
    def basis(i: int) -> "SparseVector":
        return SparseVector((int(i),), (1.0,))

    @staticmethod
    def zero() -> "SparseVector":
        return SparseVector((), ())

    @property
    def support(self) -> tuple[int, ...]:
        return self.indices

    @property
    def nnz(self) -> int:
        return len(self.indices)

    def coeff(self, i: int) -> float:
        pos = bisect.bisect_left(self.indices, i)
        if pos < len(self.indices) and self.indices[pos] == i:
            return self.values[pos]
        return 0.0

    def dot(self, other: "SparseVector") -> float:
        if other.nnz < self.nnz:
            self, other = other, self
        return sum(v * other.coeff(i) for i, v in zip(self.indices, self.values))

    def norm(self) -> float:
        return math.sqrt(sum(v * v for v in self.values))

    def scaled(self, c: float) -> "SparseVector":
        if c == 0.0:
            return SparseVector.zero()
        return SparseVector(self.indices, tuple(c * v for v in self.values))

    def unit(self) -> "SparseVector":
        nrm = self.norm()
        if nrm == 0.0:
            raise ValueError("cannot normalize the zero vector")
        return self.scaled(1.0 / nrm)

    def __add__(self, other: "SparseVector") -> "SparseVector":
        return SparseVector.from_pairs(
            list(zip(self.indices, self.values)) + list(zip(other.indices, other.values))
        )

    def __sub__(self, other: "SparseVector") -> "SparseVector":
        return self + other.scaled(-1.0)

    def __mul__(self, c: float) -> "SparseVector":
        return self.scaled(float(c))

    __rmul__ = __mul__

    def __neg__(self) -> "SparseVector":
        return self.scaled(-1.0)

    def to_dict(self) -> dict[int, float]:
        return dict(zip(self.indices, self.values))

    def isclose(self, other: "SparseVector", tol: float = 1e-12) -> bool:
        return (self - other).norm() <= tol


# ---------------------------------------------------------------------------
# symmetric blocks
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SymBlock:
    """Dense symmetric matrix acting on a small group of basis indices."""

    indices: tuple[BasisIndex, ...]
    matrix: np.ndarray

    def __post_init__(self):
        idx = tuple(int(i) for i in self.indices)
        m = np.array(self.matrix, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError("block matrix must be square")
        if m.shape[0] != len(idx):
            raise ValueError("block matrix dimension must match index count")
        if len(set(idx)) != len(idx):
            raise ValueError("block indices must be distinct")
        if idx and min(idx) < 0:
            raise ValueError("basis indices are non-negative")
        # constructed symmetric, never symmetrized after the fact
        if not np.array_equal(m, m.T):
            raise ValueError("block matrix must be exactly symmetric")
        m.setflags(write=False)
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "matrix", m)

    @property
    def dim(self) -> int:
        return len(self.indices)


def outer_sum(terms: Sequence[tuple[float, np.ndarray]], dim: int) -> np.ndarray:
    """Sum of c * v v^T contributions; exactly symmetric by construction."""
    m = np.zeros((dim, dim))
    for c, v in terms:
        m += c * np.outer(v, v)
    return m


# ---------------------------------------------------------------------------
# declared spectral truth
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SpectralTruth:
    """Declared spectrum of an operator: essential points plus a window
    query for isolated eigenvalues of finite multiplicity.

    ``disc_in(lo, hi)`` returns the discrete eigenvalues in the open window
    as (value, multiplicity) pairs; implementations raise
    :class:`AccumulationError` when the window cannot be enumerated finitely.
    ``kernel_mult_at`` reports dim Ker(A - lambda), with ``math.inf`` for
    infinite-multiplicity eigenvalues.
    """

    ess_points: tuple[float, ...] = ()
    disc_in: Callable[[float, float], list[tuple[float, int]]] | None = None
    kernel_mult_at: Callable[[float], float] | None = None
    unbounded_above: bool = False
    unbounded_below: bool = False
    known: bool = True

    @staticmethod
    def unknown() -> "SpectralTruth":
        return SpectralTruth(known=False)

    @staticmethod
    def from_points(ess: Sequence[float] = (),
                    disc: Sequence[tuple[float, int]] = (),
                    unbounded_above: bool = False,
                    unbounded_below: bool = False,
                    inf_mult_ess: bool = True) -> "SpectralTruth":
        """Truth with a finite, explicitly listed discrete spectrum."""
        ess_t = tuple(sorted(float(e) for e in ess))
        disc_t = tuple(sorted((float(v), int(m)) for v, m in disc))

        def disc_in(lo, hi):
            return [(v, m) for v, m in disc_t if lo < v < hi]

        def kernel_mult_at(lam):
            for v, m in disc_t:
                if abs(lam - v) <= 1e-9 * (1.0 + abs(v)):
                    return m
            for e in ess_t:
                if abs(lam - e) <= 1e-9 * (1.0 + abs(e)):
                    return math.inf if inf_mult_ess else 0
            return 0

        return SpectralTruth(ess_t, disc_in, kernel_mult_at,
                             unbounded_above, unbounded_below)

    def nearest_ess_distance(self, x: float) -> float:
        if not self.ess_points:
            return math.inf
        return min(abs(x - e) for e in self.ess_points)

    def disc_near(self, x: float, radius: float) -> list[tuple[float, int]]:
        if self.disc_in is None:
            return []
        return self.disc_in(x - radius, x + radius)


# ---------------------------------------------------------------------------
# function tags for the per-block calculus
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FunctionTag:
    """One of resolvent, sqrt_shift, inv_sqrt_shift or neg_power(alpha)."""

    kind: str
    alpha: float | None = None

    def __post_init__(self):
        if self.kind not in ("resolvent", "sqrt_shift", "inv_sqrt_shift", "neg_power"):
            raise ValueError(f"unknown function tag {self.kind!r}")
        if self.kind == "neg_power":
            if self.alpha is None or self.alpha < 0:
                raise ValueError("neg_power requires a non-negative exponent")
        elif self.alpha is not None:
            raise ValueError(f"{self.kind} takes no exponent")


RESOLVENT = FunctionTag("resolvent")
SQRT_SHIFT = FunctionTag("sqrt_shift")
INV_SQRT_SHIFT = FunctionTag("inv_sqrt_shift")


def neg_power(alpha: float) -> FunctionTag:
    return FunctionTag("neg_power", float(alpha))


def _scalar_values(tag: FunctionTag, a: float, w: np.ndarray, block_label) -> np.ndarray:
    scale = 1.0 + float(np.max(np.abs(w), initial=0.0)) + abs(a)
    if tag.kind == "resolvent":
        if np.min(np.abs(w - a)) <= EIG_RTOL * scale:
            raise CalculusDomainError(
                f"shift a={a} lies in the spectrum of block {block_label}")
        return 1.0 / (w - a)
    if np.min(w - a) <= EIG_RTOL * scale:
        raise CalculusDomainError(
            f"shift a={a} is not strictly below block {block_label} "
            f"(min eigenvalue {np.min(w)})")
    if tag.kind == "sqrt_shift":
        return np.sqrt(w - a)
    if tag.kind == "inv_sqrt_shift":
        return (w - a) ** -0.5
    return (w - a) ** (-tag.alpha)


# ---------------------------------------------------------------------------
# the operator itself
# ---------------------------------------------------------------------------

class BlockOperator:
    """Self-adjoint operator assembled lazily from symmetric blocks.

    The block generator must be pure: repeated calls with the same block
    number agree bit for bit.  Blocks are cached under a lock, so a built
    operator is immutable and safe to share across threads.

    ``lower_bound`` is a declared bound with every block's smallest
    eigenvalue >= lower_bound; ``None`` flags an indefinite operator, for
    which only the resolvent calculus is available.
    """

    selfadjoint = True

    def __init__(self, block_gen: Callable[[int], SymBlock], *,
                 truth: SpectralTruth | None = None,
                 lower_bound: float | None = None,
                 index_to_block: Callable[[int], int | None] | None = None,
                 name: str = "",
                 scan_limit: int = 100_000):
        self._gen = block_gen
        self._index_to_block = index_to_block
        self.truth = truth if truth is not None else SpectralTruth.unknown()
        self.lower_bound = None if lower_bound is None else float(lower_bound)
        self.name = name
        self._scan_limit = int(scan_limit)
        self._lock = threading.Lock()
        self._blocks: dict[int, SymBlock] = {}
        self._eigs: dict[int, tuple[np.ndarray, np.ndarray]] = {}
        self._owner: dict[int, int] = {}
        self._scanned_upto = 0

    @property
    def is_semibounded(self) -> bool:
        return self.lower_bound is not None

    # -- block access -------------------------------------------------

    def block(self, k: int) -> SymBlock:
        blk = self._blocks.get(k)
        if blk is not None:
            return blk
        with self._lock:
            blk = self._blocks.get(k)
            if blk is not None:
                return blk
            blk = self._gen(k)
            if not isinstance(blk, SymBlock):
                raise StructuralError(f"block generator returned {type(blk)!r} for block {k}")
            for i in blk.indices:
                owner = self._owner.get(i)
                if owner is not None and owner != k:
                    raise StructuralError(
                        f"index {i} belongs to blocks {owner} and {k}; blocks must be disjoint")
                self._owner[i] = k
            self._blocks[k] = blk
            return blk

    def eig(self, k: int) -> tuple[np.ndarray, np.ndarray]:
        """Cached eigendecomposition (w, Q) of block k."""
        got = self._eigs.get(k)
        if got is not None:
            return got
        blk = self.block(k)
        w, q = np.linalg.eigh(blk.matrix)
        if self.lower_bound is not None:
            scale = 1.0 + float(np.max(np.abs(w)))
            if w.min() < self.lower_bound - 1e-12 * scale:
                raise StructuralError(
                    f"block {k} has eigenvalue {w.min()} below the declared "
                    f"lower bound {self.lower_bound}")
        with self._lock:
            self._eigs.setdefault(k, (w, q))
        return self._eigs[k]

    def block_index_of(self, i: int) -> int:
        """Block number containing basis index i; structural error if none."""
        i = int(i)
        if self._index_to_block is not None:
            k = self._index_to_block(i)
            if k is None:
                raise StructuralError(f"basis index {i} is outside every block")
            blk = self.block(k)
            if i not in blk.indices:
                raise StructuralError(
                    f"index map sent basis index {i} to block {k}, which does not contain it")
            return k
        # fallback: scan blocks in generator order
        owner = self._owner.get(i)
        if owner is not None:
            return owner
        k = self._scanned_upto
        while k < self._scan_limit:
            try:
                blk = self.block(k)
            except Exception as exc:  # generator exhausted
                raise StructuralError(f"basis index {i} is outside every block") from exc
            self._scanned_upto = k + 1
            if i in blk.indices:
                return k
            k += 1
        raise StructuralError(
            f"basis index {i} not found in the first {self._scan_limit} blocks")

    def _grouped_support(self, v: SparseVector) -> dict[int, SymBlock]:
        touched: dict[int, SymBlock] = {}
        for i in v.indices:
            k = self.block_index_of(i)
            if k not in touched:
                touched[k] = self.block(k)
        return touched

    # -- action on vectors --------------------------------------------

    def apply(self, v: SparseVector) -> SparseVector:
        """A v, computed exactly blockwise."""
        pairs: list[tuple[int, float]] = []
        for k, blk in self._grouped_support(v).items():
            x = np.array([v.coeff(i) for i in blk.indices])
            y = blk.matrix @ x
            pairs.extend(zip(blk.indices, y))
        return SparseVector.from_pairs(pairs)

    def apply_function(self, tag: FunctionTag, a: float, v: SparseVector) -> SparseVector:
        """f(A) v for f in {resolvent, sqrt_shift, inv_sqrt_shift, neg_power}.

        All tags except the resolvent require a semi-bounded operator and
        a shift strictly below its lower bound.
        """
        self._check_tag(tag, a)
        pairs: list[tuple[int, float]] = []
        for k, blk in self._grouped_support(v).items():
            w, q = self.eig(k)
            vals = _scalar_values(tag, a, w, k)
            x = np.array([v.coeff(i) for i in blk.indices])
            y = q @ (vals * (q.T @ x))
            pairs.extend(zip(blk.indices, y))
        return SparseVector.from_pairs(pairs)

    def _check_tag(self, tag: FunctionTag, a: float) -> None:
        if not isinstance(tag, FunctionTag):
            raise TypeError("tag must be a FunctionTag")
        if tag.kind == "resolvent":
            return
        if self.lower_bound is None:
            raise CalculusDomainError(
                f"{tag.kind} refuses an indefinite operator; only the resolvent is allowed")
        if not a < self.lower_bound:
            raise CalculusDomainError(
                f"shift a={a} must lie strictly below the lower bound {self.lower_bound}")


def truth_spectrum_in(op: BlockOperator, interval: tuple[float, float]) -> list[tuple[float, str, float | None]]:
    """Essential points and discrete eigenvalues of the declared truth
    inside the open interval, as (value, kind, multiplicity) sorted by value.
    """
    lo, hi = float(interval[0]), float(interval[1])
    if not (math.isfinite(lo) and math.isfinite(hi)):
        raise ValueError("interval must be finite")
    if lo >= hi:
        return []
    truth = op.truth
    if not truth.known:
        raise ValueError("operator declares unknown spectral truth")
    out: list[tuple[float, str, float | None]] = [
        (e, "ess", None) for e in truth.ess_points if lo < e < hi]
    if truth.disc_in is not None:
        out.extend((v, "disc", m) for v, m in truth.disc_in(lo, hi))
    return sorted(out, key=lambda t: t[0])


# ---------------------------------------------------------------------------
# derived operators
# ---------------------------------------------------------------------------

def _mapped_truth(truth: SpectralTruth, tag: FunctionTag, a: float,
                  semibounded: bool) -> SpectralTruth:
    if not truth.known:
        return SpectralTruth.unknown()
    if not semibounded:
        # the mapped spectrum of an indefinite operator accumulates at 0 from
        # both sides; no finite window description is attempted
        return SpectralTruth.unknown()

    if tag.kind == "sqrt_shift":
        fwd = lambda x: math.sqrt(x - a)
        inv = lambda y: a + y * y
        decreasing = False
        compactifies = False
    elif tag.kind == "resolvent":
        fwd = lambda x: 1.0 / (x - a)
        inv = lambda y: a + 1.0 / y
        decreasing = True
        compactifies = True
    elif tag.kind == "inv_sqrt_shift":
        fwd = lambda x: (x - a) ** -0.5
        inv = lambda y: a + y ** -2.0
        decreasing = True
        compactifies = True
    else:  # neg_power
        alpha = tag.alpha
        if alpha == 0.0:
            return SpectralTruth.from_points(disc=((1.0, 1),), unbounded_above=False)
        fwd = lambda x: (x - a) ** (-alpha)
        inv = lambda y: a + y ** (-1.0 / alpha)
        decreasing = True
        compactifies = True

    ess = [fwd(e) for e in truth.ess_points]
    if truth.unbounded_above and compactifies:
        ess.append(0.0)
    ess_t = tuple(sorted(ess))
    unbounded_above = truth.unbounded_above and not compactifies
    base_disc = truth.disc_in
    base_kernel = truth.kernel_mult_at

    def disc_in(lo, hi):
        if base_disc is None:
            return []
        if decreasing:
            if hi <= 0.0:
                return []
            x_lo = inv(hi)
            if lo > 0.0:
                x_hi = inv(lo)
            elif truth.unbounded_above:
                raise AccumulationError(
                    "window touches the accumulation point 0 of the mapped spectrum")
            else:
                x_hi = math.inf
            got = base_disc(x_lo, x_hi)
        else:
            lo_eff = max(lo, 0.0)
            if hi <= lo_eff:
                return []
            got = base_disc(inv(lo_eff), inv(hi))
        return sorted((fwd(x), m) for x, m in got)

    def kernel_mult_at(lam):
        if base_kernel is None:
            return 0
        if decreasing and lam <= 0.0:
            return 0
        if not decreasing and lam < 0.0:
            return 0
        return base_kernel(inv(lam)) if lam != 0.0 or not decreasing else 0

    return SpectralTruth(ess_t, disc_in, kernel_mult_at,
                         unbounded_above=unbounded_above, unbounded_below=False)


def function_of(op: BlockOperator, tag: FunctionTag, a: float, *,
                name: str = "") -> BlockOperator:
    """The operator f(A) with the same block structure as A.

    Each block of f(A) is assembled from the eigendecomposition of the
    corresponding block of A, so the two operators stay aligned blockwise.
    """
    op._check_tag(tag, a)

    def gen(k: int) -> SymBlock:
        blk = op.block(k)
        w, q = op.eig(k)
        vals = _scalar_values(tag, a, w, k)
        mat = outer_sum(list(zip(vals, q.T)), blk.dim)
        return SymBlock(blk.indices, mat)

    if op.lower_bound is None:
        lower = None
    elif tag.kind == "sqrt_shift":
        lower = math.sqrt(op.lower_bound - a)
    else:
        lower = 0.0

    return BlockOperator(
        gen,
        truth=_mapped_truth(op.truth, tag, a, op.is_semibounded),
        lower_bound=lower,
        index_to_block=op._index_to_block or op.block_index_of,
        name=name or (f"{tag.kind}({op.name or 'op'}, a={a})"),
    )


def diagonal_operator(values: Sequence[float], *,
                      truth: SpectralTruth | None = None,
                      name: str = "diagonal") -> BlockOperator:
    """Finite diagonal operator with 1x1 blocks; handy for tests and demos."""
    vals = tuple(float(v) for v in values)
    if not vals:
        raise ValueError("diagonal operator needs at least one entry")

    def gen(k: int) -> SymBlock:
        if not 0 <= k < len(vals):
            raise StructuralError(f"block {k} outside the diagonal range")
        return SymBlock((k,), np.array([[vals[k]]]))

    if truth is None:
        counts: dict[float, int] = {}
        for v in vals:
            counts[v] = counts.get(v, 0) + 1
        truth = SpectralTruth.from_points(disc=sorted(counts.items()))

    return BlockOperator(
        gen, truth=truth, lower_bound=min(vals),
        index_to_block=lambda i: i if 0 <= i < len(vals) else None,
        name=name)


def with_rank_one(op: BlockOperator, direction: SparseVector, mu: float, *,
                  name: str = "") -> BlockOperator:
    """A + mu |u><u| for a unit vector u supported inside a single block.

    The declared truth is adjusted exactly: the edited block's old isolated
    eigenvalues are removed from the discrete list and its new ones added;
    essential points are untouched (the perturbation is finite rank).
    """
    u = direction.unit()
    ks = {op.block_index_of(i) for i in u.indices}
    if len(ks) != 1:
        raise ValueError("rank-one direction must be supported in a single block")
    k0 = ks.pop()
    blk0 = op.block(k0)
    x = np.array([u.coeff(i) for i in blk0.indices])
    new_mat = blk0.matrix + mu * np.outer(x, x)
    new_block = SymBlock(blk0.indices, new_mat)
    w_old = np.linalg.eigvalsh(blk0.matrix)
    w_new = np.linalg.eigvalsh(new_mat)

    def gen(k: int) -> SymBlock:
        return new_block if k == k0 else op.block(k)

    lower = op.lower_bound
    if lower is not None:
        lower = min(lower, float(w_new.min()))

    truth = op.truth
    if truth.known:
        ess_t = truth.ess_points
        base_disc = truth.disc_in

        def near_ess(w):
            return any(abs(w - e) <= 1e-9 * (1.0 + abs(e)) for e in ess_t)

        def disc_in(lo, hi):
            entries = [list(t) for t in (base_disc(lo, hi) if base_disc else [])]
            for w in w_old:
                if not lo < w < hi or near_ess(w):
                    continue
                tol = 1e-9 * (1.0 + abs(w))
                hit = min(entries, key=lambda e: abs(e[0] - w), default=None)
                if hit is None or abs(hit[0] - w) > tol:
                    raise ValueError(
                        f"declared truth lacks eigenvalue {w} of the edited block")
                hit[1] -= 1
            for w in w_new:
                if not lo < w < hi or near_ess(w):
                    continue
                tol = 1e-9 * (1.0 + abs(w))
                hit = min(entries, key=lambda e: abs(e[0] - w), default=None)
                if hit is not None and abs(hit[0] - w) <= tol:
                    hit[1] += 1
                else:
                    entries.append([float(w), 1])
            return sorted((v, m) for v, m in entries if m > 0)

        def kernel_mult_at(lam):
            if near_ess(lam):
                return truth.kernel_mult_at(lam) if truth.kernel_mult_at else math.inf
            tol = 1e-9 * (1.0 + abs(lam))
            return sum(m for v, m in disc_in(lam - tol, lam + tol))

        truth = SpectralTruth(ess_t, disc_in, kernel_mult_at,
                              truth.unbounded_above, truth.unbounded_below)

    return BlockOperator(
        gen, truth=truth, lower_bound=lower,
        index_to_block=op._index_to_block or op.block_index_of,
        name=name or f"{op.name or 'op'}+{mu}*proj")
