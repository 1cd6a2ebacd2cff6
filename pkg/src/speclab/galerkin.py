"""Galerkin subspaces and compressions posed as generalized symmetric
eigenproblems, plus graph-norm regularity probes."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.linalg

from .errors import GramConditionError
from .opcore import BlockOperator, FunctionTag, SparseVector

REGULARITY_CLASSES = ("operator_regular", "form_regular", "unknown")

# eigenvalues closer than this (relative) are treated as one multiple eigenvalue
GROUP_RTOL = 1e-8


@dataclass(frozen=True)
class GalerkinSequence:
    """Nested-in-dimension family of spanning sets, one list of sparse
    vectors per level n >= 1."""

    span_gen: Callable[[int], list[SparseVector]]
    regularity_class: str = "unknown"
    name: str = ""

    def __post_init__(self):
        if self.regularity_class not in REGULARITY_CLASSES:
            raise ValueError(f"regularity_class must be one of {REGULARITY_CLASSES}")

    def span(self, n: int) -> list[SparseVector]:
        if n < 1:
            raise ValueError("level n must be >= 1")
        return self.span_gen(n)


def group_eigenvalues(w: Sequence[float], rtol: float = GROUP_RTOL) -> list[tuple[float, int]]:
    """Collapse a sorted eigenvalue list into (value, multiplicity) groups
    using the gap tolerance rtol * (1 + |lambda|)."""
    groups: list[tuple[float, int]] = []
    run: list[float] = []
    for x in w:
        if run and abs(x - run[-1]) > rtol * (1.0 + abs(x)):
            groups.append((float(np.mean(run)), len(run)))
            run = []
        run.append(float(x))
    if run:
        groups.append((float(np.mean(run)), len(run)))
    return groups


def _local_assembly(op: BlockOperator, span: list[SparseVector]):
    """Dense operator restriction and span coordinates over the union of
    all blocks touched by the span."""
    touched: dict[int, None] = {}
    for v in span:
        for i in v.indices:
            touched.setdefault(op.block_index_of(i))
    blocks = [op.block(k) for k in touched]
    ids = sorted(i for blk in blocks for i in blk.indices)
    pos = {i: p for p, i in enumerate(ids)}
    dim = len(ids)
    a_local = np.zeros((dim, dim))
    for blk in blocks:
        p = [pos[i] for i in blk.indices]
        a_local[np.ix_(p, p)] = blk.matrix
    v_mat = np.zeros((dim, len(span)))
    for j, v in enumerate(span):
        for i, c in zip(v.indices, v.values):
            v_mat[pos[i], j] = c
    return ids, a_local, v_mat


def _orthonormalize_groups(x: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Two-pass re-orthonormalization of eigenvector columns, restricted to
    groups of (numerically) equal eigenvalues so eigenpairs stay intact."""
    out = x.copy()
    start = 0
    for _, mult in group_eigenvalues(w):
        cols = slice(start, start + mult)
        block = out[:, cols]
        for _ in range(2):
            q, _r = np.linalg.qr(block)
            block = q
        out[:, cols] = block
        start += mult
    return out


@dataclass(frozen=True)
class CompressionResult:
    """Spectrum of the compression of an operator to one Galerkin level.

    Eigenvalues are sorted with multiplicity; eigenvectors are stored as an
    orthonormal dense column block over the touched ambient indices and
    materialized as sparse vectors on demand.
    """

    n: int
    eigenvalues: np.ndarray
    gram_condition: float
    residuals: np.ndarray | None
    ambient_ids: tuple[int, ...]
    vectors: np.ndarray | None = field(repr=False, default=None)

    @property
    def dim(self) -> int:
        return len(self.eigenvalues)

    def eigenvalue_groups(self) -> list[tuple[float, int]]:
        return group_eigenvalues(self.eigenvalues)

    def eigenvector(self, j: int) -> SparseVector:
        if self.vectors is None:
            raise ValueError("compression was computed without eigenvectors")
        col = self.vectors[:, j]
        return SparseVector.from_pairs(
            (i, c) for i, c in zip(self.ambient_ids, col) if c != 0.0)

    @property
    def eigenvectors_ambient(self) -> list[SparseVector]:
        return [self.eigenvector(j) for j in range(self.dim)]

    def overlap_rows(self, ids: Sequence[int]) -> np.ndarray:
        """Coordinates of all eigenvectors at the given ambient indices,
        returned as a len(ids) x dim array."""
        if self.vectors is None:
            raise ValueError("compression was computed without eigenvectors")
        pos = {i: p for p, i in enumerate(self.ambient_ids)}
        rows = np.zeros((len(ids), self.dim))
        for r, i in enumerate(ids):
            p = pos.get(i)
            if p is not None:
                rows[r] = self.vectors[p]
        return rows


def compress(op: BlockOperator, seq: GalerkinSequence, n: int, *,
             gram_cap: float = 1e8, want_vectors: bool = True) -> CompressionResult:
    """Solve M x = lambda S x with M_ij = <v_i, A v_j> and S the Gram matrix.

    The generalized problem is reduced through a Cholesky factor of S by the
    LAPACK driver; an ill-conditioned Gram matrix is refused rather than
    regularized, since pollution studies are sensitive to subspace identity.
    """
    if not getattr(op, "selfadjoint", False):
        raise TypeError("compress requires a self-adjoint block operator")
    span = seq.span(n)
    if not span:
        raise ValueError(f"empty spanning set at level {n}")
    _ids, a_local, v_mat = _local_assembly(op, span)
    s_mat = v_mat.T @ v_mat
    m_mat = v_mat.T @ (a_local @ v_mat)

    s_eigs = np.linalg.eigvalsh(s_mat)
    if s_eigs[0] <= 0.0:
        raise GramConditionError(
            f"Gram matrix at level {n} is numerically singular", condition=math.inf)
    condition = float(s_eigs[-1] / s_eigs[0])
    if condition > gram_cap:
        raise GramConditionError(
            f"Gram condition {condition:.3e} at level {n} exceeds cap {gram_cap:.1e}; "
            "spanning set is near-dependent", condition=condition)

    if not want_vectors:
        w = scipy.linalg.eigh(m_mat, s_mat, eigvals_only=True)
        return CompressionResult(n, w, condition, None, tuple(_ids), None)

    w, coef = scipy.linalg.eigh(m_mat, s_mat)
    x = v_mat @ coef                     # ambient coordinates, S-orthonormal
    x = _orthonormalize_groups(x, w)     # ambient-orthonormal within groups
    # residual ||pi_n (A - lambda) x||: the columns of x span L_n
    ax = a_local @ x
    proj = x.T @ ax                      # coefficients of pi_n A x in the x-basis
    proj[np.diag_indices_from(proj)] -= w
    residuals = np.linalg.norm(proj, axis=0)
    return CompressionResult(n, w, condition, residuals, tuple(_ids), x)


def regularity_probe(op, seq: GalerkinSequence, probe_indices: Sequence[int],
                     n_max: int) -> dict[int, np.ndarray]:
    """Graph-norm distance from each probe basis vector to the levels.

    For a probe f and level n the value is min over g in L_n of the stacked
    least-squares residual sqrt(||g - f||^2 + ||A(g - f)||^2), the natural
    numerical proxy for graph-norm approximation.  Works for any operator
    exposing ``apply`` on sparse vectors.
    """
    table: dict[int, np.ndarray] = {}
    for p in probe_indices:
        f = SparseVector.basis(p)
        af = op.apply(f)
        dists = np.empty(n_max)
        for n in range(1, n_max + 1):
            span = seq.span(n)
            aspan = [op.apply(v) for v in span]
            ids = sorted({i for v in span for i in v.indices}
                         | {i for v in aspan for i in v.indices}
                         | set(f.indices) | set(af.indices))
            pos = {i: r for r, i in enumerate(ids)}
            dim = len(ids)
            stack = np.zeros((2 * dim, len(span)))
            for j, (v, av) in enumerate(zip(span, aspan)):
                for i, c in zip(v.indices, v.values):
                    stack[pos[i], j] = c
                for i, c in zip(av.indices, av.values):
                    stack[dim + pos[i], j] = c
            rhs = np.zeros(2 * dim)
            for i, c in zip(f.indices, f.values):
                rhs[pos[i]] = c
            for i, c in zip(af.indices, af.values):
                rhs[dim + pos[i]] = c
            sol, *_ = np.linalg.lstsq(stack, rhs, rcond=None)
            dists[n - 1] = float(np.linalg.norm(stack @ sol - rhs))
        table[int(p)] = dists
    return table


def transform_sequence(seq: GalerkinSequence, op: BlockOperator, tag: FunctionTag,
                       a: float, *, normalize: bool = True,
                       name: str = "") -> GalerkinSequence:
    """New sequence spanned by f(A) v_i.

    Spanning vectors are unit-normalized by default (a diagonal re-spanning,
    so the subspace is unchanged) to keep the Gram matrix well conditioned.
    The transformed sequence makes no regularity promise.
    """
    op._check_tag(tag, a)

    def gen(n: int) -> list[SparseVector]:
        out = [op.apply_function(tag, a, v) for v in seq.span(n)]
        return [v.unit() for v in out] if normalize else out

    return GalerkinSequence(gen, "unknown",
                            name or (f"{tag.kind}[{seq.name or 'seq'}]"))


def subspace_distance(span_a: Sequence[SparseVector],
                      span_b: Sequence[SparseVector]) -> float:
    """sin of the largest principal angle between two equal-dimension spans."""
    ids = sorted({i for v in list(span_a) + list(span_b) for i in v.indices})
    pos = {i: r for r, i in enumerate(ids)}

    def dense(span):
        m = np.zeros((len(ids), len(span)))
        for j, v in enumerate(span):
            for i, c in zip(v.indices, v.values):
                m[pos[i], j] = c
        q, _ = np.linalg.qr(m)
        return q

    qa, qb = dense(span_a), dense(span_b)
    if qa.shape[1] != qb.shape[1]:
        return 1.0
    sv = np.linalg.svd(qa.T @ qb, compute_uv=False)
    cos_min = float(np.clip(sv.min(), 0.0, 1.0))
    return math.sqrt(max(0.0, 1.0 - cos_min * cos_min))
