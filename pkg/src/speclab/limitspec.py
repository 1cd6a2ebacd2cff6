"""Limit-set estimation from finite-level spectra, Hausdorff distances, and
classification of limit points into essential / discrete / pollution.

Weak convergence to zero can never be observed at finite level; it is
proxied by the smallest singular value of the overlap matrix between a
cluster's eigenvectors and a fixed leading window of the ambient basis.
Reports always state the window dimension used and never claim more.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ._parallel import parallel_map
from .errors import AccumulationError, WindowTooSmallError
from .galerkin import CompressionResult, GalerkinSequence, compress
from .opcore import BlockOperator, SparseVector, SpectralTruth

LABELS = ("essential", "discrete", "pollution", "undetermined")


@dataclass(frozen=True)
class ClassifyConfig:
    """Tolerances for linking, separation and the weak-null proxy.

    Defaults suit the catalog, whose drifts scale like 1/n and separate
    cleanly at levels up to a few hundred.
    """

    link_tol: float = 1e-3          # eigenvalue linking radius, scaled by 1 + |lambda|
    cluster_sep: float = 1e-2       # distance below which a center matches the truth
    weak_null_tol: float = 1e-6     # sigma_min below this certifies window-nullity
    rank_eps: float = 1e-2          # half-width for spectral rank counts
    sigma_floor: float = 1e-3       # sigma_min above this counts as bounded away from 0
    overlap_cap: int = 64           # ambient coordinates retained per eigenvector
    member_cap: int = 16            # clusters larger than this skip overlap storage
    probe_index: int = 0            # fixed probe vector for per-vector overlaps


@dataclass
class ClusterDiagnostics:
    window_dims: tuple[int, ...]
    sigma_min_trace: dict[int, list[tuple[int, float]]]
    rank_counts: list[tuple[int, int]]
    probe_overlaps: dict[int, tuple[float, ...]]


@dataclass
class Cluster:
    """One tracked limit point: per-level members, drift, persistence and
    the raw overlap data its classification relies on."""

    center: float
    drift: float
    persistence: int
    schedule: tuple[int, ...]
    present: tuple[int, ...]
    members: dict[int, list[float]]
    member_cols: dict[int, list[int]]
    overlaps: dict[int, np.ndarray] = field(default_factory=dict, repr=False)
    probe_overlaps: dict[int, tuple[float, ...]] = field(default_factory=dict)
    rank_counts: dict[int, int] = field(default_factory=dict)
    label: str = "undetermined"
    diagnostics: ClusterDiagnostics | None = None
    report: dict = field(default_factory=dict)

    @property
    def size(self) -> int:
        return len(self.members[self.present[-1]])

    def is_persistent(self) -> bool:
        half = self.schedule[len(self.schedule) // 2:]
        return all(n in self.members for n in half)

    def sigma_min_at(self, n: int, j: int) -> float:
        rows = self.overlaps.get(n)
        if rows is None:
            raise WindowTooSmallError(
                f"no overlap data stored for cluster at {self.center} (level {n})")
        m = rows.shape[1]
        if j < m:
            raise WindowTooSmallError(
                f"window dimension {j} is smaller than the cluster size {m}")
        if j > rows.shape[0]:
            raise WindowTooSmallError(
                f"window dimension {j} exceeds the stored overlap cap {rows.shape[0]}")
        return float(np.linalg.svd(rows[:j], compute_uv=False)[-1])


@dataclass
class LimitSetEstimate:
    """Clustered limit points of the windowed spectra along a schedule."""

    window: tuple[float, float]
    n_schedule: tuple[int, ...]
    clusters: list[Cluster]
    hausdorff_trace: list[float]
    spectra: dict[int, np.ndarray]
    residuals: dict[int, np.ndarray | None]
    gram_conditions: dict[int, float]

    def centers(self) -> tuple[float, ...]:
        return tuple(c.center for c in self.clusters)

    def labelled_centers(self, labels: Sequence[str]) -> tuple[float, ...]:
        return tuple(c.center for c in self.clusters if c.label in labels)

    def flow_rows(self) -> list[tuple]:
        """Spectral-flow rows (n, eigenvalue_index, value, cluster_id,
        sigma_min, rank_count, residual)."""
        owner: dict[tuple[int, int], int] = {}
        for cid, cl in enumerate(self.clusters):
            for n, cols in cl.member_cols.items():
                for col in cols:
                    owner[(n, col)] = cid
        rows = []
        for n in self.n_schedule:
            vals = self.spectra[n]
            res = self.residuals.get(n)
            for pos, val in enumerate(vals):
                cid = owner.get((n, pos), -1)
                sigma = math.nan
                rank = 0
                if cid >= 0:
                    cl = self.clusters[cid]
                    rank = cl.rank_counts.get(n, 0)
                    rows_n = cl.overlaps.get(n)
                    if rows_n is not None:
                        j = min(rows_n.shape[0], rows_n.shape[1] + 2)
                        sigma = cl.sigma_min_at(n, j)
                rows.append((n, pos, float(val), cid, sigma, rank,
                             float(res[pos]) if res is not None else math.nan))
        return rows

    def to_json(self) -> dict:
        return {
            "window": list(self.window),
            "n_schedule": list(self.n_schedule),
            "hausdorff_trace": list(self.hausdorff_trace),
            "clusters": [cluster_report(c) for c in self.clusters],
        }


def cluster_report(cl: Cluster) -> dict:
    rep = {
        "center": cl.center,
        "drift": cl.drift,
        "persistence": cl.persistence,
        "label": cl.label,
        "size": cl.size,
        "present": list(cl.present),
        "rank_counts": {str(n): cl.rank_counts.get(n, 0) for n in cl.schedule},
    }
    rep.update(cl.report)
    return rep


# ---------------------------------------------------------------------------
# distances
# ---------------------------------------------------------------------------

def hausdorff(set_a: Sequence[float], set_b: Sequence[float]) -> float:
    """Hausdorff distance between two finite nonempty sets of reals."""
    a = np.asarray(list(set_a), dtype=float)
    b = np.asarray(list(set_b), dtype=float)
    if a.size == 0 or b.size == 0:
        raise ValueError("hausdorff distance needs nonempty sets")
    gaps = np.abs(a[:, None] - b[None, :])
    return float(max(gaps.min(axis=1).max(), gaps.min(axis=0).max()))


# ---------------------------------------------------------------------------
# estimation
# ---------------------------------------------------------------------------

def _chain_groups(values: np.ndarray, tol: float) -> list[list[int]]:
    """Indices grouped by chaining neighbours closer than tol * (1 + |v|)."""
    groups: list[list[int]] = []
    run: list[int] = []
    for pos, v in enumerate(values):
        if run and abs(v - values[run[-1]]) > tol * (1.0 + abs(v)):
            groups.append(run)
            run = []
        run.append(pos)
    if run:
        groups.append(run)
    return groups


class _Track:
    __slots__ = ("center", "history", "members", "member_cols", "overlaps", "probe")

    def __init__(self):
        self.center = 0.0
        self.history: list[tuple[int, float]] = []
        self.members: dict[int, list[float]] = {}
        self.member_cols: dict[int, list[int]] = {}
        self.overlaps: dict[int, np.ndarray] = {}
        self.probe: dict[int, tuple[float, ...]] = {}


def estimate_limit_set(op: BlockOperator, seq: GalerkinSequence,
                       window: tuple[float, float], n_schedule: Sequence[int],
                       tol: float = 1e-3, *,
                       config: ClassifyConfig | None = None,
                       want_vectors: bool = True,
                       gram_cap: float = 1e8) -> LimitSetEstimate:
    """Track windowed eigenvalues across the schedule and report the
    clusters that persist over its last half.

    Linking radius is tol * (1 + |lambda|); eigenvalues at one level are
    chain-grouped first so multiple eigenvalues converging to one point
    form a single cluster.  Clusters escaping the window are dropped.
    """
    cfg = config or ClassifyConfig()
    lo, hi = float(window[0]), float(window[1])
    if not lo < hi:
        raise ValueError("window is empty")
    schedule = [int(n) for n in n_schedule]
    if len(schedule) < 4:
        raise ValueError("schedule too short: need at least 4 levels")
    if any(b <= a for a, b in zip(schedule, schedule[1:])):
        raise ValueError("schedule must be strictly increasing")

    results: list[CompressionResult] = parallel_map(
        lambda n: compress(op, seq, n, want_vectors=want_vectors, gram_cap=gram_cap),
        schedule)

    spectra: dict[int, np.ndarray] = {}
    residuals: dict[int, np.ndarray | None] = {}
    gram: dict[int, float] = {}
    tracks: list[_Track] = []

    for n, res in zip(schedule, results):
        w = res.eigenvalues
        keep = np.nonzero((w > lo) & (w < hi))[0]
        vals = w[keep]
        spectra[n] = vals
        residuals[n] = res.residuals[keep] if res.residuals is not None else None
        gram[n] = res.gram_condition

        all_rows = None
        if want_vectors and res.vectors is not None:
            all_rows = res.overlap_rows(range(cfg.overlap_cap))

        groups = _chain_groups(vals, tol)
        centers = [float(np.mean(vals[g])) for g in groups]

        # greedy nearest matching of groups onto existing tracks
        order = sorted(
            ((abs(t.center - c), gi, ti)
             for gi, c in enumerate(centers)
             for ti, t in enumerate(tracks)
             if abs(t.center - c) <= tol * (1.0 + abs(c))),
            key=lambda t3: t3[0])
        taken_groups: set[int] = set()
        taken_tracks: set[int] = set()
        assign: dict[int, int] = {}
        for _, gi, ti in order:
            if gi in taken_groups or ti in taken_tracks:
                continue
            assign[gi] = ti
            taken_groups.add(gi)
            taken_tracks.add(ti)

        for gi, g in enumerate(groups):
            ti = assign.get(gi)
            if ti is None:
                track = _Track()
                tracks.append(track)
            else:
                track = tracks[ti]
            c = centers[gi]
            track.center = c
            track.history.append((n, c))
            track.members[n] = [float(v) for v in vals[g]]
            track.member_cols[n] = [int(p) for p in g]
            if all_rows is not None and len(g) <= cfg.member_cap:
                cols = keep[g]
                track.overlaps[n] = all_rows[:, cols].copy()
                if cfg.probe_index < cfg.overlap_cap:
                    track.probe[n] = tuple(
                        float(abs(x)) for x in all_rows[cfg.probe_index, cols])

    trace = []
    for a, b in zip(schedule, schedule[1:]):
        if spectra[a].size and spectra[b].size:
            trace.append(hausdorff(spectra[a], spectra[b]))
        else:
            trace.append(math.nan)

    half = schedule[len(schedule) // 2:]
    clusters: list[Cluster] = []
    for t in tracks:
        if not all(n in t.members for n in half):
            continue
        present = tuple(sorted(t.members))
        drift = abs(t.history[-1][1] - t.history[-2][1]) if len(t.history) > 1 else 0.0
        persistence = 0
        for n in reversed(schedule):
            if n in t.members:
                persistence += 1
            else:
                break
        cl = Cluster(center=t.center, drift=drift, persistence=persistence,
                     schedule=tuple(schedule), present=present,
                     members=t.members, member_cols=t.member_cols,
                     overlaps=t.overlaps, probe_overlaps=t.probe)
        for n in schedule:
            vals = spectra[n]
            cl.rank_counts[n] = int(np.count_nonzero(
                (vals > cl.center - cfg.rank_eps) & (vals < cl.center + cfg.rank_eps)))
        clusters.append(cl)

    clusters.sort(key=lambda c: c.center)
    return LimitSetEstimate((lo, hi), tuple(schedule), clusters, trace,
                            spectra, residuals, gram)


# ---------------------------------------------------------------------------
# weak-null proxy
# ---------------------------------------------------------------------------

def weak_null_score(vectors: Sequence[SparseVector], j: int) -> float:
    """Smallest singular value of the j x m overlap matrix between the
    first j ambient basis vectors and the given unit vectors.

    Zero exactly when some unit combination of the vectors is orthogonal
    to the whole window; this is the finite proxy for weak nullity.
    """
    m = len(vectors)
    if j < m:
        raise WindowTooSmallError(f"window dimension {j} < vector count {m}")
    rows = np.zeros((j, m))
    for col, v in enumerate(vectors):
        for i, c in zip(v.indices, v.values):
            if i < j:
                rows[i, col] = c
    return float(np.linalg.svd(rows, compute_uv=False)[-1])


def weak_null_scores(per_level: dict[int, Sequence[SparseVector]], j: int) -> dict[int, float]:
    return {n: weak_null_score(vs, j) for n, vs in per_level.items()}


# ---------------------------------------------------------------------------
# classification
# ---------------------------------------------------------------------------

def _last_third(schedule: Sequence[int]) -> list[int]:
    k = math.ceil(len(schedule) / 3)
    return list(schedule[-k:])


def _window_dims(cfg: ClassifyConfig, m: int, mult: int) -> tuple[int, ...]:
    j1 = m + mult + 2
    j2 = 2 * (m + mult) + 4
    dims = sorted({min(j, cfg.overlap_cap) for j in (j1, j2)})
    return tuple(dims)


def _sigma_traces(cl: Cluster, dims: Sequence[int],
                  tail: Sequence[int]) -> dict[int, list[tuple[int, float]]]:
    out: dict[int, list[tuple[int, float]]] = {}
    for j in dims:
        trace = []
        for n in tail:
            if n in cl.members:
                trace.append((n, cl.sigma_min_at(n, j)))
        if not trace:
            raise WindowTooSmallError("no overlap data on the schedule tail")
        out[j] = trace
    return out


def classify_cluster(cl: Cluster, truth: SpectralTruth | None,
                     config: ClassifyConfig | None = None) -> tuple[str, dict]:
    """Label one persistent cluster against the declared truth.

    essential: the center sits on the essential spectrum, or it matches a
    discrete eigenvalue whose finite-level rank exceeds the multiplicity.
    discrete: the center matches a discrete eigenvalue, ranks agree, and
    the weak-null proxy stays bounded away from zero.
    pollution: the center misses the spectrum entirely and every tested
    overlap window certifies weak nullity.
    Conflicting diagnostics are reported as undetermined, never guessed.
    """
    cfg = config or ClassifyConfig()
    c = cl.center
    tail = _last_third(cl.schedule)
    report: dict = {"center": c, "tail_levels": tail}

    def done(label: str, reason: str) -> tuple[str, dict]:
        report["reason"] = reason
        cl.label = label
        cl.report = report
        return label, report

    if truth is None or not truth.known:
        return done("undetermined", "spectral truth unknown")
    if not cl.is_persistent():
        return done("undetermined", "cluster not persistent over the last half")

    d_ess = truth.nearest_ess_distance(c)
    report["ess_distance"] = d_ess
    if d_ess <= cfg.cluster_sep:
        return done("essential", "center matches an essential spectral point")

    try:
        matches = truth.disc_near(c, cfg.cluster_sep)
    except AccumulationError as exc:
        return done("undetermined", f"truth query failed: {exc}")

    ranks = [cl.rank_counts.get(n, 0) for n in tail]
    report["rank_tail"] = ranks
    m_ref = max((len(cl.members[n]) for n in tail if n in cl.members), default=cl.size)

    if matches:
        val, mult = min(matches, key=lambda vm: abs(vm[0] - c))
        report["disc_match"] = {"value": val, "multiplicity": mult}
        if all(rk >= mult + 1 for rk in ranks):
            report["rank_excess"] = True
            return done("essential",
                        "finite-level rank exceeds the eigenvalue multiplicity")
        if all(rk == mult for rk in ranks):
            dims = _window_dims(cfg, m_ref, mult)
            report["window_dims"] = list(dims)
            try:
                sig = _sigma_traces(cl, dims, tail)
            except WindowTooSmallError as exc:
                return done("undetermined", f"overlap diagnostics unavailable: {exc}")
            cl.diagnostics = ClusterDiagnostics(dims, sig,
                                                sorted(cl.rank_counts.items()),
                                                cl.probe_overlaps)
            report["sigma_min"] = {str(j): [s for _, s in tr] for j, tr in sig.items()}
            lows = [s for tr in sig.values() for _, s in tr]
            if min(lows) >= cfg.sigma_floor:
                return done("discrete",
                            "rank matches multiplicity and overlaps stay bounded away from zero")
            if max(lows) < cfg.weak_null_tol:
                return done("undetermined",
                            "rank matches multiplicity yet eigenvectors are window-null")
            return done("undetermined",
                        "weak-null proxy is neither bounded away from zero nor null")
        return done("undetermined", "rank counts disagree across the schedule tail")

    # off the declared spectrum: pollution needs certified weak nullity
    dims = _window_dims(cfg, m_ref, 0)
    report["window_dims"] = list(dims)
    try:
        sig = _sigma_traces(cl, dims, tail)
    except WindowTooSmallError as exc:
        return done("undetermined", f"overlap diagnostics unavailable: {exc}")
    cl.diagnostics = ClusterDiagnostics(dims, sig, sorted(cl.rank_counts.items()),
                                        cl.probe_overlaps)
    report["sigma_min"] = {str(j): [s for _, s in tr] for j, tr in sig.items()}
    if all(s < cfg.weak_null_tol for tr in sig.values() for _, s in tr):
        return done("pollution",
                    "center misses the spectrum; overlaps certify window-nullity "
                    f"up to dimension {max(dims)}")
    return done("undetermined",
                "center misses the spectrum but weak nullity is not certified")


def classify_estimate(est: LimitSetEstimate, truth: SpectralTruth | None,
                      config: ClassifyConfig | None = None) -> list[tuple[str, dict]]:
    return [classify_cluster(cl, truth, config) for cl in est.clusters]
