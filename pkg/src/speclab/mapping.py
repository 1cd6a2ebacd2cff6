"""Spectral correspondence between a semi-bounded operator's compressions
and compressions of its resolvent, at finite level and in the limit.

For a < inf spec(A) the map x -> (x - a)^(-1) carries the level-n spectrum
onto the spectrum of the resolvent compressed to the transformed subspaces
exactly; for strongly indefinite operators the analogous statement fails,
and the failure is demonstrated on the rotated indefinite model.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .catalog import get_example
from .errors import ShiftError
from .galerkin import GalerkinSequence, compress, transform_sequence
from .limitspec import (ClassifyConfig, LimitSetEstimate, classify_estimate,
                        estimate_limit_set, hausdorff)
from .opcore import RESOLVENT, SQRT_SHIFT, BlockOperator, function_of

ESSENTIAL_FAMILY = ("essential", "pollution")


def _require_shift(op: BlockOperator, a: float) -> None:
    if op.lower_bound is None:
        raise ShiftError("mapping checks require a semi-bounded operator")
    if not a < op.lower_bound:
        raise ShiftError(
            f"shift a={a} must lie strictly below the lower bound {op.lower_bound}")


@dataclass
class MappingCheck:
    """Finite-level comparison of sigma(A_n) with the resolvent-side spectrum."""

    a: float
    n: int
    forward: list[tuple[float, float]]        # (lambda, (lambda - a)^(-1))
    resolvent_spectrum: np.ndarray
    max_mismatch: float
    paired_mismatch: float
    bound: float
    ok: bool
    gram_condition_a: float
    gram_condition_resolvent: float

    def to_json(self) -> dict:
        return {
            "a": self.a,
            "n": self.n,
            "max_mismatch": self.max_mismatch,
            "paired_mismatch": self.paired_mismatch,
            "bound": self.bound,
            "ok": self.ok,
            "gram_condition_a": self.gram_condition_a,
            "gram_condition_resolvent": self.gram_condition_resolvent,
        }

    def paired_rows(self) -> list[tuple[float, float, float, float]]:
        """CSV-ready rows (lambda, image, resolvent_value, mismatch)."""
        lams = [lam for lam, _ in self.forward]
        imgs = [img for _, img in self.forward]
        res_desc = np.sort(self.resolvent_spectrum)[::-1]
        return [(lam, img, float(rv), abs(img - float(rv)))
                for lam, img, rv in zip(lams, imgs, res_desc)]


def check_mapping_at_n(op: BlockOperator, seq: GalerkinSequence, a: float,
                       n: int, *, gram_cap: float = 1e8) -> MappingCheck:
    """Verify that lambda in sigma(A_n) iff (lambda-a)^(-1) lies in the
    spectrum of the resolvent compressed to the square-root-transformed span.
    """
    _require_shift(op, a)
    res_a = compress(op, seq, n, want_vectors=False, gram_cap=gram_cap)
    g_seq = transform_sequence(seq, op, SQRT_SHIFT, a)
    r_op = function_of(op, RESOLVENT, a)
    res_r = compress(r_op, g_seq, n, want_vectors=False, gram_cap=gram_cap)

    lams = res_a.eigenvalues
    mapped = 1.0 / (lams - a)
    mismatch = hausdorff(mapped, res_r.eigenvalues)
    paired = float(np.max(np.abs(mapped[::-1] - res_r.eigenvalues)))
    bound = 1e-9 * (1.0 + float(np.max(np.abs(mapped))))
    return MappingCheck(
        a=float(a), n=int(n),
        forward=[(float(l), float(m)) for l, m in zip(lams, mapped)],
        resolvent_spectrum=res_r.eigenvalues,
        max_mismatch=float(mismatch), paired_mismatch=paired,
        bound=bound, ok=bool(mismatch <= bound),
        gram_condition_a=res_a.gram_condition,
        gram_condition_resolvent=res_r.gram_condition)


@dataclass
class LimitMappingReport:
    """Correspondence of estimated limit sets under x -> (x - a)^(-1)."""

    a: float
    window: tuple[float, float]
    mapped_core: tuple[float, float]
    pairs: list[dict]
    unmatched_resolvent: list[dict]
    zero_cluster: dict | None
    max_pair_distance: float
    labels_agree: bool
    ok: bool
    estimate_a: LimitSetEstimate = field(repr=False, default=None)
    estimate_resolvent: LimitSetEstimate = field(repr=False, default=None)

    def to_json(self) -> dict:
        return {
            "a": self.a,
            "window": list(self.window),
            "mapped_core": list(self.mapped_core),
            "pairs": self.pairs,
            "unmatched_resolvent": self.unmatched_resolvent,
            "zero_cluster": self.zero_cluster,
            "max_pair_distance": self.max_pair_distance,
            "labels_agree": self.labels_agree,
            "ok": self.ok,
        }


def check_limit_mapping(op: BlockOperator, seq: GalerkinSequence, a: float,
                        window: tuple[float, float], n_schedule: Sequence[int], *,
                        config: ClassifyConfig | None = None) -> LimitMappingReport:
    """Estimate limit sets on both sides and verify the image of the
    operator-side set matches the resolvent-side set, labels included.

    When the operator is unbounded above, the resolvent side must show a
    cluster at 0 with no finite preimage; it is reported separately.
    """
    cfg = config or ClassifyConfig()
    _require_shift(op, a)
    lo, hi = float(window[0]), float(window[1])
    if not a < lo:
        raise ShiftError("window must lie strictly above the shift")

    est_a = estimate_limit_set(op, seq, window, n_schedule, tol=cfg.link_tol, config=cfg)
    classify_estimate(est_a, op.truth, cfg)

    g_seq = transform_sequence(seq, op, SQRT_SHIFT, a)
    r_op = function_of(op, RESOLVENT, a)
    m_lo, m_hi = 1.0 / (hi - a), 1.0 / (lo - a)
    pad = cfg.cluster_sep
    if op.truth.known and op.truth.unbounded_above:
        r_window = (min(0.0, m_lo) - pad, m_hi + pad)
    else:
        r_window = (m_lo - pad, m_hi + pad)
    est_r = estimate_limit_set(r_op, g_seq, r_window, n_schedule,
                               tol=cfg.link_tol, config=cfg)
    classify_estimate(est_r, r_op.truth, cfg)

    r_centers = est_r.centers()
    pairs = []
    matched_r: set[int] = set()
    max_dist = 0.0
    labels_agree = True
    for cl in est_a.clusters:
        img = 1.0 / (cl.center - a)
        tol = cfg.link_tol * (1.0 + abs(img)) \
            + cfg.link_tol * (1.0 + abs(cl.center)) / (cl.center - a) ** 2
        if r_centers:
            j = int(np.argmin([abs(rc - img) for rc in r_centers]))
            dist = abs(r_centers[j] - img)
        else:
            j, dist = -1, math.inf
        ok_pair = dist <= tol
        r_label = est_r.clusters[j].label if j >= 0 else "missing"
        agree = ((cl.label in ESSENTIAL_FAMILY) == (r_label in ESSENTIAL_FAMILY)
                 and "undetermined" not in (cl.label, r_label))
        labels_agree &= agree if ok_pair else False
        if ok_pair:
            matched_r.add(j)
            max_dist = max(max_dist, dist)
        pairs.append({
            "center": cl.center, "label": cl.label, "image": img,
            "resolvent_center": r_centers[j] if j >= 0 else None,
            "resolvent_label": r_label, "distance": dist,
            "tolerance": tol, "matched": ok_pair, "labels_agree": agree,
        })

    unmatched = []
    for j, cl in enumerate(est_r.clusters):
        if j in matched_r:
            continue
        if m_lo < cl.center < m_hi:
            unmatched.append({"center": cl.center, "label": cl.label})

    zero_cluster = None
    if op.truth.known and op.truth.unbounded_above:
        near_zero = [cl for cl in est_r.clusters if abs(cl.center) <= cfg.cluster_sep]
        if near_zero:
            z = min(near_zero, key=lambda cl: abs(cl.center))
            zero_cluster = {"center": z.center, "label": z.label}

    ok = (all(p["matched"] for p in pairs) and labels_agree and not unmatched
          and (zero_cluster is not None
               if (op.truth.known and op.truth.unbounded_above) else True))
    return LimitMappingReport(
        a=float(a), window=(lo, hi), mapped_core=(m_lo, m_hi), pairs=pairs,
        unmatched_resolvent=unmatched, zero_cluster=zero_cluster,
        max_pair_distance=max_dist, labels_agree=labels_agree, ok=ok,
        estimate_a=est_a, estimate_resolvent=est_r)


@dataclass
class IndefiniteFailureReport:
    """Outcome of the strongly indefinite counterexample: an essential-type
    limit point on the operator side whose image stays far from the
    resolvent-side spectrum, the exact opposite of the semi-bounded rule."""

    lam: float
    a_side_center: float
    a_side_label: str
    taylor_rows: list[tuple[int, float, float, bool]]  # (n, value, bound, ok)
    taylor_ok: bool
    resolvent_target: float
    resolvent_min_distance: dict[int, float]
    margin: float
    distance_ok: bool
    contradiction: bool

    def to_json(self) -> dict:
        return {
            "lam": self.lam,
            "a_side_center": self.a_side_center,
            "a_side_label": self.a_side_label,
            "taylor_rows": [list(r) for r in self.taylor_rows],
            "taylor_ok": self.taylor_ok,
            "resolvent_target": self.resolvent_target,
            "resolvent_min_distance": {str(k): v for k, v in
                                       sorted(self.resolvent_min_distance.items())},
            "margin": self.margin,
            "distance_ok": self.distance_ok,
            "contradiction": self.contradiction,
        }


def demonstrate_mapping_failure_indefinite(
        lam: float, n_schedule: Sequence[int], *,
        config: ClassifyConfig | None = None) -> IndefiniteFailureReport:
    """Run the rotated indefinite model: the operator side develops a
    persistent cluster at lam while the compressed resolvent spectrum stays
    inside [-1, 1], at distance >= 1/lam - 1 from 1/lam, for every level.

    The transformed spans coincide with the original ones here (each block
    of |A|^(1/2) is a positive multiple of the identity), so the resolvent
    is compressed onto the same sequence.
    """
    if not 0.0 < lam < 1.0:
        raise ValueError("lam must lie in (0, 1)")
    cfg = config or ClassifyConfig()
    schedule = [int(n) for n in n_schedule]
    if any(n < 2 for n in schedule):
        raise ValueError("schedule levels must be >= 2")

    bundle = get_example("mapping_impossible", {"lam": lam})
    op, seq = bundle.operator, bundle.sequence

    d = min(lam, 1.0 - lam) / 2.0
    est = estimate_limit_set(op, seq, (lam - d, lam + d), schedule,
                             tol=cfg.link_tol, config=cfg)
    classify_estimate(est, op.truth, cfg)
    if not est.clusters:
        raise RuntimeError("no persistent cluster found near lam")
    a_cl = min(est.clusters, key=lambda cl: abs(cl.center - lam))

    taylor_rows = []
    for n in schedule:
        vals = est.spectra[n]
        v = float(vals[np.argmin(np.abs(vals - lam))])
        bound = lam ** 3 / (6.0 * n ** 2)
        taylor_rows.append((n, v, bound, bool(abs(v - lam) <= bound + 1e-12)))
    taylor_ok = all(r[3] for r in taylor_rows)

    r_op = function_of(op, RESOLVENT, 0.0)
    target = 1.0 / lam
    margin = 1.0 / lam - 1.0
    distances = {}
    for n in schedule:
        res = compress(r_op, seq, n, want_vectors=False)
        distances[n] = float(np.min(np.abs(res.eigenvalues - target)))
    distance_ok = all(v >= margin - 1e-9 for v in distances.values())

    contradiction = (abs(a_cl.center - lam) <= cfg.link_tol * (1 + abs(lam))
                     and distance_ok)
    return IndefiniteFailureReport(
        lam=float(lam), a_side_center=a_cl.center, a_side_label=a_cl.label,
        taylor_rows=taylor_rows, taylor_ok=taylor_ok,
        resolvent_target=target, resolvent_min_distance=distances,
        margin=margin, distance_ok=distance_ok, contradiction=contradiction)


def mapping_impossible_angle(lam: float, n: int) -> float:
    """Rotation angle of the final spanning vector at level n."""
    return math.pi / 4.0 - lam / (2.0 * n)
