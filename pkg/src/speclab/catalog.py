"""Named model operators with declared spectral truth, their Galerkin
sequences, and the closed forms of their compression spectra.

Index convention shared by every family: e_0 -> 0, e_n^+ -> 2n-1,
e_n^- -> 2n.  The interleaving is stable regardless of the level range.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import StructuralError
from .galerkin import GalerkinSequence
from .opcore import BlockOperator, SparseVector, SpectralTruth, SymBlock, outer_sum

E0_ID = 0


def plus_id(n: int) -> int:
    return 2 * n - 1


def minus_id(n: int) -> int:
    return 2 * n


def _pair_index_to_block(i: int) -> int | None:
    """Block number for families whose ambient set is the e_n^+/- pairs."""
    return (i + 1) // 2 - 1 if i >= 1 else None


def _pair_block(n: int, matrix: np.ndarray) -> SymBlock:
    return SymBlock((plus_id(n), minus_id(n)), matrix)


def basis_plus(n: int) -> SparseVector:
    return SparseVector.basis(plus_id(n))


def basis_minus(n: int) -> SparseVector:
    return SparseVector.basis(minus_id(n))


# ---------------------------------------------------------------------------
# bundles
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ExpectedLimits:
    """Expected limit sets, split as the paperwork of each example states."""

    limit_set_in_window: Callable[[float, float], tuple[float, ...]]
    ess_subset: tuple[float, ...]
    disc_subset_in_window: Callable[[float, float], tuple[float, ...]]
    pollution_in_window: Callable[[float, float], tuple[float, ...]]


@dataclass(frozen=True)
class ExampleBundle:
    name: str
    operator: object            # BlockOperator, or LeftShiftOperator for the demo
    sequence: GalerkinSequence
    expected: ExpectedLimits
    params: dict[str, float | bool | str] = field(default_factory=dict)
    selfadjoint: bool = True
    partner: BlockOperator | None = None


def _window_filter(points: Sequence[float]):
    pts = tuple(sorted(points))

    def in_window(lo: float, hi: float) -> tuple[float, ...]:
        return tuple(p for p in pts if lo < p < hi)

    return in_window


def _powers_in_window(exponent: float, k_min: int = 1):
    def in_window(lo: float, hi: float) -> tuple[float, ...]:
        out, k = [], k_min
        while float(k) ** exponent < hi:
            v = float(k) ** exponent
            if v > lo:
                out.append(v)
            k += 1
        return tuple(out)

    return in_window


def _signed_integers_in_window(lo: float, hi: float) -> tuple[float, ...]:
    out = [float(k) for k in range(1, int(math.floor(hi)) + 1) if lo < k < hi]
    out += [-float(k) for k in range(1, int(math.floor(-lo)) + 1) if lo < -k < hi]
    return tuple(sorted(out))


# ---------------------------------------------------------------------------
# tail sequences: full pairs up to n-1 plus one final vector
# ---------------------------------------------------------------------------

def _tail_sequence(last_vector: Callable[[int], SparseVector], name: str,
                   regularity: str = "operator_regular") -> GalerkinSequence:
    def gen(n: int) -> list[SparseVector]:
        span: list[SparseVector] = []
        for k in range(1, n):
            span.append(basis_plus(k))
            span.append(basis_minus(k))
        span.append(last_vector(n))
        return span

    return GalerkinSequence(gen, regularity, name)


# ---------------------------------------------------------------------------
# semibounded / indefinite 2x2 families
# ---------------------------------------------------------------------------

def _rotated_frame(n: int) -> tuple[np.ndarray, np.ndarray]:
    """The (e_n^+, e_n^-) coordinates of f_n^+ and f_n^-."""
    c, s = math.cos(1.0 / n), math.sin(1.0 / n)
    return np.array([c, s]), np.array([s, -c])


def _squares_disc_in(exponent: float, k_min: int):
    def disc_in(lo: float, hi: float) -> list[tuple[float, int]]:
        if not math.isfinite(hi):
            raise_accumulation()
        out, k = [], k_min
        while float(k) ** exponent < hi:
            v = float(k) ** exponent
            if v > lo:
                out.append((v, 1))
            k += 1
        return out

    return disc_in


def raise_accumulation():
    from .errors import AccumulationError
    raise AccumulationError("discrete spectrum is unbounded; window must be finite")


def _signed_integers_disc_in(lo: float, hi: float) -> list[tuple[float, int]]:
    if not (math.isfinite(lo) and math.isfinite(hi)):
        raise_accumulation()
    return [(v, 1) for v in _signed_integers_in_window(lo, hi)]


def _proj_rotated(theta: float) -> ExampleBundle:
    op = BlockOperator(
        lambda k: _pair_block(k + 1, np.diag([1.0, 0.0])),
        truth=SpectralTruth.from_points(ess=(0.0, 1.0)),
        lower_bound=0.0,
        index_to_block=_pair_index_to_block,
        name="proj_rotated")

    def last(n: int) -> SparseVector:
        return SparseVector.from_pairs(
            [(plus_id(n), math.cos(theta)), (minus_id(n), math.sin(theta))])

    limit = (0.0, math.cos(theta) ** 2, 1.0)
    expected = ExpectedLimits(
        _window_filter(limit), tuple(sorted(limit)),
        _window_filter(()), _window_filter((math.cos(theta) ** 2,)))
    return ExampleBundle("proj_rotated", op, _tail_sequence(last, "proj_rotated"),
                         expected, {"theta": theta})


def _semibounded_square() -> ExampleBundle:
    def gen(k: int) -> SymBlock:
        n = k + 1
        fp, fm = _rotated_frame(n)
        return _pair_block(n, outer_sum([(float(n) ** 2, fp), (-1.0, fm)], 2))

    op = BlockOperator(
        gen,
        truth=SpectralTruth(
            ess_points=(-1.0,),
            disc_in=_squares_disc_in(2.0, 1),
            kernel_mult_at=lambda lam: (
                math.inf if abs(lam + 1.0) <= 1e-9 else
                1 if (round(math.sqrt(abs(lam))) ** 2 == lam and lam >= 1.0) else 0),
            unbounded_above=True),
        lower_bound=-1.0,
        index_to_block=_pair_index_to_block,
        name="semibounded_square")

    expected = ExpectedLimits(
        lambda lo, hi: tuple(sorted(set(_window_filter((-1.0, 0.0))(lo, hi))
                                    | set(_powers_in_window(2.0)(lo, hi)))),
        (-1.0, 0.0),
        _powers_in_window(2.0),
        _window_filter((0.0,)))
    return ExampleBundle("semibounded_square", op,
                         _tail_sequence(lambda n: basis_minus(n), "semibounded_square"),
                         expected, {})


def _indefinite_integer() -> ExampleBundle:
    def gen(k: int) -> SymBlock:
        n = float(k + 1)
        return _pair_block(k + 1, np.array([[0.0, n], [n, 0.0]]))

    op = BlockOperator(
        gen,
        truth=SpectralTruth(
            ess_points=(),
            disc_in=_signed_integers_disc_in,
            kernel_mult_at=lambda lam: 1 if (abs(lam) >= 1 and lam == round(lam)) else 0,
            unbounded_above=True, unbounded_below=True),
        lower_bound=None,
        index_to_block=_pair_index_to_block,
        name="indefinite_integer")

    expected = ExpectedLimits(
        lambda lo, hi: tuple(sorted(set(_signed_integers_in_window(lo, hi))
                                    | ({0.0} if lo < 0.0 < hi else set()))),
        (0.0,),
        _signed_integers_in_window,
        _window_filter((0.0,)))
    return ExampleBundle("indefinite_integer", op,
                         _tail_sequence(lambda n: basis_minus(n), "indefinite_integer"),
                         expected, {})


def _double_eigenvalue() -> ExampleBundle:
    def gen(k: int) -> SymBlock:
        if k == 0:
            return SymBlock((E0_ID,), np.array([[0.0]]))
        return _pair_block(k, np.diag([1.0, -1.0]))

    op = BlockOperator(
        gen,
        truth=SpectralTruth.from_points(ess=(-1.0, 1.0), disc=((0.0, 1),)),
        lower_bound=-1.0,
        index_to_block=lambda i: 0 if i == 0 else (i + 1) // 2,
        name="double_eigenvalue")

    def alphas(n: int) -> tuple[float, float]:
        ap = math.sqrt((1.0 + 1.0 / n ** 2) / (2.0 * (1.0 - 1.0 / n ** 2)))
        am = -math.sqrt((1.0 - 1.0 / n ** 2) / (2.0 * (1.0 + 1.0 / n ** 2)))
        return ap, am

    def span_gen(n: int) -> list[SparseVector]:
        if n < 2:
            raise ValueError("double_eigenvalue needs level n >= 2")
        ap, am = alphas(n)
        span: list[SparseVector] = []
        for k in range(1, n):
            span.append(basis_plus(k))
            span.append(basis_minus(k))
        for hi, lo_ in ((ap, am), (am, ap)):
            raw = SparseVector.from_pairs(
                [(E0_ID, 1.0), (plus_id(n), hi), (minus_id(n), -lo_)])
            span.append(raw.unit())
        return span

    expected = ExpectedLimits(
        _window_filter((-1.0, 0.0, 1.0)), (-1.0, 0.0, 1.0),
        _window_filter(()), _window_filter(()))
    return ExampleBundle("double_eigenvalue", op,
                         GalerkinSequence(span_gen, "operator_regular", "double_eigenvalue"),
                         expected, {})


def _mapping_impossible(lam: float) -> ExampleBundle:
    def gen(k: int) -> SymBlock:
        n = float(k + 1)
        return _pair_block(k + 1, np.diag([n, -n]))

    op = BlockOperator(
        gen,
        truth=SpectralTruth(
            ess_points=(),
            disc_in=_signed_integers_disc_in,
            kernel_mult_at=lambda x: 1 if (abs(x) >= 1 and x == round(x)) else 0,
            unbounded_above=True, unbounded_below=True),
        lower_bound=None,
        index_to_block=_pair_index_to_block,
        name="mapping_impossible")

    def last(n: int) -> SparseVector:
        th = math.pi / 4.0 - lam / (2.0 * n)
        return SparseVector.from_pairs(
            [(plus_id(n), math.cos(th)), (minus_id(n), math.sin(th))])

    expected = ExpectedLimits(
        lambda lo, hi: tuple(sorted(set(_signed_integers_in_window(lo, hi))
                                    | ({lam} if lo < lam < hi else set()))),
        (lam,),
        _signed_integers_in_window,
        _window_filter((lam,)))
    return ExampleBundle("mapping_impossible", op, _tail_sequence(last, "mapping_impossible"),
                         expected, {"lam": lam})


def _sign_multiplication(rotated: bool, angle: float) -> ExampleBundle:
    op = BlockOperator(
        lambda k: _pair_block(k + 1, np.diag([1.0, -1.0])),
        truth=SpectralTruth.from_points(ess=(-1.0, 1.0)),
        lower_bound=-1.0,
        index_to_block=_pair_index_to_block,
        name="sign_multiplication")

    if rotated:
        def last(n: int) -> SparseVector:
            return SparseVector.from_pairs(
                [(plus_id(n), math.cos(angle)), (minus_id(n), math.sin(angle))])

        seq = _tail_sequence(last, "sign_multiplication_rotated")
        planted = math.cos(2.0 * angle)
        limit = tuple(sorted({-1.0, planted, 1.0}))
        pollution = (planted,) if -1.0 < planted < 1.0 else ()
    else:
        def gen(n: int) -> list[SparseVector]:
            span: list[SparseVector] = []
            for k in range(1, n + 1):
                span.append(basis_plus(k))
                span.append(basis_minus(k))
            return span

        seq = GalerkinSequence(gen, "operator_regular", "sign_multiplication")
        limit = (-1.0, 1.0)
        pollution = ()

    expected = ExpectedLimits(_window_filter(limit), limit,
                              _window_filter(()), _window_filter(pollution))
    return ExampleBundle("sign_multiplication", op, seq, expected,
                         {"rotated": rotated, "angle": angle})


def optimality_operator(side: str, ell: float, r: float) -> BlockOperator:
    """The pair of block families used to probe perturbation stability."""
    if side == "A":
        def gen(k: int) -> SymBlock:
            n = k + 1
            fp, fm = _rotated_frame(n)
            return _pair_block(n, outer_sum([(float(n) ** ell, fp), (1.0, fm)], 2))

        exponent = ell
    else:
        def gen(k: int) -> SymBlock:
            n = float(k + 1)
            return _pair_block(k + 1, np.diag([n ** r, 1.0]))

        exponent = r

    return BlockOperator(
        gen,
        truth=SpectralTruth(
            ess_points=(1.0,),
            disc_in=_squares_disc_in(exponent, 2),
            kernel_mult_at=lambda lam: math.inf if abs(lam - 1.0) <= 1e-9 else (
                1 if any(abs(lam - float(k) ** exponent) <= 1e-9 * (1 + abs(lam))
                         for k in range(2, int(abs(lam) ** (1 / exponent)) + 2)) else 0),
            unbounded_above=True),
        lower_bound=1.0,
        index_to_block=_pair_index_to_block,
        name=f"optimality_{side}")


def _optimality_blocks(ell: float, r: float, side: str) -> ExampleBundle:
    op = optimality_operator(side, ell, r)
    partner = optimality_operator("B" if side == "A" else "A", ell, r)
    exponent = ell if side == "A" else r

    if side == "A" and ell == 2.0:
        ess = (1.0, 2.0)
        pollution = (2.0,)
    else:
        ess = (1.0,)
        pollution = ()

    expected = ExpectedLimits(
        lambda lo, hi: tuple(sorted(set(_window_filter(ess)(lo, hi))
                                    | set(_powers_in_window(exponent, 2)(lo, hi)))),
        ess,
        _powers_in_window(exponent, 2),
        _window_filter(pollution))
    return ExampleBundle("optimality_blocks", op,
                         _tail_sequence(lambda n: basis_minus(n), "optimality_blocks"),
                         expected, {"ell": ell, "r": r, "side": side}, partner=partner)


# ---------------------------------------------------------------------------
# the left shift demo (not self-adjoint)
# ---------------------------------------------------------------------------

class LeftShiftOperator:
    """e_j -> e_{j-1} with e_0 = 0; the compression is a Jordan block.

    Kept only to demonstrate that vanishing projected residuals certify
    nothing without self-adjointness.
    """

    selfadjoint = False
    name = "left_shift"
    lower_bound = None
    truth = SpectralTruth.unknown()

    def apply(self, v: SparseVector) -> SparseVector:
        if v.indices and v.indices[0] == 0:
            raise StructuralError("left shift basis starts at e_1 (index 1)")
        return SparseVector.from_pairs(
            (i - 1, c) for i, c in zip(v.indices, v.values) if i >= 2)


def left_shift_matrix(n: int) -> np.ndarray:
    """Compression of the left shift to span{e_1, ..., e_n}: a Jordan block."""
    if n < 1:
        raise ValueError("level n must be >= 1")
    m = np.zeros((n, n))
    for j in range(1, n):
        m[j - 1, j] = 1.0
    return m


def left_shift_weyl_vector(lam: float, k: int) -> SparseVector:
    """The normalized candidate vector supported on e_1..e_k."""
    if not -1.0 < lam < 1.0:
        raise ValueError("lam must satisfy |lam| < 1")
    if k < 1:
        raise ValueError("k must be >= 1")
    c = math.sqrt((1.0 - lam * lam) / (1.0 - lam ** (2 * k)))
    return SparseVector.from_pairs((i, c * lam ** (i - 1)) for i in range(1, k + 1))


def left_shift_residual(lam: float, k: int) -> tuple[float, float]:
    """Analytic and numerically assembled values of ||A x_k - lam x_k||.

    The analytic value is sqrt((1 - |lam|^2)/(1 - |lam|^(2k))) |lam|^k; the
    numeric one applies the assembled shift matrix to the explicit vector.
    """
    x = left_shift_weyl_vector(lam, k)
    dense = np.zeros(k)
    for i, c in zip(x.indices, x.values):
        dense[i - 1] = c
    resid = left_shift_matrix(k) @ dense - lam * dense
    numeric = float(np.linalg.norm(resid))
    analytic = math.sqrt((1.0 - lam * lam) / (1.0 - abs(lam) ** (2 * k))) * abs(lam) ** k
    return analytic, numeric


def _left_shift_bundle() -> ExampleBundle:
    def gen(n: int) -> list[SparseVector]:
        return [SparseVector.basis(i) for i in range(1, n + 1)]

    expected = ExpectedLimits(_window_filter((0.0,)), (),
                              _window_filter((0.0,)), _window_filter(()))
    return ExampleBundle("left_shift", LeftShiftOperator(),
                         GalerkinSequence(gen, "unknown", "left_shift"),
                         expected, {}, selfadjoint=False)


# ---------------------------------------------------------------------------
# public catalog surface
# ---------------------------------------------------------------------------

CATALOG_ORDER = ("proj_rotated", "semibounded_square", "indefinite_integer",
                 "double_eigenvalue", "mapping_impossible", "sign_multiplication",
                 "optimality_blocks", "left_shift")

_PARAM_SCHEMAS: dict[str, dict[str, dict]] = {
    "proj_rotated": {"theta": {"default": math.pi / 3.0, "range": "(0, pi/2)"}},
    "semibounded_square": {},
    "indefinite_integer": {},
    "double_eigenvalue": {},
    "mapping_impossible": {"lam": {"default": 0.5, "range": "(0, 1)"}},
    "sign_multiplication": {"rotated": {"default": False, "range": "bool"},
                            "angle": {"default": math.pi / 4.0, "range": "(0, pi/2)"}},
    "optimality_blocks": {"ell": {"default": 2.0, "range": "(0, inf)"},
                          "r": {"default": 1.5, "range": "(0, inf)"},
                          "side": {"default": "A", "range": "A|B"}},
    "left_shift": {},
}


def _resolve_params(name: str, params: dict | None) -> dict:
    schema = _PARAM_SCHEMAS[name]
    given = dict(params or {})
    unknown = set(given) - set(schema)
    if unknown:
        raise ValueError(f"unknown parameters for {name}: {sorted(unknown)}")
    out = {key: spec["default"] for key, spec in schema.items()}
    out.update(given)
    return out


def get_example(name: str, params: dict | None = None) -> ExampleBundle:
    """Deterministic (operator, sequence, expected limits) bundle by name."""
    if name not in CATALOG_ORDER:
        raise ValueError(f"unknown example {name!r}; known: {CATALOG_ORDER}")
    p = _resolve_params(name, params)
    if name == "proj_rotated":
        if not 0.0 < p["theta"] < math.pi / 2.0:
            raise ValueError("theta must lie in (0, pi/2)")
        return _proj_rotated(float(p["theta"]))
    if name == "semibounded_square":
        return _semibounded_square()
    if name == "indefinite_integer":
        return _indefinite_integer()
    if name == "double_eigenvalue":
        return _double_eigenvalue()
    if name == "mapping_impossible":
        if not 0.0 < p["lam"] < 1.0:
            raise ValueError("lam must lie in (0, 1)")
        return _mapping_impossible(float(p["lam"]))
    if name == "sign_multiplication":
        if not 0.0 < p["angle"] < math.pi / 2.0:
            raise ValueError("angle must lie in (0, pi/2)")
        return _sign_multiplication(bool(p["rotated"]), float(p["angle"]))
    if name == "optimality_blocks":
        if p["ell"] <= 0.0 or p["r"] <= 0.0:
            raise ValueError("ell and r must be positive")
        if p["side"] not in ("A", "B"):
            raise ValueError("side must be 'A' or 'B'")
        return _optimality_blocks(float(p["ell"]), float(p["r"]), str(p["side"]))
    return _left_shift_bundle()


def closed_form_compression_spectrum(name: str, params: dict | None,
                                     n: int) -> list[tuple[float, int]]:
    """Exact analytic spectrum of the level-n compression, sorted by value,
    used as the oracle against the generalized eigensolver."""
    if n < 1:
        raise ValueError("level n must be >= 1")
    p = _resolve_params(name, params) if name in CATALOG_ORDER else None
    if p is None:
        raise ValueError(f"unknown example {name!r}")

    if name == "proj_rotated":
        c2 = math.cos(p["theta"]) ** 2
        if n == 1:
            return [(c2, 1)]
        return [(0.0, n - 1), (c2, 1), (1.0, n - 1)]

    if name == "semibounded_square":
        drift = n ** 2 * math.sin(1.0 / n) ** 2 - math.cos(1.0 / n) ** 2
        out = [(drift, 1)] + [(float(k * k), 1) for k in range(1, n)]
        if n > 1:
            out.append((-1.0, n - 1))
        return sorted(out)

    if name == "indefinite_integer":
        return [(float(k), 1) for k in range(-(n - 1), n)]

    if name == "double_eigenvalue":
        if n < 2:
            raise ValueError("double_eigenvalue needs level n >= 2")
        eps = 1.0 / n ** 2
        return [(-1.0, n - 1), (-eps, 1), (eps, 1), (1.0, n - 1)]

    if name == "mapping_impossible":
        lam = p["lam"]
        out = [(float(k), 1) for k in range(-(n - 1), n) if k != 0]
        out.append((n * math.sin(lam / n), 1))
        return sorted(out)

    if name == "sign_multiplication":
        if p["rotated"]:
            planted = math.cos(2.0 * p["angle"])
            if n == 1:
                return [(planted, 1)]
            return sorted([(-1.0, n - 1), (planted, 1), (1.0, n - 1)])
        return [(-1.0, n), (1.0, n)]

    if name == "optimality_blocks":
        exponent = p["ell"] if p["side"] == "A" else p["r"]
        if p["side"] == "A":
            drift = n ** exponent * math.sin(1.0 / n) ** 2 + math.cos(1.0 / n) ** 2
            if n == 1:
                return [(drift, 1)]
            out = [(1.0, n), (drift, 1)]
        else:
            if n == 1:
                return [(1.0, 1)]
            out = [(1.0, n + 1)]
        out += [(float(k) ** exponent, 1) for k in range(2, n)]
        return sorted(out)

    # left shift: a Jordan block for every level
    return [(0.0, n)]


def catalog_listing() -> list[dict]:
    """Stable, JSON-ready description of every example."""
    out = []
    for name in CATALOG_ORDER:
        bundle = get_example(name)
        lo, hi = -3.5, 3.5
        out.append({
            "name": name,
            "selfadjoint": bundle.selfadjoint,
            "params": _PARAM_SCHEMAS[name],
            "expected": {
                "window": [lo, hi],
                "limit_set": list(bundle.expected.limit_set_in_window(lo, hi)),
                "ess_subset": list(bundle.expected.ess_subset),
                "pollution": list(bundle.expected.pollution_in_window(lo, hi)),
            },
        })
    return out
