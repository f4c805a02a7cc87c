"""Susceptibilities, kernel RG flow, criticality search and universality classes.

The layer-to-layer evolution of the single-input kernel K00 and its two-input
perturbations dK1, dK2 is

    K00'  = C_b + C_W g(K00)
    dK1'  = chi_par(K00) dK1
    dK2'  = chi_perp(K00) dK2 + h(K00) dK1^2

with g(K) = <sigma^2>_K, chi_par = C_W g'(K) = (C_W/K) <z sigma' sigma>_K,
chi_perp = C_W <sigma'^2>_K and h = (C_W / 4K^2) <sigma'^2 (z^2 - K)>_K.
For the rectified power unit of order p the closed forms

    chi_par  = C_W p (2p-1)!! K^(p-1) / 2
    chi_perp = C_W p^2 (2p-3)!! K^(p-1) / 2

give the K-independent ratio (2p-1) : p, so both susceptibilities can equal
one simultaneously only at p = 1.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .activations import Activation
from .gauss import (
    ExpectationOverflowError,
    double_factorial,
    expect_activation_observable,
    g_of_K,
    repu_g_exact,
)

__all__ = [
    "DegenerateActivationError",
    "FLOW_GUARD_HIGH",
    "FLOW_GUARD_LOW",
    "InitHyperparams",
    "KernelFlowTrace",
    "NoCriticalityError",
    "SusceptibilityPoint",
    "UniversalityClass",
    "ClassificationResult",
    "chi_par",
    "chi_perp",
    "classify_universality",
    "decompose_two_input_kernel",
    "flow",
    "h_of_K",
    "kernel_step",
    "recompose_two_input_kernel",
    "repu_chi_par_exact",
    "repu_chi_perp_exact",
    "repu_h_exact",
    "sigma4_of_K",
    "solve_critical_cw",
    "susceptibility_point",
    "susceptibility_ratio",
    "vertex_flow",
]

FLOW_GUARD_LOW = 1e-300
FLOW_GUARD_HIGH = 1e300


class DegenerateActivationError(ValueError):
    """The activation has an (almost-everywhere) vanishing derivative."""


class NoCriticalityError(ValueError):
    """No weight variance can bring the susceptibility to one."""


@dataclass(frozen=True)
class InitHyperparams:
    """Bias variance C_b >= 0 and rescaled weight variance C_W > 0."""

    c_b: float
    c_w: float

    def __post_init__(self):
        if not (np.isfinite(self.c_b) and self.c_b >= 0.0):
            raise ValueError(f"C_b must be finite and >= 0, got {self.c_b}")
        if not (np.isfinite(self.c_w) and self.c_w > 0.0):
            raise ValueError(f"C_W must be finite and > 0, got {self.c_w}")


@dataclass(frozen=True)
class SusceptibilityPoint:
    K: float
    chi_par: float
    chi_perp: float
    h: float
    g: float


@dataclass
class KernelFlowTrace:
    """Per-layer record of the kernel flow; index 0 is the first layer.

    ``status`` holds one entry per recorded layer: every entry is ``"ok"``
    except possibly the last, which is ``"overflow"``/``"underflow"`` when the
    flow left the guard band [1e-300, 1e300] (susceptibilities at a truncated
    layer are NaN).
    """

    k00: np.ndarray
    dk1: np.ndarray
    dk2: np.ndarray
    chi_par: np.ndarray
    chi_perp: np.ndarray
    h: np.ndarray
    v: np.ndarray | None
    status: list[str] = field(default_factory=list)

    @property
    def n_layers(self) -> int:
        return len(self.k00)

    @property
    def truncated(self) -> bool:
        return bool(self.status) and self.status[-1] != "ok"


# ---------------------------------------------------------------------------
# closed forms for the rectified power family


def repu_chi_par_exact(p: int, c_w: float, K: float) -> float:
    return 0.5 * c_w * p * double_factorial(2 * p - 1) * K ** (p - 1)


def repu_chi_perp_exact(p: int, c_w: float, K: float) -> float:
    return 0.5 * c_w * p * p * double_factorial(2 * p - 3) * K ** (p - 1)


def repu_h_exact(p: int, c_w: float, K: float) -> float:
    return 0.25 * c_w * p * p * (p - 1) * double_factorial(2 * p - 3) * K ** (p - 2)


# ---------------------------------------------------------------------------
# susceptibilities


def chi_par(act: Activation, hp: InitHyperparams, K: float, order: int | None = None, analytic: bool = True) -> float:
    """Parallel susceptibility (C_W/K) <z sigma'(z) sigma(z)>_K."""
    K = float(K)
    if analytic:
        if act.kind == "linear":
            return hp.c_w
        if act.kind == "relu":
            return 0.5 * hp.c_w
        if act.kind == "repu":
            return repu_chi_par_exact(act.p, hp.c_w, K)
    val = expect_activation_observable(K, lambda z: z * act.deriv(z) * act.value(z), act, order=order)
    return hp.c_w * val / K


def chi_perp(act: Activation, hp: InitHyperparams, K: float, order: int | None = None, analytic: bool = True) -> float:
    """Perpendicular susceptibility C_W <sigma'(z)^2>_K."""
    K = float(K)
    if analytic:
        if act.kind == "linear":
            return hp.c_w
        if act.kind == "relu":
            return 0.5 * hp.c_w
        if act.kind == "repu":
            return repu_chi_perp_exact(act.p, hp.c_w, K)
    val = expect_activation_observable(K, lambda z: act.deriv(z) ** 2, act, order=order)
    return hp.c_w * val


def h_of_K(act: Activation, hp: InitHyperparams, K: float, order: int | None = None, analytic: bool = True) -> float:
    """h(K) = (C_W / 4K^2) <sigma'^2 (z^2 - K)>_K = (1/2) d(chi_perp)/dK."""
    K = float(K)
    if analytic:
        if act.kind == "linear":
            return 0.0
        if act.kind == "relu":
            return 0.0
        if act.kind == "repu":
            return repu_h_exact(act.p, hp.c_w, K)
    val = expect_activation_observable(K, lambda z: act.deriv(z) ** 2 * (z * z - K), act, order=order)
    return hp.c_w * val / (4.0 * K * K)


def susceptibility_ratio(act: Activation, K: float, order: int | None = None, analytic: bool = True) -> float:
    """chi_par / chi_perp, computed at C_W = 1 (the weight variance cancels)."""
    hp = InitHyperparams(c_b=0.0, c_w=1.0)
    denom = chi_perp(act, hp, K, order=order, analytic=analytic)
    if denom == 0.0:
        raise DegenerateActivationError(f"{act} has vanishing perpendicular susceptibility")
    return chi_par(act, hp, K, order=order, analytic=analytic) / denom


def susceptibility_point(act: Activation, hp: InitHyperparams, K: float, order: int | None = None) -> SusceptibilityPoint:
    return SusceptibilityPoint(
        K=float(K),
        chi_par=chi_par(act, hp, K, order=order),
        chi_perp=chi_perp(act, hp, K, order=order),
        h=h_of_K(act, hp, K, order=order),
        g=g_of_K(act, K, order=order),
    )


def sigma4_of_K(act: Activation, K: float, order: int | None = None, analytic: bool = True) -> float:
    """<sigma(z)^4>_K, needed by the single-input vertex recursion."""
    K = float(K)
    if analytic:
        if act.kind == "linear":
            return 3.0 * K * K
        if act.kind == "relu":
            return 1.5 * K * K
        if act.kind == "repu":
            out = 0.5 * double_factorial(4 * act.p - 1) * K ** (2 * act.p)
            if not np.isfinite(out):
                raise ExpectationOverflowError(f"<sigma^4> overflowed for {act} at K={K}")
            return out
    return expect_activation_observable(K, lambda z: act.value(z) ** 4, act, order=order)


# ---------------------------------------------------------------------------
# kernel flow


def kernel_step(act: Activation, hp: InitHyperparams, K: float, order: int | None = None) -> float:
    """One kernel recursion step K -> C_b + C_W g(K)."""
    return hp.c_b + hp.c_w * g_of_K(act, K, order=order)


def flow(
    act: Activation,
    hp: InitHyperparams,
    k1: float,
    dk1_init: float = 0.0,
    dk2_init: float = 0.0,
    n_layers: int = 1,
    with_vertex: bool = False,
    order: int | None = None,
) -> KernelFlowTrace:
    """Iterate the kernel, perturbation and (optionally) vertex recursions.

    Records up to ``n_layers`` layers starting from (k1, dk1_init, dk2_init)
    and V = 0 at the first layer.  The trace truncates with an explicit
    overflow/underflow marker instead of propagating non-finite values.
    """
    if n_layers < 1:
        raise ValueError("n_layers must be >= 1")
    if not (np.isfinite(k1) and k1 > 0.0):
        raise ValueError(f"k1 must be positive and finite, got {k1}")

    k00 = [float(k1)]
    dk1 = [float(dk1_init)]
    dk2 = [float(dk2_init)]
    cpar: list[float] = []
    cperp: list[float] = []
    hval: list[float] = []
    vval = [0.0] if with_vertex else None
    status = []

    def guard_status(value: float) -> str:
        if not np.isfinite(value) or abs(value) > FLOW_GUARD_HIGH:
            return "overflow"
        if value < FLOW_GUARD_LOW:
            return "underflow"
        return "ok"

    first = guard_status(k00[0])
    status.append(first)
    if first != "ok":
        cpar.append(np.nan)
        cperp.append(np.nan)
        hval.append(np.nan)
    else:
        for layer in range(n_layers):
            K = k00[layer]
            try:
                cp = chi_par(act, hp, K, order=order)
                cq = chi_perp(act, hp, K, order=order)
                hh = h_of_K(act, hp, K, order=order)
                k_next = kernel_step(act, hp, K, order=order)
                if with_vertex:
                    s4 = sigma4_of_K(act, K, order=order)
                    g2 = g_of_K(act, K, order=order) ** 2
            except ExpectationOverflowError:
                cpar.append(np.nan)
                cperp.append(np.nan)
                hval.append(np.nan)
                status[layer] = "overflow"
                break
            cpar.append(cp)
            cperp.append(cq)
            hval.append(hh)
            if layer == n_layers - 1:
                break
            with np.errstate(over="ignore", invalid="ignore"):
                d1_next = cp * dk1[layer]
                d2_next = cq * dk2[layer] + hh * dk1[layer] ** 2
                if with_vertex:
                    v_next = cp * cp * vval[layer] + hp.c_w**2 * (s4 - g2)
            k00.append(float(k_next))
            dk1.append(float(d1_next))
            dk2.append(float(d2_next))
            if with_vertex:
                vval.append(float(v_next))
            st = guard_status(k_next)
            if st == "ok" and not (np.isfinite(d1_next) and np.isfinite(d2_next)):
                st = "overflow"
            if st == "ok" and with_vertex and not np.isfinite(v_next):
                st = "overflow"
            status.append(st)
            if st != "ok":
                cpar.append(np.nan)
                cperp.append(np.nan)
                hval.append(np.nan)
                break

    return KernelFlowTrace(
        k00=np.array(k00),
        dk1=np.array(dk1),
        dk2=np.array(dk2),
        chi_par=np.array(cpar),
        chi_perp=np.array(cperp),
        h=np.array(hval),
        v=np.array(vval) if with_vertex else None,
        status=status,
    )


def vertex_flow(act: Activation, hp: InitHyperparams, k1: float, n_layers: int, order: int | None = None) -> np.ndarray:
    """Per-layer theoretical four-point vertex from the single-input recursion.

    V(1) = 0 (first-layer preactivations are exactly Gaussian) and

        V(l+1) = chi_par(K(l))^2 V(l) + C_W^2 [<sigma^4>_K(l) - <sigma^2>_K(l)^2].
    """
    trace = flow(act, hp, k1, 0.0, 0.0, n_layers, with_vertex=True, order=order)
    return trace.v


def decompose_two_input_kernel(kpp: float, kmm: float, kpm: float) -> tuple[float, float, float]:
    """Expand a symmetric 2x2 kernel into the (K0, K1, K2) gamma basis.

    K0 = (Kpp + Kmm + 2 Kpm)/4, K1 = (Kpp - Kmm)/2, K2 = (Kpp + Kmm - 2 Kpm)/4.
    The matrix [[Kpp, Kpm], [Kpm, Kmm]] must be positive semidefinite.
    """
    scale = max(abs(kpp), abs(kmm), abs(kpm), 1.0)
    tol = 1e-12 * scale
    if kpp < -tol or kmm < -tol or kpp * kmm - kpm * kpm < -tol * scale:
        raise ValueError(f"kernel matrix [[{kpp},{kpm}],[{kpm},{kmm}]] is not positive semidefinite")
    k0 = 0.25 * (kpp + kmm + 2.0 * kpm)
    k1 = 0.5 * (kpp - kmm)
    k2 = 0.25 * (kpp + kmm - 2.0 * kpm)
    return k0, k1, k2


def recompose_two_input_kernel(k0: float, k1: float, k2: float) -> tuple[float, float, float]:
    """Inverse of :func:`decompose_two_input_kernel`: returns (Kpp, Kmm, Kpm)."""
    return k0 + k1 + k2, k0 - k1 + k2, k0 - k2


def solve_critical_cw(act: Activation, k_star: float, which: str = "perp", order: int | None = None) -> float:
    """Weight variance making the chosen susceptibility equal one at k_star.

    Both susceptibilities are linear in C_W, so the solution is simply
    1 / chi(C_W=1, k_star).
    """
    if which not in ("par", "perp"):
        raise ValueError(f"which must be 'par' or 'perp', got {which!r}")
    hp = InitHyperparams(c_b=0.0, c_w=1.0)
    fn = chi_par if which == "par" else chi_perp
    val = fn(act, hp, k_star, order=order)
    if not np.isfinite(val) or val <= 0.0:
        raise NoCriticalityError(f"{act} has chi_{which}(C_W=1, K={k_star}) = {val}; no critical C_W exists")
    return 1.0 / val


# ---------------------------------------------------------------------------
# universality classification


class UniversalityClass(str, Enum):
    SCALE_INVARIANT = "scale_invariant"
    K_STAR_ZERO = "k_star_zero"
    HALF_STABLE = "half_stable"
    NO_CRITICALITY = "no_criticality"


@dataclass(frozen=True)
class ClassificationResult:
    label: UniversalityClass
    evidence: dict


_SCALE_PROBE_KS = (1e-3, 1.0, 1e3)
_RATIO_GRID = tuple(np.logspace(-6.0, 3.0, 25))
_SCALE_INVARIANCE_TOL = 1e-8
_UNIFORM_RATIO_TOL = 1e-3
_K_STAR_ZERO_TOL = 1e-2


def classify_universality(act: Activation, order: int | None = None) -> ClassificationResult:
    """Heuristic universality classification from susceptibility behaviour.

    Procedure (checked in order):

    1. vanishing chi_perp -> NO_CRITICALITY (degenerate derivative);
    2. chi_par and chi_perp K-independent with ratio 1 -> SCALE_INVARIANT;
    3. ratio uniformly away from 1 on K in [1e-6, 1e3] -> NO_CRITICALITY;
    4. ratio -> 1 as K -> 0 with sigma(0) = 0 -> K_STAR_ZERO;
    5. otherwise HALF_STABLE.

    The residual bucket is a heuristic: kinds whose ratio tends to 1 at small
    K but with sigma(0) != 0 (e.g. sigmoid) land in HALF_STABLE even though
    they admit no criticality; the evidence grid is attached so callers can
    judge borderline cases.
    """
    hp = InitHyperparams(c_b=0.0, c_w=1.0)
    evidence: dict = {}

    perp_at_one = chi_perp(act, hp, 1.0, order=order)
    evidence["chi_perp_at_K1"] = perp_at_one
    if perp_at_one <= 1e-12:
        return ClassificationResult(UniversalityClass.NO_CRITICALITY, evidence)

    probe = [(K, chi_par(act, hp, K, order=order), chi_perp(act, hp, K, order=order)) for K in _SCALE_PROBE_KS]
    evidence["scale_probe"] = [{"K": K, "chi_par": cp, "chi_perp": cq} for K, cp, cq in probe]
    cps = [cp for _, cp, _ in probe]
    cqs = [cq for _, _, cq in probe]
    var_par = (max(cps) - min(cps)) / max(abs(max(cps)), 1e-300)
    var_perp = (max(cqs) - min(cqs)) / max(abs(max(cqs)), 1e-300)
    ratio_mid = cps[1] / cqs[1]
    if var_par < _SCALE_INVARIANCE_TOL and var_perp < _SCALE_INVARIANCE_TOL and abs(ratio_mid - 1.0) < _SCALE_INVARIANCE_TOL:
        return ClassificationResult(UniversalityClass.SCALE_INVARIANT, evidence)

    ratios = [susceptibility_ratio(act, K, order=order) for K in _RATIO_GRID]
    evidence["ratio_grid"] = [{"K": K, "ratio": r} for K, r in zip(_RATIO_GRID, ratios)]
    if all(abs(r - 1.0) > _UNIFORM_RATIO_TOL for r in ratios):
        return ClassificationResult(UniversalityClass.NO_CRITICALITY, evidence)

    ratio_small = susceptibility_ratio(act, 1e-6, order=order)
    sigma0 = float(np.asarray(act.value(0.0)))
    evidence["ratio_at_K_1e-6"] = ratio_small
    evidence["sigma_at_0"] = sigma0
    if abs(ratio_small - 1.0) < _K_STAR_ZERO_TOL and abs(sigma0) < 1e-12:
        return ClassificationResult(UniversalityClass.K_STAR_ZERO, evidence)

    return ClassificationResult(UniversalityClass.HALF_STABLE, evidence)
