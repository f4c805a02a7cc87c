"""One-dimensional Gaussian expectations of activation observables.

Expectations <O(z)>_K are taken over a mean-zero Gaussian with variance K.
Smooth observables go through Gauss-Hermite quadrature after the substitution
z = sqrt(2K) t.  Observables with a derivative kink at a known location are
integrated piecewise with Gauss-Legendre on each side of the kink, over the
window |z| <= 15 sqrt(K) (the discarded tail mass is below 1e-45 relative).
For the rectified power family closed forms are available and used as fast
paths.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np
from scipy.special import roots_hermite, roots_legendre

from .activations import Activation

__all__ = [
    "DEFAULT_ORDER",
    "ExpectationOverflowError",
    "GaussianMeasure",
    "QuadratureRule",
    "double_factorial",
    "expect",
    "expect_activation_observable",
    "g_of_K",
    "hermite_rule",
    "repu_g_exact",
]

DEFAULT_ORDER = 400

#: Integration window half-width in units of sqrt(K) for the piecewise path.
_WINDOW_SPAN = 15.0


class ExpectationOverflowError(ArithmeticError):
    """An observable overflowed at the quadrature nodes."""


@dataclass(frozen=True)
class GaussianMeasure:
    """Mean-zero 1D Gaussian with variance K > 0."""

    K: float

    def __post_init__(self):
        if not (np.isfinite(self.K) and self.K > 0.0):
            raise ValueError(f"Gaussian variance must be positive and finite, got {self.K}")


@dataclass(frozen=True)
class QuadratureRule:
    """Raw Gauss-Hermite rule: sum w_i f(t_i) ~ int f(t) exp(-t^2) dt."""

    nodes: np.ndarray
    weights: np.ndarray
    order: int


@lru_cache(maxsize=16)
def hermite_rule(order: int = DEFAULT_ORDER) -> QuadratureRule:
    if order < 1:
        raise ValueError("quadrature order must be >= 1")
    nodes, weights = roots_hermite(order)
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return QuadratureRule(nodes=nodes, weights=weights, order=order)


@lru_cache(maxsize=16)
def _legendre_rule(order: int) -> tuple[np.ndarray, np.ndarray]:
    nodes, weights = roots_legendre(order)
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return nodes, weights


def _variance(K) -> float:
    if isinstance(K, GaussianMeasure):
        return K.K
    K = float(K)
    if not (np.isfinite(K) and K > 0.0):
        raise ValueError(f"Gaussian variance must be positive and finite, got {K}")
    return K


def expect(K, f: Callable[[np.ndarray], np.ndarray], rule: QuadratureRule | None = None) -> float:
    """Gauss-Hermite estimate of <f(z)>_K.

    ``K`` may be a :class:`GaussianMeasure` or a positive float.  Raises
    :class:`ExpectationOverflowError` if the observable produces non-finite
    values at the nodes.
    """
    var = _variance(K)
    if rule is None:
        rule = hermite_rule()
    z = np.sqrt(2.0 * var) * rule.nodes
    vals = np.asarray(f(z), dtype=float)
    total = float(rule.weights @ vals) / np.sqrt(np.pi)
    if not np.isfinite(total):
        raise ExpectationOverflowError(f"observable overflowed at K={var}")
    return total


def expect_piecewise(K, f: Callable[[np.ndarray], np.ndarray], kink: float, order: int = DEFAULT_ORDER) -> float:
    """<f(z)>_K for f smooth on each side of a single kink.

    The integral is split at the kink and each side is handled with a
    Gauss-Legendre rule of the given order over the Gaussian bulk window.
    """
    var = _variance(K)
    s = np.sqrt(var)
    lo, hi = -_WINDOW_SPAN * s, _WINDOW_SPAN * s
    x, w = _legendre_rule(order)
    norm = 1.0 / np.sqrt(2.0 * np.pi * var)
    total = 0.0
    for a, b in ((lo, min(kink, hi)), (max(kink, lo), hi)):
        if b <= a:
            continue
        z = 0.5 * (b - a) * x + 0.5 * (b + a)
        vals = np.asarray(f(z), dtype=float)
        with np.errstate(under="ignore"):
            total += (0.5 * (b - a)) * float(w @ (vals * np.exp(-z * z / (2.0 * var)))) * norm
    if not np.isfinite(total):
        raise ExpectationOverflowError(f"observable overflowed at K={var}")
    return total


def expect_activation_observable(
    K,
    f: Callable[[np.ndarray], np.ndarray],
    act: Activation | None = None,
    order: int | None = None,
) -> float:
    """Dispatch <f(z)>_K to the piecewise path when ``act`` has a kink."""
    n = DEFAULT_ORDER if order is None else order
    kink = act.kink if act is not None else None
    if kink is not None:
        return expect_piecewise(K, f, kink, order=n)
    return expect(K, f, rule=hermite_rule(n))


def double_factorial(n: int) -> float:
    """n!! with the conventions (-1)!! = 1 and 0!! = 1.

    Computed in floating point above n = 20 to avoid integer overflow.
    """
    if n < -1:
        raise ValueError(f"double factorial undefined for n={n}")
    if n <= 0:
        return 1.0
    if n <= 20:
        out = 1
        k = n
        while k > 1:
            out *= k
            k -= 2
        return float(out)
    out = 1.0
    k = float(n)
    while k > 1.0:
        out *= k
        k -= 2.0
    return out


def repu_g_exact(p: int, K: float) -> float:
    """Closed form <sigma^2>_K = (2p-1)!! K^p / 2 for the rectified power unit."""
    return 0.5 * double_factorial(2 * p - 1) * K**p


def g_of_K(act: Activation, K, order: int | None = None, analytic: bool = True) -> float:
    """g(K) = <sigma(z)^2>_K for the given activation.

    ``analytic=True`` uses closed forms where available (linear, relu, repu);
    ``analytic=False`` forces quadrature.
    """
    var = _variance(K)
    if analytic:
        if act.kind == "linear":
            return var
        if act.kind == "relu":
            return 0.5 * var
        if act.kind == "repu":
            out = repu_g_exact(act.p, var)
            if not np.isfinite(out):
                raise ExpectationOverflowError(f"g overflowed for {act} at K={var}")
            return out
    return expect_activation_observable(var, lambda z: act.value(z) ** 2, act, order=order)
