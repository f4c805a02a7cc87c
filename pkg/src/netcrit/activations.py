"""Activation functions as immutable descriptors with value and first derivative.

Each activation is a tagged descriptor (kind plus optional parameters) that can
be evaluated elementwise on scalars or numpy arrays.  Descriptors are frozen
after construction, so they are safe to share across threads.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import erf, expit

__all__ = ["Activation", "ActivationConfigError", "KINDS", "parse_activation"]

KINDS = (
    "perceptron",
    "sigmoid",
    "tanh",
    "sin",
    "relu",
    "leaky_relu",
    "softplus",
    "swish",
    "gelu",
    "repu",
    "mrepu",
    "linear",
)

_INV_SQRT2 = 1.0 / np.sqrt(2.0)
_INV_SQRT2PI = 1.0 / np.sqrt(2.0 * np.pi)


class ActivationConfigError(ValueError):
    """Invalid activation kind or parameter combination."""


@dataclass(frozen=True)
class Activation:
    """Descriptor for a scalar activation function.

    ``p`` is the power order (required for repu/mrepu, ignored otherwise) and
    ``alpha`` the negative-side slope (required for leaky_relu).
    """

    kind: str
    p: int = 0
    alpha: float = 0.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ActivationConfigError(f"unknown activation kind {self.kind!r}")
        if self.kind == "repu":
            if not (isinstance(self.p, (int, np.integer)) and self.p >= 1):
                raise ActivationConfigError("repu requires integer order p >= 1")
        if self.kind == "mrepu":
            if not (isinstance(self.p, (int, np.integer)) and self.p >= 2):
                raise ActivationConfigError("mrepu requires integer order p >= 2")
        if self.kind == "leaky_relu" and not np.isfinite(self.alpha):
            raise ActivationConfigError("leaky_relu requires finite alpha")

    @property
    def kink(self) -> float | None:
        """Location of the derivative kink, or None for smooth kinds."""
        if self.kind in ("perceptron", "relu", "leaky_relu", "repu"):
            return 0.0
        if self.kind == "mrepu":
            return -1.0
        return None

    def value(self, z):
        """Evaluate sigma(z) elementwise."""
        z = np.asarray(z, dtype=float)
        k = self.kind
        if k == "perceptron":
            return np.where(z >= 0.0, 1.0, 0.0)
        if k == "sigmoid":
            return expit(z)
        if k == "tanh":
            return np.tanh(z)
        if k == "sin":
            return np.sin(z)
        if k == "relu":
            return np.maximum(z, 0.0)
        if k == "leaky_relu":
            return np.where(z >= 0.0, z, self.alpha * z)
        if k == "softplus":
            return np.logaddexp(0.0, z)
        if k == "swish":
            return z * expit(z)
        if k == "gelu":
            return 0.5 * (1.0 + erf(z * _INV_SQRT2)) * z
        if k == "repu":
            return np.maximum(z, 0.0) ** self.p
        if k == "mrepu":
            return z * np.maximum(z + 1.0, 0.0) ** self.p
        return z  # linear

    def deriv(self, z):
        """Evaluate sigma'(z) elementwise.

        At kink points the convention is sigma'(0) = 0 for perceptron, relu
        and repu, and sigma'(-1) = 0 for mrepu, so that measure-zero points
        do not perturb Gaussian expectations.
        """
        z = np.asarray(z, dtype=float)
        k = self.kind
        if k == "perceptron":
            return np.zeros_like(z)
        if k == "sigmoid":
            s = expit(z)
            return s * (1.0 - s)
        if k == "tanh":
            t = np.tanh(z)
            return 1.0 - t * t
        if k == "sin":
            return np.cos(z)
        if k == "relu":
            return np.where(z > 0.0, 1.0, 0.0)
        if k == "leaky_relu":
            return np.where(z > 0.0, 1.0, self.alpha)
        if k == "softplus":
            return expit(z)
        if k == "swish":
            s = expit(z)
            return s * (1.0 + z * (1.0 - s))
        if k == "gelu":
            return 0.5 * (1.0 + erf(z * _INV_SQRT2)) + z * np.exp(-0.5 * z * z) * _INV_SQRT2PI
        if k == "repu":
            zp = np.maximum(z, 0.0)
            return np.where(z > 0.0, self.p * zp ** (self.p - 1), 0.0)
        if k == "mrepu":
            up = np.maximum(z + 1.0, 0.0)
            return np.where(z > -1.0, up ** (self.p - 1) * ((self.p + 1) * z + 1.0), 0.0)
        return np.ones_like(z)  # linear

    def spec_string(self) -> str:
        """Config-file string form, e.g. ``repu:p=2`` or ``tanh``."""
        if self.kind in ("repu", "mrepu"):
            return f"{self.kind}:p={self.p}"
        if self.kind == "leaky_relu":
            return f"leaky_relu:alpha={self.alpha:g}"
        return self.kind

    def __str__(self) -> str:
        return self.spec_string()


def parse_activation(spec: str) -> Activation:
    """Parse a config string such as ``"repu:p=2"`` or ``"tanh"``.

    Parsing is case-insensitive; unknown names or malformed parameters raise
    :class:`ActivationConfigError`.
    """
    if not isinstance(spec, str) or not spec.strip():
        raise ActivationConfigError(f"invalid activation spec {spec!r}")
    text = spec.strip().lower()
    name, _, rest = text.partition(":")
    if name not in KINDS:
        raise ActivationConfigError(f"unknown activation name {name!r}")
    params: dict[str, str] = {}
    if rest:
        for item in rest.split(","):
            key, sep, val = item.partition("=")
            if not sep:
                raise ActivationConfigError(f"malformed parameter {item!r} in {spec!r}")
            params[key.strip()] = val.strip()
    p = 0
    alpha = 0.0
    if name in ("repu", "mrepu"):
        if "p" not in params:
            raise ActivationConfigError(f"{name} requires a p= parameter")
        try:
            p = int(params.pop("p"))
        except ValueError as exc:
            raise ActivationConfigError(f"invalid p in {spec!r}") from exc
    if name == "leaky_relu":
        if "alpha" not in params:
            raise ActivationConfigError("leaky_relu requires an alpha= parameter")
        try:
            alpha = float(params.pop("alpha"))
        except ValueError as exc:
            raise ActivationConfigError(f"invalid alpha in {spec!r}") from exc
    if params:
        raise ActivationConfigError(f"unexpected parameters {sorted(params)} in {spec!r}")
    return Activation(name, p=p, alpha=alpha)
