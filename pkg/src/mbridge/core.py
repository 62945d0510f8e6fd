"""Potentials, couplings and the primal/dual objectives.

A triplet of potentials ``(f, g, h)`` defines the coupling

    pi_ij = mu_i * nu_j * exp(f_i + g_j - h_i * (y_j - x_i))

and everything here is computed in the log domain.  Potentials are only
determined up to the affine shift ``(f + a x + b, g - a y - b, h - a)``;
:func:`canonical_gauge` picks the representative with
``sum(mu * h) == 0`` and ``sum(nu * g) == 0``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .measures import DiscreteMeasure


class Gauge(str, enum.Enum):
    RAW = "raw"
    CANONICAL = "canonical"


def _vec(a) -> np.ndarray:
    a = np.array(a, dtype=float).ravel()
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Potentials:
    """Dual variables: ``f`` and ``h`` indexed by mu-atoms, ``g`` by nu-atoms."""

    f: np.ndarray
    g: np.ndarray
    h: np.ndarray
    gauge: Gauge = Gauge.RAW

    def __post_init__(self):
        for name in ("f", "g", "h"):
            object.__setattr__(self, name, _vec(getattr(self, name)))
        if self.f.shape != self.h.shape:
            raise ValueError("f and h must have the same length")
        object.__setattr__(self, "gauge", Gauge(self.gauge))

    @classmethod
    def zeros(cls, n_mu: int, n_nu: int, gauge=Gauge.RAW) -> "Potentials":
        return cls(np.zeros(n_mu), np.zeros(n_nu), np.zeros(n_mu), gauge)

    def is_finite(self) -> bool:
        return bool(
            np.all(np.isfinite(self.f)) and np.all(np.isfinite(self.g)) and np.all(np.isfinite(self.h))
        )

    def to_dict(self) -> dict:
        return {"f": self.f.tolist(), "g": self.g.tolist(), "h": self.h.tolist(),
                "gauge": self.gauge.value}


@dataclass(frozen=True, eq=False)
class Coupling:
    """Joint weights stored as ``log pi_ij``; ``-inf`` encodes an exact zero."""

    log_weights: np.ndarray

    def __post_init__(self):
        lw = np.array(self.log_weights, dtype=float)
        if lw.ndim != 2:
            raise ValueError("log_weights must be a matrix")
        lw.setflags(write=False)
        object.__setattr__(self, "log_weights", lw)

    @classmethod
    def from_weights(cls, weights) -> "Coupling":
        w = np.asarray(weights, dtype=float)
        with np.errstate(divide="ignore"):
            return cls(np.log(w))

    @property
    def weights(self) -> np.ndarray:
        return np.exp(self.log_weights)

    @property
    def shape(self):
        return self.log_weights.shape


@dataclass(frozen=True)
class Residuals:
    marginal_mu: float
    marginal_nu: float
    martingale: float
    mass: float

    def max(self) -> float:
        return max(self.marginal_mu, self.marginal_nu, self.martingale, self.mass)

    def to_dict(self) -> dict:
        return {"marginal_mu": self.marginal_mu, "marginal_nu": self.marginal_nu,
                "martingale": self.martingale, "mass": self.mass}


def log_density(p: Potentials, i: int, j: int, x, y) -> float:
    """``f_i + g_j - h_i (y_j - x_i)``, the log of d pi / d(mu x nu) at (i, j)."""
    return float(p.f[i] + p.g[j] - p.h[i] * (y[j] - x[i]))


def log_density_matrix(p: Potentials, x, y) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    return p.f[:, None] + p.g[None, :] - p.h[:, None] * (y[None, :] - x[:, None])


def _log_reference(mu: DiscreteMeasure, nu: DiscreteMeasure) -> np.ndarray:
    return np.log(mu.weights)[:, None] + np.log(nu.weights)[None, :]


def coupling_from_potentials(p: Potentials, mu: DiscreteMeasure, nu: DiscreteMeasure) -> Coupling:
    """Coupling implied by ``p``; not renormalized, so its mass may differ from 1."""
    return Coupling(_log_reference(mu, nu) + log_density_matrix(p, mu.atoms, nu.atoms))


def rel_entropy(c: Coupling, mu: DiscreteMeasure, nu: DiscreteMeasure) -> float:
    """Relative entropy ``sum pi log(pi / (mu x nu))`` with ``0 log 0 = 0``."""
    lw = c.log_weights
    pos = np.isfinite(lw)
    ratio = np.where(pos, lw - _log_reference(mu, nu), 0.0)
    return float(np.sum(np.where(pos, np.exp(np.where(pos, lw, 0.0)) * ratio, 0.0)))


def dual_objective(p: Potentials, mu: DiscreteMeasure, nu: DiscreteMeasure) -> float:
    r"""Dual value ``<mu, f> + <nu, g> - log sum_ij mu_i nu_j e^{f_i + g_j - h_i (y_j - x_i)}``.

    Equals the minimal entropy at the optimal potentials and is a lower
    bound on the entropy of every martingale coupling for any ``p``.
    """
    lse = logsumexp(coupling_from_potentials(p, mu, nu).log_weights)
    return float(np.dot(mu.weights, p.f) + np.dot(nu.weights, p.g) - lse)


def apply_gauge(p: Potentials, alpha: float, beta: float,
                mu: DiscreteMeasure, nu: DiscreteMeasure) -> Potentials:
    """Affine shift leaving the implied density unchanged."""
    return Potentials(
        p.f + alpha * mu.atoms + beta,
        p.g - alpha * nu.atoms - beta,
        p.h - alpha,
        Gauge.RAW,
    )


def canonical_gauge(p: Potentials, mu: DiscreteMeasure, nu: DiscreteMeasure) -> Potentials:
    """Project onto the gauge ``sum(mu h) = 0``, ``sum(nu g) = 0``."""
    alpha = float(np.dot(mu.weights, p.h))
    beta = float(np.dot(nu.weights, p.g - alpha * nu.atoms))
    q = apply_gauge(p, alpha, beta, mu, nu)
    return Potentials(q.f, q.g, q.h, Gauge.CANONICAL)


def row_barycenter_error(c: Coupling, mu: DiscreteMeasure, nu: DiscreteMeasure) -> np.ndarray:
    """``sum_j pi_ij (y_j - x_i) / mu_i`` for each row: conditional mean minus x."""
    w = c.weights
    return (w @ nu.atoms - w.sum(axis=1) * mu.atoms) / mu.weights


def residuals(c: Coupling, mu: DiscreteMeasure, nu: DiscreteMeasure) -> Residuals:
    w = c.weights
    rows, cols = w.sum(axis=1), w.sum(axis=0)
    drift = w @ nu.atoms - rows * mu.atoms
    return Residuals(
        marginal_mu=float(np.abs(rows - mu.weights).sum()),
        marginal_nu=float(np.abs(cols - nu.weights).sum()),
        martingale=float(np.abs(drift).sum()),
        mass=float(abs(w.sum() - 1.0)),
    )
