"""Finitely supported measures on the real line and feasibility checks.

A pair ``(mu, nu)`` admits a martingale coupling iff ``mu`` precedes ``nu``
in convex order.  For discrete measures this reduces to comparing the
potential functions ``phi(x) = sum_i w_i |x - y_i|`` at the atoms, since both
are piecewise linear with kinks only there.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .exceptions import (
    EmptySupport,
    MeanMismatch,
    NonPositiveWeight,
    NotNormalized,
)

NORMALIZATION_TOL = 1e-9
MEAN_TOL = 1e-9
POTENTIAL_TOL = 1e-12


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class DiscreteMeasure:
    """Probability measure with strictly increasing atoms and positive weights.

    Build instances through :func:`validate_measure`; the constructor assumes
    its inputs are already clean.
    """

    atoms: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "atoms", _frozen(self.atoms))
        object.__setattr__(self, "weights", _frozen(self.weights))

    def __len__(self) -> int:
        return self.atoms.size

    def mean(self) -> float:
        return float(np.dot(self.weights, self.atoms))

    def shifted(self, delta: float) -> "DiscreteMeasure":
        return DiscreteMeasure(self.atoms + delta, self.weights)

    def is_dirac(self) -> bool:
        return self.atoms.size == 1

    def __eq__(self, other) -> bool:
        if not isinstance(other, DiscreteMeasure):
            return NotImplemented
        return np.array_equal(self.atoms, other.atoms) and np.array_equal(
            self.weights, other.weights
        )

    def __repr__(self) -> str:
        return f"DiscreteMeasure(atoms={self.atoms.tolist()}, weights={self.weights.tolist()})"


def validate_measure(atoms: Sequence[float], weights: Sequence[float]) -> DiscreteMeasure:
    """Sort atoms, merge duplicates and check the weights form a probability.

    Raises
    ------
    EmptySupport
        No atoms, or ``atoms`` and ``weights`` differ in length.
    NonPositiveWeight
        Some weight is ``<= 0`` or not finite.
    NotNormalized
        ``|sum(weights) - 1| > 1e-9``.
    """
    x = np.asarray(atoms, dtype=float).ravel()
    w = np.asarray(weights, dtype=float).ravel()
    if x.size == 0 or x.size != w.size:
        raise EmptySupport(
            f"need equally many atoms and weights, at least one (got {x.size} and {w.size})"
        )
    if not np.all(np.isfinite(x)):
        raise EmptySupport("atoms must be finite")
    bad = np.flatnonzero(~(w > 0) | ~np.isfinite(w))
    if bad.size:
        raise NonPositiveWeight(f"weight at index {int(bad[0])} is {w[bad[0]]!r}")
    total = w.sum()
    if abs(total - 1.0) > NORMALIZATION_TOL:
        raise NotNormalized(f"weights sum to {total!r}")

    order = np.argsort(x, kind="stable")
    x, w = x[order], w[order]
    uniq, start = np.unique(x, return_index=True)
    w = np.add.reduceat(w, start)
    total = w.sum()
    # skip renormalizing already-normalized weights so validation is idempotent
    if abs(total - 1.0) > POTENTIAL_TOL:
        w = w / total
    return DiscreteMeasure(uniq, w)


def center_pair(mu: DiscreteMeasure, nu: DiscreteMeasure):
    """Shift both measures so they have mean zero.

    Returns ``(mu_c, nu_c, shift)`` where ``mu_c = mu - shift``.
    """
    m_mu, m_nu = mu.mean(), nu.mean()
    if abs(m_mu - m_nu) > MEAN_TOL:
        raise MeanMismatch(f"means differ: {m_mu!r} vs {m_nu!r}")
    shift = m_mu
    mu_c, nu_c = mu.shifted(-shift), nu.shifted(-shift)
    # Remove the rounding left over by the shift; atoms stay sorted since the
    # correction is far below their spacing.
    mu_c = DiscreteMeasure(mu_c.atoms - mu_c.mean(), mu_c.weights)
    nu_c = DiscreteMeasure(nu_c.atoms - nu_c.mean(), nu_c.weights)
    return mu_c, nu_c, shift


def potential_fn(rho: DiscreteMeasure, x):
    """Evaluate ``phi_rho(x) = sum_i w_i |x - y_i|`` (scalar or array ``x``)."""
    xa = np.asarray(x, dtype=float)
    out = np.abs(xa[..., None] - rho.atoms) @ rho.weights
    return float(out) if out.ndim == 0 else out


@dataclass
class FeasibilityReport:
    means_equal: bool
    convex_order: bool
    irreducible: bool
    interval_I: Optional[tuple]
    endpoint_assumption: bool
    detail: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.convex_order

    def to_dict(self) -> dict:
        return {
            "means_equal": self.means_equal,
            "convex_order": self.convex_order,
            "irreducible": self.irreducible,
            "interval_I": None if self.interval_I is None else list(self.interval_I),
            "endpoint_assumption": self.endpoint_assumption,
            "detail": list(self.detail),
        }


def _crossing(t0, d0, t1, d1, level):
    # linear interpolation of the point where d crosses `level` on [t0, t1]
    if d1 == d0:
        return t0
    return t0 + (level - d0) / (d1 - d0) * (t1 - t0)


def _component_around(kinks, gap, center, gap_center, tol):
    """Maximal open interval around ``center`` on which ``gap > tol``."""
    if gap_center <= tol:
        return (center, center)
    left = np.flatnonzero((kinks < center) & (gap <= tol))
    if left.size:
        k = left[-1]
        nxt = k + 1
        t1, d1 = (kinks[nxt], gap[nxt]) if nxt < kinks.size and kinks[nxt] < center else (
            center, gap_center)
        lo = _crossing(kinks[k], gap[k], t1, d1, tol)
    else:
        lo = -np.inf
    right = np.flatnonzero((kinks > center) & (gap <= tol))
    if right.size:
        k = right[0]
        prv = k - 1
        t0, d0 = (kinks[prv], gap[prv]) if prv >= 0 and kinks[prv] > center else (
            center, gap_center)
        hi = _crossing(t0, d0, kinks[k], gap[k], tol)
    else:
        hi = np.inf
    return (float(lo), float(hi))


def check_feasibility(mu: DiscreteMeasure, nu: DiscreteMeasure) -> FeasibilityReport:
    """Convex order, irreducibility and endpoint checks for ``(mu, nu)``.

    Never raises; every violation is recorded in ``detail``.
    """
    detail = []
    m_mu, m_nu = mu.mean(), nu.mean()
    means_equal = abs(m_mu - m_nu) <= MEAN_TOL
    if not means_equal:
        detail.append(f"means differ: mean(mu)={m_mu!r}, mean(nu)={m_nu!r}")

    kinks = np.union1d(mu.atoms, nu.atoms)
    gap = potential_fn(nu, kinks) - potential_fn(mu, kinks)
    convex_order = bool(means_equal and np.all(gap >= -POTENTIAL_TOL))
    if means_equal and not convex_order:
        k = int(np.argmin(gap))
        detail.append(
            f"phi_mu exceeds phi_nu at t={kinks[k]!r} by {-gap[k]!r}; not in convex order"
        )

    interval = None
    irreducible = False
    if convex_order:
        gap_center = potential_fn(nu, m_mu) - potential_fn(mu, m_mu)
        interval = _component_around(kinks, gap, m_mu, gap_center, POTENTIAL_TOL)
        lo, hi = interval
        inside = (mu.atoms > lo) & (mu.atoms < hi)
        irreducible = bool(np.all(inside))
        if not irreducible:
            outside = mu.atoms[~inside]
            detail.append(
                f"not irreducible: mu has mass {float(mu.weights[~inside].sum())!r} "
                f"outside I=({lo!r}, {hi!r}), e.g. at {float(outside[0])!r}"
            )

    s_lo, s_hi = mu.atoms[0], mu.atoms[-1]
    left_mass = nu.weights[nu.atoms <= s_lo].sum()
    right_mass = nu.weights[nu.atoms >= s_hi].sum()
    endpoint = bool(left_mass > 0 and right_mass > 0)
    if not endpoint:
        detail.append(
            f"endpoint assumption fails: nu((-inf, {s_lo!r}])={left_mass!r}, "
            f"nu([{s_hi!r}, inf))={right_mass!r}"
        )

    return FeasibilityReport(
        means_equal=bool(means_equal),
        convex_order=convex_order,
        irreducible=irreducible,
        interval_I=interval,
        endpoint_assumption=endpoint,
        detail=detail,
    )


@dataclass(frozen=True)
class ProblemInstance:
    """A centered ``(mu, nu)`` pair together with its feasibility verdicts.

    ``shift`` is the common mean that was subtracted; add it back to map
    atoms to the caller's coordinates.
    """

    mu: DiscreteMeasure
    nu: DiscreteMeasure
    shift: float
    feasibility: FeasibilityReport
    name: Optional[str] = None
    original: Optional[tuple] = None

    @property
    def original_pair(self):
        """The validated measures before centering."""
        if self.original is not None:
            return self.original
        return self.mu.shifted(self.shift), self.nu.shifted(self.shift)

    @property
    def shape(self):
        return (len(self.mu), len(self.nu))


def make_instance(mu: DiscreteMeasure, nu: DiscreteMeasure, name=None) -> ProblemInstance:
    """Center ``(mu, nu)`` and attach a feasibility report.

    Raises :class:`MeanMismatch` when the means differ; other feasibility
    failures are only recorded.
    """
    mu_c, nu_c, shift = center_pair(mu, nu)
    return ProblemInstance(mu_c, nu_c, shift, check_feasibility(mu_c, nu_c), name, (mu, nu))
