"""Reference solutions used to cross-check the solver.

Nothing here goes through the potential bookkeeping of :mod:`mbridge.solver`.
:func:`dykstra_solve` works on the coupling matrix itself, alternating KL
projections onto the column-marginal set and onto the per-row sets
``{row mass mu_i, row mean x_i}``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .core import Coupling, Potentials, canonical_gauge
from .exceptions import AtomOutOfRange, MeanMismatch, NonConvergence, ShapeMismatch
from .measures import (
    MEAN_TOL,
    DiscreteMeasure,
    ProblemInstance,
    make_instance,
    validate_measure,
)

_LAMBDA_MAX = 1e3


def _lse_rows(a):
    m = np.max(a, axis=1, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    return (m + np.log(np.sum(np.exp(a - m), axis=1, keepdims=True)))[:, 0]


def _lse_cols(a):
    return _lse_rows(a.T)


def _tilt_rows(Z, d, max_iter=100):
    """Find ``t_i`` with ``sum_j softmax(Z_i + t_i d_i)_j d_ij = 0``.

    Damped Newton on the convex log-partition ``psi(t)`` with Armijo
    backtracking.  Rows whose root is beyond ``|t| = 1e3`` stop at the cap.
    """
    n = Z.shape[0]
    t = np.zeros(n)
    scale = np.maximum(1.0, np.abs(d).max(axis=1))

    def psi(tt, rows):
        a = Z[rows] + tt[:, None] * d[rows]
        lz = _lse_rows(a)
        p = np.exp(a - lz[:, None])
        m = np.sum(p * d[rows], axis=1)
        v = np.sum(p * d[rows] ** 2, axis=1) - m * m
        return lz, m, np.maximum(v, 0.0)

    rows = np.arange(n)
    val, grad, curv = psi(t, rows)
    for _ in range(max_iter):
        live = (np.abs(grad) > 1e-13 * scale) & (np.abs(t) < _LAMBDA_MAX)
        if not live.any():
            break
        r = rows[live]
        with np.errstate(divide="ignore", invalid="ignore"):
            step = np.where(curv[live] > 0, -grad[live] / curv[live], -np.sign(grad[live]))
        step = np.clip(step, -1e2, 1e2)
        s = np.ones(r.size)
        t0, v0, g0 = t[r], val[r], grad[r]
        for _ls in range(60):
            tn = np.clip(t0 + s * step, -_LAMBDA_MAX, _LAMBDA_MAX)
            vn, gn, cn = psi(tn, r)
            ok = vn <= v0 + 1e-4 * s * step * g0 + 1e-15 * np.abs(v0)
            if ok.all():
                break
            s = np.where(ok, s, 0.5 * s)
        t[r], val[r], grad[r], curv[r] = tn, vn, gn, cn
    return t


@dataclass
class _DykstraState:
    log_pi: np.ndarray
    corr_cols: np.ndarray
    corr_rows: np.ndarray


def _matrix_residual(log_pi, mu, nu):
    w = np.exp(log_pi)
    rows, cols = w.sum(axis=1), w.sum(axis=0)
    return max(
        np.abs(rows - mu.weights).sum(),
        np.abs(cols - nu.weights).sum(),
        np.abs(w @ nu.atoms - rows * mu.atoms).sum(),
        abs(w.sum() - 1.0),
    )


def dykstra_solve(instance: ProblemInstance, tol: float = 1e-12, max_iter: int = 100000,
                  callback=None) -> Coupling:
    """Entropy-minimal martingale coupling by Dykstra's cyclic KL projections.

    Starts from the product coupling; each cycle projects onto the column
    constraint and then onto the row constraints, with multiplicative
    correction terms.  Stops once all residuals are ``<= tol``.
    ``callback(log_pi)`` is called after every full cycle.

    Raises
    ------
    NonConvergence
        If ``max_iter`` cycles do not reach ``tol``.
    """
    mu, nu = instance.mu, instance.nu
    log_mu, log_nu = np.log(mu.weights), np.log(nu.weights)
    d = nu.atoms[None, :] - mu.atoms[:, None]
    st = _DykstraState(log_mu[:, None] + log_nu[None, :], np.zeros(d.shape), np.zeros(d.shape))
    if len(mu) == 1:
        return Coupling(st.log_pi)

    for _ in range(max_iter):
        z = st.log_pi + st.corr_cols
        proj = z + (log_nu - _lse_cols(z))[None, :]
        st.corr_cols = z - proj

        z = proj + st.corr_rows
        t = _tilt_rows(z, d)
        a = z + t[:, None] * d
        proj = a + (log_mu - _lse_rows(a))[:, None]
        st.corr_rows = z - proj
        st.log_pi = proj
        if callback is not None:
            callback(st.log_pi.copy())

        if _matrix_residual(st.log_pi, mu, nu) <= tol:
            return Coupling(st.log_pi)
    raise NonConvergence(
        f"Dykstra did not reach tol={tol!r} in {max_iter} cycles "
        f"(residual {_matrix_residual(st.log_pi, mu, nu)!r})"
    )


def two_point_closed_form(mu: DiscreteMeasure, b: float):
    """Exact bridge for ``nu = (delta_{-b} + delta_b) / 2``.

    The martingale coupling is unique: row ``x`` puts ``(b - x) / 2b`` on
    ``-b`` and ``(b + x) / 2b`` on ``b``, and ``h(x) = log((b - x)/(b + x)) / 2b``.
    ``f`` comes from row normalization with ``g = 0``; the potentials are
    returned in canonical gauge.

    Returns
    -------
    (Coupling, Potentials)
    """
    b = float(b)
    x = mu.atoms
    if not b > 0:
        raise AtomOutOfRange(f"b must be positive, got {b!r}")
    if np.any(np.abs(x) >= b):
        raise AtomOutOfRange(f"mu atoms must lie in (-{b}, {b})")
    if abs(mu.mean()) > MEAN_TOL:
        raise MeanMismatch(f"mu must be centered, mean is {mu.mean()!r}")
    nu = DiscreteMeasure(np.array([-b, b]), np.array([0.5, 0.5]))

    kernel = np.column_stack([(b - x) / (2 * b), (b + x) / (2 * b)])
    coupling = Coupling(np.log(mu.weights)[:, None] + np.log(kernel))

    h = np.log((b - x) / (b + x)) / (2 * b)
    g = np.zeros(2)
    f = -np.log(0.5 * np.exp(-h * (-b - x)) + 0.5 * np.exp(-h * (b - x)))
    return coupling, canonical_gauge(Potentials(f, g, h), mu, nu)


@dataclass(frozen=True)
class GeneratorSpec:
    seed: int
    n_mu: int
    n_nu: int
    spread: float = 1.0

    def __post_init__(self):
        if self.n_mu < 1:
            raise ValueError("n_mu must be >= 1")
        if self.n_nu < 2:
            raise ValueError("n_nu must be >= 2")
        if not self.spread > 0:
            raise ValueError("spread must be positive")


def _tilt_to_mean(log_q, y, target):
    def mean_gap(t):
        a = log_q + t * y
        p = np.exp(a - a.max())
        return np.dot(p, y) / p.sum() - target

    lo, hi = -1.0, 1.0
    while mean_gap(lo) > 0:
        lo *= 2
    while mean_gap(hi) < 0:
        hi *= 2
    t = brentq(mean_gap, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)
    a = log_q + t * y
    p = np.exp(a - a.max())
    return p / p.sum()


def generate_instance(spec: GeneratorSpec) -> ProblemInstance:
    """Random pair in convex order, irreducible, with the endpoint assumption.

    Every mu-atom gets a strictly positive kernel on a common grid whose
    endpoints lie strictly outside the hull of mu, tilted to have mean equal
    to the atom; ``nu`` is the mixture of these kernels.
    """
    rng = np.random.default_rng(spec.seed)
    s = spec.spread
    x = np.sort(rng.uniform(-s, s, spec.n_mu))
    w = 0.5 / spec.n_mu + 0.5 * rng.dirichlet(np.ones(spec.n_mu))
    y_lo = x[0] - s * rng.uniform(0.25, 1.0)
    y_hi = x[-1] + s * rng.uniform(0.25, 1.0)
    y = np.sort(np.concatenate([[y_lo, y_hi], rng.uniform(y_lo, y_hi, spec.n_nu - 2)]))

    kernels = np.empty((spec.n_mu, spec.n_nu))
    for i, xi in enumerate(x):
        q = 0.5 / spec.n_nu + 0.5 * rng.dirichlet(np.ones(spec.n_nu))
        kernels[i] = _tilt_to_mean(np.log(q), y, xi)
    v = w @ kernels
    name = f"gen-{spec.seed}-{spec.n_mu}x{spec.n_nu}"
    return make_instance(validate_measure(x, w / w.sum()), validate_measure(y, v / v.sum()), name)


def coupling_distance(a: Coupling, b: Coupling) -> float:
    """Total variation distance ``0.5 * sum |pi_a - pi_b|``."""
    if a.shape != b.shape:
        raise ShapeMismatch(f"{a.shape} vs {b.shape}")
    return float(0.5 * np.abs(a.weights - b.weights).sum())
