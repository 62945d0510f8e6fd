"""Block coordinate ascent for the entropy-minimal martingale coupling.

Each sweep alternates

* the column update ``g_j = -log sum_i mu_i exp(f_i - h_i (y_j - x_i))``,
  after which every column of the implied kernel integrates to one, and
* an exact solve of every row block ``(f_i, h_i)``: ``h_i`` minimizes the
  convex function ``L(h) = log sum_j nu_j exp(g_j - h (y_j - x_i))`` and
  ``f_i = -L(h_i)``.  At the minimizer the exponentially tilted row has
  barycenter ``x_i``, so the row is the KL projection of the current kernel
  onto ``{row mass mu_i, row mean x_i}``.

Both blocks are exact maximizers of a concave dual, so the dual value is
non-decreasing over sweeps.  In relaxed mode ``h_i`` is restricted to
``x_i h_i <= 0``, which is the dual of the one-sided constraint
``x_i * (row mean - x_i) >= 0``.
"""

from __future__ import annotations

import enum
import math
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.special import logsumexp

from .core import (
    Coupling,
    Gauge,
    Potentials,
    Residuals,
    canonical_gauge,
    coupling_from_potentials,
    dual_objective,
    rel_entropy,
    residuals,
    row_barycenter_error,
)
from .exceptions import Infeasible, InfeasibleRow, NonConvergence
from .measures import DiscreteMeasure, ProblemInstance


class Mode(str, enum.Enum):
    MARTINGALE = "martingale"
    RELAXED = "relaxed"


@dataclass(frozen=True)
class SolverConfig:
    tol: float = 1e-9
    max_iter: int = 10000
    h_max: float = 1e3
    mode: Mode = Mode.MARTINGALE
    newton_tol: float = 1e-12
    newton_max_iter: int = 60

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if not self.h_max > 0:
            raise ValueError("h_max must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if self.newton_max_iter < 1:
            raise ValueError("newton_max_iter must be >= 1")
        object.__setattr__(self, "mode", Mode(self.mode))


@dataclass
class SolveReport:
    potentials: Potentials
    coupling: Coupling
    primal: float
    dual: float
    gap: float
    residuals: Residuals
    iterations: int
    converged: bool
    mode: Mode = Mode.MARTINGALE
    warnings: list = field(default_factory=list)
    trace: list = field(default_factory=list)
    clipped: np.ndarray = None
    one_sided: float = 0.0
    slackness: float = 0.0
    tv_to_martingale: Optional[float] = None
    elapsed: float = 0.0

    def to_dict(self) -> dict:
        d = {
            "mode": self.mode.value,
            "gauge": self.potentials.gauge.value,
            "converged": self.converged,
            "iterations": self.iterations,
            "primal": self.primal,
            "dual": self.dual,
            "gap": self.gap,
            "residuals": self.residuals.to_dict(),
            "potentials": self.potentials.to_dict(),
            "warnings": list(self.warnings),
            "clipped_rows": [] if self.clipped is None else np.flatnonzero(self.clipped).tolist(),
        }
        if self.mode is Mode.RELAXED:
            d["one_sided_residual"] = self.one_sided
            d["slackness"] = self.slackness
            d["tv_to_martingale"] = self.tv_to_martingale
        return d


def update_g(f, h, mu: DiscreteMeasure, nu: DiscreteMeasure) -> np.ndarray:
    """Column potentials making ``sum_i mu_i e^{f_i + g_j - h_i (y_j - x_i)} = 1``."""
    f = np.asarray(f, dtype=float)
    h = np.asarray(h, dtype=float)
    drift = nu.atoms[None, :] - mu.atoms[:, None]
    logits = (np.log(mu.weights) + f)[:, None] - h[:, None] * drift
    return -logsumexp(logits, axis=0)


def _tilt_stats(base, drift, h):
    # log-partition, its derivative (x - tilted mean) and curvature (tilted variance)
    logits = base - h[:, None] * drift
    lam = logsumexp(logits, axis=1)
    p = np.exp(logits - lam[:, None])
    m1 = np.sum(p * drift, axis=1)
    var = np.sum(p * (drift - m1[:, None]) ** 2, axis=1)
    return lam, -m1, var


def _solve_rows(x, g, nu: DiscreteMeasure, mode: Mode, config: SolverConfig, h0=None):
    """Vectorized row-block solve; returns ``(f, h, clipped)`` arrays."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    n = x.size
    y = nu.atoms
    drift = y[None, :] - x[:, None]
    base = np.broadcast_to(np.log(nu.weights) + np.asarray(g, dtype=float), drift.shape)

    eps = 1e-12 * max(1.0, float(np.abs(y).max()))
    if mode is Mode.MARTINGALE:
        outside = (x < y[0] - eps) | (x > y[-1] + eps)
        if outside.any():
            k = int(np.flatnonzero(outside)[0])
            raise InfeasibleRow(
                f"row barycenter {x[k]!r} outside the target hull [{y[0]!r}, {y[-1]!r}]"
            )

    hmax = config.h_max
    tol = config.newton_tol * np.maximum(1.0, np.abs(drift).max(axis=1))
    h = np.zeros(n) if h0 is None else np.clip(np.asarray(h0, dtype=float), -hmax, hmax).copy()
    _, d, curv = _tilt_stats(base, drift, h)

    lo = np.full(n, -hmax)
    hi = np.full(n, hmax)
    clipped = np.zeros(n, dtype=bool)
    done = np.abs(d) <= tol

    # Bracket the root of the increasing derivative, growing the step by 4.
    want_lo = ~done & (d > 0)
    want_hi = ~done & (d < 0)
    hi[want_lo] = h[want_lo]
    lo[want_hi] = h[want_hi]
    step = 1.0
    while want_lo.any() or want_hi.any():
        for want, sign in ((want_lo, -1.0), (want_hi, 1.0)):
            idx = np.flatnonzero(want)
            if idx.size == 0:
                continue
            cand = np.clip(h[idx] + sign * step, -hmax, hmax)
            _, dc, cc = _tilt_stats(base[idx], drift[idx], cand)
            at_cap = np.abs(cand) >= hmax
            # sign * dc < 0: root lies beyond cand, keep searching
            beyond = sign * dc < 0
            found = ~beyond
            if sign < 0:
                lo[idx[found]] = cand[found]
                hi[idx[beyond]] = cand[beyond]
            else:
                hi[idx[found]] = cand[found]
                lo[idx[beyond]] = cand[beyond]
            # restart Newton from the freshest point
            h[idx], d[idx], curv[idx] = cand, dc, cc
            cap = beyond & at_cap
            clipped[idx[cap]] = True
            want[idx[found | cap]] = False
        step *= 4.0

    done |= clipped | (np.abs(d) <= tol)
    active = ~done
    it = 0
    while active.any():
        if it >= config.newton_max_iter:
            k = int(np.flatnonzero(active)[0])
            raise NonConvergence(
                f"row solve at x={x[k]!r} stalled after {it} iterations, |L'|={abs(d[k])!r}"
            )
        idx = np.flatnonzero(active)
        with np.errstate(divide="ignore", invalid="ignore"):
            hn = h[idx] - d[idx] / curv[idx]
        a, b = lo[idx], hi[idx]
        bad = ~np.isfinite(hn) | (hn <= a) | (hn >= b)
        hn[bad] = 0.5 * (a[bad] + b[bad])
        _, dn, cn = _tilt_stats(base[idx], drift[idx], hn)
        h[idx], d[idx], curv[idx] = hn, dn, cn
        pos = dn > 0
        hi[idx[pos]] = hn[pos]
        lo[idx[~pos]] = hn[~pos]
        # a collapsed bracket means the root is pinned to machine precision
        collapsed = (hi[idx] - lo[idx]) <= 4 * np.finfo(float).eps * (1.0 + np.abs(hn))
        active[idx[(np.abs(dn) <= tol[idx]) | collapsed]] = False
        it += 1

    # One extra Newton step from inside the tolerance drives |L'| to rounding
    # level; keep it only where it helps.
    idx = np.flatnonzero(~clipped & (d != 0) & (curv > 0))
    if idx.size:
        hn = np.clip(h[idx] - d[idx] / curv[idx], lo[idx], hi[idx])
        _, dn, _ = _tilt_stats(base[idx], drift[idx], hn)
        better = np.abs(dn) < np.abs(d[idx])
        h[idx[better]] = hn[better]

    # a root found exactly at the cap means the derivative underflowed there
    clipped |= np.abs(h) >= hmax

    if mode is Mode.RELAXED:
        proj = np.where(x > 0, np.minimum(h, 0.0), np.where(x < 0, np.maximum(h, 0.0), h))
        clipped &= proj == h
        h = proj

    lam, _, _ = _tilt_stats(base, drift, h)
    return -lam, h, clipped


def solve_row(x: float, g, nu: DiscreteMeasure, mode=Mode.MARTINGALE, config=None, h0=0.0):
    """Solve one row block; returns ``(f_row, h_row, clipped)``."""
    config = config or SolverConfig()
    f, h, clipped = _solve_rows([x], g, nu, Mode(mode), config, h0=[h0])
    return float(f[0]), float(h[0]), bool(clipped[0])


def _one_sided(c: Coupling, p: Potentials, mu, nu):
    b = row_barycenter_error(c, mu, nu)
    x = mu.atoms
    one_sided = float(np.sum(mu.weights * np.maximum(0.0, -x * b) / (np.abs(x) + 1.0)))
    slack = float(np.sum(mu.weights * np.abs(p.h * b)))
    return one_sided, slack


def _product_report(instance: ProblemInstance, mode: Mode, warnings, t0) -> SolveReport:
    mu, nu = instance.mu, instance.nu
    p = Potentials.zeros(len(mu), len(nu), Gauge.CANONICAL)
    c = Coupling(np.log(mu.weights)[:, None] + np.log(nu.weights)[None, :])
    res = residuals(c, mu, nu)
    primal = rel_entropy(c, mu, nu)
    dual = dual_objective(p, mu, nu)
    trace = [dict(iteration=1, **res.to_dict(), dual=dual)]
    return SolveReport(p, c, primal, dual, primal - dual, res, 1, True, mode, warnings, trace,
                       clipped=np.zeros(len(mu), dtype=bool), elapsed=time.perf_counter() - t0)


def _instance_warnings(instance: ProblemInstance) -> list:
    feas = instance.feasibility
    if not feas.convex_order:
        raise Infeasible("; ".join(feas.detail) or "marginals are not in convex order")
    out = []
    if not feas.irreducible:
        out.append("pair is not irreducible; the optimal coupling is not equivalent to the product")
    if not feas.endpoint_assumption:
        out.append("endpoint assumption violated; potentials are not guaranteed to exist")
    return out


def _run(instance: ProblemInstance, config: SolverConfig) -> SolveReport:
    t0 = time.perf_counter()
    mode = config.mode
    warnings = _instance_warnings(instance)
    mu, nu = instance.mu, instance.nu
    if mu.is_dirac():
        return _product_report(instance, mode, warnings, t0)

    n = len(mu)
    f = np.zeros(n)
    h = np.zeros(n)
    clipped = np.zeros(n, dtype=bool)
    trace = []
    converged = False
    it = 0
    p = Potentials(f, np.zeros(len(nu)), h)
    for it in range(1, config.max_iter + 1):
        g = update_g(f, h, mu, nu)
        try:
            f, h, clipped = _solve_rows(mu.atoms, g, nu, mode, config, h0=h)
        except NonConvergence as exc:
            warnings.append(str(exc))
            it -= 1
            break
        p = Potentials(f, g, h)
        c = coupling_from_potentials(p, mu, nu)
        res = residuals(c, mu, nu)
        row = dict(iteration=it, **res.to_dict(), dual=dual_objective(p, mu, nu))
        if mode is Mode.RELAXED:
            one_sided, slack = _one_sided(c, p, mu, nu)
            row.update(one_sided=one_sided, slackness=slack)
            stat = max(res.marginal_mu, res.marginal_nu, res.mass, one_sided, slack)
        else:
            stat = res.max()
        trace.append(row)
        if not math.isfinite(stat):
            warnings.append(f"non-finite residual at sweep {it}")
            break
        if stat <= config.tol:
            converged = True
            break

    if clipped.any():
        warnings.append(
            f"h clipped at h_max={config.h_max!r} on {int(clipped.sum())} row(s): "
            f"{mu.atoms[clipped].tolist()}"
        )
    if not converged:
        warnings.append(f"no convergence to tol={config.tol!r} after {it} sweep(s)")

    p = canonical_gauge(p, mu, nu)
    c = coupling_from_potentials(p, mu, nu)
    res = residuals(c, mu, nu)
    primal = rel_entropy(c, mu, nu)
    dual = dual_objective(p, mu, nu)
    one_sided, slack = _one_sided(c, p, mu, nu)
    return SolveReport(
        potentials=p, coupling=c, primal=primal, dual=dual, gap=primal - dual,
        residuals=res, iterations=it, converged=converged, mode=mode, warnings=warnings,
        trace=trace, clipped=clipped, one_sided=one_sided, slackness=slack,
        elapsed=time.perf_counter() - t0,
    )


def solve(instance: ProblemInstance, config: Optional[SolverConfig] = None) -> SolveReport:
    """Entropy-minimal martingale coupling of ``instance``.

    Raises :class:`Infeasible` if the pair is not in convex order.  Failure to
    converge is reported through ``converged=False``, never raised.
    """
    config = config or SolverConfig()
    return _run(instance, config)


def solve_relaxed(instance: ProblemInstance, config: Optional[SolverConfig] = None) -> SolveReport:
    """Entropy minimizer over couplings with ``x * (row mean - x) >= 0``.

    The report carries ``tv_to_martingale``, the total variation distance to
    the martingale-mode solution computed with the same settings.
    """
    from .oracle import coupling_distance

    config = config or SolverConfig()
    rep = _run(instance, _replace_mode(config, Mode.RELAXED))
    try:
        ref = _run(instance, _replace_mode(config, Mode.MARTINGALE))
    except InfeasibleRow as exc:
        rep.warnings.append(f"martingale reference failed: {exc}")
        return rep
    rep.tv_to_martingale = coupling_distance(rep.coupling, ref.coupling)
    if not ref.converged:
        rep.warnings.append("martingale reference run did not converge")
    return rep


def _replace_mode(config: SolverConfig, mode: Mode) -> SolverConfig:
    from dataclasses import replace

    return replace(config, mode=mode)
