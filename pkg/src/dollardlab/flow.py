"""
Classical Hamilton flows, scattering asymptotes and high-energy limits.

Flows are integrated with the explicit Dormand-Prince 8(5,3) pair from scipy
(dense output, tolerance-controlled steps).  Asymptotic data are extracted by
sampling ``z(t) = x(t) - d_xi Psi(t, xi(t))`` on a geometric time ladder and
fitting ``z(t) = z_inf + A t^-rho`` with ``rho`` estimated from the data.
"""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.integrate import solve_ivp

from .errors import (
    ConvergenceError,
    DomainError,
    IntegrationError,
    NontrappingError,
    SolverError,
)
from .phase import PhaseFunction
from .symbols import Scaled, SymbolModel, _weights

__all__ = [
    "PhasePoint",
    "Trajectory",
    "integrate_flow",
    "check_nontrapping",
    "NontrappingResult",
    "TailFit",
    "tail_extrapolate",
    "ScatteringData",
    "compute_asymptotes",
    "wave_map",
    "HighEnergyResult",
    "high_energy_limit",
    "EffectiveHamiltonian",
    "effective_hamiltonian_flow",
    "EstimateEntry",
    "EstimateReport",
    "verify_flow_estimates",
]

logger = logging.getLogger(__name__)

MIN_XI = 1e-3
# Local step tolerance handed to the Runge-Kutta pair, relative to the requested
# accuracy; the pair controls local error only, so the global error over a few
# hundred steps needs this margin to stay below ``tol``.
STEP_SAFETY = 1e-2


@dataclass(frozen=True)
class PhasePoint:
    x: np.ndarray
    xi: np.ndarray

    def __post_init__(self):
        x = np.atleast_1d(np.asarray(self.x, dtype=float)).copy()
        xi = np.atleast_1d(np.asarray(self.xi, dtype=float)).copy()
        if x.shape != xi.shape or x.ndim != 1:
            raise DomainError("x and xi must be 1-d arrays of equal length")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(xi))):
            raise DomainError("non-finite phase point")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "xi", xi)

    @property
    def dim(self):
        return self.x.size

    def as_array(self):
        return np.concatenate([self.x, self.xi])

    @classmethod
    def from_array(cls, y):
        y = np.asarray(y, dtype=float)
        d = y.size // 2
        return cls(y[:d], y[d:])


def _require_xi(point: PhasePoint):
    if np.linalg.norm(point.xi) < MIN_XI:
        raise DomainError(f"|xi| < {MIN_XI}: asymptotic statements need xi != 0")


@dataclass
class Trajectory:
    """Sampled flow ``t -> (x(t), xi(t))`` with conservation diagnostics."""

    t: np.ndarray
    x: np.ndarray
    xi: np.ndarray
    tol: float
    variant: str
    energy: np.ndarray
    dense: object = field(default=None, repr=False)

    @property
    def energy_drift(self):
        return float(np.max(np.abs(self.energy - self.energy[0])))

    def __call__(self, t):
        """Dense-output evaluation, returns ``(x, xi)``."""
        if self.dense is None:
            raise DomainError("trajectory has no dense output")
        y = self.dense(np.asarray(t, dtype=float))
        d = self.x.shape[1]
        return y[:d].T, y[d:].T

    def end(self):
        return PhasePoint(self.x[-1], self.xi[-1])

    def write_csv(self, path):
        d = self.x.shape[1]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t"] + [f"x{j}" for j in range(d)] + [f"xi{j}" for j in range(d)] + ["energy_drift"])
            drift = np.abs(self.energy - self.energy[0])
            for i in range(self.t.size):
                row = [self.t[i], *self.x[i], *self.xi[i], drift[i]]
                w.writerow([f"{v:.17g}" for v in row])


def _variant_name(variant):
    return f"scaled({variant.lam:g})" if isinstance(variant, Scaled) else str(variant)


def _solve(rhs, t0, t1, y0, tol, t_eval, what, max_step=np.inf):
    sol = solve_ivp(
        rhs,
        (t0, t1),
        y0,
        method="DOP853",
        rtol=max(tol * STEP_SAFETY, 1e-13),
        atol=tol * STEP_SAFETY,
        dense_output=True,
        t_eval=t_eval,
        max_step=max_step,
    )
    if sol.status != 0:
        t_bad = float(sol.t[-1]) if sol.t.size else t0
        raise IntegrationError(f"{what} integration failed at t={t_bad:.6g}: {sol.message}", t=t_bad)
    return sol


def integrate_flow(model: SymbolModel, start: PhasePoint, t_span, variant="full", tol=1e-10, t_eval=None, max_step=None):
    """Integrate Hamilton's equations for ``p_variant``.

    Parameters
    ----------
    model : SymbolModel
    start : PhasePoint
        Initial data at ``t_span[0]``.
    t_span : float or (float, float)
        End time, or ``(t0, t1)``.
    variant : {"kinetic", "long_range", "full"} or Scaled
    tol : float
        Relative and absolute step tolerance.
    t_eval : array_like, optional
        Output times; default is the accepted step grid.
    max_step : float, optional
        Largest solver step; useful on short spans where the error control
        may otherwise accept a single oversized step.

    Returns
    -------
    Trajectory
    """
    if not tol > 0:
        raise DomainError("tol must be positive")
    if isinstance(variant, Scaled) and not variant.lam >= 1:
        raise DomainError("scaled flow requires lam >= 1")
    _weights(variant)
    if np.isscalar(t_span):
        t_span = (0.0, float(t_span))
    t0, t1 = map(float, t_span)
    d = model.dim
    if start.dim != d:
        raise DomainError("start point dimension does not match the model")
    flat = model.is_flat

    def rhs(t, y):
        x, xi = y[:d], y[d:]
        if not flat and not model.metric.min_eigenvalue(x) > 0:
            raise IntegrationError(f"metric lost positive definiteness at t={t:.6g}", t=t)
        v, f = model.field(x, xi, variant)
        return np.concatenate([v, f])

    if t1 == t0:
        t = np.array([t0])
        x = start.x[None]
        xi = start.xi[None]
        sol = None
    else:
        sol = _solve(rhs, t0, t1, start.as_array(), tol, t_eval, "flow", np.inf if max_step is None else float(max_step))
        t = sol.t
        x = sol.y[:d].T
        xi = sol.y[d:].T
        if t_eval is not None and (t.size == 0 or t[0] != t0):
            t = np.concatenate([[t0], t])
            x = np.vstack([start.x, x])
            xi = np.vstack([start.xi, xi])
    energy = model.symbol(x, xi, variant)
    traj = Trajectory(t, x, xi, tol, _variant_name(variant), energy, None if sol is None else sol.sol)
    logger.debug("flow %s over [%g, %g]: %d samples, drift %.3e", traj.variant, t0, t1, t.size, traj.energy_drift)
    return traj


@dataclass(frozen=True)
class NontrappingResult:
    c: float
    C: float
    passed: bool
    required: float


def check_nontrapping(traj: Trajectory, model: Optional[SymbolModel] = None, fraction=0.1):
    """Fit ``|x(t)| >= c |t| - C`` along a trajectory.

    ``c`` is the least-squares slope of ``|x|`` against ``|t|`` over the second
    half of the samples, ``C`` the smallest constant making the bound hold at
    every sample.  The check passes when ``c >= fraction * sqrt(2 k(x0, xi0))``.
    """
    t = np.abs(traj.t)
    if t.max() < 10.0:
        raise DomainError("nontrapping check needs a trajectory spanning |t| >= 10")
    r = np.linalg.norm(traj.x, axis=1)
    tail = t >= 0.5 * t.max()
    if np.count_nonzero(tail) < 2:
        tail = slice(-2, None)
    c = float(np.polyfit(t[tail], r[tail], 1)[0])
    C = float(np.max(c * t - r))
    if model is None:
        speed = float(np.linalg.norm(traj.xi[0]))
    else:
        speed = float(np.sqrt(2.0 * model.kinetic(traj.x[0], traj.xi[0])))
    required = fraction * speed
    return NontrappingResult(c, max(C, 0.0), bool(c > 0 and c >= required), required)


# -- tail extrapolation ------------------------------------------------------------


@dataclass(frozen=True)
class TailFit:
    limit: np.ndarray
    rho: float
    error: float
    amplitude: np.ndarray


def tail_extrapolate(s, Z, noise=None, use_last=6):
    """Extrapolate ``Z(s) -> Z_inf`` assuming ``Z(s) = Z_inf + A s^-rho``.

    ``s`` must be geometric and increasing, ``Z`` has shape ``(len(s), m)``.
    ``rho`` is shared by all components and estimated from successive
    differences above the ``noise`` floor; ``Z_inf`` and ``A`` then follow by
    linear least squares over the last ``use_last`` rungs.  The error estimate is
    the larger of the fit residual and the change when the earliest rung used
    is dropped.

    Raises
    ------
    ConvergenceError
        When the fitted exponent is not positive.
    """
    s = np.asarray(s, dtype=float)
    Z = np.asarray(Z, dtype=float).reshape(s.size, -1)
    if noise is None:
        noise = 1e-11 * max(1.0, float(np.max(np.abs(Z))))
    D = np.linalg.norm(np.diff(Z, axis=0), axis=1)
    useful = D > noise
    if np.count_nonzero(useful) < 2:
        return TailFit(Z[-1].copy(), math.inf, float(D.max()) if D.size else 0.0, np.zeros(Z.shape[1]))
    idx = np.nonzero(useful)[0][-max(use_last - 1, 2):]
    slope = float(np.polyfit(np.log(s[idx]), np.log(D[idx]), 1)[0])
    rho = -slope
    if not rho > 0:
        raise ConvergenceError(f"tail does not converge: fitted exponent {-rho:.3f} >= 0")
    k0 = max(0, min(idx[0], s.size - use_last))

    def fit(lo):
        A = np.stack([np.ones(s.size - lo), s[lo:] ** (-rho)], axis=1)
        coef, *_ = np.linalg.lstsq(A, Z[lo:], rcond=None)
        resid = float(np.max(np.abs(A @ coef - Z[lo:])))
        return coef, resid

    coef, resid = fit(k0)
    err = resid
    if s.size - (k0 + 1) >= 3:
        coef2, _ = fit(k0 + 1)
        err = max(err, float(np.max(np.abs(coef2[0] - coef[0]))))
    err = max(err, noise)
    return TailFit(coef[0], rho, err, coef[1])


# -- asymptotes ----------------------------------------------------------------------


@dataclass(frozen=True)
class ScatteringData:
    x_plus: np.ndarray
    xi_plus: np.ndarray
    x_minus: np.ndarray
    xi_minus: np.ndarray
    rho_plus: float
    rho_minus: float
    horizon: float
    error: float
    ladder: np.ndarray = field(repr=False, default=None)
    z_plus: np.ndarray = field(repr=False, default=None)

    def record(self):
        """Flat key-value view."""
        out = {"horizon": self.horizon, "error": self.error, "rho_plus": self.rho_plus, "rho_minus": self.rho_minus}
        for name in ("x_plus", "xi_plus", "x_minus", "xi_minus"):
            for j, v in enumerate(getattr(self, name)):
                out[f"{name}{j}"] = float(v)
        return out

    def side(self, sign):
        return (self.x_plus, self.xi_plus) if sign > 0 else (self.x_minus, self.xi_minus)


def _ladder(T0, T_max):
    k = int(math.floor(math.log2(T_max / T0) + 1e-12))
    if k < 3:
        raise DomainError("time ladder needs at least four rungs (raise T_max)")
    return T0 * 2.0 ** np.arange(k + 1)


def _cancellation_noise(z, x, tol):
    """Noise floor of ``z = x - d_xi Psi``: the subtraction cancels ``|x|``-sized terms."""
    xmax = float(np.max(np.abs(x)))
    rtol = max(tol * STEP_SAFETY, 1e-13)
    return max(1e-11 * max(1.0, float(np.max(np.abs(z)))), 10.0 * rtol * xmax, 100.0 * np.finfo(float).eps * xmax)


def _one_side(model, start, sign, ladder, tol, psi, check):
    times = sign * ladder
    traj = integrate_flow(model, start, (0.0, times[-1]), "kinetic", tol, t_eval=None)
    if check:
        nt = check_nontrapping(traj, model)
        if not nt.passed:
            raise NontrappingError(f"trajectory fails nontrapping fit: c={nt.c:.3g} < {nt.required:.3g}")
    x, xi = traj(times)
    z = x - psi.gradient(times, xi)
    zfit = tail_extrapolate(ladder, z, noise=_cancellation_noise(z, x, tol))
    xifit = tail_extrapolate(ladder, xi)
    return zfit, xifit, z


def compute_asymptotes(model: SymbolModel, start: PhasePoint, T_max=1e4, tol=1e-10, T0=None, check=True):
    """Asymptotic data ``(x_+-, xi_+-)`` of the kinetic flow through ``start``.

    ``z(t) = x(t) - d_xi Psi(t, xi(t))`` is sampled on ``t_k = T0 2^k <= T_max``
    (``T0 = 8/|xi_0|`` by default) and extrapolated with :func:`tail_extrapolate`.
    """
    _require_xi(start)
    if T0 is None:
        T0 = 8.0 / float(np.linalg.norm(start.xi))
    ladder = _ladder(T0, T_max)
    psi = PhaseFunction(model, "psi", tol=min(1e-11, tol), memo=False)
    zp, xp, zraw = _one_side(model, start, +1.0, ladder, tol, psi, check)
    zm, xm, _ = _one_side(model, start, -1.0, ladder, tol, psi, check)
    err = max(zp.error, xp.error, zm.error, xm.error)
    return ScatteringData(
        zp.limit, xp.limit, zm.limit, xm.limit, zp.rho, zm.rho, float(ladder[-1]), err, ladder, zraw
    )


def wave_map(
    model: SymbolModel,
    point: PhasePoint,
    direction="forward",
    sign=+1,
    tol=1e-9,
    T_max=1e4,
    flow_tol=1e-11,
    max_iter=30,
    step=1e-5,
):
    """Classical wave map ``W_+-`` and its inverse.

    ``direction="inverse"`` maps initial data ``(x0, xi0)`` to asymptotic data
    ``(x_+-, xi_+-)``; ``direction="forward"`` inverts that map by damped Newton
    shooting with forward-difference Jacobians and Armijo backtracking.  The
    time ladder starts at ``8 / |xi_+-|`` in both directions, so a round trip
    compares the same discretised map.
    """
    _require_xi(point)
    sign = 1 if sign > 0 else -1
    # both directions must sample the same time ladder; the asymptotic speed
    # |xi_+-| equals sqrt(2 k(x0, xi0)) because the metric tends to the identity
    if direction == "inverse":
        speed = math.sqrt(2.0 * float(model.kinetic(point.x, point.xi)))
    else:
        speed = float(np.linalg.norm(point.xi))
    T0 = 8.0 / speed

    def asym(p):
        sd = compute_asymptotes(model, p, T_max=T_max, tol=flow_tol, T0=T0, check=False)
        x, xi = sd.side(sign)
        return np.concatenate([x, xi])

    if direction == "inverse":
        return PhasePoint.from_array(asym(point))
    if direction != "forward":
        raise DomainError("direction must be 'forward' or 'inverse'")
    target = point.as_array()
    y = target.copy()
    F = asym(PhasePoint.from_array(y)) - target
    res = float(np.max(np.abs(F)))
    n = y.size
    for it in range(max_iter):
        if res <= tol:
            return PhasePoint.from_array(y)
        J = np.empty((n, n))
        for j in range(n):
            yp = y.copy()
            yp[j] += step
            J[:, j] = (asym(PhasePoint.from_array(yp)) - target - F) / step
        try:
            dy = np.linalg.solve(J, -F)
        except np.linalg.LinAlgError as exc:
            raise SolverError("singular Jacobian in wave-map shooting", residual=res) from exc
        alpha = 1.0
        while alpha > 1e-4:
            y_new = y + alpha * dy
            F_new = asym(PhasePoint.from_array(y_new)) - target
            res_new = float(np.max(np.abs(F_new)))
            if res_new <= (1.0 - 1e-4 * alpha) * res:
                break
            alpha *= 0.5
        else:
            raise SolverError(f"Armijo backtracking failed at iteration {it}", residual=res)
        y, F, res = y_new, F_new, res_new
        logger.debug("wave_map newton it=%d residual=%.3e", it, res)
    if res <= tol:
        return PhasePoint.from_array(y)
    raise SolverError(f"Newton shooting did not converge in {max_iter} iterations", residual=res)


# -- high-energy limit ------------------------------------------------------------------


@dataclass(frozen=True)
class HighEnergyResult:
    limit: PhasePoint
    rho_x: float
    rho_xi: float
    error: float
    samples_x: np.ndarray
    samples_xi: np.ndarray
    reference: Optional[ScatteringData] = None
    discrepancy: Optional[float] = None
    consistent: Optional[bool] = None


def high_energy_limit(
    model: SymbolModel,
    phase: PhaseFunction,
    start: PhasePoint,
    t,
    lam_ladder,
    tol=1e-11,
    reference: Optional[ScatteringData] = None,
    factor=5.0,
):
    """Extrapolate ``(x(t; x0, lam xi0) - d_xi Phi(t, xi(t)), xi(t)/lam)`` as ``lam -> inf``.

    With a ``reference`` (from :func:`compute_asymptotes`), the limit is compared
    with ``(x_+-, xi_+-)`` (sign of ``t``); a discrepancy above ``factor`` times the
    combined error estimate is flagged with ``consistent=False`` and logged.
    """
    _require_xi(start)
    t = float(t)
    if t == 0:
        raise DomainError("t must be nonzero")
    lams = np.asarray(lam_ladder, dtype=float)
    ratios = lams[1:] / lams[:-1]
    if lams.size < 4 or not np.allclose(ratios, ratios[0]) or lams.max() < 2.0**8:
        raise DomainError("lam_ladder must be geometric with at least 4 rungs and max >= 2^8")
    zs, xis = [], []
    for lam in lams:
        p = PhasePoint(start.x, lam * start.xi)
        traj = integrate_flow(model, p, t, "full", tol)
        x, xi = traj.x[-1], traj.xi[-1]
        zs.append(x - phase.gradient(t, xi))
        xis.append(xi / lam)
    zs = np.array(zs)
    xis = np.array(xis)
    zfit = tail_extrapolate(lams, zs)
    xfit = tail_extrapolate(lams, xis)
    err = max(zfit.error, xfit.error)
    limit = PhasePoint(zfit.limit, xfit.limit)
    disc = consistent = None
    if reference is not None:
        xr, xir = reference.side(np.sign(t))
        disc = float(max(np.max(np.abs(limit.x - xr)), np.max(np.abs(limit.xi - xir))))
        consistent = disc <= factor * (err + reference.error)
        if not consistent:
            logger.warning(
                "high-energy limit disagrees with asymptotes: %.3e > %g x %.3e", disc, factor, err + reference.error
            )
    return HighEnergyResult(limit, zfit.rho, xfit.rho, err, zs, xis, reference, disc, consistent)


# -- effective Hamiltonian ------------------------------------------------------------------


class EffectiveHamiltonian:
    """``l(t; z, xi) = p(z + d_xi Phi(t, xi), xi) - d_t Phi(t, xi)`` and its derivatives."""

    def __init__(self, model: SymbolModel, phase: PhaseFunction, variant="full"):
        if phase.model is not model:
            logger.debug("effective Hamiltonian uses a phase built on a different model object")
        self.model = model
        self.phase = phase
        self.variant = variant

    def _pieces(self, t, xi):
        pf = self.phase
        t_a = np.array([t])
        grad = t * xi + pf._deviation(t_a, xi[None], 1)[0]
        return grad

    def value(self, t, z, xi):
        z = np.asarray(z, dtype=float)
        xi = np.asarray(xi, dtype=float)
        x = z + self._pieces(t, xi)
        return float(self.model.symbol(x, xi, self.variant) - self.phase.dt(t, xi))

    def derivatives(self, t, z, xi):
        """``(d_z l, d_xi l)``."""
        pf = self.phase
        dg, dh = pf.deviation_jet(t, xi)
        grad = t * xi + dg
        hess = t * np.eye(xi.size) + dh
        x = z + grad
        v, f = self.model.field(x, xi, self.variant)
        p_x = -f
        l_xi = v + hess @ p_x - pf.dt_gradient(t, xi)
        return p_x, l_xi


def effective_hamiltonian_flow(model: SymbolModel, phase: PhaseFunction, start: PhasePoint, t_span, tol=1e-9, t_eval=None):
    """Integrate ``z' = d_xi l``, ``xi' = -d_z l`` from ``(z, xi) = start`` at ``t = 0``.

    The Dollard phase is evaluated by quadrature at every right-hand-side call,
    so ``phase.tol`` should be well below ``tol``.  Steps are capped at 1/64 of
    the time span: the embedded error estimate occasionally accepts an
    oversized step on this time-dependent field, which the cap prevents.
    """
    if np.isscalar(t_span):
        t_span = (0.0, float(t_span))
    t0, t1 = map(float, t_span)
    if t0 != 0.0:
        raise DomainError("the effective flow starts at t = 0, where d_xi Phi vanishes")
    ham = EffectiveHamiltonian(model, phase)
    d = model.dim

    def rhs(t, y):
        z, xi = y[:d], y[d:]
        l_z, l_xi = ham.derivatives(t, z, xi)
        return np.concatenate([l_xi, -l_z])

    sol = _solve(rhs, t0, t1, start.as_array(), tol, t_eval, "effective", max_step=abs(t1 - t0) / 64.0)
    t = sol.t
    z = sol.y[:d].T
    xi = sol.y[d:].T
    energy = np.array([ham.value(tt, zz, xx) for tt, zz, xx in zip(t, z, xi)])
    return Trajectory(t, z, xi, tol, "effective", energy, sol.sol)


# -- estimates -------------------------------------------------------------------------------


@dataclass(frozen=True)
class EstimateEntry:
    quantity: str
    slope: float
    expected: float
    passed: bool


@dataclass
class EstimateReport:
    entries: list = field(default_factory=list)
    times: Optional[np.ndarray] = None
    series: dict = field(default_factory=dict)

    @property
    def passed(self):
        return all(e.passed for e in self.entries)


def _slope(t, y, floor):
    keep = y > floor
    if np.count_nonzero(keep) < 3:
        return -math.inf
    return float(np.polyfit(np.log(np.sqrt(1 + t[keep] ** 2)), np.log(y[keep]), 1)[0])


def verify_flow_estimates(model: SymbolModel, start: PhasePoint, T_max=1e4, tol=1e-11, slack=0.15, n_times=25):
    """Log-log slopes of the decay estimates along the forward kinetic flow.

    Reference limits ``(x_+, xi_+)`` come from a ladder reaching ``100 T_max``;
    the slopes of ``|eta - xi_+|``, ``|y - t eta|`` and ``|z - x_+|`` over
    ``t in [T_max/100, T_max]`` are compared with ``-mu``, ``1 - mu`` and
    ``1 - 2 mu'`` (``mu' = min(mu, nu/2)``) plus ``slack``.
    """
    _require_xi(start)
    mu = model.metric.mu
    mup = min(mu, model.potential.nu / 2.0)
    ref = compute_asymptotes(model, start, T_max=100.0 * T_max, tol=tol)
    times = np.geomspace(T_max / 100.0, T_max, n_times)
    traj = integrate_flow(model, start, (0.0, T_max), "kinetic", tol)
    y, eta = traj(times)
    psi = PhaseFunction(model, "psi", tol=1e-12, memo=False)
    z = y - psi.gradient(times, eta)
    series = {
        "eta_minus_xi_plus": np.linalg.norm(eta - ref.xi_plus, axis=1),
        "y_minus_t_eta": np.linalg.norm(y - times[:, None] * eta, axis=1),
        "z_minus_x_plus": np.linalg.norm(z - ref.x_plus, axis=1),
    }
    expected = {"eta_minus_xi_plus": -mu, "y_minus_t_eta": 1.0 - mu, "z_minus_x_plus": 1.0 - 2.0 * mup}
    floor = 10.0 * max(ref.error, 1e-12)
    report = EstimateReport(times=times, series=series)
    for name, vals in series.items():
        s = _slope(times, vals, floor if name != "y_minus_t_eta" else 1e-12)
        report.entries.append(EstimateEntry(name, s, expected[name], bool(s <= expected[name] + slack)))
    return report
