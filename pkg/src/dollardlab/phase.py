"""
Dollard-type phase functions.

    Phi(t, xi)       = int_0^t p_L(s xi, xi) ds      (long-range symbol)
    Psi(t, xi)       = int_0^t k(s xi, xi) ds        (kinetic symbol)
    Phi^lam(t, xi)   = int_0^t (k + V_L/lam^2)(s xi, xi) ds

All quadratures integrate the deviation from free motion, ``p - |xi|^2/2``,
and add ``t |xi|^2 / 2`` back analytically.  Negative times use the reflection
``int_0^t g(s) ds = -int_0^|t| g(-s) ds``.
"""
from __future__ import annotations

import csv
import logging
import math
import threading
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import DomainError, OutsideClosedFormError, UnsupportedConfigurationError
from .quadrature import gk15_batch
from .symbols import HomogeneousField, PotentialSpec, SymbolModel

__all__ = [
    "PhaseFunction",
    "phase",
    "phase_gradient",
    "phase_hessian",
    "HomogeneousDecomposition",
    "homogeneous_decomposition",
    "multiplier_correction",
    "BoundEntry",
    "BoundReport",
    "verify_lemma7",
    "write_phase_table",
]

logger = logging.getLogger(__name__)

_QUANT = 1e-12


def _breakpoints(xi_norm, t_abs, r0, geometric=True):
    """Quadrature breakpoints in s for an integrand evaluated at ``s xi``."""
    with np.errstate(divide="ignore"):
        inv = np.where(xi_norm > 0, 1.0 / xi_norm, np.inf)
    pts = [0.5 * r0 * inv, r0 * inv]
    if geometric:
        j = 0
        while True:
            c = (2.0**j) * inv
            pts.append(c)
            if not np.any(c < t_abs) or j > 60:
                break
            j += 1
    return np.stack(pts, axis=-1)


class PhaseFunction:
    """Quadrature-backed evaluator of ``Psi``, ``Phi`` or ``Phi^lam``.

    Parameters
    ----------
    model : SymbolModel
    variant : {"psi", "phi", "phi_lambda"}
    lam : float, optional
        Scale for ``phi_lambda``.
    tol : float
        Absolute quadrature tolerance for every component.
    memo : bool
        Cache values keyed by ``(t, xi)`` rounded to 1e-12 (thread-safe).
    """

    def __init__(self, model: SymbolModel, variant="phi", lam=None, tol=1e-11, memo=True):
        if variant not in ("psi", "phi", "phi_lambda"):
            raise DomainError(f"unknown phase variant {variant!r}")
        if variant == "phi_lambda":
            if lam is None or not lam >= 1.0:
                raise DomainError("phi_lambda requires lam >= 1")
        if tol <= 0:
            raise DomainError("tol must be positive")
        self.model = model
        self.variant = variant
        self.lam = None if lam is None else float(lam)
        self.tol = float(tol)
        self._memo = {} if memo else None
        self._lock = threading.Lock()
        if variant == "psi":
            self._w = 0.0
        elif variant == "phi":
            self._w = 1.0
        else:
            self._w = 1.0 / self.lam**2
        h = model.potential.homogeneous
        self._r0 = h.r0 if h is not None else 1.0

    def __repr__(self):
        extra = f", lam={self.lam}" if self.variant == "phi_lambda" else ""
        return f"PhaseFunction({self.variant}{extra}, tol={self.tol})"

    @property
    def potential_weight(self):
        return self._w

    @property
    def dim(self):
        return self.model.dim

    # -- pointwise symbol pieces -------------------------------------------
    def _weights(self):
        return (self._w, 0.0)

    def symbol(self, x, xi):
        """The symbol whose time integral this phase is."""
        m = self.model
        out = m.kinetic(x, xi)
        if self._w:
            out = out + self._w * m.potential.long_range.value(x)
        return out

    def symbol_field(self, x, xi):
        """``(d_x q, d_xi q)`` for the integrated symbol ``q``."""
        m = self.model
        a = m.metric.jet(x, 1)
        q_xi = np.einsum("...mn,...n->...m", a[0], xi)
        q_x = 0.5 * np.einsum("...jmn,...m,...n->...j", a[1], xi, xi)
        if self._w and not m.potential.long_range.is_zero:
            q_x = q_x + self._w * m.potential.long_range.gradient(x)
        return q_x, q_xi

    def dt(self, t, xi):
        """``d_t Phi(t, xi) = q(t xi, xi)``, closed form."""
        t, xi = self._prep(t, xi)
        return self.symbol(t[..., None] * xi, xi)

    def dt_gradient(self, t, xi):
        """``d_t d_xi Phi(t, xi) = t d_x q(t xi, xi) + d_xi q(t xi, xi)``."""
        t, xi = self._prep(t, xi)
        q_x, q_xi = self.symbol_field(t[..., None] * xi, xi)
        return t[..., None] * q_x + q_xi

    # -- quadrature ----------------------------------------------------------
    def _prep(self, t, xi):
        t = np.asarray(t, dtype=float)
        xi = np.asarray(xi, dtype=float)
        if xi.ndim == 0 or xi.shape[-1] != self.dim:
            if self.dim == 1:
                xi = xi[..., None]
            else:
                raise DomainError(f"xi must have trailing dimension {self.dim}")
        if not (np.all(np.isfinite(t)) and np.all(np.isfinite(xi))):
            raise DomainError("non-finite t or xi")
        t, xi = np.broadcast_arrays(t[..., None], xi)
        return t[..., 0].copy(), xi.copy()

    def _integrand(self, order, T, XI):
        m = self.model
        d = self.dim
        w = self._w
        eye = np.eye(d)

        def f(s, owner):
            tau = np.sign(T[owner])
            xi = XI[owner]
            x = (tau * s)[:, None] * xi
            if order == 0:
                val = m.kinetic(x, xi) - 0.5 * np.sum(xi * xi, axis=-1)
                if w:
                    val = val + w * m.potential.long_range.value(x)
                return tau * val
            if order == 1:
                q_x, q_xi = self.symbol_field(x, xi)
                return tau[:, None] * ((tau * s)[:, None] * q_x + q_xi - xi)
            if order == "jet":
                q_x, q_xi = self.symbol_field(x, xi)
                g = tau[:, None] * ((tau * s)[:, None] * q_x + q_xi - xi)
                p_xx, p_xxi, p_xixi = m.second_derivatives(x, xi, (w, 0.0))
                cross = p_xxi + np.swapaxes(p_xxi, -1, -2)
                h = (s * s)[:, None, None] * p_xx + (tau * s)[:, None, None] * cross + p_xixi - eye
                return np.concatenate([g[:, None, :], tau[:, None, None] * h], axis=1)
            p_xx, p_xxi, p_xixi = m.second_derivatives(x, xi, (w, 0.0))
            cross = p_xxi + np.swapaxes(p_xxi, -1, -2)
            val = (s * s)[:, None, None] * p_xx + (tau * s)[:, None, None] * cross + p_xixi - eye
            return tau[:, None, None] * val

        return f

    def _deviation(self, t, xi, order):
        """Quadrature of ``d^order_xi (Phi - t|xi|^2/2)`` for flat arrays."""
        m = self.model
        d = self.dim
        n = t.size
        shape = ((), (d,), (d, d))[order]
        out = np.zeros((n,) + shape)
        trivial = m.is_flat and (self._w == 0.0 or m.potential.long_range.is_zero)
        if trivial or n == 0:
            return out
        xi_norm = np.linalg.norm(xi, axis=-1)
        bps = _breakpoints(xi_norm, np.abs(t), self._r0)
        res, _ = gk15_batch(
            self._integrand(order, t, xi),
            np.zeros(n),
            np.abs(t),
            self.tol,
            breakpoints=bps,
            value_shape=shape,
        )
        return res

    def deviation_jet(self, t, xi):
        """Gradient and Hessian deviations at a single ``(t, xi)`` in one quadrature pass (no memo)."""
        t = float(t)
        xi = np.atleast_1d(np.asarray(xi, dtype=float))
        d = self.dim
        m = self.model
        if m.is_flat and (self._w == 0.0 or m.potential.long_range.is_zero):
            return np.zeros(d), np.zeros((d, d))
        T = np.array([t])
        XI = xi[None]
        res, _ = gk15_batch(
            self._integrand("jet", T, XI),
            np.zeros(1),
            np.abs(T),
            self.tol,
            breakpoints=_breakpoints(np.linalg.norm(XI, axis=-1), np.abs(T), self._r0),
            value_shape=(d + 1, d),
            split=4,
        )
        return res[0, 0], res[0, 1:]

    def deviation(self, t, xi, order=0):
        """``d^order_xi (Phi(t, xi) - t |xi|^2 / 2)`` for order in {0, 1, 2}."""
        if order not in (0, 1, 2):
            raise DomainError("order must be 0, 1 or 2")
        t, xi = self._prep(t, xi)
        base = t.shape
        tf = t.ravel()
        xf = xi.reshape(-1, self.dim)
        if self._memo is None:
            res = self._deviation(tf, xf, order)
        else:
            keys = [
                (order, round(float(tt) / _QUANT), tuple(np.rint(xx / _QUANT).astype(np.int64).tolist()))
                for tt, xx in zip(tf, xf)
            ]
            with self._lock:
                cached = [self._memo.get(k) for k in keys]
            missing = [i for i, c in enumerate(cached) if c is None]
            if missing:
                idx = np.array(missing)
                new = self._deviation(tf[idx], xf[idx], order)
                with self._lock:
                    for j, i in enumerate(missing):
                        self._memo[keys[i]] = new[j]
                        cached[i] = new[j]
            res = np.array(cached) if cached else np.zeros((0,) + ((), (self.dim,), (self.dim,) * 2)[order])
        return res.reshape(base + res.shape[1:])

    def value(self, t, xi):
        t_, xi_ = self._prep(t, xi)
        return 0.5 * t_ * np.sum(xi_ * xi_, axis=-1) + self.deviation(t, xi, 0)

    def gradient(self, t, xi):
        t_, xi_ = self._prep(t, xi)
        return t_[..., None] * xi_ + self.deviation(t, xi, 1)

    def hessian(self, t, xi):
        t_, xi_ = self._prep(t, xi)
        eye = np.eye(self.dim)
        return t_[..., None, None] * eye + self.deviation(t, xi, 2)

    def clear_cache(self):
        if self._memo is not None:
            with self._lock:
                self._memo.clear()


def phase(pf: PhaseFunction, t, xi):
    """``Phi(t, xi)`` (or Psi / Phi^lam, per ``pf.variant``)."""
    return pf.value(t, xi)


def phase_gradient(pf: PhaseFunction, t, xi):
    """``d_xi Phi(t, xi)`` by quadrature of the differentiated integrand."""
    return pf.gradient(t, xi)


def phase_hessian(pf: PhaseFunction, t, xi):
    return pf.hessian(t, xi)


# -- homogeneous closed forms -----------------------------------------------------


@dataclass(frozen=True)
class HomogeneousDecomposition:
    """``int_0^t V_L(s xi) ds = leading + R`` for ``|t xi| >= rho``.

    ``F`` is the quadrature of ``int_0^t V_L(s xi) ds`` minus ``leading``,
    so in the closed-form region ``F - R`` measures quadrature error.
    """

    beta: float
    sigma: float
    leading: float
    R: float
    F: float

    @property
    def integral(self):
        return self.leading + self.R


def _homogeneous_part(spec: PotentialSpec) -> HomogeneousField:
    h = spec.homogeneous
    if h is None:
        raise UnsupportedConfigurationError("closed forms require a homogeneous long-range potential")
    return h


def _potential_integral(h, t, xi, tol):
    """``int_0^t V_L(s xi) ds`` by quadrature, batched over rows."""
    n = t.size
    xi_norm = np.linalg.norm(xi, axis=-1)

    def f(s, owner):
        tau = np.sign(t[owner])
        return tau * h.value((tau * s)[:, None] * xi[owner])

    res, _ = gk15_batch(f, np.zeros(n), np.abs(t), tol, breakpoints=_breakpoints(xi_norm, np.abs(t), h.r0))
    return res


def _remainder(h, tau, xihat, xi_norm, tol):
    """``R = tau |xi|^-1 int_0^rho (V(r tau xi_hat) - r^beta v(tau xi_hat)) dr``."""
    rho = h.homogeneity_radius
    n = tau.size
    v = h.profile(tau[:, None] * xihat)

    def f(r, owner):
        e = tau[owner, None] * xihat[owner]
        return h.value(r[:, None] * e) - r**h.beta * v[owner]

    bps = np.tile([0.5 * h.r0, h.r0], (n, 1))
    res, _ = gk15_batch(f, np.zeros(n), np.full(n, rho), tol, breakpoints=bps)
    return tau * res / xi_norm


def homogeneous_decomposition(spec: PotentialSpec, t, xi, tol=1e-13):
    """Closed-form split of the potential part of the Dollard phase.

    Parameters
    ----------
    spec : PotentialSpec
        Must carry a :class:`HomogeneousField` long-range part.
    t : float
        Nonzero time.
    xi : array_like
        Covector with ``|t| |xi| >= max(1, r0)``.

    Returns
    -------
    HomogeneousDecomposition
    """
    h = _homogeneous_part(spec)
    t = float(t)
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    if xi.shape != (h.dim,):
        raise DomainError(f"xi must have shape ({h.dim},)")
    if t == 0.0:
        raise DomainError("t must be nonzero")
    xn = float(np.linalg.norm(xi))
    rho = h.homogeneity_radius
    if abs(t) * xn < rho:
        raise OutsideClosedFormError(
            f"|t||xi| = {abs(t) * xn:.6g} below homogeneity radius {rho:.6g}; use plain quadrature"
        )
    tau = math.copysign(1.0, t)
    xihat = xi / xn
    sig = float(h.sigma(abs(t)))
    v = float(h.profile(tau * xihat))
    leading = tau * sig * xn**h.beta * v
    R = float(_remainder(h, np.array([tau]), xihat[None], np.array([xn]), tol)[0])
    integral = float(_potential_integral(h, np.array([t]), xi[None], tol)[0])
    return HomogeneousDecomposition(h.beta, sig, leading, R, integral - leading)


def multiplier_correction(pf: PhaseFunction, t, xi):
    """``F(t, xi) = Phi(t, xi) - t|xi|^2/2 - sign(t) sigma(|t|) V_L(sign(t) xi)``.

    Uses the blended ``V_L`` so it is smooth on the whole frequency lattice,
    including ``xi = 0``; it coincides with ``R`` wherever ``|t xi| >= rho``.
    """
    h = _homogeneous_part(pf.model.potential)
    t_, xi_ = pf._prep(t, xi)
    tau = np.sign(t_)
    dev = pf.deviation(t, xi, 0)
    return dev - tau * h.sigma(np.abs(t_)) * pf.potential_weight * h.value(tau[..., None] * xi_)


# -- symbol-class bounds on the phase -----------------------------------------------


@dataclass(frozen=True)
class BoundEntry:
    t: float
    order: int
    slope: float
    bound: float
    ratio_upper: float
    ratio_lower: float
    passed: bool


@dataclass
class BoundReport:
    entries: list = field(default_factory=list)
    xi_norms: Optional[np.ndarray] = None

    @property
    def passed(self):
        return all(e.passed for e in self.entries)


def verify_lemma7(pf: PhaseFunction, t_grid, xi_grid, orders=1, slope_slack=0.1, ratio_growth=2.0, direction=None):
    """Slope and ratio test of ``|d^alpha_xi (Phi - t|xi|^2/2)| <~ |t| <xi>^(2 - mu - |alpha|)``.

    ``xi_grid`` holds the norms ``|xi|`` (geometric, spanning [1, 1e3]); covectors
    are taken along ``direction`` (default: first axis).  The derivative size at
    order ``n`` is the max-abs tensor entry.  An entry passes if the log-log slope
    against ``<xi>`` does not exceed ``2 - mu - n + slope_slack`` and the ratio to
    ``|t| <xi>^(2 - mu - n)`` on the upper half of the grid stays below
    ``ratio_growth`` times its maximum on the lower half.
    """
    xi_norms = np.asarray(xi_grid, dtype=float)
    if xi_norms.min() > 1.0 + 1e-12 or xi_norms.max() < 1e3 * (1 - 1e-12):
        raise DomainError("xi_grid must span |xi| in [1, 1e3]")
    d = pf.dim
    e = np.zeros(d)
    e[0] = 1.0
    if direction is not None:
        e = np.asarray(direction, dtype=float)
        e = e / np.linalg.norm(e)
    xis = xi_norms[:, None] * e
    jx = np.sqrt(1.0 + xi_norms**2)
    mu = pf.model.potential.mu
    report = BoundReport(xi_norms=xi_norms)
    for t in np.atleast_1d(t_grid):
        for n in range(orders + 1):
            dev = pf.deviation(np.full(xi_norms.size, float(t)), xis, n)
            mag = np.abs(dev).reshape(xi_norms.size, -1).max(axis=1)
            bound = 2.0 - mu - n
            floor = 1e3 * pf.tol
            keep = mag > floor
            if np.count_nonzero(keep) >= 2:
                slope = float(np.polyfit(np.log(jx[keep]), np.log(mag[keep]), 1)[0])
                ratio = np.where(keep, mag / (abs(t) * jx**bound), 0.0)
                half = ratio.size // 2
                rmax = float(ratio[half:].max())
                rmin = float(max(ratio[:half].max(), np.finfo(float).tiny))
            else:
                slope, rmax, rmin = -math.inf, 0.0, 1.0
            # "bounded ratio": the large-|xi| half may not exceed the small-|xi| half by ratio_growth
            ok = slope <= bound + slope_slack and rmax <= ratio_growth * rmin
            report.entries.append(BoundEntry(float(t), n, slope, bound, rmax, rmin, bool(ok)))
    return report


def write_phase_table(path, pf: PhaseFunction, t, xi_lattice):
    """CSV of ``(xi..., Phi)`` on a lattice of covectors."""
    xi = np.asarray(xi_lattice, dtype=float)
    if xi.ndim == 1:
        xi = xi[:, None]
    vals = pf.value(np.full(xi.shape[0], float(t)), xi)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"xi{j}" for j in range(xi.shape[1])] + ["phase"])
        for row, v in zip(xi, vals):
            w.writerow([f"{c:.17g}" for c in row] + [f"{v:.17g}"])
