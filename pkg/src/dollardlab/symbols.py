"""
Hamiltonian symbols for Schrodinger operators with long-range perturbations.

The symbol of ``H = -1/2 div(a grad) + V`` is

    p(x, xi) = 1/2 sum_mn a_mn(x) xi_m xi_n + V(x),

split as ``k`` (kinetic part), ``p_L = k + V_L`` and ``p = p_L + V_S``.
Built-in families carry analytic derivatives up to third order:

* metrics ``a(x) = (1 + f(x)) I`` with ``f = c <x>^-e`` (``FlatMetric`` when c = 0),
* ``PowerField``:  ``V(x) = c <x>^kappa``,
* ``HomogeneousField``: ``|x|^beta v(x_hat)`` outside ``r0`` with a smooth
  polynomial core, where ``v`` is a truncated trigonometric series in the
  polar angle (d = 2) or the pair ``v(+1), v(-1)`` (d = 1, angle 0 or pi).

Arrays of points have shape ``(..., d)``; derivative tensors append one axis of
length ``d`` per derivative order.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np
from scipy.special import expit

from .errors import ConfigurationError, DomainError

__all__ = [
    "japanese",
    "smooth_step",
    "ScalarField",
    "ZeroField",
    "PowerField",
    "HomogeneousField",
    "CallbackField",
    "MetricField",
    "FlatMetric",
    "ConformalMetric",
    "PotentialSpec",
    "SymbolModel",
    "Scaled",
    "eval_kinetic",
    "eval_symbol",
    "hamilton_field",
    "SampleBox",
    "DecayEntry",
    "DecayReport",
    "verify_decay",
    "model_from_config",
]


def japanese(x):
    """``<x> = (1 + |x|^2)^(1/2)`` over the last axis."""
    x = np.asarray(x, dtype=float)
    return np.sqrt(1.0 + np.sum(x * x, axis=-1))


def _falling(a, n):
    out = 1.0
    for j in range(n):
        out *= a - j
    return out


def smooth_step(s, order=0):
    """C-infinity step: 0 for s <= 0, 1 for s >= 1, and its s-derivatives.

    Uses ``S = expit(1/(1-s) - 1/s)``.  Returns a list ``[S, S', ..., S^(order)]``.
    """
    s = np.asarray(s, dtype=float)
    out = [np.where(s >= 1.0, 1.0, 0.0)] + [np.zeros_like(s) for _ in range(order)]
    inside = (s > 0.0) & (s < 1.0)
    if not np.any(inside):
        return out
    si = s[inside]
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        w = 1.0 / (1.0 - si) - 1.0 / si
        sig = expit(w)
        # sig (1 - sig) written as a product of two logistics keeps relative accuracy near both ends
        ds = sig * expit(-w)
        out[0][inside] = sig
        if order >= 1:
            w1 = 1.0 / (1.0 - si) ** 2 + 1.0 / si**2
            out[1][inside] = np.where(ds > 0, ds * w1, 0.0)
        if order >= 2:
            w2 = 2.0 / (1.0 - si) ** 3 - 2.0 / si**3
            sig2 = ds * (1.0 - 2.0 * sig)
            val = sig2 * w1**2 + ds * w2
            out[2][inside] = np.where(ds > 0, val, 0.0)
        if order >= 3:
            w3 = 6.0 / (1.0 - si) ** 4 + 6.0 / si**4
            sig3 = ds * (1.0 - 6.0 * sig + 6.0 * sig**2)
            val = sig3 * w1**3 + 3.0 * sig2 * w1 * w2 + ds * w3
            out[3][inside] = np.where(ds > 0, val, 0.0)
    return out


def _radial_jet(x, g, order):
    """x-derivatives of ``G(x) = g(|x|^2)`` given u-derivatives ``g = [g, g', g'', g''']``."""
    d = x.shape[-1]
    eye = np.eye(d)
    out = [g[0]]
    if order >= 1:
        out.append(2.0 * x * g[1][..., None])
    if order >= 2:
        xx = x[..., :, None] * x[..., None, :]
        out.append(2.0 * eye * g[1][..., None, None] + 4.0 * xx * g[2][..., None, None])
    if order >= 3:
        sym = (
            eye[:, :, None] * x[..., None, None, :]
            + eye[:, None, :] * x[..., None, :, None]
            + eye[None, :, :] * x[..., :, None, None]
        )
        xxx = x[..., :, None, None] * x[..., None, :, None] * x[..., None, None, :]
        out.append(4.0 * sym * g[2][..., None, None, None] + 8.0 * xxx * g[3][..., None, None, None])
    return out


def _product_jet(a, b, order):
    """Leibniz rule for jets of two scalar fields (lists of tensors, orders 0..3)."""
    out = [a[0] * b[0]]
    if order >= 1:
        out.append(a[1] * b[0][..., None] + a[0][..., None] * b[1])
    if order >= 2:
        cross = a[1][..., :, None] * b[1][..., None, :]
        out.append(
            a[2] * b[0][..., None, None]
            + cross
            + np.swapaxes(cross, -1, -2)
            + a[0][..., None, None] * b[2]
        )
    if order >= 3:
        a2b1 = a[2][..., :, :, None] * b[1][..., None, None, :]
        a1b2 = a[1][..., :, None, None] * b[2][..., None, :, :]
        # sum over the three placements of the single-index factor
        t = (
            a2b1
            + np.moveaxis(a2b1, -1, -2)
            + np.moveaxis(a2b1, -1, -3)
            + a1b2
            + np.moveaxis(a1b2, -3, -2)
            + np.moveaxis(a1b2, -3, -1)
        )
        out.append(a[3] * b[0][..., None, None, None] + t + a[0][..., None, None, None] * b[3])
    return out


def _as_points(x, dim):
    x = np.asarray(x, dtype=float)
    if x.ndim == 0 or x.shape[-1] != dim:
        if dim == 1 and x.ndim <= 1:
            x = x.reshape(x.shape + (1,)) if x.ndim == 0 else x[..., None] if x.shape[-1] != 1 else x
        else:
            raise DomainError(f"expected points with trailing dimension {dim}, got shape {x.shape}")
    return x


class ScalarField:
    """Smooth scalar field on R^d with derivative evaluators.

    Subclasses implement :meth:`jet`, returning ``[f, grad f, hess f, third f]``
    truncated at ``order``.
    """

    dim: int
    is_zero = False
    analytic = True

    def jet(self, x, order=0):
        raise NotImplementedError

    def value(self, x):
        return self.jet(x, 0)[0]

    def gradient(self, x):
        return self.jet(x, 1)[1]

    def hessian(self, x):
        return self.jet(x, 2)[2]

    def third(self, x):
        return self.jet(x, 3)[3]

    def __call__(self, x):
        return self.value(x)


class ZeroField(ScalarField):
    is_zero = True

    def __init__(self, dim):
        self.dim = int(dim)

    def jet(self, x, order=0):
        x = np.asarray(x, dtype=float)
        base = x.shape[:-1]
        d = self.dim
        return [np.zeros(base + (d,) * j) for j in range(order + 1)]

    def __repr__(self):
        return f"ZeroField(dim={self.dim})"


class PowerField(ScalarField):
    """``c <x>^kappa`` with analytic derivatives."""

    def __init__(self, dim, amplitude, kappa):
        self.dim = int(dim)
        self.amplitude = float(amplitude)
        self.kappa = float(kappa)
        self.is_zero = self.amplitude == 0.0

    def jet(self, x, order=0):
        x = np.asarray(x, dtype=float)
        one_u = 1.0 + np.sum(x * x, axis=-1)
        h = 0.5 * self.kappa
        g = [self.amplitude * _falling(h, j) * one_u ** (h - j) for j in range(4)]
        return _radial_jet(x, g, order)

    def __repr__(self):
        return f"PowerField(dim={self.dim}, amplitude={self.amplitude}, kappa={self.kappa})"


class HomogeneousField(ScalarField):
    """Potential equal to ``|x|^beta v(x_hat)`` for ``|x| >= r0``.

    ``v(theta) = sum_k cos_k cos(k theta) + sin_k sin(k theta)``.  In one dimension
    ``theta`` is 0 on the positive half-line and pi on the negative one, so
    ``v(+1) = sum cos_k`` and ``v(-1) = sum (-1)^k cos_k``.

    Inside ``r0`` the field is ``chi(|x|/r0) H(x) + (1 - chi) q(x)`` where chi
    vanishes below 1/2 and equals 1 above 1, and ``q`` is the polynomial
    ``sum_k (A_k + B_k |x|^2) P_k(x)`` with ``P_k = r^k Y_k`` harmonic, fixed by
    matching value and gradient of ``H`` on ``|x| = r0/2``.
    """

    def __init__(self, dim, beta, cos=(1.0,), sin=(), r0=1.0):
        if dim not in (1, 2):
            raise ConfigurationError("homogeneous potentials are supported for d = 1 and d = 2")
        if r0 <= 0:
            raise ConfigurationError("blend radius r0 must be positive")
        self.dim = int(dim)
        self.beta = float(beta)
        self.r0 = float(r0)
        n = max(len(cos), len(sin))
        a = np.zeros(n)
        b = np.zeros(n)
        a[: len(cos)] = cos
        b[: len(sin)] = sin
        if dim == 1 and np.any(b != 0):
            raise ConfigurationError("sine coefficients are meaningless in one dimension")
        self.cos = a
        self.sin = b
        self._conj = a - 1j * b
        self.is_zero = not np.any(self._conj != 0)
        rho = 0.5 * self.r0
        k = np.arange(n)
        m = self.beta - k
        self._core_a = rho**m * (2.0 - m) / 2.0
        self._core_b = rho ** (m - 2.0) * m / 2.0

    @property
    def homogeneity_radius(self):
        return max(1.0, self.r0)

    def __repr__(self):
        return (
            f"HomogeneousField(dim={self.dim}, beta={self.beta}, cos={self.cos.tolist()}, "
            f"sin={self.sin.tolist()}, r0={self.r0})"
        )

    def sigma(self, t):
        """Leading coefficient ``t^(1+beta)/(1+beta)`` of the integrated potential."""
        return np.abs(t) ** (1.0 + self.beta) / (1.0 + self.beta)

    def _complex(self, x):
        if self.dim == 2:
            return x[..., 0] + 1j * x[..., 1]
        return x[..., 0].astype(complex)

    def _harmonic_jet(self, zpow, k, ck, order):
        """Jet of ``P_k = Re(conj(c_k) z^k)`` from precomputed powers ``zpow[j] = z^j``."""
        d = self.dim
        out = []
        for n in range(order + 1):
            shape = zpow[0].shape + (d,) * n
            t = np.zeros(shape)
            if n <= k:
                base = ck * math.factorial(k) / math.factorial(k - n) * zpow[k - n]
                for idx in np.ndindex(*((d,) * n)):
                    q = sum(idx)  # number of y-derivatives
                    t[(Ellipsis,) + idx] = np.real(base * (1j) ** q)
            out.append(t)
        return out

    def _radial_u_jet(self, u, k):
        """u-derivatives of the radial multiplier ``g_k(u)`` multiplying ``P_k``."""
        m = self.beta - k
        A, B = self._core_a[k], self._core_b[k]
        r = np.sqrt(u)
        g = [np.zeros_like(u) for _ in range(4)]
        inner = r < 0.5 * self.r0
        outer = r >= self.r0
        mid = ~(inner | outer)
        g[0][inner] = A + B * u[inner]
        g[1][inner] = B
        if np.any(outer):
            uo = u[outer]
            for j in range(4):
                g[j][outer] = _falling(0.5 * m, j) * uo ** (0.5 * m - j)
        if np.any(mid):
            rm = r[mid]
            c = 2.0 / self.r0
            S = smooth_step(c * rm - 1.0, 3)
            chi = [S[0], c * S[1], c * c * S[2], c**3 * S[3]]
            H = [_falling(m, j) * rm ** (m - j) for j in range(4)]
            Q = [A + B * rm**2, 2.0 * B * rm, 2.0 * B * np.ones_like(rm), np.zeros_like(rm)]
            D = [H[j] - Q[j] for j in range(4)]
            G0 = Q[0] + chi[0] * D[0]
            G1 = Q[1] + chi[1] * D[0] + chi[0] * D[1]
            G2 = Q[2] + chi[2] * D[0] + 2 * chi[1] * D[1] + chi[0] * D[2]
            G3 = Q[3] + chi[3] * D[0] + 3 * chi[2] * D[1] + 3 * chi[1] * D[2] + chi[0] * D[3]
            g[0][mid] = G0
            g[1][mid] = G1 / (2 * rm)
            g[2][mid] = (G2 - G1 / rm) / (4 * rm**2)
            g[3][mid] = (G3 - 3 * G2 / rm + 3 * G1 / rm**2) / (8 * rm**3)
        return g

    def jet(self, x, order=0):
        x = np.asarray(x, dtype=float)
        u = np.sum(x * x, axis=-1)
        z = self._complex(x)
        n = len(self._conj)
        zpow = [np.ones_like(z)]
        for _ in range(1, n):
            zpow.append(zpow[-1] * z)
        total = None
        for k in range(n):
            ck = self._conj[k]
            if ck == 0:
                continue
            radial = _radial_jet(x, self._radial_u_jet(u, k), order)
            harmonic = self._harmonic_jet(zpow, k, ck, order)
            term = _product_jet(radial, harmonic, order)
            total = term if total is None else [a + b for a, b in zip(total, term)]
        if total is None:
            return ZeroField(self.dim).jet(x, order)
        return total

    def homogeneous_jet(self, x, order=1):
        """Jet of the unblended function ``|x|^beta v(x_hat)`` (x != 0)."""
        x = np.asarray(x, dtype=float)
        u = np.sum(x * x, axis=-1)
        z = self._complex(x)
        n = len(self._conj)
        zpow = [np.ones_like(z)]
        for _ in range(1, n):
            zpow.append(zpow[-1] * z)
        total = None
        for k in range(n):
            ck = self._conj[k]
            if ck == 0:
                continue
            m = self.beta - k
            g = [_falling(0.5 * m, j) * u ** (0.5 * m - j) for j in range(4)]
            term = _product_jet(_radial_jet(x, g, order), self._harmonic_jet(zpow, k, ck, order), order)
            total = term if total is None else [a + b for a, b in zip(total, term)]
        if total is None:
            return ZeroField(self.dim).jet(x, order)
        return total

    def profile(self, xhat):
        """Angular profile ``v`` at unit vectors."""
        xhat = np.asarray(xhat, dtype=float)
        z = self._complex(xhat)
        return sum(np.real(c * z**k) for k, c in enumerate(self._conj))

    def sphere_gradient(self, xhat):
        """``grad V_L`` of the homogeneous extension evaluated at unit vectors."""
        return self.homogeneous_jet(np.asarray(xhat, dtype=float), 1)[1]

    def unit_directions(self, count=64):
        if self.dim == 1:
            return np.array([[1.0], [-1.0]])
        th = (np.arange(count) + 0.5) * 2 * np.pi / count
        return np.stack([np.cos(th), np.sin(th)], axis=-1)


class CallbackField(ScalarField):
    """User-supplied scalar field.

    Missing derivative callbacks are replaced by central differences only when
    ``allow_fd`` is set: the gradient is then accurate to about 1e-10 relative,
    the Hessian to about 1e-7 and the third derivative to about 1e-4.
    """

    analytic = False

    def __init__(self, dim, value, gradient=None, hessian=None, third=None, allow_fd=False, step=1e-5):
        self.dim = int(dim)
        self._fns = [value, gradient, hessian, third]
        self.allow_fd = allow_fd
        self.step = step

    def _derivative(self, x, n):
        fn = self._fns[n]
        if fn is not None:
            return np.asarray(fn(x), dtype=float)
        if not self.allow_fd:
            raise ConfigurationError(f"no evaluator for derivative order {n} and finite differences disabled")
        h = self.step * (10.0 ** (n - 1))
        lower = self._derivative(x, n - 1)
        cols = []
        for j in range(self.dim):
            e = np.zeros(self.dim)
            e[j] = h
            cols.append((self._derivative(x + e, n - 1) - self._derivative(x - e, n - 1)) / (2 * h))
        return np.stack(cols, axis=lower.ndim)

    def jet(self, x, order=0):
        x = np.asarray(x, dtype=float)
        return [self._derivative(x, n) for n in range(order + 1)]


class MetricField:
    """Coefficient matrix ``a(x)`` of the kinetic symbol with derivatives.

    Tensor conventions: ``gradient[..., j, m, n] = d_j a_mn``,
    ``hessian[..., i, j, m, n] = d_i d_j a_mn`` and so on.
    """

    dim: int
    mu: float
    is_flat = False

    def jet(self, x, order=0):
        raise NotImplementedError

    def matrix(self, x):
        return self.jet(x, 0)[0]

    def gradient(self, x):
        return self.jet(x, 1)[1]

    def hessian(self, x):
        return self.jet(x, 2)[2]

    def min_eigenvalue(self, x):
        return np.linalg.eigvalsh(self.matrix(x))[..., 0]


class ConformalMetric(MetricField):
    """``a(x) = (1 + c <x>^-e) I``; decay exponent ``mu`` defaults to ``e``."""

    def __init__(self, dim, amplitude, exponent, mu=None):
        self.dim = int(dim)
        self.amplitude = float(amplitude)
        self.exponent = float(exponent)
        self.mu = float(exponent if mu is None else mu)
        self._bump = PowerField(dim, amplitude, -exponent)
        self.is_flat = self.amplitude == 0.0
        if self.amplitude <= -1.0:
            raise ConfigurationError("conformal factor 1 + c<x>^-e must stay positive (c > -1)")

    def __repr__(self):
        return f"ConformalMetric(dim={self.dim}, amplitude={self.amplitude}, exponent={self.exponent})"

    def factor_jet(self, x, order=0):
        """Jet of the scalar ``f = a/I - 1``."""
        return self._bump.jet(x, order)

    def jet(self, x, order=0):
        x = np.asarray(x, dtype=float)
        eye = np.eye(self.dim)
        f = self.factor_jet(x, order)
        out = [(1.0 + f[0])[..., None, None] * eye]
        for n in range(1, order + 1):
            out.append(f[n][(Ellipsis,) + (slice(None),) * n + (None, None)] * eye)
        return out

    def min_eigenvalue(self, x):
        return 1.0 + self._bump.value(np.asarray(x, dtype=float))


class FlatMetric(ConformalMetric):
    def __init__(self, dim, mu=1.0):
        super().__init__(dim, 0.0, mu, mu)
        self.is_flat = True

    def __repr__(self):
        return f"FlatMetric(dim={self.dim})"


@dataclass(frozen=True)
class PotentialSpec:
    """Long-range plus short-range potential with its decay exponents."""

    long_range: ScalarField
    short_range: ScalarField
    mu: float = 1.0
    nu: float = 2.0
    gradient_nonvanishing: bool = False

    def __post_init__(self):
        if self.long_range.dim != self.short_range.dim:
            raise ConfigurationError("long- and short-range parts have different dimensions")
        if self.gradient_nonvanishing:
            h = self.homogeneous
            if h is None:
                raise ConfigurationError("gradient-nonvanishing flag requires a homogeneous long-range part")
            dirs = h.unit_directions(256)
            g = np.linalg.norm(h.sphere_gradient(dirs), axis=-1)
            if not np.min(g) > 0:
                raise ConfigurationError("grad V_L vanishes somewhere on the unit sphere")

    @property
    def dim(self):
        return self.long_range.dim

    @property
    def homogeneous(self) -> Optional[HomogeneousField]:
        return self.long_range if isinstance(self.long_range, HomogeneousField) else None

    @property
    def beta(self):
        h = self.homogeneous
        return None if h is None else h.beta

    @property
    def is_zero(self):
        return self.long_range.is_zero and self.short_range.is_zero

    @classmethod
    def zero(cls, dim, mu=1.0, nu=2.0):
        return cls(ZeroField(dim), ZeroField(dim), mu, nu)

    @classmethod
    def homogeneous_only(cls, dim, beta, cos=(1.0,), sin=(), r0=1.0, gradient_nonvanishing=False):
        """Pure blended homogeneous long-range part with ``mu = 2 - beta``."""
        return cls(
            HomogeneousField(dim, beta, cos, sin, r0),
            ZeroField(dim),
            mu=2.0 - beta,
            nu=2.0,
            gradient_nonvanishing=gradient_nonvanishing,
        )


@dataclass(frozen=True)
class Scaled:
    """High-energy scaled symbol ``p(x, lam xi)/lam^2 = k + V/lam^2``."""

    lam: float

    def __post_init__(self):
        if not self.lam >= 1.0:
            raise DomainError("scaled variant requires lam >= 1")


Variant = Union[str, Scaled]
_VARIANTS = ("kinetic", "long_range", "full")


def _weights(variant):
    if isinstance(variant, Scaled):
        w = 1.0 / variant.lam**2
        return w, w
    if variant == "kinetic":
        return 0.0, 0.0
    if variant == "long_range":
        return 1.0, 0.0
    if variant == "full":
        return 1.0, 1.0
    raise ConfigurationError(f"unknown symbol variant {variant!r}; expected one of {_VARIANTS} or Scaled(lam)")


def _check_finite(*arrays):
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise DomainError("non-finite input")


@dataclass(frozen=True)
class SymbolModel:
    """Metric plus potential; immutable and safe to share between threads."""

    metric: MetricField
    potential: PotentialSpec

    def __post_init__(self):
        if self.metric.dim != self.potential.dim:
            raise ConfigurationError(
                f"metric dimension {self.metric.dim} differs from potential dimension {self.potential.dim}"
            )

    @property
    def dim(self):
        return self.metric.dim

    @property
    def is_flat(self):
        return self.metric.is_flat

    # -- evaluation -------------------------------------------------------
    def kinetic(self, x, xi):
        x = np.asarray(x, dtype=float)
        xi = np.asarray(xi, dtype=float)
        a = self.metric.matrix(x)
        return 0.5 * np.einsum("...m,...mn,...n->...", xi, a, xi)

    def potential_value(self, x, variant: Variant = "full"):
        wl, ws = _weights(variant)
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape[:-1])
        if wl and not self.potential.long_range.is_zero:
            out = out + wl * self.potential.long_range.value(x)
        if ws and not self.potential.short_range.is_zero:
            out = out + ws * self.potential.short_range.value(x)
        return out

    def potential_jet(self, x, order, weights):
        wl, ws = weights
        x = np.asarray(x, dtype=float)
        out = ZeroField(self.dim).jet(x, order)
        for w, fld in ((wl, self.potential.long_range), (ws, self.potential.short_range)):
            if w and not fld.is_zero:
                out = [o + w * j for o, j in zip(out, fld.jet(x, order))]
        return out

    def symbol(self, x, xi, variant: Variant = "full"):
        return self.kinetic(x, xi) + self.potential_value(x, variant)

    def field(self, x, xi, variant: Variant = "full"):
        """Hamilton vector field ``(d_xi p, -d_x p)``."""
        x = np.asarray(x, dtype=float)
        xi = np.asarray(xi, dtype=float)
        a = self.metric.jet(x, 1)
        velocity = np.einsum("...mn,...n->...m", a[0], xi)
        force = -0.5 * np.einsum("...jmn,...m,...n->...j", a[1], xi, xi)
        wl, ws = _weights(variant)
        if wl or ws:
            force = force - self.potential_jet(x, 1, (wl, ws))[1]
        return velocity, force

    def second_derivatives(self, x, xi, weights):
        """``(p_xx, p_x_xi, p_xi_xi)`` for ``k + wl V_L + ws V_S``.

        ``p_x_xi[..., i, j] = d_{x_i} d_{xi_j} p``.
        """
        x = np.asarray(x, dtype=float)
        xi = np.asarray(xi, dtype=float)
        a = self.metric.jet(x, 2)
        p_xx = 0.5 * np.einsum("...ijmn,...m,...n->...ij", a[2], xi, xi)
        if weights[0] or weights[1]:
            p_xx = p_xx + self.potential_jet(x, 2, weights)[2]
        p_xxi = np.einsum("...ijm,...m->...ij", a[1], xi)
        return p_xx, p_xxi, a[0]


def eval_kinetic(model: SymbolModel, x, xi):
    """``k(x, xi) = 1/2 xi . a(x) xi``."""
    x = _as_points(x, model.dim)
    xi = _as_points(xi, model.dim)
    _check_finite(x, xi)
    return model.kinetic(x, xi)


def eval_symbol(model: SymbolModel, x, xi, variant: Variant = "full"):
    """Evaluate ``p`` (full), ``p_L`` (long_range) or ``k`` (kinetic)."""
    x = _as_points(x, model.dim)
    xi = _as_points(xi, model.dim)
    _check_finite(x, xi)
    return model.symbol(x, xi, variant)


def hamilton_field(model: SymbolModel, x, xi, variant: Variant = "full"):
    """Return ``(velocity, force) = (d_xi p, -d_x p)`` for the chosen variant."""
    x = _as_points(x, model.dim)
    xi = _as_points(xi, model.dim)
    _check_finite(x, xi)
    return model.field(x, xi, variant)


# -- decay audit ---------------------------------------------------------------


@dataclass(frozen=True)
class SampleBox:
    """Sampling pattern for the decay audit: shells out to ``radius``."""

    radius: float = 1.0e3
    n_radii: int = 41
    n_directions: int = 16
    fit_range: tuple = (10.0, None)

    def points(self, dim):
        radii = np.concatenate([[0.0], np.geomspace(0.05, self.radius, self.n_radii)])
        if dim == 1:
            dirs = np.array([[1.0], [-1.0]])
        elif dim == 2:
            th = (np.arange(self.n_directions) + 0.25) * 2 * np.pi / self.n_directions
            dirs = np.stack([np.cos(th), np.sin(th)], axis=-1)
        else:
            rng = np.random.default_rng(12345)
            dirs = rng.normal(size=(self.n_directions, dim))
            dirs /= np.linalg.norm(dirs, axis=-1, keepdims=True)
        return radii, radii[:, None, None] * dirs[None, :, :]


@dataclass(frozen=True)
class DecayEntry:
    component: str
    order: int
    constant: float
    slope: float
    expected_slope: float
    passed: bool


@dataclass
class DecayReport:
    entries: list = field(default_factory=list)
    slope_slack: float = 0.1

    @property
    def passed(self):
        return all(e.passed for e in self.entries)

    def entry(self, component, order):
        for e in self.entries:
            if e.component == component and e.order == order:
                return e
        raise KeyError((component, order))


def _loglog_slope(r, values, floor=1e-300):
    keep = values > floor
    if np.count_nonzero(keep) < 2:
        return -math.inf
    lx = np.log(japanese(r[keep][:, None]))
    ly = np.log(values[keep])
    return float(np.polyfit(lx, ly, 1)[0])


def verify_decay(model: SymbolModel, box: SampleBox = SampleBox(), orders=3, slope_slack=0.1):
    """Sampled audit of the symbol-class bounds on ``a - I``, ``V_L`` and ``V_S``.

    For every derivative order the smallest constant making
    ``|d^alpha F| <= C <x>^(m - |alpha|)`` hold on the samples is reported together
    with the log-log slope of the shell-wise supremum over ``box.fit_range``.
    An entry fails when that slope exceeds ``m - |alpha| + slope_slack``.
    """
    if box.radius < 100.0:
        raise DomainError("sample box must reach |x| >= 100")
    d = model.dim
    radii, pts = box.points(d)
    jx = japanese(pts)
    lo, hi = box.fit_range
    hi = box.radius if hi is None else hi
    fit = (radii >= lo) & (radii <= hi)
    mu, nu = model.metric.mu, model.potential.nu
    eye = np.eye(d)
    components = []
    if model.metric.is_flat:
        components.append(("metric", None, -mu))
    else:
        components.append(("metric", lambda p, n: model.metric.jet(p, n), -mu))
    for name, fld, m in (
        ("long_range", model.potential.long_range, 2.0 - model.potential.mu),
        ("short_range", model.potential.short_range, 2.0 - nu),
    ):
        components.append((name, None if fld.is_zero else (lambda p, n, f=fld: f.jet(p, n)), m))
    report = DecayReport(slope_slack=slope_slack)
    for name, jetfn, m in components:
        jets = None if jetfn is None else jetfn(pts, orders)
        for n in range(orders + 1):
            expected = m - n
            if jets is None:
                report.entries.append(DecayEntry(name, n, 0.0, -math.inf, expected, True))
                continue
            t = jets[n]
            if name == "metric" and n == 0:
                t = t - eye
            axes = tuple(range(2, t.ndim))
            mag = np.max(np.abs(t), axis=axes) if axes else np.abs(t)
            const = float(np.max(mag / jx**expected))
            shell = np.max(mag, axis=1)
            slope = _loglog_slope(radii[fit], shell[fit], floor=1e-13 * max(1.0, float(np.max(shell))) * 1e-3)
            passed = bool(slope <= expected + slope_slack)
            report.entries.append(DecayEntry(name, n, const, slope, expected, passed))
    return report


# -- configuration ---------------------------------------------------------------


def _scalar_from_config(dim, cfg, mu):
    fam = cfg.get("family", "zero")
    if fam == "zero":
        return ZeroField(dim)
    if fam == "power":
        return PowerField(dim, cfg.get("amplitude", 1.0), cfg["kappa"])
    if fam == "harmonic":
        omega = float(cfg.get("omega", 1.0))
        return PowerField(dim, 0.5 * omega**2, 2.0)
    if fam == "homogeneous":
        beta = float(cfg.get("beta", 2.0 - mu))
        return HomogeneousField(dim, beta, cfg.get("cos", [1.0]), cfg.get("sin", []), cfg.get("r0", 1.0))
    raise ConfigurationError(f"unknown potential family {fam!r}")


def model_from_config(cfg: dict) -> SymbolModel:
    """Build a :class:`SymbolModel` from a parsed ``[model]`` table.

    Recognised keys: ``dimension``, ``mu``, ``nu``, ``gradient_nonvanishing``,
    sub-tables ``metric`` (family flat|bump, amplitude, exponent) and
    ``long_range`` / ``short_range`` (family zero|power|harmonic|homogeneous with
    amplitude, kappa, omega, beta, cos, sin, r0).
    """
    try:
        dim = int(cfg["dimension"])
    except KeyError as exc:
        raise ConfigurationError("model.dimension is required") from exc
    if dim < 1:
        raise ConfigurationError("model.dimension must be positive")
    lr_cfg = cfg.get("long_range", {})
    mu = cfg.get("mu")
    if mu is None:
        mu = 2.0 - float(lr_cfg["beta"]) if lr_cfg.get("family") == "homogeneous" and "beta" in lr_cfg else 1.0
    mu = float(mu)
    nu = float(cfg.get("nu", 2.0))
    mcfg = cfg.get("metric", {"family": "flat"})
    fam = mcfg.get("family", "flat")
    if fam == "flat":
        metric = FlatMetric(dim, mu)
    elif fam == "bump":
        metric = ConformalMetric(dim, mcfg.get("amplitude", 0.2), mcfg.get("exponent", mu), mu)
    else:
        raise ConfigurationError(f"unknown metric family {fam!r}")
    potential = PotentialSpec(
        _scalar_from_config(dim, lr_cfg, mu),
        _scalar_from_config(dim, cfg.get("short_range", {}), mu),
        mu=mu,
        nu=nu,
        gradient_nonvanishing=bool(cfg.get("gradient_nonvanishing", False)),
    )
    return SymbolModel(metric, potential)
