"""
Split-step Fourier propagation of ``i u_t = (-1/2 Laplacian + V) u`` on a periodic box.

The lattice is centred: ``x_j = -L/2 + j L/n`` on every axis, with angular
frequencies ``k = 2 pi fftfreq(n, L/n)``.  Growing potentials are flattened
smoothly beyond ``truncation * L/2`` and a quadratic complex absorbing layer
fills the outer ``absorb_width`` fraction of each half-axis, so experiments
must keep their mass away from the periodic seam.
"""
from __future__ import annotations

import csv
import logging
import math
import struct
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import (
    BoundaryMassError,
    ConfigurationError,
    DomainError,
    LatticeMismatchError,
    UnsupportedConfigurationError,
)
from .phase import PhaseFunction, multiplier_correction
from .symbols import HomogeneousField, SymbolModel, smooth_step

__all__ = [
    "GridState",
    "MultiplierSpec",
    "apply_multiplier",
    "PropagatorConfig",
    "evolve",
    "dollard_conjugate",
    "DollardResult",
    "smoothing_norms",
    "SmoothingNorms",
    "gaussian_state",
    "BoundaryMassWarning",
]

logger = logging.getLogger(__name__)


class BoundaryMassWarning(RuntimeWarning):
    """Mass is being absorbed at the boundary layer."""


@dataclass
class GridState:
    """Complex samples on a centred periodic lattice.

    Parameters
    ----------
    values : ndarray
        Complex array of shape ``n`` (d = 1) or ``(n0, n1)`` (d = 2).
    extent : tuple of float
        Physical side length ``L`` per axis.
    """

    values: np.ndarray
    extent: tuple

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=complex)
        ext = np.atleast_1d(np.asarray(self.extent, dtype=float))
        if self.values.ndim not in (1, 2):
            raise UnsupportedConfigurationError("grid states support d = 1 and d = 2 only")
        if ext.size != self.values.ndim:
            raise ConfigurationError("extent must give one length per axis")
        if np.any(ext <= 0):
            raise ConfigurationError("extent must be positive")
        for n in self.values.shape:
            if n < 2 or n & (n - 1):
                raise ConfigurationError(f"lattice size {n} is not a power of two")
        self.extent = tuple(float(e) for e in ext)

    # -- geometry --------------------------------------------------------------
    @property
    def dim(self):
        return self.values.ndim

    @property
    def shape(self):
        return self.values.shape

    @property
    def spacing(self):
        return tuple(L / n for L, n in zip(self.extent, self.shape))

    @property
    def cell_volume(self):
        return float(np.prod(self.spacing))

    @property
    def signature(self):
        return (self.shape, self.extent)

    def axes(self):
        return [-0.5 * L + np.arange(n) * (L / n) for L, n in zip(self.extent, self.shape)]

    def freq_axes(self):
        return [2.0 * np.pi * np.fft.fftfreq(n, L / n) for L, n in zip(self.extent, self.shape)]

    def points(self):
        """Coordinates, shape ``shape + (d,)``."""
        return np.stack(np.meshgrid(*self.axes(), indexing="ij"), axis=-1)

    def frequencies(self):
        """Frequency lattice, shape ``shape + (d,)``."""
        return np.stack(np.meshgrid(*self.freq_axes(), indexing="ij"), axis=-1)

    def nyquist(self):
        return min(np.pi * n / L for L, n in zip(self.extent, self.shape))

    # -- algebra ------------------------------------------------------------------
    def norm(self):
        return float(np.sqrt(self.cell_volume * np.sum(np.abs(self.values) ** 2)))

    def inner(self, other: "GridState"):
        self._check_same(other)
        return complex(self.cell_volume * np.vdot(self.values, other.values))

    def copy(self):
        return GridState(self.values.copy(), self.extent)

    def with_values(self, values):
        return GridState(values, self.extent)

    def _check_same(self, other):
        if self.signature != other.signature:
            raise LatticeMismatchError(f"lattice {other.signature} differs from {self.signature}")

    def distance(self, other: "GridState"):
        self._check_same(other)
        return float(np.sqrt(self.cell_volume * np.sum(np.abs(self.values - other.values) ** 2)))

    def boundary_fraction(self, width=0.1):
        """Fraction of mass in the outer ``width`` of every half-axis."""
        mask = np.zeros(self.shape, dtype=bool)
        for ax, (L, x) in enumerate(zip(self.extent, self.axes())):
            edge = np.abs(x) >= (0.5 - width) * L
            sl = [None] * self.dim
            sl[ax] = slice(None)
            mask |= np.broadcast_to(edge[tuple(sl)], self.shape)
        total = np.sum(np.abs(self.values) ** 2)
        if total == 0:
            return 0.0
        return float(np.sum(np.abs(self.values[mask]) ** 2) / total)

    # -- persistence -------------------------------------------------------------------
    def to_bytes(self):
        d = self.dim
        head = struct.pack("<q", d) + struct.pack(f"<{d}q", *self.shape) + struct.pack(f"<{d}d", *self.extent)
        body = np.ascontiguousarray(self.values).view(np.float64).astype("<f8").tobytes()
        return head + body

    @classmethod
    def from_bytes(cls, data):
        (d,) = struct.unpack_from("<q", data, 0)
        if d not in (1, 2):
            raise ConfigurationError(f"corrupt header: d = {d}")
        off = 8
        shape = struct.unpack_from(f"<{d}q", data, off)
        off += 8 * d
        extent = struct.unpack_from(f"<{d}d", data, off)
        off += 8 * d
        count = int(np.prod(shape))
        flat = np.frombuffer(data, dtype="<f8", count=2 * count, offset=off)
        vals = (flat[0::2] + 1j * flat[1::2]).reshape(shape)
        return cls(vals, tuple(extent))

    def save(self, path):
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    @classmethod
    def load(cls, path):
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())

    def write_marginals(self, path):
        """CSV of ``|u|^2`` marginals along each axis (long format)."""
        dens = np.abs(self.values) ** 2
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["axis", "coordinate", "density"])
            for ax, x in enumerate(self.axes()):
                other = tuple(j for j in range(self.dim) if j != ax)
                marg = dens.sum(axis=other) * float(np.prod([self.spacing[j] for j in other])) if other else dens
                for xv, mv in zip(x, marg):
                    w.writerow([ax, f"{xv:.17g}", f"{mv:.17g}"])


def gaussian_state(n, L, center, momentum, width=1.0):
    """L2-normalised Gaussian packet ``exp(i k.(x - c)) exp(-|x - c|^2 / (2 w^2))``."""
    n = tuple(np.atleast_1d(n).astype(int).tolist())
    L = tuple(np.atleast_1d(np.asarray(L, dtype=float)).tolist())
    if len(L) == 1 and len(n) > 1:
        L = L * len(n)
    if len(n) == 1 and len(L) > 1:
        n = n * len(L)
    g = GridState(np.zeros(n, dtype=complex), L)
    x = g.points() - np.asarray(center, dtype=float)
    k = np.asarray(momentum, dtype=float)
    vals = np.exp(1j * (x @ k) - 0.5 * np.sum(x * x, axis=-1) / width**2)
    g = g.with_values(vals)
    return g.with_values(vals / g.norm())


@dataclass(frozen=True)
class MultiplierSpec:
    """Real symbol ``F`` tabulated on a frequency lattice; applied as ``exp(i F(D))``."""

    values: np.ndarray
    signature: tuple
    label: str = ""

    @classmethod
    def tabulate(cls, grid: GridState, fn: Callable, label=""):
        vals = np.asarray(fn(grid.frequencies()), dtype=float)
        if vals.shape != grid.shape:
            raise ConfigurationError("multiplier function returned the wrong shape")
        return cls(vals, grid.signature, label)

    @classmethod
    def zero(cls, grid: GridState):
        return cls(np.zeros(grid.shape), grid.signature, "0")

    @classmethod
    def free(cls, grid: GridState, t):
        """``t |xi|^2 / 2``, so that ``exp(iF(D)) = exp(i t H0)``."""
        return cls.tabulate(grid, lambda k: 0.5 * t * np.sum(k * k, axis=-1), f"t|xi|^2/2 (t={t:g})")

    @classmethod
    def phase(cls, grid: GridState, pf: PhaseFunction, t):
        k = grid.frequencies()
        vals = pf.value(np.full(grid.shape, float(t)), k)
        return cls(np.asarray(vals, dtype=float), grid.signature, f"Phi(t={t:g})")

    @classmethod
    def homogeneous(cls, grid: GridState, field_: HomogeneousField, sigma, sign=1.0):
        """``sign * sigma * V_L(sign * xi)`` with the blended ``V_L`` (smooth at 0)."""
        s = 1.0 if sign >= 0 else -1.0
        return cls.tabulate(grid, lambda k: s * sigma * field_.value(s * k), f"sigma V_L (sigma={sigma:g})")

    @classmethod
    def correction(cls, grid: GridState, pf: PhaseFunction, t):
        vals = multiplier_correction(pf, np.full(grid.shape, float(t)), grid.frequencies())
        return cls(np.asarray(vals, dtype=float), grid.signature, f"F(t={t:g})")

    def __neg__(self):
        return MultiplierSpec(-self.values, self.signature, f"-({self.label})")

    def __add__(self, other):
        if self.signature != other.signature:
            raise LatticeMismatchError("cannot add multipliers tabulated on different lattices")
        return MultiplierSpec(self.values + other.values, self.signature, f"{self.label} + {other.label}")


def apply_multiplier(u: GridState, spec: MultiplierSpec) -> GridState:
    """``exp(i F(D)) u`` computed with one forward and one inverse FFT."""
    if spec.signature != u.signature:
        raise LatticeMismatchError(f"multiplier lattice {spec.signature} differs from state lattice {u.signature}")
    return u.with_values(np.fft.ifftn(np.exp(1j * spec.values) * np.fft.fftn(u.values)))


@dataclass(frozen=True)
class PropagatorConfig:
    """Split-step settings.

    ``dt`` is the largest allowed step (the step actually used divides ``|t|``
    evenly).  ``absorb_width`` is a fraction of each half-axis, ``truncation``
    the fraction of ``L/2`` beyond which ``V`` is flattened.
    """

    dt: float = 0.01
    absorb_width: float = 0.1
    absorb_strength: float = 5.0
    truncation: float = 0.8
    strict: bool = False
    max_loss: float = 0.1

    def __post_init__(self):
        if not self.dt > 0:
            raise ConfigurationError("dt must be positive")
        if not 0.0 <= self.absorb_width <= 0.2:
            raise ConfigurationError("absorbing layer must occupy at most 20% of each half-axis")
        if not 0.0 < self.truncation <= 1.0 - self.absorb_width + 1e-12:
            raise ConfigurationError("truncation radius must lie inside the absorbing layer")
        if self.absorb_strength < 0:
            raise ConfigurationError("absorb_strength must be non-negative")


def _grid_potential(model: SymbolModel, u: GridState, cfg: PropagatorConfig):
    """Flattened real potential and absorbing profile on the lattice."""
    x = u.points()
    half = 0.5 * min(u.extent)
    R = cfg.truncation * half
    r = np.linalg.norm(x, axis=-1)
    pot = model.potential
    if pot.is_zero:
        V = np.zeros(u.shape)
    else:
        V = model.potential_value(x, "full")
        outer = r > R
        if np.any(outer):
            ramp = max(half - R, 1e-12) * 0.5
            b = smooth_step((r - R) / ramp)[0]
            xr = R * x / np.where(r > 0, r, 1.0)[..., None]
            V_cap = model.potential_value(xr, "full")
            V = np.where(outer, (1.0 - b) * V + b * V_cap, V)
    W = np.zeros(u.shape)
    if cfg.absorb_width > 0 and cfg.absorb_strength > 0:
        for ax, (L, xa) in enumerate(zip(u.extent, u.axes())):
            start = (0.5 - 0.5 * cfg.absorb_width) * L
            depth = np.clip((np.abs(xa) - start) / (0.5 * cfg.absorb_width * L), 0.0, None)
            sl = [None] * u.dim
            sl[ax] = slice(None)
            W = W + cfg.absorb_strength * (depth**2)[tuple(sl)]
    return V, W


def evolve(u0: GridState, model: SymbolModel, t, cfg: PropagatorConfig = PropagatorConfig()) -> GridState:
    """Strang split-step approximation of ``exp(-i t H) u0`` (flat metric only).

    Raises
    ------
    UnsupportedConfigurationError
        For non-flat metrics.
    ConfigurationError
        When ``dt * max|V| > pi`` on the lattice.
    BoundaryMassError
        In strict mode when more than ``cfg.max_loss`` of the norm is absorbed.
    """
    if not model.is_flat:
        raise UnsupportedConfigurationError("quantum evolution is implemented for the flat metric only")
    if model.dim != u0.dim:
        raise ConfigurationError("model and grid dimensions differ")
    t = float(t)
    if t == 0.0:
        return u0.copy()
    steps = max(1, int(math.ceil(abs(t) / cfg.dt - 1e-12)))
    h = t / steps
    V, W = _grid_potential(model, u0, cfg)
    vmax = float(np.max(np.abs(V)))
    if abs(h) * vmax > np.pi:
        raise ConfigurationError(f"phase-wrap guard: dt*max|V| = {abs(h) * vmax:.3g} > pi; reduce dt")
    k2 = np.sum(u0.frequencies() ** 2, axis=-1)
    half_kin = np.exp(-0.5j * h * 0.5 * k2)
    full_kin = half_kin * half_kin
    pot = np.exp(-1j * h * V - abs(h) * W)
    a = np.fft.fftn(u0.values) * half_kin
    for j in range(steps):
        b = np.fft.ifftn(a) * pot
        a = np.fft.fftn(b) * (full_kin if j < steps - 1 else half_kin)
    out = u0.with_values(np.fft.ifftn(a))
    n0, n1 = u0.norm(), out.norm()
    loss = 1.0 - n1 / n0 if n0 > 0 else 0.0
    if loss > cfg.max_loss:
        msg = f"absorbing layer removed {100 * loss:.1f}% of the norm"
        if cfg.strict:
            raise BoundaryMassError(msg)
        warnings.warn(msg, BoundaryMassWarning, stacklevel=2)
    logger.debug("evolve t=%g in %d steps, norm loss %.3e", t, steps, loss)
    return out


@dataclass(frozen=True)
class DollardResult:
    v_dollard: GridState
    v_split: GridState
    discrepancy: float
    evolved: GridState


def dollard_conjugate(u0: GridState, model: SymbolModel, phase: PhaseFunction, t, cfg=PropagatorConfig()):
    """Compare ``exp(i Phi(t,D)) e^{-itH} u0`` with its split form.

    The split form is ``exp(iF(t,D)) exp(i sign(t) sigma(|t|) V_L(sign(t) D)) exp(itH0) e^{-itH} u0``.
    The discrepancy is the relative L2 distance between the two.
    """
    h = model.potential.homogeneous
    if h is None and not model.potential.long_range.is_zero:
        raise UnsupportedConfigurationError("dollard_conjugate needs a homogeneous long-range potential")
    t = float(t)
    w = evolve(u0, model, t, cfg)
    v_d = apply_multiplier(w, MultiplierSpec.phase(w, phase, t))
    v = apply_multiplier(w, MultiplierSpec.free(w, t))
    if h is not None:
        tau = 1.0 if t >= 0 else -1.0
        v = apply_multiplier(v, MultiplierSpec.homogeneous(w, h, phase.potential_weight * h.sigma(abs(t)), tau))
        v = apply_multiplier(v, MultiplierSpec.correction(w, phase, t))
    nd = v_d.norm()
    disc = v_d.distance(v) / nd if nd > 0 else 0.0
    return DollardResult(v_d, v, float(disc), w)


@dataclass(frozen=True)
class SmoothingNorms:
    weighted_sobolev: float
    weighted_input: float
    ratio: float
    s: float


def _weight(u: GridState, power):
    x = u.points()
    return (1.0 + np.sum(x * x, axis=-1)) ** (0.5 * power)


def smoothing_norms(u: GridState, field_: HomogeneousField, sigma, N, boundary_tol=1e-10, width=0.1):
    """``||<x>^-N exp(i sigma V_L(D)) u||_{H^s}`` and ``||<x>^N u||`` with ``s = (beta - 1) N``.

    Raises
    ------
    BoundaryMassError
        If ``u`` or ``exp(i sigma V_L(D)) u`` carries more than ``boundary_tol``
        of its mass in the outer ``width`` of the box.
    """
    if N < 0:
        raise DomainError("N must be non-negative")
    s = (field_.beta - 1.0) * N
    frac = u.boundary_fraction(width)
    if frac > boundary_tol:
        raise BoundaryMassError(f"input has {frac:.2e} of its mass near the boundary")
    v = apply_multiplier(u, MultiplierSpec.homogeneous(u, field_, sigma))
    frac = v.boundary_fraction(width)
    if frac > boundary_tol:
        raise BoundaryMassError(f"exp(i sigma V(D)) u has {frac:.2e} of its mass near the boundary")
    f = v.values * _weight(u, -N)
    fk = np.fft.fftn(f)
    k2 = np.sum(u.frequencies() ** 2, axis=-1)
    sob = math.sqrt(u.cell_volume / f.size * float(np.sum((1.0 + k2) ** s * np.abs(fk) ** 2)))
    inp = u.with_values(u.values * _weight(u, N)).norm()
    return SmoothingNorms(sob, inp, sob / inp, s)
