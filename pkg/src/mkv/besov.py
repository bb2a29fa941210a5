"""Besov norms through the heat-semigroup (thermic) characterization.

For a field ``f`` on the torus grid,

    |f|_{B^gamma_{ell,m}} = |F^{-1}(phi F f)|_{L^ell}
                            + ( int_0^1 (v^{n - gamma/a} |d^n_v p_v * f|_{L^ell})^m dv/v )^{1/m}

with ``p_v`` the reference kernel of symbol ``|xi|^a`` (``a = 2`` unless
configured), ``n`` the smallest nonnegative integer strictly above
``gamma / a`` and ``phi`` a compactly supported radial bump.  The time
derivative is the multiplier ``(-|xi|^a)^n exp(-v |xi|^a)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .grid import GridSpec, ScalarField, VectorField, gradient
from .stable_noise import StableParams, stable_density, stable_density_gradient

INF = math.inf


class BesovError(ValueError):
    pass


@dataclass(frozen=True)
class BesovIndex:
    gamma: float
    ell: float = 1.0
    m: float = INF

    def __post_init__(self):
        if not math.isfinite(self.gamma):
            raise BesovError(f"regularity must be finite, got {self.gamma}")
        if not (self.ell >= 1 and self.m >= 1):
            raise BesovError(f"integrability indices must be >= 1, got ell={self.ell}, m={self.m}")

    @property
    def conjugate(self) -> "BesovIndex":
        """Dual index ``(-gamma, ell', m')``."""
        return BesovIndex(-self.gamma, _conj(self.ell), _conj(self.m))


def _conj(p: float) -> float:
    if p == 1:
        return INF
    if math.isinf(p):
        return 1.0
    return p / (p - 1.0)


@dataclass(frozen=True)
class ThermicQuadrature:
    """v-quadrature and low-frequency cutoff of the thermic norm.

    ``v_min`` defaults to ``min((h/L)^2, (h/2)^2)``; the second term keeps
    the quadrature down to grid scale on boxes with ``L < 2``.  ``xi0`` is
    the support radius of the low-frequency bump, a fixed frequency so that
    the norm does not depend on the grid resolution.
    """

    nodes: int = 64
    alpha_ref: float = 2.0
    v_min: float | None = None
    xi0: float = 4.0
    tail_tol: float = 0.05

    def __post_init__(self):
        if self.nodes < 8:
            raise BesovError(f"thermic quadrature needs at least 8 nodes, got {self.nodes}")
        if not (0 < self.alpha_ref <= 2):
            raise BesovError(f"reference index must lie in (0, 2], got {self.alpha_ref}")
        if not self.xi0 > 0:
            raise BesovError(f"cutoff radius must be positive, got {self.xi0}")

    def times(self, grid: GridSpec) -> np.ndarray:
        v_min = self.v_min if self.v_min is not None else min((grid.h / grid.L) ** 2, (grid.h / 2) ** 2)
        if not 0 < v_min < 1:
            raise BesovError(f"v_min must lie in (0, 1), got {v_min}")
        return np.logspace(math.log10(v_min), 0.0, self.nodes)


DEFAULT_QUADRATURE = ThermicQuadrature()


@dataclass(frozen=True)
class ThermicResult:
    value: float
    low: float
    seminorm: float
    tail_estimate: float
    converged: bool
    order: int

    def __float__(self) -> float:
        return self.value


def derivative_order(gamma: float, alpha_ref: float = 2.0) -> int:
    """Smallest nonnegative integer strictly greater than ``gamma / alpha_ref``."""
    return max(0, math.floor(gamma / alpha_ref) + 1)


def bump(grid: GridSpec, xi0: float) -> np.ndarray:
    """``exp(1 - 1/(1 - |xi/xi0|^2))`` inside the ball of radius ``xi0``, zero outside."""
    s = (grid.freq_norm / xi0) ** 2
    out = np.zeros_like(s)
    inside = s < 1.0
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - s[inside]))
    return out


def _as_components(f) -> tuple[GridSpec, np.ndarray]:
    if isinstance(f, ScalarField):
        return f.grid, f.values[None]
    if isinstance(f, VectorField):
        return f.grid, f.values
    raise TypeError(f"expected a ScalarField or VectorField, got {type(f).__name__}")


def _lnorm(grid: GridSpec, comps: np.ndarray, ell: float) -> float:
    # pointwise Euclidean magnitude for vector fields
    mag = np.abs(comps[0]) if comps.shape[0] == 1 else np.sqrt(np.sum(comps**2, axis=0))
    return grid.lp_norm(mag, ell)


def thermic_profile(f, idx: BesovIndex, quad: ThermicQuadrature = DEFAULT_QUADRATURE):
    """Nodes ``v_k`` and weighted values ``v^{n-gamma/a} |d^n_v p_v * f|_{L^ell}``."""
    grid, comps = _as_components(f)
    n = derivative_order(idx.gamma, quad.alpha_ref)
    v = quad.times(grid)
    spec = grid.fourier(comps)
    psi = grid.freq_norm**quad.alpha_ref
    deriv = (-psi) ** n if n else 1.0
    vals = np.empty(v.size)
    for k, vk in enumerate(v):
        mult = deriv * np.exp(-vk * psi)
        vals[k] = vk ** (n - idx.gamma / quad.alpha_ref) * _lnorm(grid, grid.inverse(mult * spec), idx.ell)
    return v, vals, n


def thermic_norm(f, idx: BesovIndex, quad: ThermicQuadrature = DEFAULT_QUADRATURE) -> ThermicResult:
    """Thermic Besov norm of a scalar or vector field (vector: pointwise magnitude)."""
    grid, comps = _as_components(f)
    low = _lnorm(grid, grid.inverse(bump(grid, quad.xi0) * grid.fourier(comps)), idx.ell)
    v, vals, n = thermic_profile(f, idx, quad)
    if math.isinf(idx.m):
        semi = float(vals.max())
        tail = float(vals[0])
    else:
        u = np.log(v)
        semi = float(np.trapezoid(vals**idx.m, u) ** (1.0 / idx.m))
        # truncated (0, v_min) piece from a power law v^k through the two smallest nodes
        with np.errstate(divide="ignore", invalid="ignore"):
            k = idx.m * math.log(vals[1] / vals[0]) / (u[1] - u[0]) if vals[0] > 0 and vals[1] > 0 else INF
        tail = float((vals[0] ** idx.m / k) ** (1.0 / idx.m)) if k > 1e-12 else (INF if vals[0] > 0 else 0.0)
    converged = tail <= quad.tail_tol * semi if semi > 0 else True
    if math.isinf(idx.m) and semi > 0 and vals.argmax() == 0:
        converged = False
    return ThermicResult(low + semi, low, semi, tail, converged, n)


# --- scaling of the stable heat kernel ----------------------------------------

@dataclass(frozen=True)
class ScalingFit:
    slope: float
    expected: float
    intercept: float
    times: tuple[float, ...]
    norms: tuple[float, ...]


def heat_kernel_exponent(params: StableParams, idx: BesovIndex, a: int) -> float:
    """Predicted log-log slope ``-(gamma/alpha + (d/alpha)(1 - 1/ell) + a/alpha)``."""
    al, d = params.alpha, params.d
    inv_ell = 0.0 if math.isinf(idx.ell) else 1.0 / idx.ell
    return -(idx.gamma / al + d / al * (1.0 - inv_ell) + a / al)


def heat_kernel_norm_scaling(
    params: StableParams,
    idx: BesovIndex,
    a: int,
    times: Sequence[float],
    grid: GridSpec,
    quad: ThermicQuadrature = DEFAULT_QUADRATURE,
) -> ScalingFit:
    """Least-squares slope of ``log |d^a p_t|`` against ``log t``."""
    if a not in (0, 1):
        raise BesovError(f"derivative order must be 0 or 1, got {a}")
    times = np.asarray(sorted(times), dtype=float)
    norms = []
    for t in times:
        fld = stable_density(params, t, grid) if a == 0 else stable_density_gradient(params, t, grid)
        norms.append(thermic_norm(fld, idx, quad).value)
    norms = np.asarray(norms)
    ok = np.isfinite(norms) & (norms > 0)
    if ok.sum() < 4:
        raise BesovError(f"degenerate fit: only {int(ok.sum())} usable norms (need 4)")
    slope, icpt = np.polyfit(np.log(times[ok]), np.log(norms[ok]), 1)
    return ScalingFit(float(slope), heat_kernel_exponent(params, idx, a), float(icpt),
                      tuple(times.tolist()), tuple(norms.tolist()))


# --- weighted trajectory norm --------------------------------------------------

@dataclass(frozen=True)
class WeightedNormSpec:
    theta: float
    t_origin: float
    space: BesovIndex

    def __post_init__(self):
        if not (math.isfinite(self.theta) and self.theta >= 0):
            raise BesovError(f"weight exponent must be finite and >= 0, got {self.theta}")


def weighted_sup_norm(traj, spec: WeightedNormSpec, quad: ThermicQuadrature = DEFAULT_QUADRATURE) -> float:
    """``max_s (s - t)^theta |rho(s)|_{B}`` over the stamps of a trajectory."""
    stamps = list(traj.stamps)
    if not stamps:
        raise BesovError("empty trajectory")
    best = 0.0
    for s, rho in zip(stamps, traj.densities):
        if s <= spec.t_origin:
            raise BesovError(f"stamp {s} is not after the weight origin {spec.t_origin}")
        w = (s - spec.t_origin) ** spec.theta
        best = max(best, w * thermic_norm(rho, spec.space, quad).value)
    return best


# --- inequality checkers -----------------------------------------------------

def check_young(
    f: ScalarField,
    g: ScalarField,
    target: BesovIndex,
    delta: float,
    ell1: float,
    ell2: float,
    m1: float,
    m2: float,
    quad: ThermicQuadrature = DEFAULT_QUADRATURE,
) -> float:
    """``|f*g|_{B^gamma_{ell,m}} / (|f|_{B^{gamma-delta}_{ell1,m1}} |g|_{B^delta_{ell2,m2}})``."""
    inv = lambda x: 0.0 if math.isinf(x) else 1.0 / x  # noqa: E731
    if not math.isclose(1.0 + inv(target.ell), inv(ell1) + inv(ell2), abs_tol=1e-12):
        raise BesovError("Young exponents must satisfy 1 + 1/ell = 1/ell1 + 1/ell2")
    if inv(m1) < max(inv(target.m) - inv(m2), 0.0) - 1e-12:
        raise BesovError("summability exponents must satisfy 1/m1 >= max(1/m - 1/m2, 0)")
    f.grid.check_same(g.grid)
    conv = ScalarField(f.grid, f.grid.inverse(f.grid.fourier(f.values) * f.grid.fourier(g.values)))
    num = thermic_norm(conv, target, quad).value
    if num == 0.0:
        return 0.0
    den = (thermic_norm(f, BesovIndex(target.gamma - delta, ell1, m1), quad).value
           * thermic_norm(g, BesovIndex(delta, ell2, m2), quad).value)
    return num / den


def check_duality(f: ScalarField, g: ScalarField, idx: BesovIndex,
                  quad: ThermicQuadrature = DEFAULT_QUADRATURE) -> float:
    """``|int f g| / (|f|_{B^gamma_{ell,m}} |g|_{B^{-gamma}_{ell',m'}})``."""
    f.grid.check_same(g.grid)
    num = abs(f.grid.integrate(f.values * g.values))
    if num == 0.0:
        return 0.0
    den = thermic_norm(f, idx, quad).value * thermic_norm(g, idx.conjugate, quad).value
    return float(num / den)


def field_gradient(f: ScalarField) -> VectorField:
    return VectorField(f.grid, gradient(f.values, f.grid))
