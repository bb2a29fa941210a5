"""Interaction kernels of the three model problems, mollification, and the
Cole-Hopf reference solution of the viscous Burgers equation.

Singular kernels are regularized twice: ``|x|`` is replaced by
``sqrt(|x|^2 + eps^2)`` before sampling, then the sampled field is convolved
with a centred Gaussian of standard deviation ``eps``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.integrate import cumulative_simpson
from scipy.special import ndtr

from .grid import GridError, GridSpec, ResolutionError, ScalarField, VectorField, divergence, gaussian_multiplier

KINDS = ("burgers", "biot_savart", "keller_segel", "custom", "zero")

# surface constants c_d of the Newtonian potential gradient
SURFACE = {2: 2.0 * math.pi, 3: 4.0 * math.pi}


class KernelError(ValueError):
    pass


@dataclass(frozen=True)
class KernelSpec:
    """Interaction kernel description.

    ``epsilon = 0`` selects the grid default ``4h``.  ``custom`` carries its
    field in ``field``; ``zero`` is the null kernel.
    """

    kind: str
    epsilon: float = 0.0
    R: float = 2.0
    chi: float = 1.0
    field: VectorField | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise KernelError(f"unknown kernel kind {self.kind!r}; expected one of {KINDS}")
        if not self.epsilon >= 0:
            raise KernelError(f"epsilon must be >= 0, got {self.epsilon}")
        if not self.R > 0:
            raise KernelError(f"cutoff radius R must be positive, got {self.R}")
        if not self.chi > 0:
            raise KernelError(f"chi must be positive, got {self.chi}")
        if self.kind == "custom" and self.field is None:
            raise KernelError("custom kernel needs a field")

    @property
    def divergence_form(self) -> bool:
        """True when the kernel is treated in the beta = -1 regime."""
        return self.kind in ("biot_savart", "keller_segel")

    def resolved_epsilon(self, grid: GridSpec) -> float:
        return self.epsilon if self.epsilon > 0 else 4.0 * grid.h


def cutoff_profile(R: float, r) -> np.ndarray | float:
    """Radial taper: 1 on ``r <= R``, 0 on ``r >= R + 1``, ``(1 + cos(pi (r - R)))/2`` between."""
    if not R > 0:
        raise KernelError(f"cutoff radius R must be positive, got {R}")
    r = np.asarray(r, dtype=float)
    out = np.where(r <= R, 1.0, np.where(r >= R + 1.0, 0.0, 0.5 * (1.0 + np.cos(np.pi * (r - R)))))
    return float(out) if out.ndim == 0 else out


def smooth_cutoff(R: float, x) -> float:
    """Cutoff evaluated at a point ``x`` (a scalar is read as ``|x|``)."""
    x = np.asarray(x, dtype=float)
    r = abs(float(x)) if x.ndim == 0 else float(np.linalg.norm(x))
    return cutoff_profile(R, r)


def kernel_value(spec: KernelSpec, x: Sequence[float], reg: float = 0.0) -> np.ndarray:
    """Pointwise truncated kernel ``K(x) 1*_{B(0,R)}(x)`` with optional core ``reg``."""
    x = np.asarray(x, dtype=float)
    d = x.size
    r2 = float(x @ x) + reg**2
    cut = cutoff_profile(spec.R, math.sqrt(float(x @ x)))
    if spec.kind == "biot_savart":
        if d != 2:
            raise KernelError("Biot-Savart kernel is two-dimensional")
        return np.array([-x[1], x[0]]) / (2.0 * math.pi * r2) * cut
    if spec.kind == "keller_segel":
        if d not in SURFACE:
            raise KernelError("Keller-Segel kernel is available for d = 2, 3")
        return -spec.chi * x / (SURFACE[d] * r2 ** (d / 2.0)) * cut
    raise KernelError(f"no pointwise formula for kernel kind {spec.kind!r}")


def _check_eps(eps: float, grid: GridSpec) -> None:
    if eps < 2.0 * grid.h * (1.0 - 1e-12):
        n = grid.N
        while 2.0 * (2.0 * grid.L / n) > eps and n < (1 << 20):
            n *= 2
        raise ResolutionError(
            f"mollification scale eps={eps:g} is below 2h={2 * grid.h:g}; use N >= {n}", minimal_n=n)


def mollify_kernel(b: VectorField, eps: float) -> VectorField:
    """Convolution with the centred Gaussian of standard deviation ``eps``."""
    _check_eps(eps, b.grid)
    g = b.grid
    return VectorField(g, g.inverse(g.fourier(b.values) * gaussian_multiplier(g, eps)))


def _regularized_samples(spec: KernelSpec, grid: GridSpec, reg: float) -> np.ndarray:
    d = grid.d
    r = grid.radius
    cut = cutoff_profile(spec.R, r)
    r2 = r**2 + reg**2
    if spec.kind == "biot_savart":
        x1, x2 = grid.coords
        return np.stack([-x2, x1]) * (cut / (2.0 * math.pi * r2))
    return -spec.chi * np.stack(grid.coords) * (cut / (SURFACE[d] * r2 ** (d / 2.0)))


def raw_kernel(spec: KernelSpec, grid: GridSpec, reg: float) -> VectorField:
    """Kernel sampled with core regularization ``reg`` and no Gaussian smoothing."""
    _check_dims(spec, grid)
    if spec.kind in ("biot_savart", "keller_segel"):
        return VectorField(grid, _regularized_samples(spec, grid, reg))
    raise KernelError(f"kernel kind {spec.kind!r} has no sampled singular form")


def _check_dims(spec: KernelSpec, grid: GridSpec) -> None:
    if spec.kind == "burgers" and grid.d != 1:
        raise KernelError("Burgers kernel needs d = 1")
    if spec.kind == "biot_savart" and grid.d != 2:
        raise KernelError("Biot-Savart kernel needs d = 2")
    if spec.kind == "keller_segel" and grid.d not in SURFACE:
        raise KernelError("Keller-Segel kernel needs d = 2 or 3")
    if spec.kind in ("biot_savart", "keller_segel") and spec.R + 1.0 > grid.L:
        raise GridError(f"kernel support radius R+1={spec.R + 1:g} exceeds the half width L={grid.L:g}")
    if spec.kind == "custom":
        grid.check_same(spec.field.grid)


def build_kernel(spec: KernelSpec, grid: GridSpec) -> tuple[VectorField, ScalarField]:
    """Mollified kernel ``b`` and its spectral divergence."""
    _check_dims(spec, grid)
    eps = spec.resolved_epsilon(grid)
    if spec.kind == "zero":
        b = VectorField(grid, np.zeros((grid.d,) + grid.shape))
    else:
        _check_eps(eps, grid)
        if spec.kind == "burgers":
            # half a Gaussian approximation of the Dirac mass
            x = grid.coords[0]
            b = VectorField(grid, (0.5 * np.exp(-0.5 * (x / eps) ** 2) / (math.sqrt(2 * math.pi) * eps))[None])
        elif spec.kind == "custom":
            b = mollify_kernel(spec.field, eps)
        else:
            b = mollify_kernel(raw_kernel(spec, grid, eps), eps)
    return b, ScalarField(grid, divergence(b.values, grid))


# --- Cole-Hopf reference ------------------------------------------------------

def cole_hopf_reference(u0: ScalarField, s: float, alpha: float = 2.0) -> ScalarField:
    """Exact solution at time ``s`` of ``u_s + (u^2/2)_x = u_xx / 2`` from a probability density.

    ``u = -d_x log(G_s * exp(-U0))`` with ``U0`` the primitive of ``u0`` and
    ``G_s`` the centred Gaussian of variance ``s``; evaluated by direct
    quadrature, the half-lines outside the box contributing ``exp(0)`` on the
    left and ``exp(-1)`` on the right.
    """
    if alpha != 2.0:
        raise ValueError("the Cole-Hopf reference exists only for alpha = 2")
    grid = u0.grid
    if grid.d != 1:
        raise GridError("the Cole-Hopf reference is one-dimensional")
    if not s > 0:
        raise ValueError(f"time must be positive, got {s}")
    vals = u0.values
    if vals.min() < -1e-12:
        raise ValueError("initial condition must be nonnegative")
    mass = u0.integral()
    if abs(mass - 1.0) > 1e-6:
        raise ValueError(f"initial condition must be a probability density (mass {mass:.8g})")
    x, h = grid.axis, grid.h
    U0 = cumulative_simpson(vals, dx=h, initial=0.0)
    U0 = U0 / U0[-1] if U0[-1] > 0 else U0
    phi0 = np.exp(-U0)
    sd = math.sqrt(s)
    diff = (x[:, None] - x[None, :]) / sd
    G = np.exp(-0.5 * diff**2) / (math.sqrt(2 * math.pi) * sd)
    # trapezoid weights on the closed interval [-L, x_{N-1}]
    w = np.full(x.size, h)
    w[0] = w[-1] = 0.5 * h
    num = G @ (w * vals * phi0)
    left = ndtr((-grid.L - x) / sd)
    right = 1.0 - ndtr((x[-1] - x) / sd)
    den = G @ (w * phi0) + left + math.exp(-1.0) * right
    return ScalarField(grid, num / den)
