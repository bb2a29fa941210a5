"""Symmetric alpha-stable driving noise: symbols, densities and increments.

The characteristic exponent is ``psi(xi) = c |xi|^alpha`` (isotropic) or
``psi(xi) = c sum_i w_i |zeta_i . xi|^alpha`` (finite spectral measure), so
``E exp(i xi . (W_{t+s} - W_t)) = exp(-s psi(xi))``.  With the default
``c = 1/2`` and ``alpha = 2`` the noise is standard Brownian motion.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .grid import GridSpec, ResolutionError, ScalarField, VectorField

NYQUIST_TOL = 1e-12


class NoiseError(ValueError):
    pass


@dataclass(frozen=True)
class Atom:
    direction: tuple[float, ...]
    weight: float


@dataclass(frozen=True)
class StableParams:
    """Stable index, spectral measure and symbol prefactor.

    ``measure`` is ``"isotropic"`` or ``"atoms"``; for atoms the list must be
    symmetric (each ``(zeta, w)`` paired with ``(-zeta, w)``) and span every
    direction, which is the discrete non-degeneracy condition.
    """

    alpha: float
    d: int = 1
    measure: str = "isotropic"
    atoms: tuple[Atom, ...] = ()
    diffusivity: float = 0.5
    kappa: float = field(init=False, default=1.0, compare=False)

    def __post_init__(self):
        if not (1.0 < self.alpha <= 2.0):
            raise NoiseError(f"alpha must lie in (1, 2], got {self.alpha}")
        if not self.diffusivity > 0:
            raise NoiseError(f"diffusivity must be positive, got {self.diffusivity}")
        if self.d not in (1, 2, 3):
            raise NoiseError(f"dimension must be 1, 2 or 3, got {self.d}")
        if self.measure == "isotropic":
            if self.atoms:
                raise NoiseError("isotropic measure takes no atoms")
            return
        if self.measure != "atoms":
            raise NoiseError(f"unknown spectral measure {self.measure!r}")
        atoms = tuple(_normalize_atom(a, self.d) for a in self.atoms)
        object.__setattr__(self, "atoms", atoms)
        _check_symmetric(atoms)
        lo, hi = _ue_bounds(self.alpha, atoms, self.d)
        if lo <= 1e-12:
            raise NoiseError("degenerate spectral measure: some direction carries no stable mass")
        object.__setattr__(self, "kappa", max(1.0 / lo, hi))

    @classmethod
    def cylindrical(cls, alpha: float, d: int, diffusivity: float = 0.5) -> "StableParams":
        """Independent 1-d stable components along the axes (weights 1/2 on each of +-e_i)."""
        atoms = []
        for i in range(d):
            e = [0.0] * d
            e[i] = 1.0
            atoms.append(Atom(tuple(e), 0.5))
            e[i] = -1.0
            atoms.append(Atom(tuple(e), 0.5))
        return cls(alpha, d, "atoms", tuple(atoms), diffusivity)

    @property
    def atom_directions(self) -> np.ndarray:
        return np.array([a.direction for a in self.atoms], dtype=float).reshape(-1, self.d)

    @property
    def atom_weights(self) -> np.ndarray:
        return np.array([a.weight for a in self.atoms], dtype=float)


def _normalize_atom(atom, d: int) -> Atom:
    if not isinstance(atom, Atom):
        direction, weight = atom
        atom = Atom(tuple(float(x) for x in direction), float(weight))
    v = np.asarray(atom.direction, dtype=float)
    if v.shape != (d,):
        raise NoiseError(f"atom direction {atom.direction} is not a {d}-vector")
    n = np.linalg.norm(v)
    if n == 0 or not atom.weight > 0:
        raise NoiseError(f"atoms need a non-zero direction and positive weight, got {atom}")
    return Atom(tuple(v / n), float(atom.weight))


def _check_symmetric(atoms: tuple[Atom, ...]) -> None:
    for a in atoms:
        mirror = np.negative(a.direction)
        if not any(np.allclose(b.direction, mirror) and np.isclose(b.weight, a.weight) for b in atoms):
            raise NoiseError(f"spectral measure is not symmetric: no mirror atom for {a}")


def _unit_directions(d: int, n: int = 2048) -> np.ndarray:
    if d == 1:
        return np.array([[1.0]])
    if d == 2:
        th = np.linspace(0.0, np.pi, n, endpoint=False)
        return np.stack([np.cos(th), np.sin(th)], axis=1)
    # Fibonacci sphere
    k = np.arange(n) + 0.5
    z = 1.0 - 2.0 * k / n
    phi = np.pi * (1.0 + 5**0.5) * k
    r = np.sqrt(1.0 - z**2)
    return np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=1)


def _ue_bounds(alpha: float, atoms: tuple[Atom, ...], d: int) -> tuple[float, float]:
    lam = _unit_directions(d)
    dirs = np.array([a.direction for a in atoms])
    w = np.array([a.weight for a in atoms])
    vals = (np.abs(lam @ dirs.T) ** alpha) @ w
    return float(vals.min()), float(vals.max())


def stable_symbol(params: StableParams, xi) -> np.ndarray | float:
    """Characteristic exponent ``psi(xi)``; ``xi`` has trailing axis of length ``d``
    (a scalar is accepted when ``d = 1``)."""
    xi = np.asarray(xi, dtype=float)
    if params.d == 1 and (xi.ndim == 0 or xi.shape[-1] != 1):
        xi = xi[..., None]
    if params.measure == "isotropic":
        out = params.diffusivity * np.linalg.norm(xi, axis=-1) ** params.alpha
    else:
        proj = np.abs(xi @ params.atom_directions.T) ** params.alpha
        out = params.diffusivity * (proj @ params.atom_weights)
    return float(out) if np.ndim(out) == 0 else out


def symbol_on_grid(params: StableParams, grid: GridSpec) -> np.ndarray:
    if grid.d != params.d:
        raise NoiseError(f"noise dimension {params.d} does not match grid dimension {grid.d}")
    if params.measure == "isotropic":
        return params.diffusivity * grid.freq_norm**params.alpha
    xi = np.stack(grid.freqs, axis=-1)
    return stable_symbol(params, xi)


def _check_nyquist(params: StableParams, t: float, grid: GridSpec) -> None:
    psi = symbol_on_grid(params, grid)
    edge = np.zeros(psi.shape, dtype=bool)
    for k in grid.freqs:
        edge |= np.isclose(np.abs(k), grid.nyquist)
    worst = float(np.exp(-t * psi[edge].min()))
    if worst > NYQUIST_TOL:
        # psi scales like N^alpha at the band edge
        need = np.log(1.0 / NYQUIST_TOL) / (t * psi[edge].min())
        n = grid.N
        while n < (1 << 20) and (n / grid.N) ** params.alpha < need:
            n *= 2
        raise ResolutionError(
            f"stable density at t={t:g} is under-resolved on N={grid.N} "
            f"(band-edge multiplier {worst:.2e}); use N >= {n}",
            minimal_n=n,
        )


def stable_density(params: StableParams, t: float, grid: GridSpec, check: bool = True) -> ScalarField:
    """Periodized transition density ``p_t`` sampled on ``grid``."""
    if not t > 0:
        raise ValueError(f"time must be positive, got {t}")
    if check:
        _check_nyquist(params, t, grid)
    spec = np.exp(-t * symbol_on_grid(params, grid))
    return ScalarField(grid, grid.inverse(spec))


def stable_density_gradient(params: StableParams, t: float, grid: GridSpec, check: bool = True) -> VectorField:
    if not t > 0:
        raise ValueError(f"time must be positive, got {t}")
    if check:
        _check_nyquist(params, t, grid)
    spec = np.exp(-t * symbol_on_grid(params, grid))
    return VectorField(grid, np.stack([grid.inverse(1j * k * spec) for k in grid.deriv_freqs]))


# --- sampling -----------------------------------------------------------------

def symmetric_stable(alpha: float, size, rng: np.random.Generator) -> np.ndarray:
    """Chambers-Mallows-Stuck draws with ``E exp(iuS) = exp(-|u|^alpha)``."""
    u = rng.uniform(-0.5 * np.pi, 0.5 * np.pi, size)
    e = rng.standard_exponential(size)
    if alpha == 2.0:
        return 2.0 * np.sin(u) * np.sqrt(e)
    return (
        np.sin(alpha * u)
        / np.cos(u) ** (1.0 / alpha)
        * (np.cos((1.0 - alpha) * u) / e) ** ((1.0 - alpha) / alpha)
    )


def positive_stable(a: float, size, rng: np.random.Generator) -> np.ndarray:
    """Totally skewed draws with Laplace transform ``E exp(-lam A) = exp(-lam^a)``, ``0 < a < 1``.

    Chambers-Mallows-Stuck in Kanter's form.
    """
    u = rng.uniform(0.0, np.pi, size)
    e = rng.standard_exponential(size)
    return (
        np.sin(a * u)
        / np.sin(u) ** (1.0 / a)
        * (np.sin((1.0 - a) * u) / e) ** ((1.0 - a) / a)
    )


def sample_increments(params: StableParams, dt: float, n: int, seed: int | np.random.Generator) -> np.ndarray:
    """``n`` i.i.d. increments ``W_{t+dt} - W_t``, shape ``(n, d)``."""
    if n < 1:
        raise ValueError(f"need at least one increment, got n={n}")
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    d, alpha, c = params.d, params.alpha, params.diffusivity
    if params.measure == "isotropic":
        # subordination: sqrt(A) * N(0, sigma^2 I) with A positive (alpha/2)-stable
        sigma2 = 2.0 * (dt * c) ** (2.0 / alpha)
        g = rng.standard_normal((n, d))
        if alpha == 2.0:
            return np.sqrt(sigma2) * g
        amp = positive_stable(alpha / 2.0, n, rng)
        return np.sqrt(sigma2 * amp)[:, None] * g
    dirs = params.atom_directions
    scales = (dt * c * params.atom_weights) ** (1.0 / alpha)
    s = symmetric_stable(alpha, (n, len(dirs)), rng) * scales
    return s @ dirs


def empirical_char_function(samples: np.ndarray, xi: Sequence[float]) -> tuple[float, float]:
    """Real part of the empirical characteristic function and its standard error."""
    phase = np.cos(np.asarray(samples) @ np.asarray(xi, dtype=float))
    return float(phase.mean()), float(phase.std(ddof=1) / np.sqrt(len(phase)))
