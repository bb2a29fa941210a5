"""Interacting particle approximation of the mollified McKean-Vlasov dynamics.

Each particle follows the Euler scheme

    X^i_{k+1} = X^i_k + dt (1/n) sum_j b^eps(X^i_k - X^j_k) + (W_{k+1} - W_k)^i

on the periodic box, with pairwise differences taken in the minimum-image
convention.  The kernel is read from its grid samples by multilinear
interpolation.  Small systems sum pairs directly; large ones deposit the
particles on the grid (cloud-in-cell) and convolve spectrally.
"""

from __future__ import annotations

import math
import os
import zlib
from dataclasses import dataclass, field

import numba
import numpy as np

from .grid import GridSpec, ScalarField, VectorField, gaussian_multiplier
from .kernels import KernelSpec, build_kernel
from .stable_noise import StableParams, sample_increments

# the bundled TBB is too old for numba; skip it rather than warn
numba.config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]

DIRECT_MAX = 10_000
MEMORY_BUDGET = 2 * 1024**3


class ParticleError(ValueError):
    pass


def child_rng(seed: int, tag: str) -> np.random.Generator:
    """Independent stream for ``(seed, purpose)``, stable across runs and platforms."""
    return np.random.default_rng(np.random.SeedSequence([int(seed) & 0xFFFFFFFF, zlib.crc32(tag.encode())]))


@dataclass
class ParticleConfig:
    mu0: ScalarField
    noise: StableParams
    kernel: KernelSpec
    n_particles: int = 10_000
    dt: float = 0.01
    horizon: float = 0.5
    seed: int = 0
    kde_bandwidth: float | None = None
    snapshots: int = 1
    t_start: float = 0.0

    def __post_init__(self):
        if self.n_particles < 100:
            raise ParticleError(f"need at least 100 particles, got {self.n_particles}")
        if not (self.dt > 0 and self.horizon > 0):
            raise ParticleError("dt and horizon must be positive")
        if self.dt > self.horizon / 10 * (1 + 1e-12):
            raise ParticleError(f"dt={self.dt} exceeds horizon/10={self.horizon / 10}")
        if self.kde_bandwidth is not None and not self.kde_bandwidth > 0:
            raise ParticleError(f"bandwidth must be positive, got {self.kde_bandwidth}")
        if self.snapshots < 1:
            raise ParticleError("need at least one snapshot")
        g = self.mu0.grid
        if self.noise.d != g.d:
            raise ParticleError(f"noise dimension {self.noise.d} does not match grid dimension {g.d}")
        # positions, unwrapped copy, drift, increments and one snapshot buffer
        need = 8 * self.n_particles * g.d * (5 + self.snapshots)
        if need > MEMORY_BUDGET:
            raise ParticleError(f"{self.n_particles} particles need ~{need / 1024**3:.1f} GiB, over the budget")

    @property
    def grid(self) -> GridSpec:
        return self.mu0.grid

    @property
    def steps(self) -> int:
        return int(round(self.horizon / self.dt))


@dataclass
class ParticleRun:
    times: list[float] = field(default_factory=list)
    positions: list[np.ndarray] = field(default_factory=list)
    densities: list[ScalarField] = field(default_factory=list)
    center_of_mass: list[np.ndarray] = field(default_factory=list)
    bandwidth: float = 0.0
    method: str = "direct"


def sample_initial(mu0: ScalarField, n: int, rng: np.random.Generator) -> np.ndarray:
    """Inverse-CDF draws from a gridded density, uniform inside the chosen cell."""
    g = mu0.grid
    w = np.clip(mu0.values.ravel(), 0.0, None)
    cdf = np.cumsum(w)
    cdf /= cdf[-1]
    cells = np.searchsorted(cdf, rng.uniform(size=n), side="right")
    cells = np.minimum(cells, cdf.size - 1)
    idx = np.stack(np.unravel_index(cells, g.shape), axis=1)
    jitter = rng.uniform(-0.5, 0.5, size=(n, g.d))
    return wrap(-g.L + g.h * (idx + jitter), g)


def wrap(x: np.ndarray, grid: GridSpec) -> np.ndarray:
    """Map coordinates into ``[-L, L)``."""
    span = 2.0 * grid.L
    return x - span * np.floor((x + grid.L) / span)


# --- interpolation and deposition ------------------------------------------------

@numba.njit(cache=True)
def _interp_point(z, vals, L, h, N, d, out, i0, fr):
    # multilinear interpolation of the flattened component arrays vals[c, :] at z
    for k in range(d):
        u = (z[k] + L) / h
        f = math.floor(u)
        fr[k] = u - f
        i0[k] = int(f) % N
    for c in range(out.size):
        out[c] = 0.0
    for corner in range(1 << d):
        w = 1.0
        flat = 0
        for k in range(d):
            bit = (corner >> (d - 1 - k)) & 1
            w *= fr[k] if bit else 1.0 - fr[k]
            flat = flat * N + (i0[k] + bit) % N
        for c in range(out.size):
            out[c] += w * vals[c, flat]


@numba.njit(parallel=True, cache=True)
def _direct_drift(X, vals, L, h, N):
    n, d = X.shape
    ncomp = vals.shape[0]
    span = 2.0 * L
    out = np.zeros((n, ncomp))
    for i in numba.prange(n):
        z = np.empty(d)
        tmp = np.empty(ncomp)
        acc = np.zeros(ncomp)
        i0 = np.empty(d, np.int64)
        fr = np.empty(d)
        for j in range(n):
            for k in range(d):
                dz = X[i, k] - X[j, k]
                z[k] = dz - span * math.floor((dz + L) / span)
            _interp_point(z, vals, L, h, N, d, tmp, i0, fr)
            for c in range(ncomp):
                acc[c] += tmp[c]
        for c in range(ncomp):
            out[i, c] = acc[c] / n
    return out


@numba.njit(parallel=True, cache=True)
def _direct_drift_1d(x, vals, L, h, N):
    n = x.size
    span = 2.0 * L
    out = np.zeros((n, 1))
    row = vals[0]
    for i in numba.prange(n):
        acc = 0.0
        xi = x[i]
        for j in range(n):
            dz = xi - x[j]
            dz -= span * math.floor((dz + L) / span)
            u = (dz + L) / h
            f = math.floor(u)
            a = u - f
            k = int(f)
            k0 = k if k < N else k - N
            k1 = k0 + 1 if k0 + 1 < N else 0
            acc += (1.0 - a) * row[k0] + a * row[k1]
        out[i, 0] = acc / n
    return out


@numba.njit(parallel=True, cache=True)
def _direct_drift_2d(X, vals, L, h, N):
    n = X.shape[0]
    span = 2.0 * L
    out = np.zeros((n, 2))
    for i in numba.prange(n):
        acc0 = 0.0
        acc1 = 0.0
        xi = X[i, 0]
        yi = X[i, 1]
        for j in range(n):
            dx = xi - X[j, 0]
            dx -= span * math.floor((dx + L) / span)
            dy = yi - X[j, 1]
            dy -= span * math.floor((dy + L) / span)
            u = (dx + L) / h
            v = (dy + L) / h
            fu = math.floor(u)
            fv = math.floor(v)
            a = u - fu
            b = v - fv
            p0 = int(fu)
            q0 = int(fv)
            if p0 >= N:
                p0 -= N
            if q0 >= N:
                q0 -= N
            p1 = p0 + 1 if p0 + 1 < N else 0
            q1 = q0 + 1 if q0 + 1 < N else 0
            w00 = (1.0 - a) * (1.0 - b)
            w01 = (1.0 - a) * b
            w10 = a * (1.0 - b)
            w11 = a * b
            f00 = p0 * N + q0
            f01 = p0 * N + q1
            f10 = p1 * N + q0
            f11 = p1 * N + q1
            acc0 += w00 * vals[0, f00] + w01 * vals[0, f01] + w10 * vals[0, f10] + w11 * vals[0, f11]
            acc1 += w00 * vals[1, f00] + w01 * vals[1, f01] + w10 * vals[1, f10] + w11 * vals[1, f11]
        out[i, 0] = acc0 / n
        out[i, 1] = acc1 / n
    return out


@numba.njit(parallel=True, cache=True)
def _gather(X, vals, L, h, N):
    n, d = X.shape
    ncomp = vals.shape[0]
    out = np.empty((n, ncomp))
    for i in numba.prange(n):
        z = np.empty(d)
        tmp = np.empty(ncomp)
        i0 = np.empty(d, np.int64)
        fr = np.empty(d)
        for k in range(d):
            z[k] = X[i, k]
        _interp_point(z, vals, L, h, N, d, tmp, i0, fr)
        for c in range(ncomp):
            out[i, c] = tmp[c]
    return out


def deposit(positions: np.ndarray, grid: GridSpec) -> np.ndarray:
    """Cloud-in-cell density of the empirical measure (integrates to 1)."""
    x = wrap(np.asarray(positions, dtype=float).reshape(-1, grid.d), grid)
    n = x.shape[0]
    u = (x + grid.L) / grid.h
    base = np.floor(u).astype(np.int64)
    fr = u - base
    rho = np.zeros(grid.N**grid.d)
    for corner in range(1 << grid.d):
        w = np.ones(n)
        flat = np.zeros(n, dtype=np.int64)
        for k in range(grid.d):
            bit = (corner >> (grid.d - 1 - k)) & 1
            w *= fr[:, k] if bit else 1.0 - fr[:, k]
            flat = flat * grid.N + (base[:, k] + bit) % grid.N
        rho += np.bincount(flat, weights=w, minlength=rho.size)
    return rho.reshape(grid.shape) / (n * grid.cell_volume)


def _set_threads() -> None:
    raw = os.environ.get("MKV_THREADS", "").strip()
    if raw.isdigit() and int(raw) > 0:
        numba.set_num_threads(min(int(raw), numba.config.NUMBA_NUM_THREADS))


class EmpiricalDrift:
    """``(1/n) sum_j b(x_i - x_j)`` from a gridded kernel."""

    def __init__(self, b: VectorField, method: str = "auto", direct_max: int = DIRECT_MAX):
        self.grid = b.grid
        self.b = b
        self.flat = np.ascontiguousarray(b.values.reshape(b.grid.d, -1))
        self.b_hat = b.grid.fourier(b.values)
        self.method = method
        self.direct_max = direct_max
        self.zero = not np.any(b.values)

    def resolve(self, n: int) -> str:
        if self.method != "auto":
            return self.method
        return "direct" if n <= self.direct_max else "grid"

    def __call__(self, X: np.ndarray) -> np.ndarray:
        g = self.grid
        if self.zero:
            return np.zeros_like(X)
        if self.resolve(X.shape[0]) == "direct":
            X = np.ascontiguousarray(X)
            if g.d == 1:
                return _direct_drift_1d(np.ascontiguousarray(X[:, 0]), self.flat, g.L, g.h, g.N)
            if g.d == 2:
                return _direct_drift_2d(X, self.flat, g.L, g.h, g.N)
            return _direct_drift(X, self.flat, g.L, g.h, g.N)
        rho = deposit(X, g)
        field_vals = g.inverse(self.b_hat * g.fourier(rho)).reshape(g.d, -1)
        return _gather(wrap(X, g), np.ascontiguousarray(field_vals), g.L, g.h, g.N)


def auto_bandwidth(positions: np.ndarray, grid: GridSpec) -> float:
    """Silverman-type rule ``(4/(d+2))^{1/(d+4)} sigma n^{-1/(d+4)}``, at least one cell."""
    x = np.asarray(positions).reshape(-1, grid.d)
    n, d = x.shape
    sigma = float(np.mean(np.std(x, axis=0, ddof=1)))
    bw = (4.0 / (d + 2.0)) ** (1.0 / (d + 4.0)) * sigma * n ** (-1.0 / (d + 4.0))
    return max(bw, grid.h)


def empirical_density(positions: np.ndarray, bandwidth: float, grid: GridSpec) -> ScalarField:
    """Gaussian kernel density estimate, binned to the grid and smoothed spectrally."""
    if bandwidth < grid.h * (1 - 1e-12):
        raise ParticleError(f"bandwidth {bandwidth:g} is below the grid spacing {grid.h:g}")
    rho = deposit(positions, grid)
    return ScalarField(grid, grid.inverse(grid.fourier(rho) * gaussian_multiplier(grid, bandwidth)))


def simulate(cfg: ParticleConfig, initial: np.ndarray | None = None, increments: np.ndarray | None = None,
             method: str = "auto") -> ParticleRun:
    """Run the particle system; ``initial`` (n, d) and ``increments`` (steps, n, d) override the seeded draws."""
    _set_threads()
    g = cfg.grid
    n, steps = cfg.n_particles, cfg.steps
    b, _ = build_kernel(cfg.kernel, g)
    drift = EmpiricalDrift(b, method)
    if initial is None:
        X = sample_initial(cfg.mu0, n, child_rng(cfg.seed, "initial"))
    else:
        X = np.array(initial, dtype=float).reshape(n, g.d)
    if increments is not None:
        increments = np.asarray(increments, dtype=float)
        if increments.shape != (steps, n, g.d):
            raise ParticleError(f"increments must have shape {(steps, n, g.d)}, got {increments.shape}")
    inc_rng = child_rng(cfg.seed, "increments")
    snap_steps = set(np.round(np.linspace(0, steps, cfg.snapshots + 1)[1:]).astype(int).tolist())
    run = ParticleRun(method=drift.resolve(n))
    # unwrapped copy tracks the centre of mass across periodic wraps
    U = X.copy()
    for k in range(1, steps + 1):
        dW = increments[k - 1] if increments is not None else sample_increments(cfg.noise, cfg.dt, n, inc_rng)
        step = cfg.dt * drift(X) + dW
        U += step
        X = wrap(X + step, g)
        if k in snap_steps:
            run.times.append(cfg.t_start + k * cfg.dt)
            run.positions.append(X.copy())
            run.center_of_mass.append(U.mean(axis=0))
    bw = cfg.kde_bandwidth if cfg.kde_bandwidth is not None else auto_bandwidth(run.positions[-1], g)
    run.bandwidth = bw
    run.densities = [empirical_density(p, bw, g) for p in run.positions]
    return run


def increments_for(cfg: ParticleConfig) -> np.ndarray:
    """The seeded increment stream of ``simulate`` as one array (steps, n, d)."""
    rng = child_rng(cfg.seed, "increments")
    return np.stack([sample_increments(cfg.noise, cfg.dt, cfg.n_particles, rng) for _ in range(cfg.steps)])


def compare_to_pde(particle: ScalarField, pde: ScalarField) -> dict[str, float]:
    """Grid L1 and sup distances between two densities."""
    particle.grid.check_same(pde.grid)
    diff = particle - pde
    return {"l1": diff.norm(1.0), "sup": diff.norm(math.inf)}
