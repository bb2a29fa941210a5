"""Mild solutions of the mollified nonlinear Fokker-Planck equation.

The density solves

    rho(s) = p_{s-t} * mu - int_t^s grad p_{s-v} * (B_rho(v) rho(v)) dv,   B_rho = b * rho,

which in Fourier variables reads ``rho^(s) = e^{-(s-t) psi} mu^ - int_t^s e^{-(s-v) psi} H^(v) dv``
with ``H = div(B_rho rho)``.  The time integral is a product integration: on
each mesh interval ``H`` is linear in ``v`` and the exponential is integrated
exactly, so the kernel singularity ``(s-v)^{-a}`` of ``grad p`` is absorbed
into closed-form weights.  The Picard map is iterated over the whole time
mesh; when it fails to contract, the horizon is split and marched.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .besov import BesovIndex, ThermicQuadrature, thermic_norm
from .criteria import ConditionReport, LebesgueBesovIndices, conjugate, evaluate_conditions
from .grid import GridError, GridSpec, ScalarField, VectorField
from .kernels import KernelSpec, build_kernel
from .stable_noise import StableParams, symbol_on_grid

log = logging.getLogger(__name__)


class SolverError(RuntimeError):
    pass


class _Stuck(Exception):
    def __init__(self, time: float):
        super().__init__(time)
        self.time = float(time)


class ConditionsFailed(SolverError):
    pass


class NumericalFailure(SolverError):
    def __init__(self, message: str, stamp: float | None = None):
        super().__init__(message)
        self.stamp = stamp


def default_indices(kernel: KernelSpec, d: int, alpha: float, eta: float = 0.01) -> LebesgueBesovIndices:
    """Kernel-space indices used when none are supplied (bounded initial density)."""
    if kernel.kind == "burgers":
        return LebesgueBesovIndices(d=d, alpha=alpha, beta=0.0, p=1.0, p0=math.inf, eta=eta)
    if kernel.divergence_form:
        return LebesgueBesovIndices(d=d, alpha=alpha, beta=-1.0, p=d / (d - 1.0), p0=math.inf, eta=eta,
                                    has_div_bound=True)
    return LebesgueBesovIndices(d=d, alpha=alpha, beta=0.0, p=math.inf, p0=math.inf, eta=eta)


@dataclass
class SolverConfig:
    mu0: ScalarField
    noise: StableParams
    kernel: KernelSpec
    indices: LebesgueBesovIndices | None = None
    t_start: float = 0.0
    S: float = 0.5
    M: int = 64
    grading: float = 1.0
    picard_tol: float = 1e-8
    picard_max: int = 60
    blowup_threshold: float | None = None
    mass_tol: float = 0.01
    vartheta: float = 0.9
    relax: float = 0.5
    defect_nodes: int = 24
    defect_stamps: int = 32
    track_iterates: bool = True
    max_bisections: int = 0
    force: bool = False

    def __post_init__(self):
        if not self.t_start < self.S:
            raise ValueError(f"need t_start < S, got {self.t_start} >= {self.S}")
        if self.M < 8:
            raise ValueError(f"time mesh needs M >= 8 intervals, got {self.M}")
        if not self.grading >= 1:
            raise ValueError(f"grading exponent must be >= 1, got {self.grading}")
        if not (self.picard_tol > 0 and self.picard_max >= 1):
            raise ValueError("picard_tol must be positive and picard_max >= 1")
        if not 0 < self.vartheta < 1:
            raise ValueError(f"vartheta must lie in (0, 1), got {self.vartheta}")
        if not 0 < self.relax <= 1:
            raise ValueError(f"relaxation factor must lie in (0, 1], got {self.relax}")
        vals = self.mu0.values
        if not np.all(np.isfinite(vals)):
            raise ValueError("initial density has non-finite values")
        if vals.min() < -1e-12:
            raise ValueError("initial density has negative values")
        mass = self.mu0.integral()
        if abs(mass - 1.0) > 1e-6:
            raise ValueError(f"initial density must have unit mass, got {mass:.10g}")
        if self.noise.d != self.mu0.grid.d:
            raise GridError(f"noise dimension {self.noise.d} does not match grid dimension {self.mu0.grid.d}")
        if self.kernel.field is not None:
            self.mu0.grid.check_same(self.kernel.field.grid)
        if self.indices is None:
            self.indices = default_indices(self.kernel, self.mu0.grid.d, self.noise.alpha)

    @property
    def grid(self) -> GridSpec:
        return self.mu0.grid

    def mesh(self) -> np.ndarray:
        k = np.arange(self.M + 1) / self.M
        return self.t_start + (self.S - self.t_start) * k**self.grading

    def threshold(self) -> float:
        if self.blowup_threshold is not None:
            return self.blowup_threshold
        return 1e3 * float(self.mu0.values.max())


@dataclass
class StampDiagnostics:
    s: float
    mass: float
    min_value: float
    weighted_norm: float
    picard_iters: int
    drift_sup: float


@dataclass
class Trajectory:
    t_start: float
    initial: ScalarField
    stamps: list[float] = field(default_factory=list)
    densities: list[ScalarField] = field(default_factory=list)
    diagnostics: list[StampDiagnostics] = field(default_factory=list)
    status: str = "converged"
    blowup_time: float | None = None
    message: str = ""
    defects: list[float] = field(default_factory=list)
    iterate_norms: list[float] = field(default_factory=list)
    residual: list[float] = field(default_factory=list)
    windows: list[tuple[float, float]] = field(default_factory=list)
    report: ConditionReport | None = None
    theta: float = 0.0
    space: BesovIndex | None = None
    drift_sups: list[float] = field(default_factory=list)

    @property
    def converged(self) -> bool:
        return self.status == "converged"

    def at(self, s: float) -> ScalarField:
        i = int(np.argmin(np.abs(np.asarray(self.stamps) - s)))
        return self.densities[i]


# --- product-integration weights ----------------------------------------------

def _phi1(z: np.ndarray) -> np.ndarray:
    """``(1 - e^{-z}) / z``."""
    out = np.ones_like(z)
    nz = z > 1e-12
    out[nz] = -np.expm1(-z[nz]) / z[nz]
    return out


def _phi2(z: np.ndarray) -> np.ndarray:
    """``int_0^1 u e^{-z u} du = (1 - e^{-z}(1 + z)) / z^2``; series for small ``z``."""
    out = np.empty_like(z)
    small = z < 1e-3
    zs = z[small]
    out[small] = 0.5 - zs / 3.0 + zs**2 / 8.0 - zs**3 / 30.0
    zl = z[~small]
    out[~small] = (-np.expm1(-zl) - zl * np.exp(-zl)) / zl**2
    return out


class MildSolver:
    """Picard iteration for the Duhamel formula on a fixed time mesh."""

    def __init__(self, cfg: SolverConfig):
        self.cfg = cfg
        g = cfg.grid
        self.grid = g
        self.psi = symbol_on_grid(cfg.noise, g)
        b, divb = build_kernel(cfg.kernel, g)
        self.b = b
        self.b_hat = g.fourier(b.values)
        self.divb_hat = g.fourier(divb.values)
        self.ik = [1j * k for k in g.deriv_freqs]
        self.divergence_form = cfg.kernel.divergence_form
        self.report = evaluate_conditions(cfg.indices)
        rep = self.report
        self.theta = max(rep.theta, 0.0)
        beta = cfg.indices.beta
        self.space = BesovIndex(-beta + cfg.vartheta * max(rep.Gamma, 0.0), conjugate(cfg.indices.p), 1.0)
        self.quad = ThermicQuadrature(nodes=max(8, cfg.defect_nodes))
        self.nodes = cfg.mesh()
        self.mu_hat = g.fourier(cfg.mu0.values)

    # -- nonlinear term ---------------------------------------------------------
    def drift(self, rho_hat: np.ndarray) -> np.ndarray:
        return self.grid.inverse(self.b_hat * rho_hat)

    def flux_hat(self, rho_hat: np.ndarray) -> np.ndarray:
        """Fourier transform of ``div(B_rho rho)``."""
        g = self.grid
        rho = g.inverse(rho_hat)
        B = g.inverse(self.b_hat * rho_hat)
        if self.divergence_form:
            # (div b * rho) rho + (b * rho) . grad rho
            D = g.inverse(self.divb_hat * rho_hat)
            grad = [g.inverse(ik * rho_hat) for ik in self.ik]
            return g.fourier(D * rho + sum(B[i] * grad[i] for i in range(g.d)))
        F = g.fourier(B * rho)
        return sum(ik * F[i] for i, ik in enumerate(self.ik))

    # -- one Picard sweep ---------------------------------------------------------
    def sweep(self, nodes: np.ndarray, rho_hats: Sequence[np.ndarray], mu_hat: np.ndarray) -> list[np.ndarray]:
        """Apply the Duhamel map to ``rho_hats`` given on ``nodes`` (``rho_hats[0]`` is the start)."""
        H = [self.flux_hat(r) for r in rho_hats]
        out = [mu_hat]
        free = mu_hat
        J = np.zeros_like(mu_hat)
        for i in range(1, len(nodes)):
            dt = nodes[i] - nodes[i - 1]
            z = dt * self.psi
            E = np.exp(-z)
            p1, p2 = _phi1(z), _phi2(z)
            J = E * J + dt * ((p1 - p2) * H[i] + p2 * H[i - 1])
            free = E * free
            new = free - J
            if not np.all(np.isfinite(new)):
                raise NumericalFailure(f"non-finite density at s={nodes[i]:.6g}", float(nodes[i]))
            out.append(new)
        return out

    def free_evolution(self, nodes: np.ndarray, mu_hat: np.ndarray) -> list[np.ndarray]:
        out = [mu_hat]
        for i in range(1, len(nodes)):
            out.append(np.exp(-(nodes[i] - nodes[i - 1]) * self.psi) * out[-1])
        return out

    def _weighted(self, s: float, values: np.ndarray) -> float:
        w = (s - self.cfg.t_start) ** self.theta
        return w * thermic_norm(ScalarField(self.grid, values), self.space, self.quad).value

    def _check_stamps(self, n: int) -> np.ndarray:
        k = min(n, self.cfg.defect_stamps)
        return np.unique(np.round(np.linspace(1, n, k)).astype(int))

    def defect(self, nodes, new, old, idx) -> float:
        return max(self._weighted(nodes[i], self.grid.inverse(new[i] - old[i])) for i in idx)

    def iterate_norm(self, nodes, rho_hats, idx) -> float:
        return max(self._weighted(nodes[i], self.grid.inverse(rho_hats[i])) for i in idx)

    # -- Picard on one window -----------------------------------------------------
    def picard(self, nodes: np.ndarray, mu_hat: np.ndarray, track: bool = False):
        cfg = self.cfg
        idx = self._check_stamps(len(nodes) - 1)
        rho = self.free_evolution(nodes, mu_hat)
        defects: list[float] = []
        norms: list[float] = []
        relax = 1.0
        for it in range(1, cfg.picard_max + 1):
            new = self.sweep(nodes, rho, mu_hat)
            if relax < 1.0:
                new = [o + relax * (n - o) for n, o in zip(new, rho)]
            dfc = self.defect(nodes, new, rho, idx)
            defects.append(dfc)
            rho = new
            if track:
                norms.append(self.iterate_norm(nodes, rho, idx))
            if not math.isfinite(dfc):
                return None, it, defects, norms
            if dfc < cfg.picard_tol:
                return rho, it, defects, norms
            if len(defects) >= 2 and dfc > defects[-2]:
                if relax == 1.0:
                    relax = cfg.relax
                    log.debug("defect rose (%.3g -> %.3g): relaxing", defects[-2], dfc)
                elif len(defects) >= 4 and dfc > 10.0 * min(defects):
                    return None, it, defects, norms
            if self._exploded(rho):
                return None, it, defects, norms
        return None, cfg.picard_max, defects, norms

    def bisect(self, a: float, b: float, mu_hat: np.ndarray, depth: int) -> tuple[np.ndarray, int]:
        """March a single mesh interval by repeated halving; returns the density at ``b``."""
        rho, iters, _, _ = self.picard(np.array([a, b]), mu_hat)
        if rho is not None:
            return rho[-1], iters
        if depth >= self.cfg.max_bisections:
            raise _Stuck(a)
        m = 0.5 * (a + b)
        mid, i1 = self.bisect(a, m, mu_hat, depth + 1)
        end, i2 = self.bisect(m, b, mid, depth + 1)
        return end, i1 + i2

    def _exploded(self, rho_hats) -> bool:
        # an iterate far beyond the blowup threshold cannot be a contraction
        top = max(float(np.max(np.abs(self.grid.inverse(r)))) for r in rho_hats[-1:])
        return top > 1e3 * self.cfg.threshold()

    # -- driver ---------------------------------------------------------------------
    def solve(self) -> Trajectory:
        cfg = self.cfg
        rep = self.report
        if not rep.well_posed and not cfg.force:
            why = "; ".join(rep.reasons) or "neither (C1) nor (C2) holds"
            raise ConditionsFailed(f"well-posedness conditions fail ({why}); use force to run anyway")
        traj = Trajectory(cfg.t_start, cfg.mu0, report=rep, theta=self.theta, space=self.space)
        nodes = self.nodes
        threshold = cfg.threshold()
        results: dict[int, tuple[np.ndarray, int]] = {}

        def run(i0: int, i1: int, mu_hat: np.ndarray) -> bool:
            """Solve nodes[i0..i1]; False once blowup has been recorded."""
            track = cfg.track_iterates and i0 == 0 and i1 == len(nodes) - 1
            rho, iters, defects, norms = self.picard(nodes[i0:i1 + 1], mu_hat, track)
            if rho is None:
                if i1 - i0 <= 1:
                    try:
                        end, iters = self.bisect(nodes[i0], nodes[i1], mu_hat, 0)
                    except _Stuck as stuck:
                        traj.status = "blowup"
                        traj.blowup_time = stuck.time
                        traj.message = (f"Picard iteration cannot be continued past s={stuck.time:.6g} "
                                        f"on the finest sub-horizon")
                        return False
                    rho, defects, norms = [mu_hat, end], [], []
                    return record(i0, i1, rho, iters)
                mid = (i0 + i1) // 2
                if not run(i0, mid, mu_hat):
                    return False
                return run(mid, i1, results[mid][0])
            if i0 == 0:
                traj.defects = defects
                traj.iterate_norms = norms
            return record(i0, i1, rho, iters)

        def record(i0: int, i1: int, rho: list, iters: int) -> bool:
            traj.windows.append((float(nodes[i0]), float(nodes[i1])))
            for j in range(1, len(rho)):
                results[i0 + j] = (rho[j], iters)
                vals = self.grid.inverse(rho[j])
                mass = float(self.grid.integrate(vals))
                if vals.max() > threshold or abs(mass - 1.0) > cfg.mass_tol:
                    traj.status = "blowup"
                    traj.blowup_time = float(nodes[i0 + j])
                    traj.message = (f"density max {vals.max():.4g} (threshold {threshold:.4g}), "
                                    f"mass {mass:.6g} at s={nodes[i0 + j]:.6g}")
                    for extra in range(i0 + j + 1, i1 + 1):
                        results.pop(extra, None)
                    return False
            return True

        try:
            run(0, len(nodes) - 1, self.mu_hat)
        except NumericalFailure as exc:
            traj.status = "failed"
            traj.message = str(exc)
            traj.blowup_time = exc.stamp
        for i in sorted(results):
            rho_hat, iters = results[i]
            s = float(nodes[i])
            vals = self.grid.inverse(rho_hat)
            drift_sup = float(np.max(np.sqrt(np.sum(self.drift(rho_hat) ** 2, axis=0))))
            traj.stamps.append(s)
            traj.densities.append(ScalarField(self.grid, vals))
            traj.diagnostics.append(StampDiagnostics(
                s=s, mass=float(self.grid.integrate(vals)), min_value=float(vals.min()),
                weighted_norm=self._weighted(s, vals), picard_iters=iters, drift_sup=drift_sup))
        traj.drift_sups = [float(np.max(np.sqrt(np.sum(self.drift(self.mu_hat) ** 2, axis=0))))] + [
            d.drift_sup for d in traj.diagnostics]
        if traj.status == "converged" and traj.stamps:
            traj.residual = self.residual(traj)
        return traj

    def residual(self, traj: Trajectory) -> list[float]:
        """Weighted distance between the trajectory and its Duhamel image, per stamp."""
        nodes = np.concatenate([[traj.t_start], traj.stamps])
        rho = [self.mu_hat] + [self.grid.fourier(r.values) for r in traj.densities]
        img = self.sweep(nodes, rho, self.mu_hat)
        return [self._weighted(nodes[i], self.grid.inverse(img[i] - rho[i])) for i in range(1, len(nodes))]


# --- public operations -----------------------------------------------------------

def drift_field(b: VectorField, rho: ScalarField) -> VectorField:
    """``B_rho = b * rho`` by spectral convolution, componentwise."""
    b.grid.check_same(rho.grid)
    g = b.grid
    return VectorField(g, g.inverse(g.fourier(b.values) * g.fourier(rho.values)))


def solve_mild(cfg: SolverConfig) -> Trajectory:
    return MildSolver(cfg).solve()


def duhamel_step(rho_prev: Trajectory, cfg: SolverConfig) -> Trajectory:
    """One application of the Duhamel map to a trajectory on ``cfg``'s mesh."""
    solver = MildSolver(cfg)
    nodes = solver.nodes
    if len(rho_prev.stamps) != len(nodes) - 1 or not np.allclose(rho_prev.stamps, nodes[1:]):
        raise ValueError("trajectory is not defined on the configuration's time mesh")
    rho = [solver.mu_hat] + [solver.grid.fourier(r.values) for r in rho_prev.densities]
    img = solver.sweep(nodes, rho, solver.mu_hat)
    out = Trajectory(cfg.t_start, cfg.mu0, theta=solver.theta, space=solver.space, report=solver.report,
                     status="step")
    for i in range(1, len(nodes)):
        out.stamps.append(float(nodes[i]))
        out.densities.append(ScalarField(solver.grid, solver.grid.inverse(img[i])))
    return out


def free_trajectory(cfg: SolverConfig) -> Trajectory:
    """Zero-drift evolution ``p_{s-t} * mu`` on the mesh (the first Picard iterate)."""
    solver = MildSolver(cfg)
    img = solver.free_evolution(solver.nodes, solver.mu_hat)
    out = Trajectory(cfg.t_start, cfg.mu0, theta=solver.theta, space=solver.space, status="step")
    for i in range(1, len(solver.nodes)):
        out.stamps.append(float(solver.nodes[i]))
        out.densities.append(ScalarField(solver.grid, solver.grid.inverse(img[i])))
    return out


def weighted_distance(a: Trajectory, b: Trajectory, space: BesovIndex, theta: float,
                      quad: ThermicQuadrature | None = None) -> float:
    """``max_s (s-t)^theta |rho_a(s) - rho_b(s)|`` over common stamps."""
    quad = quad or ThermicQuadrature(nodes=24)
    common = _common(a, b)
    return max(((s - a.t_start) ** theta
                * thermic_norm(a.densities[i] - b.densities[j], space, quad).value) for s, i, j in common)


def l1_distance(a: Trajectory, b: Trajectory) -> float:
    return max((a.densities[i] - b.densities[j]).norm(1.0) for _, i, j in _common(a, b))


def _common(a: Trajectory, b: Trajectory):
    bi = {round(s, 12): j for j, s in enumerate(b.stamps)}
    out = [(s, i, bi[round(s, 12)]) for i, s in enumerate(a.stamps) if round(s, 12) in bi]
    if not out:
        raise ValueError("trajectories share no time stamps")
    return out


@dataclass
class StabilityRow:
    eps_i: float
    eps_j: float
    weighted: float
    l1: float
    failed: bool = False


def epsilon_stability(cfg: SolverConfig, eps_list: Sequence[float]) -> list[StabilityRow]:
    """Pairwise distances between solutions for decreasing mollification scales."""
    eps_list = list(eps_list)
    if len(eps_list) < 3 or any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise ValueError("eps_list must be strictly decreasing with at least 3 entries")
    trajs: list[Trajectory | None] = []
    for eps in eps_list:
        try:
            tr = solve_mild(replace(cfg, kernel=replace(cfg.kernel, epsilon=eps)))
            trajs.append(tr if tr.converged else None)
        except SolverError:
            trajs.append(None)
    ref = next((t for t in trajs if t is not None), None)
    rows = []
    for i in range(len(eps_list)):
        for j in range(i + 1, len(eps_list)):
            a, b = trajs[i], trajs[j]
            if a is None or b is None:
                rows.append(StabilityRow(eps_list[i], eps_list[j], math.nan, math.nan, failed=True))
                continue
            rows.append(StabilityRow(eps_list[i], eps_list[j],
                                     weighted_distance(a, b, ref.space, ref.theta), l1_distance(a, b)))
    return rows


def drift_power_integral(traj: Trajectory, r0: float) -> float:
    """Trapezoid value of ``int_t^S |B_rho(s)|_inf^{r0} ds`` over the trajectory's mesh."""
    if not r0 > 0:
        raise ValueError(f"r0 must be positive, got {r0}")
    s = np.concatenate([[traj.t_start], traj.stamps])
    vals = np.asarray(traj.drift_sups, dtype=float) ** r0
    return float(np.trapezoid(vals, s))
