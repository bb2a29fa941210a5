import math
from dataclasses import replace

import numpy as np
import pytest

from conftest import burgers_config, gaussian_density
from mkv.criteria import LebesgueBesovIndices
from mkv.fokker_planck import (
    ConditionsFailed,
    NumericalFailure,
    SolverConfig,
    Trajectory,
    drift_field,
    drift_power_integral,
    duhamel_step,
    epsilon_stability,
    free_trajectory,
    l1_distance,
    solve_mild,
)
from mkv.grid import GridError, GridSpec, ScalarField, VectorField
from mkv.kernels import KernelSpec, build_kernel, cole_hopf_reference
from mkv.stable_noise import StableParams, stable_density

G1 = GridSpec(1, 8.0, 256)


def test_drift_field_identities():
    g = GridSpec(1, 8.0, 512)
    b, _ = build_kernel(KernelSpec("burgers", epsilon=0.2), g)
    delta = np.zeros(g.shape)
    delta[g.N // 2] = 1.0 / g.h  # grid point x = 0
    B = drift_field(b, ScalarField(g, delta))
    assert np.abs(B.values - b.values).max() < 1e-12 * np.abs(b.values).max()
    zero = VectorField(g, np.zeros((1,) + g.shape))
    assert np.all(drift_field(zero, ScalarField(g, delta)).values == 0)
    with pytest.raises(GridError):
        drift_field(b, gaussian_density(G1))


def _zero_config(mu, S=0.5, alpha=1.5):
    return SolverConfig(mu0=mu, noise=StableParams(alpha, mu.grid.d), kernel=KernelSpec("zero"), S=S, M=16)


def test_zero_drift_reproduces_semigroup():
    P = StableParams(1.5, 1)
    mu = stable_density(P, 1.0, G1)
    cfg = _zero_config(mu)
    traj = solve_mild(cfg)
    assert traj.converged
    assert all(d.picard_iters <= 2 for d in traj.diagnostics)
    for s, rho in zip(traj.stamps, traj.densities):
        assert np.abs(rho.values - stable_density(P, 1.0 + s, G1).values).max() < 1e-6


def test_duhamel_step_zero_drift_is_fixed_point():
    mu = gaussian_density(G1, 0.7)
    cfg = _zero_config(mu)
    free = free_trajectory(cfg)
    step = duhamel_step(free, cfg)
    assert step.status == "step"
    assert max(np.abs(a.values - b.values).max() for a, b in zip(step.densities, free.densities)) < 1e-14


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_duhamel_step_checks_mesh_and_finiteness():
    mu = gaussian_density(G1, 0.7)
    cfg = _zero_config(mu)
    free = free_trajectory(cfg)
    with pytest.raises(ValueError):
        duhamel_step(Trajectory(0.0, mu, stamps=free.stamps[:3], densities=free.densities[:3]), cfg)
    bcfg = replace(cfg, kernel=KernelSpec("custom", field=VectorField(G1, np.ones((1,) + G1.shape))))
    bad = [ScalarField(G1, d.values.copy()) for d in free.densities]
    bad[4].values[10] = np.inf
    with pytest.raises(NumericalFailure) as err:
        duhamel_step(Trajectory(0.0, mu, stamps=free.stamps, densities=bad), bcfg)
    assert err.value.stamp == pytest.approx(free.stamps[4])


def test_burgers_against_cole_hopf(burgers_run):
    cfg, traj = burgers_run
    assert traj.converged
    ref = cole_hopf_reference(cfg.mu0, 0.5)
    assert (traj.at(0.5) - ref).norm(1.0) < 1e-3


def test_mass_conservation_and_duhamel_consistency(burgers_run):
    cfg, traj = burgers_run
    assert all(abs(d.mass - 1.0) < 1e-3 for d in traj.diagnostics)
    assert max(traj.residual) < cfg.picard_tol


def test_gronwall_ceiling(burgers_run):
    _, traj = burgers_run
    norms = np.asarray(traj.iterate_norms)
    assert np.all(norms <= 2.0 * norms[-1])


def test_drift_power_integral_in_window(burgers_run):
    _, traj = burgers_run
    lo, hi = traj.report.r0_window
    val = drift_power_integral(traj, 0.5 * (lo + hi))
    assert math.isfinite(val) and val > 0
    with pytest.raises(ValueError):
        drift_power_integral(traj, 0.0)


def test_refuses_when_conditions_fail():
    g = GridSpec(2, 4.0, 64)
    mu = gaussian_density(g, 0.5)
    bad = LebesgueBesovIndices(d=2, alpha=2.0, beta=-1.0, p=2.0, p0=1.0, has_div_bound=True)
    cfg = SolverConfig(mu0=mu, noise=StableParams(2.0, 2), kernel=KernelSpec("keller_segel", R=2.0),
                       indices=bad, S=0.05, M=8, defect_stamps=4, defect_nodes=8)
    with pytest.raises(ConditionsFailed):
        solve_mild(cfg)
    traj = solve_mild(replace(cfg, force=True))
    assert traj.converged


def test_keller_segel_small_chi_bounded():
    g = GridSpec(2, 4.0, 64)
    mu = gaussian_density(g, 0.5)
    cfg = SolverConfig(mu0=mu, noise=StableParams(2.0, 2), kernel=KernelSpec("keller_segel", R=2.0, chi=1.0),
                       S=0.2, M=32, defect_stamps=8, defect_nodes=16)
    traj = solve_mild(cfg)
    assert traj.converged
    assert max(float(r.values.max()) for r in traj.densities) < 2 * float(mu.values.max())


def test_blowup_threshold_reports_first_time():
    ref = solve_mild(burgers_config(N=256, M=16))
    peaks = [float(r.values.max()) for r in ref.densities]
    thr = 0.5 * (min(peaks) + max(peaks))
    first = next(s for s, p in zip(ref.stamps, peaks) if p > thr)
    traj = solve_mild(burgers_config(N=256, M=16, blowup_threshold=thr))
    assert traj.status == "blowup"
    assert traj.blowup_time == pytest.approx(first)
    assert "threshold" in traj.message


def test_epsilon_stability_smooth_kernel():
    g = GridSpec(1, 8.0, 512)
    smooth = VectorField(g, (0.3 * np.sin(math.pi * g.axis / 8))[None])
    cfg = SolverConfig(mu0=gaussian_density(g), noise=StableParams(2.0, 1),
                       kernel=KernelSpec("custom", field=smooth), S=0.5, M=32)
    h = g.h
    rows = epsilon_stability(cfg, [4 * h, 3 * h, 2 * h])
    assert len(rows) == 3 and not any(r.failed for r in rows)
    assert max(r.l1 for r in rows) < 1e-4
    # mollifying a smooth field moves it by O(eps^2): distances scale like eps_i^2 - eps_j^2
    consts = [r.weighted / (r.eps_i**2 - r.eps_j**2) for r in rows]
    assert max(consts) / min(consts) < 1.02
    with pytest.raises(ValueError):
        epsilon_stability(cfg, [2 * h, 3 * h, 4 * h])


def test_config_validation():
    mu = gaussian_density(G1)
    with pytest.raises(ValueError):
        SolverConfig(mu0=mu * 2.0, noise=StableParams(2.0, 1), kernel=KernelSpec("burgers"))
    with pytest.raises(ValueError):
        SolverConfig(mu0=ScalarField(G1, np.full(G1.shape, np.nan)), noise=StableParams(2.0, 1),
                     kernel=KernelSpec("burgers"))
    with pytest.raises(GridError):
        SolverConfig(mu0=mu, noise=StableParams(2.0, 2), kernel=KernelSpec("burgers"))
    with pytest.raises(ValueError):
        SolverConfig(mu0=mu, noise=StableParams(2.0, 1), kernel=KernelSpec("burgers"), S=0.0)


def test_l1_distance_symmetric(burgers_run):
    cfg, traj = burgers_run
    free = free_trajectory(cfg)
    assert l1_distance(traj, free) == pytest.approx(l1_distance(free, traj))
    assert l1_distance(traj, traj) == 0.0
