"""Command line entry point: ``mkv <subcommand> --config <path> [options]``.

Exit codes: 0 success, 1 input or configuration error, 2 blowup or numerical
failure, 3 well-posedness conditions fail (``check --strict``, or a solver run
refused without ``--force``).
"""

from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from .besov import BesovIndex, thermic_norm
from .config import ConfigError, ExperimentConfig, parse_config
from .criteria import LebesgueBesovIndices, evaluate_conditions, model_thresholds
from .fokker_planck import ConditionsFailed, SolverConfig, default_indices, solve_mild
from .grid import GridError, GridSpec, ResolutionError, ScalarField, VectorField, read_field_csv, write_field_csv
from .kernels import KernelError, KernelSpec, build_kernel
from .particles import ParticleConfig, ParticleError, compare_to_pde, simulate
from .stable_noise import Atom, NoiseError, StableParams

EXIT_OK, EXIT_INPUT, EXIT_NUMERICAL, EXIT_CONDITIONS = 0, 1, 2, 3

_MODEL_NAMES = {"burgers": "burgers", "biot_savart": "vortex2d", "keller_segel": "kellersegel"}


class InputError(ValueError):
    pass


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


# --- building module objects from a configuration ----------------------------------

def grid_of(cfg: ExperimentConfig) -> GridSpec:
    g = cfg["grid"]
    return GridSpec(g["d"], g["L"], g["N"])


def noise_of(cfg: ExperimentConfig) -> StableParams:
    n, d = cfg["noise"], cfg["grid"]["d"]
    if n["measure"] == "cylindrical":
        return StableParams.cylindrical(n["alpha"], d, n["diffusivity"])
    if n["measure"] == "atoms":
        atoms = []
        for item in n["atoms"].split(";"):
            if not item.strip():
                continue
            try:
                direction, weight = item.split(":")
                atoms.append(Atom(tuple(float(x) for x in direction.split(",")), float(weight)))
            except ValueError:
                raise InputError(f"[noise] atoms: cannot read {item.strip()!r}; expected `z1,..,zd : w`") from None
        return StableParams(n["alpha"], d, "atoms", tuple(atoms), n["diffusivity"])
    return StableParams(n["alpha"], d, "isotropic", (), n["diffusivity"])


def kernel_of(cfg: ExperimentConfig, grid: GridSpec) -> KernelSpec:
    m = cfg["model"]
    fld = None
    if m["kind"] == "custom":
        fld = read_field_csv(cfg.resolve_path(m["field"]))
        if not isinstance(fld, VectorField):
            raise InputError("[model] field must be a vector field CSV (columns v1..vd)")
        grid.check_same(fld.grid)
    return KernelSpec(m["kind"], epsilon=m["epsilon"], R=m["R"], chi=m["chi"], field=fld)


def initial_of(cfg: ExperimentConfig, grid: GridSpec) -> ScalarField:
    i = cfg["initial"]
    if i["kind"] == "file":
        mu = read_field_csv(cfg.resolve_path(i["path"]))
        if not isinstance(mu, ScalarField):
            raise InputError("[initial] path must hold a scalar field")
        grid.check_same(mu.grid)
        mass = mu.integral()
        if mu.values.min() < -1e-12 or abs(mass - 1.0) > 1e-6:
            raise InputError(f"[initial] path is not a probability density (mass {mass:.10g})")
        return mu
    center = np.zeros(grid.d) if i["center"] is None else np.asarray(i["center"])
    r2 = sum((c - x0) ** 2 for c, x0 in zip(grid.coords, center))
    vals = np.exp(-0.5 * r2 / i["sigma"] ** 2)
    # normalize on the grid so the discrete mass is exactly one
    return ScalarField(grid, vals / grid.integrate(vals))


def indices_of(cfg: ExperimentConfig, kernel: KernelSpec) -> LebesgueBesovIndices:
    m, i = cfg["model"], cfg["initial"]
    d, alpha = cfg["grid"]["d"], cfg["noise"]["alpha"]
    if m["beta"] is None and m["p"] is None:
        base = default_indices(kernel, d, alpha, m["eta"])
        beta, p = base.beta, base.p
        div = base.has_div_bound
    elif m["beta"] is None or m["p"] is None:
        raise InputError("[model] beta and p must be given together")
    else:
        beta, p = m["beta"], m["p"]
        div = kernel.divergence_form
    if m["has_div_bound"] is not None:
        div = m["has_div_bound"]
    return LebesgueBesovIndices(d=d, alpha=alpha, beta=beta, p=p, q=m["q"], r=m["r"], beta0=i["beta0"],
                                p0=i["p0"], q0=i["q0"], eta=m["eta"], has_div_bound=div)


def solver_config_of(cfg: ExperimentConfig, force: bool = False) -> SolverConfig:
    grid = grid_of(cfg)
    kernel = kernel_of(cfg, grid)
    s = cfg["solver"]
    return SolverConfig(
        mu0=initial_of(cfg, grid), noise=noise_of(cfg), kernel=kernel, indices=indices_of(cfg, kernel),
        t_start=s["t_start"], S=s["t_start"] + s["horizon"], M=s["M"], grading=s["grading"],
        picard_tol=s["picard_tol"], picard_max=s["picard_max"], blowup_threshold=s["blowup_threshold"],
        vartheta=s["vartheta"], max_bisections=s["max_bisections"], force=force)


def particle_config_of(cfg: ExperimentConfig, seed: int | None = None) -> ParticleConfig:
    grid = grid_of(cfg)
    p, s = cfg["particles"], cfg["solver"]
    bw = None if p["bandwidth"] == "auto" else float(p["bandwidth"])
    return ParticleConfig(
        mu0=initial_of(cfg, grid), noise=noise_of(cfg), kernel=kernel_of(cfg, grid), n_particles=p["n"],
        dt=p["dt"], horizon=s["horizon"], seed=p["seed"] if seed is None else seed, kde_bandwidth=bw,
        snapshots=p["snapshots"], t_start=s["t_start"])


# --- subcommands -----------------------------------------------------------------------

def _out_dir(cfg: ExperimentConfig | None, args) -> Path:
    raw = args.out or (cfg["output"]["dir"] if cfg is not None else "mkv_out")
    out = Path(raw)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _require_config(args) -> ExperimentConfig:
    if not args.config:
        raise InputError(f"{args.command} needs --config <path>")
    cfg = parse_config(Path(args.config))
    for w in cfg.warnings:
        print(f"warning: {w}", file=sys.stderr)
    return cfg


def cmd_check(args) -> int:
    cfg = _require_config(args)
    kernel = KernelSpec(cfg["model"]["kind"], R=cfg["model"]["R"], chi=cfg["model"]["chi"],
                        field=None) if cfg["model"]["kind"] != "custom" else None
    if kernel is None:
        kernel = kernel_of(cfg, grid_of(cfg))
    rep = evaluate_conditions(indices_of(cfg, kernel))
    lines = rep.lines()
    name = _MODEL_NAMES.get(cfg["model"]["kind"])
    if name is not None:
        i = cfg["initial"]
        verdict = model_thresholds(name, cfg["noise"]["alpha"], cfg["grid"]["d"], i["beta0"], i["p0"])
        lines += [f"model: {name}", f"model_weak: {str(verdict.weak).lower()}",
                  f"model_strong: {str(verdict.strong).lower()}",
                  f"model_binding: {verdict.binding_inequality}"]
    text = "\n".join(lines) + "\n"
    sys.stdout.write(text)
    if args.out:
        (_out_dir(cfg, args) / "check.txt").write_text(text)
    if args.strict and not rep.well_posed:
        return EXIT_CONDITIONS
    return EXIT_OK


def _snapshot_indices(n_stamps: int, count: int) -> list[int]:
    if n_stamps == 0:
        return []
    picks = np.round(np.linspace(0, n_stamps - 1, min(count, n_stamps) + 1)[1:]).astype(int)
    return sorted(set(picks.tolist()) | {n_stamps - 1})


def cmd_fp_solve(args) -> int:
    cfg = _require_config(args)
    scfg = solver_config_of(cfg, force=args.force)
    try:
        traj = solve_mild(scfg)
    except ConditionsFailed as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONDITIONS
    out = _out_dir(cfg, args)
    rows = ["s,mass,min_value,weighted_norm,picard_iters,drift_sup"]
    for dg in traj.diagnostics:
        rows.append(",".join([_fmt(dg.s), _fmt(dg.mass), _fmt(dg.min_value), _fmt(dg.weighted_norm),
                              str(dg.picard_iters), _fmt(dg.drift_sup)]))
    (out / "diagnostics.csv").write_text("\n".join(rows) + "\n")
    snaps = ["index,s"]
    for k, i in enumerate(_snapshot_indices(len(traj.stamps), cfg["solver"]["snapshots"])):
        write_field_csv(out / f"density_{k:04d}.csv", traj.densities[i])
        snaps.append(f"{k},{_fmt(traj.stamps[i])}")
    (out / "snapshots.csv").write_text("\n".join(snaps) + "\n")
    summary = [f"status: {traj.status}", f"stamps: {len(traj.stamps)}",
               f"final_time: {_fmt(traj.stamps[-1]) if traj.stamps else 'none'}",
               f"blowup_time: {_fmt(traj.blowup_time) if traj.blowup_time is not None else 'none'}",
               f"theta: {_fmt(traj.theta)}", f"message: {traj.message or 'none'}"]
    (out / "summary.txt").write_text("\n".join(summary) + "\n")
    print(f"fp-solve: {traj.status}, {len(traj.stamps)} stamps"
          + (f", blowup at s={traj.blowup_time:.6g}" if traj.blowup_time is not None else "") + f" -> {out}")
    return EXIT_OK if traj.converged else EXIT_NUMERICAL


def _pde_density_at(pde_dir: Path, s: float) -> ScalarField:
    table = pde_dir / "snapshots.csv"
    if not table.is_file():
        raise InputError(f"{pde_dir} holds no fp-solve output (snapshots.csv missing)")
    rows = np.loadtxt(table, delimiter=",", skiprows=1, ndmin=2)
    k = int(np.argmin(np.abs(rows[:, 1] - s)))
    if abs(rows[k, 1] - s) > 1e-9 * max(1.0, abs(s)):
        raise InputError(f"{pde_dir} has no density at s={s:.6g} (nearest {rows[k, 1]:.6g})")
    fld = read_field_csv(pde_dir / f"density_{int(rows[k, 0]):04d}.csv")
    assert isinstance(fld, ScalarField)
    return fld


def cmd_particles(args) -> int:
    cfg = _require_config(args)
    pcfg = particle_config_of(cfg, args.seed)
    run = simulate(pcfg)
    out = _out_dir(cfg, args)
    d = pcfg.grid.d
    header = "id," + ",".join(f"x{i + 1}" for i in range(d))
    for k, (pos, rho) in enumerate(zip(run.positions, run.densities)):
        lines = [header] + [f"{j}," + ",".join(_fmt(x) for x in row) for j, row in enumerate(pos)]
        (out / f"positions_{k:04d}.csv").write_text("\n".join(lines) + "\n")
        write_field_csv(out / f"kde_{k:04d}.csv", rho)
    msg = f"particles: n={pcfg.n_particles}, {len(run.times)} snapshots, method {run.method}"
    if args.pde_dir:
        pde = _pde_density_at(Path(args.pde_dir), run.times[-1])
        cmp = compare_to_pde(run.densities[-1], pde)
        (out / "comparison.csv").write_text(f"s,l1,sup\n{_fmt(run.times[-1])},{_fmt(cmp['l1'])},{_fmt(cmp['sup'])}\n")
        msg += f", L1 to PDE {cmp['l1']:.4g}"
    print(msg + f" -> {out}")
    return EXIT_OK


def cmd_besov(args) -> int:
    if not args.field:
        raise InputError("besov needs --field <csv>")
    fld = read_field_csv(args.field)
    idx = BesovIndex(args.gamma, args.ell, args.m)
    res = thermic_norm(fld, idx)
    print("norm,gamma,ell,m,tail_estimate")
    print(",".join(_fmt(x) for x in (res.value, idx.gamma, idx.ell, idx.m, res.tail_estimate)))
    return EXIT_OK


def cmd_kernels(args) -> int:
    cfg = _require_config(args)
    grid = grid_of(cfg)
    b, div_b = build_kernel(kernel_of(cfg, grid), grid)
    out = _out_dir(cfg, args)
    write_field_csv(out / "b.csv", b)
    write_field_csv(out / "div_b.csv", div_b)
    print(f"kernels: {cfg['model']['kind']} on {grid.N}^{grid.d} grid, sup|b| = {b.sup_norm():.6g} -> {out}")
    return EXIT_OK


def cmd_compare(args) -> int:
    if not (args.a and args.b):
        raise InputError("compare needs --a <csv> and --b <csv>")
    fa, fb = read_field_csv(args.a), read_field_csv(args.b)
    if not (isinstance(fa, ScalarField) and isinstance(fb, ScalarField)):
        raise InputError("compare works on scalar density fields")
    cmp = compare_to_pde(fa, fb)
    print("l1,sup")
    print(f"{_fmt(cmp['l1'])},{_fmt(cmp['sup'])}")
    return EXIT_OK


COMMANDS = {"check": cmd_check, "fp-solve": cmd_fp_solve, "particles": cmd_particles,
            "besov": cmd_besov, "kernels": cmd_kernels, "compare": cmd_compare}


def _real(text: str) -> float:
    return math.inf if text.strip().lower() in ("inf", "infinity") else float(text)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mkv", description="McKean-Vlasov equations with stable noise.")
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--config")
    ap.add_argument("--out")
    ap.add_argument("--strict", action="store_true", help="check: exit 3 when the conditions fail")
    ap.add_argument("--force", action="store_true", help="fp-solve: run even when the conditions fail")
    ap.add_argument("--seed", type=int, help="particles: override [particles] seed")
    ap.add_argument("--pde-dir", help="particles: fp-solve output directory to compare against")
    ap.add_argument("--field", help="besov: field CSV")
    ap.add_argument("--gamma", type=float, default=0.0)
    ap.add_argument("--ell", type=_real, default=1.0)
    ap.add_argument("--m", type=_real, default=math.inf)
    ap.add_argument("--a", help="compare: first density CSV")
    ap.add_argument("--b", help="compare: second density CSV")
    return ap


def run(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except ResolutionError as exc:
        hint = f" (minimal N = {exc.minimal_n})" if exc.minimal_n else ""
        print(f"error: {exc}{hint}", file=sys.stderr)
        return EXIT_INPUT
    except (ConfigError, InputError, GridError, KernelError, NoiseError, ParticleError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
