"""Batch front end: JSON experiment configs in, CSV tables (and optional SVG) out.

Subcommands
-----------
run      full pipeline for one config: kernels, trajectory, identity checks
kernels  kernel samples for the configured scheme and projector
evolve   trajectory for one scheme (rotated runs include a theta column)
verify   selected identity checks, written to an identity-report CSV
compare  two schemes solved and diffed on the shared sigma0 component
fig1     canonical epsilon = 5/13, delta = 12/13 reproduction, end to end

Exit codes: 0 all requested checks pass, 1 numerical failure (report path on
stderr), 2 usage or config error (offending field path on stderr).
"""

from __future__ import annotations

import argparse
import importlib.resources
import os
import sys
from pathlib import Path

import numpy as np

from .config import (
    CHECK_NAMES,
    SCHEMES,
    ConfigError,
    ExperimentConfig,
    config_from_dict,
    load_config,
)
from .equivalence import (
    check_f_convolution_identity,
    check_formal_solution_agreement,
    check_kernel_relation_via_G,
    check_matrix_laplace_identity,
    compare_trajectories,
)
from .kernels import (
    KernelScheme,
    closed_form_tls_kernels,
    default_z_points,
    kernel_matrix,
)
from .solver import (
    build_problem_constraint,
    build_problem_pair_reduced,
    build_problem_rotated,
    build_problem_single,
    rotated_frame_for_system,
    solve_volterra,
)
from .svg import write_polyline_svg

_IMAG_NOISE = 1e-9


def _format_value(x: float) -> str:
    return f"{x:.17g}"


def _split_complex(names, arrays):
    """Demote numerically real complex columns; split genuinely complex ones."""
    out_names, out_cols = [], []
    for name, arr in zip(names, arrays):
        arr = np.asarray(arr)
        if np.iscomplexobj(arr):
            if arr.size and float(np.max(np.abs(arr.imag))) > _IMAG_NOISE:
                out_names += [f"{name}_re", f"{name}_im"]
                out_cols += [arr.real, arr.imag]
                continue
            arr = arr.real
        out_names.append(name)
        out_cols.append(arr)
    return out_names, out_cols


def write_csv(path: Path, names, arrays) -> None:
    names, cols = _split_complex(names, arrays)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(names) + "\n")
        for row in zip(*cols):
            fh.write(",".join(_format_value(x) for x in row) + "\n")


def write_report_csv(path: Path, reports) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("name,residual_max,residual_norm,grid_or_zset,pass\n")
        for rep in reports:
            fh.write(f"{rep.name},{_format_value(rep.residual_max)},"
                     f"{_format_value(rep.residual_norm)},\"{rep.grid_or_zset}\","
                     f"{str(rep.passed).lower()}\n")


def _maybe_svg(args, csv_path: Path, t, names, arrays) -> None:
    if not args.svg:
        return
    names, cols = _split_complex(names, arrays)
    write_polyline_svg(csv_path.with_suffix(".svg"), t, dict(zip(names, cols)))


def _out_dir(args) -> Path:
    out = args.out or os.environ.get("NZKL_OUT") or "nzkl_out"
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _load_config(args, default=None) -> ExperimentConfig:
    if args.config is None:
        if default is None:
            raise ConfigError("config: --config is required for this subcommand")
        config = default
    else:
        config = load_config(args.config)
    if args.dt is not None:
        if args.dt <= 0:
            raise ConfigError(f"grid.dt: must be positive, got {args.dt}")
        config.dt = args.dt
    if args.t_max is not None:
        if args.t_max < config.dt:
            raise ConfigError(f"grid.t_max: must be at least dt, got {args.t_max}")
        config.t_max = args.t_max
    if args.seed is not None:
        config.seed = args.seed
    return config


def _bundled_fig1_config() -> ExperimentConfig:
    import json
    text = importlib.resources.files("nzkl").joinpath("presets/fig1.json").read_text()
    return config_from_dict(json.loads(text))


def _pair_label(pair) -> str:
    return "".join(str(i) for i in pair)


def _scheme_kernels(config: ExperimentConfig, grid):
    """Kernel samples feeding the configured scheme."""
    scheme = config.scheme
    system = config.system()
    if scheme in ("constraint_constant", "constraint_oscillating"):
        if config.tls is None:
            raise ConfigError(f"scheme: {scheme!r} requires a tls model")
        rho0 = config.initial_density(system)
        energy = config.tls.energy_for(rho0)
        return closed_form_tls_kernels(
            config.tls, KernelScheme(scheme), grid, energy=energy)
    if scheme == "rotated":
        rho0 = config.initial_density(system)
        frame = rotated_frame_for_system(system, rho0)
        return build_problem_rotated(frame, rho0, grid).kernel
    return kernel_matrix(system, config.projector_spec(system), grid)


def _solve_scheme(config: ExperimentConfig, scheme: str, grid):
    """Trajectory for one scheme, plus named extra columns (theta for rotated)."""
    system = config.system()
    rho0 = config.initial_density(system)
    extras = {}
    if scheme == "projected_single":
        problem = build_problem_single(system, grid, rho0)
    elif scheme == "projected_pair":
        problem = build_problem_pair_reduced(system, grid, rho0)
    elif scheme in ("constraint_constant", "constraint_oscillating"):
        if config.tls is None:
            raise ConfigError(f"scheme: {scheme!r} requires a tls model")
        method = scheme.split("_", 1)[1]
        problem = build_problem_constraint(config.tls, method, grid, rho0=rho0)
    elif scheme == "rotated":
        frame = rotated_frame_for_system(system, rho0)
        problem = build_problem_rotated(frame, rho0, grid)
        extras["theta"] = problem.drive[0] / frame.normalization
    else:
        raise ConfigError(f"scheme: unknown scheme {scheme!r}; valid: {', '.join(SCHEMES)}")
    return solve_volterra(problem), extras


def _laplace_check_spec(config: ExperimentConfig, system):
    """Projector for the Laplace identities: configured set, else all populations.

    The identities relate the (0,0)-only projector to a larger one, so a
    bare (0,0) set would compare a matrix against itself.
    """
    if config.projector_pairs is not None:
        return config.projector_spec(system)
    return system.population_spec()


def _run_checks(config: ExperimentConfig, names, grid, tol_override):
    system = config.system()
    rho0 = config.initial_density(system)
    reports = []
    for name in names:
        tol = tol_override if tol_override is not None else config.tolerance_for(name)
        if name == "f_convolution":
            if system.system_dim != 2:
                raise ConfigError(
                    "checks: 'f_convolution' requires a two-level system part")
            reports.append(check_f_convolution_identity(system, grid, tol))
        elif name == "kernel_relation_g":
            if system.system_dim != 2:
                raise ConfigError(
                    "checks: 'kernel_relation_g' requires a two-level system part")
            K_pair = kernel_matrix(system, system.population_spec(), grid)
            K_single = kernel_matrix(system, system.projector_spec([(0, 0)]), grid)
            _, report = check_kernel_relation_via_G(K_pair, K_single, grid, tol)
            reports.append(report)
        elif name == "matrix_laplace":
            reports.append(check_matrix_laplace_identity(
                system, _laplace_check_spec(config, system), default_z_points(), tol))
        elif name == "laplace_solution":
            reports.append(check_formal_solution_agreement(
                system, _laplace_check_spec(config, system), default_z_points(), rho0, tol))
        elif name == "scheme_equivalence":
            if config.tls is None:
                raise ConfigError("checks: 'scheme_equivalence' requires a tls model")
            reports.append(_scheme_equivalence_report(config, grid, tol))
        else:
            raise ConfigError(
                f"checks: unknown check {name!r}; valid checks: {', '.join(CHECK_NAMES)}")
    return reports


def _scheme_equivalence_report(config: ExperimentConfig, grid, tol):
    from .equivalence import IdentityReport
    trajectories = {}
    for scheme in ("projected_single", "projected_pair",
                   "constraint_constant", "constraint_oscillating"):
        traj, _ = _solve_scheme(config, scheme, grid)
        trajectories[scheme] = traj.select(("sigma0",))
    names = list(trajectories)
    worst = 0.0
    for i, a in enumerate(names):
        for b in names[i + 1:]:
            rep = compare_trajectories(trajectories[a], trajectories[b], tol)
            worst = max(worst, rep.residual_max)
    desc = f"4 schemes pairwise, dt={grid.dt:g}, t_max={grid.t_max:g}"
    return IdentityReport(name="scheme_equivalence", residual_max=worst,
                          residual_norm=worst, grid_or_zset=desc, passed=worst <= tol)


def _emit_kernels(config, grid, out_dir, args) -> Path:
    samples = _scheme_kernels(config, grid)
    names, cols = ["t"], [grid.times]
    for i, pout in enumerate(samples.index_pairs):
        for j, pin in enumerate(samples.in_pairs):
            suffix = _pair_label(pout) + ("" if pin is None else "_" + _pair_label(pin))
            names.append(f"{samples.kind}_{suffix}")
            cols.append(samples.values[i, j])
    path = out_dir / "kernels.csv"
    write_csv(path, names, cols)
    _maybe_svg(args, path, grid.times, names[1:], cols[1:])
    return path


def _emit_trajectory(config, scheme, grid, out_dir, args) -> Path:
    traj, extras = _solve_scheme(config, scheme, grid)
    names = ["t", *traj.labels, *extras.keys()]
    cols = [grid.times, *[traj.values[i] for i in range(len(traj.labels))],
            *extras.values()]
    path = out_dir / "trajectory.csv"
    write_csv(path, names, cols)
    _maybe_svg(args, path, grid.times, names[1:], cols[1:])
    return path


def _finish_with_reports(reports, out_dir) -> int:
    path = out_dir / "identity_report.csv"
    write_report_csv(path, reports)
    failed = [r for r in reports if not r.passed]
    for rep in reports:
        status = "pass" if rep.passed else "FAIL"
        print(f"{rep.name}: {status} (max residual {rep.residual_max:.3e})")
    if failed:
        print(f"{len(failed)} check(s) failed; see {path}", file=sys.stderr)
        return 1
    return 0


def cmd_run(args) -> int:
    config = _load_config(args)
    grid = config.time_grid()
    out_dir = _out_dir(args)
    _emit_trajectory(config, config.scheme, grid, out_dir, args)
    _emit_kernels(config, grid, out_dir, args)
    reports = _run_checks(config, config.checks, grid, args.tol)
    return _finish_with_reports(reports, out_dir)


def cmd_kernels(args) -> int:
    config = _load_config(args)
    path = _emit_kernels(config, config.time_grid(), _out_dir(args), args)
    print(f"wrote {path}")
    return 0


def cmd_evolve(args) -> int:
    config = _load_config(args)
    scheme = args.scheme or config.scheme
    path = _emit_trajectory(config, scheme, config.time_grid(), _out_dir(args), args)
    print(f"wrote {path}")
    return 0


def cmd_verify(args) -> int:
    config = _load_config(args)
    names = tuple(args.check) if args.check else config.checks
    if not names:
        raise ConfigError("checks: nothing to verify; pass --check or list checks in the config")
    reports = _run_checks(config, names, config.time_grid(), args.tol)
    return _finish_with_reports(reports, _out_dir(args))


def cmd_compare(args) -> int:
    config = _load_config(args)
    grid = config.time_grid()
    out_dir = _out_dir(args)
    traj_a, _ = _solve_scheme(config, args.a, grid)
    traj_b, _ = _solve_scheme(config, args.b, grid)
    a = traj_a.select(("sigma0",))
    b = traj_b.select(("sigma0",))
    tol = args.tol if args.tol is not None else config.tolerance_for("scheme_equivalence")
    report = compare_trajectories(a, b, tol)
    report.name = f"compare_{args.a}_vs_{args.b}"
    path = out_dir / "compare.csv"
    write_csv(path, ["t", f"sigma0_{args.a}", f"sigma0_{args.b}"],
              [grid.times, a.values[0], b.values[0]])
    _maybe_svg(args, path, grid.times, [f"sigma0_{args.a}", f"sigma0_{args.b}"],
               [a.values[0], b.values[0]])
    return _finish_with_reports([report], out_dir)


def cmd_fig1(args) -> int:
    config = _load_config(args, default=_bundled_fig1_config())
    if config.tls is None:
        raise ConfigError("model: the fig1 reproduction requires a tls model")
    model = config.tls
    grid = config.time_grid()
    out_dir = _out_dir(args)
    system = config.system()

    K_single = kernel_matrix(system, system.projector_spec([(0, 0)]), grid)
    K_pair = kernel_matrix(system, system.population_spec(), grid)
    K = K_single.element((0, 0), (0, 0))
    K1 = K_pair.element((1, 1), (1, 1))
    K0 = K_pair.element((0, 0), (0, 0)) + K1
    kern_path = out_dir / "fig1_kernels.csv"
    write_csv(kern_path, ["t", "K", "K1", "K0"], [grid.times, K, K1, K0])
    _maybe_svg(args, kern_path, grid.times, ["K", "K1", "K0"], [K, K1, K0])

    traj_single, _ = _solve_scheme(config, "projected_single", grid)
    traj_pair, _ = _solve_scheme(config, "projected_pair", grid)
    exact = model.exact_population(grid.times)
    pop_path = out_dir / "fig1_population.csv"
    write_csv(pop_path, ["t", "sigma0", "sigma0_pair", "sigma0_exact"],
              [grid.times, traj_single.values[0], traj_pair.values[0], exact])
    _maybe_svg(args, pop_path, grid.times, ["sigma0", "sigma0_pair", "sigma0_exact"],
               [traj_single.values[0], traj_pair.values[0], exact])

    from .equivalence import IdentityReport
    closed_single = closed_form_tls_kernels(model, "projected_single", grid)
    closed_pair = closed_form_tls_kernels(model, "projected_pair", grid)
    kernel_tol = args.tol if args.tol is not None else 1e-8
    sigma_tol = args.tol if args.tol is not None else 1e-4

    def _max_dev(x, y):
        return float(np.max(np.abs(np.asarray(x) - np.asarray(y))))

    checks = [
        ("kernel_single_vs_closed_form",
         _max_dev(K, closed_single.element((0, 0), (0, 0))), kernel_tol),
        ("kernel_pair_vs_closed_form",
         _max_dev(K1, closed_pair.element((1, 1), (1, 1))), kernel_tol),
        ("sigma0_single_vs_exact", _max_dev(traj_single.values[0], exact), sigma_tol),
        ("sigma0_pair_vs_exact", _max_dev(traj_pair.values[0], exact), sigma_tol),
    ]
    reports = [IdentityReport(name=name, residual_max=dev, residual_norm=dev,
                              grid_or_zset=f"dt={grid.dt:g}, t_max={grid.t_max:g}",
                              passed=dev <= tol)
               for name, dev, tol in checks]
    code = _finish_with_reports(reports, out_dir)
    print(f"wrote {kern_path} and {pop_path}")
    return code


def _add_common(sp, config_required=True) -> None:
    sp.add_argument("--config", default=None, required=config_required,
                    help="path to a JSON experiment config")
    sp.add_argument("--out", default=None,
                    help="output directory (default: $NZKL_OUT or ./nzkl_out)")
    sp.add_argument("--dt", type=float, default=None, help="override grid dt")
    sp.add_argument("--t-max", dest="t_max", type=float, default=None,
                    help="override grid t_max")
    sp.add_argument("--tol", type=float, default=None,
                    help="override the tolerance of every requested check")
    sp.add_argument("--svg", action="store_true",
                    help="also render a polyline SVG next to each CSV")
    sp.add_argument("--seed", type=int, default=None,
                    help="override the random-system seed")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nzkl",
        description="Memory kernels and master-equation runs for reduced quantum dynamics")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="full pipeline: trajectory, kernels, checks")
    _add_common(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("kernels", help="emit kernel samples as CSV")
    _add_common(p)
    p.set_defaults(func=cmd_kernels)

    p = sub.add_parser("evolve", help="emit one scheme's trajectory as CSV")
    _add_common(p)
    p.add_argument("--scheme", choices=SCHEMES, default=None,
                   help="override the config scheme")
    p.set_defaults(func=cmd_evolve)

    p = sub.add_parser("verify", help="run identity checks")
    _add_common(p)
    p.add_argument("--check", action="append", choices=CHECK_NAMES, default=None,
                   help="check to run (repeatable; default: config checks)")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("compare", help="solve two schemes and diff sigma0")
    _add_common(p)
    p.add_argument("--a", required=True, choices=SCHEMES)
    p.add_argument("--b", required=True, choices=SCHEMES)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("fig1", help="canonical epsilon=5/13, delta=12/13 reproduction")
    _add_common(p, config_required=False)
    p.set_defaults(func=cmd_fig1)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, TypeError, np.linalg.LinAlgError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
