"""Command-line front end.

Subcommands: covariance, solve, sweep-snr, sweep-csit, trace, multilayer,
verify. Options may also come from a JSON config file (--config); explicit
flags override the file.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import harness
from .channel import OneRingGeometry, build_one_ring_covariance
from .harness import ExperimentSpec
from .oracles import dense_fixed_point_check, fd_gradient, project_tangent
from .rates import objective_J
from .solver import SolverConfig, extract_precoders, mrt_initial_stack, solve


def parse_groups(text: str) -> tuple[tuple[int, ...], ...]:
    """'1,2;3,4' (1-based users) -> ((0, 1), (2, 3))."""
    if not text:
        return ()
    groups = []
    for part in text.split(";"):
        members = tuple(int(u) - 1 for u in part.split(",") if u.strip())
        if members:
            groups.append(members)
    return tuple(groups)


def parse_float_list(text: str) -> tuple[float, ...]:
    return tuple(float(x) for x in text.split(",") if x.strip())


def _add_common_flags(p: argparse.ArgumentParser):
    p.add_argument("--config", help="JSON config file; flags override it")
    p.add_argument("--n", type=int, help="number of BS antennas")
    p.add_argument("--k", type=int, help="number of users")
    p.add_argument(
        "--groups",
        help="partial-common groups as 1-based user lists, e.g. '1,2;3,4'",
    )
    p.add_argument("--snr-db", help="comma list of SNR points in dB")
    p.add_argument("--taup", help="training budget tau_ul*p_ul (comma list for sweep-csit)")
    p.add_argument("--sigma2", type=float, help="noise power (default 1)")
    p.add_argument("--spread", type=float, help="angular spread in radians")
    p.add_argument("--trials", type=int, help="Monte Carlo trials")
    p.add_argument("--seed", type=int, help="base RNG seed")
    p.add_argument("--alpha-init", type=float, help="override the initial alpha")
    p.add_argument("--epsilon", type=float, help="residual convergence threshold")
    p.add_argument("--methods", help="comma list from gpi_rs,sdma_gpi,rzf,mrt")
    p.add_argument("--out", help="output directory (or file for covariance/trace)")
    p.add_argument("--threads", type=int, help="worker threads for sweeps")
    p.add_argument("--quad-points", type=int, help="Simpson subintervals")
    p.add_argument(
        "--no-timing",
        action="store_true",
        help="record wall_time_ms as 0 for byte-reproducible output",
    )


def _spec_from_args(args, default_snr=(10.0,)) -> ExperimentSpec:
    base: dict = {}
    if args.config:
        base = json.loads(Path(args.config).read_text())
    solver_kwargs = dict(base.pop("solver", {}))

    def pick(flag, key, convert=None):
        val = getattr(args, flag, None)
        if val is None:
            return
        base[key] = convert(val) if convert else val

    pick("n", "num_antennas")
    pick("k", "num_users")
    pick("groups", "groups", parse_groups)
    pick("snr_db", "snr_db_grid", parse_float_list)
    pick("sigma2", "sigma2")
    pick("spread", "angular_spread")
    pick("trials", "trials")
    pick("seed", "base_seed")
    pick("methods", "methods", lambda s: tuple(m.strip().lower() for m in s.split(",")))
    pick("threads", "threads")
    pick("quad_points", "quad_points")
    pick("out", "output_path")
    if getattr(args, "taup", None) is not None:
        base["tau_p"] = parse_float_list(args.taup)[0]
    if getattr(args, "no_timing", False):
        base["record_timing"] = False
    if getattr(args, "alpha_init", None) is not None:
        solver_kwargs["alpha_init_override"] = args.alpha_init
    if getattr(args, "epsilon", None) is not None:
        solver_kwargs["epsilon"] = args.epsilon

    base.setdefault("num_antennas", 6)
    base.setdefault("num_users", 4)
    base.setdefault("snr_db_grid", tuple(default_snr))
    if isinstance(base.get("aoa_policy"), list):
        base["aoa_policy"] = tuple(base["aoa_policy"])
    if "groups" in base:
        base["groups"] = tuple(tuple(g) for g in base["groups"])
    if isinstance(base.get("snr_db_grid"), list):
        base["snr_db_grid"] = tuple(base["snr_db_grid"])
    if isinstance(base.get("methods"), list):
        base["methods"] = tuple(base["methods"])
    base["solver"] = SolverConfig(**solver_kwargs)
    return ExperimentSpec(**base)


def _report_json(report, layout) -> dict:
    blocks, fractions = extract_precoders(report.fbar_star, layout)

    def _cvec(v):
        return [[float(z.real), float(z.imag)] for z in v]

    return {
        "converged": report.converged,
        "iterations": report.iterations,
        "alpha_final": report.alpha_final,
        "objective_bits": report.objective_bits,
        "lambda_log2": report.lambda_log2,
        "sum_se": report.rate_breakdown.sum_rate,
        "common_rate": report.rate_breakdown.common_rate,
        "partial_rates": list(report.rate_breakdown.partial_rates),
        "private_rates": list(report.rate_breakdown.private_rates),
        "power_fractions": [float(f) for f in fractions],
        "precoder_blocks": [_cvec(b) for b in blocks],
        "residual_trace": list(report.residual_trace),
        "objective_trace": list(report.objective_trace),
        "alpha_history": list(report.alpha_history),
    }


def _emit(text: str, out: str | None):
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _cmd_covariance(args) -> int:
    geom = OneRingGeometry(
        args.n or 6, args.aoa, args.spread if args.spread else np.pi / 6
    )
    cov = build_one_ring_covariance(geom, args.quad_points or 200)
    eigs = np.linalg.eigvalsh(cov.matrix)
    doc = {
        "num_antennas": geom.num_antennas,
        "aoa": geom.aoa,
        "angular_spread": geom.angular_spread,
        "matrix_real": cov.matrix.real.tolist(),
        "matrix_imag": cov.matrix.imag.tolist(),
        "eigenvalues": eigs.tolist(),
    }
    _emit(json.dumps(doc, indent=2) + "\n", args.out)
    return 0


def _solve_instance(spec: ExperimentSpec):
    problem = harness.build_trial_problem(spec, 0, 0)
    report = solve(problem, spec.solver)
    return problem, report


def _cmd_solve(args) -> int:
    spec = _spec_from_args(args)
    problem, report = _solve_instance(spec)
    _emit(
        json.dumps(_report_json(report, problem.layout), indent=2) + "\n",
        args.out,
    )
    return 0


def _cmd_sweep_snr(args) -> int:
    spec = _spec_from_args(args, default_snr=(0.0, 10.0, 20.0, 30.0))
    records = harness.run_sweep(spec)
    out = spec.output_path or "sweep_snr_out"
    written = harness.emit_outputs(records, out, spec)
    sys.stdout.write(json.dumps(written, indent=2) + "\n")
    return 0


def _cmd_sweep_csit(args) -> int:
    spec = _spec_from_args(args)
    taup_grid = (
        list(parse_float_list(args.taup)) if args.taup else [0.1, 1.0, 4.0, 8.0]
    )
    per_taup, merged = harness.run_csit_sweep(spec, taup_grid)
    out = Path(spec.output_path or "sweep_csit_out")
    out.mkdir(parents=True, exist_ok=True)
    written = {}
    for taup, records in per_taup.items():
        p = out / f"records_taup_{taup:g}.csv"
        p.write_text(harness.records_to_csv(records))
        written[f"records_taup_{taup:g}"] = str(p)
    agg_path = out / "aggregate.json"
    agg_path.write_text(json.dumps(merged, indent=2, sort_keys=True) + "\n")
    written["aggregate"] = str(agg_path)
    plot_path = out / "plotdata_sum_se_vs_taup.csv"
    plot_path.write_text(harness._plot_data_csv(merged["cells"], "taup"))
    written["plotdata"] = str(plot_path)
    sys.stdout.write(json.dumps(written, indent=2) + "\n")
    return 0


def _cmd_trace(args) -> int:
    spec = _spec_from_args(args)
    rows = harness.run_convergence_trace(
        spec, args.seed if args.seed is not None else spec.base_seed
    )
    _emit(harness.trace_to_csv(rows), args.out)
    return 0


def _cmd_multilayer(args) -> int:
    spec = _spec_from_args(args, default_snr=(30.0,))
    if not isinstance(spec.aoa_policy, tuple):
        # clustered scenario: users 1-2 at pi/3, users 3-4 at 2pi/3
        half = spec.num_users // 2
        aoas = tuple(
            [np.pi / 3] * half + [2 * np.pi / 3] * (spec.num_users - half)
        )
        spec = replace(spec, aoa_policy=aoas)
    groups = spec.groups or parse_groups("1,2;3,4")
    spec = replace(spec, groups=())
    records = harness.run_layer_comparison(spec, groups)
    out = spec.output_path or "multilayer_out"
    agg = harness.aggregate_records(records, spec)
    written = harness.emit_outputs(records, out, spec, aggregate=agg)
    sys.stdout.write(json.dumps(written, indent=2) + "\n")
    return 0


def _cmd_verify(args) -> int:
    spec = _spec_from_args(args)
    problem, report = _solve_instance(spec)
    alpha = report.alpha_final
    fbar = report.fbar_star.fbar

    def objective(v):
        return objective_J(v, problem, alpha)

    grad = project_tangent(fd_gradient(objective, fbar), fbar)
    init = mrt_initial_stack(problem)
    grad0 = project_tangent(fd_gradient(objective, init), init)
    doc = {
        "converged": report.converged,
        "alpha_final": alpha,
        "objective_bits": report.objective_bits,
        "lambda_log2": report.lambda_log2,
        "identity_gap": abs(report.objective_bits - report.lambda_log2),
        "projected_grad_norm": float(np.linalg.norm(grad)),
        "projected_grad_norm_at_init": float(np.linalg.norm(grad0)),
        "dense_fixed_point_residual": dense_fixed_point_check(
            fbar, problem, alpha
        ),
        "epsilon": spec.solver.epsilon,
    }
    _emit(json.dumps(doc, indent=2) + "\n", args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rsbeam",
        description=(
            "Rate-splitting downlink precoder optimization and Monte Carlo "
            "evaluation"
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("covariance", help="dump a one-ring covariance matrix")
    p.add_argument("--n", type=int, default=6)
    p.add_argument("--aoa", type=float, default=np.pi / 3)
    p.add_argument("--spread", type=float, default=np.pi / 6)
    p.add_argument("--quad-points", type=int, default=200)
    p.add_argument("--out")
    p.set_defaults(func=_cmd_covariance)

    for name, fn, help_text in [
        ("solve", _cmd_solve, "solve one instance and print the report"),
        ("sweep-snr", _cmd_sweep_snr, "Monte Carlo sweep over SNR points"),
        ("sweep-csit", _cmd_sweep_csit, "Monte Carlo sweep over the training budget"),
        ("trace", _cmd_trace, "per-iteration convergence trace for one instance"),
        ("multilayer", _cmd_multilayer, "clustered-user 1-layer vs 2-layer comparison"),
        ("verify", _cmd_verify, "independent stationarity/fixed-point audit"),
    ]:
        p = sub.add_parser(name, help=help_text)
        _add_common_flags(p)
        p.set_defaults(func=fn)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
