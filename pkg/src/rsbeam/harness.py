"""Seeded Monte Carlo experiment driver.

A sweep is a pure function of its spec: every (trial, SNR, method) cell
derives its RNG seed by stable hashing, channels are drawn from a
method-independent stream so methods within a trial see identical
realizations, and records are sorted before aggregation so thread count
never changes the output."""

from __future__ import annotations

import csv
import functools
import hashlib
import io
import json
import struct
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .baselines import embed_private_stack, mrt_precoders, rzf_precoders, sdma_gpi_solve
from .channel import (
    OneRingGeometry,
    build_one_ring_covariance,
    kl_factorize,
    lmmse_error_covariance,
    sample_channel,
    sample_csit,
)
from .messages import MessageSet, PrecodingProblem
from .rates import exact_breakdown
from .solver import SolverConfig, solve

METHOD_IDS = ("gpi_rs", "sdma_gpi", "rzf", "mrt")

CSV_HEADER = (
    "trial,seed,snr_db,method,sum_se,common_rate,private_rates_json,"
    "partial_rates_json,iterations,alpha_final,converged,wall_time_ms"
)

AGGREGATE_SCHEMA = {
    "type": "object",
    "required": ["config", "cells"],
    "properties": {
        "config": {"type": "object"},
        "cells": {
            "type": "array",
            "items": {
                "type": "object",
                "required": [
                    "snr_db",
                    "method",
                    "trials",
                    "mean_sum_se",
                    "stderr_sum_se",
                ],
                "properties": {
                    "snr_db": {"type": "number"},
                    "method": {"type": "string"},
                    "taup": {"type": "number"},
                    "trials": {"type": "integer"},
                    "mean_sum_se": {"type": "number"},
                    "stderr_sum_se": {"type": "number"},
                },
            },
        },
    },
}


@dataclass(frozen=True)
class ExperimentSpec:
    """Everything a sweep depends on, seeds included."""

    num_antennas: int
    num_users: int
    snr_db_grid: tuple[float, ...]
    tau_p: float = 4.0
    sigma2: float = 1.0
    angular_spread: float = np.pi / 6
    aoa_policy: str | tuple[float, ...] = "uniform"
    groups: tuple[tuple[int, ...], ...] = ()
    methods: tuple[str, ...] = METHOD_IDS
    trials: int = 100
    base_seed: int = 1
    solver: SolverConfig = field(default_factory=SolverConfig)
    quad_points: int = 200
    sdma_use_error_cov: bool = False
    record_timing: bool = True
    threads: int = 1
    output_path: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "snr_db_grid", tuple(self.snr_db_grid))
        object.__setattr__(
            self, "groups", tuple(tuple(g) for g in self.groups)
        )
        object.__setattr__(self, "methods", tuple(self.methods))
        if not self.snr_db_grid:
            raise ValueError("snr_db_grid must be nonempty")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        for m in self.methods:
            if m not in METHOD_IDS:
                raise ValueError(f"unknown method {m!r}")
        if isinstance(self.aoa_policy, tuple) and len(self.aoa_policy) != (
            self.num_users
        ):
            raise ValueError("fixed AoA list must have one angle per user")
        # validates the group structure early
        self.msgset()

    def msgset(self) -> MessageSet:
        return MessageSet(
            self.num_users, tuple(frozenset(g) for g in self.groups)
        )

    def snr_index(self, snr_db: float) -> int:
        try:
            return self.snr_db_grid.index(snr_db)
        except ValueError:
            raise ValueError(f"snr_db {snr_db} is not on the grid") from None


@dataclass(frozen=True)
class TrialRecord:
    """One (trial, SNR, method) cell's outcome."""

    trial_index: int
    seed: int
    snr_db: float
    method: str
    sum_se: float
    common_rate: float
    partial_rates: tuple[float, ...]
    private_rates: tuple[float, ...]
    iterations: int
    alpha_final: float
    converged: bool
    wall_time_ms: float


def derive_seed(base_seed: int, *parts) -> int:
    """Stable 64-bit seed from the base seed and any hashable index parts;
    order-free parallel execution depends on this never touching global
    RNG state."""
    h = hashlib.blake2b(digest_size=8)
    h.update(struct.pack("<q", base_seed))
    for p in parts:
        h.update(str(p).encode())
        h.update(b"\x1f")
    return int.from_bytes(h.digest(), "little")


@functools.lru_cache(maxsize=512)
def _cached_covariance(num_antennas, aoa, spread, quad_points):
    geom = OneRingGeometry(num_antennas, aoa, spread)
    return build_one_ring_covariance(geom, quad_points)


def build_trial_problem(
    spec: ExperimentSpec,
    trial_index: int,
    snr_index: int,
    msgset: MessageSet | None = None,
) -> PrecodingProblem:
    """Draw the channels for one cell. The seed depends on (base_seed,
    trial, snr index) but not the method, so all methods in a trial share
    realizations."""
    rng = np.random.default_rng(
        derive_seed(spec.base_seed, "channel", trial_index, snr_index)
    )
    if isinstance(spec.aoa_policy, tuple):
        aoas = list(spec.aoa_policy)
    else:
        aoas = list(rng.uniform(0.0, 2.0 * np.pi, size=spec.num_users))
    snr_db = spec.snr_db_grid[snr_index]
    snr_inv = 10.0 ** (-snr_db / 10.0)
    states = []
    for aoa in aoas:
        cov = _cached_covariance(
            spec.num_antennas, float(aoa), spec.angular_spread, spec.quad_points
        )
        h = sample_channel(kl_factorize(cov), rng)
        phi = lmmse_error_covariance(cov, spec.tau_p, spec.sigma2)
        states.append(sample_csit(h, phi, rng, cov=cov))
    return PrecodingProblem(
        tuple(states), msgset or spec.msgset(), snr_inv
    )


def _run_method(method: str, problem: PrecodingProblem, spec: ExperimentSpec):
    """Run one method; returns (full-layout stack, iterations, alpha_final,
    converged)."""
    if method == "gpi_rs":
        report = solve(problem, spec.solver)
        return report.fbar_star, report.iterations, report.alpha_final, (
            report.converged
        )
    if method == "sdma_gpi":
        report = sdma_gpi_solve(
            problem, spec.solver, use_error_cov=spec.sdma_use_error_cov
        )
        full = embed_private_stack(
            report.fbar_star.fbar, problem.msgset, problem.num_antennas
        )
        return full, report.iterations, report.alpha_final, report.converged
    if method == "rzf":
        stack = rzf_precoders(problem.states, problem.snr_inv, problem.msgset)
        return stack, 0, 0.0, True
    if method == "mrt":
        stack = mrt_precoders(problem.states, problem.snr_inv, problem.msgset)
        return stack, 0, 0.0, True
    raise ValueError(f"unknown method {method!r}")


def run_trial(
    spec: ExperimentSpec,
    trial_index: int,
    snr_db: float,
    method: str,
    msgset: MessageSet | None = None,
    method_label: str | None = None,
) -> TrialRecord:
    """One cell: draw channels, run the method, score with the true-min
    breakdown (always with the true error covariances)."""
    snr_index = spec.snr_index(snr_db)
    seed = derive_seed(spec.base_seed, trial_index, snr_index, method_label or method)
    problem = build_trial_problem(spec, trial_index, snr_index, msgset)
    t0 = time.perf_counter()
    stack, iterations, alpha_final, converged = _run_method(
        method, problem, spec
    )
    elapsed_ms = (time.perf_counter() - t0) * 1e3
    breakdown = exact_breakdown(stack, problem)
    return TrialRecord(
        trial_index=trial_index,
        seed=seed,
        snr_db=float(snr_db),
        method=method_label or method,
        sum_se=breakdown.sum_rate,
        common_rate=breakdown.common_rate,
        partial_rates=breakdown.partial_rates,
        private_rates=breakdown.private_rates,
        iterations=iterations,
        alpha_final=float(alpha_final),
        converged=bool(converged),
        wall_time_ms=elapsed_ms if spec.record_timing else 0.0,
    )


def _sorted_records(
    records: list[TrialRecord], spec: ExperimentSpec
) -> list[TrialRecord]:
    method_order = {m: i for i, m in enumerate(spec.methods)}
    return sorted(
        records,
        key=lambda r: (
            r.trial_index,
            spec.snr_index(r.snr_db),
            method_order.get(r.method, len(method_order)),
            r.method,
        ),
    )


def run_sweep(spec: ExperimentSpec) -> list[TrialRecord]:
    """All trials x SNR points x methods, optionally threaded; the returned
    order (and hence the serialized output) is independent of threading."""
    cells = [
        (t, snr, m)
        for t in range(spec.trials)
        for snr in spec.snr_db_grid
        for m in spec.methods
    ]
    if spec.threads > 1:
        with ThreadPoolExecutor(max_workers=spec.threads) as pool:
            records = list(
                pool.map(lambda c: run_trial(spec, *c), cells)
            )
    else:
        records = [run_trial(spec, *c) for c in cells]
    return _sorted_records(records, spec)


def aggregate_records(
    records: list[TrialRecord], spec: ExperimentSpec, extra: dict | None = None
) -> dict:
    """Per-(snr, method) mean and standard error of the sum rate."""
    cells = []
    keys = sorted(
        {(r.snr_db, r.method) for r in records},
        key=lambda k: (k[0], k[1]),
    )
    for snr_db, method in keys:
        vals = np.array(
            [r.sum_se for r in records if r.snr_db == snr_db and r.method == method]
        )
        stderr = (
            float(vals.std(ddof=1) / np.sqrt(len(vals))) if len(vals) > 1 else 0.0
        )
        cell = {
            "snr_db": float(snr_db),
            "method": method,
            "trials": int(len(vals)),
            "mean_sum_se": float(vals.mean()),
            "stderr_sum_se": stderr,
        }
        if extra:
            cell.update(extra)
        cells.append(cell)
    return {"config": spec_to_dict(spec), "cells": cells}


def spec_to_dict(spec: ExperimentSpec) -> dict:
    d = asdict(spec)
    d["solver"] = asdict(spec.solver)
    return d


def spec_from_dict(d: dict) -> ExperimentSpec:
    d = dict(d)
    solver = d.pop("solver", None)
    if isinstance(solver, dict):
        d["solver"] = SolverConfig(**solver)
    if isinstance(d.get("aoa_policy"), list):
        d["aoa_policy"] = tuple(d["aoa_policy"])
    for key in ("snr_db_grid", "methods"):
        if key in d and isinstance(d[key], list):
            d[key] = tuple(d[key])
    if "groups" in d:
        d["groups"] = tuple(tuple(g) for g in d["groups"])
    return ExperimentSpec(**d)


# ---------------------------------------------------------------------------
# serialization

def _format_float(x: float) -> str:
    return repr(float(x))


def records_to_csv(records: list[TrialRecord]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER.split(","))
    for r in records:
        writer.writerow(
            [
                r.trial_index,
                r.seed,
                _format_float(r.snr_db),
                r.method,
                _format_float(r.sum_se),
                _format_float(r.common_rate),
                json.dumps(list(r.private_rates)),
                json.dumps(list(r.partial_rates)),
                r.iterations,
                _format_float(r.alpha_final),
                "true" if r.converged else "false",
                _format_float(r.wall_time_ms),
            ]
        )
    return buf.getvalue()


def records_from_csv(text: str) -> list[TrialRecord]:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or rows[0] != CSV_HEADER.split(","):
        raise ValueError("unexpected CSV header")
    out = []
    for row in rows[1:]:
        out.append(
            TrialRecord(
                trial_index=int(row[0]),
                seed=int(row[1]),
                snr_db=float(row[2]),
                method=row[3],
                sum_se=float(row[4]),
                common_rate=float(row[5]),
                private_rates=tuple(json.loads(row[6])),
                partial_rates=tuple(json.loads(row[7])),
                iterations=int(row[8]),
                alpha_final=float(row[9]),
                converged=row[10] == "true",
                wall_time_ms=float(row[11]),
            )
        )
    return out


def emit_outputs(
    records: list[TrialRecord],
    path,
    spec: ExperimentSpec,
    aggregate: dict | None = None,
    plot_x: str = "snr_db",
) -> dict:
    """Write records.csv, aggregate.json, and a wide plot-data CSV under
    ``path`` (a directory). Returns {name: written path}."""
    from pathlib import Path

    out_dir = Path(path)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        aggregate = aggregate or aggregate_records(records, spec)
        written = {}

        csv_path = out_dir / "records.csv"
        csv_path.write_text(records_to_csv(records))
        written["records"] = str(csv_path)

        json_path = out_dir / "aggregate.json"
        json_path.write_text(
            json.dumps(aggregate, indent=2, sort_keys=True) + "\n"
        )
        written["aggregate"] = str(json_path)

        if records:
            plot_path = out_dir / f"plotdata_sum_se_vs_{plot_x}.csv"
            plot_path.write_text(_plot_data_csv(aggregate["cells"], plot_x))
            written["plotdata"] = str(plot_path)
        return written
    except OSError as exc:
        raise OSError(f"failed writing outputs under {out_dir}: {exc}") from exc


def _plot_data_csv(cells: list[dict], x_key: str) -> str:
    methods = sorted({c["method"] for c in cells})
    xs = sorted({c[x_key] for c in cells})
    lookup = {(c[x_key], c["method"]): c["mean_sum_se"] for c in cells}
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow([x_key] + methods)
    for x in xs:
        writer.writerow(
            [_format_float(x)]
            + [_format_float(lookup.get((x, m), float("nan"))) for m in methods]
        )
    return buf.getvalue()


# ---------------------------------------------------------------------------
# the specific experiment drivers

def run_convergence_trace(
    spec: ExperimentSpec, instance_seed: int, snr_db: float | None = None
) -> list[dict]:
    """Per-iteration (iteration, residual, objective_bits, alpha) rows for
    one solved instance."""
    snr_db = spec.snr_db_grid[0] if snr_db is None else snr_db
    tracer = replace(spec, base_seed=instance_seed)
    problem = build_trial_problem(tracer, 0, spec.snr_index(snr_db))
    report = solve(problem, spec.solver)
    return [
        {
            "iteration": t + 1,
            "residual": report.residual_trace[t],
            "objective_bits": report.objective_trace[t],
            "alpha": report.alpha_history[t],
        }
        for t in range(report.iterations)
    ]


def trace_to_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["iteration", "residual", "objective_bits", "alpha"])
    for r in rows:
        writer.writerow(
            [
                r["iteration"],
                _format_float(r["residual"]),
                _format_float(r["objective_bits"]),
                _format_float(r["alpha"]),
            ]
        )
    return buf.getvalue()


def run_csit_sweep(
    spec: ExperimentSpec, taup_grid: list[float]
) -> tuple[dict[float, list[TrialRecord]], dict]:
    """Sweep the training budget at fixed SNR; per-tau record lists plus a
    merged aggregate whose cells carry a taup key."""
    per_taup: dict[float, list[TrialRecord]] = {}
    cells = []
    for taup in taup_grid:
        sub = replace(spec, tau_p=float(taup))
        records = run_sweep(sub)
        per_taup[float(taup)] = records
        agg = aggregate_records(records, sub, extra={"taup": float(taup)})
        cells.extend(agg["cells"])
    merged = {"config": spec_to_dict(spec), "cells": cells}
    merged["config"]["taup_grid"] = [float(t) for t in taup_grid]
    return per_taup, merged


def run_layer_comparison(
    spec: ExperimentSpec, groups: tuple[tuple[int, ...], ...]
) -> list[TrialRecord]:
    """Clustered-user comparison of the rate-splitting design without and
    with partial common messages (method ids gpi_rs_1l / gpi_rs_2l);
    channels are shared between the two variants per trial."""
    flat = MessageSet(spec.num_users)
    layered = MessageSet(
        spec.num_users, tuple(frozenset(g) for g in groups)
    )
    records = []

    def _cell(args):
        trial, snr = args
        one = run_trial(
            spec, trial, snr, "gpi_rs", msgset=flat, method_label="gpi_rs_1l"
        )
        two = run_trial(
            spec, trial, snr, "gpi_rs", msgset=layered, method_label="gpi_rs_2l"
        )
        return [one, two]

    cells = [(t, snr) for t in range(spec.trials) for snr in spec.snr_db_grid]
    if spec.threads > 1:
        with ThreadPoolExecutor(max_workers=spec.threads) as pool:
            for pair in pool.map(_cell, cells):
                records.extend(pair)
    else:
        for c in cells:
            records.extend(_cell(c))
    return sorted(
        records, key=lambda r: (r.trial_index, r.snr_db, r.method)
    )
