"""Command-line front door for simulation and bound-verification runs.

Subcommands: simulate, verify-linear, bounds, holder, asymptotics. Every
command reads a strict JSON config, runs what it needs, and writes its
artifacts plus a manifest into the output directory.

Exit codes are stable: 0 success (including not-applicable checks), 2 config
validation error, 3 path blowup, 4 linear-oracle mismatch, 5 bound
violation, 6 regularity failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import analysis as lab
from . import noise as noise_mod
from .artifacts import (
    Stopwatch,
    write_csv,
    write_json,
    write_manifest,
    write_trace,
    write_trajectories,
)
from .config import ConfigError, RunConfig, materialize, normalize
from .dynamics import BlowupError, run_ensemble

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_BLOWUP = 3
EXIT_ORACLE = 4
EXIT_BOUND = 5
EXIT_REGULARITY = 6


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stoqg",
        description="stochastic quasi-geostrophic vorticity simulator and enstrophy lab",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in [
        ("simulate", "run the ensemble and write the enstrophy trace"),
        ("verify-linear", "compare a linearized run against the analytic convolution variance"),
        ("bounds", "evaluate the enstrophy bound envelopes and Gronwall diagnostics"),
        ("holder", "fit the increment exponent of the enstrophy curve"),
        ("asymptotics", "check the small-time behaviour of the enstrophy"),
    ]:
        cmd = sub.add_parser(name, help=help_text)
        cmd.add_argument("--config", required=True, help="path to the JSON run configuration")
        cmd.add_argument("--out", default=None, help="output directory (overrides io.out_dir)")
        cmd.add_argument("--paths", type=int, default=None, help="override sim.n_paths")
        cmd.add_argument("--seed", type=int, default=None, help="override sim.master_seed")
        cmd.add_argument("--threads", type=int, default=1, help="ensemble worker count")
    return parser


def _load(args) -> tuple[RunConfig, dict]:
    try:
        raw = json.loads(Path(args.config).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError("<file>", f"config file not found: {args.config}")
    except json.JSONDecodeError as err:
        raise ConfigError("<file>", f"invalid JSON: {err}")
    document = normalize(raw)
    if args.paths is not None:
        document["sim"]["n_paths"] = args.paths
    if args.seed is not None:
        document["sim"]["master_seed"] = args.seed
    if args.out is not None:
        document["io"]["out_dir"] = args.out
    document = normalize(document)
    return materialize(document), document


def _require_paths_for_stats(document: dict):
    if document["sim"]["n_paths"] < 2:
        raise ConfigError("sim.n_paths", "ensemble statistics need at least 2 paths")


def _run_trace(cfg: RunConfig, workers: int):
    trajectories = run_ensemble(cfg.sim, cfg.params, cfg.spectrum, n_workers=workers)
    solver_rates = cfg.basis.eigenvalues - cfg.params.r
    trace = lab.estimate_enstrophy(trajectories, cfg.spectrum, solver_rates)
    return trajectories, trace


def _gamma_settings(cfg: RunConfig) -> tuple[float, float]:
    beta_eff = cfg.params.beta if cfg.params.beta_term else 0.0
    threshold = lab.gamma_threshold(cfg.params.nu, cfg.params.r, beta_eff, cfg.c1())
    gamma = cfg.analysis["gamma"]
    if gamma is None:
        gamma = threshold + 0.1
    if gamma <= threshold:
        raise ConfigError("analysis.gamma", f"must exceed gamma_threshold={threshold:.6g}")
    return gamma, threshold


def cmd_simulate(args) -> int:
    cfg, document = _load(args)
    _require_paths_for_stats(document)
    if cfg.io["write_trajectories"] and not cfg.sim.store_fields:
        cfg.sim.store_fields = True
        document["sim"]["store_fields"] = True
    out_dir = Path(cfg.io["out_dir"])
    with Stopwatch() as clock:
        trajectories, trace = _run_trace(cfg, args.threads)
    write_trace(out_dir, trace, cfg.io["formats"])
    if cfg.io["write_trajectories"]:
        write_trajectories(out_dir, trajectories)
    write_manifest(out_dir, document, clock.elapsed,
                   extra={"spectrum_tail_bound": noise_mod.stationary_tail_bound(cfg.spectrum)})
    print(f"simulate: wrote {out_dir} ({trace.n_paths} paths, {len(trace.times)} output times)")
    return EXIT_OK


def cmd_verify_linear(args) -> int:
    cfg, document = _load(args)
    if not cfg.params.linearized:
        raise ConfigError("model.linearized", "verify-linear requires the linearized switch")
    _require_paths_for_stats(document)
    out_dir = Path(cfg.io["out_dir"])
    with Stopwatch() as clock:
        _, trace = _run_trace(cfg, args.threads)
    oracle = trace.wa_half_analytic
    diff = trace.ens_mean - oracle
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(trace.ens_se > 0, diff / trace.ens_se, np.where(diff == 0.0, 0.0, np.inf))
    worst = int(np.argmax(np.abs(z)))
    passed = bool(np.all(np.abs(z) <= 3.0))
    report = {
        "times": trace.times,
        "ens_mean": trace.ens_mean,
        "oracle_half_variance": oracle,
        "z_scores": z,
        "worst_time": float(trace.times[worst]),
        "worst_z": float(z[worst]),
        "verdict": "pass" if passed else "fail",
    }
    write_trace(out_dir, trace, cfg.io["formats"])
    write_json(out_dir / "linear_report.json", report)
    write_manifest(out_dir, document, clock.elapsed)
    if not passed:
        print(f"verify-linear: oracle mismatch, worst |z|={abs(report['worst_z']):.3g} "
              f"at t={report['worst_time']:g}", file=sys.stderr)
        return EXIT_ORACLE
    print(f"verify-linear: pass (worst |z|={abs(report['worst_z']):.3g})")
    return EXIT_OK


def cmd_bounds(args) -> int:
    cfg, document = _load(args)
    _require_paths_for_stats(document)
    if len(cfg.sim.output_times) < 8:
        raise ConfigError("sim.output_times", "bound fitting needs at least 8 output times")
    gamma, threshold = _gamma_settings(cfg)
    out_dir = Path(cfg.io["out_dir"])
    with Stopwatch() as clock:
        trajectories, trace = _run_trace(cfg, args.threads)

    e0 = cfg.sim.initial_condition.mean_sq_norm(cfg.basis.n_modes)
    split = cfg.analysis["split"]
    times = trace.times
    reports: list[dict] = []

    if cfg.spectrum.trace_class:
        envelope = lab.trace_class_envelope(0.5 * e0, gamma, noise_mod.trace(cfg.spectrum), times)
        reports.append(lab.validate_bound(trace, envelope).to_dict())
    else:
        reports.append({"kind": "trace_class", "verdict": "not_applicable",
                        "notes": "spectrum is not trace-class"})

    mu_exp = cfg.spectrum.mu_exp
    mu_tilde = cfg.mu_tilde_default()
    if mu_exp is not None and mu_exp > 0 and mu_tilde is not None:
        shape = lab.theorem2_shape("a", e0, gamma, times, mu_tilde, mu_exp)
        rep = lab.fit_and_validate_bound(trace, shape, split, kind="theorem2a",
                                         params={"gamma": gamma, "mu_tilde": mu_tilde})
        reports.append(rep.to_dict())
    else:
        reports.append({"kind": "theorem2a", "verdict": "not_applicable",
                        "notes": "no power-law decay rule available"})

    theta_summable = cfg.spectrum.mu_exp is None or (cfg.spectrum.mu_exp - cfg.spectrum.theta > 1.0)
    if theta_summable:
        shape = lab.theorem2_shape("b", e0, gamma, times)
        rep = lab.fit_and_validate_bound(trace, shape, split, kind="theorem2b",
                                         params={"gamma": gamma})
        reports.append(rep.to_dict())
    else:
        reports.append({"kind": "theorem2b", "verdict": "not_applicable",
                        "notes": "sum mu_k^2 |lambda_k|^theta diverges under the decay rule"})

    lemma1 = lab.lemma1_pathwise_check(trajectories[0], gamma, split=split)
    lemma1_out = {k: v for k, v in lemma1.items() if k != "residuals"}
    lemma1_out["kind"] = "lemma1"

    alphas = np.asarray(cfg.analysis["alpha_grid"], dtype=float)
    phi_values = np.array([noise_mod.phi_alpha(cfg.spectrum, a) for a in alphas])
    phi_table = {
        "alpha": alphas,
        "phi": phi_values,
        "indicative_time_window": 1.0 / phi_values,
        "notes": "window t <= C/phi(alpha) has an unknown constant; indicative only",
    }

    payload = {
        "gamma": gamma,
        "gamma_threshold": threshold,
        "c1": cfg.c1(),
        "spectrum_tail_bound": noise_mod.stationary_tail_bound(cfg.spectrum),
        "bounds": reports,
        "lemma1": lemma1_out,
        "phi_table": phi_table,
    }
    write_trace(out_dir, trace, cfg.io["formats"])
    write_json(out_dir / "bounds_report.json", payload)
    if "csv" in cfg.io["formats"]:
        _write_envelopes_csv(out_dir, trace, reports)
    write_manifest(out_dir, document, clock.elapsed)

    failed = [r["kind"] for r in reports + [lemma1_out] if r["verdict"] == "fail"]
    summary = ", ".join(f"{r['kind']}={r['verdict']}" for r in reports + [lemma1_out])
    if failed:
        print(f"bounds: violation in {failed} ({summary})", file=sys.stderr)
        return EXIT_BOUND
    print(f"bounds: {summary}")
    return EXIT_OK


def _write_envelopes_csv(out_dir: Path, trace: lab.EnstrophyTrace, reports: list[dict]):
    """Flat table of the trace against every evaluated envelope."""
    header = ["time", "ens_mean", "ens_se"]
    columns = [trace.times, trace.ens_mean, trace.ens_se]
    for rep in reports:
        if "envelope" in rep:
            header.append(f"envelope_{rep['kind']}")
            columns.append(np.asarray(rep["envelope"]))
    header.append("analytic_wa_var")
    wa = trace.wa_half_analytic
    columns.append(2.0 * wa if wa is not None else np.full_like(trace.times, np.nan))
    write_csv(out_dir / "envelopes.csv", header, zip(*columns))


def _synthetic_trace(kind: str, window, lags) -> lab.EnstrophyTrace:
    t0 = float(window[0])
    times = np.concatenate(([t0], t0 + np.asarray(sorted(lags), dtype=float)))
    ens = np.sqrt(times) if kind == "sqrt" else times
    zeros = np.zeros_like(times)
    return lab.EnstrophyTrace(times=times, ens_mean=ens, ens_se=zeros, n_paths=0)


def cmd_holder(args) -> int:
    cfg, document = _load(args)
    holder_cfg = cfg.analysis["holder"]
    if "window" not in holder_cfg:
        raise ConfigError("analysis.holder.window", "required for the holder command")
    if "lags" not in holder_cfg:
        raise ConfigError("analysis.holder.lags", "required for the holder command")
    window, lags = holder_cfg["window"], holder_cfg["lags"]
    out_dir = Path(cfg.io["out_dir"])
    with Stopwatch() as clock:
        if holder_cfg.get("synthetic"):
            trace = _synthetic_trace(holder_cfg["synthetic"], window, lags)
        else:
            _require_paths_for_stats(document)
            _, trace = _run_trace(cfg, args.threads)
    try:
        result = lab.holder_exponent_fit(trace, tuple(window), lags)
    except ValueError as err:
        raise ConfigError("analysis.holder", str(err))
    write_json(out_dir / "holder_report.json", result)
    write_manifest(out_dir, document, clock.elapsed)
    verdict = result["verdict"]
    exponent = result.get("exponent")
    print(f"holder: {verdict}" + (f" (exponent {exponent:.4f})" if exponent is not None else ""))
    return EXIT_REGULARITY if verdict == "fail" else EXIT_OK


def cmd_asymptotics(args) -> int:
    cfg, document = _load(args)
    _require_paths_for_stats(document)
    asym = cfg.analysis["asymptotics"]
    out_dir = Path(cfg.io["out_dir"])
    with Stopwatch() as clock:
        _, trace = _run_trace(cfg, args.threads)
    ens0 = 0.5 * cfg.sim.initial_condition.mean_sq_norm(cfg.basis.n_modes)
    try:
        result = lab.asymptotics_check(
            trace, cfg.spectrum, asym["mode"], asym["delta"],
            gamma_reg=asym["gamma_reg"], rho=asym["rho"],
            ens0=ens0 if asym["mode"] == "general" else None,
        )
    except ValueError as err:
        raise ConfigError("analysis.asymptotics", str(err))
    write_trace(out_dir, trace, cfg.io["formats"])
    write_json(out_dir / "asymptotics_report.json", result)
    write_manifest(out_dir, document, clock.elapsed)
    print(f"asymptotics[{asym['mode']}]: {result['verdict']}")
    return EXIT_REGULARITY if result["verdict"] == "fail" else EXIT_OK


_COMMANDS = {
    "simulate": cmd_simulate,
    "verify-linear": cmd_verify_linear,
    "bounds": cmd_bounds,
    "holder": cmd_holder,
    "asymptotics": cmd_asymptotics,
}


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except BlowupError as err:
        print(f"blowup: {err}", file=sys.stderr)
        return EXIT_BLOWUP


if __name__ == "__main__":
    sys.exit(main())
