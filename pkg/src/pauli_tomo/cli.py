"""Command-line front end: simulation, risk reports, design optimization,
the two-step protocol, and the consolidated verification suite.

Runs are configured by a single JSON document; command-line flags
override config fields. Reports are written as CSV (one header row,
shortest round-trip float formatting) or JSON. Unless figures are
disabled, report commands also render a PNG next to the data file.

Exit codes: 0 success, 1 verification failure, 2 usage or config error.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import design_opt, experiment, extraction, reproduce, risk
from .core import ChannelParams, compose_channel_matrix, cp_check


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def _write_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def _write_json(path, payload) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _emit(args, header, row, payload) -> None:
    """Write one report row as CSV or JSON, or print JSON to stdout."""
    if args.out is None:
        print(json.dumps(payload, indent=2, sort_keys=True))
        return
    if args.format == "json":
        _write_json(args.out, payload)
    else:
        _write_csv(args.out, header, [row])


def _figure_path(out, suffix="") -> str:
    p = Path(out)
    return str(p.with_name(p.stem + suffix + ".png"))


class ConfigError(ValueError):
    pass


def _load_config(args) -> dict:
    cfg = {}
    if args.config is not None:
        try:
            with open(args.config) as fh:
                cfg = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
        if not isinstance(cfg, dict):
            raise ConfigError("config must be a JSON object")
    return cfg


def _get_channel(cfg) -> ChannelParams:
    channel = cfg.get("channel")
    if not isinstance(channel, dict) or "lambda" not in channel:
        raise ConfigError('config needs "channel": {"lambda": [l1, l2, l3], ...}')
    lam = channel["lambda"]
    phi = channel.get("phi", (0.0, 0.0, 0.0))
    try:
        params = ChannelParams(tuple(lam), tuple(phi))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad channel parameters: {exc}") from exc
    if not cp_check(params.lam):
        raise ConfigError(f"contractions {params.lam} violate complete positivity")
    if not (params.lam[0] >= params.lam[1] >= params.lam[2]):
        raise ConfigError("channel contractions must be sorted descending")
    for a in params.phi:
        if not 0.0 <= a < math.pi:
            raise ConfigError("channel angles must lie in [0, pi)")
    return params


def _get_design(cfg) -> experiment.ExperimentDesign:
    design = cfg.get("design")
    if not isinstance(design, dict) or "shots" not in design:
        raise ConfigError('config needs "design": {"theta": [...], "tau": [...], "shots": N}')
    try:
        return experiment.ExperimentDesign(
            tuple(design.get("theta", (0.0, 0.0, 0.0))),
            tuple(design.get("tau", (0.0, 0.0, 0.0))),
            int(design["shots"]))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad design: {exc}") from exc


def _get_seed(cfg, args) -> int:
    seed = args.seed if args.seed is not None else cfg.get("seed", 0)
    try:
        seed = int(seed)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad seed: {seed!r}") from exc
    if seed < 0:
        raise ConfigError("seed must be nonnegative")
    return seed


def _channel_design_payload(params, design) -> dict:
    return {
        "channel": {"lambda": list(params.lam), "phi": list(params.phi)},
        "design": {"theta": list(design.input_angles),
                   "tau": list(design.meas_angles),
                   "shots": design.shots},
    }


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_simulate(args) -> int:
    cfg = _load_config(args)
    params = _get_channel(cfg)
    design = _get_design(cfg)
    seed = _get_seed(cfg, args)

    a = compose_channel_matrix(params)
    th = experiment.build_frame(design.input_angles)
    m = experiment.build_frame(design.meas_angles)
    x = experiment.forward_outcomes(a, th, m)
    counts = experiment.sample_counts(x, design.shots, seed)
    xhat = experiment.estimate_x(counts, design.shots)
    ahat = experiment.estimate_channel_matrix(xhat, th, m)
    est = extraction.extract_params(ahat)

    err_lam = [e - t for e, t in zip(est.lam_hat, params.lam)]
    err_phi = [extraction.angle_distance(e, t)
               for e, t in zip(est.phi_hat, params.phi)]

    header = (["seed", "shots"]
              + [f"n_{i}{j}" for i in (1, 2, 3) for j in (1, 2, 3)]
              + [f"a_hat_{i}{j}" for i in (1, 2, 3) for j in (1, 2, 3)]
              + ["lambda_hat_1", "lambda_hat_2", "lambda_hat_3",
                 "phi_hat_z", "phi_hat_y", "phi_hat_x", "cp_valid",
                 "err_lambda_1", "err_lambda_2", "err_lambda_3",
                 "err_phi_z", "err_phi_y", "err_phi_x"])
    row = ([seed, design.shots] + [int(v) for v in counts.n.ravel()]
           + [float(v) for v in ahat.ravel()]
           + list(est.lam_hat) + list(est.phi_hat) + [est.cp_valid]
           + err_lam + err_phi)
    payload = {
        **_channel_design_payload(params, design),
        "seed": seed,
        "counts": counts.n.tolist(),
        "a_hat": ahat.tolist(),
        "estimate": {"lambda": list(est.lam_hat), "phi": list(est.phi_hat),
                     "cp_valid": est.cp_valid},
        "errors": {"lambda": err_lam, "phi": err_phi},
    }
    _emit(args, header, row, payload)
    if args.out and args.figures:
        from . import plots
        plots.counts_figure(_figure_path(args.out), counts.n,
                            experiment.expected_counts(x, design.shots),
                            design.shots)
    return 0


def cmd_risk(args) -> int:
    cfg = _load_config(args)
    params = _get_channel(cfg)
    design = _get_design(cfg)
    seed = _get_seed(cfg, args)
    trials = args.trials if args.trials is not None else int(cfg.get("trials", 0))

    analytic = risk.analytic_report(params, design)
    mc = risk.mc_loss(params, design, trials, seed) if trials > 0 else None

    header = ["lambda_1", "lambda_2", "lambda_3", "phi_z", "phi_y", "phi_x",
              "theta_z", "theta_y", "theta_x", "tau_z", "tau_y", "tau_x",
              "shots", "f_analytic", "g_analytic", "h_analytic",
              "f_bound", "g_bound", "trials", "seed",
              "f_mc", "f_mc_se", "g_mc", "g_mc_se", "h_mc", "h_mc_se"]
    row = (list(params.lam) + list(params.phi) + list(design.input_angles)
           + list(design.meas_angles)
           + [design.shots, analytic.f, analytic.g, analytic.h,
              analytic.f_bound, analytic.g_bound]
           + ([trials, seed, mc.f, mc.f_se, mc.g, mc.g_se, mc.h, mc.h_se]
              if mc else [None] * 8))
    payload = {
        **_channel_design_payload(params, design),
        "analytic": {"f": analytic.f, "g": analytic.g, "h": analytic.h,
                     "f_bound": analytic.f_bound, "g_bound": analytic.g_bound},
    }
    if mc:
        payload["monte_carlo"] = {
            "trials": trials, "seed": seed,
            "f": mc.f, "f_se": mc.f_se, "g": mc.g, "g_se": mc.g_se,
            "h": mc.h, "h_se": mc.h_se,
        }
    _emit(args, header, row, payload)
    if args.out and args.figures:
        from . import plots
        plots.risk_figure(_figure_path(args.out), analytic, mc)
    return 0


def _emit_surface_6d(args, cfg, lam, shots):
    res = int(cfg.get("optimizer", {}).get("grid_resolution", 8))
    g1 = np.arange(res) * math.pi / res
    g2 = np.arange(res) * (math.pi / 2) / res
    nodes = np.array(np.meshgrid(g1, g1, g2, indexing="ij")).reshape(3, -1).T
    n = len(nodes)
    stem = Path(args.out).with_suffix("")
    surface_csv = f"{stem}_surface.csv"
    all_vals = np.empty(n * n)
    with open(surface_csv, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["tau_z", "tau_y", "tau_x",
                         "theta_z", "theta_y", "theta_x", "h"])
        for a in range(n):
            tau = np.broadcast_to(nodes[a], (n, 3))
            vals = design_opt._h_batch(np.asarray(lam, float), nodes, tau, shots)
            all_vals[a * n:(a + 1) * n] = vals
            for b in range(n):
                writer.writerow([_fmt(float(v)) for v in nodes[a]]
                                + [_fmt(float(v)) for v in nodes[b]]
                                + [_fmt(float(vals[b]))])
    return all_vals


def cmd_optimize(args) -> int:
    cfg = _load_config(args)
    params = _get_channel(cfg)
    opt_cfg = cfg.get("optimizer", {})
    shots = int(cfg.get("design", {}).get("shots", cfg.get("shots", 1000)))
    if shots < 1:
        raise ConfigError("shots must be at least 1")

    if args.planar:
        lam1, lam2 = params.lam[0], params.lam[1]
        tau_cf, vth_cf, val_cf, regime = risk.h2_optimal_design(lam1, lam2, shots)
        tau_g, vth_g, val_g = design_opt.optimize_planar_risk(lam1, lam2, shots)
        header = ["lambda_1", "lambda_2", "shots", "regime",
                  "tau_opt", "vartheta_opt", "h_min",
                  "tau_numeric", "vartheta_numeric", "h_numeric"]
        row = [lam1, lam2, shots, regime, tau_cf, vth_cf, val_cf,
               tau_g, vth_g, val_g]
        payload = {
            "channel": {"lambda": [lam1, lam2]}, "shots": shots,
            "closed_form": {"tau_opt": tau_cf, "vartheta_opt": vth_cf,
                            "h_min": val_cf, "regime": regime},
            "numeric": {"tau_opt": tau_g, "vartheta_opt": vth_g, "h_min": val_g},
        }
        _emit(args, header, row, payload)
        if args.out and args.emit_surface:
            grid = np.arange(0.0, math.pi / 2, math.pi / 2 / 256)
            t, v = np.meshgrid(grid, grid, indexing="ij")
            vals = design_opt.h2_batch(lam1, lam2, t, v, shots)
            stem = Path(args.out).with_suffix("")
            _write_csv(f"{stem}_surface.csv", ["tau", "vartheta", "h"],
                       [(float(a), float(b), float(c))
                        for a, b, c in zip(t.ravel(), v.ravel(), vals.ravel())])
            if args.figures:
                from . import plots
                plots.planar_surface_figure(f"{stem}_surface.png", grid, grid,
                                            vals, optimum=(tau_cf, vth_cf))
        return 0

    config = design_opt.OptimizerConfig(
        grid_resolution=int(opt_cfg.get("grid_resolution", 8)),
        n_starts=int(opt_cfg.get("n_starts", 5)),
        simplex_tol=float(opt_cfg.get("simplex_tol", 1e-10)),
        max_iter=int(opt_cfg.get("max_iter", 20000)))
    report = design_opt.conjecture_report(params.lam, shots, config)
    header = (["lambda_1", "lambda_2", "lambda_3", "shots", "h_min"]
              + [f"tau_opt_{c}" for c in "zyx"]
              + [f"theta_opt_{c}" for c in "zyx"]
              + ["conjecture_value_1", "conjecture_value_2",
                 "gap_1", "gap_2", "symmetry_residual"])
    row = (list(report.lam) + [shots, report.h_min] + list(report.tau_opt)
           + list(report.theta_opt) + list(report.conjecture_values)
           + list(report.gaps) + [report.symmetry_residual])
    payload = {
        "channel": {"lambda": list(report.lam)}, "shots": shots,
        "h_min": report.h_min,
        "tau_opt": list(report.tau_opt), "theta_opt": list(report.theta_opt),
        "conjecture_values": list(report.conjecture_values),
        "gaps": list(report.gaps),
        "symmetry_residual": report.symmetry_residual,
    }
    _emit(args, header, row, payload)
    if args.out and args.emit_surface:
        all_vals = _emit_surface_6d(args, cfg, report.lam, shots)
        if args.figures:
            from . import plots
            stem = Path(args.out).with_suffix("")
            plots.surface_profile_figure(f"{stem}_surface.png", all_vals,
                                         h_min=report.h_min,
                                         conjecture_values=report.conjecture_values)
    return 0


def cmd_two_step(args) -> int:
    cfg = _load_config(args)
    params = _get_channel(cfg)
    seed = _get_seed(cfg, args)
    budget = int(cfg.get("budget", 0))
    split = float(cfg.get("split", 0.2))
    if budget < 18:
        raise ConfigError('config needs "budget" of at least 18 shots')

    try:
        result = design_opt.two_step_tomography(params, budget, split, seed)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

    header = (["lambda_1", "lambda_2", "lambda_3", "phi_z", "phi_y", "phi_x",
               "budget", "split", "seed", "shots_stage1", "shots_stage2",
               "lambda_hat_1", "lambda_hat_2", "lambda_hat_3",
               "phi_hat_z", "phi_hat_y", "phi_hat_x", "cp_valid",
               "f_error", "g_error", "h_error", "g_bound_stage2"])
    row = (list(params.lam) + list(params.phi)
           + [budget, split, seed, result.shots_stage1, result.shots_stage2]
           + list(result.lam_hat) + list(result.phi_hat) + [result.cp_valid]
           + [result.f_error, result.g_error, result.h_error,
              result.g_bound_stage2])
    payload = {
        "channel": {"lambda": list(params.lam), "phi": list(params.phi)},
        "budget": budget, "split": split, "seed": seed,
        "shots": {"stage1": result.shots_stage1, "stage2": result.shots_stage2},
        "estimate": {"lambda": list(result.lam_hat), "phi": list(result.phi_hat),
                     "cp_valid": result.cp_valid},
        "stage2_angles": list(result.stage2_angles),
        "errors": {"f": result.f_error, "g": result.g_error, "h": result.h_error,
                   "g_bound_stage2": result.g_bound_stage2},
    }
    _emit(args, header, row, payload)
    if args.out and args.figures:
        from . import plots
        plots.two_step_figure(_figure_path(args.out), result, params)
    return 0


def cmd_reproduce(args) -> int:
    selected = None
    if args.criteria:
        try:
            selected = sorted({int(c) for c in args.criteria.split(",")})
        except ValueError as exc:
            raise ConfigError(f"bad criteria list: {args.criteria!r}") from exc
    results = reproduce.run_all(selected)

    if args.json:
        payload = [{"id": r.cid, "title": r.title, "passed": r.passed,
                    "detail": r.detail, "seconds": round(r.seconds, 3)}
                   for r in results]
        print(json.dumps(payload, indent=2))
    else:
        width = max(len(r.title) for r in results)
        for r in results:
            mark = "PASS" if r.passed else "FAIL"
            print(f"[{mark}] {r.cid:>2}  {r.title:<{width}}  {r.detail}")
        n_fail = sum(not r.passed for r in results)
        print(f"{len(results) - n_fail}/{len(results)} criteria passed")
    if args.out:
        _write_csv(args.out,
                   ["id", "title", "passed", "detail", "seconds"],
                   [(r.cid, r.title, r.passed, r.detail, round(r.seconds, 3))
                    for r in results])
    return 0 if all(r.passed for r in results) else 1


# ---------------------------------------------------------------------------

def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pauli-tomo",
        description="Pauli-channel tomography: simulation, risk reports, "
                    "design optimization, and result verification.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", type=str, required=True,
                       help="JSON run configuration")
        p.add_argument("--seed", type=int, default=None,
                       help="override the config seed")
        p.add_argument("--out", type=str, default=None,
                       help="report path (stdout JSON if omitted)")
        p.add_argument("--format", choices=("csv", "json"), default="csv",
                       help="report file format (default csv)")
        p.add_argument("--no-figures", dest="figures", action="store_false",
                       help="skip PNG rendering next to the report")

    p_sim = sub.add_parser("simulate", help="simulate one measurement record "
                                            "and run the estimator chain")
    common(p_sim)
    p_sim.set_defaults(func=cmd_simulate)

    p_risk = sub.add_parser("risk", help="analytic (and optional Monte Carlo) "
                                         "risk report")
    common(p_risk)
    p_risk.add_argument("--trials", type=int, default=None,
                        help="Monte Carlo trials (0 = analytic only)")
    p_risk.set_defaults(func=cmd_risk)

    p_opt = sub.add_parser("optimize", help="optimize the design angles")
    common(p_opt)
    p_opt.add_argument("--emit-surface", action="store_true",
                       help="also write grid-node risk values for plotting")
    p_opt.add_argument("--planar", action="store_true",
                       help="two-contraction planar problem (closed form + grid)")
    p_opt.set_defaults(func=cmd_optimize)

    p_two = sub.add_parser("two-step", help="run the align-then-measure protocol")
    common(p_two)
    p_two.set_defaults(func=cmd_two_step)

    p_rep = sub.add_parser("reproduce", help="run the verification suite")
    p_rep.add_argument("--json", action="store_true",
                       help="machine-readable verdicts on stdout")
    p_rep.add_argument("--out", type=str, default=None,
                       help="also write the verdict table as CSV")
    p_rep.add_argument("--criteria", type=str, default=None,
                       help="comma-separated criterion ids (default: all)")
    p_rep.set_defaults(func=cmd_reproduce)
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
