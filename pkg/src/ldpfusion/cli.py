"""Command-line front end.

    ldpfusion validate       --scenario oxygen
    ldpfusion calibrate      --config run.toml --out results/
    ldpfusion simulate       --scenario tracking --runs 1000 --seed 7
    ldpfusion privacy-check  --scenario tracking --q-a 0
    ldpfusion report         --out results/

Exit status: 0 success, 1 domain failure (model rejected, solver failure,
budget out of range, privacy verdict failed), 2 usage or configuration error.

Every output file carries the tool version, the config hash and the seed.
CSV files start with one ``#`` provenance line followed by one header row;
JSON files hold the same data under ``"provenance"``. Files are written to
a temporary name and renamed into place.
"""

import argparse
import json
import logging
import math
import os
import sys
import tempfile

import numpy as np

from . import __version__
from . import rng as rng_mod
from .config import ConfigError, RunConfig, apply_overrides, builtin_config, load_config
from .errors import BudgetOutOfRange, ConvergenceFailure, InvalidInput, SingularMatrix
from .fusion_center import fused_covariance, fusion_weights, perturbed_stacked_cov
from .privacy_mechanisms import (
    empirical_privacy_check,
    exceedance_probability_1d,
    exceedance_region_1d,
    sensitivity_profile,
)
from .sim_harness import rmse_summary, run_monte_carlo
from .system_model import validate_model

EXIT_OK, EXIT_DOMAIN, EXIT_USAGE = 0, 1, 2

log = logging.getLogger("ldpfusion")


class DomainFailure(Exception):
    pass


# -- output helpers ---------------------------------------------------------

def _fmt(x):
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def write_atomic(path, text):
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


class Output:
    """Writes provenance-stamped files into one directory."""

    def __init__(self, directory, cfg: RunConfig):
        self.dir = directory
        self.provenance = {
            "tool": "ldpfusion",
            "version": __version__,
            "config_sha256": cfg.hash,
            "seed": cfg.seed,
            "scenario": cfg.scenario_name,
        }
        self.written = []

    def path(self, name):
        return os.path.join(self.dir, name)

    def csv(self, name, header, rows):
        stamp = " ".join(f"{k}={v}" for k, v in self.provenance.items())
        lines = [f"# {stamp}", ",".join(header)]
        lines += [",".join(_fmt(v) for v in row) for row in rows]
        write_atomic(self.path(name), "\n".join(lines) + "\n")
        self.written.append(name)

    def json(self, name, payload):
        body = {"provenance": self.provenance, **payload}
        write_atomic(self.path(name), json.dumps(_jsonable(body), indent=2, sort_keys=True) + "\n")
        self.written.append(name)


# -- commands ---------------------------------------------------------------

def cmd_validate(cfg: RunConfig, out: Output, args):
    report = validate_model(cfg.build_model())
    out.json("validation.json", {"validation": report.to_dict()})
    for msg in report.messages:
        log.error(msg)
    print(f"model {'accepted' if report.accepted else 'rejected'}: "
          f"controllability rank {report.controllability_rank}, "
          f"observability rank {report.observability_rank} (n_x={report.n_x})")
    return EXIT_OK if report.accepted else EXIT_DOMAIN


def _require_accepted(cfg):
    report = validate_model(cfg.build_model())
    if not report.accepted:
        raise DomainFailure("model rejected: " + "; ".join(report.messages))


def _calibration_payload(scen):
    ens = scen.ensemble
    sp = sensitivity_profile(ens)
    n, L = scen.model.n_x, scen.model.L
    W = fusion_weights(ens.stacked, n, L)
    P_pert = perturbed_stacked_cov(ens, scen.plan.q_a)
    W_p = fusion_weights(P_pert, n, L)
    return sp, {
        "budget": {"epsilon": scen.budget.epsilon, "delta": scen.budget.delta, "zeta_margin": scen.zeta_margin},
        "profile": {"delta2": sp.delta2, "p_min": sp.p_min, "p_max": sp.p_max},
        "plan": scen.plan.to_dict(),
        "sensors": [
            {"P_pred": s.P_pred, "K": s.K, "P_est": s.P_est, "iterations": s.iterations, "riccati_residual": s.residual}
            for s in ens.per_sensor
        ],
        "stacked_covariance": ens.stacked,
        "weights": [b for b in W.blocks],
        "perturbed_weights": [b for b in W_p.blocks],
        "fused_covariance": fused_covariance(W, ens.stacked),
        "perturbed_fused_covariance": fused_covariance(W_p, P_pert),
    }


def cmd_calibrate(cfg: RunConfig, out: Output, args):
    _require_accepted(cfg)
    scen = cfg.build_scenario()
    sp, payload = _calibration_payload(scen)
    plan = scen.plan
    out.json("calibration.json", payload)
    out.csv(
        "calibration.csv",
        ["delta2", "p_min", "p_max", "threshold", "kind", "q_a", "zeta", "zeta_bound"],
        [[sp.delta2, sp.p_min, sp.p_max, plan.threshold, plan.kind.value, plan.q_a, plan.zeta, plan.zeta_bound]],
    )
    print(f"delta2={sp.delta2:.6g} p_min={sp.p_min:.6g} p_max={sp.p_max:.6g} "
          f"threshold={plan.threshold:.6g} -> {plan.kind.value} q_a={plan.q_a:.6g}")
    return EXIT_OK


def cmd_simulate(cfg: RunConfig, out: Output, args):
    _require_accepted(cfg)
    scen = cfg.build_scenario()
    res = run_monte_carlo(scen, threads=args.threads)
    names = res.estimator_names()
    out.csv("rmse_series.csv", ["k"] + names,
            [[int(k)] + [res.series(nm)[t] for nm in names] for t, k in enumerate(res.steps)])
    n = scen.model.n_x
    comp_cols, comp_data = [], []
    for i in range(res.rmse_local.shape[0]):
        for c in range(n):
            comp_cols.append(f"local{i + 1}_x{c}")
            comp_data.append(res.rmse_local_components[i][:, c])
    for c in range(n):
        comp_cols.append(f"fused_x{c}")
        comp_data.append(res.rmse_fused_components[:, c])
    if res.rmse_perturbed_fused is not None:
        for c in range(n):
            comp_cols.append(f"perturbed_fused_x{c}")
            comp_data.append(res.rmse_perturbed_fused_components[:, c])
    out.csv("rmse_components.csv", ["k"] + comp_cols,
            [[int(k)] + [col[t] for col in comp_data] for t, k in enumerate(res.steps)])
    summary = rmse_summary(res)
    predicted = res.metadata["predicted_mse"]
    out.csv(
        "rmse_summary.csv",
        ["estimator", "steady_rmse", "stderr", "steady_mse", "predicted_mse"],
        [[nm, summary[nm].rmse, summary[nm].stderr, summary[nm].mse, predicted[nm]] for nm in names],
    )
    out.json("simulation.json", {
        "metadata": res.metadata,
        "steady_window": list(res.steady_window),
        "summary": {nm: vars(summary[nm]) for nm in names},
        "privacy": res.privacy_report.to_dict() if res.privacy_report else None,
    })
    for nm in names:
        print(f"{nm:>16s}: steady RMSE {summary[nm].rmse:.5f} +/- {summary[nm].stderr:.5f} "
              f"(predicted {math.sqrt(predicted[nm]):.5f})")
    return EXIT_OK


def _pdf_grid(blocks, points=401):
    """Marginal densities of the first state component, for plotting."""
    sds = [math.sqrt(b[0, 0]) for b in blocks]
    span = 5.0 * max(sds)
    grid = np.linspace(-span, span, points)
    cols = [np.exp(-0.5 * (grid / sd) ** 2) / (sd * math.sqrt(2 * math.pi)) for sd in sds]
    return grid, cols


def cmd_privacy_check(cfg: RunConfig, out: Output, args):
    _require_accepted(cfg)
    scen = cfg.build_scenario()
    n = scen.model.n_x
    blocks = [s.P_est + scen.plan.q_a * np.eye(n) for s in scen.ensemble.per_sensor]
    if len(blocks) < 2:
        raise DomainFailure("privacy check needs at least two sensors")
    report = empirical_privacy_check(
        blocks, scen.budget, scen.privacy_samples,
        rng_mod.substream(scen.master_seed, rng_mod.STREAM_PRIVACY),
    )
    out.csv("privacy_pairs.csv", ["i", "j", "fraction", "bound"],
            [[i, j, f, report.delta + report.tolerance] for (i, j), f in sorted(report.fractions.items())])
    regions = []
    if n == 1:
        eps = scen.budget.epsilon
        for i in range(len(blocks)):
            for j in range(len(blocks)):
                if i == j:
                    continue
                Pi, Pj = float(blocks[i][0, 0]), float(blocks[j][0, 0])
                exact = exceedance_probability_1d(Pi, Pi, Pj, eps)
                for lo, hi in exceedance_region_1d(Pi, Pj, eps):
                    regions.append([i, j, lo, hi, exact])
        out.csv("privacy_regions.csv", ["i", "j", "lo", "hi", "exact_probability"], regions)
    grid, cols = _pdf_grid(blocks)
    out.csv("privacy_pdf.csv", ["offset"] + [f"pdf_sensor{i + 1}" for i in range(len(blocks))],
            [[g] + [c[t] for c in cols] for t, g in enumerate(grid)])
    out.json("privacy.json", {
        "plan": scen.plan.to_dict(),
        "report": report.to_dict(),
        "regions": [{"i": r[0], "j": r[1], "lo": r[2], "hi": r[3], "exact_probability": r[4]} for r in regions],
    })
    verdict = "PASS" if report.passed else "FAIL"
    print(f"privacy {verdict}: max exceedance {report.max_fraction:.3g} vs bound "
          f"{report.delta + report.tolerance:.4g} (q_a={scen.plan.q_a:.6g})")
    return EXIT_OK if report.passed else EXIT_DOMAIN


REPORT_SOURCES = ("validation.json", "calibration.json", "simulation.json", "privacy.json")


def cmd_report(cfg, out: Output, args):
    found = {}
    for name in REPORT_SOURCES:
        p = out.path(name)
        if os.path.exists(p):
            with open(p) as fh:
                found[name.split(".")[0]] = json.load(fh)
    if not found:
        raise DomainFailure(f"no prior outputs found in {out.dir}")
    summary = {}
    if "validation" in found:
        summary["accepted"] = found["validation"]["validation"]["accepted"]
    if "calibration" in found:
        summary["profile"] = found["calibration"]["profile"]
        summary["plan"] = found["calibration"]["plan"]
    if "simulation" in found:
        summary["steady_rmse"] = {k: v["rmse"] for k, v in found["simulation"]["summary"].items()}
    if "privacy" in found:
        summary["privacy_passed"] = found["privacy"]["report"]["passed"]
        summary["privacy_max_fraction"] = found["privacy"]["report"]["max_fraction"]
    out.provenance = {**out.provenance, "sources": {k: v["provenance"] for k, v in found.items()}}
    out.json("report.json", {"summary": summary})
    print(json.dumps(_jsonable(summary), indent=2, sort_keys=True))
    return EXIT_OK


COMMANDS = {
    "validate": cmd_validate,
    "calibrate": cmd_calibrate,
    "simulate": cmd_simulate,
    "privacy-check": cmd_privacy_check,
    "report": cmd_report,
}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    src = common.add_mutually_exclusive_group()
    src.add_argument("--config", metavar="PATH", help="TOML run configuration")
    src.add_argument("--scenario", choices=["oxygen", "tracking"], help="built-in scenario (default oxygen)")
    common.add_argument("--seed", type=int, metavar="U64")
    common.add_argument("--runs", type=int, metavar="N")
    common.add_argument("--horizon", type=int, metavar="N")
    common.add_argument("--threads", type=int, default=1, metavar="N", help="worker threads for simulate")
    common.add_argument("--out", metavar="DIR", help="output directory (default: config output.dir or ./ldpfusion-out)")
    common.add_argument("--epsilon", type=float)
    common.add_argument("--delta", type=float)
    common.add_argument("--q-a", dest="q_a", type=float, metavar="Q", help="force the injected noise level")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="ldpfusion", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sub.add_parser(name, parents=[common])
    return parser


def _load(args):
    raw = load_config(args.config) if args.config else builtin_config(args.scenario or "oxygen")
    if args.seed is not None and not 0 <= args.seed < 2 ** 64:
        raise ConfigError("--seed must be an unsigned 64-bit integer")
    raw = apply_overrides(raw, seed=args.seed, runs=args.runs, horizon=args.horizon,
                          epsilon=args.epsilon, delta=args.delta, q_a=args.q_a)
    return RunConfig(raw)


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.threads < 1:
        parser.error("--threads must be at least 1")
    try:
        cfg = _load(args)
        out_dir = args.out or cfg.raw.get("output", {}).get("dir") or "ldpfusion-out"
        return COMMANDS[args.command](cfg, Output(out_dir, cfg), args)
    except (ConfigError, KeyError) as exc:
        print(f"error: {exc.args[0] if exc.args else exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DomainFailure, BudgetOutOfRange, ConvergenceFailure, SingularMatrix, InvalidInput) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN


if __name__ == "__main__":
    sys.exit(main())
