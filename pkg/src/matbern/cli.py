"""Command-line front end: ``matbern <kind> [CONFIG] [flags]``.

Exit codes: 0 success, 1 a dominance check failed, 2 configuration error,
3 runtime error.  Diagnostics go to standard error.
"""

import argparse
import csv
import dataclasses
import hashlib
import io
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import bounds, checks, config, ensembles, kernelops, montecarlo
from .ensembles import EnsembleParams
from .errors import ConfigError, MatbernError

HEADER = (
    "t",
    "bound_raw",
    "bound_clipped",
    "regime",
    "p_hat",
    "ci_low",
    "ci_high",
    "exact_p",
    "dominated",
    "ensemble_id",
    "seed",
)
BASELINE_HEADER = ("t", "bound_clipped", "classical_baseline", "intdim_baseline")

EXIT_OK, EXIT_DOMINANCE, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2, 3


def fmt(x) -> str:
    """CSV cell text: 17 significant digits, empty for missing values."""
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        if math.isnan(x):
            return ""
        return format(float(x), ".17g")
    return str(x)


def _json_value(x):
    if isinstance(x, (np.bool_,)):
        return bool(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return None if math.isnan(x) else x
    if isinstance(x, np.integer):
        return int(x)
    return x


def render(rows, header, fmt_name: str) -> str:
    if fmt_name == "json":
        data = [{k: _json_value(r.get(k)) for k in header} for r in rows]
        return json.dumps(data, indent=2, allow_nan=False) + "\n"
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([fmt(r.get(k)) for k in header])
    return buf.getvalue()


def write_text(path, text: str):
    """Write through a temporary file so a failed run never leaves a partial file."""
    if path is None:
        sys.stdout.write(text)
        return
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def content_id(obj) -> str:
    blob = json.dumps(obj, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def _rows_from_report(report, ensemble_id, seed):
    out = []
    for r in report.rows:
        out.append(
            {
                "t": r.t,
                "bound_raw": r.bound_raw,
                "bound_clipped": r.bound_clipped,
                "regime": r.regime,
                "p_hat": r.p_hat,
                "ci_low": r.ci_low,
                "ci_high": r.ci_high,
                "exact_p": r.exact_p,
                "dominated": r.dominated,
                "ensemble_id": ensemble_id,
                "seed": seed,
            }
        )
    return out


# ---------------------------------------------------------------------------
# parameter plumbing
# ---------------------------------------------------------------------------


def resolve_params(cfg, spec, seed) -> EnsembleParams:
    """Ensemble parameters with any overrides from the ``bound`` section applied."""
    b = cfg.bound or {}
    if spec is not None:
        trials = min(cfg.sim["trials"], 20_000)
        params = ensembles.ensemble_params(spec, trials=trials, seed=seed)
    else:
        d = b.get("d", len(b.get("EW_eigs", [])) or 1)
        params = EnsembleParams(d, b.get("n", 1), 0.0, 1.0, 0.0, 0.0, True)
    over = {k: b[k] for k in ("n", "d", "sigma2", "U", "trace_var") if k in b}
    if "EW_eigs" in b:
        over["variance"] = np.diag(np.asarray(b["EW_eigs"], dtype=float))
    if over:
        params = dataclasses.replace(params, **over)
        idim = params.trace_var / params.sigma2 if params.sigma2 > 0 else 0.0
        params = dataclasses.replace(params, intdim=idim)
    return params


def _event_level(cfg, params):
    s = cfg.sim.get("sigma2_event")
    return float(params.n) if s is None else float(s)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_bound(cfg, args):
    spec = cfg.build_ensemble() if cfg.ensemble else None
    seed = cfg.sim["seed"]
    params = resolve_params(cfg, spec, seed)
    regime = cfg.bound["regime"]
    grid = cfg.t_grid or montecarlo.default_t_grid(params)
    EW = params.variance
    s_ev = _event_level(cfg, params) if regime == "martingale" else None
    if regime != "martingale" and params.sigma2 == 0 and spec is None:
        raise ConfigError("bound needs sigma2 > 0")
    eid = content_id(cfg.ensemble if cfg.ensemble else cfg.bound)
    rows = []
    for t in grid:
        res = montecarlo.bound_for_params(params, regime, t, EWn=EW, sigma2_event=s_ev)
        rows.append(
            {
                "t": t,
                "bound_raw": res.raw,
                "bound_clipped": res.clipped,
                "regime": res.regime,
                "ensemble_id": eid,
                "seed": seed,
            }
        )
    return rows, EXIT_OK, None


def cmd_simulate(cfg, args):
    spec = cfg.build_ensemble()
    sim = cfg.sim
    grid = cfg.t_grid
    if grid is None:
        grid = montecarlo.default_t_grid(ensembles.ensemble_params(spec, trials=min(sim["trials"], 20_000), seed=sim["seed"]))
    sc = montecarlo.SimConfig(spec, grid, sim["trials"], sim["seed"], sim["confidence"])
    est = montecarlo.estimate_tail(sc, threads=args.threads)
    exact_p = [None] * len(est)
    if ensembles.enumerable(spec):
        exact_p = list(ensembles.exact_tail(ensembles.enumerate_sum_distribution(spec), grid))
    eid = content_id(cfg.ensemble)
    rows = [
        {
            "t": e.t,
            "regime": "empirical",
            "p_hat": e.p_hat,
            "ci_low": e.ci_low,
            "ci_high": e.ci_high,
            "exact_p": None if p is None else float(p),
            "ensemble_id": eid,
            "seed": sim["seed"],
        }
        for e, p in zip(est, exact_p)
    ]
    return rows, EXIT_OK, None


def cmd_compare(cfg, args):
    spec = cfg.build_ensemble()
    sim = cfg.sim
    params = resolve_params(cfg, spec, sim["seed"])
    regime = cfg.bound["regime"]
    grid = cfg.t_grid or montecarlo.default_t_grid(params)
    exact = bool(sim["exact"])
    if exact and not ensembles.enumerable(spec):
        print(f"note: exact mode is not feasible for {spec.family}; simulating instead", file=sys.stderr)
        exact = False
    s_ev = _event_level(cfg, params) if regime == "martingale" else None
    report = montecarlo.run_dominance(
        spec,
        grid,
        regime=regime,
        trials=sim["trials"],
        seed=sim["seed"],
        confidence=sim["confidence"],
        threads=args.threads,
        exact=exact,
        sigma2_event=s_ev,
        params=params,
    )
    rows = _rows_from_report(report, content_id(cfg.ensemble), sim["seed"])
    base = []
    for r in report.rows:
        if params.sigma2 > 0:
            cl = bounds.classical_dimension_baseline(params.d, params.sigma2, r.t, params.U)
            hk = bounds.intdim_baseline(params.intdim, params.sigma2, r.t, params.U)
        else:
            cl = hk = 0.0
        base.append({"t": r.t, "bound_clipped": r.bound_clipped, "classical_baseline": cl, "intdim_baseline": hk})
    code = EXIT_OK if report.passed else EXIT_DOMINANCE
    return rows, code, base


def cmd_kernel(cfg, args):
    k = cfg.kernel
    spec = cfg.kernel_spec()
    seed = (cfg.sim or config.SIM_DEFAULTS)["seed"]
    conf = (cfg.sim or config.SIM_DEFAULTS)["confidence"]
    n, m, samples = k["n"], k["m"], k["samples"]
    params = kernelops.xi_parameters(spec, m)
    lo = bounds.kernel_validity_threshold(n, params.kappa, params.Lk_norm)
    grid = cfg.kernel_t_grid
    if grid is None:
        hi = max(2.0 * lo, lo + 6.0 * math.sqrt(params.kappa * params.Lk_norm / n))
        grid = tuple(float(x) for x in np.linspace(lo, hi, 10))
    elif grid[0] < lo:
        raise ConfigError(f"kernel t_grid starts below the validity threshold {lo:.6g}")
    report = kernelops.kernel_dominance(spec, n, grid, samples, m, seed, conf, threads=args.threads)
    eid = content_id({"kernel": k["spec"], "n": n, "m": m})
    rows = _rows_from_report(report, eid, seed)
    code = EXIT_OK if report.passed else EXIT_DOMINANCE
    return rows, code, None


def cmd_inequalities(cfg, args):
    seed = args.seed if args.seed is not None else 20240101
    results = checks.run_all(seed)
    width = max(len(c.name) for c in results)
    for c in results:
        status = "PASS" if c.passed else "FAIL"
        print(f"{status}  {c.name:<{width}}  cases={c.cases:<6d} worst_slack={c.worst_slack:.3e} {c.detail}")
    return None, EXIT_OK if all(c.passed for c in results) else EXIT_DOMINANCE, None


COMMANDS = {
    "bound": cmd_bound,
    "simulate": cmd_simulate,
    "compare": cmd_compare,
    "kernel": cmd_kernel,
    "inequalities": cmd_inequalities,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="matbern", description="Matrix Bernstein bounds and their empirical checks.")
    sub = p.add_subparsers(dest="command", required=True)
    for name in (*COMMANDS, "run"):
        sp = sub.add_parser(name)
        sp.add_argument("config", nargs="?" if name == "inequalities" else None, help="YAML or JSON experiment file")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--trials", type=int)
        sp.add_argument("--out")
        sp.add_argument("--format", choices=("csv", "json"))
        sp.add_argument("--threads", type=int, default=int(os.environ.get("MB_THREADS", "1") or 1))
        sp.add_argument("--exact", action="store_true")
    sc = sub.add_parser("schema", help="print the config JSON schema")
    sc.add_argument("--out")
    return p


def apply_flags(cfg, args):
    if args.seed is not None:
        if not 0 <= args.seed < 2**64:
            raise ConfigError("--seed must be an unsigned 64-bit integer")
        if cfg.sim is not None:
            cfg.sim["seed"] = args.seed
        elif cfg.kind == "kernel":
            cfg.sim = {**config.SIM_DEFAULTS, "seed": args.seed}
    if args.trials is not None:
        if args.trials < 1:
            raise ConfigError("--trials must be positive")
        if cfg.sim is not None:
            cfg.sim["trials"] = args.trials
        if cfg.kernel is not None:
            cfg.kernel["samples"] = args.trials
    if args.exact and cfg.sim is not None:
        cfg.sim["exact"] = True
    if args.out:
        cfg.output["path"] = args.out
    if args.format:
        cfg.output["format"] = args.format
    if args.threads < 1:
        raise ConfigError("--threads must be positive")
    return cfg


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    if args.command == "schema":
        write_text(args.out, config.schema_json())
        return EXIT_OK
    try:
        if args.config is None:
            cfg = config.parse({"kind": "inequalities"})
        else:
            cfg = config.load(args.config)
        kind = cfg.kind if args.command == "run" else args.command
        if kind != cfg.kind:
            raise ConfigError(f"config kind {cfg.kind!r} does not match subcommand {kind!r}")
        cfg = apply_flags(cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        rows, code, base = COMMANDS[kind](cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (MatbernError, ValueError, ArithmeticError, MemoryError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    if rows is not None:
        fmt_name = cfg.output["format"]
        path = cfg.output.get("path")
        write_text(path, render(rows, HEADER, fmt_name))
        if base is not None:
            if path:
                p = Path(path)
                side = p.with_name(p.stem + ".baselines." + fmt_name)
                write_text(side, render(base, BASELINE_HEADER, fmt_name))
            else:
                print("note: baseline columns are written only with --out", file=sys.stderr)
    if code == EXIT_DOMINANCE:
        print("dominance check failed", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
