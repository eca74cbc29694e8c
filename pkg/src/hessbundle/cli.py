"""Command-line entry point: ``hessbundle {verify,solve,functional,positivity,report}``.

Exit codes: 0 success, 1 configuration error, 2 IO error, 3 failure (a suite
failed or the solver did not converge).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import platform
import sys
import time
from pathlib import Path

import numpy as np

from .config import SCALAR_KEYS, RunConfig, load_config
from .errors import ConfigurationError, HessBundleError, SnapshotError

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_FAIL = 0, 1, 2, 3


def _versions():
    import numba
    import scipy

    from . import __version__

    return {
        "hessbundle": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "numba": numba.__version__,
    }


def _prepare_dir(path):
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    if not os.access(out, os.W_OK):
        raise PermissionError(f"output directory {out} is not writable")
    return out


def _write_text(path, text):
    with open(path, "w", newline="") as fh:
        fh.write(text)


def _write_json(path, obj):
    _write_text(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _write_manifest(out, command, cfg, timings, outputs, extra=None, name="manifest.json"):
    manifest = {
        "command": command,
        "config_sha256": cfg.digest() if cfg is not None else None,
        "config": cfg.data if cfg is not None else None,
        "versions": _versions(),
        "timings_seconds": timings,
        "outputs": sorted(outputs),
        "threads": os.environ.get("HBL_THREADS", "1"),
    }
    if extra:
        manifest.update(extra)
    _write_json(out / name, manifest)


def _csv(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


# ----------------------------------------------------------------------------
# commands


def cmd_verify(cfg: RunConfig, out: Path) -> int:
    from .verify import VerifyConfig, run_all, verdict

    s = cfg.samples
    vcfg = VerifyConfig(
        n=cfg.n, N=cfg.N, r=cfg.r, m=cfg.levels, k=cfg.k, seed=cfg.seed, amplitude=cfg.amplitude, band=cfg.band,
        nodes=cfg.path["nodes"], pairs=s["pairs"], triples=s["triples"], directions=s["directions"],
        geodesics=s["geodesics"], t_samples=s["t_samples"], nakano_samples=s["nakano"],
        local_min_trials=s["local_min_trials"], local_min_eps=s["local_min_eps"],
        tol_scale=cfg.verify["tol_scale"], suites=tuple(cfg.verify["suites"]),
    )
    t0 = time.perf_counter()

    def progress(name, res):
        print(f"{name:20s} {'PASS' if res.passed else 'FAIL'}  ({res.seconds:.1f}s)", file=sys.stderr)

    results = run_all(vcfg, progress)
    doc = verdict(results, timings=False)
    _write_json(out / "verdict.json", doc)
    timings = {name: r.seconds for name, r in results.items()}
    timings["total"] = time.perf_counter() - t0
    _write_manifest(out, "verify", cfg, timings, ["verdict.json"], {"passed": doc["passed"]})
    return EXIT_OK if doc["passed"] else EXIT_FAIL


def _start_metric(cfg, bg):
    from .bundle import Metric, exp_step, random_direction, random_metric

    sv = cfg.solver
    if sv["start"] == "background":
        return Metric.identity(bg)
    if sv["start"] == "random":
        return random_metric(bg, cfg.seed, cfg.amplitude, cfg.band)
    H = Metric.identity(bg)
    rng = np.random.default_rng(cfg.seed)
    return exp_step(H, random_direction(H, rng, cfg.band), sv["perturbation"])


def cmd_solve(cfg: RunConfig, out: Path, start_path=None) -> int:
    from .snapshot import load_metric, save_metric
    from .solver import SolverConfig, solve

    bg = cfg.background()
    H = load_metric(start_path, bg) if start_path else _start_metric(cfg, bg)
    sv = cfg.solver
    scfg = SolverConfig(k=cfg.k, tol=sv["tol"], max_iters=sv["max_iters"], dt0=sv["dt0"],
                        cone_every=sv["cone_every"], cone_sample=sv["cone_sample"])
    t0 = time.perf_counter()
    Hs, report = solve(H, scfg)
    elapsed = time.perf_counter() - t0
    _write_text(out / "trace.csv", report.trace_csv())
    save_metric(out / "metric.hbl", Hs)
    _write_json(out / "convergence.json", report.summary())
    _write_manifest(out, "solve", cfg, {"solve": elapsed}, ["trace.csv", "metric.hbl", "metric.hbl.json", "convergence.json"],
                    {"converged": report.converged})
    return EXIT_OK if report.converged else EXIT_FAIL


def cmd_functional(cfg: RunConfig, out: Path, h0_path=None, h_path=None) -> int:
    from .bundle import random_metric
    from .functional import PathSpec, donaldson_M, lambda_k, reports_to_csv
    from .snapshot import load_metric

    bg = cfg.background()
    H0 = load_metric(h0_path, bg) if h0_path else random_metric(bg, cfg.seed, cfg.amplitude, cfg.band)
    H = load_metric(h_path, bg) if h_path else random_metric(bg, cfg.seed + 1, cfg.amplitude, cfg.band)
    lam = lambda_k(bg, cfg.k)
    p = cfg.path
    waypoints = [random_metric(bg, cfg.seed + 100 + i, cfg.amplitude, cfg.band) for i in range(p["waypoints"])]
    t0 = time.perf_counter()
    reports = []
    for kind in p["kinds"]:
        spec = PathSpec(kind, p["nodes"], waypoints if kind == "piecewise" else [])
        reports.append(donaldson_M(H0, H, cfg.k, spec, lam))
    _write_text(out / "functional.csv", reports_to_csv(reports))
    _write_manifest(out, "functional", cfg, {"functional": time.perf_counter() - t0}, ["functional.csv"])
    return EXIT_OK


def cmd_positivity(cfg: RunConfig, out: Path, h_path=None) -> int:
    from .bundle import Metric
    from .hessian import all_cone_reports, write_positivity
    from .snapshot import load_metric

    bg = cfg.background()
    H = load_metric(h_path, bg) if h_path else Metric.identity(bg)
    t0 = time.perf_counter()
    reports = all_cone_reports(H, cfg.k)
    write_positivity(reports, out / "positivity.csv", out / "positivity.json")
    _write_manifest(out, "positivity", cfg, {"positivity": time.perf_counter() - t0}, ["positivity.csv", "positivity.json"])
    return EXIT_OK


def cmd_report(run_dir) -> int:
    """Split ``trace.csv`` of a solve run into plot-ready two-column CSVs."""
    run = Path(run_dir)
    trace = run / "trace.csv"
    with open(trace, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows or "iter" not in rows[0]:
        raise SnapshotError(f"{trace}: not a solver trace")
    t0 = time.perf_counter()
    outputs = []
    for col, name in (("M", "plot_M.csv"), ("residual_sup", "plot_residual.csv"), ("residual_l2", "plot_residual_l2.csv"),
                      ("cone_margin", "plot_cone_margin.csv"), ("dt", "plot_dt.csv")):
        _write_text(run / name, _csv(("iter", col), [(r["iter"], r[col]) for r in rows]))
        outputs.append(name)
    _write_manifest(run, "report", None, {"report": time.perf_counter() - t0}, outputs, name="report_manifest.json")
    return EXIT_OK


# ----------------------------------------------------------------------------
# argument handling


def _parse_override(text):
    if "=" not in text:
        raise ConfigurationError(f"override {text!r} is not key=value")
    key, raw = text.split("=", 1)
    try:
        value = json.loads(raw)
    except ValueError:
        value = raw
    return key.strip(), value


def build_parser():
    p = argparse.ArgumentParser(prog="hessbundle", description="Bundle-valued k-Hessian equations on flat tori.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="JSON config (schema hbl-config/1); defaults if omitted")
        sp.add_argument("--out", help="output directory (overrides output_dir)")
        sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help=f"override a scalar field ({', '.join(SCALAR_KEYS)}, m)")

    common(sub.add_parser("verify", help="run the verification suites"))
    sp = sub.add_parser("solve", help="run the gradient flow")
    common(sp)
    sp.add_argument("--start", help="metric snapshot to start from")
    sp = sub.add_parser("functional", help="evaluate the functional over configured paths")
    common(sp)
    sp.add_argument("--h0", help="reference metric snapshot")
    sp.add_argument("--h", help="target metric snapshot")
    sp = sub.add_parser("positivity", help="cone reports for a metric")
    common(sp)
    sp.add_argument("--metric", help="metric snapshot (default: the constant solution)")
    sp = sub.add_parser("report", help="plot-ready CSVs from a solve run")
    sp.add_argument("run_dir")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "report":
            return cmd_report(args.run_dir)
        cfg = load_config(args.config)
        overrides = dict(_parse_override(s) for s in args.set)
        if args.out:
            overrides["output_dir"] = args.out
        if overrides:
            cfg = cfg.with_overrides(overrides)
        out = _prepare_dir(cfg.output_dir)
        if args.command == "verify":
            return cmd_verify(cfg, out)
        if args.command == "solve":
            return cmd_solve(cfg, out, args.start)
        if args.command == "functional":
            return cmd_functional(cfg, out, args.h0, args.h)
        if args.command == "positivity":
            return cmd_positivity(cfg, out, args.metric)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, SnapshotError) as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO
    except HessBundleError as exc:
        print(f"failure: {exc}", file=sys.stderr)
        return EXIT_FAIL
    return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
