"""Command-line front end: ``rigidloc estimate | sweep | crb``.

Exit codes: 0 success, 2 usage or configuration error, 3 estimator error,
4 output path not writable.
"""
from __future__ import annotations

import argparse
import datetime as _dt
import hashlib
import json
import math
import sys
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__
from .config import ExperimentConfig, dump_config, load_config, parse_config
from .errors import ConfigurationError, RigidLocError
from .estimators import METHODS, classical_ls, estimate
from .measurement import build_whitened_model, center_model, db_to_linear, true_ranges
from .montecarlo import crb_table, format_crb_csv, format_csv, run_experiment, trial_anchors

EXIT_OK, EXIT_CONFIG, EXIT_ESTIMATOR, EXIT_OUTPUT = 0, 2, 3, 4
PRESETS = ("paper_fig2", "paper_fig7", "smoke")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def preset_text(name: str) -> str:
    return resources.files("rigidloc.presets").joinpath(f"{name}.cfg").read_text()


def _load(args) -> ExperimentConfig:
    if args.config is None:
        cfg = ExperimentConfig()
    elif args.config.startswith("preset:"):
        name = args.config.split(":", 1)[1]
        if name not in PRESETS:
            raise ConfigurationError(f"unknown preset {name!r}; choose from {PRESETS}")
        cfg = parse_config(preset_text(name))
    else:
        cfg = load_config(args.config)
    overrides = {"seed": args.seed, "trials": args.trials}
    if getattr(args, "fixed_anchors", False):
        overrides["fixed_anchors"] = True
    if getattr(args, "workers", None) is not None:
        overrides["workers"] = args.workers
    return cfg.with_overrides(**overrides)


def _read_ranges(path, M, N) -> np.ndarray:
    try:
        Y = np.loadtxt(path, delimiter=None if Path(path).suffix != ".csv" else ",", ndmin=2)
    except (OSError, ValueError) as exc:
        raise ConfigurationError(f"cannot read measurements {path}: {exc}") from None
    if Y.shape != (M, N):
        raise ConfigurationError(f"measurement matrix must be {M}x{N} (anchors x sensors), got "
                                 f"{Y.shape[0]}x{Y.shape[1]}")
    return Y


def _fmt(values) -> str:
    return " ".join(f"{v: .12e}" for v in np.ravel(values))


def cmd_estimate(args) -> int:
    cfg = _load(args)
    C = cfg.topology_matrix()
    A = trial_anchors(cfg, 0)
    zeta_db = args.zeta_db if args.zeta_db is not None else cfg.zeta_db[0]
    zeta = float(db_to_linear(zeta_db))
    if args.measurements is not None:
        Y = _read_ranges(args.measurements, A.shape[1], C.shape[1])
    else:
        pose = cfg.pose()
        R = true_ranges(A, pose.rotation @ C + pose.translation[:, None])
        if args.noiseless:
            Y = R
        else:
            rng = np.random.default_rng([cfg.seed, 0, 2])
            Y = R + rng.standard_normal(R.shape) * R / math.sqrt(zeta)
    try:
        wm = build_whitened_model(A, Y * Y, zeta, cfg.reference_sensor,
                                  1e-6 if cfg.clamp else None)
        if args.method == "classical":
            S = classical_ls(wm)
            print("method classical")
            for n in range(S.shape[1]):
                print(f"s[{n}] {_fmt(S[:, n])}")
            return EXIT_OK
        est = estimate(args.method, wm, C, center_model(wm, C), cfg.newton())
    except ConfigurationError:
        raise
    except (RigidLocError, np.linalg.LinAlgError) as exc:
        print(f"estimator error: {exc}", file=sys.stderr)
        return EXIT_ESTIMATOR
    print(f"method {est.method}")
    print(f"Q {_fmt(est.rotation)}")
    print(f"t {_fmt(est.translation)}")
    print(f"det {est.det: .12e}")
    print(f"iterations {est.iterations}")
    print(f"converged {str(est.converged).lower()}")
    return EXIT_OK


def _sha256(text: str) -> str:
    return hashlib.sha256(text.encode()).hexdigest()


def manifest(cfg: ExperimentConfig, csv_text: str) -> dict:
    """Reproduction record for a CSV: config echo, version, seed and row checksums."""
    lines = csv_text.splitlines()
    return {
        "tool": "rigidloc",
        "version": __version__,
        "seed": cfg.seed,
        "anchor_mode": "fixed" if cfg.fixed_anchors else "redrawn-per-trial",
        "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
        "config": dump_config(cfg),
        "header_sha256": _sha256(lines[0]),
        "row_sha256": [_sha256(line) for line in lines[1:]],
        "csv_sha256": _sha256(csv_text),
    }


def _open_output(path):
    try:
        return open(path, "w", newline="")
    except OSError as exc:
        print(f"cannot write {path}: {exc}", file=sys.stderr)
        return None


def _summary(rows, methods):
    width = max(len(m) for m in methods)
    for row in rows:
        print(f"zeta = {row.zeta_db:g} dB  rcrb_q = {row.rcrb_q:.4g}  rcrb_t = {row.rcrb_t:.4g}  "
              f"classical rmse_s = {row.classical_rmse_s:.4g}")
        for m in methods:
            mm = row.methods[m]
            print(f"  {m:<{width}}  rmse_q {mm.rmse_q:.4g}  mae_q {mm.mae_q:.4g}  "
                  f"bias_q {mm.bias_q:.4g}  rmse_t {mm.rmse_t:.4g}  rmse_s {mm.rmse_s:.4g}  "
                  f"fail {mm.failures}  nonconv {mm.nonconverged}  refl {mm.reflections}")


def cmd_sweep(args) -> int:
    cfg = _load(args)
    handle = _open_output(args.out) if args.out else None
    if args.out and handle is None:
        return EXIT_OUTPUT
    try:
        rows = run_experiment(cfg)
        text = format_csv(rows, cfg.estimators)
        if handle is None:
            sys.stdout.write(text)
            return EXIT_OK
        handle.write(text)
    finally:
        if handle is not None:
            handle.close()
    mpath = Path(str(args.out) + ".manifest.json")
    try:
        mpath.write_text(json.dumps(manifest(cfg, text), indent=2) + "\n")
    except OSError as exc:
        print(f"cannot write {mpath}: {exc}", file=sys.stderr)
        return EXIT_OUTPUT
    if not args.quiet:
        _summary(rows, cfg.estimators)
    return EXIT_OK


def cmd_crb(args) -> int:
    cfg = _load(args)
    text = format_crb_csv(crb_table(cfg))
    if args.out is None:
        sys.stdout.write(text)
        return EXIT_OK
    handle = _open_output(args.out)
    if handle is None:
        return EXIT_OUTPUT
    with handle:
        handle.write(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="rigidloc", description="Rigid body localization from range measurements.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, config_required):
        p.add_argument("config", nargs=None if config_required else "?",
                       help="configuration file, or preset:NAME with NAME in " + ", ".join(PRESETS))
        p.add_argument("--seed", type=int, help="master seed (overrides the config)")
        p.add_argument("--trials", type=int, help="Monte-Carlo trials (overrides the config)")
        p.add_argument("--fixed-anchors", action="store_true",
                       help="reuse one anchor draw for every trial")

    p = sub.add_parser("estimate", help="estimate one pose from a measurement file or a simulated draw")
    common(p, False)
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--measurements", metavar="FILE",
                     help="anchor x sensor matrix of measured ranges (whitespace or .csv)")
    src.add_argument("--simulate", action="store_true", help="simulate ranges from the config pose")
    p.add_argument("--noiseless", action="store_true", help="with --simulate, use exact ranges")
    p.add_argument("--method", required=True, choices=METHODS + ("classical",))
    p.add_argument("--zeta-db", type=float, help="reference range in dB (default: first in config)")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("sweep", help="Monte-Carlo sweep over the reference range, CSV output")
    common(p, True)
    p.add_argument("--out", help="CSV path; a .manifest.json is written next to it")
    p.add_argument("--workers", type=int, help="worker processes")
    p.add_argument("--quiet", action="store_true", help="suppress the summary table")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("crb", help="root Cramér-Rao bounds per reference range")
    common(p, True)
    p.add_argument("--out", help="CSV path (default: stdout)")
    p.add_argument("--workers", type=int, help="worker processes")
    p.set_defaults(func=cmd_crb)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
