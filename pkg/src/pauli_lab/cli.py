"""Command-line entry point: ``pauli-lab <subcommand> [options]``.

Exit status: 0 on success, 2 for invalid configuration or arguments,
3 when ``--strict`` turns a truncation warning into an error, 4 for
numerical failures (quadrature, contour or domain errors).
"""

from __future__ import annotations

import argparse
import sys
import warnings
from pathlib import Path

from . import __version__
from .birman_schwinger import ContourError, DomainError, PoleError
from .config import ConfigError, ExperimentConfig
from .experiments import PIPELINES, run
from .quadrature import QuadratureError
from .toeplitz import TruncationWarning

__all__ = ["main", "build_parser"]

# flag -> config field
_OVERRIDES = {
    "b0": float, "btilde": str, "u0": str, "m": float, "form": str, "e": float, "K": int, "Q": int,
    "r0": float, "r": float, "r_lo": float, "r_hi": float, "n_thresholds": int, "z_lo": float,
    "z_hi": float, "n_grid": int, "center": float, "radius": float, "points": int, "seed": int,
}
_FIELD_NAME = {"u0": "U0"}


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", type=Path, help="experiment config file")
    p.add_argument("--out", help="output directory (overrides the config)")
    p.add_argument("--strict", action="store_true", help="treat truncation warnings as errors")
    p.add_argument("--threads", type=int, default=1, help="worker threads for coupling sweeps")
    g = p.add_argument_group("parameter overrides")
    for name, typ in _OVERRIDES.items():
        flag = "--" + name.replace("_", "-")
        g.add_argument(flag, dest=name, type=typ, default=None)
    g.add_argument("--e-sweep", dest="e_sweep", default=None, help="comma separated couplings")
    return p


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pauli-lab", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"pauli-lab {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    common = _common()
    for name in PIPELINES:
        sp = sub.add_parser(name, parents=[common])
        if name == "toeplitz":
            sp.add_argument("--operator", choices=["p0Up0", "identity", "hplus_inverse"], default="hplus_inverse")
        if name == "asymptotics":
            sp.add_argument("--spectrum", type=Path, required=True, help="CSV written by toeplitz or pauli-spectrum")
            sp.add_argument("--kind", choices=["toeplitz", "pauli"], default="toeplitz")
    return parser


def _config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    changes = {_FIELD_NAME.get(k, k): getattr(args, k) for k in _OVERRIDES}
    if args.e_sweep is not None:
        try:
            changes["e_sweep"] = tuple(float(v) for v in args.e_sweep.split(",") if v.strip())
        except ValueError:
            raise ConfigError(f"bad --e-sweep value {args.e_sweep!r}", source="command line") from None
    if args.out is not None:
        changes["out"] = args.out
    if any(v is not None for v in changes.values()):
        cfg = cfg.replace(**changes)
        cfg.validate(source="command line")
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _config(args)
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    kwargs = {}
    if args.command == "toeplitz":
        kwargs["operator"] = args.operator
    if args.command == "asymptotics":
        kwargs.update(spectrum_csv=args.spectrum, kind=args.kind)
    if args.command in ("theorem1", "theorem2"):
        kwargs["threads"] = args.threads
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("error" if args.strict else "default", TruncationWarning)
            tables = run(cfg, args.command, strict=args.strict, **kwargs)
    except TruncationWarning as exc:
        print(f"error (strict): {exc}", file=sys.stderr)
        return 3
    except (QuadratureError, ContourError, DomainError, PoleError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except RuntimeError as exc:
        if args.strict:
            print(f"error (strict): {exc}", file=sys.stderr)
            return 3
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    for table in tables:
        path = out / f"{table.name}.csv"
        path.write_text(table.to_csv(), encoding="utf-8")
        print(f"wrote {path}")
        if table.name.endswith("_verdict"):
            for check, status, value, limit in table.rows:
                print(f"  {check}: {status} (value {value:.6g}, threshold {limit:g})")
    return 0


if __name__ == "__main__":
    sys.exit(main())
