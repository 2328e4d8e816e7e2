"""``lucid`` command line: train / audit / sweep / validate-config.

Exit codes: 0 success, 1 internal error, 2 usage or configuration error.
Errors are printed to stderr as a single JSON object.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__, kernels
from .data_pipeline import EncodingError, SchemaError
from .report import ConfigError, RunConfig, cmd_audit, cmd_sweep, cmd_train

log = logging.getLogger("lucid")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _lr_list(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of numbers: {text!r}")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="lucid", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"lucid {__version__}")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp):
        sp.add_argument("--config", required=True, type=Path, help="run configuration JSON")
        sp.add_argument("--output-dir", type=Path, help="overrides output_dir from the config")

    def inverse_flags(sp):
        sp.add_argument("--seed", type=int, help="inverse-design seed")
        sp.add_argument("--num-inputs", type=int, help="N, number of canonical inputs")
        sp.add_argument("--epochs", type=int, help="E, descent steps per input")
        sp.add_argument("--lr", type=float, help="inverse-design learning rate")

    sp = sub.add_parser("train", help="train the classifier")
    common(sp)
    sp.add_argument("--seed", type=int, help="training seed")

    sp = sub.add_parser("audit", help="generate a canonical set and write the audit report")
    common(sp)
    sp.add_argument("--model", required=True, type=Path)
    sp.add_argument("--schema", type=Path, help="defaults to schema.json next to the model")
    inverse_flags(sp)

    sp = sub.add_parser("sweep", help="prediction summary across inverse-design learning rates")
    common(sp)
    sp.add_argument("--model", required=True, type=Path)
    sp.add_argument("--schema", type=Path)
    sp.add_argument("--lrs", type=_lr_list, default=[1e-4, 1e-3, 1e-2, 0.05, 0.1, 0.5])
    inverse_flags(sp)

    sp = sub.add_parser("validate-config", help="check a run configuration and exit")
    common(sp)
    return p


def _apply_overrides(run: RunConfig, args) -> RunConfig:
    kw = {}
    if getattr(args, "output_dir", None):
        kw["output_dir"] = args.output_dir
    train = {}
    inv = {}
    if args.command == "train" and args.seed is not None:
        train["seed"] = args.seed
    if args.command in ("audit", "sweep"):
        for flag, key in (("seed", "seed"), ("num_inputs", "num_inputs"),
                          ("epochs", "epochs"), ("lr", "learning_rate")):
            v = getattr(args, flag)
            if v is not None:
                inv[key] = v
    try:
        return run.with_overrides(train=train or None, inverse_design=inv or None, **kw)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _fail(code: int, kind: str, message: str, path: str | None = None) -> int:
    err = {"error": kind, "message": message}
    if path:
        err["path"] = path
    print(json.dumps(err), file=sys.stderr)
    return code


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        return _fail(2, "usage", str(exc))
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        run = _apply_overrides(RunConfig.load(args.config), args)
        run.validate()
        if args.command == "validate-config":
            out = {"ok": True, "dataset": run.dataset.name, "data": str(run.data_path),
                   "output_dir": str(run.output_dir), "backend": kernels.BACKEND}
        elif args.command == "train":
            out = cmd_train(run)
        elif args.command == "audit":
            rep = cmd_audit(run, args.model, args.schema)
            out = {"report": str(run.output_dir / "audit_report.json"),
                   "flagged": sorted(f for f, t in rep["canonical_set"]["uniformity"].items()
                                     if t["flagged"])}
        else:
            rows = cmd_sweep(run, args.model, args.lrs, args.schema)
            out = {"sweep": str(run.output_dir / "sweep.csv"), "rows": len(rows)}
    except ConfigError as exc:
        return _fail(2, "config", str(exc), exc.path)
    except (SchemaError, EncodingError) as exc:
        return _fail(2, "data", str(exc))
    except Exception as exc:  # noqa: BLE001 - reported as machine-readable JSON
        log.debug("internal error", exc_info=True)
        return _fail(1, type(exc).__name__, str(exc))
    print(json.dumps(out))
    return 0


if __name__ == "__main__":
    sys.exit(main())
