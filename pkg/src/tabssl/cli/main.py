"""``tabssl`` command-line entry point."""

from __future__ import annotations

import argparse
import json
import logging
import sys

from ..errors import ConfigError, TabSSLError
from . import commands
from .config import RunConfig, describe_schema, parse_override
from .manifest import RunManifest

EXIT_ERROR = 1

log = logging.getLogger("tabssl")


def _common(p: argparse.ArgumentParser):
    p.add_argument("--config", metavar="PATH", help="flat JSON config file")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override one config key (value parsed as JSON when possible)")
    p.add_argument("--seed", type=int, help="master seed")
    p.add_argument("--out", metavar="DIR", help="output directory")
    p.add_argument("--jobs", type=int, help="worker processes")
    p.add_argument("--print-config", action="store_true",
                   help="print the resolved config and exit")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tabssl",
        description="Self-supervised pretraining of MLP encoders on tabular data.",
        epilog="Config keys:\n" + describe_schema(),
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="split and preprocess a CSV or the synthetic corpus")
    _common(p)
    p.add_argument("--synthetic", action="store_true", help="generate the synthetic corpus")
    p.add_argument("--csv", metavar="PATH", help="input CSV")

    p = sub.add_parser("pretrain", help="train an encoder on a pretext task")
    _common(p)
    p.add_argument("--method", choices=("scarf", "vime", "byol"))
    p.add_argument("--epochs", type=int)

    p = sub.add_parser("finetune", help="fit a classifier on the labeled partition")
    _common(p)
    p.add_argument("--method", choices=("scarf", "vime", "byol"))
    p.add_argument("--frozen", action="store_true", help="train the head only")
    p.add_argument("--from-scratch", action="store_true", help="fresh encoder, ignore checkpoints")
    p.add_argument("--proportion", type=float, help="label fraction p in (0, 1]")
    p.add_argument("--checkpoint", metavar="PATH")

    p = sub.add_parser("sweep", help="label-fraction, pretraining-size or architecture sweep")
    _common(p)
    p.add_argument("--kind", choices=("proportion", "pretrain_size", "architecture"))
    p.add_argument("--method", action="append", choices=("scarf", "vime", "byol"),
                   help="restrict to a method (repeatable)")
    p.add_argument("--grid", metavar="LO:HI:STEP", help="label-fraction grid")
    p.add_argument("--frozen", action="store_true")
    p.add_argument("--stop-after", type=int, metavar="N",
                   help="run at most N new cells, then stop (resume by rerunning)")

    p = sub.add_parser("collapse", help="singular-value spectrum of an encoder's embeddings")
    _common(p)
    p.add_argument("--method", choices=("scarf", "vime", "byol"))
    p.add_argument("--checkpoint", metavar="PATH")
    p.add_argument("--data", metavar="PATH", help="cached table (.tsdt) to embed")

    p = sub.add_parser("report", help="summarize sweep results")
    _common(p)
    p.add_argument("--kind", choices=("proportion", "pretrain_size", "architecture"))
    return parser


def overrides_from(args) -> dict:
    out = dict(parse_override(s) for s in args.set)
    simple = {"seed": "seed", "out": "out", "jobs": "jobs", "csv": "data.csv",
              "epochs": "pretext.epochs", "proportion": "finetune.proportion",
              "grid": "sweep.grid", "kind": "sweep.kind", "data": "collapse.data"}
    for attr, key in simple.items():
        value = getattr(args, attr, None)
        if value is not None:
            out[key] = value
    if getattr(args, "synthetic", False):
        out["data.synthetic"] = True
    method = getattr(args, "method", None)
    if isinstance(method, list):
        out["sweep.methods"] = method
    elif method is not None:
        out["pretext.method"] = method
    if getattr(args, "frozen", False):
        out["sweep.mode" if args.command == "sweep" else "finetune.mode"] = "frozen"
    if getattr(args, "from_scratch", False):
        out["finetune.from_scratch"] = True
    if getattr(args, "checkpoint", None) is not None:
        key = "collapse.checkpoint" if args.command == "collapse" else "finetune.checkpoint"
        out[key] = args.checkpoint
    return out


def entry_name(command: str, cfg: RunConfig) -> str:
    """Manifest entry; one per command target so reruns for other targets keep their outputs."""
    if command in ("sweep", "report"):
        return f"{command}:{cfg['sweep.kind']}"
    if command == "pretrain":
        return f"pretrain:{cfg['pretext.method']}"
    if command == "finetune":
        name = "baseline" if cfg["finetune.from_scratch"] else cfg["pretext.method"]
        return f"finetune:{name}_{cfg['finetune.mode']}_p{cfg['finetune.proportion']!r}"
    if command == "collapse":
        ckpt = cfg["collapse.checkpoint"]
        return f"collapse:{ckpt if ckpt else cfg['pretext.method']}"
    return command


def _error(exc: Exception) -> dict:
    if isinstance(exc, TabSSLError):
        return exc.record()
    if isinstance(exc, OSError):
        return {"error": "io", "type": type(exc).__name__, "message": str(exc)}
    return {"error": "internal", "type": type(exc).__name__, "message": str(exc)}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        if getattr(args, "stop_after", None) is not None and args.stop_after < 0:
            raise ConfigError("--stop-after must be >= 0")
        cfg = RunConfig.load(args.config, overrides_from(args))
    except (ConfigError, OSError) as exc:
        print(json.dumps(_error(exc)), file=sys.stderr)
        return EXIT_ERROR
    if args.print_config:
        print(json.dumps(cfg.snapshot(), indent=2, sort_keys=True))
        return 0

    man = RunManifest(cfg.out, entry_name(args.command, cfg), cfg.snapshot())
    try:
        man.start()
        if args.command == "ingest":
            status = commands.cmd_ingest(cfg, man)
        elif args.command == "pretrain":
            status = commands.cmd_pretrain(cfg, man)
        elif args.command == "finetune":
            status = commands.cmd_finetune(cfg, man)
        elif args.command == "sweep":
            status = commands.cmd_sweep(cfg, man, args.stop_after)
        elif args.command == "collapse":
            status = commands.cmd_collapse(cfg, man)
        else:
            status = commands.cmd_report(cfg, man, sys.stdout)
    except Exception as exc:  # noqa: BLE001 - every failure becomes an error record
        record = _error(exc)
        print(json.dumps(record), file=sys.stderr)
        try:
            man.finish("failed", record)
        except OSError:
            pass
        log.debug("traceback", exc_info=True)
        return EXIT_ERROR
    man.finish("complete" if status == 0 else "incomplete")
    return status


if __name__ == "__main__":
    sys.exit(main())
