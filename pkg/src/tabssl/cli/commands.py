"""Implementations of the ``tabssl`` subcommands.

Each command takes a validated :class:`RunConfig` and a :class:`RunManifest`
and returns a process exit status.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
from dataclasses import asdict
from pathlib import Path

from ..data import (
    DataTable,
    load_csv,
    load_table,
    preprocess,
    save_table,
    stratified_indices,
    synthetic_corpus,
)
from ..errors import ConfigError, SchemaError
from ..eval import (
    BASELINE,
    Cell,
    CellResult,
    FreshEncoder,
    PretrainedEncoder,
    architecture_sweep,
    collapse_report,
    pretrain_fraction_grid,
    pretrain_size_sweep,
    proportion_sweep,
    parse_grid,
    results_csv,
    spectrum_csv,
)
from ..eval.sweeps import (
    PretrainJob,
    SweepContext,
    fit_cell,
    parallel_map,
    pretrain_seed,
    run_pretrain_job,
    safe_gains,
    gain_csv,
    split_finetune,
    split_pretrain,
)
from ..nn import Network, load_checkpoint, save_checkpoint
from ..pretext import pretrain
from .config import RunConfig
from .manifest import RunManifest, file_digest, write_json, write_text
from .report import format_summary, read_rows, summarize, summarize_size_rows

log = logging.getLogger(__name__)

PARTITIONS = ("pretrain", "finetune", "test")
EXIT_OK = 0
EXIT_INCOMPLETE = 3


def _data_dir(cfg: RunConfig) -> Path:
    return cfg.out / "data"


def _emit(man: RunManifest, path, text: str | None = None, obj=None):
    if obj is not None:
        write_json(path, obj)
    else:
        write_text(path, text)
    man.add_output(path)


# ingest

def _check_label_column(path: Path, label: str):
    try:
        with path.open(newline="") as fh:
            header = next(csv.reader(fh), None)
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    if header is None:
        raise SchemaError(f"{path}:1: empty file, header row expected")
    if label not in [h.strip() for h in header]:
        raise ConfigError(
            f"label column {label!r} not found in {path}, but the split is stratified by label"
        )


def cmd_ingest(cfg: RunConfig, man: RunManifest) -> int:
    if cfg["data.synthetic"]:
        params = {k.split(".", 1)[1]: cfg[k] for k in cfg.values if k.startswith("synthetic.")}
        table = synthetic_corpus(params["n_classes"], params["n_features"], params["n_groups"],
                                 params["samples_per_class"], params["seed"])
        source = {"synthetic": params}
    else:
        if cfg["data.csv"] is None:
            raise ConfigError("set data.csv or use --synthetic")
        path = Path(cfg["data.csv"])
        _check_label_column(path, cfg["data.label_column"])
        man.add_input(path)
        table = load_csv(path, cfg["data.label_column"])
        source = {"csv": str(path), "sha256": file_digest(path)}

    plan = cfg.split_plan()
    idx = stratified_indices(table.labels, plan.fractions, plan.seed, table.class_names)
    parts = [table.take(i) for i in idx]
    pre, stats = preprocess(parts[0], log2=cfg.log2)
    tables = {"pretrain": pre,
              "finetune": preprocess(parts[1], stats)[0],
              "test": preprocess(parts[2], stats)[0]}
    files = {}
    for name, t in tables.items():
        path = _data_dir(cfg) / f"{name}.tsdt"
        save_table(t, path)
        man.add_output(path)
        files[name] = file_digest(path)
    sidecar = {
        "source": source,
        "plan": asdict(plan),
        "log2": cfg.log2,
        "n_rows": table.n_rows,
        "n_features": table.n_features,
        "class_names": list(table.class_names or []),
        "partitions": {n: i.tolist() for n, i in zip(PARTITIONS, idx)},
        "preprocess": stats.to_json(),
        "files": files,
    }
    _emit(man, _data_dir(cfg) / "split.json", obj=sidecar)
    log.info("ingested %d rows x %d features: %s", table.n_rows, table.n_features,
             ", ".join(f"{n}={t.n_rows}" for n, t in tables.items()))
    return EXIT_OK


def load_partition(cfg: RunConfig, man: RunManifest, name: str) -> DataTable:
    path = _data_dir(cfg) / f"{name}.tsdt"
    if not path.exists():
        raise ConfigError(f"{path} not found; run `tabssl ingest` first")
    man.add_input(path)
    return load_table(path)


def _check_dims(encoder: Network, table: DataTable, what: str):
    if encoder.spec.input_dim != table.n_features:
        raise SchemaError(
            f"{what} expects {encoder.spec.input_dim} features but the data has {table.n_features}"
        )


# pretrain

def cmd_pretrain(cfg: RunConfig, man: RunManifest) -> int:
    method = cfg["pretext.method"]
    pre = load_partition(cfg, man, "pretrain")
    train, _ = split_pretrain(pre, cfg["split.validation"], cfg["seed"])
    pcfg = cfg.pretrain_config(method, pretrain_seed(cfg["seed"], method))
    encoder, report = pretrain(method, train.unlabeled(), pcfg)
    ckpt = cfg.out / "encoders" / f"{method}.tssl"
    checksum = save_checkpoint(encoder, ckpt)
    man.add_output(ckpt)
    _emit(man, cfg.out / "pretrain" / f"{method}_loss.csv", report.loss_csv())
    rep = report.to_json()
    rep["checkpoint_checksum"] = checksum
    # timing goes to the manifest so that reruns reproduce every output byte for byte
    wall = rep.pop("wall_time")
    _emit(man, cfg.out / "pretrain" / f"{method}_report.json", obj=rep)
    man.entry.update(method=method, epochs=pcfg.epochs, wall_time_s=wall)
    log.info("pretrained %s for %d epochs in %.1fs, final loss %s", method, pcfg.epochs,
             report.wall_time, report.losses[-1] if report.losses else "n/a")
    return EXIT_OK


# finetune

def _encoder_path(cfg: RunConfig, key: str, method: str) -> Path:
    return Path(cfg[key]) if cfg[key] else cfg.out / "encoders" / f"{method}.tssl"


def cmd_finetune(cfg: RunConfig, man: RunManifest) -> int:
    ft = load_partition(cfg, man, "finetune")
    test = load_partition(cfg, man, "test")
    mode, p = cfg["finetune.mode"], cfg["finetune.proportion"]
    if cfg["finetune.from_scratch"]:
        name = BASELINE
        factory = FreshEncoder(cfg.pretrain_config().encoder_spec(ft.n_features))
    else:
        name = cfg["pretext.method"]
        path = _encoder_path(cfg, "finetune.checkpoint", name)
        if not path.exists():
            raise ConfigError(f"checkpoint {path} not found; pretrain first or pass --from-scratch")
        man.add_input(path)
        encoder = load_checkpoint(path)
        _check_dims(encoder, ft, f"checkpoint {path}")
        factory = PretrainedEncoder(encoder)
    train, val = split_finetune(ft, cfg["split.validation"], cfg["seed"])
    ctx = SweepContext(train, val, test, ft.n_classes, ft.n_rows, cfg.fit_config(), cfg["seed"])
    cell = Cell(name, mode, p, 0)
    report = fit_cell(ctx, factory, cell)
    out = report.to_json()
    out.update(method=name, mode=mode, proportion=p, seed=cell.seed(cfg["seed"]))
    _emit(man, cfg.out / "finetune" / f"{name}_{mode}_p{p!r}.json", obj=out)
    log.info("%s %s p=%s: test accuracy %.4f (stopped at epoch %d)", name, mode, p,
             report.test_accuracy, report.stop_epoch)
    return EXIT_OK


# sweep

def sweep_fingerprint(cfg: RunConfig, data_digests: dict) -> str:
    """Identifies the sweep configuration; cells and encoders are stored under it."""
    snap = {k: v for k, v in cfg.snapshot().items() if k not in ("jobs", "out")}
    blob = json.dumps({"config": snap, "data": data_digests}, sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


class CellStore:
    """One JSON file per finished cell, so an interrupted sweep can resume."""

    def __init__(self, root: Path, master_seed: int):
        self.root = root
        self.master_seed = master_seed
        self.done: dict[str, CellResult] = {}
        if root.exists():
            for path in sorted(root.glob("*.json")):
                res = CellResult.from_json(json.loads(path.read_text()))
                if res.error is None:
                    self.done[path.stem] = res

    def record(self, cell: Cell, res: CellResult):
        key = cell.key(self.master_seed)
        write_json(self.root / f"{key}.json", res.to_json())
        if res.error is None:
            self.done[key] = res

    def files(self):
        return sorted(self.root.glob("*.json")) if self.root.exists() else []


def cmd_sweep(cfg: RunConfig, man: RunManifest, stop_after: int | None = None) -> int:
    pre = load_partition(cfg, man, "pretrain")
    ft = load_partition(cfg, man, "finetune")
    test = load_partition(cfg, man, "test")
    digests = dict(man.entry["inputs"])
    fp = sweep_fingerprint(cfg, {Path(k).name: v for k, v in digests.items()})
    kind = cfg["sweep.kind"]
    sweep_dir = cfg.out / "sweep" / kind
    store = CellStore(sweep_dir / "cells" / fp, cfg["seed"])
    enc_dir = sweep_dir / "encoders" / fp
    common = dict(fit_cfg=cfg.fit_config(), mode=cfg["sweep.mode"], master_seed=cfg["seed"],
                  validation_fraction=cfg["split.validation"], jobs=cfg["jobs"],
                  on_result=store.record, record_wall_ms=cfg["sweep.record_wall_ms"])
    lo, hi = cfg["sweep.gain_lo"], cfg["sweep.gain_hi"]
    man.entry["fingerprint"] = fp

    if kind == "proportion":
        pending, failed = _proportion(cfg, man, pre, ft, test, store, enc_dir, common,
                                      stop_after, lo, hi, sweep_dir)
    elif kind == "architecture":
        pending, failed = _architecture(cfg, man, pre, ft, test, store, enc_dir, common,
                                        stop_after, lo, hi, sweep_dir)
    else:
        pending, failed = _pretrain_size(cfg, man, pre, ft, test, store, enc_dir, common,
                                         stop_after, sweep_dir)
    for path in store.files():
        man.add_output(path)
    for path in sorted(enc_dir.glob("*.tssl")) if enc_dir.exists() else []:
        man.add_output(path)
    man.entry.update(pending_cells=pending, failed_cells=failed)
    if pending or failed:
        log.warning("sweep incomplete: %d pending, %d failed cell(s)", pending, failed)
        return EXIT_INCOMPLETE
    return EXIT_OK


def _depth_width(spec_dims) -> tuple[int, int]:
    return len(spec_dims), spec_dims[-1]


def _finish_tables(man, sweep_dir, results_text, gains_rows, spectra, report):
    _emit(man, sweep_dir / "results.csv", results_text)
    _emit(man, sweep_dir / "gain.csv", gain_csv(gains_rows))
    _emit(man, sweep_dir / "spectrum.csv", spectrum_csv(spectra))
    _emit(man, sweep_dir / "report.json", obj=report)


def _proportion(cfg, man, pre, ft, test, store, enc_dir, common, stop_after, lo, hi, sweep_dir):
    methods = cfg["sweep.methods"]
    pre_train, pre_val = split_pretrain(pre, cfg["split.validation"], cfg["seed"])
    jobs = [PretrainJob(m, cfg.pretrain_config(m, pretrain_seed(cfg["seed"], m)), pre_train,
                        str(enc_dir / f"{m}.tssl"), pre_val, cfg["collapse.rel_tol"])
            for m in methods]
    outcomes = parallel_map(run_pretrain_job, jobs, cfg["jobs"])
    factories = {o.name: PretrainedEncoder(o.encoder) for o in outcomes}
    factories[BASELINE] = FreshEncoder(cfg.pretrain_config().encoder_spec(ft.n_features))
    res = proportion_sweep(factories, ft, test, cfg.sweep_grid(), done=store.done,
                           limit=stop_after, **common)
    failed = sum(r.error is not None for r in res.results)
    if res.pending:
        return res.pending, failed
    depth, width = _depth_width(cfg["pretext.hidden_dims"])
    gains = [(depth, width, m, g) for m, g in safe_gains(res, lo, hi).items()]
    spectra = {(depth, width, o.name): o.spectrum for o in outcomes}
    text = res.results_csv()
    report = {"kind": "proportion", "fingerprint": man.entry["fingerprint"],
              "summary": summarize(_rows_of(text), lo, hi),
              "collapse": {o.name: o.spectrum.to_json() for o in outcomes}}
    _finish_tables(man, sweep_dir, text, gains, spectra, report)
    return 0, failed


def _architecture(cfg, man, pre, ft, test, store, enc_dir, common, stop_after, lo, hi, sweep_dir):
    res = architecture_sweep(cfg["sweep.depths"], cfg["sweep.widths"], cfg["sweep.methods"],
                             pre, ft, test, cfg.sweep_grid(), pretrain_cfg=cfg.pretrain_config(),
                             gain_range=(lo, hi), rel_tol=cfg["collapse.rel_tol"],
                             checkpoint_dir=enc_dir, done=store.done, limit=stop_after, **common)
    failed = sum(r.error is not None for s in res.sweeps.values() for r in s.results)
    if res.pending:
        return res.pending, failed
    text = res.results_csv()
    report = {"kind": "architecture", "fingerprint": man.entry["fingerprint"],
              "summary": summarize(_rows_of(text), lo, hi),
              "collapse": {f"{d}x{w}/{m}": s.to_json() for (d, w, m), s in sorted(res.spectra.items())}}
    _finish_tables(man, sweep_dir, text, res.gains, res.spectra, report)
    return 0, failed


def _pretrain_size(cfg, man, pre, ft, test, store, enc_dir, common, stop_after, sweep_dir):
    fractions = parse_grid(cfg["sweep.q_grid"]) if cfg["sweep.q_grid"] else pretrain_fraction_grid()
    pre_train, _ = split_pretrain(pre, cfg["split.validation"], cfg["seed"])
    already = len(store.done)
    results, curves, pending = {}, {}, 0
    for method in cfg["sweep.methods"]:
        res = pretrain_size_sweep(method, pre_train, ft, test, fractions,
                                  proportion=cfg["sweep.proportion"], seeds=cfg["sweep.seeds"],
                                  pretrain_cfg=cfg.pretrain_config(method),
                                  checkpoint_dir=enc_dir, done=store.done,
                                  limit=_remaining(stop_after, store, already), **common)
        for r in res.results:
            results[(r.encoder or r.method, r.repeat)] = r
        curves[method] = res.to_json()
        pending += res.pending
    failed = sum(r.error is not None for r in results.values())
    if pending:
        return pending, failed
    rows = list(results.values())
    text = results_csv(rows, {"pretrain_fraction": lambda r: r.encoder.split("@", 1)[1]
                              if r.encoder and "@" in r.encoder else ""})
    _emit(man, sweep_dir / "pretrain_size.csv", text)
    report = {"kind": "pretrain_size", "fingerprint": man.entry["fingerprint"],
              "fractions": list(fractions), "proportion": cfg["sweep.proportion"],
              "curves": curves, "summary": summarize_size_rows(_rows_of(text))}
    _emit(man, sweep_dir / "report.json", obj=report)
    return 0, failed


def _remaining(stop_after, store: CellStore, already: int):
    if stop_after is None:
        return None
    return max(stop_after - (len(store.done) - already), 0)


def _rows_of(text: str) -> list[dict]:
    return list(csv.DictReader(text.splitlines()))


# collapse

def cmd_collapse(cfg: RunConfig, man: RunManifest) -> int:
    method = cfg["pretext.method"]
    path = _encoder_path(cfg, "collapse.checkpoint", method)
    if not path.exists():
        raise ConfigError(f"checkpoint {path} not found")
    man.add_input(path)
    encoder = load_checkpoint(path)
    if cfg["collapse.data"]:
        data_path = Path(cfg["collapse.data"])
        man.add_input(data_path)
        data = load_table(data_path)
    else:
        data = split_pretrain(load_partition(cfg, man, "pretrain"), cfg["split.validation"],
                              cfg["seed"])[1]
    _check_dims(encoder, data, f"checkpoint {path}")
    report = collapse_report(encoder(data.features), cfg["collapse.rel_tol"])
    depth, width = _depth_width(encoder.spec.hidden_dims)
    name = path.stem
    _emit(man, cfg.out / "collapse" / f"{name}_spectrum.csv",
          spectrum_csv({(depth, width, name): report}))
    _emit(man, cfg.out / "collapse" / f"{name}.json", obj=report.to_json())
    log.info("%s: %d of %d dimensions below %.3g", name, report.collapsed_count, report.dim,
             report.tolerance)
    return EXIT_OK


# report

def cmd_report(cfg: RunConfig, man: RunManifest, stream) -> int:
    kind = cfg["sweep.kind"]
    sweep_dir = cfg.out / "sweep" / kind
    path = sweep_dir / ("pretrain_size.csv" if kind == "pretrain_size" else "results.csv")
    if not path.exists():
        raise ConfigError(f"{path} not found; run `tabssl sweep --kind {kind}` first")
    man.add_input(path)
    if kind == "pretrain_size":
        summary = summarize_size_rows(read_rows_any(path))
        text = "\n".join(f"{m}: " + ", ".join(f"q={q or 'n/a'} {a:.4f}" for q, a in per_q.items())
                         for m, per_q in summary.items()) + "\n"
    else:
        summary = summarize(read_rows(path), cfg["sweep.gain_lo"], cfg["sweep.gain_hi"])
        text = format_summary(summary)
    _emit(man, sweep_dir / "summary.json", obj=summary)
    _emit(man, sweep_dir / "summary.txt", text)
    stream.write(text)
    return EXIT_OK


def read_rows_any(path) -> list[dict]:
    with Path(path).open(newline="") as fh:
        return list(csv.DictReader(fh))
