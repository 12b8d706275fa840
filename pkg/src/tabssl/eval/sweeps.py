"""Label-fraction, pretraining-size and architecture sweeps.

Every cell is an independent job whose seeds are derived from the master
seed and the cell coordinates, so results do not depend on execution order
or on the number of worker processes.
"""

from __future__ import annotations

import csv
import hashlib
import io
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

from ..data import DataTable, subsample_fraction, validation_indices
from ..finetune import FitConfig, attach_head, fit
from ..nn import MlpSpec, Network, load_checkpoint, save_checkpoint
from ..pretext import PretrainConfig, pretrain
from .metrics import DEFAULT_RANGE, AccuracyCurve, CollapseReport, SweepGrid, collapse_report, gain

BASELINE = "baseline"
RESULT_COLUMNS = ("method", "mode", "proportion", "seed", "accuracy", "stop_epoch", "wall_ms")


def _token(part) -> str:
    if isinstance(part, float):
        return repr(round(part, 10))
    return str(part)


def run_seed(master_seed: int, *parts) -> int:
    """63-bit seed from the master seed and any cell coordinates."""
    text = "|".join(_token(p) for p in (master_seed, *parts))
    return int.from_bytes(hashlib.sha256(text.encode()).digest()[:8], "little") >> 1


def pretrain_seed(master_seed: int, method: str, q: float = 1.0) -> int:
    return run_seed(master_seed, method, "pretrain", float(q))


@dataclass(frozen=True)
class FreshEncoder:
    """Baseline factory: a new randomly initialized encoder per cell."""

    spec: MlpSpec

    def __call__(self, seed) -> Network:
        return Network.create(self.spec, [seed, 0])


@dataclass
class PretrainedEncoder:
    """Hands out the same pretrained encoder; the head attachment copies it."""

    network: Network

    def __call__(self, seed) -> Network:
        return self.network


@dataclass(frozen=True)
class Cell:
    method: str
    mode: str
    proportion: float
    repeat: int
    encoder: str | None = None

    @property
    def encoder_key(self) -> str:
        return self.encoder or self.method

    def seed(self, master_seed: int) -> int:
        return run_seed(master_seed, self.method, self.mode, self.proportion, self.repeat)

    def key(self, master_seed: int) -> str:
        """Stable identifier used to detect already-completed cells."""
        text = f"{self.encoder_key}|{self.mode}|{self.proportion!r}|{self.repeat}|{master_seed}"
        return hashlib.sha256(text.encode()).hexdigest()[:20]


@dataclass
class CellResult:
    method: str
    mode: str
    proportion: float
    repeat: int
    seed: int
    accuracy: float | None = None
    stop_epoch: int | None = None
    wall_ms: int | None = None
    error: str | None = None
    encoder: str | None = None

    def row(self) -> list[str]:
        return [self.method, self.mode, repr(self.proportion), str(self.seed),
                "" if self.accuracy is None else repr(self.accuracy),
                "" if self.stop_epoch is None else str(self.stop_epoch),
                "" if self.wall_ms is None else str(self.wall_ms)]

    def sort_key(self):
        return (self.method, self.mode, self.proportion, self.seed)

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, d: dict) -> "CellResult":
        return cls(**d)


@dataclass
class SweepContext:
    """Everything a cell needs besides its encoder factory."""

    train: DataTable
    val: DataTable
    test: DataTable
    n_classes: int
    reference_size: int
    fit_cfg: FitConfig
    master_seed: int = 0
    record_wall_ms: bool = False


def split_finetune(finetune: DataTable, validation_fraction: float, master_seed: int):
    """Hold out the early-stopping validation rows of the fine-tuning partition."""
    tr, va = validation_indices(finetune, validation_fraction,
                                run_seed(master_seed, "finetune_validation"))
    return finetune.take(tr), finetune.take(va)


def split_pretrain(pretrain_set: DataTable, validation_fraction: float, master_seed: int):
    """Pretraining rows and the held-out rows whose embeddings feed the collapse spectrum."""
    tr, va = validation_indices(pretrain_set.unlabeled(), validation_fraction,
                                run_seed(master_seed, "pretrain_validation"))
    return pretrain_set.take(tr), pretrain_set.take(va)


def fit_cell(ctx: SweepContext, factory, cell: Cell):
    """Subsample, attach a fresh head, fit and score one cell; returns the fit report.

    The subsample depends only on ``(p, repeat)``, so every method sees the
    same labeled rows for a given repeat.
    """
    seed = cell.seed(ctx.master_seed)
    sub = subsample_fraction(ctx.train, cell.proportion,
                             run_seed(ctx.master_seed, "subsample", cell.proportion, cell.repeat),
                             reference_size=ctx.reference_size)
    clf = attach_head(factory(seed), ctx.n_classes, [seed, 1], cell.mode)
    return fit(clf, sub, ctx.val, replace(ctx.fit_cfg, seed=seed), test=ctx.test)


def run_cell(ctx: SweepContext, factory, cell: Cell) -> CellResult:
    """:func:`fit_cell` with failures recorded as a missing accuracy instead of raised."""
    result = CellResult(cell.method, cell.mode, cell.proportion, cell.repeat,
                        cell.seed(ctx.master_seed), encoder=cell.encoder)
    start = time.perf_counter()
    try:
        report = fit_cell(ctx, factory, cell)
        result.accuracy = report.test_accuracy
        result.stop_epoch = report.stop_epoch
    except Exception as exc:  # noqa: BLE001 - a failed cell becomes a missing value
        result.error = f"{type(exc).__name__}: {exc}"
    if ctx.record_wall_ms:
        result.wall_ms = int(round((time.perf_counter() - start) * 1000))
    return result


_WORKER: dict = {}


def _init_worker(ctx, factories):
    _WORKER["ctx"] = ctx
    _WORKER["factories"] = factories


def _run_in_worker(cell: Cell) -> CellResult:
    return run_cell(_WORKER["ctx"], _WORKER["factories"][cell.encoder_key], cell)


def run_cells(cells, factories: dict, ctx: SweepContext, jobs: int = 1, on_result=None):
    """Run ``cells`` (serially, or on ``jobs`` processes); results come back in input order."""
    cells = list(cells)
    if jobs <= 1 or len(cells) <= 1:
        results = []
        for cell in cells:
            res = run_cell(ctx, factories[cell.encoder_key], cell)
            if on_result:
                on_result(cell, res)
            results.append(res)
        return results
    with ProcessPoolExecutor(max_workers=jobs, initializer=_init_worker,
                             initargs=(ctx, factories)) as pool:
        results = []
        for cell, res in zip(cells, pool.map(_run_in_worker, cells)):
            if on_result:
                on_result(cell, res)
            results.append(res)
        return results


def parallel_map(fn, items, jobs: int = 1) -> list:
    items = list(items)
    if jobs <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ProcessPoolExecutor(max_workers=min(jobs, len(items))) as pool:
        return list(pool.map(fn, items))


@dataclass
class SweepResult:
    curves: dict[str, AccuracyCurve]
    results: list[CellResult]
    pending: int = 0
    ran: int = 0

    @property
    def complete(self) -> bool:
        return self.pending == 0 and all(r.error is None for r in self.results)

    def gains(self, lo: float = DEFAULT_RANGE[0], hi: float = DEFAULT_RANGE[1]) -> dict:
        base = self.curves[BASELINE]
        return {m: gain(c, base, lo, hi) for m, c in self.curves.items() if m != BASELINE}

    def results_csv(self) -> str:
        return results_csv(self.results)


def results_csv(results, extra: dict | None = None) -> str:
    """Results table sorted by ``(method, mode, proportion, seed)``.

    ``extra`` maps leading column names to per-row value functions.
    """
    extra = extra or {}
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([*extra, *RESULT_COLUMNS])
    for r in sorted(results, key=lambda r: (*(f(r) for f in extra.values()), *r.sort_key())):
        w.writerow([*(f(r) for f in extra.values()), *r.row()])
    return buf.getvalue()


def build_curves(results, grid: SweepGrid, names, config: dict | None = None) -> dict:
    """One curve per encoder key (the method name unless the cell names its encoder)."""
    curves = {}
    for method in names:
        table = {(r.proportion, r.repeat): r.accuracy for r in results
                 if (r.encoder or r.method) == method}
        accs = [[table.get((p, k)) for k in range(grid.seeds_per_point)] for p in grid.proportions]
        curves[method] = AccuracyCurve(method, grid.proportions, accs, dict(config or {}))
    return curves


def sweep_cells(methods, grid: SweepGrid, mode: str, suffix: str = "") -> list[Cell]:
    """Cells in ``(method, p, repeat)`` order; ``suffix`` tags the encoder key."""
    return [Cell(m, mode, p, k, f"{m}{suffix}" if suffix else None)
            for m in methods for p in grid.proportions for k in range(grid.seeds_per_point)]


def proportion_sweep(factories: dict, finetune: DataTable, test: DataTable, grid: SweepGrid, *,
                     mode: str = "unfrozen", fit_cfg: FitConfig | None = None,
                     master_seed: int = 0, validation_fraction: float = 0.15, jobs: int = 1,
                     done: dict | None = None, on_result=None, limit: int | None = None,
                     record_wall_ms: bool = False) -> SweepResult:
    """Fine-tune every ``(method, p, repeat)`` cell and collect accuracy curves.

    ``factories`` maps a method name (``"baseline"`` included) to a callable
    ``seed -> Network``. ``done`` maps :meth:`Cell.key` to results already
    computed; those cells are not rerun. ``limit`` caps how many new cells
    run, leaving the rest pending.
    """
    if finetune.labels is None:
        raise ValueError("the fine-tuning set must be labeled")
    train, val = split_finetune(finetune, validation_fraction, master_seed)
    ctx = SweepContext(train, val, test, finetune.n_classes, finetune.n_rows,
                       fit_cfg or FitConfig(), master_seed, record_wall_ms)
    cells = sweep_cells(list(factories), grid, mode)
    return _execute(cells, factories, ctx, grid, list(factories), jobs, done, on_result, limit)


def _execute(cells, factories, ctx, grid, methods, jobs, done, on_result, limit) -> SweepResult:
    done = done or {}
    finished = {}
    todo = []
    for cell in cells:
        key = cell.key(ctx.master_seed)
        if key in done:
            finished[cell] = done[key]
        else:
            todo.append(cell)
    pending = 0
    if limit is not None and len(todo) > limit:
        pending = len(todo) - limit
        todo = todo[:limit]
    for cell, res in zip(todo, run_cells(todo, factories, ctx, jobs, on_result)):
        finished[cell] = res
    results = [finished[c] for c in cells if c in finished]
    return SweepResult(build_curves(results, grid, methods), results, pending, len(todo))


@dataclass
class PretrainJob:
    """One pretraining run; with ``checkpoint`` the encoder always round-trips through disk."""

    name: str
    config: PretrainConfig
    data: DataTable
    checkpoint: str | None = None
    collapse_data: DataTable | None = None
    rel_tol: float = 1e-6


@dataclass
class PretrainOutcome:
    name: str
    encoder: Network
    report: dict | None = None
    spectrum: CollapseReport | None = None


def run_pretrain_job(job: PretrainJob) -> PretrainOutcome:
    report = None
    path = Path(job.checkpoint) if job.checkpoint else None
    if path is not None and path.exists():
        encoder = load_checkpoint(path)
    else:
        encoder, rep = pretrain(job.config.method, job.data.unlabeled(), job.config)
        report = rep.to_json()
        if path is not None:
            save_checkpoint(encoder, path)
            encoder = load_checkpoint(path)
    spectrum = None
    if job.collapse_data is not None:
        spectrum = collapse_report(encoder(job.collapse_data.features), job.rel_tol)
    return PretrainOutcome(job.name, encoder, report, spectrum)


@dataclass
class SizeSweepResult:
    method: str
    fractions: tuple[float, ...]
    proportion: float
    curve: AccuracyCurve
    baseline: list[float | None]
    results: list[CellResult]
    pending: int = 0

    def results_csv(self) -> str:
        return results_csv(self.results, {"pretrain_fraction": _q_label})

    def to_json(self) -> dict:
        return {"method": self.method, "proportion": self.proportion,
                "curve": self.curve.to_json(), "baseline": self.baseline}


def _q_label(r: CellResult) -> str:
    return r.encoder.split("@", 1)[1] if r.encoder and "@" in r.encoder else ""


def pretrain_size_sweep(method: str, pretrain_set: DataTable, finetune: DataTable, test: DataTable,
                        fractions, *, proportion: float = 0.1, seeds: int = 5,
                        pretrain_cfg: PretrainConfig | None = None,
                        fit_cfg: FitConfig | None = None, mode: str = "unfrozen",
                        master_seed: int = 0, validation_fraction: float = 0.15, jobs: int = 1,
                        checkpoint_dir=None, done: dict | None = None, on_result=None,
                        limit: int | None = None, record_wall_ms: bool = False) -> SizeSweepResult:
    """Pretrain on a random share ``q`` of ``pretrain_set`` for each ``q``, then fine-tune at ``proportion``.

    The baseline does not depend on ``q`` and is fitted once.
    """
    fractions = tuple(sorted(set(round(float(q), 10) for q in fractions)))
    SweepGrid(fractions)
    base_cfg = pretrain_cfg or PretrainConfig(method=method)
    jobs_list = []
    for q in fractions:
        subset = subsample_fraction(pretrain_set, q, run_seed(master_seed, "pretrain_subset", q),
                                    stratified=False)
        cfg = replace(base_cfg, method=method, seed=pretrain_seed(master_seed, method, q))
        ckpt = None if checkpoint_dir is None else str(Path(checkpoint_dir) / f"{method}_q{q!r}.tssl")
        jobs_list.append(PretrainJob(f"{method}@{q!r}", cfg, subset, ckpt))
    outcomes = parallel_map(run_pretrain_job, jobs_list, jobs)

    factories = {o.name: PretrainedEncoder(o.encoder) for o in outcomes}
    factories[BASELINE] = FreshEncoder(base_cfg.encoder_spec(finetune.n_features))
    grid = SweepGrid((proportion,), seeds)
    train, val = split_finetune(finetune, validation_fraction, master_seed)
    ctx = SweepContext(train, val, test, finetune.n_classes, finetune.n_rows,
                       fit_cfg or FitConfig(), master_seed, record_wall_ms)
    cells = [Cell(method, mode, proportion, k, o.name)
             for o in outcomes for k in range(seeds)]
    cells += sweep_cells([BASELINE], grid, mode)
    res = _execute(cells, factories, ctx, grid, list(factories), jobs, done, on_result, limit)
    accs = [res.curves[f"{method}@{q!r}"].accuracies[0] for q in fractions]
    curve = AccuracyCurve(method, fractions, accs, {"proportion": proportion})
    return SizeSweepResult(method, fractions, proportion, curve,
                           res.curves[BASELINE].accuracies[0], res.results, res.pending)


@dataclass
class ArchitectureResult:
    gains: list[tuple[int, int, str, float | None]] = field(default_factory=list)
    spectra: dict[tuple[int, int, str], CollapseReport] = field(default_factory=dict)
    sweeps: dict[tuple[int, int], SweepResult] = field(default_factory=dict)

    @property
    def pending(self) -> int:
        return sum(s.pending for s in self.sweeps.values())

    def gain_csv(self) -> str:
        return gain_csv(self.gains)

    def spectrum_csv(self) -> str:
        return spectrum_csv(self.spectra)

    def results_csv(self) -> str:
        rows = [(d, w, r) for (d, w), s in self.sweeps.items() for r in s.results]
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(["depth", "width", *RESULT_COLUMNS])
        for d, w, r in sorted(rows, key=lambda t: (t[0], t[1], *t[2].sort_key())):
            wr.writerow([d, w, *r.row()])
        return buf.getvalue()


def gain_csv(gains) -> str:
    """``depth, width, method, gain`` rows; an empty gain marks an uncovered range."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["depth", "width", "method", "gain"])
    for d, wd, m, g in sorted(gains, key=lambda t: t[:3]):
        w.writerow([d, wd, m, "" if g is None else repr(g)])
    return buf.getvalue()


def spectrum_csv(spectra: dict) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["depth", "width", "method", "k", "sigma_k"])
    for (d, wd, m) in sorted(spectra):
        for k, s in spectra[(d, wd, m)].rows():
            w.writerow([d, wd, m, k, repr(s)])
    return buf.getvalue()


def safe_gains(sweep: SweepResult, lo: float, hi: float) -> dict:
    """Gain per method, ``None`` where missing cells leave the range uncovered."""
    base = sweep.curves[BASELINE]
    out = {}
    for m, c in sweep.curves.items():
        if m == BASELINE:
            continue
        try:
            out[m] = gain(c, base, lo, hi)
        except ValueError:
            out[m] = None
    return out


def architecture_sweep(depths, widths, methods, pretrain_set: DataTable, finetune: DataTable,
                       test: DataTable, grid: SweepGrid, *,
                       pretrain_cfg: PretrainConfig | None = None,
                       fit_cfg: FitConfig | None = None, mode: str = "unfrozen",
                       master_seed: int = 0, validation_fraction: float = 0.15, jobs: int = 1,
                       gain_range=DEFAULT_RANGE, rel_tol: float = 1e-6, checkpoint_dir=None,
                       done: dict | None = None, on_result=None,
                       limit: int | None = None, record_wall_ms: bool = False) -> ArchitectureResult:
    """Gain vs a same-shaped baseline and the embedding spectrum for every ``(depth, width, method)``.

    Encoders are pretrained on the pretraining rows outside the validation
    carve-out; the spectrum uses eval-mode embeddings of that carve-out.
    """
    depths, widths, methods = list(depths), list(widths), list(methods)
    if not depths or not widths or not methods:
        raise ValueError("architecture sweep needs nonempty depth, width and method lists")
    base_cfg = pretrain_cfg or PretrainConfig()
    pre_train, pre_val = split_pretrain(pretrain_set, validation_fraction, master_seed)
    jobs_list = []
    for d in depths:
        for w in widths:
            for m in methods:
                cfg = replace(base_cfg, method=m, hidden_dims=(w,) * d,
                              seed=pretrain_seed(master_seed, m))
                ckpt = None if checkpoint_dir is None else str(Path(checkpoint_dir) / f"{m}_{d}x{w}.tssl")
                jobs_list.append(PretrainJob(f"{m}/{d}x{w}", cfg, pre_train, ckpt, pre_val, rel_tol))
    outcomes = {o.name: o for o in parallel_map(run_pretrain_job, jobs_list, jobs)}

    train, val = split_finetune(finetune, validation_fraction, master_seed)
    ctx = SweepContext(train, val, test, finetune.n_classes, finetune.n_rows,
                       fit_cfg or FitConfig(), master_seed, record_wall_ms)
    out = ArchitectureResult()
    remaining = limit
    for d in depths:
        for w in widths:
            suffix = f"/{d}x{w}"
            factories = {f"{m}{suffix}": PretrainedEncoder(outcomes[f"{m}{suffix}"].encoder)
                         for m in methods}
            spec = replace(base_cfg, hidden_dims=(w,) * d).encoder_spec(finetune.n_features)
            factories[f"{BASELINE}{suffix}"] = FreshEncoder(spec)
            names = [*methods, BASELINE]
            cells = sweep_cells(names, grid, mode, suffix)
            sweep = _execute(cells, factories, ctx, grid, [f"{n}{suffix}" for n in names],
                             jobs, done, on_result, remaining)
            sweep.curves = {k[:-len(suffix)]: c for k, c in sweep.curves.items()}
            if remaining is not None:
                remaining -= sweep.ran
            out.sweeps[(d, w)] = sweep
            lo, hi = gain_range
            for m, g in safe_gains(sweep, lo, hi).items():
                out.gains.append((d, w, m, g))
            for m in methods:
                out.spectra[(d, w, m)] = outcomes[f"{m}{suffix}"].spectrum
    return out
