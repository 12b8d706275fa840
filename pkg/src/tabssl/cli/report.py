"""Summaries rebuilt from the results CSVs."""

from __future__ import annotations

import csv
from collections import defaultdict
from pathlib import Path

import numpy as np

from ..errors import ContractError, SchemaError
from ..eval import BASELINE, AccuracyCurve, data_savings, gain
from ..eval.sweeps import RESULT_COLUMNS


def read_rows(path) -> list[dict]:
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        missing = [c for c in RESULT_COLUMNS if c not in (reader.fieldnames or [])]
        if missing:
            raise SchemaError(f"{path}: missing column(s) {', '.join(missing)}")
        return list(reader)


def _curves(rows) -> dict[str, AccuracyCurve]:
    by_method: dict[str, dict[float, list]] = defaultdict(lambda: defaultdict(list))
    for r in rows:
        acc = float(r["accuracy"]) if r["accuracy"] else None
        by_method[r["method"]][float(r["proportion"])].append(acc)
    curves = {}
    for method, per_p in by_method.items():
        ps = sorted(per_p)
        curves[method] = AccuracyCurve(method, ps, [per_p[p] for p in ps])
    return curves


def summarize(rows, lo: float = 0.02, hi: float = 0.3) -> dict:
    """Mean accuracy curves, gains and label savings against the baseline.

    Rows carrying ``depth``/``width`` columns are grouped per architecture.
    """
    groups: dict[str, list] = defaultdict(list)
    for r in rows:
        key = f"{r['depth']}x{r['width']}" if r.get("depth") else "all"
        groups[key].append(r)
    out = {}
    for key, group in sorted(groups.items()):
        curves = _curves(group)
        entry = {"curves": {m: c.to_json() for m, c in sorted(curves.items())},
                 "gains": {}, "savings": {}}
        base = curves.get(BASELINE)
        for m, c in sorted(curves.items()):
            if base is None or m == BASELINE:
                continue
            try:
                entry["gains"][m] = gain(c, base, lo, hi)
            except ContractError:
                entry["gains"][m] = None
            entry["savings"][m] = data_savings(c, base)
        out[key] = entry
    return {"range": [lo, hi], "groups": out}


def format_summary(summary: dict) -> str:
    lines = []
    lo, hi = summary["range"]
    for key, entry in summary["groups"].items():
        if key != "all":
            lines.append(f"architecture {key}")
        curves = entry["curves"]
        methods = list(curves)
        ps = curves[methods[0]]["proportions"]
        lines.append("p       " + "".join(f"{m:>12s}" for m in methods))
        for i, p in enumerate(ps):
            cells = []
            for m in methods:
                mean = curves[m]["mean"][i] if i < len(curves[m]["mean"]) else None
                cells.append(f"{'-' if mean is None else f'{mean:.4f}':>12s}")
            lines.append(f"{p:<8.4g}" + "".join(cells))
        for m, g in entry["gains"].items():
            gtxt = "n/a" if g is None else f"{g:+.5f}"
            s = entry["savings"][m]["saving"]
            if s is None:
                stxt = "never reaches the baseline's best"
            elif s <= 0:
                stxt = "no label saving"
            else:
                stxt = f"label saving {s:.0%}"
            lines.append(f"gain[{lo}, {hi}] {m} vs {BASELINE}: {gtxt}; {stxt}")
        lines.append("")
    return "\n".join(lines).rstrip() + "\n"


def summarize_size_rows(rows) -> dict:
    """Mean accuracy per pretraining fraction for each method, and the baseline mean."""
    acc: dict[str, dict[str, list]] = defaultdict(lambda: defaultdict(list))
    for r in rows:
        if r["accuracy"]:
            acc[r["method"]][r.get("pretrain_fraction", "")].append(float(r["accuracy"]))
    out = {}
    for m, per_q in sorted(acc.items()):
        out[m] = {q: float(np.mean(v)) for q, v in sorted(per_q.items(), key=lambda t: float(t[0] or 0))}
    return out
