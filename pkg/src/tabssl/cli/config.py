"""Flat, typed run configuration.

Keys are dotted names such as ``pretext.epochs``. Every key has a type and
a default; unknown keys and wrongly typed values are rejected before any
computation starts.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, fields
from pathlib import Path

from ..data import SplitPlan
from ..errors import ConfigError, TabSSLError
from ..eval import SweepGrid, parse_grid
from ..finetune import MODES, FitConfig
from ..pretext import METHODS, PretrainConfig
from ..pretext.losses import VARIANTS

SWEEP_KINDS = ("proportion", "pretrain_size", "architecture")


@dataclass(frozen=True)
class Key:
    kind: str  # int, float, bool, str, int_list, str_list
    default: object
    optional: bool = False
    choices: tuple = ()
    help: str = ""


# config key -> PretrainConfig field
PRETRAIN_KEYS = {
    "pretext.method": "method",
    "pretext.epochs": "epochs",
    "pretext.batch_size": "batch_size",
    "pretext.learning_rate": "learning_rate",
    "pretext.hidden_dims": "hidden_dims",
    "pretext.use_batchnorm": "use_batchnorm",
    "corruption.fraction": "corruption_fraction",
    "corruption.mask_prob": "mask_prob",
    "corruption.seed": "corruption_seed",
    "scarf.tau": "scarf_tau",
    "scarf.variant": "scarf_variant",
    "scarf.proj_hidden": "scarf_proj_hidden",
    "scarf.proj_dim": "scarf_proj_dim",
    "vime.alpha": "vime_alpha",
    "vime.masked_only_mse": "vime_masked_only_mse",
    "byol.lambda": "byol_lambda",
    "byol.symmetrize": "byol_symmetrize",
    "byol.corrupt_both": "byol_corrupt_both",
    "byol.hidden_dim": "byol_hidden_dim",
    "byol.out_dim": "byol_out_dim",
}


def _pretrain_keys() -> dict:
    defaults = {f.name: f.default for f in fields(PretrainConfig)}
    out = {}
    for key, name in PRETRAIN_KEYS.items():
        default = defaults[name]
        if isinstance(default, tuple):
            out[key] = Key("int_list", list(default))
        elif default is None:
            out[key] = Key("int", None, optional=True,
                           help="corruption stream seed; defaults to the pretraining seed")
        else:
            out[key] = Key(type(default).__name__, default)
    out["pretext.method"] = Key("str", "scarf", choices=METHODS)
    out["scarf.variant"] = Key("str", "standard_infonce", choices=VARIANTS)
    return out


SCHEMA: dict[str, Key] = {
    "seed": Key("int", 0, help="master seed"),
    "out": Key("str", "run", help="output directory"),
    "jobs": Key("int", 1, help="worker processes for sweep cells"),
    "data.csv": Key("str", None, optional=True, help="input CSV, one row per sample"),
    "data.label_column": Key("str", "label", optional=True),
    "data.synthetic": Key("bool", False, help="generate the synthetic corpus instead of reading a CSV"),
    "synthetic.n_classes": Key("int", 10),
    "synthetic.n_features": Key("int", 512),
    "synthetic.n_groups": Key("int", 64),
    "synthetic.samples_per_class": Key("int", 600),
    "synthetic.seed": Key("int", 0),
    "preprocess.log2": Key("bool", None, optional=True,
                           help="log2(x + 1) before standardizing; default on for CSV, off for synthetic"),
    "split.pretrain": Key("float", 0.78),
    "split.finetune": Key("float", 0.11),
    "split.test": Key("float", 0.11),
    "split.validation": Key("float", 0.15),
    **_pretrain_keys(),
    "finetune.mode": Key("str", "unfrozen", choices=MODES),
    "finetune.batch_size": Key("int", 8),
    "finetune.max_epochs": Key("int", 100),
    "finetune.patience": Key("int", 30),
    "finetune.learning_rate": Key("float", 1e-3),
    "finetune.proportion": Key("float", 1.0),
    "finetune.from_scratch": Key("bool", False),
    "finetune.checkpoint": Key("str", None, optional=True),
    "sweep.kind": Key("str", "proportion", choices=SWEEP_KINDS),
    "sweep.methods": Key("str_list", list(METHODS)),
    "sweep.grid": Key("str", "0.02:0.3:0.01"),
    "sweep.seeds": Key("int", 5),
    "sweep.mode": Key("str", "unfrozen", choices=MODES),
    "sweep.q_grid": Key("str", None, optional=True,
                        help="pretraining fractions; default 0.01..0.05 by 0.01 then 0.05..1 by 0.05"),
    "sweep.proportion": Key("float", 0.1, help="fixed label fraction of the pretraining-size sweep"),
    "sweep.depths": Key("int_list", list(range(2, 11))),
    "sweep.widths": Key("int_list", [256, 1024]),
    "sweep.gain_lo": Key("float", 0.02),
    "sweep.gain_hi": Key("float", 0.3),
    "sweep.record_wall_ms": Key("bool", False,
                                help="fill the wall_ms column (makes results.csv run-dependent)"),
    "collapse.rel_tol": Key("float", 1e-6),
    "collapse.checkpoint": Key("str", None, optional=True),
    "collapse.data": Key("str", None, optional=True,
                         help="cached table to embed; default is the pretraining validation rows"),
}


def _check_value(name: str, key: Key, value):
    if value is None:
        if key.optional:
            return None
        raise ConfigError(f"{name} may not be null")
    kind = key.kind
    if kind == "bool":
        ok = isinstance(value, bool)
    elif kind == "int":
        ok = isinstance(value, int) and not isinstance(value, bool)
    elif kind == "float":
        ok = isinstance(value, (int, float)) and not isinstance(value, bool)
        value = float(value) if ok else value
    elif kind == "str":
        ok = isinstance(value, str)
    elif kind == "int_list":
        ok = isinstance(value, list) and all(
            isinstance(v, int) and not isinstance(v, bool) for v in value)
    elif kind == "str_list":
        ok = isinstance(value, list) and all(isinstance(v, str) for v in value)
    else:
        raise AssertionError(kind)
    if not ok:
        raise ConfigError(f"{name} expects {kind}, got {value!r}")
    if key.choices and value not in key.choices:
        raise ConfigError(f"{name} must be one of {list(key.choices)}, got {value!r}")
    return value


def parse_override(text: str) -> tuple[str, object]:
    """``key=value`` with the value read as JSON when possible, else as a string."""
    if "=" not in text:
        raise ConfigError(f"override must look like key=value, got {text!r}")
    name, raw = text.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return name.strip(), value


class RunConfig:
    """A validated, fully resolved flat configuration."""

    def __init__(self, values: dict | None = None):
        values = dict(values or {})
        unknown = sorted(set(values) - set(SCHEMA))
        if unknown:
            raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
        resolved = {}
        for name, key in SCHEMA.items():
            raw = values.get(name, key.default)
            resolved[name] = _check_value(name, key, raw)
        self.values = resolved
        self._validate()

    @classmethod
    def load(cls, path=None, overrides: dict | None = None) -> "RunConfig":
        values = {}
        if path is not None:
            try:
                values = json.loads(Path(path).read_text())
            except OSError as exc:
                raise ConfigError(f"cannot read config {path}: {exc}") from None
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{path}:{exc.lineno}: invalid JSON: {exc.msg}") from None
            if not isinstance(values, dict):
                raise ConfigError(f"{path}: config must be a JSON object")
        values.update(overrides or {})
        return cls(values)

    def __getitem__(self, name: str):
        return self.values[name]

    def snapshot(self) -> dict:
        return dict(self.values)

    @property
    def out(self) -> Path:
        return Path(self["out"])

    @property
    def log2(self) -> bool:
        if self["preprocess.log2"] is None:
            return not self["data.synthetic"]
        return self["preprocess.log2"]

    def split_plan(self) -> SplitPlan:
        return SplitPlan(self["split.pretrain"], self["split.finetune"], self["split.test"],
                         self["split.validation"], self["seed"])

    def pretrain_config(self, method: str | None = None, seed: int = 0) -> PretrainConfig:
        kw = {name: self[key] for key, name in PRETRAIN_KEYS.items()}
        if method is not None:
            kw["method"] = method
        return PretrainConfig(**kw, seed=seed)

    def fit_config(self) -> FitConfig:
        return FitConfig(self["finetune.batch_size"], self["finetune.max_epochs"],
                         self["finetune.patience"], self["finetune.learning_rate"], self["seed"])

    def sweep_grid(self) -> SweepGrid:
        return SweepGrid(parse_grid(self["sweep.grid"]), self["sweep.seeds"])

    def _validate(self):
        if self["jobs"] < 1:
            raise ConfigError("jobs must be >= 1")
        if not self["data.synthetic"] and self["data.label_column"] is None:
            raise ConfigError("data.label_column is required: the split is stratified by label")
        if self["data.synthetic"] and self["preprocess.log2"]:
            raise ConfigError("synthetic features can be negative; set preprocess.log2 to false")
        if not 0.0 < self["finetune.proportion"] <= 1.0:
            raise ConfigError("finetune.proportion must lie in (0, 1]")
        unknown = sorted(set(self["sweep.methods"]) - set(METHODS))
        if unknown or not self["sweep.methods"]:
            raise ConfigError(f"sweep.methods must be a nonempty subset of {list(METHODS)}")
        if not self["sweep.depths"] or not self["sweep.widths"]:
            raise ConfigError("sweep.depths and sweep.widths must be nonempty")
        if not self["sweep.gain_lo"] < self["sweep.gain_hi"]:
            raise ConfigError("sweep.gain_lo must be below sweep.gain_hi")
        try:
            self.split_plan()
            self.pretrain_config()
            self.fit_config()
            self.sweep_grid()
            if self["sweep.q_grid"] is not None:
                SweepGrid(parse_grid(self["sweep.q_grid"]))
        except ConfigError:
            raise
        except TabSSLError as exc:
            raise ConfigError(str(exc)) from None


def describe_schema() -> str:
    lines = []
    for name, key in SCHEMA.items():
        extra = f" one of {list(key.choices)}" if key.choices else ""
        note = f"  {key.help}" if key.help else ""
        lines.append(f"{name:32s} {key.kind:9s} default={json.dumps(key.default)}{extra}{note}")
    return "\n".join(lines)
