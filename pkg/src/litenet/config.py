"""Sectioned ``key = value`` pipeline configuration.

Every key, its type and its default is listed in ``SCHEMA``; unknown
sections or keys are rejected.
"""

from __future__ import annotations

import configparser
import os
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Callable

from .errors import ConfigError
from .market_data import SynthConfig
from .mutual_info import SelectionConfig
from .net import TrainConfig

CONFIG_ENV = "LITENET_CONFIG"


def _int_list(text: str) -> tuple[int, ...]:
    text = text.strip()
    if not text:
        return ()
    return tuple(int(p) for p in text.split(","))


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _fmt(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ",".join(str(v) for v in value)
    return str(value)


# (section, key) -> (parser, default, check, message)
_Key = tuple[Callable[[str], Any], Any, Callable[[Any], bool], str]

SCHEMA: dict[str, dict[str, _Key]] = {
    "data": {
        "source": (str, "synthetic", lambda v: v in ("synthetic", "csv"), "must be synthetic or csv"),
        "csv_path": (str, "", lambda v: True, ""),
        "n_bars": (int, 4000, lambda v: v >= 0, "must be >= 0"),
        "drift": (float, 0.0, lambda v: v == v, "must be a number"),
        "volatility": (float, 0.001, lambda v: v >= 0, "must be >= 0"),
        "regime_shift_period": (int, 500, lambda v: v >= 1, "must be >= 1"),
        "n_noise_features": (int, 4, lambda v: v >= 0, "must be >= 0"),
        "signal_strength": (float, 0.5, lambda v: 0 <= v <= 1, "must lie in [0, 1]"),
    },
    "features": {
        "horizon": (int, 1, lambda v: v >= 1, "must be >= 1"),
        "vol_window": (int, 20, lambda v: v >= 2, "must be >= 2"),
        "window": (int, 20, lambda v: v >= 1, "must be >= 1"),
    },
    "selection": {
        "k": (int, 10, lambda v: v >= 1, "must be >= 1"),
        "max_iter": (int, 100, lambda v: v >= 1, "must be >= 1"),
        "tol": (float, 1e-6, lambda v: v >= 0, "must be >= 0"),
        "mi_threshold": (float, 0.05, lambda v: v >= 0, "must be >= 0"),
        "top_m": (int, 5, lambda v: v >= 1, "must be >= 1"),
        "grid_size": (int, 64, lambda v: v >= 8, "must be >= 8"),
        "reselect": (_bool, False, lambda v: True, ""),
        "reselect_rows": (int, 1000, lambda v: v >= 2, "must be >= 2"),
    },
    "train": {
        "epochs": (int, 30, lambda v: v >= 0, "must be >= 0"),
        "batch_size": (int, 128, lambda v: v >= 1, "must be >= 1"),
        "lr0": (float, 0.001, lambda v: v > 0, "must be > 0"),
        "lr_halving_period": (int, 10, lambda v: v >= 1, "must be >= 1"),
        "beta1": (float, 0.9, lambda v: 0 <= v < 1, "must lie in [0, 1)"),
        "beta2": (float, 0.999, lambda v: 0 <= v < 1, "must lie in [0, 1)"),
        "adam_eps": (float, 1e-8, lambda v: v > 0, "must be > 0"),
        "epsilon": (float, 0.01, lambda v: v >= 0, "must be >= 0"),
        "lambda": (float, 0.1, lambda v: v >= 0, "must be >= 0"),
        "prune_schedule": (_int_list, (10, 20), lambda v: all(e >= 0 for e in v), "epochs must be >= 0"),
        "kernels": (_int_list, (3, 5), lambda v: len(v) >= 1 and min(v) >= 1, "need sizes >= 1"),
    },
    "run": {
        "seed": (int, 0, lambda v: v >= 0, "must be a non-negative integer"),
        "train_fraction": (float, 0.8, lambda v: 0 < v < 1, "must lie in (0, 1)"),
    },
}


@dataclass(frozen=True)
class PipelineConfig:
    values: dict[str, dict[str, Any]] = field(
        default_factory=lambda: {s: {k: spec[1] for k, spec in keys.items()} for s, keys in SCHEMA.items()}
    )

    def __getitem__(self, dotted: str) -> Any:
        section, key = dotted.split(".")
        return self.values[section][key]

    def set(self, dotted: str, value: Any) -> "PipelineConfig":
        section, key = dotted.split(".")
        if section not in SCHEMA or key not in SCHEMA[section]:
            raise ConfigError(dotted, "unknown key")
        new = {s: dict(kv) for s, kv in self.values.items()}
        new[section][key] = value
        cfg = PipelineConfig(new)
        cfg.validate()
        return cfg

    def validate(self) -> None:
        for section, keys in SCHEMA.items():
            for key, (_, _, check, msg) in keys.items():
                if not check(self.values[section][key]):
                    raise ConfigError(f"{section}.{key}", msg)
        if self["data.source"] == "csv" and not self["data.csv_path"]:
            raise ConfigError("data.csv_path", "required when data.source = csv")

    @property
    def seed(self) -> int:
        return self["run.seed"]

    @property
    def max_kernel(self) -> int:
        return max(self["train.kernels"])

    def synth_config(self) -> SynthConfig:
        d = self.values["data"]
        return SynthConfig(
            n_bars=d["n_bars"], seed=self.seed, drift=d["drift"], volatility=d["volatility"],
            regime_shift_period=d["regime_shift_period"], n_noise_features=d["n_noise_features"],
            signal_strength=d["signal_strength"],
        )

    def selection_config(self) -> SelectionConfig:
        s = self.values["selection"]
        return SelectionConfig(
            k=s["k"], max_iter=s["max_iter"], tol=s["tol"], mi_threshold=s["mi_threshold"],
            top_m=s["top_m"], grid_size=s["grid_size"], min_selected=self.max_kernel, seed=self.seed,
        )

    def train_config(self) -> TrainConfig:
        t = self.values["train"]
        return TrainConfig(
            epochs=t["epochs"], batch_size=t["batch_size"], lr0=t["lr0"],
            lr_halving_period=t["lr_halving_period"], beta1=t["beta1"], beta2=t["beta2"],
            adam_eps=t["adam_eps"], epsilon=t["epsilon"], lam=t["lambda"],
            prune_schedule=t["prune_schedule"], kernel_sizes=t["kernels"], seed=self.seed,
        )

    def with_window(self, window: int) -> "PipelineConfig":
        return self.set("features.window", window)

    def with_threshold(self, threshold: float) -> "PipelineConfig":
        return self.set("selection.mi_threshold", threshold)


def load_config(text: str) -> PipelineConfig:
    parser = configparser.ConfigParser(
        interpolation=None, strict=True, empty_lines_in_values=False, inline_comment_prefixes=("#",)
    )
    parser.optionxform = str  # keep key case so typos are not silently folded
    try:
        parser.read_string(text)
    except configparser.MissingSectionHeaderError:
        raise ConfigError("<file>", "keys must appear under a [section] header") from None
    except configparser.Error as exc:
        raise ConfigError("<file>", str(exc).splitlines()[0]) from None

    values = PipelineConfig().values
    for section in parser.sections():
        if section not in SCHEMA:
            raise ConfigError(section, "unknown section")
        for key, raw in parser.items(section):
            name = f"{section}.{key}"
            if key not in SCHEMA[section]:
                raise ConfigError(name, "unknown key")
            conv = SCHEMA[section][key][0]
            try:
                values[section][key] = conv(raw.strip())
            except ValueError:
                raise ConfigError(name, f"cannot parse {raw.strip()!r} as {getattr(conv, '__name__', conv)}") from None
    cfg = PipelineConfig(values)
    cfg.validate()
    return cfg


def serialize_config(cfg: PipelineConfig) -> str:
    out = []
    for section, keys in SCHEMA.items():
        out.append(f"[{section}]")
        out += [f"{key} = {_fmt(cfg.values[section][key])}" for key in keys]
        out.append("")
    return "\n".join(out)


def read_config(path: str | os.PathLike | None = None) -> PipelineConfig:
    """Load from ``path``, else from $LITENET_CONFIG, else defaults."""
    path = path or os.environ.get(CONFIG_ENV)
    if not path:
        return PipelineConfig()
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError("<file>", f"cannot read {path}: {exc.strerror}") from None
    cfg = load_config(text)
    if cfg["data.source"] == "csv":
        # relative CSV paths resolve against the config file's directory
        p = Path(cfg["data.csv_path"])
        if not p.is_absolute():
            cfg = replace(cfg, values={**cfg.values, "data": {**cfg.values["data"], "csv_path": str(Path(path).parent / p)}})
    return cfg
