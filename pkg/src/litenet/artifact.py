"""``litenet-v1`` model artifact: line-oriented ``key = value`` text.

The first line is the format tag. Arrays are space-separated, row-major,
floats written with 17 significant digits so a load reproduces every
parameter bit for bit. Keys:

    window, input_columns, epsilon, lam, alpha, target_mean, target_std,
    feature_mean, feature_std, modules,
    module.<l>.{size,kernel,mask,bias,head_w,head_b},
    selection.{mi,weights,rank,threshold,selected,padded,cycle,fallback,
               columns,grid_size,kernel,bandwidth_rule},
    meta.columns, config.<section>.<key>
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .config import SCHEMA, _fmt, load_config, serialize_config
from .errors import ParseError
from .mutual_info import SelectionReport
from .net import ConvModuleParams, FusedModel

FORMAT_TAG = "litenet-v1"


def _f(x: float) -> str:
    return "%.17g" % x


def _arr(a) -> str:
    return " ".join(_f(float(v)) for v in np.ravel(a))


def _ints(a) -> str:
    return " ".join(str(int(v)) for v in np.ravel(a))


def dumps(model: FusedModel) -> str:
    kv: list[tuple[str, str]] = [
        ("window", str(model.window)),
        ("input_columns", _ints(model.input_columns)),
        ("epsilon", _f(model.epsilon)),
        ("lam", _f(model.lam)),
        ("alpha", _arr(model.alpha)),
        ("target_mean", _f(model.target_mean)),
        ("target_std", _f(model.target_std)),
    ]
    if model.feature_mean is not None:
        kv += [("feature_mean", _arr(model.feature_mean)), ("feature_std", _arr(model.feature_std))]
    kv.append(("modules", str(model.L)))
    for l, m in enumerate(model.modules):
        p = f"module.{l}."
        kv += [
            (p + "size", str(m.f)),
            (p + "kernel", _arr(m.kernel)),
            (p + "mask", _ints(m.mask.astype(int))),
            (p + "bias", _f(m.bias)),
            (p + "head_w", _f(m.head_w)),
            (p + "head_b", _f(m.head_b)),
        ]
    s = model.selection
    if s is not None:
        kv += [
            ("selection.mi", _arr(s.mi)),
            ("selection.weights", _arr(s.weights)),
            ("selection.rank", _ints(s.rank)),
            ("selection.threshold", _f(s.threshold)),
            ("selection.selected", _ints(s.selected)),
            ("selection.padded", _ints(s.padded)),
            ("selection.cycle", str(s.cycle)),
            ("selection.fallback", "true" if s.fallback else "false"),
            ("selection.columns", ",".join(s.columns)),
            ("selection.grid_size", str(s.grid_size)),
            ("selection.kernel", s.kernel),
            ("selection.bandwidth_rule", s.bandwidth_rule),
        ]
    if "columns" in model.meta:
        kv.append(("meta.columns", model.meta["columns"]))
    if "config" in model.meta:
        cfg = load_config(model.meta["config"])
        for section, keys in SCHEMA.items():
            for key in keys:
                kv.append((f"config.{section}.{key}", _fmt(cfg.values[section][key])))
    return FORMAT_TAG + "\n" + "".join(f"{k} = {v}\n" for k, v in kv)


def _parse_lines(text: str) -> dict[str, str]:
    lines = text.splitlines()
    if not lines or lines[0].strip() != FORMAT_TAG:
        raise ParseError(f"not a {FORMAT_TAG} artifact", line=1)
    out = {}
    for no, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        key, sep, value = line.partition(" = ")
        if not sep:
            key, sep, value = line.partition(" =")
        if not sep:
            raise ParseError("expected 'key = value'", line=no)
        out[key.strip()] = value.strip()
    return out


def loads(text: str) -> FusedModel:
    kv = _parse_lines(text)

    def floats(key):
        v = kv.get(key, "")
        return np.array([float(t) for t in v.split()], dtype=float)

    def ints(key):
        v = kv.get(key, "")
        return tuple(int(t) for t in v.split())

    try:
        modules = []
        for l in range(int(kv["modules"])):
            p = f"module.{l}."
            f = int(kv[p + "size"])
            modules.append(
                ConvModuleParams(
                    floats(p + "kernel").reshape(f, f),
                    float(kv[p + "bias"]),
                    float(kv[p + "head_w"]),
                    float(kv[p + "head_b"]),
                    np.array(ints(p + "mask"), dtype=bool).reshape(f, f),
                )
            )
        selection = None
        if "selection.mi" in kv:
            cols = kv.get("selection.columns", "")
            selection = SelectionReport(
                mi=floats("selection.mi"),
                weights=floats("selection.weights"),
                threshold=float(kv["selection.threshold"]),
                rank=np.array(ints("selection.rank"), dtype=int),
                selected=ints("selection.selected"),
                cycle=int(kv["selection.cycle"]),
                fallback=kv["selection.fallback"] == "true",
                padded=ints("selection.padded"),
                columns=tuple(cols.split(",")) if cols else (),
                kernel=kv.get("selection.kernel", "gaussian"),
                bandwidth_rule=kv.get("selection.bandwidth_rule", "silverman"),
                grid_size=int(kv.get("selection.grid_size", 64)),
            )
        meta = {}
        if "meta.columns" in kv:
            meta["columns"] = kv["meta.columns"]
        cfg_lines = [k for k in kv if k.startswith("config.")]
        if cfg_lines:
            sections: dict[str, list[str]] = {}
            for k in cfg_lines:
                _, section, key = k.split(".", 2)
                sections.setdefault(section, []).append(f"{key} = {kv[k]}")
            text_cfg = "".join(f"[{s}]\n" + "\n".join(v) + "\n" for s, v in sections.items())
            meta["config"] = serialize_config(load_config(text_cfg))
        return FusedModel(
            modules=tuple(modules),
            alpha=floats("alpha"),
            window=int(kv["window"]),
            input_columns=ints("input_columns"),
            epsilon=float(kv["epsilon"]),
            lam=float(kv["lam"]),
            feature_mean=floats("feature_mean") if "feature_mean" in kv else None,
            feature_std=floats("feature_std") if "feature_std" in kv else None,
            target_mean=float(kv["target_mean"]),
            target_std=float(kv["target_std"]),
            selection=selection,
            meta=meta,
        )
    except KeyError as exc:
        raise ParseError(f"artifact missing key {exc.args[0]}") from None
    except ValueError as exc:
        raise ParseError(f"bad artifact value: {exc}") from None


def save_model(model: FusedModel, path: str | Path) -> None:
    Path(path).write_text(dumps(model))


def load_model(path: str | Path) -> FusedModel:
    return loads(Path(path).read_text())
