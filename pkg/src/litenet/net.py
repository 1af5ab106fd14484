"""Multi-scale convolutional predictor with magnitude pruning.

Each module is a single-channel valid 2-D cross-correlation over a
(window x features) input, rectified, globally average-pooled and passed
through a scalar affine head. Module outputs are fused by learned weights.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import DegenerateModelError, SizeError
from .market_data import WindowSet
from .mutual_info import SelectionReport


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 30
    batch_size: int = 128
    lr0: float = 0.001
    lr_halving_period: int = 10
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    epsilon: float = 0.01  # prune threshold
    lam: float = 0.1  # penalty weight on near-zero weights
    prune_schedule: tuple[int, ...] = (10, 20)
    kernel_sizes: tuple[int, ...] = (3, 5)
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 0 or self.batch_size < 1 or self.lr_halving_period < 1:
            raise ValueError("epochs >= 0, batch_size >= 1, lr_halving_period >= 1 required")
        if not (self.lr0 > 0 and self.adam_eps > 0 and 0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("learning rate, betas and adam eps out of range")
        if self.epsilon < 0 or self.lam < 0:
            raise ValueError("epsilon and lam must be >= 0")
        if not self.kernel_sizes or min(self.kernel_sizes) < 1:
            raise ValueError("kernel sizes must be >= 1")

    def lr(self, epoch: int) -> float:
        return self.lr0 * 0.5 ** (epoch // self.lr_halving_period)


@dataclass(frozen=True, eq=False)
class ConvModuleParams:
    kernel: np.ndarray  # (f, f), masked entries stored as exact zeros
    bias: float = 0.0
    head_w: float = 1.0
    head_b: float = 0.0
    mask: np.ndarray | None = None  # True = retained
    taps: tuple[tuple[int, int, float], ...] = field(init=False, repr=False)

    def __post_init__(self):
        kernel = np.array(self.kernel, dtype=float, ndmin=2)
        if kernel.shape[0] != kernel.shape[1]:
            raise SizeError("kernel must be square")
        mask = np.ones(kernel.shape, bool) if self.mask is None else np.array(self.mask, bool)
        if mask.shape != kernel.shape:
            raise SizeError("mask shape must match kernel")
        kernel = np.where(mask, kernel, 0.0)
        kernel.setflags(write=False)
        mask.setflags(write=False)
        object.__setattr__(self, "kernel", kernel)
        object.__setattr__(self, "mask", mask)
        object.__setattr__(self, "bias", float(self.bias))
        object.__setattr__(self, "head_w", float(self.head_w))
        object.__setattr__(self, "head_b", float(self.head_b))
        taps = tuple(
            (int(i), int(j), float(kernel[i, j])) for i, j in zip(*np.nonzero(mask))
        )
        object.__setattr__(self, "taps", taps)

    @property
    def f(self) -> int:
        return self.kernel.shape[0]


@dataclass(frozen=True, eq=False)
class FusedModel:
    modules: tuple[ConvModuleParams, ...]
    alpha: np.ndarray
    window: int
    input_columns: tuple[int, ...]
    epsilon: float = 0.01
    lam: float = 0.1
    feature_mean: np.ndarray | None = None  # over the full feature universe
    feature_std: np.ndarray | None = None
    target_mean: float = 0.0
    target_std: float = 1.0
    selection: SelectionReport | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        alpha = np.array(self.alpha, dtype=float, ndmin=1)
        if not self.modules or alpha.shape != (len(self.modules),):
            raise SizeError("need L >= 1 modules and one alpha per module")
        if not np.isfinite(alpha).all():
            raise ValueError("alpha must be finite")
        alpha.setflags(write=False)
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "input_columns", tuple(int(c) for c in self.input_columns))
        max_f = max(m.f for m in self.modules)
        if max_f > min(self.window, self.d):
            raise SizeError(f"kernel size {max_f} exceeds input {self.window}x{self.d}")

    @property
    def d(self) -> int:
        return len(self.input_columns)

    @property
    def L(self) -> int:
        return len(self.modules)

    def with_alpha(self, alpha) -> "FusedModel":
        return replace(self, alpha=np.asarray(alpha, dtype=float))


# ---------------------------------------------------------------- forward


def conv_forward(x: np.ndarray, params: ConvModuleParams) -> np.ndarray:
    """Rectified valid cross-correlation, using only the retained taps."""
    x = np.asarray(x, dtype=float)
    f = params.f
    T, D = x.shape
    if T < f or D < f:
        raise SizeError(f"input {T}x{D} smaller than kernel {f}x{f}")
    H, W = T - f + 1, D - f + 1
    acc = np.full((H, W), params.bias)
    for i, j, w in params.taps:
        acc += w * x[i : i + H, j : j + W]
    np.maximum(acc, 0.0, out=acc)
    return acc


def module_forward(x: np.ndarray, params: ConvModuleParams) -> float:
    return params.head_w * float(conv_forward(x, params).mean()) + params.head_b


def fused_forward(x: np.ndarray, model: FusedModel) -> float:
    """Prediction for one window already restricted to the model's input columns."""
    if np.shape(x) != (model.window, model.d):
        raise SizeError(f"expected window {model.window}x{model.d}, got {np.shape(x)}")
    out = 0.0
    for a, m in zip(model.alpha, model.modules):
        out += a * module_forward(x, m)
    return float(out)


def predict_windows(model: FusedModel, ws: WindowSet, raw_scale: bool = False) -> np.ndarray:
    """Predictions for every window of ``ws`` (columns picked per model)."""
    cols = list(model.input_columns)
    out = np.empty(len(ws))
    for k in range(len(ws)):
        x, _ = ws[k]
        out[k] = fused_forward(x[:, cols], model)
    if raw_scale:
        out = out * model.target_std + model.target_mean
    return out


# ---------------------------------------------------------------- gradients


def _param_dict(model: FusedModel) -> dict[str, np.ndarray]:
    p = {"alpha": model.alpha.copy()}
    for l, m in enumerate(model.modules):
        p[f"kernel{l}"] = m.kernel.copy()
        p[f"bias{l}"] = np.array(m.bias)
        p[f"head_w{l}"] = np.array(m.head_w)
        p[f"head_b{l}"] = np.array(m.head_b)
    return p


def _forward_backward(p, masks, xb, yb, need_grad=True):
    B = len(yb)
    L = len(masks)
    cache = []
    yhat = np.zeros(B)
    for l in range(L):
        W = p[f"kernel{l}"]
        f = W.shape[0]
        patches = sliding_window_view(xb, (f, f), axis=(1, 2))  # (B, H, Wd, f, f)
        pre = np.einsum("bmnij,ij->bmn", patches, W) + p[f"bias{l}"]
        act = np.maximum(pre, 0.0)
        pooled = act.mean(axis=(1, 2))
        M = p[f"head_w{l}"] * pooled + p[f"head_b{l}"]
        yhat += p["alpha"][l] * M
        cache.append((patches, pre, pooled, M))
    resid = yhat - yb
    loss = float(np.mean(resid * resid))
    if not need_grad:
        return loss, None, yhat
    g = 2.0 * resid / B
    grads = {"alpha": np.array([g @ c[3] for c in cache])}
    for l, (patches, pre, pooled, M) in enumerate(cache):
        dM = g * p["alpha"][l]
        grads[f"head_w{l}"] = np.array(dM @ pooled)
        grads[f"head_b{l}"] = np.array(dM.sum())
        dpool = dM * p[f"head_w{l}"]
        P = pre.shape[1] * pre.shape[2]
        dpre = (dpool / P)[:, None, None] * (pre > 0)
        grads[f"kernel{l}"] = np.einsum("bmnij,bmn->ij", patches, dpre) * masks[l]
        grads[f"bias{l}"] = np.array(dpre.sum())
    return loss, grads, yhat


def _check_batch(model: FusedModel, xb, yb):
    xb = np.asarray(xb, dtype=float)
    yb = np.asarray(yb, dtype=float)
    if xb.ndim == 2:
        xb = xb[None]
        yb = np.atleast_1d(yb)
    if len(yb) == 0 or len(xb) != len(yb):
        raise SizeError("batch must be nonempty with one target per window")
    if xb.shape[1:] != (model.window, model.d):
        raise SizeError(f"batch windows must be {model.window}x{model.d}")
    return xb, yb


def loss_and_gradients(model: FusedModel, xb, yb) -> tuple[float, dict[str, np.ndarray]]:
    """Batch MSE and its analytic gradient for every trainable parameter.

    Gradient keys: ``alpha``, ``kernel<l>``, ``bias<l>``, ``head_w<l>``,
    ``head_b<l>``. Masked kernel entries get exactly zero gradient.
    """
    xb, yb = _check_batch(model, xb, yb)
    masks = [m.mask for m in model.modules]
    loss, grads, _ = _forward_backward(_param_dict(model), masks, xb, yb)
    return loss, grads


def small_weight_count(model: FusedModel, epsilon: float | None = None) -> int:
    eps = model.epsilon if epsilon is None else epsilon
    return int(sum(np.count_nonzero(m.mask & (np.abs(m.kernel) <= eps)) for m in model.modules))


def penalized_loss(model: FusedModel, xb, yb) -> float:
    """MSE plus ``lam`` times the number of retained weights with |w| <= epsilon."""
    xb, yb = _check_batch(model, xb, yb)
    masks = [m.mask for m in model.modules]
    loss, _, _ = _forward_backward(_param_dict(model), masks, xb, yb, need_grad=False)
    return loss + model.lam * small_weight_count(model)


def model_from_params(template: FusedModel, p: dict, masks) -> FusedModel:
    modules = tuple(
        ConvModuleParams(
            p[f"kernel{l}"], float(p[f"bias{l}"]), float(p[f"head_w{l}"]),
            float(p[f"head_b{l}"]), masks[l],
        )
        for l in range(template.L)
    )
    return replace(template, modules=modules, alpha=p["alpha"].copy())


# ---------------------------------------------------------------- pruning


@dataclass(frozen=True)
class PruneReport:
    epsilon: float
    total: int
    masked: int
    newly_masked: int
    skipped: tuple[int, ...]  # modules whose kernel would have been emptied

    @property
    def sparsity(self) -> float:
        return self.masked / self.total


def prune_model(model: FusedModel, epsilon: float | None = None, strict: bool = False) -> tuple[FusedModel, PruneReport]:
    """Retain weights with |w| > epsilon; zero and permanently mask the rest.

    A kernel that would lose every weight is left as is and listed in
    ``skipped``; with ``strict`` that raises DegenerateModelError instead.
    """
    eps = model.epsilon if epsilon is None else float(epsilon)
    if eps < 0:
        raise ValueError("epsilon must be >= 0")
    modules, skipped = [], []
    newly = 0
    for l, m in enumerate(model.modules):
        keep = m.mask & (np.abs(m.kernel) > eps)
        if not keep.any():
            if strict:
                raise DegenerateModelError(f"pruning at {eps} would empty kernel {l}")
            skipped.append(l)
            modules.append(m)
            continue
        newly += int(np.count_nonzero(m.mask & ~keep))
        modules.append(replace(m, mask=keep))
    pruned = replace(model, modules=tuple(modules))
    total = sum(m.kernel.size for m in modules)
    masked = sum(int(np.count_nonzero(~m.mask)) for m in modules)
    return pruned, PruneReport(eps, total, masked, newly, tuple(skipped))


@dataclass(frozen=True)
class ModelStats:
    total_params: int
    unmasked_params: int
    kernel_weights: int
    masked_weights: int
    macs: int

    @property
    def sparsity(self) -> float:
        return self.masked_weights / self.kernel_weights


def model_stats(model: FusedModel) -> ModelStats:
    kernel_weights = sum(m.kernel.size for m in model.modules)
    masked = sum(int(np.count_nonzero(~m.mask)) for m in model.modules)
    extra = 3 * model.L + model.L  # bias, head_w, head_b per module + alpha
    macs = sum(
        (model.window - m.f + 1) * (model.d - m.f + 1) * len(m.taps) for m in model.modules
    )
    return ModelStats(kernel_weights + extra, kernel_weights - masked + extra, kernel_weights, masked, macs)


# ---------------------------------------------------------------- training


def init_model(
    cfg: TrainConfig, window: int, input_columns, **extra
) -> FusedModel:
    rng = np.random.default_rng([cfg.seed, 2])
    modules = []
    for f in cfg.kernel_sizes:
        bound = 1.0 / math.sqrt(f * f)
        kernel = rng.uniform(-bound, bound, (f, f))
        head_w = float(rng.uniform(-1.0, 1.0))
        modules.append(ConvModuleParams(kernel, 0.0, head_w, 0.0))
    L = len(modules)
    return FusedModel(
        tuple(modules), np.full(L, 1.0 / L), window, tuple(input_columns),
        epsilon=cfg.epsilon, lam=cfg.lam, **extra,
    )


Reselector = Callable[[int, SelectionReport], SelectionReport]


@dataclass
class TrainLog:
    epoch_loss: list[float] = field(default_factory=list)
    prunes: list[tuple[int, PruneReport]] = field(default_factory=list)
    selections: list[SelectionReport] = field(default_factory=list)
    stats: list[ModelStats] = field(default_factory=list)


def train(
    dataset: WindowSet,
    cfg: TrainConfig,
    selection: SelectionReport,
    reselect: Reselector | None = None,
    log: TrainLog | None = None,
    init: FusedModel | None = None,
    **model_extra,
) -> FusedModel:
    """Adam on batch MSE with step-halving learning rate and scheduled pruning.

    ``dataset`` holds the full (standardized) feature universe; the model
    reads the columns in ``selection.selected``. When ``reselect`` is given it
    is called at the start of every epoch after the first and may swap the
    input columns. ``init`` resumes from an existing model (its masks are
    kept) instead of a fresh initialization.
    """
    if len(dataset) == 0:
        raise SizeError("empty dataset")
    if selection.d != dataset.d:
        raise SizeError(f"selection covers {selection.d} features, dataset has {dataset.d}")
    kmax = max(cfg.kernel_sizes)
    if len(selection.selected) < kmax or dataset.window < kmax:
        raise SizeError(
            f"{len(selection.selected)} features x window {dataset.window} too small for kernel {kmax}"
        )
    log = log if log is not None else TrainLog()
    if init is None:
        model = init_model(cfg, dataset.window, selection.selected, selection=selection, **model_extra)
    else:
        if init.window != dataset.window or tuple(init.input_columns) != tuple(selection.selected):
            raise SizeError("init model does not match the dataset window and selected columns")
        if tuple(m.f for m in init.modules) != tuple(cfg.kernel_sizes):
            raise SizeError("init model kernel sizes differ from the training config")
        model = init
    if cfg.epochs == 0:
        return model

    p = _param_dict(model)
    masks = [m.mask.copy() for m in model.modules]
    mom = {k: np.zeros_like(v) for k, v in p.items()}
    vel = {k: np.zeros_like(v) for k, v in p.items()}
    rng = np.random.default_rng([cfg.seed, 1])
    step = 0
    columns = list(selection.selected)
    current = selection
    log.stats.append(model_stats(model))

    for epoch in range(cfg.epochs):
        if reselect is not None and epoch > 0:
            current = reselect(epoch, current)
            if len(current.selected) < kmax:
                raise SizeError("reselection returned too few features for the kernels")
            columns = list(current.selected)
            log.selections.append(current)
        if epoch in cfg.prune_schedule:
            snapshot = model_from_params(model, p, masks)
            pruned, report = prune_model(snapshot, cfg.epsilon)
            masks = [m.mask.copy() for m in pruned.modules]
            for l, mask in enumerate(masks):
                p[f"kernel{l}"] = np.where(mask, p[f"kernel{l}"], 0.0)
                mom[f"kernel{l}"] = np.where(mask, mom[f"kernel{l}"], 0.0)
                vel[f"kernel{l}"] = np.where(mask, vel[f"kernel{l}"], 0.0)
            log.prunes.append((epoch, report))
            log.stats.append(model_stats(pruned))

        lr = cfg.lr(epoch)
        order = rng.permutation(len(dataset))
        total = 0.0
        for start in range(0, len(order), cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            xb, yb = dataset.batch(idx, columns)
            loss, grads, _ = _forward_backward(p, masks, xb, yb)
            total += loss * len(idx)
            step += 1
            c1 = 1.0 - cfg.beta1**step
            c2 = 1.0 - cfg.beta2**step
            for k, g in grads.items():
                mom[k] = cfg.beta1 * mom[k] + (1.0 - cfg.beta1) * g
                vel[k] = cfg.beta2 * vel[k] + (1.0 - cfg.beta2) * g * g
                p[k] = p[k] - lr * (mom[k] / c1) / (np.sqrt(vel[k] / c2) + cfg.adam_eps)
            for l, mask in enumerate(masks):
                p[f"kernel{l}"] = np.where(mask, p[f"kernel{l}"], 0.0)
        log.epoch_loss.append(total / len(dataset))

    final = model_from_params(model, p, masks)
    return replace(final, input_columns=tuple(columns), selection=current)
