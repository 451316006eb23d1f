"""Self-supervised training loop, metrics, and run logging.

The loss is the problem objective itself evaluated on the network output
(projected in hard-constraint mode). Metrics follow the usual convention:
relative suboptimality clipped at zero, constraint violation recomputed
from the raw constraint description rather than the lifted system.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autotune import TuneReport, tune
from .backward import KrylovSettings
from .equilibration import rescale_constraint, ruiz_equilibrate
from .exceptions import ConfigError, NumericalFailureError
from .layer import Backbone, ConstrainedModel, ProjectionLayer, soft_violation_rows
from .problems import Dataset, objective_loss, objective_values
from .projection import DRSettings

__all__ = [
    "TrainConfig",
    "Metrics",
    "EpochStats",
    "RunLog",
    "SetupInfo",
    "AdamOptimizer",
    "make_model",
    "train",
    "evaluate",
]

RS_THRESHOLD = 0.05
CV_THRESHOLD = 1e-3

_MODES = ("project", "inference_only", "soft_penalty")


@dataclass
class TrainConfig:
    """Everything a run needs; serialized alongside its outputs."""

    epochs: int = 50
    batch_size: int = 256
    lr: float = 1e-3
    lr_schedule: str = "constant"
    optimizer: str = "adam"
    settings: DRSettings = field(default_factory=DRSettings)
    equilibrate: bool = False
    tune: bool = False
    seed: int = 0
    mode: str = "project"
    penalty: float = 0.0
    hidden: tuple = (200, 200)
    max_seconds: float | None = None

    def __post_init__(self):
        if self.epochs < 0:
            raise ConfigError("epochs must be >= 0")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.lr <= 0:
            raise ConfigError("lr must be positive")
        if self.lr_schedule not in ("constant", "cosine"):
            raise ConfigError(f"unknown lr_schedule {self.lr_schedule!r}")
        if self.optimizer != "adam":
            raise ConfigError(f"unknown optimizer {self.optimizer!r}")
        if self.mode not in _MODES:
            raise ConfigError(f"mode must be one of {_MODES}")
        if self.penalty < 0:
            raise ConfigError("penalty must be >= 0")
        if self.mode == "soft_penalty" and self.penalty == 0.0:
            raise ConfigError("soft_penalty mode needs penalty > 0")
        if any(h < 1 for h in self.hidden):
            raise ConfigError(f"bad hidden sizes {self.hidden}")
        if self.max_seconds is not None and self.max_seconds <= 0:
            raise ConfigError("max_seconds must be positive")


@dataclass
class Metrics:
    """Per-instance suboptimality and violation with the joint-threshold flag."""

    rs_rows: np.ndarray
    cv_rows: np.ndarray
    oracle_mask: np.ndarray
    optimal_rows: np.ndarray
    rs: float
    cv: float
    cv_max: float
    optimal_frac: float
    timestamp: float


@dataclass
class EpochStats:
    epoch: int
    loss: float
    val_rs: float
    val_cv: float
    val_cv_max: float
    krylov_rate: float
    elapsed: float


@dataclass
class RunLog:
    entries: list
    setup_seconds: float
    train_seconds: float
    budget_exhausted: bool = False

    def rows(self):
        return [
            (e.epoch, e.loss, e.val_rs, e.val_cv, e.val_cv_max, e.krylov_rate, e.elapsed)
            for e in self.entries
        ]


@dataclass
class SetupInfo:
    seconds: float
    equilibrated: bool
    tune_report: TuneReport | None
    settings: DRSettings


class AdamOptimizer:
    """Adaptive moments with bias correction; updates tensors in place."""

    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.values) for p in self.params]
        self.v = [np.zeros_like(p.values) for p in self.params]

    def step(self, grads):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        for i, p in enumerate(self.params):
            g = grads[p]
            self.m[i] = b1 * self.m[i] + (1 - b1) * g
            self.v[i] = b2 * self.v[i] + (1 - b2) * g * g
            m_hat = self.m[i] / (1 - b1 ** self.t)
            v_hat = self.v[i] / (1 - b2 ** self.t)
            p.values[...] -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def _model_mode(config_mode: str) -> str:
    # soft-penalty training is inference-only plus the violation term
    return "project" if config_mode == "project" else "inference_only"


def make_model(dataset: Dataset, config: TrainConfig,
               krylov: KrylovSettings | None = None):
    """Build the model for a dataset: backbone sizes, completion head,
    context standardization, optional equilibration and tuning.

    :returns: (model, SetupInfo); setup seconds cover equilibration,
        tuning, and factorization work, which run logs count as part of
        the training wall clock.
    """
    t0 = time.perf_counter()
    structure = dataset.structure
    train_idx = dataset.split("train")
    contexts = dataset.contexts
    p = contexts.shape[1]

    completion = None
    out_dim = structure.d
    if "completion_a" in dataset.structure_arrays:
        ra = dataset.structure_arrays["completion_a"]
        rc = dataset.structure_arrays["completion_c"]
        completion = (ra, rc)
        out_dim = ra.shape[1]

    shift = contexts[train_idx].mean(axis=0)
    scale = contexts[train_idx].std(axis=0)
    scale = np.where(scale < 1e-12, 1.0, scale)

    target = structure
    if config.equilibrate:
        try:
            scaling = ruiz_equilibrate(structure.hyperplane.a)
            target = rescale_constraint(structure, scaling)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    settings = config.settings
    report = None
    if config.tune:
        rows = dataset.rhs[train_idx[:150]]
        report = tune(target, rhs_rows=rows, seed=config.seed)
        settings = report.as_settings(settings)

    backbone = Backbone([p, *config.hidden, out_dim], seed=config.seed)
    layer = ProjectionLayer(target, settings, krylov)
    model = ConstrainedModel(
        backbone, layer, mode=_model_mode(config.mode), penalty=config.penalty,
        completion=completion, ctx_shift=shift, ctx_scale=scale,
    )
    info = SetupInfo(
        seconds=time.perf_counter() - t0,
        equilibrated=config.equilibrate,
        tune_report=report,
        settings=settings,
    )
    return model, info


def evaluate(model: ConstrainedModel, dataset: Dataset, split: str = "test",
             n_iter: int | None = None, rs_threshold: float = RS_THRESHOLD,
             cv_threshold: float = CV_THRESHOLD) -> Metrics:
    """Projected predictions scored against stored oracle optima.

    Rows without a certified oracle get NaN suboptimality and are left out
    of the averages; violation is always computed.
    """
    idx = dataset.split(split)
    contexts = dataset.contexts[idx]
    rhs = dataset.rhs[idx]
    res = model.predict(contexts, rhs, n_iter)
    y = res.y

    raw = dataset.structure.raw
    eq_rhs = dataset.structure.raw_eq_rhs_rows(rhs)
    cv_rows = raw.violation_batch(y, eq_rhs)

    mask = dataset.oracle_ok[idx]
    rs_rows = np.full(len(idx), np.nan)
    if mask.any():
        obj = objective_values(dataset.objective, y[mask], contexts[mask])
        star = dataset.oracle_obj[idx][mask]
        rs_rows[mask] = np.maximum(0.0, (obj - star) / star)

    optimal = (cv_rows <= cv_threshold) & (rs_rows <= rs_threshold)
    return Metrics(
        rs_rows=rs_rows,
        cv_rows=cv_rows,
        oracle_mask=mask,
        optimal_rows=optimal,
        rs=float(np.mean(rs_rows[mask])) if mask.any() else float("nan"),
        cv=float(np.mean(cv_rows)),
        cv_max=float(np.max(cv_rows)),
        optimal_frac=float(np.mean(optimal[mask])) if mask.any() else float("nan"),
        timestamp=time.time(),
    )


def train(model: ConstrainedModel, dataset: Dataset, config: TrainConfig,
          setup_seconds: float = 0.0) -> RunLog:
    """Minibatch loop over the train split with per-epoch validation.

    :param setup_seconds: offset added to every logged timestamp so curves
        account for one-time setup; also counts against ``max_seconds``.
    :raises NumericalFailureError: on a non-finite loss, with the epoch and
        batch in the message.
    """
    t0 = time.perf_counter()
    train_idx = dataset.split("train")
    contexts = dataset.contexts
    rhs = dataset.rhs
    raw = dataset.structure.raw
    rng = np.random.default_rng(config.seed)
    opt = AdamOptimizer(model.parameters, lr=config.lr)
    steps_per_epoch = -(-train_idx.size // config.batch_size)
    total_steps = max(1, config.epochs * steps_per_epoch)
    global_step = 0
    entries = []
    exhausted = False
    last_loss = float("nan")

    def elapsed():
        return setup_seconds + time.perf_counter() - t0

    for epoch in range(config.epochs):
        order = rng.permutation(train_idx)
        losses = []
        krylov_rates = []
        for start in range(0, order.size, config.batch_size):
            if config.lr_schedule == "cosine":
                frac = global_step / total_steps
                opt.lr = config.lr * 0.5 * (1.0 + np.cos(np.pi * frac))
            global_step += 1
            batch = order[start : start + config.batch_size]
            ctx = contexts[batch]
            rows = rhs[batch]
            with ad.Tape() as tape:
                y_t = model.forward_t(ctx, rows)
                loss = objective_loss(dataset.objective, y_t, ctx)
                if config.penalty > 0.0:
                    pen = ad.mean(
                        soft_violation_rows(
                            raw, y_t, dataset.structure.raw_eq_rhs_rows(rows)
                        )
                    )
                    loss = loss + pen * config.penalty
            value = float(loss.values)
            if not np.isfinite(value):
                raise NumericalFailureError(
                    f"non-finite loss {value} at epoch {epoch} batch "
                    f"{start // config.batch_size}; last finite loss {last_loss}"
                )
            last_loss = value
            losses.append(value)
            grads = ad.backward(tape, 1.0, output=loss)
            opt.step(grads)
            if model.mode == "project":
                krylov_rates.append(model.layer.last.get("krylov_converged", np.nan))
            if config.max_seconds is not None and elapsed() > config.max_seconds:
                exhausted = True
                break

        val = evaluate(model, dataset, "val")
        entries.append(
            EpochStats(
                epoch=epoch,
                loss=float(np.mean(losses)) if losses else float("nan"),
                val_rs=val.rs,
                val_cv=val.cv,
                val_cv_max=val.cv_max,
                krylov_rate=float(np.nanmean(krylov_rates)) if krylov_rates else float("nan"),
                elapsed=elapsed(),
            )
        )
        if exhausted:
            break

    return RunLog(
        entries=entries,
        setup_seconds=setup_seconds,
        train_seconds=time.perf_counter() - t0,
        budget_exhausted=exhausted,
    )
