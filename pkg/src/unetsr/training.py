"""Adam training loop, evaluation helpers and experiment sweeps.

Updates are per-sample (batch size 1 by default) with a seeded shuffle each
epoch; the learning rate starts at 1e-3 and halves every 25 epochs. All
randomness derives from (seed, epoch), so any prefix of a run can be
checkpointed and resumed bit-exactly.
"""

from __future__ import annotations

import csv
import json
import math
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .checkpoint import Checkpoint, save_checkpoint
from .errors import CheckpointError, ConfigError, ContractError, TrainingError
from .images import PairManifest, bicubic_resize, decode_image, to_tensor
from .losses import LossConfig, loss_value, mge
from .metrics import MetricReport, MetricRow, SSIMWindow, psnr, ssim
from .model import Model, ParamSet
from .tensor import Tape, Tensor, backward, crop2d

LAMBDA_GRID = (1e-4, 1e-3, 1e-2, 1e-1, 1.0)
DEPTH_GRID = (2, 3, 4, 5, 6, 7, 8)


@dataclass
class TrainConfig:
    epochs: int = 200
    batch_size: int = 1
    lr0: float = 1e-3
    lr_half_every: int = 25
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    loss: LossConfig = field(default_factory=LossConfig)
    shuffle: bool = True
    max_grad_norm: Optional[float] = None

    def __post_init__(self):
        if self.epochs < 0:
            raise ConfigError(f"epochs must be >= 0, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.lr0 <= 0:
            raise ConfigError(f"lr0 must be positive, got {self.lr0}")
        if self.lr_half_every < 1:
            raise ConfigError(f"lr_half_every must be >= 1, got {self.lr_half_every}")
        for name in ("beta1", "beta2"):
            b = getattr(self, name)
            if not 0.0 <= b < 1.0:
                raise ConfigError(f"{name} must be in [0, 1), got {b}")
        if self.adam_eps <= 0:
            raise ConfigError(f"adam_eps must be positive, got {self.adam_eps}")
        if self.max_grad_norm is not None and self.max_grad_norm <= 0:
            raise ConfigError(f"max_grad_norm must be positive, got {self.max_grad_norm}")


def learning_rate(cfg: TrainConfig, epoch: int) -> float:
    """lr0 * 0.5 ** floor(epoch / lr_half_every); exact power-of-two scaling."""
    return cfg.lr0 * 0.5 ** (epoch // cfg.lr_half_every)


@dataclass
class AdamState:
    """First/second moment buffers mirroring the parameter shapes, plus step t."""

    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    t: int = 0

    @classmethod
    def zeros(cls, params: ParamSet) -> "AdamState":
        return cls(m={n: np.zeros_like(t.data) for n, t in params.items()},
                   v={n: np.zeros_like(t.data) for n, t in params.items()})


def adam_step(params: ParamSet, grads: dict[str, np.ndarray], state: AdamState,
              lr: float, beta1: float = 0.9, beta2: float = 0.999,
              eps: float = 1e-8) -> None:
    """One bias-corrected Adam update, in place on the parameter data."""
    state.t += 1
    bc1 = 1.0 - beta1 ** state.t
    bc2 = 1.0 - beta2 ** state.t
    for name, tensor in params.items():
        g = grads.get(name)
        if g is None:
            raise TrainingError(f"missing gradient for parameter {name}")
        if not np.isfinite(g).all():
            raise TrainingError(f"NaN or non-finite gradient in parameter {name}")
        m = state.m[name]
        v = state.v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        tensor.data -= lr * (m / bc1) / (np.sqrt(v / bc2) + eps)


@dataclass
class EpochRow:
    epoch: int
    loss: float
    lr: float
    seconds: float
    val_psnr_db: Optional[float] = None


@dataclass
class TrainReport:
    rows: list[EpochRow] = field(default_factory=list)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["epoch", "loss", "lr", "seconds"])
            for r in self.rows:
                writer.writerow([r.epoch, repr(r.loss), repr(r.lr), f"{r.seconds:.6f}"])

    def write_json(self, path) -> None:
        payload = []
        for r in self.rows:
            row = {"epoch": r.epoch, "loss": r.loss, "lr": r.lr, "seconds": r.seconds}
            if r.val_psnr_db is not None:
                row["val_psnr_db"] = r.val_psnr_db
            payload.append(row)
        with open(path, "w") as fh:
            json.dump(payload, fh, indent=2)
            fh.write("\n")


class _Sample:
    """One training pair with the padded input and pyramid precomputed."""

    __slots__ = ("x", "pyramids", "target", "out_h", "out_w")

    def __init__(self, model: Model, lr_path: str, hr_path: str):
        lr_buf = decode_image(lr_path)
        hr_buf = decode_image(hr_path)
        x = to_tensor(lr_buf)
        self.x, self.pyramids, (h, w) = model.prepare_input(x)
        self.out_h = h * model.config.scale
        self.out_w = w * model.config.scale
        if hr_buf.height != self.out_h or hr_buf.width != self.out_w:
            raise ContractError(
                f"pair {hr_path}: HR is {hr_buf.height}x{hr_buf.width}, "
                f"expected {self.out_h}x{self.out_w} for scale {model.config.scale}")
        self.target = to_tensor(hr_buf)


def _epoch_order(n: int, seed: int, epoch: int, shuffle: bool) -> np.ndarray:
    if not shuffle:
        return np.arange(n)
    rng = np.random.default_rng([abs(int(seed)), epoch])
    return rng.permutation(n)


def _clip_grads(grads: dict[str, np.ndarray], max_norm: float) -> None:
    total = math.fsum(float((g * g).sum()) for g in grads.values())
    norm = math.sqrt(total)
    if norm > max_norm:
        scale = max_norm / norm
        for g in grads.values():
            g *= scale


def train(model: Model, pairs: PairManifest, cfg: TrainConfig, checkpoints_dir,
          val_pairs: Optional[PairManifest] = None,
          resume: Optional[Checkpoint] = None,
          progress: bool = True) -> TrainReport:
    """Optimize ``model`` in place over the manifest; one checkpoint per epoch.

    ``resume`` restores parameters, optimizer moments and the epoch counter
    from a checkpoint and continues to cfg.epochs; the resumed run is
    bit-identical to the uninterrupted one. On a NaN loss or gradient the
    run aborts with the last completed epoch's checkpoint still on disk.
    """
    if len(pairs) == 0:
        raise ContractError("training manifest is empty")
    ckpt_dir = Path(checkpoints_dir)
    ckpt_dir.mkdir(parents=True, exist_ok=True)

    start_epoch = 0
    state = AdamState.zeros(model.params)
    if resume is not None:
        if resume.config != model.config:
            raise CheckpointError("checkpoint config does not match the model being trained")
        for name, tensor in model.params.items():
            if name not in resume.params:
                raise CheckpointError(f"checkpoint is missing parameter {name}")
            tensor.data = resume.params[name].copy()
        state = AdamState(m={k: v.copy() for k, v in resume.adam_m.items()},
                          v={k: v.copy() for k, v in resume.adam_v.items()},
                          t=resume.adam_t)
        start_epoch = resume.epoch

    samples = [_Sample(model, e.lr, e.hr) for e in pairs]
    report = TrainReport()
    best_val = -math.inf

    for epoch in range(start_epoch, cfg.epochs):
        t0 = time.perf_counter()
        lr = learning_rate(cfg, epoch)
        order = _epoch_order(len(samples), cfg.seed, epoch, cfg.shuffle)
        losses: list[float] = []
        for pos in range(0, len(order), cfg.batch_size):
            batch = [samples[i] for i in order[pos:pos + cfg.batch_size]]
            loss_val = _step(model, batch, cfg, state, lr)
            if not math.isfinite(loss_val):
                raise TrainingError(
                    f"NaN or non-finite loss at epoch {epoch}; "
                    f"last good checkpoint: {ckpt_dir / 'latest.ckpt'}")
            losses.append(loss_val)
        epoch_loss = math.fsum(losses) / len(losses)

        val_psnr = None
        if val_pairs is not None and len(val_pairs):
            val_psnr = evaluate_pairs(val_pairs, model_predictor(model)).mean_psnr_db

        seconds = time.perf_counter() - t0
        report.rows.append(EpochRow(epoch=epoch, loss=epoch_loss, lr=lr,
                                    seconds=seconds, val_psnr_db=val_psnr))
        ckpt = Checkpoint.from_model(model, adam_m=state.m, adam_v=state.v,
                                     adam_t=state.t, epoch=epoch + 1, lr=lr)
        save_checkpoint(ckpt, ckpt_dir / "latest.ckpt")
        if val_psnr is not None and val_psnr > best_val:
            best_val = val_psnr
            save_checkpoint(ckpt, ckpt_dir / "best.ckpt")
        if progress:
            extra = f" val_psnr={val_psnr:.4f}" if val_psnr is not None else ""
            print(f"epoch {epoch} loss={epoch_loss:.6e} lr={lr:.6e} {seconds:.2f}s{extra}",
                  file=sys.stderr)

    return report


def _step(model: Model, batch: list[_Sample], cfg: TrainConfig,
          state: AdamState, lr: float) -> float:
    if len(batch) == 1:
        x, pyramids, target = batch[0].x, batch[0].pyramids, batch[0].target
        out_h, out_w = batch[0].out_h, batch[0].out_w
    else:
        x = Tensor(np.concatenate([s.x.data for s in batch], axis=0))
        pyramids = [Tensor(np.concatenate([s.pyramids[i].data for s in batch], axis=0))
                    for i in range(len(batch[0].pyramids))]
        target = Tensor(np.concatenate([s.target.data for s in batch], axis=0))
        out_h, out_w = batch[0].out_h, batch[0].out_w

    with Tape():
        pred = model.forward(x, pyramids)
        if pred.shape[2] != out_h or pred.shape[3] != out_w:
            pred = crop2d(pred, 0, 0, out_h, out_w)
        loss = loss_value(pred, target, cfg.loss)
        backward(loss)

    grads = {name: t.grad if t.grad is not None else np.zeros_like(t.data)
             for name, t in model.params.items()}
    if cfg.max_grad_norm is not None:
        _clip_grads(grads, cfg.max_grad_norm)
    adam_step(model.params, grads, state, lr, cfg.beta1, cfg.beta2, cfg.adam_eps)
    model.params.zero_grad()
    return loss.item()


# ---------------------------------------------------------------------------
# evaluation

def model_predictor(model: Model) -> Callable:
    """Predictor mapping (LR, HR) ImageBufs to a [0, 1] float (H, W, 3) array."""

    def run(lr_buf, hr_buf):
        pred = model.predict(to_tensor(lr_buf))
        return np.clip(pred.data[0].transpose(1, 2, 0), 0.0, 1.0)

    return run


def bicubic_predictor(scale: int) -> Callable:
    def run(lr_buf, hr_buf):
        up = bicubic_resize(lr_buf, lr_buf.height * scale, lr_buf.width * scale)
        return np.clip(up.pixels, 0.0, 1.0)

    return run


def identity_predictor() -> Callable:
    """Scores the ground truth against itself (sanity baseline)."""

    def run(lr_buf, hr_buf):
        return hr_buf.pixels

    return run


def evaluate_pairs(pairs: PairManifest, predictor: Callable,
                   window: Optional[SSIMWindow] = None) -> MetricReport:
    """PSNR/SSIM of predictor output against HR for every manifest entry."""
    report = MetricReport()
    for entry in pairs:
        lr_buf = decode_image(entry.lr)
        hr_buf = decode_image(entry.hr)
        sr = predictor(lr_buf, hr_buf) * 255.0
        hr = hr_buf.pixels * 255.0
        report.rows.append(MetricRow(
            path=entry.hr,
            scale=entry.scale,
            psnr_db=psnr(hr, sr),
            ssim=ssim(hr, sr, window),
        ))
    return report


def evaluate_mge(pairs: PairManifest, predictor: Callable) -> float:
    """Mean gradient-magnitude error of predictions over a manifest, on the
    [0, 1] scale with the exact (eps = 0) magnitude."""
    values = []
    for entry in pairs:
        lr_buf = decode_image(entry.lr)
        hr_buf = decode_image(entry.hr)
        sr = Tensor(predictor(lr_buf, hr_buf).transpose(2, 0, 1)[None])
        hr = to_tensor(hr_buf)
        values.append(mge(sr, hr, eps=0.0).item())
    return math.fsum(values) / len(values)


def split_holdout(pairs: PairManifest, k: int, seed: int) -> tuple[PairManifest, PairManifest]:
    """Seeded split reserving k entries for validation."""
    if not 0 < k < len(pairs):
        raise ConfigError(f"holdout k must be in (0, {len(pairs)}), got {k}")
    rng = np.random.default_rng([abs(int(seed)), 1])
    picks = set(rng.choice(len(pairs), size=k, replace=False).tolist())
    train_entries = [e for i, e in enumerate(pairs) if i not in picks]
    val_entries = [e for i, e in enumerate(pairs) if i in picks]
    return PairManifest(entries=train_entries), PairManifest(entries=val_entries)


# ---------------------------------------------------------------------------
# sweeps

def sweep_depth(depths, net_config, train_cfg: TrainConfig, pairs: PairManifest,
                eval_pairs: Optional[PairManifest] = None,
                work_dir=None, progress: bool = True) -> list[dict]:
    """Train one model per depth and report (depth, param_count, psnr_db)."""
    from dataclasses import replace
    from .model import build, param_count

    eval_on = eval_pairs if eval_pairs is not None else pairs
    rows = []
    for depth in depths:
        cfg = replace(net_config, depth=int(depth))
        model = build(cfg)
        ckpt_dir = Path(work_dir or ".") / f"sweep_depth_{depth}"
        train(model, pairs, train_cfg, ckpt_dir, progress=progress)
        result = evaluate_pairs(eval_on, model_predictor(model))
        rows.append({"depth": int(depth), "param_count": param_count(cfg),
                     "psnr_db": result.mean_psnr_db})
    return rows


def sweep_lambda(lambdas, net_config, train_cfg: TrainConfig, pairs: PairManifest,
                 eval_pairs: Optional[PairManifest] = None,
                 work_dir=None, progress: bool = True) -> list[dict]:
    """Train one model per gradient-loss weight and report (lambda_g, psnr_db)."""
    from dataclasses import replace
    from .model import build

    eval_on = eval_pairs if eval_pairs is not None else pairs
    rows = []
    for lam in lambdas:
        loss = LossConfig(kind="mixge", lambda_g=float(lam),
                          sqrt_epsilon=train_cfg.loss.sqrt_epsilon)
        cfg = replace(train_cfg, loss=loss)
        model = build(net_config)
        ckpt_dir = Path(work_dir or ".") / f"sweep_lambda_{lam:g}"
        train(model, pairs, cfg, ckpt_dir, progress=progress)
        result = evaluate_pairs(eval_on, model_predictor(model))
        rows.append({"lambda_g": float(lam), "psnr_db": result.mean_psnr_db})
    return rows


def write_sweep_csv(rows: list[dict], path) -> None:
    if not rows:
        raise ContractError("no sweep rows to write")
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
        writer.writeheader()
        for row in rows:
            writer.writerow(row)
