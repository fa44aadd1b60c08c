"""Experiment orchestration: optimizer, schedule, ablation modes, sweeps.

Training uses plain gradient descent with classical momentum and a linear
warmup followed by cosine decay. Each ablation mode rewires the loss stack:

  uniform      plain mean cross-entropy (weights 1, no ranking)
  standard_po  ranking with reward-only advantages and a constant margin
  ema_only     adaptive bin weighting without the ranking term
  static_u     fixed inverted-U bin weighting plus ranking
  ema_token    token-granular adaptive weighting plus ranking
  full_fpo     adaptive bin weighting plus difficulty-calibrated ranking

Everything is deterministic given (config, corpus): epoch shuffles, decode
sampling, and pair subsampling all derive from the config seed.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .corpus import corpus_hash
from .fpo import DifficultyState, FpoConfig, TrainingDivergenceError, training_step
from .layout import Document
from .metrics import DisparityProfile, levenshtein, positional_error_profile
from .model import (
    ModelConfig,
    ModelParameters,
    decode,
    init_params,
    params_from_payload,
    params_to_payload,
)

MODES = ("uniform", "standard_po", "ema_only", "static_u", "ema_token", "full_fpo")
SWEEPABLE = ("K", "beta", "rho", "alpha", "lambda_rank")
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class TrainConfig:
    mode: str = "full_fpo"
    epochs: int = 20
    batch_size: int = 16
    base_lr: float = 1e-2
    warmup_fraction: float = 0.05
    momentum: float = 0.9
    seed: int = 0
    fpo: FpoConfig = field(default_factory=FpoConfig)
    model: ModelConfig = field(default_factory=ModelConfig)

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}; choose from {MODES}")
        if self.epochs < 1:
            raise ValueError("epochs must be at least 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "base_lr": self.base_lr,
            "warmup_fraction": self.warmup_fraction,
            "momentum": self.momentum,
            "seed": self.seed,
            "fpo": self.fpo.to_dict(),
            "model": self.model.to_dict(),
        }

    @staticmethod
    def from_dict(d: dict) -> "TrainConfig":
        d = dict(d)
        d["fpo"] = FpoConfig.from_dict(d["fpo"])
        d["model"] = ModelConfig.from_dict(d["model"])
        return TrainConfig(**d)


def apply_mode(mode: str, fpo: FpoConfig) -> FpoConfig:
    """Resolve an ablation mode into concrete loss-stack settings."""
    if mode == "uniform":
        return replace(fpo, weighting="uniform", lambda_rank=0.0)
    if mode == "standard_po":
        return replace(fpo, weighting="uniform", beta=0.0, margin_scaling=False)
    if mode == "ema_only":
        return replace(fpo, weighting="ema_bins", lambda_rank=0.0)
    if mode == "static_u":
        return replace(fpo, weighting="static_inverted_u")
    if mode == "ema_token":
        return replace(fpo, weighting="ema_token")
    if mode == "full_fpo":
        return replace(fpo, weighting="ema_bins")
    raise ValueError(f"unknown mode {mode!r}")


def lr_schedule(step: int, total_steps: int, base_lr: float, warmup_fraction: float) -> float:
    """Linear ramp to base_lr over the warmup window, cosine decay to zero."""
    if total_steps <= 0:
        raise ValueError("total_steps must be positive")
    if not 0 <= step <= total_steps:
        raise ValueError(f"step {step} outside [0, {total_steps}]")
    warmup = warmup_fraction * total_steps
    if warmup > 0 and step < warmup:
        return base_lr * step / warmup
    denom = total_steps - warmup
    progress = (step - warmup) / denom if denom > 0 else 1.0
    return base_lr * 0.5 * (1.0 + math.cos(math.pi * progress))


@dataclass
class LogRow:
    step: int
    lr: float
    total: float
    weighted_ce: float
    rank_loss: float
    pairs_used: int


@dataclass
class Checkpoint:
    params: ModelParameters
    state: DifficultyState
    train_config: TrainConfig
    step: int
    corpus_hash: str


@dataclass
class TrainResult:
    checkpoint: Checkpoint
    log: List[LogRow]
    weight_history: List[Tuple[int, np.ndarray, np.ndarray]]  # step, ema, weights


def _step_seed(seed: int, step: int) -> int:
    return (seed * 2654435761 + step * 97 + 13) & 0x7FFFFFFFFFFFFFFF


def train(cfg: TrainConfig, corpus: Sequence[Document]) -> TrainResult:
    """Train one model; deterministic given (cfg, corpus)."""
    if len(corpus) == 0:
        raise ValueError("training corpus is empty")
    fpo_cfg = apply_mode(cfg.mode, cfg.fpo)
    if fpo_cfg.lambda_rank != 0.0 and cfg.batch_size < 2:
        raise ValueError("ranking modes need batch_size >= 2")

    params = init_params(cfg.model, cfg.seed)
    state = DifficultyState(K=fpo_cfg.n_slots, gamma=fpo_cfg.gamma, delta=fpo_cfg.delta)
    velocity: Dict[str, np.ndarray] = {
        name: np.zeros(t.data.shape) for name, t in params.tensors.items()
    }

    n_batches = math.ceil(len(corpus) / cfg.batch_size)
    total_steps = cfg.epochs * n_batches
    log: List[LogRow] = []
    history: List[Tuple[int, np.ndarray, np.ndarray]] = []

    step = 0
    for epoch in range(cfg.epochs):
        order = np.random.default_rng([cfg.seed & 0xFFFFFFFF, 10_000 + epoch]).permutation(
            len(corpus)
        )
        for b in range(n_batches):
            batch = [corpus[i] for i in order[b * cfg.batch_size : (b + 1) * cfg.batch_size]]
            lr = lr_schedule(step, total_steps, cfg.base_lr, cfg.warmup_fraction)
            try:
                result = training_step(batch, params, state, fpo_cfg, _step_seed(cfg.seed, step))
            except TrainingDivergenceError as exc:
                raise TrainingDivergenceError(f"step {step}: {exc}") from exc
            state = result.state
            for name, t in params.tensors.items():
                v = velocity[name]
                v *= cfg.momentum
                v += t.grad
                t.data = t.data - lr * v
            log.append(
                LogRow(
                    step=step,
                    lr=lr,
                    total=result.total,
                    weighted_ce=result.weighted_ce,
                    rank_loss=result.rank_loss,
                    pairs_used=result.pairs_used,
                )
            )
            history.append((step, result.ema, result.weights))
            step += 1

    ckpt = Checkpoint(
        params=params,
        state=state,
        train_config=cfg,
        step=step,
        corpus_hash=corpus_hash(corpus),
    )
    return TrainResult(checkpoint=ckpt, log=log, weight_history=history)


@dataclass
class EvalResult:
    mean_edit: float
    mean_reward: float
    profile: DisparityProfile
    per_doc: List[dict]
    predictions: List[Tuple[str, Tuple[int, ...]]]


def evaluate_params(
    params: ModelParameters, corpus: Sequence[Document], K: int = 10
) -> EvalResult:
    """Greedy decode every document and profile the alignment errors."""
    pairs = []
    per_doc = []
    preds = []
    edits = []
    for doc in corpus:
        pred = decode(doc, params, mode="greedy")
        gt = list(doc.gt_order)
        dist = levenshtein(pred.sequence, gt)
        norm = dist / max(len(pred.sequence), len(gt))
        edits.append(norm)
        pairs.append((list(pred.sequence), gt))
        preds.append((doc.doc_id, pred.sequence))
        per_doc.append(
            {
                "doc_id": doc.doc_id,
                "n_elements": len(doc),
                "edit": norm,
                "reward": 1.0 - norm,
            }
        )
    profile = positional_error_profile(pairs, K)
    mean_edit = float(np.mean(edits)) if edits else 0.0
    return EvalResult(
        mean_edit=mean_edit,
        mean_reward=1.0 - mean_edit,
        profile=profile,
        per_doc=per_doc,
        predictions=preds,
    )


def evaluate(ckpt: Checkpoint, corpus: Sequence[Document], K: int = 10) -> EvalResult:
    vocab = set(ckpt.params.config.category_vocab)
    for doc in corpus:
        for el in doc.elements:
            if el.category not in vocab:
                raise ValueError(
                    f"category vocabulary mismatch: {el.category!r} in {doc.doc_id!r} "
                    "is not covered by the checkpoint's model config"
                )
    return evaluate_params(ckpt.params, corpus, K)


def sensitivity_harness(
    cfg: TrainConfig,
    corpus: Sequence[Document],
    param: str,
    values: Sequence[float],
    seeds: Optional[Sequence[int]] = None,
    eval_corpus: Optional[Sequence[Document]] = None,
) -> List[dict]:
    """Train one model per (value, seed) and report the mean edit distance."""
    if param not in SWEEPABLE:
        raise ValueError(f"cannot sweep {param!r}; choose from {SWEEPABLE}")
    seeds = list(seeds) if seeds is not None else [cfg.seed]
    eval_corpus = eval_corpus if eval_corpus is not None else corpus
    rows = []
    for value in values:
        if param == "K":
            fpo_cfg = replace(cfg.fpo, K=int(value))
        else:
            fpo_cfg = replace(cfg.fpo, **{param: float(value)})
        for seed in seeds:
            run_cfg = replace(cfg, fpo=fpo_cfg, seed=int(seed))
            result = train(run_cfg, corpus)
            ev = evaluate(result.checkpoint, eval_corpus, K=10)
            rows.append(
                {
                    "param": param,
                    "value": value,
                    "seed": int(seed),
                    "mean_edit": ev.mean_edit,
                }
            )
    return rows


def save_checkpoint(ckpt: Checkpoint, path: str) -> None:
    payload = {
        "format_version": CHECKPOINT_VERSION,
        "model_config": ckpt.params.config.to_dict(),
        "parameters": params_to_payload(ckpt.params),
        "difficulty_state": ckpt.state.to_dict(),
        "train_config": ckpt.train_config.to_dict(),
        "step": ckpt.step,
        "corpus_hash": ckpt.corpus_hash,
    }
    with open(path, "w", encoding="utf-8") as f:
        json.dump(payload, f, separators=(",", ":"))
        f.write("\n")


def load_checkpoint(path: str) -> Checkpoint:
    with open(path, "r", encoding="utf-8") as f:
        try:
            payload = json.load(f)
        except json.JSONDecodeError as exc:
            raise ValueError(f"{path}: not a valid checkpoint file: {exc}") from exc
    version = payload.get("format_version")
    if version != CHECKPOINT_VERSION:
        raise ValueError(
            f"{path}: checkpoint format version {version!r} is not supported "
            f"(expected {CHECKPOINT_VERSION})"
        )
    model_cfg = ModelConfig.from_dict(payload["model_config"])
    params = params_from_payload(model_cfg, payload["parameters"])
    return Checkpoint(
        params=params,
        state=DifficultyState.from_dict(payload["difficulty_state"]),
        train_config=TrainConfig.from_dict(payload["train_config"]),
        step=int(payload["step"]),
        corpus_hash=payload["corpus_hash"],
    )


def write_training_log_csv(log: Sequence[LogRow], path: str) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["step", "lr", "total", "weighted_ce", "rank_loss", "pairs_used"])
        for row in log:
            w.writerow(
                [
                    row.step,
                    repr(row.lr),
                    repr(row.total),
                    repr(row.weighted_ce),
                    repr(row.rank_loss),
                    row.pairs_used,
                ]
            )


def write_weight_dump_csv(
    history: Sequence[Tuple[int, np.ndarray, np.ndarray]], path: str
) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["iteration", "bin_index", "ema_loss", "weight"])
        for step, ema, weights in history:
            for k in range(len(weights)):
                w.writerow([step, k, repr(float(ema[k])), repr(float(weights[k]))])


def write_sweep_csv(rows: Sequence[dict], path: str) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["param", "value", "seed", "mean_edit"])
        for row in rows:
            w.writerow([row["param"], row["value"], row["seed"], repr(row["mean_edit"])])
