"""Focal preference optimization: difficulty discovery and calibrated ranking.

The stack has two cooperating parts. A per-position-bin EMA of token losses
discovers where in the sequence the model keeps struggling and converts the
ratio against the mean difficulty into clipped supervision weights. A
batch-wise ranking objective then contrasts sampled decodes: samples are
sorted by an advantage (order reward plus a difficulty bonus), preference
pairs are drawn from the two tails, and each pair must separate its
normalized sequence scores by a margin scaled with the pair's structural
complexity.

Weight bookkeeping (EMA state, weights, margins, advantages) is carried out
on plain numbers outside the tape; gradients flow only through the weighted
cross-entropy and the hinge terms.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import autodiff as ad
from .autodiff import Tape, Tensor
from .layout import Document, ReadingOrder
from .metrics import order_reward
from .model import ModelParameters, SequenceScore, decode, prepare_doc, score_sequence

logger = logging.getLogger(__name__)

WEIGHTING_MODES = ("uniform", "ema_bins", "ema_token", "static_inverted_u")


class TrainingDivergenceError(RuntimeError):
    """Raised when a step produces a non-finite loss."""


@dataclass(frozen=True)
class FpoConfig:
    K: int = 10
    gamma: float = 0.99
    delta: float = 0.8
    beta: float = 0.05
    rho: float = 0.20
    alpha: float = 0.10
    lambda_rank: float = 1.0
    max_pairs: int = 16
    weighting: str = "ema_bins"
    epsilon: float = 1e-8
    static_sigma: float = 0.2
    token_max_len: int = 40
    margin_scaling: bool = True
    # Near-mode sampling keeps the loser side of ranking pairs on sequences
    # the model is confident about; at temperature 1.0 sampled losers score
    # themselves so low that the hinge margins never bind.
    decode_temperature: float = 0.3

    def __post_init__(self):
        if self.K < 1:
            raise ValueError("K must be at least 1")
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError("gamma must lie in [0, 1)")
        if not 0.0 < self.delta < 1.0:
            raise ValueError("delta must lie in (0, 1)")
        if not 0.0 < self.rho <= 0.5:
            raise ValueError("rho must lie in (0, 0.5]")
        if self.weighting not in WEIGHTING_MODES:
            raise ValueError(f"unknown weighting mode {self.weighting!r}")
        if self.token_max_len < 1:
            raise ValueError("token_max_len must be at least 1")

    @property
    def n_slots(self) -> int:
        """Difficulty slots: position bins, or token indices in token mode."""
        return self.token_max_len if self.weighting == "ema_token" else self.K

    def to_dict(self) -> dict:
        return {
            "K": self.K,
            "gamma": self.gamma,
            "delta": self.delta,
            "beta": self.beta,
            "rho": self.rho,
            "alpha": self.alpha,
            "lambda_rank": self.lambda_rank,
            "max_pairs": self.max_pairs,
            "weighting": self.weighting,
            "epsilon": self.epsilon,
            "static_sigma": self.static_sigma,
            "token_max_len": self.token_max_len,
            "margin_scaling": self.margin_scaling,
            "decode_temperature": self.decode_temperature,
        }

    @staticmethod
    def from_dict(d: dict) -> "FpoConfig":
        return FpoConfig(**d)


@dataclass
class DifficultyState:
    """EMA difficulty per slot plus the running normalizer for advantages."""

    K: int
    gamma: float = 0.99
    delta: float = 0.8
    ema: np.ndarray = None  # type: ignore[assignment]
    observed: np.ndarray = None  # type: ignore[assignment]
    seq_loss_mean: float = 0.0
    seq_loss_count: int = 0

    def __post_init__(self):
        if self.ema is None:
            self.ema = np.zeros(self.K)
        if self.observed is None:
            self.observed = np.zeros(self.K, dtype=bool)
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError("gamma must lie in [0, 1)")
        if not 0.0 < self.delta < 1.0:
            raise ValueError("delta must lie in (0, 1)")

    def copy(self) -> "DifficultyState":
        return DifficultyState(
            K=self.K,
            gamma=self.gamma,
            delta=self.delta,
            ema=self.ema.copy(),
            observed=self.observed.copy(),
            seq_loss_mean=self.seq_loss_mean,
            seq_loss_count=self.seq_loss_count,
        )

    def to_dict(self) -> dict:
        return {
            "K": self.K,
            "gamma": self.gamma,
            "delta": self.delta,
            "ema": self.ema.tolist(),
            "observed": self.observed.astype(int).tolist(),
            "seq_loss_mean": self.seq_loss_mean,
            "seq_loss_count": self.seq_loss_count,
        }

    @staticmethod
    def from_dict(d: dict) -> "DifficultyState":
        return DifficultyState(
            K=int(d["K"]),
            gamma=float(d["gamma"]),
            delta=float(d["delta"]),
            ema=np.array(d["ema"], dtype=np.float64),
            observed=np.array(d["observed"], dtype=bool),
            seq_loss_mean=float(d["seq_loss_mean"]),
            seq_loss_count=int(d["seq_loss_count"]),
        )


@dataclass(frozen=True)
class PreferencePair:
    winner_index: int
    loser_index: int
    margin: float = 0.0


def bin_index(t: int, T: int, K: int) -> int:
    """Position bin for the 1-based step t of a length-T sequence."""
    if not 1 <= t <= T:
        raise ValueError(f"step {t} out of range for length {T}")
    return min(max(int((t / T) * K), 0), K - 1)


def token_slot(t: int, max_len: int) -> int:
    """Difficulty slot for token-granular tracking, capped at max_len."""
    if t < 1:
        raise ValueError("step must be 1-based")
    return min(t, max_len) - 1


def batch_bin_loss(
    token_losses: Sequence[Tuple[float, int]], K: int, epsilon: float = 1e-8
) -> Tuple[np.ndarray, np.ndarray]:
    """Mean token loss per slot (epsilon-guarded denominator) and counts."""
    sums = np.zeros(K)
    counts = np.zeros(K, dtype=np.int64)
    for loss, k in token_losses:
        sums[k] += loss
        counts[k] += 1
    means = sums / (counts + epsilon)
    return means, counts


def ema_update(
    state: DifficultyState, bin_losses: np.ndarray, counts: np.ndarray
) -> DifficultyState:
    """Blend the batch's slot losses into the EMA difficulty vector.

    Slots without tokens are left untouched (no decay toward zero); the
    first observation of a slot bootstraps it to the batch value so a high
    momentum does not pin it near an arbitrary initialization.
    """
    out = state.copy()
    for k in range(state.K):
        if counts[k] == 0:
            continue
        if out.observed[k]:
            out.ema[k] = state.gamma * out.ema[k] + (1.0 - state.gamma) * bin_losses[k]
        else:
            out.ema[k] = bin_losses[k]
            out.observed[k] = True
    return out


def clip_bounds(delta: float) -> Tuple[float, float]:
    """Weight clip range [1 - delta, 1 + delta].

    The bounds are decimal-rounded so that short decimal deltas hit their
    published range exactly (1 - 0.8 in binary lands one ulp off 0.2)."""
    return round(1.0 - delta, 15), round(1.0 + delta, 15)


def difficulty_weights(state: DifficultyState) -> np.ndarray:
    """Clipped ratio of each slot's difficulty against the observed mean.

    Unobserved slots get weight 1; before anything is observed all weights
    are 1 (warm-up)."""
    weights = np.ones(state.K)
    if not state.observed.any():
        return weights
    mu = state.ema[state.observed].mean()
    if mu <= 0.0:
        logger.warning("degenerate difficulty state: observed mean is zero")
        return weights
    lo, hi = clip_bounds(state.delta)
    ratios = np.clip(state.ema / mu, lo, hi)
    weights[state.observed] = ratios[state.observed]
    return weights


def static_inverted_u_weights(K: int, sigma: float, delta: float) -> np.ndarray:
    """Fixed Gaussian-shaped weights over bin centers, rescaled to mean 1
    and clipped to the same range as the adaptive weights."""
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    centers = (np.arange(K) + 0.5) / K
    raw = np.exp(-((centers - 0.5) ** 2) / (2 * sigma**2))
    raw = raw / raw.mean()
    lo, hi = clip_bounds(delta)
    return np.clip(raw, lo, hi)


def weighted_ce(
    token_losses: Sequence[float], token_bins: Sequence[int], weights: np.ndarray
) -> float:
    """Mean of slot-weighted token losses; uniform weights reduce this to
    the plain mean cross-entropy."""
    n = len(token_losses)
    if n == 0:
        raise ValueError("weighted_ce over an empty batch")
    return float(
        sum(weights[k] * l for l, k in zip(token_losses, token_bins)) / n
    )


def normalized_seq_loss(seq_ce: float, state: DifficultyState) -> float:
    """Sequence loss relative to the cumulative mean of all sequence losses
    seen so far; reads before updating, returns 1.0 on the first call."""
    if seq_ce < 0:
        raise ValueError("sequence loss must be nonnegative")
    if state.seq_loss_count == 0 or state.seq_loss_mean <= 0.0:
        value = 1.0
    else:
        value = seq_ce / state.seq_loss_mean
    state.seq_loss_count += 1
    state.seq_loss_mean += (seq_ce - state.seq_loss_mean) / state.seq_loss_count
    return value


def advantage(reward: float, norm_loss: float, beta: float) -> float:
    return reward + beta * norm_loss


def sequence_complexity(token_bins: Sequence[int], weights: np.ndarray) -> float:
    """Mean difficulty weight over a sequence's token slots."""
    if len(token_bins) == 0:
        raise ValueError("sequence_complexity of an empty sequence")
    return float(np.mean([weights[k] for k in token_bins]))


def adaptive_margin(wbar_i: float, wbar_j: float, alpha: float) -> float:
    return alpha * max(wbar_i, wbar_j)


def select_pairs(
    advantages: Sequence[float], rho: float, max_pairs: int, seed: int
) -> List[PreferencePair]:
    """Cross product of the top and bottom advantage tails.

    Samples are sorted descending by advantage (stable, ties by batch
    index). Both tails take max(1, floor(rho * B)) samples. Pairs whose
    winner does not strictly beat the loser are dropped, so a batch of
    equal advantages yields no pairs. When the cross product exceeds
    max_pairs it is subsampled uniformly with the given seed.
    """
    B = len(advantages)
    if B < 2:
        return []
    order = sorted(range(B), key=lambda i: (-advantages[i], i))
    tail = max(1, int(rho * B))
    top = order[:tail]
    bottom = order[B - tail :]
    pairs = [
        PreferencePair(w, l)
        for w in top
        for l in bottom
        if advantages[w] > advantages[l]
    ]
    if len(pairs) > max_pairs:
        rng = np.random.default_rng([seed & 0xFFFFFFFF, 0x70A1B5])
        keep = sorted(rng.choice(len(pairs), size=max_pairs, replace=False))
        pairs = [pairs[i] for i in keep]
    return pairs


def ranking_loss(scores: Sequence[float], pairs: Sequence[PreferencePair]) -> float:
    """Mean hinge over preference pairs; zero when every winner leads its
    loser by at least the pair margin (or when there are no pairs)."""
    if not pairs:
        return 0.0
    total = 0.0
    for p in pairs:
        total += max(0.0, scores[p.loser_index] - scores[p.winner_index] + p.margin)
    return total / len(pairs)


def total_loss(weighted_ce_value: float, ranking: float, lambda_rank: float) -> float:
    return weighted_ce_value + lambda_rank * ranking


@dataclass
class StepResult:
    total: float
    weighted_ce: float
    rank_loss: float
    pairs_used: int
    state: DifficultyState
    weights: np.ndarray
    ema: np.ndarray
    rewards: List[float] = field(default_factory=list)
    advantages: List[float] = field(default_factory=list)


def _slots_for(doc_len: int, cfg: FpoConfig) -> List[int]:
    if cfg.weighting == "ema_token":
        return [token_slot(t, cfg.token_max_len) for t in range(1, doc_len + 1)]
    return [bin_index(t, doc_len, cfg.K) for t in range(1, doc_len + 1)]


def applied_weights(cfg: FpoConfig, state: DifficultyState) -> np.ndarray:
    """The weight vector a step would apply under this weighting mode."""
    if cfg.weighting == "uniform":
        return np.ones(cfg.n_slots)
    if cfg.weighting == "static_inverted_u":
        return static_inverted_u_weights(cfg.K, cfg.static_sigma, cfg.delta)
    return difficulty_weights(state)


def build_step(
    batch: Sequence[Document],
    params: ModelParameters,
    state: DifficultyState,
    cfg: FpoConfig,
    seed: int,
) -> Tuple[Tape, Tensor, StepResult]:
    """Assemble one training objective on a fresh tape.

    Follows the training-step recipe in order: teacher-forced forward on
    the ground truth, slot-loss aggregation and EMA update, weight
    derivation, weighted cross-entropy, sampled decodes with rewards and
    advantages, tail-pair selection with adaptive margins, the ranking
    hinge on teacher-forced scores of the decoded sequences, and the
    combined objective. The incoming state is copied, never mutated.
    """
    if len(batch) == 0:
        raise ValueError("training step on an empty batch")
    if state.K != cfg.n_slots:
        raise ValueError(
            f"difficulty state has {state.K} slots, config expects {cfg.n_slots}"
        )
    tape = Tape()

    gt_scores: List[SequenceScore] = []
    prepared = []
    token_losses: List[float] = []
    token_slots_flat: List[int] = []
    doc_slots: List[List[int]] = []
    for doc in batch:
        prep = prepare_doc(doc, params, tape)
        prepared.append(prep)
        sc = score_sequence(doc, ReadingOrder(doc.gt_order), params, tape, prepared=prep)
        gt_scores.append(sc)
        slots = _slots_for(len(doc), cfg)
        doc_slots.append(slots)
        token_losses.extend((-sc.step_logprob_values).tolist())
        token_slots_flat.extend(slots)

    bin_losses, counts = batch_bin_loss(
        list(zip(token_losses, token_slots_flat)), cfg.n_slots, cfg.epsilon
    )
    new_state = ema_update(state, bin_losses, counts)
    weights = applied_weights(cfg, new_state)

    n_tokens = len(token_losses)
    all_logprobs = ad.concat(tape, [sc.logprob_vec for sc in gt_scores])
    loss_vec = ad.scale(tape, all_logprobs, -1.0)
    weight_vec = Tensor(np.array([weights[k] for k in token_slots_flat]))
    wce_node = ad.scale(tape, ad.tsum(tape, ad.mul(tape, loss_vec, weight_vec)), 1.0 / n_tokens)

    rewards: List[float] = []
    advantages_list: List[float] = []
    pairs: List[PreferencePair] = []
    rank_node: Optional[Tensor] = None
    if cfg.lambda_rank != 0.0 and len(batch) >= 2:
        decoded = [
            decode(
                doc,
                params,
                mode="sample",
                seed=(seed * 1000003 + i) & 0x7FFFFFFFFFFFFFFF,
                temperature=cfg.decode_temperature,
            )
            for i, doc in enumerate(batch)
        ]
        for i, doc in enumerate(batch):
            r = order_reward(decoded[i], ReadingOrder(doc.gt_order))
            rewards.append(r)
            norm = normalized_seq_loss(gt_scores[i].ce_value, new_state)
            advantages_list.append(advantage(r, norm, cfg.beta))
        raw_pairs = select_pairs(advantages_list, cfg.rho, cfg.max_pairs, seed)
        if raw_pairs:
            wbars = {
                i: sequence_complexity(doc_slots[i], weights)
                for p in raw_pairs
                for i in (p.winner_index, p.loser_index)
            }
            pairs = [
                replace(
                    p,
                    margin=adaptive_margin(
                        wbars[p.winner_index], wbars[p.loser_index], cfg.alpha
                    )
                    if cfg.margin_scaling
                    else cfg.alpha,
                )
                for p in raw_pairs
            ]
            member_scores: Dict[int, Tensor] = {}
            for i in sorted(wbars):
                sc = score_sequence(batch[i], decoded[i], params, tape, prepared=prepared[i])
                member_scores[i] = sc.norm_score
            hinge_nodes = []
            for p in pairs:
                diff = ad.add(
                    tape,
                    member_scores[p.loser_index],
                    ad.scale(tape, member_scores[p.winner_index], -1.0),
                )
                shifted = ad.add(tape, diff, Tensor(np.float64(p.margin)))
                hinge_nodes.append(ad.hinge(tape, shifted))
            rank_node = ad.tmean(tape, ad.concat(tape, hinge_nodes))

    if rank_node is not None:
        total_node = ad.add(tape, wce_node, ad.scale(tape, rank_node, cfg.lambda_rank))
        rank_value = float(rank_node.data)
    else:
        total_node = wce_node
        rank_value = 0.0

    result = StepResult(
        total=float(total_node.data),
        weighted_ce=float(wce_node.data),
        rank_loss=rank_value,
        pairs_used=len(pairs),
        state=new_state,
        weights=weights.copy(),
        ema=new_state.ema.copy(),
        rewards=rewards,
        advantages=advantages_list,
    )
    if not np.isfinite(result.total):
        raise TrainingDivergenceError(
            f"non-finite loss: total={result.total}, "
            f"weighted_ce={result.weighted_ce}, rank={result.rank_loss}"
        )
    return tape, total_node, result


def training_step(
    batch: Sequence[Document],
    params: ModelParameters,
    state: DifficultyState,
    cfg: FpoConfig,
    seed: int,
) -> StepResult:
    """Run one step: build the objective and leave gradients on the
    parameters. Returns losses plus the updated difficulty state."""
    tape, total_node, result = build_step(batch, params, state, cfg, seed)
    params.zero_grads()
    ad.backward(tape, total_node)
    return result
