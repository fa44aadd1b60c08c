"""Autoregressive pointer-style sorter over layout elements.

Each element is embedded from its normalized geometry plus a category
embedding. A small recurrent decoder state scores the unvisited elements
through a bilinear form at every step; teacher-forced scoring and
free-running decoding share the same arithmetic.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np

from . import autodiff as ad
from .autodiff import Tape, Tensor
from .layout import DEFAULT_CATEGORIES, Document, ReadingOrder

FEATURE_DIM = 8  # cx, cy, w, h, x0, y0, x1, y1 in page-normalized units

PARAM_SHAPES = (
    ("cat_embed", lambda v, h: (v, h)),
    ("geom_proj", lambda v, h: (FEATURE_DIM, h)),
    ("state_update_prev", lambda v, h: (h, h)),
    ("state_update_sel", lambda v, h: (h, h)),
    ("score_bilinear", lambda v, h: (h, h)),
    ("start_state", lambda v, h: (h,)),
)


@dataclass(frozen=True)
class ModelConfig:
    hidden_dim: int = 64
    category_vocab: Tuple[str, ...] = DEFAULT_CATEGORIES

    def __post_init__(self):
        if self.hidden_dim < 1:
            raise ValueError("hidden_dim must be at least 1")
        object.__setattr__(self, "category_vocab", tuple(self.category_vocab))

    def to_dict(self) -> dict:
        return {"hidden_dim": self.hidden_dim, "category_vocab": list(self.category_vocab)}

    @staticmethod
    def from_dict(d: dict) -> "ModelConfig":
        return ModelConfig(
            hidden_dim=int(d["hidden_dim"]), category_vocab=tuple(d["category_vocab"])
        )


@dataclass
class ModelParameters:
    config: ModelConfig
    tensors: Dict[str, Tensor]

    def all(self) -> List[Tensor]:
        return [self.tensors[name] for name, _ in PARAM_SHAPES]

    def names(self) -> List[str]:
        return [name for name, _ in PARAM_SHAPES]

    def zero_grads(self) -> None:
        for t in self.tensors.values():
            t.grad = np.zeros(t.data.shape)

    def copy(self) -> "ModelParameters":
        out = {}
        for name, t in self.tensors.items():
            c = Tensor(t.data.copy(), requires_grad=t.requires_grad)
            out[name] = c
        return ModelParameters(config=self.config, tensors=out)


def init_params(cfg: ModelConfig, seed: int, zero: bool = False) -> ModelParameters:
    """Uniform initialization in [-1/sqrt(hidden), 1/sqrt(hidden)], or all
    zeros when ``zero`` is set (useful for analytic test cases)."""
    rng = np.random.default_rng(seed)
    bound = 1.0 / np.sqrt(cfg.hidden_dim)
    v = len(cfg.category_vocab)
    tensors = {}
    for name, shape_fn in PARAM_SHAPES:
        shape = shape_fn(v, cfg.hidden_dim)
        data = np.zeros(shape) if zero else rng.uniform(-bound, bound, size=shape)
        tensors[name] = Tensor(data, requires_grad=True)
    return ModelParameters(config=cfg, tensors=tensors)


def document_features(doc: Document) -> np.ndarray:
    """Per-element geometry features, normalized by the page dimensions."""
    feats = np.zeros((len(doc), FEATURE_DIM))
    w, h = doc.page_width, doc.page_height
    for i, el in enumerate(doc.elements):
        b = el.bbox
        feats[i] = (
            (b.x0 + b.x1) / (2 * w),
            (b.y0 + b.y1) / (2 * h),
            (b.x1 - b.x0) / w,
            (b.y1 - b.y0) / h,
            b.x0 / w,
            b.y0 / h,
            b.x1 / w,
            b.y1 / h,
        )
    return feats


def _category_onehot(doc: Document, vocab: Tuple[str, ...]) -> np.ndarray:
    index = {c: i for i, c in enumerate(vocab)}
    onehot = np.zeros((len(doc), len(vocab)))
    for i, el in enumerate(doc.elements):
        if el.category not in index:
            raise ValueError(f"unknown category {el.category!r} for element {i}")
        onehot[i, index[el.category]] = 1.0
    return onehot


def encode(doc: Document, params: ModelParameters, tape: Tape) -> Tensor:
    """Per-element embeddings [n, hidden]; permuting the input elements
    permutes the rows identically."""
    feats = Tensor(document_features(doc))
    onehot = Tensor(_category_onehot(doc, params.config.category_vocab))
    geom = ad.matmul(tape, feats, params.tensors["geom_proj"])
    cats = ad.matmul(tape, onehot, params.tensors["cat_embed"])
    return ad.tanh(tape, ad.add(tape, geom, cats))


@dataclass
class SequenceScore:
    logprob_vec: Tensor  # vector node, one log-probability per step
    step_logprob_values: np.ndarray
    step_distributions: List[np.ndarray]  # per-step candidate log-probs (-inf masked)
    ce: Tensor  # scalar node, mean negative log-probability
    norm_score: Tensor  # scalar node, equal to -ce by construction

    @property
    def ce_value(self) -> float:
        return float(self.ce.data)

    @property
    def norm_score_value(self) -> float:
        return float(self.norm_score.data)


def prepare_doc(doc: Document, params: ModelParameters, tape: Tape) -> Tuple[Tensor, Tensor]:
    """Embeddings plus their projection through the selection matrix, so the
    per-step state update reduces to one matvec and a row lookup."""
    emb = encode(doc, params, tape)
    sel_rows = ad.matmul(tape, emb, ad.transpose(tape, params.tensors["state_update_sel"]))
    return emb, sel_rows


def _pointer_logprobs(
    tape: Tape,
    emb: Tensor,
    sel_rows: Tensor,
    upd_prev: Tensor,
    bilinear: Tensor,
    start: Tensor,
    seq: List[int],
) -> Tuple[Tensor, List[np.ndarray]]:
    """Selection log-probabilities for the whole sequence as one tape op.

    The decoder loop is the hot path, so it is recorded as a single fused
    node: the forward pass stores states, queries, and softmax
    distributions, and the backward closure replays the recurrence in
    reverse. The arithmetic is exactly the composition of matvec,
    masked_log_softmax, gather, row_select, add, and tanh.
    """
    E, R, U, B = emb.data, sel_rows.data, upd_prev.data, bilinear.data
    n = E.shape[0]
    states = [start.data]
    queries, probs, logprobs, dists = [], [], [], []
    unvisited = np.ones(n, dtype=bool)
    s = start.data
    for y in seq:
        q = B @ s
        z = E @ q
        vals = z[unvisited]
        m = vals.max()
        lse = m + np.log(np.exp(vals - m).sum())
        p = np.zeros(n)
        p[unvisited] = np.exp(z[unvisited] - lse)
        dist = np.full(n, -np.inf)
        dist[unvisited] = z[unvisited] - lse
        logprobs.append(z[y] - lse)
        queries.append(q)
        probs.append(p)
        dists.append(dist)
        unvisited[y] = False
        s = np.tanh(U @ s + R[y])
        states.append(s)
    out = Tensor(np.array(logprobs))

    def backward(g):
        dE = np.zeros_like(E)
        dR = np.zeros_like(R)
        dU = np.zeros_like(U)
        dB = np.zeros_like(B)
        ds = np.zeros(E.shape[1])
        for t in range(len(seq) - 1, -1, -1):
            y = seq[t]
            s_t, s_next = states[t], states[t + 1]
            da = ds * (1.0 - s_next * s_next)
            dU += da[:, None] * s_t[None, :]
            dR[y] += da
            ds = U.T @ da
            dz = -g[t] * probs[t]
            dz[y] += g[t]
            dE += dz[:, None] * queries[t][None, :]
            dq = E.T @ dz
            dB += dq[:, None] * s_t[None, :]
            ds += B.T @ dq
        return dE, dR, dU, dB, ds

    tape.record(out, (emb, sel_rows, upd_prev, bilinear, start), backward)
    return out, dists


def score_sequence(
    doc: Document,
    order: ReadingOrder,
    params: ModelParameters,
    tape: Tape,
    prepared: Optional[Tuple[Tensor, Tensor]] = None,
) -> SequenceScore:
    """Teacher-forced log-probabilities of ``order`` under the model."""
    n = len(doc)
    seq = list(order.sequence)
    if sorted(seq) != list(range(n)):
        raise ValueError("order must be a permutation of the document's elements")
    emb, sel_rows = prepared if prepared is not None else prepare_doc(doc, params, tape)
    lp_vec, dists = _pointer_logprobs(
        tape,
        emb,
        sel_rows,
        params.tensors["state_update_prev"],
        params.tensors["score_bilinear"],
        params.tensors["start_state"],
        seq,
    )
    norm_score = ad.tmean(tape, lp_vec)
    ce = ad.scale(tape, norm_score, -1.0)
    return SequenceScore(
        logprob_vec=lp_vec,
        step_logprob_values=lp_vec.data.copy(),
        step_distributions=dists,
        ce=ce,
        norm_score=norm_score,
    )


class _NumpyForward:
    """Tape-free replica of the forward pass for decoding."""

    def __init__(self, doc: Document, params: ModelParameters):
        feats = document_features(doc)
        onehot = _category_onehot(doc, params.config.category_vocab)
        t = params.tensors
        self.emb = np.tanh(feats @ t["geom_proj"].data + onehot @ t["cat_embed"].data)
        self.sel_rows = self.emb @ t["state_update_sel"].data.T
        self.bilinear = t["score_bilinear"].data
        self.upd_prev = t["state_update_prev"].data
        self.state = t["start_state"].data.copy()

    def logits(self) -> np.ndarray:
        return self.emb @ (self.bilinear @ self.state)

    def advance(self, idx: int) -> None:
        self.state = np.tanh(self.upd_prev @ self.state + self.sel_rows[idx])


def decode(
    doc: Document,
    params: ModelParameters,
    mode: str = "greedy",
    seed: int = 0,
    temperature: float = 1.0,
) -> ReadingOrder:
    """Free-running decode. Greedy breaks logit ties toward the lowest
    index; sampling is deterministic given the seed. The output is always a
    permutation because visited elements are masked out."""
    if mode not in ("greedy", "sample"):
        raise ValueError(f"unknown decode mode {mode!r}")
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    n = len(doc)
    fwd = _NumpyForward(doc, params)
    rng = np.random.default_rng(seed)
    unvisited = np.ones(n, dtype=bool)
    out = []
    for _ in range(n):
        logits = fwd.logits()
        masked = np.where(unvisited, logits, -np.inf)
        if mode == "greedy":
            idx = int(np.argmax(masked))
        else:
            z = masked / temperature
            z = z - z[unvisited].max()
            probs = np.where(unvisited, np.exp(z), 0.0)
            probs /= probs.sum()
            idx = int(np.searchsorted(np.cumsum(probs), rng.random(), side="right"))
            idx = min(idx, n - 1)
            if not unvisited[idx]:  # cumulative rounding landed on a visited slot
                idx = int(np.argmax(np.where(unvisited, probs, -1.0)))
        out.append(idx)
        unvisited[idx] = False
        fwd.advance(idx)
    return ReadingOrder(tuple(out))


def params_to_payload(params: ModelParameters) -> dict:
    return {
        name: {"shape": list(t.data.shape), "data": t.data.reshape(-1).tolist()}
        for name, t in params.tensors.items()
    }


def params_from_payload(cfg: ModelConfig, payload: dict) -> ModelParameters:
    tensors = {}
    v = len(cfg.category_vocab)
    for name, shape_fn in PARAM_SHAPES:
        if name not in payload:
            raise ValueError(f"checkpoint is missing parameter {name!r}")
        rec = payload[name]
        expected = tuple(shape_fn(v, cfg.hidden_dim))
        shape = tuple(rec["shape"])
        if shape != expected:
            raise ValueError(
                f"parameter {name!r} has shape {shape}, expected {expected}"
            )
        data = np.array(rec["data"], dtype=np.float64).reshape(shape)
        tensors[name] = Tensor(data, requires_grad=True)
    return ModelParameters(config=cfg, tensors=tensors)
