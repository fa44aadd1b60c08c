"""Evaluation protocol for predicted reading orders.

Covers edit distance, the normalized order reward, alignment-based error
attribution to ground-truth positions, per-position-bin disparity profiles,
and the geometric spatial-logical mismatch analysis.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .layout import Document, ReadingOrder, bbox_center


class OpKind(Enum):
    MATCH = "match"
    SUBSTITUTION = "substitution"
    DELETION = "deletion"
    INSERTION = "insertion"


@dataclass(frozen=True)
class AlignmentOp:
    """One alignment operation attributed to a 1-based ground-truth position."""

    kind: OpKind
    gt_index: int


@dataclass
class DisparityProfile:
    """Per-relative-position-bin error statistics.

    ``error_rate[k]`` is ``error_count[k] / token_count[k]`` where the bin has
    tokens, else None. Insertion attributions can push a rate above 1; rates
    are reported unclamped so error counts stay conserved.
    """

    K: int
    error_count: np.ndarray
    token_count: np.ndarray

    @property
    def error_rate(self) -> List[Optional[float]]:
        return [
            float(self.error_count[k]) / int(self.token_count[k])
            if self.token_count[k] > 0
            else None
            for k in range(self.K)
        ]

    def rows(self) -> List[dict]:
        rates = self.error_rate
        out = []
        for k in range(self.K):
            out.append(
                {
                    "bin_index": k,
                    "bin_lo": k / self.K,
                    "bin_hi": (k + 1) / self.K,
                    "token_count": int(self.token_count[k]),
                    "error_count": float(self.error_count[k]),
                    "error_rate": rates[k],
                }
            )
        return out


@dataclass
class MismatchResult:
    count: int
    positions: List[float]
    transition_indices: List[int]


def levenshtein(a: Sequence, b: Sequence) -> int:
    """Minimum number of unit-cost insertions, deletions, and substitutions
    transforming one token list into the other."""
    n, m = len(a), len(b)
    if n == 0:
        return m
    if m == 0:
        return n
    prev = list(range(m + 1))
    cur = [0] * (m + 1)
    for i in range(1, n + 1):
        cur[0] = i
        ai = a[i - 1]
        for j in range(1, m + 1):
            cost = 0 if ai == b[j - 1] else 1
            cur[j] = min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + cost)
        prev, cur = cur, prev
    return prev[m]


def order_reward(pred: ReadingOrder, gt: ReadingOrder) -> float:
    """Normalized order quality: 1 minus edit distance over the longer length."""
    longest = max(len(pred), len(gt))
    if longest == 0:
        raise ValueError("undefined reward: both sequences are empty")
    return 1.0 - levenshtein(pred.sequence, gt.sequence) / longest


def _distance_matrix(pred: Sequence, gt: Sequence) -> List[List[int]]:
    n, m = len(pred), len(gt)
    d = [[0] * (m + 1) for _ in range(n + 1)]
    for i in range(n + 1):
        d[i][0] = i
    for j in range(m + 1):
        d[0][j] = j
    for i in range(1, n + 1):
        pi = pred[i - 1]
        row, up = d[i], d[i - 1]
        for j in range(1, m + 1):
            cost = 0 if pi == gt[j - 1] else 1
            row[j] = min(up[j] + 1, row[j - 1] + 1, up[j - 1] + cost)
    return d


def align_backtrace(pred: Sequence, gt: Sequence) -> List[AlignmentOp]:
    """Minimal-cost alignment of ``pred`` against ``gt``.

    Each ground-truth token receives exactly one Match, Substitution, or
    Deletion; extra predicted tokens become Insertions attributed to the
    preceding ground-truth index (index 1 when they precede everything).
    At equal cost the backtrace prefers Match, then Substitution, then
    Deletion, then Insertion, so attribution is deterministic.
    """
    pred = list(pred)
    gt = list(gt)
    d = _distance_matrix(pred, gt)
    ops: List[AlignmentOp] = []
    i, j = len(pred), len(gt)
    while i > 0 or j > 0:
        here = d[i][j]
        if i > 0 and j > 0 and pred[i - 1] == gt[j - 1] and d[i - 1][j - 1] == here:
            ops.append(AlignmentOp(OpKind.MATCH, j))
            i, j = i - 1, j - 1
        elif i > 0 and j > 0 and d[i - 1][j - 1] + 1 == here:
            ops.append(AlignmentOp(OpKind.SUBSTITUTION, j))
            i, j = i - 1, j - 1
        elif j > 0 and d[i][j - 1] + 1 == here:
            ops.append(AlignmentOp(OpKind.DELETION, j))
            j -= 1
        else:
            ops.append(AlignmentOp(OpKind.INSERTION, max(j, 1)))
            i -= 1
    ops.reverse()
    return ops


def _bin_of(t: int, T: int, K: int) -> int:
    if T <= 0:
        return 0
    return min(max(int((t / T) * K), 0), K - 1)


def positional_error_profile(
    eval_pairs: Sequence[Tuple[Sequence, Sequence]], K: int
) -> DisparityProfile:
    """Aggregate alignment errors into K relative-position bins.

    Every ground-truth token contributes to its bin's token count and, when
    substituted or deleted, to its error count. Insertions contribute an
    error at the bin of their attributed index without adding a token.
    """
    if K < 1:
        raise ValueError("bin count must be at least 1")
    errors = np.zeros(K, dtype=np.float64)
    tokens = np.zeros(K, dtype=np.int64)
    for pred, gt in eval_pairs:
        T = len(gt)
        for op in align_backtrace(pred, gt):
            k = _bin_of(op.gt_index, T, K)
            if op.kind is OpKind.INSERTION:
                errors[k] += 1.0
            else:
                tokens[k] += 1
                if op.kind is not OpKind.MATCH:
                    errors[k] += 1.0
    return DisparityProfile(K=K, error_count=errors, token_count=tokens)


def spatial_logical_mismatch(doc: Document) -> MismatchResult:
    """Transitions whose ground-truth successor is not the geometrically
    nearest unvisited element (nearest by center distance, ties by lowest
    element index). Positions are reported as (t+1)/T for transition t."""
    T = len(doc)
    if T < 2:
        return MismatchResult(count=0, positions=[], transition_indices=[])
    centers = np.array([bbox_center(el.bbox) for el in doc.elements])
    diff = centers[:, None, :] - centers[None, :, :]
    dist = np.sqrt((diff**2).sum(axis=2))
    unvisited = np.ones(T, dtype=bool)
    positions: List[float] = []
    transitions: List[int] = []
    order = doc.gt_order
    for t in range(T - 1):
        cur = order[t]
        unvisited[cur] = False
        cand = dist[cur].copy()
        cand[~unvisited] = np.inf
        nearest = int(np.argmin(cand))
        if order[t + 1] != nearest:
            positions.append((t + 1) / T)
            transitions.append(t)
    return MismatchResult(
        count=len(positions), positions=positions, transition_indices=transitions
    )


def disparity_summary(profile: DisparityProfile) -> Dict[str, Optional[float]]:
    """Middle-region versus boundary-region mean error rates for a K=10
    profile. The flattening ratio is None when the boundary mean is zero."""
    if profile.K != 10:
        raise ValueError("disparity summary is defined for K=10 profiles")
    rates = profile.error_rate

    def region_mean(bins):
        vals = [rates[k] for k in bins if rates[k] is not None]
        return float(np.mean(vals)) if vals else 0.0

    middle = region_mean(range(2, 8))
    boundary = region_mean((0, 1, 8, 9))
    ratio = middle / boundary if boundary > 0 else None
    return {
        "middle_mean": middle,
        "boundary_mean": boundary,
        "flattening_ratio": ratio,
    }


def write_profile_csv(profile: DisparityProfile, path: str) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(
            ["bin_index", "bin_lo", "bin_hi", "token_count", "error_count", "error_rate"]
        )
        for row in profile.rows():
            rate = "" if row["error_rate"] is None else repr(row["error_rate"])
            w.writerow(
                [
                    row["bin_index"],
                    repr(row["bin_lo"]),
                    repr(row["bin_hi"]),
                    row["token_count"],
                    repr(row["error_count"]),
                    rate,
                ]
            )


def write_mismatch_csv(results: Sequence[Tuple[str, MismatchResult]], path: str) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["doc_id", "transition_index", "relative_position"])
        for doc_id, res in results:
            for t, pos in zip(res.transition_indices, res.positions):
                w.writerow([doc_id, t, repr(pos)])
