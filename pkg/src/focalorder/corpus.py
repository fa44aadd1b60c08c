"""Seeded synthetic document generator and corpus file IO.

Documents are built from stacked per-column slots whose centers share the
column axis, so with ambiguity 0 every ground-truth transition goes to the
geometrically nearest unvisited element and the mismatch count is exactly
zero. Order-breaking constructs are injected only at transitions whose
relative position falls in the middle 20..80% of the sequence:

* a float: a figure or table sits between two body slots but is read after
  the slot below it, so the transition into the lower slot skips past the
  nearest unvisited element;
* a detached caption: a caption sits above its figure with an oversized gap,
  so the figure-to-caption transition points away from the nearest body text.

Cross-column layouts (which force a non-nearest jump at each column break)
appear with probability equal to the ambiguity knob, keeping the expected
mismatch count proportional to it. Gap and height ranges are calibrated for
documents of roughly 10 to 60 elements; outside that range the injected
constructs stay valid but cross-column interference is no longer bounded.

Corpus files are UTF-8 JSON lines, one document per line:

    {"doc_id": str, "page_width": num, "page_height": num,
     "elements": [{"bbox": [x0, y0, x1, y1], "category": str,
                   "order_index": int}, ...]}

where order_index is the element's rank in the ground-truth reading order.
External annotations in the same schema can be loaded directly.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from typing import List, Sequence

import numpy as np

from .layout import BoundingBox, Document, LayoutElement

MARGIN_X_FRAC = 0.06
MARGIN_Y_FRAC = 0.055
GUTTER_FRAC = 0.035
# Per-site injection probability is ambiguity * INJECT_RATE: order-breaking
# constructs stay a sparse minority of transitions even at high ambiguity,
# which is what makes uniform supervision under-serve them.
INJECT_RATE = 0.3


@dataclass(frozen=True)
class GeneratorConfig:
    n_docs: int
    elements_min: int = 20
    elements_max: int = 40
    columns_min: int = 1
    columns_max: int = 3
    ambiguity: float = 0.0
    page_width: float = 612.0
    page_height: float = 792.0
    seed: int = 0

    def __post_init__(self):
        if self.n_docs < 0:
            raise ValueError("n_docs must be nonnegative")
        if self.elements_max < 1:
            raise ValueError("elements_max must be at least 1")
        if self.elements_min < 1 or self.elements_min > self.elements_max:
            raise ValueError("need 1 <= elements_min <= elements_max")
        if not (1 <= self.columns_min <= self.columns_max):
            raise ValueError("need 1 <= columns_min <= columns_max")
        if not 0.0 <= self.ambiguity <= 1.0:
            raise ValueError("ambiguity must lie in [0, 1]")
        if self.page_width <= 0 or self.page_height <= 0:
            raise ValueError("page dimensions must be positive")


class _Slot:
    """One stacked region of a column, in relative height units."""

    __slots__ = ("height", "gap_after", "width_frac", "category")

    def __init__(self, height, gap_after, width_frac, category):
        self.height = height
        self.gap_after = gap_after
        self.width_frac = width_frac
        self.category = category


def _base_column(rng: np.random.Generator, n_items: int) -> List[_Slot]:
    slots = []
    for _ in range(n_items):
        h = rng.uniform(0.55, 0.95)
        g = rng.uniform(0.25, 0.45)
        w = rng.uniform(0.78, 0.98)
        cat = "formula" if rng.random() < 0.1 else "text"
        slots.append(_Slot(h, g, w, cat))
    return slots


def _inject_float(rng: np.random.Generator, slots: List[_Slot], k: int) -> None:
    """Turn slot k+1 into a float read after slot k+2.

    The gap below the float is kept smaller than the gap below slot k+2, so
    after the skip the return to the float is itself a nearest-neighbor move
    and the construct produces exactly one in-window mismatch.
    """
    flt = slots[k + 1]
    flt.height = rng.uniform(0.9, 1.3)
    flt.width_frac = rng.uniform(0.5, 0.72)  # visually distinct from body text
    flt.category = "figure" if rng.random() < 0.6 else "table"
    slots[k].gap_after = rng.uniform(0.3, 0.4)
    flt.gap_after = rng.uniform(0.25, 0.3)
    slots[k + 2].gap_after = rng.uniform(0.8, 0.9)


def _inject_caption(rng: np.random.Generator, slots: List[_Slot], k: int) -> None:
    """Place a caption above its figure (slot k+1 above slot k+2).

    The caption-to-figure gap is oversized while the figure sits close to the
    following body slot, so both the transition into the figure and the
    figure-to-caption transition deviate from the nearest unvisited element.
    """
    cap, fig = slots[k + 1], slots[k + 2]
    cap.height = rng.uniform(0.25, 0.35)
    cap.width_frac = rng.uniform(0.35, 0.55)
    cap.category = "caption"
    fig.height = rng.uniform(0.9, 1.3)
    fig.width_frac = rng.uniform(0.5, 0.72)
    fig.category = "figure" if rng.random() < 0.6 else "table"
    slots[k].gap_after = rng.uniform(0.25, 0.35)
    cap.gap_after = rng.uniform(0.85, 0.95)
    fig.gap_after = rng.uniform(0.15, 0.2)


def generate_document(cfg: GeneratorConfig, doc_seed: int) -> Document:
    """Build one document deterministically from (cfg, doc_seed)."""
    rng = np.random.default_rng(doc_seed)
    n = int(rng.integers(cfg.elements_min, cfg.elements_max + 1))

    u_col = rng.random()
    multi = cfg.ambiguity > 0 and cfg.columns_max >= 2 and u_col < cfg.ambiguity
    if multi:
        lo = max(2, cfg.columns_min)
        n_cols = int(rng.integers(lo, cfg.columns_max + 1))
        n_cols = min(n_cols, max(1, n // 2))
    else:
        n_cols = 1

    base, rem = divmod(n, n_cols)
    counts = [base + 1] * rem + [base] * (n_cols - rem)

    columns = [_base_column(rng, c) for c in counts]
    local_orders = [list(range(c)) for c in counts]

    # Injection scan: a site at local transition k needs four slots (k..k+3)
    # and its affected transitions must stay inside the 20..80% window.
    offsets = np.concatenate([[0], np.cumsum(counts)])[:-1]
    for col, (slots, lorder, off) in enumerate(zip(columns, local_orders, offsets)):
        n_c = len(slots)
        k = 0
        while k <= n_c - 4:
            t = off + k
            if (t + 1) / n < 0.2 or (t + 3) / n > 0.8:
                k += 1
                continue
            if rng.random() < cfg.ambiguity * INJECT_RATE:
                if rng.random() < 0.5:
                    _inject_float(rng, slots, k)
                    width = 3
                else:
                    _inject_caption(rng, slots, k)
                    width = 4
                lorder[k + 1], lorder[k + 2] = lorder[k + 2], lorder[k + 1]
                k += width
            else:
                k += 1

    # Realize geometry: each column is scaled to fill the vertical extent.
    margin_x = MARGIN_X_FRAC * cfg.page_width
    margin_y = MARGIN_Y_FRAC * cfg.page_height
    gutter = GUTTER_FRAC * cfg.page_width
    col_width = (cfg.page_width - 2 * margin_x - (n_cols - 1) * gutter) / n_cols
    avail_h = cfg.page_height - 2 * margin_y

    reading = []  # (bbox, category) in ground-truth reading order
    for col, (slots, lorder) in enumerate(zip(columns, local_orders)):
        cx = margin_x + col * (col_width + gutter) + col_width / 2
        units = sum(s.height for s in slots) + sum(s.gap_after for s in slots[:-1])
        scale = avail_h / units
        tops = []
        cursor = margin_y
        for s in slots:
            tops.append(cursor)
            cursor += (s.height + s.gap_after) * scale
        boxes = []
        for s, top in zip(slots, tops):
            hw = s.width_frac * col_width / 2
            y1 = min(top + s.height * scale, cfg.page_height)
            boxes.append((BoundingBox(cx - hw, top, cx + hw, y1), s.category))
        reading.extend(boxes[j] for j in lorder)

    cats = [c for _, c in reading]
    cats[0] = "title"
    if rng.random() < 0.3:
        cats[-1] = "footer"

    # Present elements in a shuffled input order; gt_order maps reading rank
    # back to input index.
    input_of_rank = rng.permutation(n)
    elements: List[LayoutElement] = [None] * n  # type: ignore[list-item]
    for rank, ((bbox, _), cat) in enumerate(zip(reading, cats)):
        idx = int(input_of_rank[rank])
        elements[idx] = LayoutElement(element_id=idx, bbox=bbox, category=cat)
    gt_order = tuple(int(input_of_rank[r]) for r in range(n))

    return Document(
        doc_id=f"doc-{doc_seed}",
        page_width=cfg.page_width,
        page_height=cfg.page_height,
        elements=tuple(elements),
        gt_order=gt_order,
    )


def generate_corpus(cfg: GeneratorConfig) -> List[Document]:
    """Documents for seeds cfg.seed .. cfg.seed + n_docs - 1."""
    return [generate_document(cfg, cfg.seed + i) for i in range(cfg.n_docs)]


def document_to_json(doc: Document) -> str:
    rank_of = [0] * len(doc)
    for rank, idx in enumerate(doc.gt_order):
        rank_of[idx] = rank
    payload = {
        "doc_id": doc.doc_id,
        "page_width": doc.page_width,
        "page_height": doc.page_height,
        "elements": [
            {
                "bbox": [el.bbox.x0, el.bbox.y0, el.bbox.x1, el.bbox.y1],
                "category": el.category,
                "order_index": rank_of[el.element_id],
            }
            for el in doc.elements
        ],
    }
    return json.dumps(payload, separators=(",", ":"))


def document_from_json(line: str) -> Document:
    payload = json.loads(line)
    elements = []
    ranks = []
    for idx, rec in enumerate(payload["elements"]):
        x0, y0, x1, y1 = rec["bbox"]
        elements.append(
            LayoutElement(
                element_id=idx,
                bbox=BoundingBox(float(x0), float(y0), float(x1), float(y1)),
                category=rec["category"],
            )
        )
        ranks.append(int(rec["order_index"]))
    n = len(elements)
    if sorted(ranks) != list(range(n)):
        raise ValueError("order_index values are not a permutation of 0..n-1")
    gt_order = [0] * n
    for idx, rank in enumerate(ranks):
        gt_order[rank] = idx
    return Document(
        doc_id=payload["doc_id"],
        page_width=float(payload["page_width"]),
        page_height=float(payload["page_height"]),
        elements=tuple(elements),
        gt_order=tuple(gt_order),
    )


def save_corpus(docs: Sequence[Document], path: str) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for doc in docs:
            f.write(document_to_json(doc))
            f.write("\n")


def load_corpus(path: str) -> List[Document]:
    docs = []
    with open(path, "r", encoding="utf-8") as f:
        for ln, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                docs.append(document_from_json(line))
            except (ValueError, KeyError, TypeError) as exc:
                raise ValueError(f"{path}: line {ln}: {exc}") from exc
    return docs


def corpus_hash(docs: Sequence[Document]) -> str:
    """Stable content hash used to tie checkpoints to their training data."""
    h = hashlib.sha256()
    for doc in docs:
        h.update(document_to_json(doc).encode("utf-8"))
        h.update(b"\n")
    return h.hexdigest()
