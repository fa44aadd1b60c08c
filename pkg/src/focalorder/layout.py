"""Geometric domain types shared by generation, modeling, and analysis.

Coordinate convention: origin at the top-left of the page, y grows downward.
All types are immutable values; the operations here are pure functions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Tuple

DEFAULT_CATEGORIES: Tuple[str, ...] = (
    "title",
    "text",
    "figure",
    "table",
    "caption",
    "header",
    "footer",
    "formula",
)


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned box in page coordinates."""

    x0: float
    y0: float
    x1: float
    y1: float

    def __post_init__(self):
        for name in ("x0", "y0", "x1", "y1"):
            v = getattr(self, name)
            if not math.isfinite(v):
                raise ValueError(f"bbox coordinate {name} is not finite: {v!r}")
        if self.x0 > self.x1 or self.y0 > self.y1:
            raise ValueError(
                f"degenerate bbox: ({self.x0}, {self.y0}, {self.x1}, {self.y1})"
            )

    @property
    def width(self) -> float:
        return self.x1 - self.x0

    @property
    def height(self) -> float:
        return self.y1 - self.y0


@dataclass(frozen=True)
class LayoutElement:
    """One layout region: an id unique within its document, a box, a category."""

    element_id: int
    bbox: BoundingBox
    category: str


@dataclass(frozen=True)
class Document:
    """A page with layout elements and a ground-truth reading order.

    ``elements`` is ordered by input index (the model's presentation order);
    ``gt_order`` is a permutation of those indices giving the logical order.
    """

    doc_id: str
    page_width: float
    page_height: float
    elements: Tuple[LayoutElement, ...]
    gt_order: Tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "elements", tuple(self.elements))
        object.__setattr__(self, "gt_order", tuple(self.gt_order))
        if self.page_width <= 0 or self.page_height <= 0:
            raise ValueError(f"page dimensions must be positive in {self.doc_id!r}")
        n = len(self.elements)
        if n < 1:
            raise ValueError(f"document {self.doc_id!r} has no elements")
        if sorted(self.gt_order) != list(range(n)):
            raise ValueError(
                f"gt_order of {self.doc_id!r} is not a permutation of 0..{n - 1}"
            )
        for el in self.elements:
            b = el.bbox
            if b.x0 < 0 or b.y0 < 0 or b.x1 > self.page_width or b.y1 > self.page_height:
                raise ValueError(
                    f"element {el.element_id} of {self.doc_id!r} lies outside the page"
                )

    def __len__(self) -> int:
        return len(self.elements)


@dataclass(frozen=True)
class ReadingOrder:
    """A sequence of element indices (model output or ground truth)."""

    sequence: Tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "sequence", tuple(self.sequence))

    def __len__(self) -> int:
        return len(self.sequence)


def bbox_center(bbox: BoundingBox) -> Tuple[float, float]:
    """Midpoint of a box."""
    return ((bbox.x0 + bbox.x1) / 2.0, (bbox.y0 + bbox.y1) / 2.0)


def center_distance(a: BoundingBox, b: BoundingBox) -> float:
    """Euclidean distance between box centers."""
    (ax, ay), (bx, by) = bbox_center(a), bbox_center(b)
    return math.hypot(ax - bx, ay - by)


def nearest_neighbor(doc: Document, i: int) -> int:
    """Index of the element whose center is closest to element ``i``.

    Ties are broken by the lowest element index.
    """
    n = len(doc)
    if n < 2:
        raise ValueError(f"no neighbor: document {doc.doc_id!r} has a single element")
    if not 0 <= i < n:
        raise ValueError(f"element index {i} out of range for {doc.doc_id!r}")
    best_j, best_d = -1, math.inf
    for j in range(n):
        if j == i:
            continue
        d = center_distance(doc.elements[i].bbox, doc.elements[j].bbox)
        if d < best_d:
            best_j, best_d = j, d
    return best_j


def normalize_bbox(bbox: BoundingBox, page_width: float, page_height: float) -> BoundingBox:
    """Rescale a box into the unit square given page dimensions."""
    if page_width <= 0 or page_height <= 0:
        raise ValueError("page dimensions must be positive")
    return BoundingBox(
        bbox.x0 / page_width,
        bbox.y0 / page_height,
        bbox.x1 / page_width,
        bbox.y1 / page_height,
    )
