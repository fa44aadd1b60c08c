"""Generate a synthetic corpus and look at where its hard transitions live.

The generator builds stacked-column pages whose reading order follows the
geometrically nearest unvisited element, then injects order-breaking
constructs (floats read out of place, captions detached from their figures)
only in the middle 20..80% of each sequence. The ambiguity knob controls
how often that happens.
"""

import numpy as np

from focalorder import GeneratorConfig, generate_corpus, spatial_logical_mismatch

# ambiguity 0: single-column pages, reading order = nearest-neighbor chain
clean = generate_corpus(GeneratorConfig(n_docs=50, ambiguity=0.0, seed=7))
clean_counts = [spatial_logical_mismatch(d).count for d in clean]
print(f"ambiguity 0.0: {sum(clean_counts)} mismatches across {len(clean)} documents")

# ambiguity 0.6: cross-column jumps and injected constructs appear
hard = generate_corpus(GeneratorConfig(n_docs=300, ambiguity=0.6, seed=7))
positions = []
for doc in hard:
    positions.extend(spatial_logical_mismatch(doc).positions)
positions = np.array(positions)
print(f"ambiguity 0.6: {len(positions)} mismatches, "
      f"mean {len(positions) / len(hard):.2f} per document")

# the mismatch mass concentrates in the intermediate sections
hist, edges = np.histogram(positions, bins=10, range=(0, 1))
print("\nmismatch positions by decile:")
for k, count in enumerate(hist):
    bar = "#" * int(60 * count / max(hist.max(), 1))
    print(f"  {edges[k]:.1f}-{edges[k + 1]:.1f}  {count:5d}  {bar}")
inside = ((positions >= 0.2) & (positions <= 0.8)).mean()
print(f"\nfraction inside [0.2, 0.8]: {inside:.1%}")

# a document is a plain value object; peek at one
doc = hard[0]
print(f"\nfirst document: {len(doc)} elements on a "
      f"{doc.page_width:.0f}x{doc.page_height:.0f} page")
for rank, idx in enumerate(doc.gt_order[:6]):
    el = doc.elements[idx]
    print(f"  read #{rank}: element {idx:2d} [{el.category:8s}] "
          f"y={el.bbox.y0:6.1f}..{el.bbox.y1:6.1f}")
