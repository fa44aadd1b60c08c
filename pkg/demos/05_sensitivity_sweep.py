"""Sweep the bin count K and the advantage weight beta.

One model trains per value with shared seeds; the table reports the mean
edit distance each setting reaches. K=1 collapses the difficulty tracker
to a single global bin (uniform weighting), so it serves as the
no-spatial-structure baseline inside the sweep.
"""

from focalorder import GeneratorConfig, TrainConfig, generate_corpus
from focalorder.model import ModelConfig
from focalorder.training import sensitivity_harness

corpus = generate_corpus(GeneratorConfig(n_docs=200, ambiguity=0.6, seed=42))
cfg = TrainConfig(mode="full_fpo", epochs=6, batch_size=16, base_lr=1e-2, seed=0,
                  model=ModelConfig(hidden_dim=32))

print("sweeping K (difficulty bins):")
for row in sensitivity_harness(cfg, corpus, "K", [1, 5, 10, 20]):
    print(f"  K={int(row['value']):>3d}  seed {row['seed']}  mean edit {row['mean_edit']:.4f}")

print("\nsweeping beta (difficulty bonus inside the advantage):")
for row in sensitivity_harness(cfg, corpus, "beta", [0.0, 0.05, 0.2]):
    print(f"  beta={row['value']:<5g} seed {row['seed']}  mean edit {row['mean_edit']:.4f}")
