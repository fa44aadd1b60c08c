"""Watch adaptive difficulty discovery find the hard region of the corpus.

Per-position-bin token losses feed an EMA tracker; each bin's weight is its
difficulty relative to the mean, clipped to [1-delta, 1+delta]. Early in
training the first bins look hardest (more candidates to choose from), but
as the easy geometry gets learned the weights settle into the inverted-U
shape that mirrors where the structural ambiguity actually lives.
"""

import numpy as np

from focalorder import GeneratorConfig, TrainConfig, generate_corpus, train
from focalorder.model import ModelConfig

corpus = generate_corpus(GeneratorConfig(n_docs=300, ambiguity=0.6, seed=42))
cfg = TrainConfig(mode="full_fpo", epochs=8, batch_size=16, base_lr=1e-2, seed=0,
                  model=ModelConfig(hidden_dim=32))
result = train(cfg, corpus)


def sparkline(weights):
    return " ".join(f"{w:4.2f}" for w in weights)


print("difficulty weights over training (rows: every 20th step)")
print("bin:        " + "  ".join(f"{k}" for k in range(10)))
for step, _ema, weights in result.weight_history[::20]:
    print(f"step {step:4d}  {sparkline(weights)}")
step, ema, weights = result.weight_history[-1]
print(f"final {step:4d}  {sparkline(weights)}")
print("\nfinal EMA losses per bin:", np.round(ema, 3))

mid = np.mean(weights[3:8])
boundary = np.mean(weights[[0, 1, 8, 9]])
print(f"mean weight, bins 3-7: {mid:.2f}   bins 0,1,8,9: {boundary:.2f}")
