"""
Rank vectors and the two future-response encodings
===================================================

A delay vector is reduced to the ordering of its components.  The response's
future enters either as the ranks of y[t+1..t+T] among the augmented vector
(TERV encoding) or as the pattern of the delay vector T steps ahead (STE
encoding).  The former distinguishes more states: (m+T)! / m! instead of m!.
"""
import numpy as np

from rankte.embedding import (
    EmbeddingSpec,
    MultivariateSeries,
    build_symbol_series,
    delay_embed,
    permutation_index,
    rank_encode,
)

y = np.array([0.3, 0.9, 0.1, 0.4, 0.7, 0.2])
spec = EmbeddingSpec(m=3, tau=1, T=1)

# %% one delay vector and its rank pattern
t = 3
v = delay_embed(y, spec, t)
print("delay vector at t=3:", v)                      # [y3, y2, y1]
print("ranks:", rank_encode(v), "-> pattern index", permutation_index(rank_encode(v)))

# %% the ordering is all that is kept, so any increasing map leaves it alone
print("ranks of exp(v):", rank_encode(np.exp(v)))

# %% symbol streams for a small random system
rng = np.random.default_rng(1)
data = MultivariateSeries(rng.normal(size=(12, 3)))
for mode in ("terv", "ste"):
    s = build_symbol_series(data, driver=0, response=1, confounders=(2,), spec=spec, mode=mode)
    print(f"{mode}: future symbols {s.yT.tolist()}  (alphabet size {s.cardinalities[0]})")
