"""
Direct couplings in a chain of Henon maps
=========================================

Three maps are coupled X1 -> X2 <- X3.  For every ordered pair we compute the
partial measure conditioned on the remaining variable and test it against
time-shifted surrogates, correcting for the six tests with the FDR rule.
"""
from rankte.embedding import EmbeddingSpec
from rankte.harness import ExperimentConfig, analyze_all_pairs, generate
from rankte.inference import SurrogateSpec

cfg = ExperimentConfig(
    measures=("PTERV", "PSTE"),
    tests=("surrogate", "gamma1"),
    embedding=EmbeddingSpec(m=2, tau=1, T=1),
    surrogate=SurrogateSpec(M=100),
    system="henon",
    system_params={"K": 3, "C": 0.2, "N": 1024},
    seed=3,
)

data, edges, _ = generate(cfg, realization=0)
print("true edges:", sorted(f"{data.labels[i]}->{data.labels[j]}" for i, j in edges))

# %% all ordered pairs, each conditioned on the third variable
for r in analyze_all_pairs(data, cfg):
    p = r.result.p_values
    mark = "*" if r.rejected["surrogate"] else " "
    print(f"{mark} {r.label:<7} {r.measure:<6} I={r.result.statistic:.4f} "
          f"r0={r.result.r0:>3}  p_surr={p['surrogate']:.4f}  p_gamma1={p['gamma1']:.4g}")

# PTERV usually flags both true couplings; PSTE, whose future symbol carries
# less information about the response, usually misses them at this length.
