"""Significance testing for conditional mutual information statistics.

Bias and variance approximations of plug-in entropies and CMI, the three
parametric null models (Gaussian, Gamma-1, Gamma-2), the randomization test
with time-shifted surrogates and the Benjamini-Hochberg FDR step-up rule.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import special

from .errors import InvalidShiftError, InvalidSpecError, InvalidValueError, ModelUnavailableError
from .estimators import JointCountTable, build_count_table, cmi_plugin

__all__ = [
    "BiasVariance",
    "NullModel",
    "SurrogateSpec",
    "TestResult",
    "FdrSpec",
    "entropy_bias",
    "entropy_variance",
    "cmi_bias",
    "cmi_variance",
    "cmi_bias_variance",
    "gaussian_null",
    "gamma1_null",
    "gamma2_null",
    "parametric_pvalue",
    "parametric_tests",
    "time_shift_surrogate",
    "draw_shifts",
    "surrogate_pvalue",
    "randomization_test",
    "fdr_correct",
    "PARAMETRIC_TESTS",
]

PARAMETRIC_TESTS = ("gaussian", "gamma1", "gamma2")


def _counts(counts) -> tuple[np.ndarray, float]:
    c = np.asarray(list(counts.values()) if isinstance(counts, dict) else counts, dtype=float)
    return c, c.sum()


def entropy_bias(counts, N: float | None = None) -> float:
    """Third-order bias approximation of the plug-in entropy.

    ``-(B*-1)/(2N) - (3B*-2)/(6N^2) + (1/(6N)) sum_i 1/n_i`` over the ``B*``
    occupied states.  The first term alone is the Miller-Madow correction.
    """
    c, total = _counts(counts)
    n = total if N is None else float(N)
    b = np.count_nonzero(c)
    c = c[c > 0]
    return float(-(b - 1) / (2 * n) - (3 * b - 2) / (6 * n * n) + np.sum(1.0 / c) / (6 * n))


def entropy_variance(counts, N: float | None = None) -> float:
    """Error-propagation variance ``(1/N) sum (ln q_i + H)^2 q_i (1 - q_i)``."""
    c, total = _counts(counts)
    n = total if N is None else float(N)
    q = c[c > 0] / n
    h = -np.sum(q * np.log(q))
    return float(np.sum((np.log(q) + h) ** 2 * q * (1 - q)) / n)


# Marginal axes in the four-entropy expansion, with their sign in the CMI.
_CMI_TERMS = (((0, 1, 2, 3), -1), ((1, 2, 3), +1), ((0, 2, 3), +1), ((2, 3), -1))


def cmi_bias(tbl: JointCountTable, published_offsets: bool = False) -> float:
    """Bias approximation of the plug-in CMI ``I(yT; x | y, z)``.

    Obtained by substituting :func:`entropy_bias` into each of the four
    entropy terms::

        (B*1234 - B*234 - B*134 + B*34) / (2N)
        + (3B*1234 - 3B*234 - 3B*134 + 3B*34) / (6N^2)
        + (1/(6N)) [-sum 1/n_ijkl + sum 1/n_.jkl + sum 1/n_i.kl - sum 1/n_..kl]

    with ``N`` the number of aligned time indices.  The constants of the
    single-entropy terms cancel in this combination.  ``published_offsets=True``
    adds the constants -4 and -8 to the first two numerators instead, as
    printed in the published formula.
    """
    n = float(tbl.n_eff)
    active, harmonic = 0.0, 0.0
    for axes, sign in _CMI_TERMS:
        counts = tbl.marginal_counts(axes)
        active -= sign * len(counts)
        harmonic += sign * np.sum(1.0 / counts)
    c1, c2 = (-4.0, -8.0) if published_offsets else (0.0, 0.0)
    return float((active + c1) / (2 * n) + (3 * active + c2) / (6 * n * n) + harmonic / (6 * n))


def _cell_marginals(tbl: JointCountTable, axes) -> np.ndarray:
    """For every occupied joint cell, the count of its marginal state."""
    keys = np.zeros(len(tbl.cells), dtype=np.int64)
    for a in axes:
        keys = keys * int(tbl.cardinalities[a]) + tbl.cells[:, a]
    _, inverse = np.unique(keys, return_inverse=True)
    sums = np.bincount(inverse.ravel(), weights=tbl.counts)
    return sums[inverse.ravel()]


def cmi_variance(tbl: JointCountTable) -> float:
    """Error-propagation variance of the plug-in CMI.

    ``(1/N) sum_ijkl (-ln q_ijkl + ln q_.jkl + ln q_i.kl - ln q_..kl + I)^2 q_ijkl (1 - q_ijkl)``
    """
    n = float(tbl.n_eff)
    q = tbl.counts / n
    q_xyz = _cell_marginals(tbl, (1, 2, 3)) / n
    q_fyz = _cell_marginals(tbl, (0, 2, 3)) / n
    q_yz = _cell_marginals(tbl, (2, 3)) / n
    log_ratio = np.log(q) + np.log(q_yz) - np.log(q_xyz) - np.log(q_fyz)
    info = float(np.sum(q * log_ratio))
    return float(np.sum((info - log_ratio) ** 2 * q * (1 - q)) / n)


@dataclass(frozen=True)
class BiasVariance:
    bias: float
    variance: float

    def __post_init__(self):
        if not (math.isfinite(self.bias) and math.isfinite(self.variance)):
            raise InvalidValueError("bias and variance must be finite")
        if self.variance < 0:
            raise InvalidValueError(f"negative variance {self.variance}")


def cmi_bias_variance(tbl: JointCountTable, published_offsets: bool = False) -> BiasVariance:
    # round-off can push an exactly-zero variance slightly below zero
    return BiasVariance(cmi_bias(tbl, published_offsets), max(cmi_variance(tbl), 0.0))


@dataclass(frozen=True)
class NullModel:
    """Approximate null distribution of a CMI statistic.

    ``family`` is ``"gaussian"`` (``loc`` = mean, ``scale`` = SD) or one of
    ``"gamma1"``/``"gamma2"`` (``shape`` and ``scale``).
    """

    family: str
    scale: float
    loc: float = 0.0
    shape: float | None = None

    def __post_init__(self):
        if self.family == "gaussian":
            if not self.scale > 0:
                raise ModelUnavailableError("Gaussian null needs a positive SD")
        elif self.family in ("gamma1", "gamma2"):
            if not (self.shape is not None and self.shape > 0 and self.scale > 0):
                raise ModelUnavailableError(f"{self.family} null needs positive shape and scale")
        else:
            raise InvalidSpecError(f"unknown null family {self.family!r}")

    @property
    def mean(self) -> float:
        return self.loc if self.family == "gaussian" else self.shape * self.scale

    @property
    def variance(self) -> float:
        return self.scale ** 2 if self.family == "gaussian" else self.shape * self.scale ** 2


def gaussian_null(bv: BiasVariance) -> NullModel:
    """``N(bias, variance)``."""
    if not bv.variance > 0:
        raise ModelUnavailableError("zero variance: Gaussian null undefined")
    return NullModel("gaussian", loc=bv.bias, scale=math.sqrt(bv.variance))


def gamma1_null(tbl: JointCountTable, n_eff: int | None = None) -> NullModel:
    """Gamma null with shape ``B*34/2 (B*1 - 1)(B*2 - 1)`` and scale ``1/N``.

    ``B*1``, ``B*2`` and ``B*34`` are the numbers of occupied future-response,
    driver and conditioning states.
    """
    n = tbl.n_eff if n_eff is None else n_eff
    b1 = tbl.active_states((0,))
    b2 = tbl.active_states((1,))
    b34 = tbl.active_states((2, 3))
    if b1 < 2 or b2 < 2:
        raise ModelUnavailableError(
            f"degenerate margin (B*1={b1}, B*2={b2}): Gamma-1 null undefined"
        )
    return NullModel("gamma1", shape=b34 / 2 * (b1 - 1) * (b2 - 1), scale=1.0 / n)


def gamma2_null(bv: BiasVariance) -> NullModel:
    """Moment-matched Gamma null: shape ``bias^2/var``, scale ``var/bias``."""
    if not bv.bias > 0:
        raise ModelUnavailableError(f"bias {bv.bias:.3g} <= 0: Gamma-2 null undefined")
    if not bv.variance > 0:
        raise ModelUnavailableError("zero variance: Gamma-2 null undefined")
    return NullModel("gamma2", shape=bv.bias ** 2 / bv.variance, scale=bv.variance / bv.bias)


def parametric_pvalue(model: NullModel, statistic: float) -> float:
    """Upper-tail probability ``P(I >= statistic)`` under the null model."""
    if model.family == "gaussian":
        z = (statistic - model.loc) / (model.scale * math.sqrt(2.0))
        return float(0.5 * special.erfc(z))
    if statistic <= 0:
        return 1.0
    return float(special.gammaincc(model.shape, statistic / model.scale))


def parametric_tests(tbl: JointCountTable, statistic: float | None = None,
                     tests: Sequence[str] = PARAMETRIC_TESTS,
                     published_offsets: bool = False) -> dict[str, float | None]:
    """p-values of the requested parametric tests; ``None`` where the model is unavailable."""
    stat = cmi_plugin(tbl) if statistic is None else statistic
    bv = cmi_bias_variance(tbl, published_offsets)
    builders = {
        "gaussian": lambda: gaussian_null(bv),
        "gamma1": lambda: gamma1_null(tbl),
        "gamma2": lambda: gamma2_null(bv),
    }
    out = {}
    for name in tests:
        try:
            out[name] = parametric_pvalue(builders[name](), stat)
        except ModelUnavailableError:
            out[name] = None
    return out


# --- randomization test ----------------------------------------------------


@dataclass(frozen=True)
class SurrogateSpec:
    """``M`` surrogates with shifts drawn uniformly from a fraction range of ``L``."""

    M: int = 100
    shift_range: tuple[float, float] = (0.05, 0.95)
    seed: int | None = None

    def __post_init__(self):
        if int(self.M) != self.M or self.M < 1:
            raise InvalidSpecError(f"M must be an integer >= 1, got {self.M!r}")
        lo, hi = self.shift_range
        if not 0 <= lo <= hi <= 1:
            raise InvalidSpecError(f"bad shift range {self.shift_range}")

    def shift_bounds(self, L: int) -> tuple[int, int]:
        lo = max(1, math.ceil(self.shift_range[0] * L))
        hi = min(L - 1, math.floor(self.shift_range[1] * L))
        if lo > hi:
            raise InvalidSpecError(f"no admissible shift for L={L}")
        return lo, hi


def time_shift_surrogate(xsyms, w: int) -> np.ndarray:
    """Circularly rotate a stream so that ``out[t] = in[(t + w) mod L]``."""
    x = np.asarray(xsyms)
    L = len(x)
    if not 1 <= w < L:
        raise InvalidShiftError(f"shift w={w} outside [1, {L - 1}]")
    return np.roll(x, -w, axis=0)


def draw_shifts(L: int, spec: SurrogateSpec, rng=None) -> np.ndarray:
    """Independent shifts for the ``M`` surrogates."""
    rng = np.random.default_rng(spec.seed) if rng is None else rng
    lo, hi = spec.shift_bounds(L)
    return rng.integers(lo, hi + 1, size=spec.M)


def surrogate_pvalue(r0: int, M: int) -> float:
    """``1 - (r0 - 0.326) / (M + 1 + 0.348)`` for the rank ``r0`` of the original among M+1."""
    return 1.0 - (r0 - 0.326) / (M + 1 + 0.348)


@dataclass
class TestResult:
    """Outcome of significance tests for one statistic.

    ``p_values`` maps test names (``"surrogate"``, ``"gaussian"``, ...) to
    p-values, ``None`` where a test could not be formed.
    """

    __test__ = False  # not a pytest class

    statistic: float
    p_values: dict = field(default_factory=dict)
    r0: int | None = None
    M: int | None = None
    seed: int | None = None
    surrogate_values: np.ndarray | None = None
    degenerate: bool = False

    def to_record(self, pair=None, measure=None) -> dict:
        rec = {
            "pair": pair,
            "measure": measure,
            "statistic": float(self.statistic),
            "r0": self.r0,
            "M": self.M,
            "seed": self.seed,
        }
        for name in ("surrogate",) + PARAMETRIC_TESTS:
            p = self.p_values.get(name)
            rec[f"p_{name}"] = None if p is None else float(p)
        return rec


def randomization_test(measure: Callable, s, spec: SurrogateSpec, rng=None) -> TestResult:
    """Time-shifted surrogate test of a statistic computed on aligned streams.

    Parameters
    ----------
    measure : callable
        ``measure(streams) -> float``.
    s : object with ``x`` and ``with_driver(x)``
        A :class:`~rankte.embedding.RankSymbolSeries` or
        :class:`~rankte.estimators.EmbeddedPoints`.  Only the driver stream is
        shifted.
    spec : SurrogateSpec
    rng : numpy Generator, optional
        Overrides ``spec.seed``.

    Notes
    -----
    ``r0`` is the ascending rank of the original among all ``M + 1`` values;
    ties with surrogates count against the original, so ties never make the
    test more liberal.  When every value is identical the test is
    uninformative: ``p = 1`` and ``degenerate`` is set.
    """
    rng = np.random.default_rng(spec.seed) if rng is None else rng
    observed = float(measure(s))
    shifts = draw_shifts(len(s), spec, rng)
    values = np.array([measure(s.with_driver(time_shift_surrogate(s.x, int(w)))) for w in shifts])
    r0 = 1 + int(np.sum(values < observed))
    degenerate = bool(np.all(values == observed))
    if degenerate:
        warnings.warn("statistic constant across all surrogates; p set to 1", RuntimeWarning)
        p = 1.0
    else:
        p = surrogate_pvalue(r0, spec.M)
    return TestResult(
        statistic=observed, p_values={"surrogate": p}, r0=r0, M=spec.M,
        seed=spec.seed, surrogate_values=values, degenerate=degenerate,
    )


# --- multiple testing ------------------------------------------------------


@dataclass(frozen=True)
class FdrSpec:
    alpha: float = 0.05
    tests: int | None = None

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise InvalidSpecError(f"alpha must be in (0, 1), got {self.alpha}")


def fdr_correct(pvals, spec: FdrSpec | float = 0.05) -> np.ndarray:
    """Benjamini-Hochberg step-up: reject the k smallest p-values for the largest
    k with ``p_(k) <= alpha k / n``.

    ``n`` is ``spec.tests`` when given, else the number of p-values.
    Returns boolean rejection flags in input order.
    """
    spec = spec if isinstance(spec, FdrSpec) else FdrSpec(alpha=spec)
    p = np.asarray(pvals, dtype=float)
    if np.any((p < 0) | (p > 1)) or np.any(np.isnan(p)):
        raise InvalidValueError("p-values must lie in [0, 1]")
    n = spec.tests or len(p)
    order = np.argsort(p, kind="stable")
    thresholds = spec.alpha * np.arange(1, len(p) + 1) / n
    passing = np.nonzero(p[order] <= thresholds)[0]
    flags = np.zeros(len(p), dtype=bool)
    if len(passing):
        flags[order[: passing[-1] + 1]] = True
    return flags
