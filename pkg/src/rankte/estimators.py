"""Entropy and conditional mutual information estimators.

Plug-in (count based) estimators operate on rank symbols and give the
rank measures STE/TERV and their partial versions.  The nearest-neighbour
estimator operates on continuous delay vectors and gives TE/PTE.

All quantities are in nats.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.spatial import cKDTree

from .embedding import (
    EmbeddingSpec,
    MultivariateSeries,
    RankSymbolSeries,
    build_symbol_series,
    embed_matrix,
)
from .errors import EmbeddingRangeError, EmptyInputError, InvalidSpecError, InvalidValueError

__all__ = [
    "JointCountTable",
    "KnnSpec",
    "EmbeddedPoints",
    "build_count_table",
    "shannon_entropy_plugin",
    "cmi_plugin",
    "cmi_from_symbols",
    "terv",
    "pterv",
    "ste",
    "pste",
    "digamma",
    "knn_cmi",
    "embed_points",
    "pte",
    "te",
    "BRUTE_FORCE_BELOW",
]

# Axis order of a joint table: future response, driver, response, confounders.
AXES = ("yT", "x", "y", "z")


@dataclass(frozen=True)
class JointCountTable:
    """Sparse 4-way contingency table over (yT, x, y, z) symbols.

    Only occupied cells are stored: ``cells[c]`` is the symbol tuple of the
    c-th cell and ``counts[c]`` its frequency.
    """

    cells: np.ndarray
    counts: np.ndarray
    cardinalities: tuple[int, int, int, int]

    @property
    def n_eff(self) -> int:
        return int(self.counts.sum())

    def marginal(self, axes: Sequence[int]) -> tuple[np.ndarray, np.ndarray]:
        """Occupied cells and counts of the marginal over the given axes."""
        axes = list(axes)
        if not axes:
            return np.zeros((1, 0), dtype=np.int64), np.array([self.n_eff])
        keys = _combine(self.cells[:, axes], [self.cardinalities[a] for a in axes])
        uniq, first, inverse = np.unique(keys, return_index=True, return_inverse=True)
        sums = np.bincount(inverse.ravel(), weights=self.counts, minlength=len(uniq))
        return self.cells[first][:, axes], np.rint(sums).astype(np.int64)

    def marginal_counts(self, axes: Sequence[int]) -> np.ndarray:
        return self.marginal(axes)[1]

    def active_states(self, axes: Sequence[int]) -> int:
        """Number of occupied states of the marginal, e.g. ``B*_{34}`` for axes (2, 3)."""
        return len(self.marginal_counts(axes))

    def as_dict(self) -> dict[tuple[int, int, int, int], int]:
        return {tuple(int(v) for v in c): int(n) for c, n in zip(self.cells, self.counts)}


def _combine(columns: np.ndarray, radices: Sequence[int]) -> np.ndarray:
    key = np.zeros(columns.shape[0], dtype=np.int64)
    for j, r in enumerate(radices):
        key = key * int(r) + columns[:, j]
    return key


def build_count_table(s: RankSymbolSeries) -> JointCountTable:
    """Tally each aligned time index of the symbol streams once."""
    if len(s) == 0:
        raise EmptyInputError("empty symbol series")
    z = s.z if s.z is not None else np.zeros(len(s), dtype=np.int64)
    cols = np.column_stack([s.yT, s.x, s.y, z]).astype(np.int64)
    uniq, idx, counts = np.unique(
        _combine(cols, s.cardinalities), return_index=True, return_counts=True
    )
    return JointCountTable(cells=cols[idx], counts=counts, cardinalities=s.cardinalities)


def _entropy(counts: np.ndarray, n: float) -> float:
    counts = np.asarray(counts, dtype=float)
    return float(np.log(n) - np.dot(counts, np.log(counts)) / n)


def shannon_entropy_plugin(counts, N: int | None = None) -> float:
    """Plug-in entropy ``-sum q_i ln q_i`` with ``q_i = n_i / N``.

    >>> round(shannon_entropy_plugin([1, 3]), 6)
    0.562335
    """
    c = np.asarray(list(counts.values()) if isinstance(counts, dict) else counts, dtype=float)
    n = c.sum() if N is None else N
    if n <= 0:
        raise EmptyInputError("entropy of an empty sample")
    if np.any(c <= 0) or not np.isclose(c.sum(), n):
        raise InvalidValueError("counts must be positive and sum to N")
    return max(_entropy(c, n), 0.0)


def cmi_plugin(tbl: JointCountTable) -> float:
    """``I(yT; x | y, z) = -H(yT,x,y,z) + H(x,y,z) + H(yT,y,z) - H(y,z)``."""
    n = tbl.n_eff
    return (
        -_entropy(tbl.counts, n)
        + _entropy(tbl.marginal_counts((1, 2, 3)), n)
        + _entropy(tbl.marginal_counts((0, 2, 3)), n)
        - _entropy(tbl.marginal_counts((2, 3)), n)
    )


def _key_entropy(keys: np.ndarray) -> float:
    counts = np.unique(keys, return_counts=True)[1]
    return _entropy(counts, len(keys))


def cmi_from_symbols(s: RankSymbolSeries) -> float:
    """Plug-in CMI straight from the symbol streams.

    Equal to ``cmi_plugin(build_count_table(s))`` up to round-off; avoids
    materializing the table and is the hot path of the randomization test.
    """
    b1, b2, b3, b4 = s.cardinalities
    cond = s.y.astype(np.int64) * b4 + (0 if s.z is None else s.z)
    fut_cond = s.yT.astype(np.int64) * (b3 * b4) + cond
    drv_cond = s.x.astype(np.int64) * (b3 * b4) + cond
    joint = s.yT.astype(np.int64) * (b2 * b3 * b4) + drv_cond
    return (
        -_key_entropy(joint)
        + _key_entropy(drv_cond)
        + _key_entropy(fut_cond)
        - _key_entropy(cond)
    )


def _rank_measure(data, driver, response, confounders, spec, mode):
    s = build_symbol_series(data, driver, response, confounders, spec or EmbeddingSpec(), mode)
    return cmi_plugin(build_count_table(s))


def terv(data: MultivariateSeries, driver, response, spec: EmbeddingSpec | None = None) -> float:
    """Transfer entropy on rank vectors, driver -> response."""
    return _rank_measure(data, driver, response, (), spec, "terv")


def pterv(data: MultivariateSeries, driver, response, confounders=(), spec: EmbeddingSpec | None = None) -> float:
    """Partial TERV conditioned on the ``confounders`` columns."""
    return _rank_measure(data, driver, response, tuple(confounders), spec, "terv")


def ste(data: MultivariateSeries, driver, response, spec: EmbeddingSpec | None = None) -> float:
    """Symbolic transfer entropy (future response as the pattern at t+T)."""
    return _rank_measure(data, driver, response, (), spec, "ste")


def pste(data: MultivariateSeries, driver, response, confounders=(), spec: EmbeddingSpec | None = None) -> float:
    return _rank_measure(data, driver, response, tuple(confounders), spec, "ste")


# --- nearest-neighbour estimator -------------------------------------------

_EULER_GAMMA = 0.57721566490153286061

# Bernoulli terms B_2n / (2n) of the asymptotic digamma series.
_DIGAMMA_ASYMPTOTIC = (
    1.0 / 12.0,
    -1.0 / 120.0,
    1.0 / 252.0,
    -1.0 / 240.0,
    1.0 / 132.0,
    -691.0 / 32760.0,
    1.0 / 12.0,
)


def digamma(x):
    """Digamma function for positive arguments.

    Shifts the argument above 10 with ``psi(x) = psi(x + 1) - 1/x`` and then
    sums the asymptotic series; absolute error is below 1e-13.  Accepts
    scalars or arrays.
    """
    arr = np.asarray(x, dtype=float)
    if np.any(~(arr > 0)):
        raise InvalidValueError("digamma is only defined here for x > 0")
    shift = np.zeros_like(arr)
    v = arr.copy()
    small = v < 10.0
    while np.any(small):
        shift[small] += 1.0 / v[small]
        v[small] += 1.0
        small = v < 10.0
    inv2 = 1.0 / (v * v)
    series = np.zeros_like(v)
    for c in reversed(_DIGAMMA_ASYMPTOTIC):
        series = (series + c) * inv2
    out = np.log(v) - 0.5 / v - series - shift
    return float(out) if np.ndim(x) == 0 else out


@dataclass(frozen=True)
class KnnSpec:
    """Neighbour count ``k``; the metric is always the maximum norm."""

    k: int = 5

    def __post_init__(self):
        if int(self.k) != self.k or self.k < 1:
            raise InvalidSpecError(f"k must be an integer >= 1, got {self.k!r}")


BRUTE_FORCE_BELOW = 256


def _as_points(a, n=None) -> np.ndarray:
    arr = np.asarray(a, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.size == 0 and n is not None:
        arr = np.zeros((n, 0))
    return arr


def _kth_distance(points: np.ndarray, k: int, method: str, tree=None) -> np.ndarray:
    if method == "brute":
        d = _chebyshev_matrix(points)
        np.fill_diagonal(d, np.inf)
        return np.partition(d, k - 1, axis=1)[:, k - 1]
    tree = tree if tree is not None else cKDTree(points)
    # k + 1 because each point is its own nearest neighbour
    dist, _ = tree.query(points, k=[k + 1], p=np.inf)
    return dist[:, 0]


def _chebyshev_matrix(points: np.ndarray) -> np.ndarray:
    if points.shape[1] == 0:
        return np.zeros((len(points), len(points)))
    return np.max(np.abs(points[:, None, :] - points[None, :, :]), axis=2)


def _count_within(points: np.ndarray, eps: np.ndarray, method: str, tree=None) -> np.ndarray:
    """Number of other points at max-norm distance strictly below ``eps[i]``."""
    n = len(points)
    if points.shape[1] == 0:
        return np.where(eps > 0, n - 1, 0)
    if method == "brute":
        d = _chebyshev_matrix(points)
        np.fill_diagonal(d, np.inf)
        return np.sum(d < eps[:, None], axis=1)
    tree = tree if tree is not None else cKDTree(points)
    radius = np.nextafter(eps, 0.0)
    counts = tree.query_ball_point(points, r=radius, p=np.inf, return_length=True) - 1
    return np.where(eps > 0, counts, 0)


def knn_cmi(
    xF,
    xD,
    xC,
    spec: KnnSpec | None = None,
    method: str = "auto",
    trees: dict | None = None,
) -> float:
    """Nearest-neighbour estimate of ``I(F; D | C)``.

    For each point the distance ``eps`` to its k-th neighbour in the joint
    (F, D, C) space is found under the maximum norm, and neighbours strictly
    closer than ``eps`` are counted in the (D, C), (F, C) and C subspaces::

        I = psi(k) - < psi(n_DC + 1) + psi(n_FC + 1) - psi(n_C + 1) >

    With an empty conditioning set this reduces to the Kraskov MI estimate.
    The result may be negative for finite samples.

    Parameters
    ----------
    xF, xD, xC : array_like, shape (n,) or (n, d)
        Point sets; ``xC`` may have zero columns or be ``None``.
    spec : KnnSpec
    method : {"auto", "tree", "brute"}
        ``"auto"`` uses brute force below ``BRUTE_FORCE_BELOW`` points.
    trees : dict, optional
        Cache of k-d trees for the (F, C) and C subspaces, keyed ``"FC"`` and
        ``"C"``.  Filled in on first use; lets repeated calls that only change
        ``xD`` skip rebuilding them.
    """
    spec = spec or KnnSpec()
    F = _as_points(xF)
    n = len(F)
    D = _as_points(xD)
    C = _as_points(xC if xC is not None else np.zeros((n, 0)), n)
    if not (len(D) == len(C) == n):
        raise InvalidValueError("point sets must have the same number of points")
    if spec.k >= n:
        raise InvalidSpecError(f"k={spec.k} must be smaller than the number of points ({n})")
    if method == "auto":
        method = "brute" if n < BRUTE_FORCE_BELOW else "tree"
    if method not in ("tree", "brute"):
        raise InvalidSpecError(f"unknown neighbour search method {method!r}")

    trees = {} if trees is None else trees
    FC = np.hstack([F, C])
    DC = np.hstack([D, C])
    joint = np.hstack([F, D, C])

    def cached(name, pts):
        if method != "tree" or pts.shape[1] == 0:
            return None
        if name not in trees:
            trees[name] = cKDTree(pts)
        return trees[name]

    eps = _kth_distance(joint, spec.k, method)
    n_dc = _count_within(DC, eps, method)
    n_fc = _count_within(FC, eps, method, cached("FC", FC))
    n_c = _count_within(C, eps, method, cached("C", C))
    return float(
        digamma(spec.k)
        - np.mean(digamma(n_dc + 1.0) + digamma(n_fc + 1.0) - digamma(n_c + 1.0))
    )


@dataclass(frozen=True)
class EmbeddedPoints:
    """Continuous delay vectors for a PTE evaluation.

    ``future`` holds ``[y[t+1], ..., y[t+T]]``, ``x`` the driver delay vectors
    and ``cond`` the response and confounder delay vectors side by side.
    Exposes the same ``x``/``with_driver`` surface as
    :class:`RankSymbolSeries` so the randomization test can shift it.
    """

    future: np.ndarray
    x: np.ndarray
    cond: np.ndarray
    knn: KnnSpec = field(default_factory=KnnSpec)
    trees: dict = field(default_factory=dict, compare=False, repr=False)

    def __len__(self) -> int:
        return len(self.x)

    def with_driver(self, x: np.ndarray) -> "EmbeddedPoints":
        # the (F, C) and C trees do not depend on the driver: share them
        return EmbeddedPoints(self.future, np.asarray(x), self.cond, self.knn, self.trees)

    def cmi(self) -> float:
        return knn_cmi(self.future, self.x, self.cond, self.knn, trees=self.trees)


def embed_points(
    data: MultivariateSeries,
    driver,
    response,
    confounders=(),
    spec: EmbeddingSpec | None = None,
    knn: KnnSpec | None = None,
) -> EmbeddedPoints:
    """Delay vectors aligned with :func:`build_symbol_series` time indices."""
    spec = spec or EmbeddingSpec()
    ix, iy = data.index(driver), data.index(response)
    iz = [data.index(c) for c in confounders]
    if len({ix, iy, *iz}) != 2 + len(iz):
        raise InvalidSpecError("driver, response and confounders must be distinct columns")
    n_valid = spec.n_valid(data.n_samples)
    if n_valid < 1:
        raise EmbeddingRangeError(f"need at least {spec.min_length()} samples, got {data.n_samples}")

    def emb(col):
        return embed_matrix(data.values[:, col], spec.m, spec.tau)[:n_valid]

    y = data.values[:, iy]
    t = np.arange(spec.span, spec.span + n_valid)
    future = np.column_stack([y[t + h] for h in range(1, spec.T + 1)])
    cond = np.hstack([emb(iy)] + [emb(c) for c in iz])
    return EmbeddedPoints(future=future, x=emb(ix), cond=cond, knn=knn or KnnSpec())


def pte(
    data: MultivariateSeries,
    driver,
    response,
    confounders=(),
    spec: EmbeddingSpec | None = None,
    knn: KnnSpec | None = None,
) -> float:
    """Partial transfer entropy ``I(y_t^T; x_t | y_t, z_t)`` by nearest neighbours."""
    return embed_points(data, driver, response, confounders, spec, knn).cmi()


def te(data: MultivariateSeries, driver, response, spec=None, knn=None) -> float:
    return pte(data, driver, response, (), spec, knn)
