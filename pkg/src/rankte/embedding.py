"""Delay embedding and rank (ordinal pattern) symbolization.

All time indices in this module are 0-based.  A delay vector at time ``t``
is ``[x[t], x[t - tau], ..., x[t - (m-1) tau]]`` and is defined for
``t >= (m-1) tau``.

Two encodings of the future of the response are supported:

* ``"terv"``: the ranks of ``y[t+1], ..., y[t+T]`` inside the augmented
  vector ``[y_t, y[t+1], ..., y[t+T]]`` (``prod_{i=1..T} (m+i)`` symbols).
* ``"ste"``: the ordinal pattern of the delay vector at ``t + T``
  (``m!`` symbols).

Ties are always broken by order of appearance: among equal components the
one appearing first in the vector gets the smaller rank.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from math import factorial, prod
from typing import Sequence

import numpy as np

from .errors import EmbeddingRangeError, InvalidSpecError, InvalidValueError

__all__ = [
    "MultivariateSeries",
    "EmbeddingSpec",
    "RankSymbolSeries",
    "delay_embed",
    "embed_matrix",
    "rank_encode",
    "rank_matrix",
    "permutation_index",
    "permutation_from_index",
    "lehmer_codes",
    "future_response_ranks",
    "future_rank_codes",
    "ste_shifted_symbol",
    "build_symbol_series",
    "read_csv",
    "write_csv",
]

_INT64_MAX = np.iinfo(np.int64).max


@dataclass(frozen=True)
class MultivariateSeries:
    """N samples of K variables, stored time-major as an (N, K) array."""

    values: np.ndarray
    labels: tuple[str, ...] = ()

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.ndim != 2:
            raise InvalidValueError("values must be a 2-D array (time x variables)")
        n, k = values.shape
        if n < 1 or k < 2:
            raise InvalidValueError(f"need N >= 1 and K >= 2, got shape {values.shape}")
        bad = np.argwhere(~np.isfinite(values))
        if len(bad):
            row, col = bad[0]
            raise InvalidValueError(
                f"non-finite value {values[row, col]!r} at row {row}, column {col}"
            )
        labels = tuple(self.labels) if self.labels else tuple(f"X{i + 1}" for i in range(k))
        if len(labels) != k:
            raise InvalidValueError(f"{len(labels)} labels for {k} columns")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "labels", labels)

    @property
    def n_samples(self) -> int:
        return self.values.shape[0]

    @property
    def n_vars(self) -> int:
        return self.values.shape[1]

    def column(self, key: int | str) -> np.ndarray:
        return self.values[:, self.index(key)]

    def index(self, key: int | str) -> int:
        if isinstance(key, str):
            try:
                return self.labels.index(key)
            except ValueError:
                raise KeyError(f"no variable labelled {key!r}") from None
        if not -self.n_vars <= key < self.n_vars:
            raise KeyError(f"column {key} out of range for K={self.n_vars}")
        return int(key) % self.n_vars


@dataclass(frozen=True)
class EmbeddingSpec:
    """Embedding dimension ``m``, delay ``tau`` and future horizon ``T``."""

    m: int = 2
    tau: int = 1
    T: int = 1

    def __post_init__(self):
        for name in ("m", "tau", "T"):
            value = getattr(self, name)
            if int(value) != value or value < 1:
                raise InvalidSpecError(f"{name} must be an integer >= 1, got {value!r}")

    @property
    def span(self) -> int:
        """Samples spanned by one delay vector minus one, ``(m-1) tau``."""
        return (self.m - 1) * self.tau

    def n_valid(self, n: int) -> int:
        """Number of time indices with a full past and future, ``N - (m-1)tau - T``."""
        return n - self.span - self.T

    def min_length(self) -> int:
        return self.span + self.T + 1


@dataclass(frozen=True)
class RankSymbolSeries:
    """Aligned integer symbol streams for future response, driver, response and confounders.

    ``z`` is ``None`` when there are no confounders.  Cardinalities are
    ``(B1, B2, B3, B4)`` with ``B4 = 1`` when ``z`` is absent.
    """

    yT: np.ndarray
    x: np.ndarray
    y: np.ndarray
    z: np.ndarray | None
    cardinalities: tuple[int, int, int, int]
    t0: int = 0
    mode: str = "terv"
    spec: EmbeddingSpec = field(default_factory=EmbeddingSpec)

    def __post_init__(self):
        streams = [self.yT, self.x, self.y] + ([] if self.z is None else [self.z])
        lengths = {len(s) for s in streams}
        if len(lengths) != 1:
            raise InvalidValueError(f"symbol streams differ in length: {sorted(lengths)}")
        for s, card in zip(streams, self.cardinalities):
            if len(s) and (s.min() < 0 or s.max() >= card):
                raise InvalidValueError("symbol outside its declared cardinality")
        if prod(self.cardinalities) > _INT64_MAX:
            raise InvalidSpecError(
                f"joint cardinality {prod(self.cardinalities)} overflows 64-bit symbols"
            )

    def __len__(self) -> int:
        return len(self.x)

    def with_driver(self, x: np.ndarray) -> "RankSymbolSeries":
        """Copy with the driver stream replaced (used for surrogates)."""
        return RankSymbolSeries(
            yT=self.yT, x=np.asarray(x), y=self.y, z=self.z,
            cardinalities=self.cardinalities, t0=self.t0, mode=self.mode, spec=self.spec,
        )


def _as_series(series) -> np.ndarray:
    arr = np.asarray(series, dtype=float)
    if arr.ndim != 1:
        raise InvalidValueError("expected a 1-D series")
    if not np.all(np.isfinite(arr)):
        raise InvalidValueError("series contains non-finite values")
    return arr


def delay_embed(series, spec: EmbeddingSpec, t: int) -> np.ndarray:
    """Return the delay vector ``[x[t], x[t-tau], ..., x[t-(m-1)tau]]``.

    >>> delay_embed([1, 2, 3, 4, 5], EmbeddingSpec(m=3, tau=2), 4)
    array([5., 3., 1.])
    """
    x = np.asarray(series, dtype=float)
    if t < spec.span or t >= len(x):
        raise EmbeddingRangeError(
            f"t={t} outside [{spec.span}, {len(x) - 1}] for m={spec.m}, tau={spec.tau}"
        )
    return x[t - np.arange(spec.m) * spec.tau]


def embed_matrix(series, m: int, tau: int = 1) -> np.ndarray:
    """All delay vectors of a series as rows; row ``r`` is the vector at ``t = r + (m-1)tau``."""
    x = np.asarray(series, dtype=float)
    span = (m - 1) * tau
    if len(x) <= span:
        raise EmbeddingRangeError(f"series of length {len(x)} too short for m={m}, tau={tau}")
    n_rows = len(x) - span
    cols = [x[span - j * tau: span - j * tau + n_rows] for j in range(m)]
    return np.column_stack(cols)


def rank_matrix(vectors: np.ndarray) -> np.ndarray:
    """Row-wise ranks (1-based), ties resolved by first appearance.

    A stable argsort keeps equal values in their original order, so applying
    it twice gives exactly the first-appearance rule.
    """
    v = np.asarray(vectors, dtype=float)
    order = np.argsort(v, axis=-1, kind="stable")
    return np.argsort(order, axis=-1, kind="stable") + 1


def rank_encode(v) -> np.ndarray:
    """Ranks of the components of ``v`` in ascending order.

    >>> rank_encode([1.0, 1.0, 0.2])
    array([2, 3, 1])
    """
    arr = np.asarray(v, dtype=float)
    if arr.ndim != 1 or arr.size == 0:
        raise InvalidValueError("rank_encode expects a non-empty 1-D vector")
    if not np.all(np.isfinite(arr)):
        raise InvalidValueError("rank_encode: non-finite component")
    return rank_matrix(arr)


def lehmer_codes(ranks: np.ndarray) -> np.ndarray:
    """Lehmer-code index of each row of a rank matrix (identity -> 0).

    The index coincides with the position of the permutation in
    lexicographic order.
    """
    r = np.atleast_2d(np.asarray(ranks))
    n = r.shape[1]
    out = np.zeros(r.shape[0], dtype=np.int64)
    for j in range(n - 1):
        smaller_later = np.sum(r[:, j + 1:] < r[:, j:j + 1], axis=1)
        out += smaller_later * factorial(n - 1 - j)
    return out


def permutation_index(r: Sequence[int]) -> int:
    """Bijective index in ``0 .. len(r)! - 1`` of a permutation of ``1..len(r)``."""
    arr = np.asarray(r)
    if arr.ndim != 1 or arr.size == 0 or not np.array_equal(np.sort(arr), np.arange(1, arr.size + 1)):
        raise InvalidValueError(f"{list(r)!r} is not a permutation of 1..{arr.size}")
    return int(lehmer_codes(arr)[0])


def permutation_from_index(index: int, n: int) -> np.ndarray:
    """Inverse of :func:`permutation_index`."""
    if not 0 <= index < factorial(n):
        raise InvalidValueError(f"index {index} out of range for n={n}")
    remaining = list(range(1, n + 1))
    out = []
    for j in range(n):
        f = factorial(n - 1 - j)
        digit, index = divmod(index, f)
        out.append(remaining.pop(digit))
    return np.array(out)


def _future_radices(m: int, T: int) -> list[int]:
    return [m + T - j for j in range(T)]


def future_cardinality(m: int, T: int) -> int:
    return prod(m + i for i in range(1, T + 1))


def future_rank_codes(tail_ranks: np.ndarray, m: int) -> np.ndarray:
    """Mixed-radix code of the last ``T`` ranks of an ``(m+T)``-permutation.

    Digit ``j`` is ``r_j - 1 - #{i < j : r_i < r_j}`` with radix ``m + T - j``,
    the most significant digit first.  This is a bijection onto
    ``0 .. prod_{i=1..T}(m+i) - 1``.
    """
    r = np.atleast_2d(np.asarray(tail_ranks))
    T = r.shape[1]
    out = np.zeros(r.shape[0], dtype=np.int64)
    for j, radix in enumerate(_future_radices(m, T)):
        digit = r[:, j] - 1 - np.sum(r[:, :j] < r[:, j:j + 1], axis=1)
        out = out * radix + digit
    return out


def future_response_ranks(series, spec: EmbeddingSpec, t: int) -> int:
    """Symbol of the ranks of ``y[t+1..t+T]`` within ``[y_t, y[t+1], ..., y[t+T]]``."""
    y = _as_series(series)
    if t + spec.T >= len(y):
        raise EmbeddingRangeError(f"t + T = {t + spec.T} beyond series end {len(y) - 1}")
    augmented = np.concatenate([delay_embed(y, spec, t), y[t + 1: t + spec.T + 1]])
    ranks = rank_encode(augmented)
    return int(future_rank_codes(ranks[spec.m:], spec.m)[0])


def ste_shifted_symbol(series, spec: EmbeddingSpec, t: int) -> int:
    """Ordinal-pattern symbol of the delay vector at ``t + T``."""
    y = _as_series(series)
    return permutation_index(rank_encode(delay_embed(y, spec, t + spec.T)))


def _pattern_stream(x: np.ndarray, spec: EmbeddingSpec) -> np.ndarray:
    """Permutation symbols for every t in ``[span, N - T)``."""
    n_valid = spec.n_valid(len(x))
    emb = embed_matrix(x, spec.m, spec.tau)[:n_valid]
    return lehmer_codes(rank_matrix(emb))


def _future_stream(y: np.ndarray, spec: EmbeddingSpec, mode: str) -> np.ndarray:
    n_valid = spec.n_valid(len(y))
    if mode == "ste":
        emb = embed_matrix(y, spec.m, spec.tau)[spec.T: spec.T + n_valid]
        return lehmer_codes(rank_matrix(emb))
    emb = embed_matrix(y, spec.m, spec.tau)[:n_valid]
    t = np.arange(spec.span, spec.span + n_valid)
    fut = np.column_stack([y[t + h] for h in range(1, spec.T + 1)])
    ranks = rank_matrix(np.hstack([emb, fut]))
    return future_rank_codes(ranks[:, spec.m:], spec.m)


def build_symbol_series(
    data: MultivariateSeries,
    driver: int | str,
    response: int | str,
    confounders: Sequence[int | str] = (),
    spec: EmbeddingSpec | None = None,
    mode: str = "terv",
) -> RankSymbolSeries:
    """Symbolize one driver/response pair and its confounders.

    Parameters
    ----------
    data : MultivariateSeries
    driver, response : column index or label
    confounders : columns to condition on, joined in the given order
    spec : EmbeddingSpec
    mode : {"terv", "ste"}
        Encoding of the future response.

    Returns
    -------
    RankSymbolSeries
        Streams of length ``N - (m-1)tau - T`` aligned on ``t0 = (m-1)tau``.
    """
    spec = spec or EmbeddingSpec()
    if mode not in ("terv", "ste"):
        raise InvalidSpecError(f"unknown mode {mode!r}")
    ix, iy = data.index(driver), data.index(response)
    iz = [data.index(c) for c in confounders]
    if len({ix, iy, *iz}) != 2 + len(iz):
        raise InvalidSpecError("driver, response and confounders must be distinct columns")
    n = data.n_samples
    if spec.n_valid(n) < 1:
        raise EmbeddingRangeError(
            f"N={n} too short; need at least {spec.min_length()} samples "
            f"for m={spec.m}, tau={spec.tau}, T={spec.T}"
        )
    b_pat = factorial(spec.m)
    b_fut = b_pat if mode == "ste" else future_cardinality(spec.m, spec.T)
    b_z = b_pat ** len(iz)
    if b_fut * b_pat * b_pat * b_z > _INT64_MAX:
        raise InvalidSpecError("joint symbol cardinality overflows 64-bit integers")

    yT = _future_stream(data.values[:, iy], spec, mode)
    x = _pattern_stream(data.values[:, ix], spec)
    y = _pattern_stream(data.values[:, iy], spec)
    z = None
    if iz:
        z = np.zeros(len(x), dtype=np.int64)
        for c in iz:
            z = z * b_pat + _pattern_stream(data.values[:, c], spec)
    for s in (yT, x, y) + (() if z is None else (z,)):
        s.setflags(write=False)
    return RankSymbolSeries(
        yT=yT, x=x, y=y, z=z, cardinalities=(b_fut, b_pat, b_pat, b_z),
        t0=spec.span, mode=mode, spec=spec,
    )


def read_csv(path) -> MultivariateSeries:
    """Read a header-labelled CSV (one row per time step) into a series.

    Non-numeric or non-finite cells raise :class:`InvalidValueError` naming
    the 1-based data row and the column label.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise InvalidValueError(f"{path}: empty file") from None
        rows = []
        for lineno, row in enumerate(reader, start=1):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise InvalidValueError(
                    f"{path}: row {lineno} has {len(row)} cells, header has {len(header)}"
                )
            vals = []
            for label, cell in zip(header, row):
                try:
                    v = float(cell)
                except ValueError:
                    raise InvalidValueError(
                        f"{path}: row {lineno}, column {label!r}: not a number: {cell!r}"
                    ) from None
                if not np.isfinite(v):
                    raise InvalidValueError(
                        f"{path}: row {lineno}, column {label!r}: non-finite value {cell!r}"
                    )
                vals.append(v)
            rows.append(vals)
    if not rows:
        raise InvalidValueError(f"{path}: no data rows")
    return MultivariateSeries(np.array(rows), tuple(header))


def write_csv(data: MultivariateSeries, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(data.labels)
        for row in data.values:
            writer.writerow([repr(float(v)) for v in row])
