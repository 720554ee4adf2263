import itertools
from math import factorial

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from rankte.embedding import (
    EmbeddingSpec,
    MultivariateSeries,
    build_symbol_series,
    delay_embed,
    future_response_ranks,
    permutation_from_index,
    permutation_index,
    rank_encode,
    read_csv,
    ste_shifted_symbol,
    write_csv,
)
from rankte.errors import EmbeddingRangeError, InvalidSpecError, InvalidValueError


def test_delay_embed_examples():
    assert delay_embed([1, 2, 3, 4], EmbeddingSpec(m=2, tau=1), 1).tolist() == [2, 1]
    assert delay_embed([1, 2, 3, 4, 5], EmbeddingSpec(m=3, tau=2), 4).tolist() == [5, 3, 1]
    assert delay_embed([4, 5, 6], EmbeddingSpec(m=1), 2).tolist() == [6]


def test_delay_embed_out_of_range():
    with pytest.raises(EmbeddingRangeError):
        delay_embed([1, 2, 3], EmbeddingSpec(m=3, tau=2), 3)
    with pytest.raises(EmbeddingRangeError):
        delay_embed([1, 2, 3], EmbeddingSpec(m=2), 5)


def test_rank_encode_examples():
    assert rank_encode([0.5, -1.2, 3.3]).tolist() == [2, 1, 3]
    assert rank_encode([1.0, 1.0, 0.2]).tolist() == [2, 3, 1]
    assert rank_encode([7.7]).tolist() == [1]


def test_rank_encode_rejects_non_finite():
    with pytest.raises(InvalidValueError):
        rank_encode([1.0, np.nan])
    with pytest.raises(InvalidValueError):
        rank_encode([])


def _rank_by_rule(v):
    """The tie rule written out directly."""
    return [
        1 + sum(u < vj for u in v) + sum(v[i] == vj for i in range(j))
        for j, vj in enumerate(v)
    ]


@given(st.lists(st.integers(-3, 3), min_size=1, max_size=8))
def test_rank_encode_matches_tie_rule(values):
    v = [float(u) for u in values]
    assert rank_encode(v).tolist() == _rank_by_rule(v)


def test_permutation_index_examples():
    assert permutation_index([1, 2, 3]) == 0
    assert permutation_index([3, 2, 1]) == 5
    assert permutation_index([2, 1]) == 1


@pytest.mark.parametrize("n", range(1, 7))
def test_permutation_index_is_lexicographic_bijection(n):
    # itertools yields permutations in lexicographic order
    for idx, perm in enumerate(itertools.permutations(range(1, n + 1))):
        assert permutation_index(perm) == idx
        assert permutation_from_index(idx, n).tolist() == list(perm)


def test_permutation_index_rejects_non_permutation():
    with pytest.raises(InvalidValueError):
        permutation_index([1, 1, 2])
    with pytest.raises(InvalidValueError):
        permutation_index([0, 1])


def test_future_response_ranks_examples():
    spec = EmbeddingSpec(m=2, tau=1, T=1)
    # (y_{t-1}, y_t, y_{t+1}) = (0.1, 0.5, 0.3): y_{t+1} ranks 2nd -> code 1
    assert future_response_ranks([0.1, 0.5, 0.3], spec, 1) == 1
    # largest future value takes rank m+1, the maximal code m
    assert future_response_ranks([0.1, 0.5, 0.9], spec, 1) == 2


def test_future_codes_enumerate_all_tails():
    """Every (m+T)-permutation tail maps to a distinct code in 0..prod(m+i)-1."""
    for m, T in [(2, 1), (2, 2), (3, 2), (2, 3)]:
        spec = EmbeddingSpec(m=m, T=T)
        codes = set()
        for perm in itertools.permutations(range(m + T)):
            # past values in reversed time order form the delay vector
            series = list(reversed(perm[:m])) + list(perm[m:])
            codes.add(future_response_ranks(series, spec, m - 1))
        card = np.prod([m + i for i in range(1, T + 1)])
        assert codes == set(range(card))


def test_future_response_ranks_range_error():
    with pytest.raises(EmbeddingRangeError):
        future_response_ranks([1.0, 2.0, 3.0], EmbeddingSpec(m=2, T=2), 1)


def test_ste_shifted_symbol():
    spec = EmbeddingSpec(m=2, tau=1, T=1)
    y = [0.3, 0.9, 0.1, 0.4]
    # ranks of (y_{t+1}, y_t) = (0.1, 0.9) -> [1, 2] -> identity
    assert ste_shifted_symbol(y, spec, 1) == 0
    assert ste_shifted_symbol(y, spec, 0) == 1
    increasing = np.arange(10.0)
    s3 = EmbeddingSpec(m=3)
    assert {ste_shifted_symbol(increasing, s3, t) for t in range(2, 9)} == {
        permutation_index([3, 2, 1])
    }


def _toy(n=6, k=2, seed=0):
    rng = np.random.default_rng(seed)
    return MultivariateSeries(rng.normal(size=(n, k)))


def test_build_symbol_series_shapes():
    s = build_symbol_series(_toy(6, 2), 0, 1, (), EmbeddingSpec(m=2, tau=1, T=1))
    assert len(s) == 4 and s.z is None
    assert s.cardinalities == (3, 2, 2, 1)
    s4 = build_symbol_series(_toy(50, 4), 0, 1, (2, 3), EmbeddingSpec(m=2))
    assert s4.cardinalities[3] == 4
    assert s4.z.max() < 4
    ste_mode = build_symbol_series(_toy(50, 3), 0, 1, (2,), EmbeddingSpec(m=3), mode="ste")
    assert ste_mode.cardinalities == (6, 6, 6, 6)


def test_build_symbol_series_matches_pointwise_ops():
    data = _toy(40, 3, seed=3)
    spec = EmbeddingSpec(m=3, tau=2, T=2)
    s = build_symbol_series(data, 0, 1, (2,), spec)
    ste_s = build_symbol_series(data, 0, 1, (2,), spec, mode="ste")
    x, y, z = data.values.T
    for r in range(len(s)):
        t = s.t0 + r
        assert s.yT[r] == future_response_ranks(y, spec, t)
        assert s.x[r] == permutation_index(rank_encode(delay_embed(x, spec, t)))
        assert s.y[r] == permutation_index(rank_encode(delay_embed(y, spec, t)))
        assert s.z[r] == permutation_index(rank_encode(delay_embed(z, spec, t)))
        assert ste_s.yT[r] == ste_shifted_symbol(y, spec, t)
    assert len(s) == 40 - 4 - 2


def test_build_symbol_series_errors():
    with pytest.raises(EmbeddingRangeError):
        build_symbol_series(_toy(3, 2), 0, 1, (), EmbeddingSpec(m=3))
    with pytest.raises(InvalidSpecError):
        build_symbol_series(_toy(10, 3), 0, 0, (2,))
    with pytest.raises(InvalidSpecError):
        build_symbol_series(_toy(10, 3), 0, 1, (1,))


def test_joint_cardinality_overflow_rejected():
    data = _toy(200, 9)
    with pytest.raises(InvalidSpecError):
        build_symbol_series(data, 0, 1, tuple(range(2, 9)), EmbeddingSpec(m=6))


@settings(max_examples=40, deadline=None)
@given(
    # a 0.1 grid keeps distinct inputs distinct after each map in float arithmetic
    arrays(np.int64, (30, 3), elements=st.integers(-50, 50)),
    st.sampled_from([np.exp, np.arctan, lambda v: v ** 3 + v, lambda v: 2 * v - 7]),
    st.sampled_from(["terv", "ste"]),
)
def test_rank_invariance_under_monotone_maps(grid, g, mode):
    values = grid / 10.0
    data = MultivariateSeries(values)
    spec = EmbeddingSpec(m=2, T=1)
    a = build_symbol_series(data, 0, 1, (2,), spec, mode)
    b = build_symbol_series(MultivariateSeries(g(values)), 0, 1, (2,), spec, mode)
    for name in ("yT", "x", "y", "z"):
        assert np.array_equal(getattr(a, name), getattr(b, name))


@pytest.mark.parametrize("m", range(2, 7))
def test_state_count_inequality(m):
    for T in range(1, m):
        assert factorial(m + T) > factorial(m) * factorial(m) // factorial(m - T)


def test_encoding_is_deterministic_with_ties():
    values = np.array([[1.0, 1.0, 2.0], [1.0, 2.0, 2.0], [3.0, 1.0, 1.0], [1.0, 1.0, 1.0]] * 5)
    data = MultivariateSeries(values)
    a = build_symbol_series(data, 0, 1, (2,), EmbeddingSpec(m=3))
    b = build_symbol_series(data, 0, 1, (2,), EmbeddingSpec(m=3))
    assert np.array_equal(a.x, b.x) and np.array_equal(a.yT, b.yT)
    # an all-equal window ranks in order of appearance: identity
    assert permutation_index(rank_encode([1.0, 1.0, 1.0])) == 0


def test_multivariate_series_validation():
    with pytest.raises(InvalidValueError, match="row 1, column 0"):
        MultivariateSeries(np.array([[1.0, 2.0], [np.inf, 0.0]]))
    with pytest.raises(InvalidValueError):
        MultivariateSeries(np.ones((5, 1)))
    data = MultivariateSeries(np.ones((3, 2)), ("a", "b"))
    assert data.index("b") == 1
    with pytest.raises(KeyError):
        data.index("c")


def test_csv_roundtrip(tmp_path):
    data = _toy(12, 3)
    path = tmp_path / "d.csv"
    write_csv(data, path)
    back = read_csv(path)
    assert back.labels == data.labels
    assert np.array_equal(back.values, data.values)


def test_csv_rejects_bad_cells(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("a,b\n1.0,2.0\n3.0,nan\n")
    with pytest.raises(InvalidValueError, match=r"row 2, column 'b'"):
        read_csv(path)
    path.write_text("a,b\n1.0,2.0\n1,000.5,3\n")
    with pytest.raises(InvalidValueError, match="row 2"):
        read_csv(path)
    path.write_text("a,b\n1.0,x\n")
    with pytest.raises(InvalidValueError, match="not a number"):
        read_csv(path)
