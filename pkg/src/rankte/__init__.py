"""Rank-vector transfer entropies for direct causality in multivariate time series."""

__version__ = "0.1.0"

from .embedding import (  # noqa: E402
    EmbeddingSpec,
    MultivariateSeries,
    RankSymbolSeries,
    build_symbol_series,
    read_csv,
    write_csv,
)
from .estimators import (  # noqa: E402
    JointCountTable,
    KnnSpec,
    build_count_table,
    cmi_plugin,
    knn_cmi,
    pste,
    pte,
    pterv,
    ste,
    te,
    terv,
)
from .inference import (  # noqa: E402
    FdrSpec,
    SurrogateSpec,
    TestResult,
    fdr_correct,
    parametric_tests,
    randomization_test,
)

__all__ = [
    "EmbeddingSpec",
    "MultivariateSeries",
    "RankSymbolSeries",
    "build_symbol_series",
    "read_csv",
    "write_csv",
    "JointCountTable",
    "KnnSpec",
    "build_count_table",
    "cmi_plugin",
    "knn_cmi",
    "pste",
    "pte",
    "pterv",
    "ste",
    "te",
    "terv",
    "FdrSpec",
    "SurrogateSpec",
    "TestResult",
    "fdr_correct",
    "parametric_tests",
    "randomization_test",
]
