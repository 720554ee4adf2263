"""All-pairs causality analysis and Monte Carlo experiment engine."""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import logging
import platform
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .embedding import EmbeddingSpec, MultivariateSeries, build_symbol_series, read_csv
from .errors import ConfigError, EmbeddingRangeError, RankTEError
from .estimators import KnnSpec, build_count_table, cmi_from_symbols, embed_points
from .inference import (
    PARAMETRIC_TESTS,
    FdrSpec,
    SurrogateSpec,
    TestResult,
    fdr_correct,
    parametric_tests,
    randomization_test,
)
from .simulators import (
    HenonSpec,
    LinearSystemSpec,
    LorenzSpec,
    TrendSpec,
    add_stochastic_trend,
    detrend,
    gen_coupled_henon,
    gen_coupled_lorenz,
    gen_linear_system,
)

log = logging.getLogger(__name__)

MEASURES = ("PTERV", "PSTE", "PTE")
TESTS = ("surrogate",) + PARAMETRIC_TESTS
SYSTEMS = {
    "henon": (HenonSpec, gen_coupled_henon),
    "lorenz": (LorenzSpec, gen_coupled_lorenz),
    "linear": (LinearSystemSpec, gen_linear_system),
}
DETREND_METHODS = ("none", "polynomial", "moving_average")

__all__ = [
    "ExperimentConfig",
    "PairResult",
    "RejectionTable",
    "MonteCarloResult",
    "analyze_all_pairs",
    "apply_fdr",
    "generate",
    "load_data",
    "ordered_pairs",
    "run_realization",
    "run_monte_carlo",
    "run_coupling_sweep",
    "emit_outputs",
    "emit_sweep",
    "format_rejection_table",
    "config_from_mapping",
    "parse_config_file",
    "MEASURES",
    "TESTS",
]


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything that determines an analysis or experiment run.

    The data come either from ``csv_path`` or from the simulator named by
    ``system`` with keyword parameters ``system_params``.  ``pairs`` limits
    the analysis (and the FDR family) to the given ordered 0-based pairs;
    by default all ``K(K-1)`` pairs are used.
    """

    measures: tuple[str, ...] = MEASURES
    tests: tuple[str, ...] = TESTS
    embedding: EmbeddingSpec = field(default_factory=EmbeddingSpec)
    knn: KnnSpec = field(default_factory=KnnSpec)
    surrogate: SurrogateSpec = field(default_factory=SurrogateSpec)
    fdr: FdrSpec = field(default_factory=FdrSpec)
    realizations: int = 1
    seed: int = 0
    system: str | None = None
    system_params: dict = field(default_factory=dict)
    csv_path: str | None = None
    trend: TrendSpec | None = None
    detrend: str = "none"
    detrend_order: int = 0
    pairs: tuple[tuple[int, int], ...] | None = None
    published_offsets: bool = False
    outdir: str | None = None
    n_jobs: int = 1

    def __post_init__(self):
        measures = tuple(m.upper() for m in self.measures)
        tests = tuple(t.lower() for t in self.tests)
        if not measures:
            raise ConfigError("at least one measure is required")
        if not tests:
            raise ConfigError("at least one test is required")
        bad = [m for m in measures if m not in MEASURES] + [t for t in tests if t not in TESTS]
        if bad:
            raise ConfigError(f"unknown measure/test: {', '.join(bad)}")
        if self.realizations < 1:
            raise ConfigError("realizations must be >= 1")
        if self.system is not None and self.system not in SYSTEMS:
            raise ConfigError(f"unknown system {self.system!r}; choose from {sorted(SYSTEMS)}")
        if self.detrend not in DETREND_METHODS:
            raise ConfigError(f"unknown detrend method {self.detrend!r}")
        object.__setattr__(self, "measures", measures)
        object.__setattr__(self, "tests", tests)
        if self.pairs is not None:
            object.__setattr__(self, "pairs", tuple((int(i), int(j)) for i, j in self.pairs))

    def system_spec(self):
        if self.system is None:
            raise ConfigError("no generator configured")
        spec_cls = SYSTEMS[self.system][0]
        names = {f.name for f in dataclasses.fields(spec_cls)}
        unknown = set(self.system_params) - names
        if unknown:
            raise ConfigError(f"unknown {self.system} parameters: {sorted(unknown)}")
        return spec_cls(**self.system_params)

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out["pairs"] = None if self.pairs is None else [list(p) for p in self.pairs]
        return out


@dataclass
class PairResult:
    pair: tuple[int, int]
    label: str
    measure: str
    result: TestResult
    rejected: dict = field(default_factory=dict)

    def record(self) -> dict:
        rec = self.result.to_record(self.label, self.measure)
        rec["rejected"] = {t: bool(v) for t, v in sorted(self.rejected.items())}
        return rec


# --- seeding ---------------------------------------------------------------


def _derived_seed(master: int, *key: int) -> int:
    """Deterministic 63-bit seed for a position in the experiment tree."""
    ss = np.random.SeedSequence(entropy=master, spawn_key=tuple(int(k) for k in key))
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))


_DATA, _SURR = 0, 1


# --- analysis --------------------------------------------------------------


def _pair_label(data: MultivariateSeries, i: int, j: int) -> str:
    return f"{data.labels[i]}->{data.labels[j]}"


def _analyze_pair(data, i, j, measure, cfg: ExperimentConfig, seed: int) -> TestResult:
    conf = [c for c in range(data.n_vars) if c not in (i, j)]
    surr_spec = dataclasses.replace(cfg.surrogate, seed=seed)
    if measure == "PTE":
        streams = embed_points(data, i, j, conf, cfg.embedding, cfg.knn)
        fn = type(streams).cmi
    else:
        mode = "terv" if measure == "PTERV" else "ste"
        streams = build_symbol_series(data, i, j, conf, cfg.embedding, mode)
        fn = cmi_from_symbols

    if "surrogate" in cfg.tests:
        res = randomization_test(fn, streams, surr_spec)
    else:
        res = TestResult(statistic=fn(streams), seed=seed)
    if measure != "PTE":
        wanted = [t for t in cfg.tests if t in PARAMETRIC_TESTS]
        if wanted:
            tbl = build_count_table(streams)
            res.p_values.update(parametric_tests(tbl, res.statistic, wanted, cfg.published_offsets))
    return res


def ordered_pairs(k: int) -> tuple[tuple[int, int], ...]:
    """All ordered pairs, each ``i -> j`` (i < j) followed by its reverse."""
    return tuple(p for i in range(k) for j in range(i + 1, k) for p in ((i, j), (j, i)))


def analyze_all_pairs(data: MultivariateSeries, cfg: ExperimentConfig, realization: int = 0) -> list[PairResult]:
    """Test every ordered pair ``i -> j`` conditioned on all other variables.

    FDR flags are computed per (measure, test) family over the analyzed
    pairs.  Returns one :class:`PairResult` per pair and measure, ordered by
    pair then measure.
    """
    spec = cfg.embedding
    if data.n_samples < spec.min_length() + 1:
        raise ConfigError(
            f"series of length {data.n_samples} too short: need N >= {spec.min_length() + 1} "
            f"for m={spec.m}, tau={spec.tau}, T={spec.T}"
        )
    k = data.n_vars
    pairs = cfg.pairs or ordered_pairs(k)
    for i, j in pairs:
        if i == j or not (0 <= i < k and 0 <= j < k):
            raise ConfigError(f"invalid pair ({i}, {j}) for K={k}")
    results = []
    for i, j in pairs:
        for measure in cfg.measures:
            seed = _derived_seed(cfg.seed, _SURR, realization, i, j, MEASURES.index(measure))
            try:
                res = _analyze_pair(data, i, j, measure, cfg, seed)
            except EmbeddingRangeError as exc:
                raise ConfigError(str(exc)) from exc
            results.append(PairResult((i, j), _pair_label(data, i, j), measure, res))
    apply_fdr(results, cfg)
    return results


def apply_fdr(results: Sequence[PairResult], cfg: ExperimentConfig) -> None:
    """Fill ``rejected`` flags in place; unavailable p-values never reject."""
    for measure in cfg.measures:
        group = [r for r in results if r.measure == measure]
        for test in cfg.tests:
            if measure == "PTE" and test != "surrogate":
                continue
            p = [r.result.p_values.get(test) for r in group]
            flags = fdr_correct([1.0 if v is None else v for v in p], cfg.fdr)
            for r, flag in zip(group, flags):
                r.rejected[test] = bool(flag)


# --- Monte Carlo -----------------------------------------------------------


def generate(cfg: ExperimentConfig, realization: int = 0):
    """Realization ``realization`` of the configured system, with trend and detrending applied."""
    data_seed = _derived_seed(cfg.seed, _DATA, realization)
    rng = np.random.default_rng(data_seed)
    sim = SYSTEMS[cfg.system][1](cfg.system_spec(), rng)
    data = sim.data
    if cfg.trend is not None:
        data = add_stochastic_trend(data, cfg.trend, rng)
    data = detrend(data, cfg.detrend, cfg.detrend_order)
    return data, sim.edges, data_seed


def load_data(cfg: ExperimentConfig) -> MultivariateSeries:
    data = read_csv(cfg.csv_path)
    if cfg.trend is not None:
        data = add_stochastic_trend(data, cfg.trend, _derived_seed(cfg.seed, _DATA, 0))
    return detrend(data, cfg.detrend, cfg.detrend_order)


def run_realization(cfg: ExperimentConfig, r: int) -> dict:
    """Generate and analyze realization ``r``; returns a JSON-ready record."""
    t0 = time.perf_counter()
    data, edges, data_seed = generate(cfg, r)
    results = analyze_all_pairs(data, cfg, r)
    log.info("realization %d done in %.1fs", r, time.perf_counter() - t0)
    return {
        "realization": r,
        "data_seed": data_seed,
        "labels": list(data.labels),
        "edges": sorted([list(e) for e in edges]),
        "results": [pr.record() for pr in results],
    }


@dataclass
class RejectionTable:
    """FDR rejection counts per (pair, measure, test) out of ``R`` realizations."""

    R: int
    counts: dict = field(default_factory=dict)
    pairs: list = field(default_factory=list)

    def get(self, pair: str, measure: str, test: str) -> int:
        return self.counts[(pair, measure, test)]

    def rows(self):
        for (pair, measure, test), n in self.counts.items():
            yield {"pair": pair, "measure": measure, "test": test, "rejections": n, "R": self.R}

    @classmethod
    def from_records(cls, records: Sequence[dict], cfg: ExperimentConfig) -> "RejectionTable":
        table = cls(R=len(records))
        for rec in records:
            for res in rec["results"]:
                if res["pair"] not in table.pairs:
                    table.pairs.append(res["pair"])
                for test, flag in res["rejected"].items():
                    key = (res["pair"], res["measure"], test)
                    table.counts[key] = table.counts.get(key, 0) + int(flag)
        order = {p: n for n, p in enumerate(table.pairs)}
        table.counts = dict(sorted(
            table.counts.items(),
            key=lambda kv: (order[kv[0][0]], MEASURES.index(kv[0][1]), TESTS.index(kv[0][2])),
        ))
        return table


@dataclass
class MonteCarloResult:
    config: ExperimentConfig
    table: RejectionTable
    records: list

    def statistics(self, pair: str, measure: str) -> np.ndarray:
        return np.array([
            res["statistic"] for rec in self.records for res in rec["results"]
            if res["pair"] == pair and res["measure"] == measure
        ])


def _load_partial(outdir: Path, cfg: ExperimentConfig) -> dict[int, dict]:
    manifest, records = outdir / "manifest.json", outdir / "realizations.jsonl"
    if not (manifest.exists() and records.exists()):
        return {}
    old = json.loads(manifest.read_text())
    if old.get("config") != _jsonable(cfg.to_dict()):
        log.warning("existing manifest in %s has a different config; not resuming", outdir)
        return {}
    done = {}
    for line in records.read_text().splitlines():
        if line.strip():
            rec = json.loads(line)
            done[rec["realization"]] = rec
    return done


def run_monte_carlo(cfg: ExperimentConfig, resume: bool = False) -> MonteCarloResult:
    """Analyze ``cfg.realizations`` seeded realizations and count FDR rejections.

    With ``cfg.outdir`` set, outputs are written when the run completes.  If
    a realization fails, the completed ones are written with a manifest
    marked ``"failed"`` before the error propagates.  With ``resume`` the
    realizations recorded in an existing output directory of the same
    config are reused.
    """
    cfg.system_spec()
    done = _load_partial(Path(cfg.outdir), cfg) if (resume and cfg.outdir) else {}
    todo = [r for r in range(cfg.realizations) if r not in done]
    records = dict(done)
    try:
        if cfg.n_jobs > 1 and len(todo) > 1:
            with ProcessPoolExecutor(max_workers=cfg.n_jobs) as pool:
                for rec in pool.map(run_realization, [cfg] * len(todo), todo):
                    records[rec["realization"]] = rec
        else:
            for r in todo:
                records[r] = run_realization(cfg, r)
    except Exception:
        if cfg.outdir:
            partial = [records[r] for r in sorted(records)]
            emit_outputs(MonteCarloResult(cfg, RejectionTable.from_records(partial, cfg), partial),
                         cfg.outdir, status="failed")
        raise
    ordered = [records[r] for r in range(cfg.realizations)]
    result = MonteCarloResult(cfg, RejectionTable.from_records(ordered, cfg), ordered)
    if cfg.outdir:
        emit_outputs(result, cfg.outdir)
    return result


def run_coupling_sweep(cfg: ExperimentConfig, values: Sequence[float], param: str = "C") -> list[dict]:
    """Repeat the Monte Carlo experiment over a parameter grid.

    ``param`` is a system parameter (e.g. ``"C"``) or ``"P"`` for the
    moving-average detrending order.  Returns plot-ready rows with the mean
    measure value and the rejection count per pair, measure and test.
    """
    if not len(values):
        raise ConfigError("sweep needs at least one value")
    rows = []
    for v in values:
        if param == "P":
            point = dataclasses.replace(
                cfg, detrend="moving_average" if v else "none", detrend_order=int(v), outdir=None)
        else:
            point = dataclasses.replace(cfg, system_params={**cfg.system_params, param: v}, outdir=None)
        res = run_monte_carlo(point)
        for pair in res.table.pairs:
            for measure in cfg.measures:
                mean = float(np.mean(res.statistics(pair, measure)))
                for test in cfg.tests:
                    key = (pair, measure, test)
                    if key in res.table.counts:
                        rows.append({
                            "param": param, "value": v, "pair": pair, "measure": measure,
                            "mean_statistic": mean, "test": test,
                            "rejections": res.table.counts[key], "R": res.table.R,
                        })
    if cfg.outdir:
        emit_sweep(rows, cfg.outdir)
    return rows


# --- outputs ---------------------------------------------------------------


def _jsonable(obj):
    return json.loads(json.dumps(obj, default=_json_default))


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (tuple, set, frozenset)):
        return list(o)
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def emit_outputs(result: MonteCarloResult, outdir, status: str = "complete") -> dict[str, Path]:
    """Write ``rejections.csv``, ``realizations.jsonl`` and ``manifest.json``.

    File contents depend only on the config and master seed.
    """
    if not result.records and status == "complete":
        raise ConfigError("no results to write")
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "table": out / "rejections.csv",
        "records": out / "realizations.jsonl",
        "manifest": out / "manifest.json",
    }
    buf = io.StringIO()
    writer = csv.DictWriter(buf, ["pair", "measure", "test", "rejections", "R"], lineterminator="\n")
    writer.writeheader()
    writer.writerows(result.table.rows())
    paths["table"].write_text(buf.getvalue())
    paths["records"].write_text(
        "".join(json.dumps(rec, default=_json_default, sort_keys=True) + "\n" for rec in result.records)
    )
    manifest = {
        "status": status,
        "config": _jsonable(result.config.to_dict()),
        "master_seed": result.config.seed,
        "completed_realizations": [rec["realization"] for rec in result.records],
        "data_seeds": [rec["data_seed"] for rec in result.records],
        "versions": {
            "rankte": __version__,
            "numpy": np.__version__,
            "scipy": __import__("scipy").__version__,
            "python": platform.python_version(),
        },
    }
    paths["manifest"].write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return paths


def emit_sweep(rows: list[dict], outdir) -> Path:
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "sweep.csv"
    fields = ["param", "value", "pair", "measure", "mean_statistic", "test", "rejections", "R"]
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fields, lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    path.write_text(buf.getvalue())
    return path


_TEST_NAMES = {"surrogate": "Surrogate", "gaussian": "Gaussian", "gamma1": "Gamma-1", "gamma2": "Gamma-2"}


def format_rejection_table(blocks: dict[str, RejectionTable]) -> str:
    """Plain-text table: one row per pair, one column per (measure, test).

    Each entry of ``blocks`` becomes a titled block, e.g.
    ``{"time series with slow drifts": ..., "after detrending": ...}``.
    """
    lines = []
    first = next(iter(blocks.values()))
    columns = []
    for measure in MEASURES:
        for test in TESTS:
            if any((p, measure, test) in first.counts for p in first.pairs):
                columns.append((measure, test))
    head1 = f"{'':<14}" + "".join(f"{m:>12}" for m, _ in columns)
    head2 = f"{'':<14}" + "".join(f"{_TEST_NAMES[t]:>12}" for _, t in columns)
    rule = "-" * len(head1)
    lines += [head1, head2]
    for title, table in blocks.items():
        lines += [rule, f"{title} (R={table.R})", rule]
        for pair in table.pairs:
            cells = "".join(f"{table.counts.get((pair, m, t), ''):>12}" for m, t in columns)
            lines.append(f"{pair:<14}{cells}")
    lines.append(rule)
    return "\n".join(lines) + "\n"


# --- configuration parsing -------------------------------------------------


def parse_config_file(path) -> dict[str, str]:
    """Read ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


_SYSTEM_KEYS = {"K", "C", "N", "a", "b", "c", "d", "transient", "dt"}


def _num(value: str):
    try:
        return int(value)
    except ValueError:
        return float(value)


def _list(value) -> tuple[str, ...]:
    if isinstance(value, (list, tuple)):
        return tuple(value)
    return tuple(v.strip() for v in str(value).split(",") if v.strip())


def config_from_mapping(mapping: dict) -> ExperimentConfig:
    """Build a config from flat string keys as used by config files and the CLI."""
    m = {k: v for k, v in mapping.items() if v is not None}
    try:
        kwargs = {}
        if "measures" in m:
            kwargs["measures"] = _list(m.pop("measures"))
        if "tests" in m:
            kwargs["tests"] = _list(m.pop("tests"))
        kwargs["embedding"] = EmbeddingSpec(
            m=int(m.pop("m", 2)), tau=int(m.pop("tau", 1)), T=int(m.pop("T", 1)))
        kwargs["knn"] = KnnSpec(k=int(m.pop("k", 5)))
        kwargs["surrogate"] = SurrogateSpec(M=int(m.pop("M", 100)))
        kwargs["fdr"] = FdrSpec(alpha=float(m.pop("alpha", 0.05)))
        kwargs["realizations"] = int(m.pop("realizations", 1))
        kwargs["seed"] = int(m.pop("seed", 0))
        kwargs["n_jobs"] = int(m.pop("n_jobs", 1))
        for key in ("system", "csv_path", "outdir", "detrend"):
            if key in m:
                kwargs[key] = str(m.pop(key))
        if "input" in m:
            kwargs["csv_path"] = str(m.pop("input"))
        if "out" in m:
            kwargs["outdir"] = str(m.pop("out"))
        if "detrend_order" in m:
            kwargs["detrend_order"] = int(m.pop("detrend_order"))
        if "trend" in m:
            mult = float(m.pop("trend"))
            kwargs["trend"] = TrendSpec(sd_multiplier=mult, smoothing=int(m.pop("trend_smoothing", 100)))
        if "published_offsets" in m:
            kwargs["published_offsets"] = str(m.pop("published_offsets")).lower() in ("1", "true", "yes")
        if "pairs" in m:
            kwargs["pairs"] = tuple(
                tuple(int(v) for v in p.split("-")) for p in _list(m.pop("pairs")))
        params = {k: _num(str(m.pop(k))) for k in list(m) if k in _SYSTEM_KEYS}
        if params:
            kwargs["system_params"] = params
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    except RankTEError as exc:
        raise ConfigError(str(exc)) from exc
    if m:
        raise ConfigError(f"unknown configuration keys: {sorted(m)}")
    return ExperimentConfig(**kwargs)
