"""Monte-Carlo experiments, CSV ingestion/emission, and timing sweeps."""

from __future__ import annotations

import csv
import enum
import math
import os
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .core import Dataset, Method, fit_global
from .errors import BudgetExceeded, ConfigError, DsdrError, MissingColumn, NonNumericCell, ParseError
from .metrics import METRIC_FIELDS, r_squared_columns, trace_correlation
from .protocol.approx import Aggregation, FixedK, VarianceThreshold
from .protocol.runner import ProtocolMode, Transport, run_protocol
from .simgen import (
    DEFAULT_SIGMA,
    PartitionKind,
    PartitionScheme,
    PredictorMode,
    gen_dataset,
    min_dimension,
    partition,
    predictor_cov,
    structural_dimension,
    true_basis,
)

BUDGET_ENV = "DSDR_BUDGET_CELLS"
DEFAULT_BUDGET_CELLS = 50_000_000

ECHO_COLUMNS = (
    "method", "mode", "model", "xmode", "n", "p", "H", "S", "K", "K_local", "alpha",
    "aggregation", "partition", "back_transform", "seed", "transport",
)
FIXED_COLUMNS = ("rep",) + METRIC_FIELDS + ("error_flag",)


class RunMode(str, enum.Enum):
    GLOBAL = "global"
    EXACT = "exact"
    APPROX_HOMOGENEOUS = "approx-homo"
    APPROX_HETEROGENEOUS = "approx-hetero"

    @classmethod
    def _missing_(cls, value):
        aliases = {"approx-homogeneous": cls.APPROX_HOMOGENEOUS, "approx-heterogeneous": cls.APPROX_HETEROGENEOUS}
        return aliases.get(value)


_DEFAULT_PARTITION = {
    RunMode.GLOBAL: PartitionKind.HOMO_EQUAL,
    RunMode.EXACT: PartitionKind.HOMO_EQUAL,
    RunMode.APPROX_HOMOGENEOUS: PartitionKind.HOMO_EQUAL,
    RunMode.APPROX_HETEROGENEOUS: PartitionKind.HETERO_EQUAL,
}


@dataclass(frozen=True)
class ExperimentConfig:
    """One cell of the experiment grid.

    ``K`` is the number of final directions and ``K_local`` the number of
    eigenpairs each worker ships; both default to the model's structural
    dimension (1 for external data). ``alpha`` replaces ``K_local`` with the
    cumulative-variance rule. ``back_transform`` maps the heterogeneous
    average through the pooled covariance (workers also send their scatter).
    """

    method: Method = Method.SIR
    mode: RunMode = RunMode.GLOBAL
    model: int | None = 1
    xmode: PredictorMode = PredictorMode.STANDARD
    n: int = 1000
    p: int = 10
    H: int = 10
    S: int = 5
    K: int | None = None
    K_local: int | None = None
    alpha: float | None = None
    aggregation: Aggregation = Aggregation.SPECTRUM
    partition: PartitionKind | None = None
    back_transform: bool = False
    reps: int = 1
    seed: int = 0
    transport: Transport = Transport.INPROC
    port: int = 0
    sigma: float = DEFAULT_SIGMA
    input_path: str | None = None
    response: str | int | None = None
    standardize: bool = False

    def __post_init__(self):
        try:
            object.__setattr__(self, "method", Method(self.method))
            object.__setattr__(self, "mode", RunMode(self.mode))
            object.__setattr__(self, "xmode", PredictorMode(self.xmode))
            object.__setattr__(self, "aggregation", Aggregation(self.aggregation))
            object.__setattr__(self, "transport", Transport(self.transport))
            kind = _DEFAULT_PARTITION[self.mode] if self.partition is None else PartitionKind(self.partition)
            object.__setattr__(self, "partition", kind)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if self.mode is RunMode.EXACT and self.method is not Method.SIR:
            raise ConfigError("exact mode requires method sir")
        if self.reps < 1:
            raise ConfigError("reps must be at least 1")
        if self.input_path is None:
            if self.model not in range(1, 9):
                raise ConfigError(f"model must be 1..8, got {self.model}")
            for name in ("n", "p"):
                if getattr(self, name) < 1:
                    raise ConfigError(f"{name} must be positive")
            if self.p < min_dimension(self.model):
                raise ConfigError(f"model {self.model} needs p >= {min_dimension(self.model)}")
        for name in ("H", "S"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")
        if self.H < 2:
            raise ConfigError("H must be at least 2")
        for name in ("K", "K_local"):
            v = getattr(self, name)
            if v is not None and v < 1:
                raise ConfigError(f"{name} must be positive")
        if self.alpha is not None and not 0 < self.alpha <= 1:
            raise ConfigError("alpha must be in (0, 1]")
        if self.sigma <= 0 or self.seed < 0 or self.port < 0:
            raise ConfigError("sigma must be positive; seed and port nonnegative")
        if self.partition is PartitionKind.HETERO_UNEQUAL and self.S != 5:
            raise ConfigError("hetero-unequal uses the five default proportions, so S must be 5")

    @property
    def simulated(self) -> bool:
        return self.input_path is None

    @property
    def d(self) -> int:
        return structural_dimension(self.model) if self.simulated else 1

    @property
    def k_final(self) -> int:
        return self.K if self.K is not None else self.d

    def local_rule(self):
        if self.alpha is not None:
            return VarianceThreshold(self.alpha)
        return FixedK(self.K_local if self.K_local is not None else self.d)

    def echo(self) -> dict:
        distributed = self.mode is not RunMode.GLOBAL
        return {
            "method": self.method.value, "mode": self.mode.value,
            "model": self.model if self.simulated else os.path.basename(self.input_path),
            "xmode": self.xmode.value if self.simulated else "",
            "n": self.n, "p": self.p, "H": self.H, "S": self.S if distributed else 1,
            "K": self.k_final,
            "K_local": "" if self.alpha is not None or not distributed else self.local_rule().K,
            "alpha": "" if self.alpha is None else self.alpha,
            "aggregation": self.aggregation.value, "partition": self.partition.value if distributed else "",
            "back_transform": int(self.back_transform), "seed": self.seed, "transport": self.transport.value,
        }


@dataclass
class ResultTable:
    """Rows keyed by column name; ``columns`` fixes the output order."""

    columns: list[str] = field(default_factory=lambda: list(ECHO_COLUMNS + FIXED_COLUMNS))
    rows: list[dict] = field(default_factory=list)

    def data_rows(self) -> list[dict]:
        return [r for r in self.rows if r["rep"] not in ("mean", "std")]

    def aggregate_row(self, kind: str) -> dict | None:
        return next((r for r in self.rows if r["rep"] == kind), None)

    @property
    def successes(self) -> int:
        return sum(1 for r in self.data_rows() if not r["error_flag"])

    def mean(self, column: str) -> float:
        row = self.aggregate_row("mean")
        return math.nan if row is None else float(row[column])

    def add_column(self, name: str):
        if name not in self.columns:
            self.columns.append(name)


def aggregate_rows(rows, columns, echo: dict) -> list[dict]:
    """Mean and sample std rows over the successful repetitions.

    Every numeric column outside the config echo is aggregated; the
    ``successes`` column holds the number of repetitions that went in.
    """
    good = [r for r in rows if not r["error_flag"]]
    if not good:
        return []
    numeric = [c for c in columns if c not in ECHO_COLUMNS and c not in ("rep", "error_flag", "error", "successes")]
    mean_row = dict(echo, rep="mean", error_flag=0, successes=len(good))
    std_row = dict(echo, rep="std", error_flag=0, successes=len(good))
    for c in numeric:
        vals = [float(r[c]) for r in good if r.get(c, "") != ""]
        if not vals:
            continue
        m = math.fsum(vals) / len(vals)
        mean_row[c] = m
        std_row[c] = math.sqrt(math.fsum((v - m) ** 2 for v in vals) / (len(vals) - 1)) if len(vals) > 1 else math.nan
    return [mean_row, std_row]


# --------------------------------------------------------------------------
# one repetition


@dataclass
class RepOutcome:
    beta: np.ndarray
    seconds: float
    bytes_up: int = 0
    bytes_down: int = 0


def estimate(config: ExperimentConfig, data: Dataset, rep_seed: int) -> RepOutcome:
    """Run the configured pipeline on ``data``; time covers estimation only."""
    if config.mode is RunMode.GLOBAL:
        t0 = time.perf_counter()
        est = fit_global(data, config.method, config.H, config.k_final)
        return RepOutcome(est.beta, time.perf_counter() - t0)
    shards = partition(data, PartitionScheme(config.partition, config.S), rep_seed)
    res = run_protocol(
        shards, ProtocolMode(config.mode.value), config.method, config.H,
        krule=config.local_rule(), kg_rule=FixedK(config.k_final), aggregation=config.aggregation,
        transport=config.transport, port=config.port, pool_scatter=config.back_transform,
    )
    return RepOutcome(res.estimate.beta, res.timing.simulated_parallel, res.ledger.bytes_up, res.ledger.bytes_down)


def run_experiment(config: ExperimentConfig, *, progress=None) -> ResultTable:
    """``config.reps`` repetitions with seeds ``seed + r``, plus mean/std rows.

    A repetition that raises is kept with ``error_flag = 1`` and its error
    text, and left out of the aggregates.
    """
    external = None
    if not config.simulated:
        external = load_csv(config.input_path, 0 if config.response is None else config.response,
                            config.standardize)
        config = replace(config, n=external.n, p=external.p)
    echo = config.echo()
    table = ResultTable()
    r2_cols = [f"r_squared_{j + 1}" for j in range(config.k_final)]
    for c in ("successes", *r2_cols, "error"):
        table.add_column(c)
    if config.simulated:
        b_true = true_basis(config.model, config.p)
        sigma = predictor_cov(config.xmode, config.p)
    rows = []
    for r in range(config.reps):
        rep_seed = config.seed + r
        row = dict(echo, rep=r, error_flag=0, error="")
        try:
            data = external if external is not None else gen_dataset(
                config.model, config.xmode, config.n, config.p, rep_seed, config.sigma)
            out = estimate(config, data, rep_seed)
            if config.simulated:
                tc = trace_correlation(b_true, out.beta)
                r2 = r_squared_columns(out.beta, b_true, sigma)
            else:
                tc, r2 = math.nan, [math.nan] * out.beta.shape[1]
            row.update(trace_correlation=tc, r_squared=float(np.mean(r2)), wall_time_seconds=out.seconds,
                       bytes_up=out.bytes_up, bytes_down=out.bytes_down)
            row.update(zip(r2_cols, r2))
        except (DsdrError, ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
            row.update(error_flag=1, error=f"{type(exc).__name__}: {exc}")
            for c in METRIC_FIELDS + tuple(r2_cols):
                row[c] = math.nan
        rows.append(row)
        if progress is not None:
            progress(r, row)
    table.rows = rows + aggregate_rows(rows, table.columns, echo)
    return table


# --------------------------------------------------------------------------
# CSV in and out


def _response_index(header: list[str], response_column) -> int:
    if isinstance(response_column, str) and not response_column.lstrip("-").isdigit():
        if response_column not in header:
            raise MissingColumn(f"no column named {response_column!r}", row=1, column=None)
        return header.index(response_column)
    yi = int(response_column)
    if not 0 <= yi < len(header):
        raise MissingColumn(f"column index {yi} out of range for {len(header)} columns", row=1, column=None)
    return yi


def predictor_names(path, response_column: str | int = 0) -> list[str]:
    """Header names of the predictor columns, in the order :func:`load_csv` uses."""
    with open(path, newline="") as fh:
        header = [h.strip() for h in next(csv.reader(fh), [])]
    if not header:
        raise ParseError("file is empty", row=1, column=None)
    yi = _response_index(header, response_column)
    return header[:yi] + header[yi + 1:]


def fit_directions(config: ExperimentConfig) -> tuple[list[str], np.ndarray]:
    """Estimate directions once on ``config.input_path``; returns names and the p x K basis."""
    response = 0 if config.response is None else config.response
    data = load_csv(config.input_path, response, config.standardize)
    config = replace(config, n=data.n, p=data.p)
    return predictor_names(config.input_path, response), estimate(config, data, config.seed).beta


def write_directions(path, names: list[str], beta: np.ndarray):
    """One row per predictor, one ``direction_j`` column per estimated direction."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["predictor", *(f"direction_{j + 1}" for j in range(beta.shape[1]))])
        for name, row in zip(names, beta):
            w.writerow([name, *(_fmt(v) for v in row)])


def load_csv(path, response_column: str | int = 0, standardize: bool = False) -> Dataset:
    """Read a numeric CSV with a header row into a :class:`Dataset`.

    ``response_column`` is a header name or a zero-based index; the other
    columns become predictors in file order. Rows and columns in errors are
    one-based, counting the header as row 1.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError("file is empty", row=1, column=None) from None
        header = [h.strip() for h in header]
        yi = _response_index(header, response_column)
        values = []
        for lineno, rec in enumerate(reader, start=2):
            if not rec or all(not c.strip() for c in rec):
                continue
            if len(rec) != len(header):
                raise ParseError(f"expected {len(header)} fields, found {len(rec)}", row=lineno, column=None)
            row = []
            for j, cell in enumerate(rec):
                try:
                    v = float(cell)
                except ValueError:
                    raise NonNumericCell(f"cannot parse {cell!r} as a number", row=lineno, column=j + 1) from None
                if not math.isfinite(v):
                    raise NonNumericCell(f"non-finite value {cell!r}", row=lineno, column=j + 1)
                row.append(v)
            values.append(row)
    if not values:
        raise ParseError("no data rows", row=2, column=None)
    a = np.array(values)
    y = a[:, yi]
    x = np.delete(a, yi, axis=1)
    if x.shape[1] == 0:
        raise ParseError("no predictor columns", row=1, column=None)
    if standardize:
        sd = x.std(axis=0, ddof=1) if x.shape[0] > 1 else np.ones(x.shape[1])
        sd[sd == 0] = 1.0
        x = (x - x.mean(axis=0)) / sd
    return Dataset(x, y)


def write_csv(path, x, y, names=None, response_name: str = "y"):
    """Write ``y`` then the predictor columns with 17 significant digits."""
    x = np.asarray(x, dtype=np.float64)
    names = names or [f"x{j + 1}" for j in range(x.shape[1])]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([response_name, *names])
        for yi, xi in zip(y, x):
            w.writerow([_fmt(yi), *(_fmt(v) for v in xi)])


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return "" if v is None else str(v)


def emit_results(table: ResultTable, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(table.columns)
        for row in table.rows:
            w.writerow([_fmt(row.get(c, "")) for c in table.columns])


def _parse_cell(text: str):
    for conv in (int, float):
        try:
            return conv(text)
        except ValueError:
            pass
    return text


def read_results(path) -> ResultTable:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        columns = next(reader)
        rows = [{c: _parse_cell(v) for c, v in zip(columns, rec)} for rec in reader]
    for r in rows:
        # error text and the like stay as written
        if "error" in r and not isinstance(r["error"], str):
            r["error"] = str(r["error"])
    return ResultTable(columns, rows)


# --------------------------------------------------------------------------
# timing


def budget_cells() -> int:
    raw = os.environ.get(BUDGET_ENV)
    if raw is None:
        return DEFAULT_BUDGET_CELLS
    try:
        return int(float(raw))
    except ValueError:
        raise ConfigError(f"{BUDGET_ENV} must be a number, got {raw!r}") from None


def check_budget(n: int, p: int, budget: int | None = None):
    budget = budget_cells() if budget is None else budget
    if n * p > budget:
        raise BudgetExceeded(f"n*p = {n * p} exceeds the budget of {budget} cells")


@dataclass(frozen=True)
class TimingPoint:
    mode: RunMode
    n: int
    p: int
    S: int


def time_point(config: ExperimentConfig, repeats: int = 3) -> tuple[float, float]:
    """Best-of-``repeats`` estimation time and worker-phase time for one point.

    The data are generated once (seed ``config.seed``) outside the clock.
    """
    data = gen_dataset(config.model, config.xmode, config.n, config.p, config.seed, config.sigma)
    best, best_worker = math.inf, math.inf
    for _ in range(repeats):
        if config.mode is RunMode.GLOBAL:
            t0 = time.perf_counter()
            fit_global(data, config.method, config.H, config.k_final)
            dt = time.perf_counter() - t0
            best, best_worker = min(best, dt), min(best_worker, dt)
        else:
            shards = partition(data, PartitionScheme(config.partition, config.S), config.seed)
            res = run_protocol(
                shards, ProtocolMode(config.mode.value), config.method, config.H,
                krule=config.local_rule(), kg_rule=FixedK(config.k_final), aggregation=config.aggregation,
                transport=config.transport, port=config.port, pool_scatter=config.back_transform,
            )
            best = min(best, res.timing.simulated_parallel)
            best_worker = min(best_worker, res.timing.worker_phase)
    return best, best_worker


def default_grid() -> list[TimingPoint]:
    ns = (10_000, 50_000, 100_000, 150_000, 200_000)
    pts = []
    for p in (100, 200, 500):
        for n in ns:
            pts.append(TimingPoint(RunMode.GLOBAL, n, p, 1))
            for S in (5, 10):
                pts.append(TimingPoint(RunMode.EXACT, n, p, S))
    return pts


def timing_sweep(points, base: ExperimentConfig | None = None, repeats: int = 3, budget: int | None = None,
                 progress=None) -> ResultTable:
    """Estimation time per (mode, n, p, S); points over the budget are flagged and skipped."""
    base = base or ExperimentConfig()
    table = ResultTable()
    for c in ("worker_phase_seconds", "error"):
        table.add_column(c)
    for pt in points:
        cfg = replace(base, mode=RunMode(pt.mode), n=pt.n, p=pt.p, S=pt.S, reps=1)
        row = dict(cfg.echo(), rep=0, error_flag=0, error="", trace_correlation=math.nan, r_squared=math.nan,
                   bytes_up=0, bytes_down=0)
        try:
            check_budget(pt.n, pt.p, budget)
            row["wall_time_seconds"], row["worker_phase_seconds"] = time_point(cfg, repeats)
        except DsdrError as exc:
            row.update(error_flag=1, error=f"{type(exc).__name__}: {exc}", wall_time_seconds=math.nan,
                       worker_phase_seconds=math.nan)
        table.rows.append(row)
        if progress is not None:
            progress(pt, row)
    return table
