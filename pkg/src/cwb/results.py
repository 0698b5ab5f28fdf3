"""Metric recording and variability statistics.

Nominal results are stored as strings, every other scale as floating
point; that distinction is enforced at the door (ScaleMismatch) so the
analysis layer can trust representations. The variability summary follows
the report convention "across% (within-min - within-max%)" with values
rounded to the nearest 5 percentage points for display; raw precision
stays available on the row object.
"""

from __future__ import annotations

import csv
import io
import math
import statistics
from dataclasses import dataclass

from .model import BenchmarkDefinition, Execution, MetricDefinition, ScaleType
from .statemachine import ExecutionEvent, ExecutionState, displayed_status
from .store import Store

ACCEPTING_STATES = {ExecutionState.RUNNING.value, ExecutionState.POSTPROCESSING.value}

CSV_HEADER = ("metric", "value", "offset_ms")


class ResultsError(Exception):
    pass


class UnknownMetric(ResultsError):
    pass


class ScaleMismatch(ResultsError):
    pass


class ExecutionNotAcceptingResults(ResultsError):
    pass


class BadHeader(ResultsError):
    pass


class RowError(ResultsError):
    def __init__(self, row: int, reason: str):
        self.row = row
        self.reason = reason
        super().__init__(f"row {row}: {reason}")


class InsufficientData(ResultsError):
    pass


class ZeroMean(ResultsError):
    pass


class ScaleUnsupported(ResultsError):
    pass


@dataclass(frozen=True)
class Observation:
    execution_id: str
    metric: str
    value: str | float
    offset_ms: int | None
    recorded_at: float


@dataclass(frozen=True)
class VariabilityRow:
    group: str
    across_cv_pct: float
    within_cv_min_pct: float
    within_cv_max_pct: float
    executions: int

    def rendered(self) -> str:
        return render_variability(self.across_cv_pct, self.within_cv_min_pct, self.within_cv_max_pct)


def round_to_5(value: float) -> int:
    """Nearest multiple of 5, half away from zero."""
    return int(math.floor(value / 5.0 + 0.5) * 5)


def render_variability(across: float, within_min: float, within_max: float) -> str:
    return f"{round_to_5(across)}% ({round_to_5(within_min)}-{round_to_5(within_max)}%)"


def coefficient_of_variation(values: list[float]) -> float:
    """Sample standard deviation (n-1) in percent of the mean."""
    if len(values) < 2:
        raise InsufficientData(f"need at least 2 values, got {len(values)}")
    mean = statistics.fmean(values)
    if mean == 0:
        raise ZeroMean("coefficient of variation undefined for zero mean")
    return statistics.stdev(values) / mean * 100.0


def _coerce(metric: MetricDefinition, value, offset_ms) -> tuple[str | None, float | None]:
    """Returns (value_text, value_num) in the metric's storage representation."""
    if offset_ms is not None:
        if metric.scale_type is ScaleType.NOMINAL:
            raise ScaleMismatch(f"offset_ms is meaningless for nominal metric '{metric.name}'")
        if not isinstance(offset_ms, int) or isinstance(offset_ms, bool) or offset_ms < 0:
            raise ScaleMismatch(f"offset_ms must be a non-negative integer, got {offset_ms!r}")
    if metric.scale_type is ScaleType.NOMINAL:
        if not isinstance(value, str):
            raise ScaleMismatch(
                f"metric '{metric.name}' is nominal; value must be a string, got {value!r}")
        return value, None
    if isinstance(value, bool):
        raise ScaleMismatch(f"metric '{metric.name}' is {metric.scale_type.value}; got a boolean")
    if isinstance(value, (int, float)):
        numeric = float(value)
    elif isinstance(value, str):
        try:
            numeric = float(value)
        except ValueError:
            raise ScaleMismatch(
                f"metric '{metric.name}' is {metric.scale_type.value}; "
                f"value {value!r} is not numeric") from None
    else:
        raise ScaleMismatch(f"metric '{metric.name}' value {value!r} is not numeric")
    if not math.isfinite(numeric):
        raise ScaleMismatch(f"metric '{metric.name}' value must be finite")
    return None, numeric


def sort_key(metric: MetricDefinition):
    """Numeric metrics sort numerically, nominal lexicographically."""
    if metric.scale_type is ScaleType.NOMINAL:
        return lambda obs: obs["value_text"] or ""
    return lambda obs: obs["value_num"] if obs["value_num"] is not None else float("-inf")


class ResultsService:
    def __init__(self, store: Store):
        self.store = store

    def _metric(self, benchmark: BenchmarkDefinition, name: str) -> MetricDefinition:
        metric = benchmark.metric(name)
        if metric is None:
            raise UnknownMetric(f"metric '{name}' not defined on benchmark '{benchmark.id}'")
        return metric

    @staticmethod
    def _check_accepting(execution: Execution) -> None:
        if execution.state not in ACCEPTING_STATES and not execution.dev_mode:
            raise ExecutionNotAcceptingResults(
                f"execution {execution.id} in state {execution.state} does not accept results")

    def record(self, benchmark: BenchmarkDefinition, execution: Execution, metric_name: str,
               value, offset_ms: int | None, recorded_at: float,
               batch_id: str | None = None) -> Observation:
        metric = self._metric(benchmark, metric_name)
        self._check_accepting(execution)
        value_text, value_num = _coerce(metric, value, offset_ms)
        self.store.record_observations(
            execution.id, [(metric_name, value_text, value_num, offset_ms, recorded_at)],
            batch_id=batch_id)
        return Observation(execution.id, metric_name,
                           value_text if value_text is not None else value_num,
                           offset_ms, recorded_at)

    def ingest_csv(self, benchmark: BenchmarkDefinition, execution: Execution, payload: str,
                   recorded_at: float, batch_id: str | None = None) -> int:
        """All-or-nothing batch: either every row is stored or none.

        Returns the stored row count; a duplicate batch id returns the
        original count without storing anything again.
        """
        self._check_accepting(execution)
        reader = csv.reader(io.StringIO(payload))
        try:
            header = next(reader)
        except StopIteration:
            raise BadHeader("empty payload") from None
        header = [h.strip() for h in header]
        if header != list(CSV_HEADER) and header != list(CSV_HEADER[:2]):
            raise BadHeader(f"header must be 'metric,value,offset_ms', got {','.join(header)!r}")
        has_offset = len(header) == 3
        rows: list[tuple] = []
        for row_no, row in enumerate(reader, start=1):
            if not row:
                continue
            if len(row) != len(header):
                raise RowError(row_no, f"expected {len(header)} columns, got {len(row)}")
            metric_name = row[0].strip()
            try:
                metric = self._metric(benchmark, metric_name)
            except UnknownMetric as exc:
                raise RowError(row_no, str(exc)) from None
            offset_ms: int | None = None
            if has_offset and row[2].strip() != "":
                try:
                    offset_ms = int(row[2])
                except ValueError:
                    raise RowError(row_no, f"offset_ms {row[2]!r} is not an integer") from None
            try:
                value_text, value_num = _coerce(metric, row[1], offset_ms)
            except ScaleMismatch as exc:
                raise RowError(row_no, str(exc)) from None
            rows.append((metric_name, value_text, value_num, offset_ms, recorded_at))
        stored = self.store.record_observations(execution.id, rows, batch_id=batch_id)
        return -stored if stored < 0 else stored

    # -- analysis ------------------------------------------------------------

    def _clean_finished_executions(self, benchmark_id: str) -> list[Execution]:
        finished = []
        for execution in self.store.list_executions(benchmark_id=benchmark_id, terminal=True):
            if execution.state != ExecutionState.FINISHED.value:
                continue
            events = [ExecutionEvent(e["event"]) for e in self.store.get_events(execution.id)]
            if displayed_status(events) == ExecutionState.FINISHED.display():
                finished.append(execution)
        return finished

    def variability_summary(self, benchmark: BenchmarkDefinition, metric_name: str,
                            group: str | None = None) -> VariabilityRow:
        """CV across executions (over per-execution means) and the range of
        CVs within each execution's sample series."""
        metric = self._metric(benchmark, metric_name)
        if metric.scale_type not in (ScaleType.INTERVAL, ScaleType.RATIO):
            raise ScaleUnsupported(
                f"variability needs an interval or ratio metric; '{metric_name}' is "
                f"{metric.scale_type.value}")
        series: list[list[float]] = []
        for execution in self._clean_finished_executions(benchmark.id):
            values = [o["value_num"] for o in self.store.observations_for(execution.id, metric_name)
                      if o["value_num"] is not None]
            if len(values) >= 2:
                series.append(values)
        if len(series) < 2:
            raise InsufficientData(
                f"need >=2 finished executions with >=2 observations, got {len(series)}")
        within = [coefficient_of_variation(values) for values in series]
        across = coefficient_of_variation([statistics.fmean(values) for values in series])
        return VariabilityRow(group=f"{benchmark.name}/{metric_name}" if group is None else group,
                              across_cv_pct=across, within_cv_min_pct=min(within),
                              within_cv_max_pct=max(within), executions=len(series))

    def export_csv(self, execution_id: str, metric: str | None = None) -> str:
        """Same bit-exact format the ingest endpoint accepts (UTF-8, LF)."""
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for obs in self.store.observations_for(execution_id, metric):
            if obs["value_text"] is not None:
                value = obs["value_text"]
            else:
                value = repr(float(obs["value_num"]))
            offset = "" if obs["offset_ms"] is None else str(obs["offset_ms"])
            writer.writerow([obs["metric"], value, offset])
        return buffer.getvalue()
