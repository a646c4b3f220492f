"""Recurrent event data: ingestion, validation, summaries and resampling.

Subjects are stored in the interval layout used by counting-process data:
each row is an interval ``(start, stop]`` whose right end point is either a
recurrent event (``event >= 1``) or the end of follow-up (``event == 0``).
The terminal indicator lives on the final interval of each subject.

All estimators consume person time, i.e. ``t - origin``; calendar time only
survives in :attr:`RecurrentDataset.date_origin` for the plotting layer.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, replace
from datetime import date, datetime
from functools import cached_property
from typing import Iterable, Mapping, Sequence, TextIO

import numpy as np

CHECK_MODES = ("hard", "soft", "none")

DEFAULT_SCHEMA = {
    "id": "id",
    "start": "t.start",
    "stop": "t.stop",
    "event": "event",
    "status": "status",
}


class DataError(ValueError):
    """Raised for malformed input that cannot be turned into a dataset."""


class ValidationError(DataError):
    """Raised when validation rejects a dataset; carries the full report."""

    def __init__(self, message: str, report: "ValidationReport"):
        super().__init__(message)
        self.report = report


@dataclass(frozen=True)
class Interval:
    start: float
    stop: float
    event_type: int = 0


@dataclass(frozen=True)
class SubjectRecord:
    id: str
    origin: float
    intervals: tuple[Interval, ...]
    terminal: bool
    covariates: tuple[float, ...] = ()

    @property
    def followup(self) -> float:
        """Follow-up time ``Y`` in person time."""
        return self.intervals[-1].stop - self.origin

    @property
    def event_times(self) -> np.ndarray:
        """Recurrent event times in person time (all event types pooled)."""
        return np.array(
            [iv.stop - self.origin for iv in self.intervals if iv.event_type >= 1],
            dtype=float,
        )

    @property
    def n_events(self) -> int:
        return sum(1 for iv in self.intervals if iv.event_type >= 1)


@dataclass(frozen=True)
class Finding:
    subject: str
    rule: str
    message: str
    action: str
    severity: str = "error"

    def as_dict(self) -> dict:
        return {
            "subject": self.subject,
            "rule": self.rule,
            "message": self.message,
            "action": self.action,
            "severity": self.severity,
        }


@dataclass(frozen=True)
class ValidationReport:
    """Outcome of a validation pass.

    ``repaired`` holds the repaired dataset when ``mode == "soft"``.
    """

    mode: str
    findings: tuple[Finding, ...] = ()
    repaired: "RecurrentDataset | None" = None

    @property
    def errors(self) -> tuple[Finding, ...]:
        return tuple(f for f in self.findings if f.severity == "error")

    @property
    def ok(self) -> bool:
        return not self.errors

    def to_text(self) -> str:
        lines = [f"check mode: {self.mode}", f"findings: {len(self.findings)}"]
        for f in self.findings:
            lines.append(
                f"[{f.severity}] subject={f.subject} rule={f.rule} "
                f"action={f.action}: {f.message}"
            )
        return "\n".join(lines) + "\n"

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "ok": self.ok,
            "findings": [f.as_dict() for f in self.findings],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


@dataclass(frozen=True)
class RecurrentDataset:
    subjects: tuple[SubjectRecord, ...]
    covariate_names: tuple[str, ...] = ()
    tau: float | None = None
    date_origin: datetime | None = None

    def __post_init__(self):
        object.__setattr__(self, "subjects", tuple(self.subjects))
        object.__setattr__(self, "covariate_names", tuple(self.covariate_names))
        ids = [s.id for s in self.subjects]
        if len(set(ids)) != len(ids):
            raise DataError("subject ids must be unique")
        p = len(self.covariate_names)
        for s in self.subjects:
            if len(s.covariates) != p:
                raise DataError(
                    f"subject {s.id}: expected {p} covariates, got {len(s.covariates)}"
                )
        ymax = max((s.followup for s in self.subjects), default=0.0)
        if self.tau is None:
            object.__setattr__(self, "tau", float(ymax))
        elif self.tau < ymax:
            raise DataError(f"tau={self.tau} is below the largest follow-up {ymax}")

    def __len__(self) -> int:
        return len(self.subjects)

    @property
    def n(self) -> int:
        return len(self.subjects)

    @property
    def p(self) -> int:
        return len(self.covariate_names)

    # Array views used by every estimator. Multi-type events are pooled.

    @cached_property
    def followup(self) -> np.ndarray:
        return np.array([s.followup for s in self.subjects], dtype=float)

    @cached_property
    def terminal(self) -> np.ndarray:
        return np.array([bool(s.terminal) for s in self.subjects], dtype=bool)

    @cached_property
    def X(self) -> np.ndarray:
        return np.array([s.covariates for s in self.subjects], dtype=float).reshape(
            self.n, self.p
        )

    @cached_property
    def event_counts(self) -> np.ndarray:
        return np.array([s.n_events for s in self.subjects], dtype=int)

    @cached_property
    def event_times(self) -> np.ndarray:
        if self.n == 0:
            return np.empty(0)
        return np.concatenate([s.event_times for s in self.subjects])

    @cached_property
    def event_subject(self) -> np.ndarray:
        return np.repeat(np.arange(self.n), self.event_counts)

    def covariate(self, name: str) -> np.ndarray:
        try:
            j = self.covariate_names.index(name)
        except ValueError:
            raise KeyError(f"unknown covariate {name!r}") from None
        return self.X[:, j]

    def take(self, indices: Sequence[int], rename: bool = False) -> "RecurrentDataset":
        """Subset (or resample) subjects by position.

        With ``rename=True`` every emitted subject gets a synthetic id so that
        repeated draws stay distinct.
        """
        subs = []
        for k, i in enumerate(indices):
            s = self.subjects[int(i)]
            if rename:
                s = replace(s, id=f"{s.id}#{k + 1}")
            subs.append(s)
        return RecurrentDataset(subs, self.covariate_names, self.tau, self.date_origin)

    def with_covariates(self, X: np.ndarray, names: Sequence[str]) -> "RecurrentDataset":
        X = np.asarray(X, dtype=float).reshape(self.n, len(names))
        subs = [replace(s, covariates=tuple(map(float, row))) for s, row in zip(self.subjects, X)]
        return RecurrentDataset(subs, tuple(names), self.tau, self.date_origin)


@dataclass(frozen=True)
class DatasetSummary:
    n: int
    total_events: int
    mean_events_per_subject: float
    terminal_proportion: float
    median_followup: float | None
    median_time_to_terminal: float | None

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "total_events": self.total_events,
            "mean_events_per_subject": self.mean_events_per_subject,
            "terminal_proportion": self.terminal_proportion,
            "median_followup": self.median_followup,
            "median_time_to_terminal": self.median_time_to_terminal,
        }

    def to_text(self) -> str:
        def fmt(v):
            return "NA" if v is None else f"{v:.4g}"

        return (
            f"Sample size:                                    {self.n}\n"
            f"Number of recurrent event observed:             {self.total_events}\n"
            f"Average number of recurrent event per subject:  {self.mean_events_per_subject:.4g}\n"
            f"Proportion of subjects with a terminal event:   {self.terminal_proportion:.4g}\n"
            f"Median follow-up time:                          {fmt(self.median_followup)}\n"
            f"Median time-to-terminal event:                  {fmt(self.median_time_to_terminal)}\n"
        )


# ---------------------------------------------------------------------------
# Validation


@dataclass
class _Row:
    start: float
    stop: float
    event: int
    status: int


def _check_subject(sid: str, rows: list[_Row], mode: str) -> tuple[list[_Row], list[Finding]]:
    """Apply the validation rules to one subject's rows.

    Returns the (possibly repaired) rows and the findings. In soft mode only
    ordering, duplicate removal and terminal-flag relocation are repaired.
    """
    if mode == "none":
        return rows, []
    soft = mode == "soft"
    findings: list[Finding] = []

    def err(rule, msg):
        findings.append(Finding(sid, rule, msg, "rejected", "error"))

    def fix(rule, msg):
        findings.append(Finding(sid, rule, msg, "repaired", "repair"))

    for r in rows:
        if not r.start < r.stop:
            err("start_not_before_stop", f"interval ({r.start}, {r.stop}] has start >= stop")
        if r.event < 0:
            err("negative_event", f"event type {r.event} at {r.stop} is negative")
        if r.status not in (0, 1):
            err("bad_status", f"status {r.status} at {r.stop} is not 0/1")

    order = sorted(range(len(rows)), key=lambda k: (rows[k].start, rows[k].stop))
    if order != list(range(len(rows))):
        if soft:
            rows = [rows[k] for k in order]
            fix("unsorted", "intervals sorted by start")
        else:
            err("unsorted", "intervals are not sorted by start")
            rows = [rows[k] for k in order]

    deduped: list[_Row] = []
    for r in rows:
        if deduped and deduped[-1].start == r.start and deduped[-1].stop == r.stop:
            if soft:
                prev = deduped[-1]
                prev.event = max(prev.event, r.event)
                prev.status = max(prev.status, r.status)
                fix("duplicate_interval", f"duplicate dropped: ({r.start}, {r.stop}]")
            else:
                err("duplicate_interval", f"duplicate interval ({r.start}, {r.stop}]")
            continue
        deduped.append(_Row(r.start, r.stop, r.event, r.status))
    rows = deduped

    for a, b in zip(rows[:-1], rows[1:]):
        if a.stop != b.start:
            err("non_contiguous", f"non-contiguous intervals: ({a.start}, {a.stop}] then ({b.start}, {b.stop}]")
            break

    for r in rows[:-1]:
        if r.event == 0:
            err("missing_event_nonfinal", f"non-final interval ending at {r.stop} carries no event")

    early = [r for r in rows[:-1] if r.status == 1]
    if early:
        if soft:
            for r in early:
                r.status = 0
            rows[-1].status = 1
            fix("terminal_not_final", "terminal flag moved to the final interval")
        else:
            err("terminal_not_final", f"terminal event marked on a non-final interval at {early[0].stop}")

    if rows and rows[-1].event >= 1 and rows[-1].status == 1:
        err(
            "event_at_terminal",
            f"final record at {rows[-1].stop} is marked both recurrent and terminal",
        )
    return rows, findings


def _subject_rows(s: SubjectRecord) -> list[_Row]:
    last = len(s.intervals) - 1
    return [
        _Row(iv.start, iv.stop, iv.event_type, int(s.terminal and k == last))
        for k, iv in enumerate(s.intervals)
    ]


def _build_subject(sid: str, rows: list[_Row], covariates: tuple[float, ...], origin=None) -> SubjectRecord:
    intervals = tuple(Interval(float(r.start), float(r.stop), int(r.event)) for r in rows)
    if origin is None:
        origin = intervals[0].start
    terminal = bool(rows[-1].status == 1) if rows else False
    return SubjectRecord(sid, float(origin), intervals, terminal, covariates)


def validate(dataset: RecurrentDataset, mode: str = "hard") -> ValidationReport:
    """Check every subject against the interval rules.

    ``hard`` reports errors, ``soft`` additionally repairs ordering,
    duplicates and misplaced terminal flags (the repaired dataset is attached
    to the report), ``none`` skips all checks.
    """
    if mode not in CHECK_MODES:
        raise ValueError(f"check mode must be one of {CHECK_MODES}, got {mode!r}")
    if mode == "none":
        return ValidationReport(mode, (), None)
    findings: list[Finding] = []
    repaired = []
    for s in dataset.subjects:
        rows, f = _check_subject(s.id, _subject_rows(s), mode)
        findings.extend(f)
        if mode == "soft":
            repaired.append(_build_subject(s.id, rows, s.covariates, s.origin))
    out = None
    if mode == "soft" and not any(f.severity == "error" for f in findings):
        out = RecurrentDataset(repaired, dataset.covariate_names, dataset.tau, dataset.date_origin)
    return ValidationReport(mode, tuple(findings), out)


# ---------------------------------------------------------------------------
# Parsing and writing


def _parse_time(text: str):
    text = text.strip()
    try:
        return float(text)
    except ValueError:
        pass
    try:
        if len(text) == 10:
            return datetime.combine(date.fromisoformat(text), datetime.min.time())
        return datetime.fromisoformat(text)
    except ValueError:
        raise DataError(f"time value {text!r} is neither numeric nor an ISO-8601 date") from None


def _parse_int(text: str, column: str) -> int:
    try:
        v = float(text)
    except ValueError:
        raise DataError(f"column {column!r}: non-numeric value {text!r}") from None
    if v != int(v):
        raise DataError(f"column {column!r}: expected an integer, got {text!r}")
    return int(v)


def parse_dataset(
    source: TextIO | str,
    schema: Mapping[str, str] | None = None,
    check_mode: str = "hard",
    tau: float | None = None,
) -> tuple[RecurrentDataset, ValidationReport]:
    """Read delimited text into a :class:`RecurrentDataset`.

    Parameters
    ----------
    source : file-like or str
        Text with a header row. Comma-delimited by default; tab-delimited
        input is detected from the header.
    schema : mapping, optional
        Overrides for the column roles ``id``, ``start``, ``stop``, ``event``
        and ``status``. When the start column is absent, each subject's
        intervals are chained from 0 in stop order.
    check_mode : {'hard', 'soft', 'none'}
        Validation mode, see :func:`validate`.

    Returns
    -------
    (RecurrentDataset, ValidationReport)

    Raises
    ------
    DataError
        Unknown schema columns, non-numeric or missing covariates.
    ValidationError
        Validation errors in hard or soft mode.
    """
    if check_mode not in CHECK_MODES:
        raise ValueError(f"check mode must be one of {CHECK_MODES}, got {check_mode!r}")
    text = source if isinstance(source, str) else source.read()
    cols = dict(DEFAULT_SCHEMA)
    explicit = dict(schema or {})
    unknown_roles = set(explicit) - set(cols)
    if unknown_roles:
        raise DataError(f"unknown schema roles: {sorted(unknown_roles)}")
    cols.update(explicit)

    lines = text.splitlines()
    while lines and not lines[0].strip():
        lines.pop(0)
    if not lines:
        empty = RecurrentDataset((), ())
        return empty, ValidationReport(check_mode, (), empty if check_mode == "soft" else None)
    header_line = lines[0]
    delim = "\t" if "\t" in header_line and "," not in header_line else ","
    reader = csv.reader(io.StringIO("\n".join(lines)), delimiter=delim)
    header = [h.strip() for h in next(reader)]

    missing = [c for role, c in explicit.items() if c not in header]
    if missing:
        raise DataError(f"schema refers to unknown columns: {missing}")
    single_stop = cols["start"] not in header
    for role in ("id", "stop", "event", "status"):
        if cols[role] not in header:
            raise DataError(f"required column {cols[role]!r} ({role}) not found in header {header}")
    used = {cols[r] for r in ("id", "start", "stop", "event", "status")}
    cov_names = [h for h in header if h not in used]
    pos = {h: k for k, h in enumerate(header)}

    raw: dict[str, list[tuple]] = {}
    covs: dict[str, tuple[float, ...]] = {}
    for lineno, rec in enumerate(reader, start=2):
        if not rec or all(not v.strip() for v in rec):
            continue
        if len(rec) != len(header):
            raise DataError(f"line {lineno}: expected {len(header)} fields, got {len(rec)}")
        sid = rec[pos[cols["id"]]].strip()
        stop = _parse_time(rec[pos[cols["stop"]]])
        start = None if single_stop else _parse_time(rec[pos[cols["start"]]])
        event = _parse_int(rec[pos[cols["event"]]], cols["event"])
        status = _parse_int(rec[pos[cols["status"]]], cols["status"])
        xs = []
        for c in cov_names:
            v = rec[pos[c]].strip()
            if v == "" or v.upper() in ("NA", "NAN"):
                raise DataError(f"line {lineno}: missing value for covariate {c!r}")
            try:
                xs.append(float(v))
            except ValueError:
                raise DataError(f"line {lineno}: non-numeric covariate {c!r} value {v!r}") from None
        xs = tuple(xs)
        if sid in covs and covs[sid] != xs:
            raise DataError(f"subject {sid}: covariates vary across rows (time-varying covariates unsupported)")
        covs[sid] = xs
        raw.setdefault(sid, []).append((start, stop, event, status))

    # dates -> fractional days from the earliest date in the file
    values = [v for rows in raw.values() for r in rows for v in r[:2] if v is not None]
    is_date = [isinstance(v, datetime) for v in values]
    date_origin = None
    if any(is_date):
        if not all(is_date):
            raise DataError("time columns mix numeric values and dates")
        if single_stop:
            raise DataError("date-valued data needs an explicit start column")
        date_origin = min(values)

        def conv(v):
            return (v - date_origin).total_seconds() / 86400.0

        raw = {
            sid: [(conv(a), conv(b), e, s) for a, b, e, s in rows] for sid, rows in raw.items()
        }

    subjects = []
    findings: list[Finding] = []
    for sid, rows in raw.items():
        if single_stop:
            rows = sorted(rows, key=lambda r: r[1])
            chained, prev = [], 0.0
            for _, stop, e, s in rows:
                chained.append((prev, stop, e, s))
                prev = stop
            rows = chained
        rr = [_Row(float(a), float(b), e, s) for a, b, e, s in rows]
        rr, f = _check_subject(sid, rr, check_mode)
        findings.extend(f)
        subjects.append(_build_subject(sid, rr, covs[sid]))

    report = ValidationReport(check_mode, tuple(findings))
    if report.errors:
        raise ValidationError(
            f"{len(report.errors)} validation error(s); first: {report.errors[0].message}", report
        )
    ds = RecurrentDataset(subjects, cov_names, tau, date_origin)
    if check_mode == "soft":
        report = replace(report, repaired=ds)
    return ds, report


def read_dataset(path, schema=None, check_mode="hard", tau=None) -> tuple[RecurrentDataset, ValidationReport]:
    with open(path, newline="") as fh:
        return parse_dataset(fh, schema, check_mode, tau)


def _fmt(v: float) -> str:
    return repr(float(v))


def write_dataset(dataset: RecurrentDataset, stream: TextIO | None = None) -> str:
    """Write ``dataset`` in the id/t.start/t.stop/event/status layout."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["id", "t.start", "t.stop", "event", "status", *dataset.covariate_names])
    for s in dataset.subjects:
        last = len(s.intervals) - 1
        xs = [_fmt(x) for x in s.covariates]
        for k, iv in enumerate(s.intervals):
            status = 1 if (s.terminal and k == last) else 0
            w.writerow([s.id, _fmt(iv.start), _fmt(iv.stop), iv.event_type, status, *xs])
    out = buf.getvalue()
    if stream is not None:
        stream.write(out)
    return out


def from_arrays(
    ids: Iterable,
    event_times: Sequence[Sequence[float]],
    followup: Sequence[float],
    terminal: Sequence[bool],
    X=None,
    covariate_names: Sequence[str] | None = None,
    origin: Sequence[float] | None = None,
    tau: float | None = None,
) -> RecurrentDataset:
    """Assemble a dataset from per-subject event-time lists.

    An event time equal to the follow-up end marks the final interval as a
    recurrent event.
    """
    ids = [str(i) for i in ids]
    n = len(ids)
    if X is None:
        X = np.zeros((n, 0))
    X = np.asarray(X, dtype=float)
    X = X.reshape(n, X.shape[-1] if X.ndim == 2 else (X.size // n if n else 0))
    if covariate_names is None:
        covariate_names = [f"x{j + 1}" for j in range(X.shape[1])]
    subs = []
    for i in range(n):
        o = 0.0 if origin is None else float(origin[i])
        times = sorted(float(t) for t in event_times[i])
        y = float(followup[i])
        ivs, prev = [], o
        for t in times:
            ivs.append(Interval(prev, o + t, 1))
            prev = o + t
        if not times or times[-1] < y:
            ivs.append(Interval(prev, o + y, 0))
        subs.append(SubjectRecord(ids[i], o, tuple(ivs), bool(terminal[i]), tuple(map(float, X[i]))))
    return RecurrentDataset(subs, tuple(covariate_names), tau)


# ---------------------------------------------------------------------------
# Summaries, resampling, stratification


def summarize(dataset: RecurrentDataset) -> DatasetSummary:
    """Descriptive statistics of the kind printed for a recurrent event object.

    ``median_time_to_terminal`` is the sample median of the follow-up times of
    subjects whose follow-up ended with a terminal event.
    """
    n = dataset.n
    if n == 0:
        return DatasetSummary(0, 0, 0.0, 0.0, None, None)
    y = dataset.followup
    total = int(dataset.event_counts.sum())
    term = dataset.terminal
    return DatasetSummary(
        n=n,
        total_events=total,
        mean_events_per_subject=total / n,
        terminal_proportion=float(term.mean()),
        median_followup=float(np.median(y)),
        median_time_to_terminal=float(np.median(y[term])) if term.any() else None,
    )


def resample_clusters(dataset: RecurrentDataset, rng_seed) -> RecurrentDataset:
    """Draw ``n`` subjects with replacement (cluster bootstrap sample).

    ``rng_seed`` may be an int, a :class:`numpy.random.SeedSequence` or a
    :class:`numpy.random.Generator`.
    """
    if dataset.n == 0:
        raise DataError("cannot resample an empty dataset")
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)
    idx = rng.integers(0, dataset.n, size=dataset.n)
    return dataset.take(idx, rename=True)


def stratify(dataset: RecurrentDataset, covariate: str, max_levels: int = 20) -> dict[float, RecurrentDataset]:
    """Partition subjects by the distinct values of one covariate."""
    x = dataset.covariate(covariate)
    levels = np.unique(x)
    if len(levels) > max_levels:
        raise DataError(
            f"covariate {covariate!r} has {len(levels)} distinct values (cap {max_levels})"
        )
    out = {}
    for lv in levels:
        idx = np.flatnonzero(x == lv)
        out[float(lv)] = dataset.take(idx)
    return out


def level_label(value: float) -> str:
    return str(int(value)) if float(value).is_integer() else repr(float(value))


def isclose_dataset(a: RecurrentDataset, b: RecurrentDataset, tol: float = 1e-12) -> bool:
    """Field-by-field comparison with times compared to ``tol``."""
    if a.covariate_names != b.covariate_names or a.n != b.n:
        return False
    for s, t in zip(a.subjects, b.subjects):
        if s.id != t.id or s.terminal != t.terminal or len(s.intervals) != len(t.intervals):
            return False
        if not math.isclose(s.origin, t.origin, abs_tol=tol):
            return False
        if any(not math.isclose(x, y, abs_tol=tol) for x, y in zip(s.covariates, t.covariates)):
            return False
        for u, v in zip(s.intervals, t.intervals):
            if u.event_type != v.event_type:
                return False
            if abs(u.start - v.start) > tol or abs(u.stop - v.stop) > tol:
                return False
    return True
