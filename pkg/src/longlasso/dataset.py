"""Long-format longitudinal data: ingestion, lagged designs, temporal splits.

All container types are immutable after construction (arrays are marked
read-only) and safe to share across threads.  Times are integer indices;
calendar parsing is up to the caller.  No intercept is added implicitly;
add a constant feature column if one is wanted (it is penalized like any
other feature).
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np

from .errors import DataError

LAGGED_OUTCOME_NAME = "lagged_outcome"


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class SubjectSeries:
    """One subject: a d x T feature matrix and a length-T outcome vector.

    ``time_start`` records the first (integer) time label of the series
    so file round trips keep the original time axis.
    """

    id: str
    features: np.ndarray
    outcomes: np.ndarray
    time_start: int = 1

    def __post_init__(self):
        features = _frozen(np.atleast_2d(self.features))
        outcomes = _frozen(np.atleast_1d(self.outcomes))
        if features.ndim != 2 or outcomes.ndim != 1:
            raise DataError("features must be d x T and outcomes a vector")
        if features.shape[1] != outcomes.shape[0]:
            raise DataError("features and outcomes disagree on time points")
        if not np.all(np.isfinite(features)) or not np.all(np.isfinite(outcomes)):
            raise DataError(f"missing value in series for subject {self.id!r}")
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "outcomes", outcomes)


@dataclass(frozen=True)
class LongitudinalDataset:
    """Per-subject series with a common length and feature set."""

    subjects: tuple[SubjectSeries, ...]
    feature_names: tuple[str, ...]

    def __post_init__(self):
        subjects = tuple(self.subjects)
        names = tuple(str(n) for n in self.feature_names)
        if not subjects:
            raise DataError("dataset needs at least one subject")
        d, T = subjects[0].features.shape
        if d < 1:
            raise DataError("dataset needs at least one feature")
        if T < 2:
            raise DataError("dataset needs at least two time points")
        if len(names) != d:
            raise DataError("feature_names must have one entry per feature")
        ids = [s.id for s in subjects]
        if len(set(ids)) != len(ids):
            raise DataError("subject ids must be unique")
        for s in subjects:
            if s.features.shape != (d, T):
                raise DataError("unequal series length")
        object.__setattr__(self, "subjects", subjects)
        object.__setattr__(self, "feature_names", names)

    @property
    def m(self) -> int:
        return len(self.subjects)

    @property
    def d(self) -> int:
        return self.subjects[0].features.shape[0]

    @property
    def T(self) -> int:
        return self.subjects[0].features.shape[1]

    @property
    def subject_ids(self) -> tuple[str, ...]:
        return tuple(s.id for s in self.subjects)

    def subset(self, ids) -> "LongitudinalDataset":
        """Restrict to the given subject ids, keeping dataset order."""
        wanted = set(ids)
        kept = tuple(s for s in self.subjects if s.id in wanted)
        missing = wanted - {s.id for s in kept}
        if missing:
            raise DataError(f"unknown subject ids: {sorted(missing)}")
        return LongitudinalDataset(kept, self.feature_names)


@dataclass(frozen=True)
class CsvSchema:
    """Column mapping for the long-format CSV layout."""

    subject_col: str = "subject_id"
    time_col: str = "time"
    outcome_col: str = "y"
    feature_cols: tuple[str, ...] | None = None  # None: every other column


def _parse_cell(raw: str, subject: str, time: str, column: str) -> float:
    raw = raw.strip()
    if raw == "":
        raise DataError(f"missing value at ({subject},{time},{column})")
    try:
        value = float(raw)
    except ValueError:
        raise DataError(f"invalid value at ({subject},{time},{column}): {raw!r}") from None
    if math.isnan(value):
        raise DataError(f"missing value at ({subject},{time},{column})")
    return value


def load_csv(source, schema: CsvSchema = CsvSchema()) -> LongitudinalDataset:
    """Load a long-format CSV (one row per subject and time point).

    ``source`` may be a path, a text stream, or a byte stream; content is
    UTF-8 with a header row ``subject_id,time,y,<feature names...>``.
    Subjects come out sorted by id and times ascending, so differently
    ordered files load to bit-equal datasets.  Ragged subjects, duplicate
    (subject, time) pairs, gaps in the time range, and missing cells are
    all rejected.
    """
    if isinstance(source, (str, bytes)) or hasattr(source, "__fspath__"):
        with open(source, "rb") as fh:
            payload = fh.read()
    else:
        payload = source.read()
    if isinstance(payload, bytes):
        text = payload.decode("utf-8")
    else:
        text = payload

    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise DataError("empty CSV") from None
    header = [h.strip() for h in header]
    for col in (schema.subject_col, schema.time_col, schema.outcome_col):
        if col not in header:
            raise DataError(f"missing required column {col!r}")
    if schema.feature_cols is None:
        reserved = {schema.subject_col, schema.time_col, schema.outcome_col}
        feature_cols = tuple(h for h in header if h not in reserved)
    else:
        feature_cols = tuple(schema.feature_cols)
        for col in feature_cols:
            if col not in header:
                raise DataError(f"missing feature column {col!r}")
    if not feature_cols:
        raise DataError("no feature columns found")
    pos = {name: header.index(name) for name in header}

    rows_by_subject: dict[str, dict[int, tuple[float, list[float]]]] = {}
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise DataError(f"row {lineno} has {len(row)} cells, expected {len(header)}")
        subject = row[pos[schema.subject_col]].strip()
        time_raw = row[pos[schema.time_col]].strip()
        try:
            time = int(time_raw)
        except ValueError:
            raise DataError(f"non-integer time {time_raw!r} for subject {subject!r}") from None
        y = _parse_cell(row[pos[schema.outcome_col]], subject, time_raw, schema.outcome_col)
        feats = [_parse_cell(row[pos[c]], subject, time_raw, c) for c in feature_cols]
        per_subject = rows_by_subject.setdefault(subject, {})
        if time in per_subject:
            raise DataError(f"duplicate (subject,time) pair ({subject},{time})")
        per_subject[time] = (y, feats)

    if not rows_by_subject:
        raise DataError("CSV contains no data rows")

    lengths = {len(times) for times in rows_by_subject.values()}
    if len(lengths) != 1:
        raise DataError("unequal series length")

    subjects = []
    for subject in sorted(rows_by_subject):
        per_subject = rows_by_subject[subject]
        times = sorted(per_subject)
        if times[-1] - times[0] != len(times) - 1:
            raise DataError(f"times for subject {subject!r} are not consecutive")
        outcomes = np.array([per_subject[t][0] for t in times])
        features = np.array([per_subject[t][1] for t in times]).T
        subjects.append(
            SubjectSeries(
                id=subject, features=features, outcomes=outcomes, time_start=times[0]
            )
        )
    return LongitudinalDataset(tuple(subjects), feature_cols)


def write_csv(ds: LongitudinalDataset, target) -> None:
    """Write a dataset in the same long-format schema that load_csv reads."""
    own = isinstance(target, (str, bytes)) or hasattr(target, "__fspath__")
    fh = open(target, "w", newline="") if own else target
    try:
        writer = csv.writer(fh)
        writer.writerow(["subject_id", "time", "y", *ds.feature_names])
        for s in ds.subjects:
            for t in range(ds.T):
                row = [s.id, s.time_start + t, repr(float(s.outcomes[t]))]
                row.extend(repr(float(v)) for v in s.features[:, t])
                writer.writerow(row)
    finally:
        if own:
            fh.close()


@dataclass(frozen=True)
class LaggedDesign:
    """Per-subject lagged example matrices with aligned outcomes.

    ``X`` has shape (m, n, d_eff, tau+1): example ``(i, j)`` stacks the
    feature vectors at the current time and the tau previous ones, column
    k holding the values lagged by k.  ``times`` are 0-based indices into
    the source series for each example's current time.  When lagged
    outcomes are included, one extra row holds y_{t-1}..y_{t-tau} in lag
    columns 1..tau and 0 in lag column 0 (the current outcome never leaks
    into the design).
    """

    tau: int
    include_lagged_outcome: bool
    subject_ids: tuple[str, ...]
    feature_names: tuple[str, ...]
    times: np.ndarray
    subject_starts: tuple[int, ...]
    X: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "X", _frozen(self.X))
        object.__setattr__(self, "y", _frozen(self.y))
        times = np.ascontiguousarray(self.times, dtype=int)
        times.setflags(write=False)
        object.__setattr__(self, "times", times)

    @property
    def m(self) -> int:
        return self.X.shape[0]

    @property
    def n(self) -> int:
        """Examples per subject."""
        return self.X.shape[1]

    @property
    def d_eff(self) -> int:
        return self.X.shape[2]

    @property
    def n_lags(self) -> int:
        return self.X.shape[3]

    @property
    def coef_shape(self) -> tuple[int, int]:
        return (self.d_eff, self.n_lags)

    @property
    def n_params(self) -> int:
        return self.d_eff * self.n_lags

    @property
    def n_examples(self) -> int:
        return self.m * self.n

    def flat_design(self) -> np.ndarray:
        """(m, n, d_eff*(tau+1)) view of the example matrices."""
        return self.X.reshape(self.m, self.n, self.n_params)

    def example_times(self) -> np.ndarray:
        """(m, n) absolute time labels of each example's current point."""
        starts = np.asarray(self.subject_starts, dtype=int)
        return starts[:, None] + self.times[None, :]


def build_lagged(ds: LongitudinalDataset, tau: int, include_lagged_outcome: bool = False) -> LaggedDesign:
    """Build the lagged design with window size tau.

    Each example pairs the outcome at time t with the feature columns at
    times t, t-1, ..., t-tau, for t = tau..T-1 (0-based), giving
    n = T - tau examples per subject.
    """
    if tau < 0:
        raise ValueError("tau must be nonnegative")
    if tau >= ds.T:
        raise DataError("lag exhausts series")
    n = ds.T - tau
    d_eff = ds.d + (1 if include_lagged_outcome else 0)
    X = np.zeros((ds.m, n, d_eff, tau + 1))
    y = np.zeros((ds.m, n))
    for i, s in enumerate(ds.subjects):
        for k in range(tau + 1):
            X[i, :, : ds.d, k] = s.features[:, tau - k : ds.T - k].T
            if include_lagged_outcome and k >= 1:
                X[i, :, ds.d, k] = s.outcomes[tau - k : ds.T - k]
        y[i] = s.outcomes[tau:]
    names = ds.feature_names + ((LAGGED_OUTCOME_NAME,) if include_lagged_outcome else ())
    times = np.arange(tau, ds.T)
    return LaggedDesign(
        tau=tau,
        include_lagged_outcome=include_lagged_outcome,
        subject_ids=ds.subject_ids,
        feature_names=names,
        times=times,
        subject_starts=tuple(s.time_start for s in ds.subjects),
        X=X,
        y=y,
    )


def split_temporal(ds: LongitudinalDataset, holdout: int, tau: int):
    """Split off the trailing ``holdout`` time points of every subject.

    The train set keeps the first T - holdout times.  The test set keeps
    the trailing holdout times plus the tau preceding ones, so that
    building a lagged design on it yields exactly the examples whose
    current time falls in the holdout window.
    """
    if not 0 < holdout < ds.T - tau:
        raise ValueError("holdout out of range")
    cut = ds.T - holdout
    if cut < 2 or holdout + tau < 2:
        raise ValueError("holdout out of range: each side needs at least two time points")
    train_subjects = []
    test_subjects = []
    for s in ds.subjects:
        train_subjects.append(
            SubjectSeries(
                id=s.id,
                features=s.features[:, :cut],
                outcomes=s.outcomes[:cut],
                time_start=s.time_start,
            )
        )
        test_subjects.append(
            SubjectSeries(
                id=s.id,
                features=s.features[:, cut - tau :],
                outcomes=s.outcomes[cut - tau :],
                time_start=s.time_start + cut - tau,
            )
        )
    return (
        LongitudinalDataset(tuple(train_subjects), ds.feature_names),
        LongitudinalDataset(tuple(test_subjects), ds.feature_names),
    )
