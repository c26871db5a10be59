"""Survey data loading, validation and quality-control screening."""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import pandas as pd

from .sem.syntax import ModelSpec

logger = logging.getLogger(__name__)

ID_COLUMN = "respondent_id"
METADATA_COLUMNS = ("completion_time", "source_address")
LIKERT_MIN, LIKERT_MAX = 1, 5


class IngestError(ValueError):
    pass


class SchemaError(IngestError):
    def __init__(self, column, message=None):
        self.column = column
        super().__init__(message or f"required column {column!r} is missing")


class RowError(IngestError):
    def __init__(self, row_index, column, message):
        self.row_index = row_index
        self.column = column
        super().__init__(f"row {row_index}, column {column!r}: {message}")


class EmptyDatasetError(IngestError):
    pass


class ScreeningConfigError(ValueError):
    pass


@dataclass(frozen=True)
class Dataset:
    """Respondent records.

    ``items`` holds Likert responses (integers 1-5) unless ``likert`` is
    False, in which case real-valued indicator scores are allowed (used for
    synthetic continuous data).  ``demographics`` holds ordered integer codes
    indexing into ``levels[field]``.  Treat instances as read-only.
    """

    respondent_id: np.ndarray
    items: pd.DataFrame
    demographics: pd.DataFrame
    outcome: np.ndarray | None
    levels: dict
    outcome_name: str | None = "gap"
    metadata: pd.DataFrame | None = None
    likert: bool = True
    warnings: tuple = ()

    def __post_init__(self):
        n = len(self.respondent_id)
        if n == 0:
            raise EmptyDatasetError("dataset has no rows")
        if len(self.items) != n or len(self.demographics) != n:
            raise ValueError("item/demographic row counts disagree with respondent ids")
        if self.outcome is not None and len(self.outcome) != n:
            raise ValueError("outcome length disagrees with respondent ids")
        names = [ID_COLUMN, *self.items.columns, *self.demographics.columns]
        if self.outcome_name and self.outcome is not None:
            names.append(self.outcome_name)
        if self.metadata is not None:
            names.extend(self.metadata.columns)
        if len(set(names)) != len(names):
            raise ValueError("column names must be unique")

    @property
    def n(self):
        return len(self.respondent_id)

    def __len__(self):
        return self.n

    @property
    def columns(self):
        cols = list(self.items.columns) + list(self.demographics.columns)
        if self.outcome is not None:
            cols.append(self.outcome_name)
        return cols

    def column(self, name) -> np.ndarray:
        """Numeric values of an item, a demographic (as codes) or the outcome."""
        if name in self.items.columns:
            return self.items[name].to_numpy(dtype=float)
        if name in self.demographics.columns:
            return self.demographics[name].to_numpy(dtype=float)
        if self.outcome is not None and name == self.outcome_name:
            return np.asarray(self.outcome, dtype=float)
        raise KeyError(f"dataset has no column {name!r}")

    def matrix(self, names) -> np.ndarray:
        return np.column_stack([self.column(n) for n in names])

    def construct_scores(self, spec: ModelSpec, names=None) -> pd.DataFrame:
        """Per-respondent item-mean score for each construct.

        Names that are not constructs (demographics, the outcome) are passed
        through as their coded numeric value.
        """
        names = list(spec.measurement) if names is None else list(names)
        out = {}
        for name in names:
            if name in spec.measurement:
                out[name] = self.items[spec.measurement[name]].to_numpy(dtype=float).mean(axis=1)
            else:
                out[name] = self.column(name)
        return pd.DataFrame(out)

    def take(self, rows) -> "Dataset":
        rows = np.asarray(rows, dtype=int)
        meta = None if self.metadata is None else self.metadata.iloc[rows].reset_index(drop=True)
        return replace(
            self,
            respondent_id=self.respondent_id[rows],
            items=self.items.iloc[rows].reset_index(drop=True),
            demographics=self.demographics.iloc[rows].reset_index(drop=True),
            outcome=None if self.outcome is None else self.outcome[rows],
            metadata=meta,
        )

    def to_frame(self) -> pd.DataFrame:
        """Table in the CSV interchange layout (demographics as level labels)."""
        frame = pd.DataFrame({ID_COLUMN: self.respondent_id})
        for c in self.items.columns:
            frame[c] = self.items[c].to_numpy()
        for c in self.demographics.columns:
            labels = self.levels[c]
            frame[c] = [labels[int(k)] for k in self.demographics[c]]
        if self.outcome is not None:
            frame[self.outcome_name] = self.outcome
        if self.metadata is not None:
            for c in self.metadata.columns:
                frame[c] = self.metadata[c].to_numpy()
        return frame

    def to_csv(self, path):
        frame = self.to_frame()
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(frame.columns)
            for row in frame.itertuples(index=False):
                writer.writerow([_format_cell(v) for v in row])

    def describe_demographics(self):
        """Frequency and percentage of every level of every demographic field."""
        out = {}
        for c in self.demographics.columns:
            counts = np.bincount(self.demographics[c].to_numpy(dtype=int), minlength=len(self.levels[c]))
            out[c] = [
                {"level": lv, "frequency": int(k), "proportion": round(100.0 * k / self.n, 2)}
                for lv, k in zip(self.levels[c], counts)
            ]
        return out


def _format_cell(v):
    if isinstance(v, (float, np.floating)):
        if float(v).is_integer():
            return str(int(v))
        return repr(float(v))
    return str(v)


def _parse_likert(value, row, col, likert):
    text = value.strip()
    if text == "":
        raise RowError(row, col, "missing value (missing cells are not imputed)")
    try:
        x = float(text)
    except ValueError:
        raise RowError(row, col, f"non-numeric response {text!r}") from None
    if not math.isfinite(x):
        raise RowError(row, col, f"non-finite response {text!r}")
    if not likert:
        return x
    if not x.is_integer():
        raise RowError(row, col, f"Likert response must be an integer, got {text!r}")
    if not LIKERT_MIN <= x <= LIKERT_MAX:
        raise RowError(row, col, f"Likert response {int(x)} outside [{LIKERT_MIN}, {LIKERT_MAX}]")
    return int(x)


def _parse_level(value, row, col, levels):
    text = value.strip()
    if text in levels:
        return levels.index(text)
    try:
        code = int(text)
    except ValueError:
        raise RowError(row, col, f"undeclared level {text!r}; expected one of {levels}") from None
    if 0 <= code < len(levels):
        return code
    raise RowError(row, col, f"level code {code} outside 0..{len(levels) - 1}")


def load_csv(path, spec: ModelSpec, likert=True) -> Dataset:
    """Read a comma-separated UTF-8 file with a header row into a :class:`Dataset`."""
    path = Path(path)
    with open(path, newline="", encoding="utf-8-sig") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise EmptyDatasetError(f"{path} is empty") from None
        rows = [r for r in reader if any(cell.strip() for cell in r)]
    if len(set(header)) != len(header):
        dup = sorted({h for h in header if header.count(h) > 1})
        raise SchemaError(dup[0], f"duplicate column names: {dup}")
    col = {h: i for i, h in enumerate(header)}
    for item in spec.items:
        if item not in col:
            raise SchemaError(item)
    outcome_name = spec.outcome
    if outcome_name and outcome_name not in col:
        raise SchemaError(outcome_name)
    for c in spec.controls:
        if c not in col:
            raise SchemaError(c)
    if not rows:
        raise EmptyDatasetError(f"{path} has a header but no data rows")

    demo_fields = [d for d in spec.demographics if d in col]
    meta_fields = [m for m in METADATA_COLUMNS if m in col]
    known = set(spec.items) | set(demo_fields) | set(meta_fields) | {ID_COLUMN}
    if outcome_name:
        known.add(outcome_name)
    extra = [h for h in header if h not in known]
    notes = tuple(f"ignored undeclared column {h!r}" for h in extra)
    for note in notes:
        logger.warning(note)

    ids, item_rows, demo_rows, outcome, meta_rows = [], [], [], [], []
    for r, row in enumerate(rows):
        if len(row) != len(header):
            raise RowError(r, None, f"expected {len(header)} fields, found {len(row)}")
        ids.append(row[col[ID_COLUMN]].strip() if ID_COLUMN in col else str(r + 1))
        item_rows.append([_parse_likert(row[col[it]], r, it, likert) for it in spec.items])
        demo_rows.append([_parse_level(row[col[d]], r, d, spec.demographics[d]) for d in demo_fields])
        if outcome_name:
            text = row[col[outcome_name]].strip()
            try:
                y = float(text)
            except ValueError:
                raise RowError(r, outcome_name, f"non-numeric outcome {text!r}") from None
            if not (math.isfinite(y) and y > 0):
                raise RowError(r, outcome_name, f"outcome must be positive, got {text!r}")
            outcome.append(y)
        meta = {}
        for m in meta_fields:
            text = row[col[m]].strip()
            if m == "completion_time":
                try:
                    meta[m] = float(text)
                except ValueError:
                    raise RowError(r, m, f"non-numeric completion time {text!r}") from None
            else:
                meta[m] = text
        meta_rows.append(meta)

    dtype = int if likert else float
    items = pd.DataFrame(item_rows, columns=spec.items).astype(dtype)
    demographics = pd.DataFrame(demo_rows, columns=demo_fields, index=range(len(rows))).astype(int)
    metadata = pd.DataFrame(meta_rows, columns=meta_fields) if meta_fields else None
    return Dataset(
        respondent_id=np.array(ids, dtype=object),
        items=items,
        demographics=demographics,
        outcome=np.array(outcome, dtype=float) if outcome_name else None,
        levels={d: list(spec.demographics[d]) for d in demo_fields},
        outcome_name=outcome_name,
        metadata=metadata,
        likert=likert,
        warnings=notes,
    )


@dataclass(frozen=True)
class ConsistencyCheck:
    """If a row matches every ``when`` condition it must match every ``require`` one.

    Conditions map a demographic field to its allowed level labels.
    """

    name: str
    when: dict
    require: dict

    def fields(self):
        return set(self.when) | set(self.require)

    def violated(self, data: Dataset, row: int) -> bool:
        def matches(cond):
            for f, allowed in cond.items():
                label = data.levels[f][int(data.demographics.at[row, f])]
                if label not in allowed:
                    return False
            return True

        return matches(self.when) and not matches(self.require)


def license_requires_adult(adult_levels, age_field="age_group", license_field="license", licensed=("yes",)):
    """Sample check: a licensed respondent cannot be under age."""
    return ConsistencyCheck("license implies adult", {license_field: list(licensed)},
                            {age_field: list(adult_levels)})


# Driving experience without a license is logically inconsistent.
UNLICENSED_NO_DRIVING = ConsistencyCheck(
    "unlicensed respondents report no driving experience",
    when={"license": ["no"]}, require={"driving_years": ["none"]})


@dataclass(frozen=True)
class ScreeningRules:
    min_completion_seconds: float | None = 80.0
    dedupe_by_source: bool = True
    consistency_checks: tuple = ()

    def __post_init__(self):
        if self.min_completion_seconds is not None and self.min_completion_seconds < 0:
            raise ScreeningConfigError("min_completion_seconds must be >= 0")

    @classmethod
    def disabled(cls):
        return cls(min_completion_seconds=None, dedupe_by_source=False, consistency_checks=())


@dataclass(frozen=True)
class Exclusion:
    row_index: int
    respondent_id: str
    rule: str


TIME_CONTROL = "time control"
DEVICE_LIMIT = "device limit"
RESPONSE_VERIFICATION = "response verification"


def screen(data: Dataset, rules: ScreeningRules):
    """Apply the quality-control rules; returns ``(kept_dataset, exclusions)``.

    Rules fire in order time control, device limit, response verification;
    each excluded row is logged once with the first rule it failed.
    """
    meta = data.metadata
    meta_cols = set() if meta is None else set(meta.columns)
    if rules.min_completion_seconds is not None and "completion_time" not in meta_cols:
        raise ScreeningConfigError("time control needs a 'completion_time' column")
    if rules.dedupe_by_source and "source_address" not in meta_cols:
        raise ScreeningConfigError("device limit needs a 'source_address' column")
    for check in rules.consistency_checks:
        missing = check.fields() - set(data.demographics.columns)
        if missing:
            raise ScreeningConfigError(f"check {check.name!r} references absent fields {sorted(missing)}")
        for f, allowed in list(check.when.items()) + list(check.require.items()):
            unknown = set(allowed) - set(data.levels[f])
            if unknown:
                raise ScreeningConfigError(f"check {check.name!r} uses undeclared levels {sorted(unknown)} of {f}")

    seen = set()
    keep, log = [], []
    for r in range(data.n):
        rule = None
        if rules.min_completion_seconds is not None and \
                not meta.at[r, "completion_time"] >= rules.min_completion_seconds:
            rule = TIME_CONTROL
        elif rules.dedupe_by_source and meta.at[r, "source_address"] in seen:
            rule = DEVICE_LIMIT
        elif any(check.violated(data, r) for check in rules.consistency_checks):
            rule = RESPONSE_VERIFICATION
        if rule is None:
            keep.append(r)
            if rules.dedupe_by_source:
                seen.add(meta.at[r, "source_address"])
        else:
            log.append(Exclusion(r, str(data.respondent_id[r]), rule))
    if not keep:
        raise EmptyDatasetError("screening removed every row")
    if len(keep) == data.n:
        return data, log
    return data.take(keep), log


def write_exclusions(log, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["row_index", "respondent_id", "rule"])
        for e in log:
            writer.writerow([e.row_index, e.respondent_id, e.rule])
