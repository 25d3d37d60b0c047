"""Patient series and expert label ingestion.

File formats:

* series CSV: header ``patient_id,age_years,egfr``, one observation per row,
  rows in any order. Observations for one patient are sorted by age and
  same-age duplicates are merged by mean eGFR.
* labels CSV: header ``patient_id,e1,e2,e3,e4,e5``, annotation tokens
  ``stable``/``linear``/``step`` (case-insensitive).

Lines starting with ``#`` are metadata comments and are skipped on read.
"""

import csv
import enum
import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

from .errors import DataFormatError

SERIES_HEADER = ["patient_id", "age_years", "egfr"]
LABELS_HEADER = ["patient_id", "e1", "e2", "e3", "e4", "e5"]

AGE_MIN, AGE_MAX = 0.0, 120.0


class TrendAnnotation(enum.Enum):
    STABLE = "stable"
    LINEAR = "linear"
    STEP = "step"


class BinaryLabel(enum.Enum):
    """Binary trend class; value is the y encoding (stable=1, unstable=0)."""

    STABLE = 1
    UNSTABLE = 0


@dataclass(frozen=True)
class Observation:
    age: float
    egfr: float

    def __post_init__(self):
        if not (math.isfinite(self.age) and AGE_MIN < self.age < AGE_MAX):
            raise ValueError(f"age out of range: {self.age!r}")
        if not (math.isfinite(self.egfr) and self.egfr > 0.0):
            raise ValueError(f"egfr out of range: {self.egfr!r}")


@dataclass(frozen=True)
class PatientSeries:
    id: str
    observations: tuple

    def __post_init__(self):
        if len(self.observations) < 1:
            raise ValueError(f"series {self.id!r} is empty")
        ages = [o.age for o in self.observations]
        if any(b <= a for a, b in zip(ages, ages[1:])):
            raise ValueError(f"series {self.id!r} ages are not strictly increasing")

    @property
    def ages(self):
        return tuple(o.age for o in self.observations)

    @property
    def values(self):
        return tuple(o.egfr for o in self.observations)

    def n_distinct_ages(self) -> int:
        return len(self.observations)


@dataclass(frozen=True)
class LabelSet:
    """Five expert annotations for one patient, ordered by expert index."""

    id: str
    annotations: tuple

    def __post_init__(self):
        if len(self.annotations) != 5:
            raise ValueError(
                f"labels for {self.id!r}: expected 5 annotations, "
                f"got {len(self.annotations)}"
            )


def build_series(patient_id: str, ages: Sequence[float], egfrs: Sequence[float]) -> PatientSeries:
    """Assemble a series: sort by age, merge duplicate ages by mean eGFR."""
    if len(ages) != len(egfrs):
        raise ValueError("ages and egfrs differ in length")
    pairs = sorted(zip(ages, egfrs), key=lambda p: p[0])
    merged = []
    i = 0
    while i < len(pairs):
        j = i
        while j + 1 < len(pairs) and pairs[j + 1][0] == pairs[i][0]:
            j += 1
        vals = [pairs[t][1] for t in range(i, j + 1)]
        merged.append(Observation(pairs[i][0], sum(vals) / len(vals)))
        i = j + 1
    return PatientSeries(patient_id, tuple(merged))


def binarize(a: TrendAnnotation) -> BinaryLabel:
    """Collapse the three-way annotation: linear and step are both unstable."""
    return BinaryLabel.STABLE if a is TrendAnnotation.STABLE else BinaryLabel.UNSTABLE


def consensus(ls: LabelSet) -> BinaryLabel:
    """Majority of the five binarized votes (an odd count never ties)."""
    stable_votes = sum(1 for a in ls.annotations if binarize(a) is BinaryLabel.STABLE)
    return BinaryLabel.STABLE if stable_votes >= 3 else BinaryLabel.UNSTABLE


def _data_rows(path):
    """Yield (line_number, row) for non-comment rows; validates the header."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = None
        for lineno, row in enumerate(reader, start=1):
            if not row or (row[0].startswith("#")):
                continue
            if header is None:
                header = [c.strip() for c in row]
                yield lineno, header
                continue
            yield lineno, row


def load_series(path) -> list:
    """Read a series CSV into one PatientSeries per distinct patient id."""
    per_patient = {}
    saw_header = False
    for lineno, row in _data_rows(path):
        if not saw_header:
            if row != SERIES_HEADER:
                raise DataFormatError(
                    f"{path}: line {lineno}: expected header "
                    f"{','.join(SERIES_HEADER)!r}, got {','.join(row)!r}"
                )
            saw_header = True
            continue
        if len(row) != 3:
            raise DataFormatError(f"{path}: line {lineno}: expected 3 columns, got {len(row)}")
        pid = row[0].strip()
        if not pid:
            raise DataFormatError(f"{path}: line {lineno}: empty patient_id")
        try:
            age = float(row[1])
            egfr = float(row[2])
        except ValueError as exc:
            raise DataFormatError(f"{path}: line {lineno}: {exc}") from exc
        if not (math.isfinite(age) and AGE_MIN < age < AGE_MAX):
            raise DataFormatError(f"{path}: line {lineno}: age out of range")
        if not (math.isfinite(egfr) and egfr > 0.0):
            raise DataFormatError(f"{path}: line {lineno}: egfr out of range")
        per_patient.setdefault(pid, []).append((age, egfr))
    if not saw_header:
        raise DataFormatError(f"{path}: empty file")
    if not per_patient:
        raise DataFormatError(f"{path}: no data rows")
    return [
        build_series(pid, [a for a, _ in obs], [g for _, g in obs])
        for pid, obs in per_patient.items()
    ]


def load_labels(path) -> dict:
    """Read a labels CSV into a map patient id -> LabelSet."""
    out = {}
    saw_header = False
    for lineno, row in _data_rows(path):
        if not saw_header:
            if row != LABELS_HEADER:
                raise DataFormatError(
                    f"{path}: line {lineno}: expected header "
                    f"{','.join(LABELS_HEADER)!r}, got {','.join(row)!r}"
                )
            saw_header = True
            continue
        if len(row) != 6:
            raise DataFormatError(
                f"{path}: line {lineno}: expected 5 expert columns, got {len(row) - 1}"
            )
        pid = row[0].strip()
        if pid in out:
            raise DataFormatError(f"{path}: line {lineno}: duplicate id {pid!r}")
        annotations = []
        for token in row[1:]:
            norm = token.strip().lower()
            try:
                annotations.append(TrendAnnotation(norm))
            except ValueError:
                raise DataFormatError(
                    f"{path}: line {lineno}: unknown annotation token {token!r}"
                ) from None
        out[pid] = LabelSet(pid, tuple(annotations))
    if not saw_header:
        raise DataFormatError(f"{path}: empty file")
    return out


def _write_csv(path, header, rows, meta: Mapping | None):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        if meta:
            fh.write("# " + " ".join(f"{k}={v}" for k, v in meta.items()) + "\n")
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def save_series(path, cohort: Iterable[PatientSeries], meta: Mapping | None = None):
    """Write the series CSV; floats use their shortest round-trip form."""
    rows = [
        (s.id, repr(o.age), repr(o.egfr))
        for s in cohort
        for o in s.observations
    ]
    _write_csv(path, SERIES_HEADER, rows, meta)


def save_labels(path, labels: Mapping[str, LabelSet], meta: Mapping | None = None):
    rows = [
        (ls.id, *(a.value for a in ls.annotations))
        for ls in labels.values()
    ]
    _write_csv(path, LABELS_HEADER, rows, meta)
