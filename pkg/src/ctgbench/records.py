"""CTG recording container, quality summary, and cohort file I/O.

A recording is a pair of aligned 1-D signals: fetal heart rate (bpm) and
uterine activity (0-100 relative units), plus a boolean mask that is False
where a sample is missing or padded. Missing FHR samples are stored as the
0.0 sentinel, matching the dropout convention of clinical CTG exports.
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ContractError

FHR_MIN = 30.0
FHR_MAX = 240.0
APO = "APO"
NPO = "NPO"
LABELS = (APO, NPO)


@dataclass
class CtgRecord:
    """One CTG recording.

    ``extent`` is the number of samples that belong to the recording proper;
    samples at index >= extent are padding. It equals ``len(fhr)`` until a
    padding transform extends the record. ``windows`` holds the start index
    (in the pre-sampling record) of each 60-sample window after stride
    sampling, so serialized text can carry original minute labels.
    """

    id: str
    hz: int
    fhr: np.ndarray
    toco: np.ndarray
    mask: np.ndarray
    label: str | None = None
    extent: int | None = None
    windows: tuple[int, ...] | None = None

    def __post_init__(self):
        self.fhr = np.asarray(self.fhr, dtype=np.float64)
        self.toco = np.asarray(self.toco, dtype=np.float64)
        self.mask = np.asarray(self.mask, dtype=bool)
        if self.extent is None:
            self.extent = len(self.fhr)

    def __len__(self):
        return len(self.fhr)

    def validate(self):
        """Raise ContractError if any record invariant is violated."""
        if not (len(self.fhr) == len(self.toco) == len(self.mask)):
            raise ContractError(
                f"record {self.id}: fhr/toco/mask lengths differ "
                f"({len(self.fhr)}/{len(self.toco)}/{len(self.mask)})"
            )
        if self.hz <= 0 or int(self.hz) != self.hz:
            raise ContractError(f"record {self.id}: hz must be a positive integer, got {self.hz}")
        in_range = (self.fhr == 0.0) | ((self.fhr >= FHR_MIN) & (self.fhr <= FHR_MAX))
        if not np.all(in_range):
            raise ContractError(f"record {self.id}: fhr values must be 0.0 or in [{FHR_MIN}, {FHR_MAX}]")
        hidden = self.fhr[~self.mask]
        if hidden.size and not np.all(hidden == 0.0):
            raise ContractError(f"record {self.id}: masked-out fhr samples must be 0.0")
        if np.any((self.toco < 0.0) | (self.toco > 100.0)):
            raise ContractError(f"record {self.id}: toco outside [0, 100]")
        if not (0 <= self.extent <= len(self.fhr)):
            raise ContractError(f"record {self.id}: extent {self.extent} outside [0, {len(self.fhr)}]")
        if self.label is not None and self.label not in LABELS:
            raise ContractError(f"record {self.id}: label {self.label!r} not in {LABELS}")
        return self

    def copy_with(self, **changes) -> "CtgRecord":
        return replace(self, **changes)


@dataclass(frozen=True)
class QualitySummary:
    missing_fraction: float
    duration_s: float


def quality(record: CtgRecord) -> QualitySummary:
    """Missing-data fraction and duration of the recording proper.

    Padding (samples beyond ``extent``) is excluded from both figures, so
    the summary of a padded record equals the summary taken before padding.
    """
    n = record.extent
    if n == 0:
        return QualitySummary(missing_fraction=0.0, duration_s=0.0)
    missing = int(np.count_nonzero(~record.mask[:n]))
    return QualitySummary(
        missing_fraction=missing / n,
        duration_s=n / record.hz,
    )


def admit(record: CtgRecord) -> bool:
    """Admission rule: strictly less than 50% missing and at least 10 minutes."""
    q = quality(record)
    return q.missing_fraction < 0.5 and q.duration_s >= 600.0


# --- cohort directories -----------------------------------------------------
#
# Layout: one directory per cohort, one CSV per record with columns
# fhr,toco,mask, one JSON sidecar per record, and an index.json listing ids,
# labels, and the generator parameters for provenance.

_FLOAT_FMT = "%.17g"  # round-trips float64 exactly


def save_record(record: CtgRecord, directory: str):
    path = os.path.join(directory, f"{record.id}.csv")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["fhr", "toco", "mask"])
        for f, t, m in zip(record.fhr, record.toco, record.mask):
            writer.writerow([_FLOAT_FMT % f, _FLOAT_FMT % t, int(m)])
    sidecar = {
        "id": record.id,
        "hz": record.hz,
        "label": record.label,
        "duration_s": record.extent / record.hz,
    }
    with open(os.path.join(directory, f"{record.id}.json"), "w") as fh:
        json.dump(sidecar, fh, indent=2)


def load_record(directory: str, record_id: str) -> CtgRecord:
    with open(os.path.join(directory, f"{record_id}.json")) as fh:
        sidecar = json.load(fh)
    fhr, toco, mask = [], [], []
    with open(os.path.join(directory, f"{record_id}.csv"), newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != ["fhr", "toco", "mask"]:
            raise ContractError(f"{record_id}.csv: unexpected columns {header}")
        for row in reader:
            fhr.append(float(row[0]))
            toco.append(float(row[1]))
            mask.append(bool(int(row[2])))
    hz = int(sidecar["hz"])
    return CtgRecord(
        id=sidecar["id"],
        hz=hz,
        fhr=np.array(fhr),
        toco=np.array(toco),
        mask=np.array(mask, dtype=bool),
        label=sidecar.get("label"),
        extent=int(round(sidecar["duration_s"] * hz)),
    )


def save_cohort(records, directory: str, generator_params: dict | None = None):
    os.makedirs(directory, exist_ok=True)
    for record in records:
        save_record(record, directory)
    index = {
        "ids": [r.id for r in records],
        "labels": {r.id: r.label for r in records},
        "generator_params": generator_params,
    }
    with open(os.path.join(directory, "index.json"), "w") as fh:
        json.dump(index, fh, indent=2)


def load_cohort(directory: str) -> list[CtgRecord]:
    with open(os.path.join(directory, "index.json")) as fh:
        index = json.load(fh)
    return [load_record(directory, rid) for rid in index["ids"]]
