"""Shared fixtures: hand-built records and small generated cohorts."""

import numpy as np
import pytest

from ctgbench.generate import GeneratorParams, generate_cohort
from ctgbench.records import APO, NPO, CtgRecord, admit
from ctgbench.transforms import Preprocessor


def make_record(n=600, hz=1, fhr_value=140.0, toco_value=20.0, label=None,
                rec_id="test-rec", mask=None, extent=None, windows=None):
    """A constant-valued record; tests overwrite slices to plant features."""
    fhr = np.full(n, fhr_value, dtype=np.float64)
    toco = np.full(n, toco_value, dtype=np.float64)
    if mask is None:
        mask = np.ones(n, dtype=bool)
    else:
        mask = np.asarray(mask, dtype=bool)
    fhr[~mask] = 0.0
    return CtgRecord(id=rec_id, hz=hz, fhr=fhr, toco=toco, mask=mask,
                     label=label, extent=extent, windows=windows)


@pytest.fixture(scope="session")
def micro_cohort():
    """60 admissible easy-separable records at 1 Hz, padded to 720."""
    raw = generate_cohort(GeneratorParams(regime="easy-separable"), 60, seed=11)
    raw = [r for r in raw if admit(r)]
    return Preprocessor(target_hz=1, pad_len=720).transform(raw)


@pytest.fixture(scope="session")
def raw_cohort_4hz():
    return generate_cohort(GeneratorParams(regime="easy-separable"), 24, seed=5)


def labels_array(records):
    return np.array([1 if r.label == APO else 0 for r in records])


# Verdict lines recorded by the acceptance tests. Written through the terminal
# reporter so they appear in the run summary under any capture mode.
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
