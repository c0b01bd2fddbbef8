"""Synthetic CTG cohort generation.

Stands in for a clinical archive: each record carries a fetal-heart-rate
trace built from the five classic CTG features (baseline, variability,
accelerations, decelerations, sinusoidal pattern) plus a contraction trace,
with the APO/NPO class difference controlled by the regime:

* ``easy-separable`` -- APO shifts the baseline down, adds decelerations and
  damps variability: strong level statistics, learnable by any family.
* ``fhr-only``       -- class signal lives entirely in the FHR channel; the
  contraction channel is drawn from one distribution for both classes.
* ``toco-coupled``   -- both classes share identical marginal FHR and toco
  statistics; every contraction triggers one deceleration and the label is
  carried only by the lag between contraction peak and deceleration nadir
  (APO late, NPO early).
* ``temporal-order`` -- identical event counts per class; the label is
  carried only by where decelerations sit in the recording (APO late half,
  NPO early half).

All randomness is derived from (seed, record index), so a cohort is a pure
function of (params, n, seed).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError
from .records import APO, NPO, CtgRecord

GENERATION_HZ = 4

REGIMES = ("easy-separable", "fhr-only", "toco-coupled", "temporal-order")


@dataclass(frozen=True)
class GeneratorParams:
    regime: str
    duration_s: int = 600
    baseline_bpm: float = 140.0
    variability_bpm: float = 10.0
    n_accelerations: int = 2
    n_decelerations: int = 1
    sinusoidal: bool = False
    contraction_rate_per_10min: float = 3.0
    dropout_fraction: float = 0.05
    class_prevalence: float = 0.3

    def validate(self):
        if self.regime not in REGIMES:
            raise ParameterError(f"unknown regime {self.regime!r}, expected one of {REGIMES}")
        if not (600 <= self.duration_s <= 3600):
            raise ParameterError(f"duration_s {self.duration_s} outside [600, 3600]")
        if self.n_accelerations < 0 or self.n_decelerations < 0:
            raise ParameterError("event counts must be >= 0")
        if not (90.0 <= self.baseline_bpm <= 180.0):
            raise ParameterError(f"baseline_bpm {self.baseline_bpm} outside the plausible [90, 180]")
        if self.variability_bpm < 0:
            raise ParameterError("variability_bpm must be >= 0")
        if self.contraction_rate_per_10min < 0:
            raise ParameterError("contraction_rate_per_10min must be >= 0")
        if not (0.0 <= self.dropout_fraction < 0.6):
            raise ParameterError(f"dropout_fraction {self.dropout_fraction} outside [0, 0.6)")
        if not (0.0 < self.class_prevalence < 1.0):
            raise ParameterError(f"class_prevalence {self.class_prevalence} outside (0, 1)")
        return self

    def to_dict(self) -> dict:
        return {
            "regime": self.regime,
            "duration_s": self.duration_s,
            "baseline_bpm": self.baseline_bpm,
            "variability_bpm": self.variability_bpm,
            "n_accelerations": self.n_accelerations,
            "n_decelerations": self.n_decelerations,
            "sinusoidal": self.sinusoidal,
            "contraction_rate_per_10min": self.contraction_rate_per_10min,
            "dropout_fraction": self.dropout_fraction,
            "class_prevalence": self.class_prevalence,
        }


def generate_cohort(params: GeneratorParams, n: int, seed: int) -> list[CtgRecord]:
    """Generate ``n`` labeled records at 4 Hz, deterministic in (params, n, seed)."""
    params.validate()
    if n < 1:
        raise ParameterError(f"cohort size must be >= 1, got {n}")

    root = np.random.SeedSequence(entropy=(int(seed), 0xC7613))
    label_ss, *record_ss = root.spawn(n + 1)

    n_apo = int(round(params.class_prevalence * n))
    labels = np.array([APO] * n_apo + [NPO] * (n - n_apo))
    np.random.default_rng(label_ss).shuffle(labels)

    records = []
    for i in range(n):
        rng = np.random.default_rng(record_ss[i])
        rec_id = f"{params.regime}-s{seed}-r{i:05d}"
        records.append(_synthesize(params, str(labels[i]), rec_id, rng))
    return records


# --- per-record synthesis ----------------------------------------------------


def _synthesize(params: GeneratorParams, label: str, rec_id: str, rng) -> CtgRecord:
    hz = GENERATION_HZ
    n = params.duration_s * hz
    t = np.arange(n) / hz
    apo = label == APO

    prof = _class_profile(params, apo, rng)

    fhr = np.full(n, prof["baseline"], dtype=np.float64)
    fhr += _slow_wander(n, hz, rng)
    fhr += _variability(n, hz, prof["variability"], rng)
    if prof["sinusoidal"]:
        # smooth oscillation, ~4 cycles/min, partially replacing variability
        phase = rng.uniform(0, 2 * np.pi)
        fhr += 8.0 * np.sin(2 * np.pi * t / 15.0 + phase)

    toco = np.full(n, rng.uniform(5.0, 12.0), dtype=np.float64)
    toco += np.abs(_variability(n, hz, 1.5, rng))
    contraction_peaks = _contraction_centers(params, rng)
    for c in contraction_peaks:
        toco += rng.uniform(40.0, 75.0) * _bump(t, c, rng.uniform(14.0, 20.0))

    for c in _accel_centers(params, prof, rng):
        fhr += rng.uniform(15.0, 25.0) * _bump(t, c, rng.uniform(10.0, 18.0))
    for c in _decel_centers(params, prof, contraction_peaks, rng):
        fhr -= rng.uniform(22.0, 34.0) * _bump(t, c, rng.uniform(10.0, 16.0))

    fhr = np.clip(fhr, 30.0, 240.0)
    toco = np.clip(toco, 0.0, 100.0)

    mask = _dropout_mask(n, params.dropout_fraction, rng)
    fhr[~mask] = 0.0

    return CtgRecord(id=rec_id, hz=hz, fhr=fhr, toco=toco, mask=mask, label=label)


def _class_profile(params: GeneratorParams, apo: bool, rng) -> dict:
    lo, hi = 0.05, 0.95
    prof = {
        "baseline": rng.normal(params.baseline_bpm, 4.0),
        "variability": params.variability_bpm,
        "n_accel": params.n_accelerations,
        "n_decel": params.n_decelerations,
        "decel_window": (lo, hi),
        "accel_window": (lo, hi),
        "couple_lag_s": None,
        "sinusoidal": False,
    }
    if params.regime == "easy-separable":
        if apo:
            prof["baseline"] -= 15.0
            prof["n_decel"] += 4
            prof["variability"] *= 0.6
            prof["sinusoidal"] = params.sinusoidal
    elif params.regime == "fhr-only":
        if apo:
            prof["baseline"] -= 12.0
            prof["n_decel"] += 3
    elif params.regime == "toco-coupled":
        # identical marginals; only the contraction->deceleration lag differs
        prof["couple_lag_s"] = rng.normal(35.0, 4.0) if apo else rng.normal(0.0, 3.0)
    elif params.regime == "temporal-order":
        prof["decel_window"] = (0.55, 0.95) if apo else (0.05, 0.45)
    return prof


def _contraction_centers(params: GeneratorParams, rng) -> np.ndarray:
    k = int(round(params.contraction_rate_per_10min * params.duration_s / 600.0))
    if k <= 0:
        return np.array([])
    spacing = params.duration_s / (k + 1)
    centers = spacing * np.arange(1, k + 1)
    centers = centers + rng.uniform(-0.15 * spacing, 0.15 * spacing, size=k)
    return np.clip(centers, 0.03 * params.duration_s, 0.97 * params.duration_s)


def _accel_centers(params: GeneratorParams, prof: dict, rng) -> np.ndarray:
    lo, hi = prof["accel_window"]
    return _spread_centers(rng, prof["n_accel"], lo * params.duration_s, hi * params.duration_s)


def _decel_centers(params: GeneratorParams, prof: dict, contraction_peaks, rng) -> np.ndarray:
    if prof["couple_lag_s"] is not None:
        # one deceleration per contraction, nadir offset by the class lag
        jitter = rng.normal(0.0, 2.0, size=len(contraction_peaks))
        return np.asarray(contraction_peaks) + prof["couple_lag_s"] + jitter
    lo, hi = prof["decel_window"]
    return _spread_centers(rng, prof["n_decel"], lo * params.duration_s, hi * params.duration_s)


def _spread_centers(rng, count: int, lo: float, hi: float, min_sep: float = 45.0) -> np.ndarray:
    """Uniform event centers in [lo, hi] kept at least min_sep apart."""
    if count <= 0:
        return np.array([])
    span = hi - lo
    if span < (count - 1) * min_sep:
        min_sep = span / max(count - 1, 1) * 0.8
    for _ in range(200):
        centers = np.sort(rng.uniform(lo, hi, size=count))
        if count == 1 or np.min(np.diff(centers)) >= min_sep:
            return centers
    # dense fallback: even spacing with jitter
    centers = np.linspace(lo, hi, count)
    return centers + rng.uniform(-0.2, 0.2, size=count) * (span / max(count, 1))


def _bump(t: np.ndarray, center_s: float, width_s: float) -> np.ndarray:
    return np.exp(-0.5 * ((t - center_s) / width_s) ** 2)


def _slow_wander(n: int, hz: int, rng) -> np.ndarray:
    t = np.arange(n) / hz
    period = rng.uniform(180.0, 420.0)
    phase = rng.uniform(0, 2 * np.pi)
    return rng.uniform(1.0, 3.0) * np.sin(2 * np.pi * t / period + phase)


def _variability(n: int, hz: int, amplitude_bpm: float, rng) -> np.ndarray:
    """Band-limited noise with short-term standard deviation ~ amplitude/2."""
    if amplitude_bpm <= 0:
        return np.zeros(n)
    white = rng.normal(0.0, 1.0, size=n)
    width = max(int(1.5 * hz), 1)
    kernel = np.ones(width) / width
    smooth = np.convolve(white, kernel, mode="same")
    std = smooth.std()
    if std == 0:
        return np.zeros(n)
    return smooth * (amplitude_bpm / 2.0 / std)


def _dropout_mask(n: int, fraction: float, rng) -> np.ndarray:
    """Observation mask with ``round(fraction * n)`` samples dropped in runs."""
    mask = np.ones(n, dtype=bool)
    need = int(round(fraction * n))
    while need - np.count_nonzero(~mask) > 0:
        remaining = need - np.count_nonzero(~mask)
        run = int(min(rng.integers(8, 81), remaining))
        start = int(rng.integers(0, n - run + 1))
        block = mask[start : start + run]
        drop = int(min(np.count_nonzero(block), remaining))
        idx = np.flatnonzero(block)[:drop]
        block[idx] = False
    return mask
