"""Record-level preprocessing and perturbation transforms.

All transforms are pure: they return new records and never mutate their
input. Stochastic transforms draw their randomness from (seed, record.id),
so outputs do not depend on iteration order or parallel scheduling.
"""

from __future__ import annotations

import hashlib

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .errors import LengthError, ParameterError
from .records import CtgRecord


def record_rng(seed: int, record_id: str) -> np.random.Generator:
    """Deterministic per-record generator derived from (seed, record id)."""
    digest = hashlib.sha256(record_id.encode("utf-8")).digest()
    return np.random.default_rng([int(seed), int.from_bytes(digest[:8], "little")])


def downsample(record: CtgRecord, target_hz: int = 1) -> CtgRecord:
    """Block-mean downsampling over observed samples.

    Each output sample is the arithmetic mean of the observed samples in its
    source block; a block with no observed samples becomes the 0.0 sentinel
    with mask False. The toco channel is averaged over the same observed
    subset as the FHR channel.
    """
    if target_hz <= 0 or record.hz % target_hz != 0:
        raise ParameterError(f"cannot downsample {record.hz} Hz to {target_hz} Hz (non-divisible)")
    factor = record.hz // target_hz
    n_out = len(record) // factor
    trimmed = n_out * factor

    mask_blocks = record.mask[:trimmed].reshape(n_out, factor)
    fhr_blocks = record.fhr[:trimmed].reshape(n_out, factor)
    toco_blocks = record.toco[:trimmed].reshape(n_out, factor)

    counts = mask_blocks.sum(axis=1)
    observed = counts > 0
    fhr = np.zeros(n_out)
    toco = np.zeros(n_out)
    with np.errstate(invalid="ignore"):
        fhr[observed] = (fhr_blocks * mask_blocks).sum(axis=1)[observed] / counts[observed]
        toco[observed] = (toco_blocks * mask_blocks).sum(axis=1)[observed] / counts[observed]

    return record.copy_with(
        hz=target_hz,
        fhr=fhr,
        toco=toco,
        mask=observed,
        extent=min(record.extent // factor, n_out),
        windows=None,
    )


def pad_to(record: CtgRecord, target_len: int = 3600) -> CtgRecord:
    """Left-aligned zero padding to ``target_len`` samples; never truncates."""
    if record.hz != 1:
        raise ParameterError(f"pad_to expects a 1 Hz record, got {record.hz} Hz")
    n = len(record)
    if n > target_len:
        raise LengthError(f"record {record.id} has {n} samples, longer than target {target_len}")
    if n == target_len:
        return record.copy_with()
    tail = target_len - n
    return record.copy_with(
        fhr=np.concatenate([record.fhr, np.zeros(tail)]),
        toco=np.concatenate([record.toco, np.zeros(tail)]),
        mask=np.concatenate([record.mask, np.zeros(tail, dtype=bool)]),
        extent=record.extent,
    )


def stride_window_starts(n: int, window_s: int, gap_s: int) -> list[int]:
    """Start indices of the full windows emitted by stride sampling."""
    starts = []
    step = window_s + gap_s
    s = 0
    while s + window_s <= n:
        starts.append(s)
        s += step
    return starts


def stride_sample(record: CtgRecord, window_s: int = 60, gap_s: int = 60) -> CtgRecord:
    """Keep alternating windows: take ``window_s`` samples, skip ``gap_s``.

    With the 60/60 defaults a 3600-sample recording reduces to its
    even-numbered minutes (0, 2, ..., 58). Window start positions are kept
    in the record metadata so serialized text can carry original minute
    labels. Note the deliberate reading: a gap equal to the window keeps
    alternating segments, it does not give contiguous coverage.
    """
    if record.hz != 1:
        raise ParameterError(f"stride_sample expects a 1 Hz record, got {record.hz} Hz")
    if window_s <= 0:
        raise ParameterError(f"window_s must be positive, got {window_s}")
    if gap_s < 0:
        raise ParameterError(f"gap_s must be >= 0, got {gap_s}")

    starts = stride_window_starts(len(record), window_s, gap_s)
    idx = np.concatenate([np.arange(s, s + window_s) for s in starts]) if starts else np.array([], dtype=int)
    extent = int(sum(min(max(record.extent - s, 0), window_s) for s in starts))
    return record.copy_with(
        fhr=record.fhr[idx],
        toco=record.toco[idx],
        mask=record.mask[idx],
        extent=extent,
        windows=tuple(starts),
    )


def zero_toco(record: CtgRecord) -> CtgRecord:
    """Zero the uterine-activity channel; FHR, mask, and label untouched."""
    return record.copy_with(toco=np.zeros(len(record)))


def shuffle_chunks(record: CtgRecord, chunk_s: int = 60, seed: int = 0) -> CtgRecord:
    """Permute fixed-length chunks with one uniform per-record permutation.

    FHR, toco, and mask move together, so the multiset of chunks is exactly
    preserved. After shuffling, content is no longer left-aligned, so the
    whole frame is treated as recording proper (extent = length).
    """
    if record.hz != 1:
        raise ParameterError(f"shuffle_chunks expects a 1 Hz record, got {record.hz} Hz")
    if chunk_s <= 0:
        raise ParameterError(f"chunk_s must be positive, got {chunk_s}")
    n = len(record)
    if n % chunk_s != 0:
        raise LengthError(f"record {record.id} length {n} not divisible by chunk_s {chunk_s}; pad first")
    n_chunks = n // chunk_s
    perm = record_rng(seed, record.id).permutation(n_chunks)

    def permute(arr):
        return arr.reshape(n_chunks, chunk_s)[perm].reshape(n)

    windows = record.windows
    if windows is not None and len(windows) == n_chunks:
        windows = tuple(windows[p] for p in perm)
    return record.copy_with(
        fhr=permute(record.fhr),
        toco=permute(record.toco),
        mask=permute(record.mask),
        extent=n,
        windows=windows,
    )


def mask_segments(record: CtgRecord, fraction: float, segment_s: int = 60, seed: int = 0) -> CtgRecord:
    """Blank a uniformly chosen ``round(fraction * n_segments)`` segments.

    Chosen segments get FHR 0.0, toco 0.0, and mask False. Deterministic in
    (seed, record.id).
    """
    if not (0.0 <= fraction < 1.0):
        raise ParameterError(f"fraction {fraction} outside [0, 1)")
    if record.hz != 1:
        raise ParameterError(f"mask_segments expects a 1 Hz record, got {record.hz} Hz")
    if segment_s <= 0:
        raise ParameterError(f"segment_s must be positive, got {segment_s}")
    n = len(record)
    n_segments = -(-n // segment_s)  # ceil; a trailing partial segment counts
    k = int(round(fraction * n_segments))
    if k == 0:
        return record.copy_with()
    chosen = record_rng(seed, record.id).choice(n_segments, size=k, replace=False)

    fhr = record.fhr.copy()
    toco = record.toco.copy()
    mask = record.mask.copy()
    for s in chosen:
        lo, hi = s * segment_s, min((s + 1) * segment_s, n)
        fhr[lo:hi] = 0.0
        toco[lo:hi] = 0.0
        mask[lo:hi] = False
    return record.copy_with(fhr=fhr, toco=toco, mask=mask)


def masked_segment_ids(record: CtgRecord, fraction: float, segment_s: int = 60, seed: int = 0):
    """Segment indices mask_segments would blank; exposed for audits."""
    n_segments = -(-len(record) // segment_s)
    k = int(round(fraction * n_segments))
    if k == 0:
        return np.array([], dtype=int)
    return np.sort(record_rng(seed, record.id).choice(n_segments, size=k, replace=False))


class Preprocessor(BaseEstimator, TransformerMixin):
    """Standard preprocessing chain as a scikit-learn transformer.

    Downsample to ``target_hz``, pad to ``pad_len``, and optionally apply
    stride sampling (used for the text-consuming model family). Stateless:
    ``fit`` records nothing.
    """

    def __init__(self, target_hz=1, pad_len=3600, stride=False, window_s=60, gap_s=60):
        self.target_hz = target_hz
        self.pad_len = pad_len
        self.stride = stride
        self.window_s = window_s
        self.gap_s = gap_s

    def fit(self, X, y=None):
        return self

    def transform(self, X):
        out = []
        for record in X:
            r = record
            if r.hz != self.target_hz:
                r = downsample(r, self.target_hz)
            r = pad_to(r, self.pad_len)
            if self.stride:
                r = stride_sample(r, self.window_s, self.gap_s)
            out.append(r)
        return out
