"""Preprocessing transforms, each checked against a from-scratch oracle."""

import numpy as np
import pytest

from conftest import make_record
from ctgbench.errors import LengthError
from ctgbench.records import CtgRecord
from ctgbench.transforms import (
    Preprocessor,
    downsample,
    mask_segments,
    masked_segment_ids,
    pad_to,
    shuffle_chunks,
    stride_sample,
    stride_window_starts,
    zero_toco,
)


def downsample_oracle(fhr, toco, mask, factor):
    """Block mean over observed samples only, plain loops."""
    n_out = len(fhr) // factor
    of, ot, om = np.zeros(n_out), np.zeros(n_out), np.zeros(n_out, dtype=bool)
    for i in range(n_out):
        block = slice(i * factor, (i + 1) * factor)
        seen = mask[block]
        if seen.any():
            of[i] = fhr[block][seen].mean()
            ot[i] = toco[block][seen].mean()
            om[i] = True
        # unseen block: fhr 0.0 sentinel, toco 0.0, mask False
    return of, ot, om


class TestDownsample:
    def test_matches_oracle_with_missing_blocks(self):
        rng = np.random.default_rng(0)
        n = 480
        mask = rng.random(n) > 0.3
        mask[40:52] = False  # one fully-missing block
        fhr = np.where(mask, rng.uniform(100, 180, n), 0.0)
        toco = rng.uniform(0, 100, n)
        r = CtgRecord(id="x", hz=4, fhr=fhr, toco=toco, mask=mask)
        out = downsample(r, target_hz=1)
        of, ot, om = downsample_oracle(fhr, toco, mask, 4)
        np.testing.assert_allclose(out.fhr, of, rtol=0, atol=1e-12)
        np.testing.assert_allclose(out.toco, ot, rtol=0, atol=1e-12)
        np.testing.assert_array_equal(out.mask, om)
        assert out.hz == 1 and len(out) == 120 and out.extent == 120
        assert np.all(out.fhr[~out.mask] == 0.0)

    def test_identity_when_rates_equal(self):
        r = make_record(n=30, hz=1)
        out = downsample(r, target_hz=1)
        np.testing.assert_array_equal(out.fhr, r.fhr)

    def test_validates_after(self, raw_cohort_4hz):
        for r in raw_cohort_4hz[:6]:
            downsample(r, target_hz=1).validate()


class TestPad:
    def test_left_aligned_and_extent_kept(self):
        r = make_record(n=500, hz=1)
        out = pad_to(r, 720)
        assert len(out) == 720 and out.extent == 500
        assert np.all(out.mask[500:] == False)  # noqa: E712
        assert np.all(out.fhr[500:] == 0.0)
        np.testing.assert_array_equal(out.fhr[:500], r.fhr)
        out.validate()

    def test_longer_than_target_rejected(self):
        with pytest.raises(LengthError):
            pad_to(make_record(n=800, hz=1), 720)


class TestStride:
    def test_starts_by_index_arithmetic(self):
        # oracle: starts are k*(window+gap) while a full window fits
        for n, w, g in [(3600, 60, 60), (720, 60, 60), (650, 60, 60), (200, 50, 25)]:
            expected = [s for s in range(0, n, w + g) if s + w <= n]
            assert stride_window_starts(n, w, g) == expected

    def test_3600_returns_even_minutes(self):
        r = make_record(n=3600, hz=1)
        out = stride_sample(r, 60, 60)
        assert out.windows == tuple(range(0, 3600, 120))
        assert [s // 60 for s in out.windows] == list(range(0, 60, 2))
        assert len(out) == 30 * 60

    def test_content_is_the_selected_windows(self):
        rng = np.random.default_rng(1)
        fhr = rng.uniform(100, 180, 300)
        r = CtgRecord(id="x", hz=1, fhr=fhr, toco=rng.uniform(0, 100, 300),
                      mask=np.ones(300, dtype=bool))
        out = stride_sample(r, 60, 60)
        assert out.windows == (0, 120, 240)
        np.testing.assert_array_equal(out.fhr, np.concatenate([fhr[0:60], fhr[120:180], fhr[240:300]]))

    def test_extent_tracks_content_not_padding(self):
        r = make_record(n=720, hz=1, extent=600)
        out = stride_sample(r, 60, 60)
        # windows at 0..600 lie inside the recording; the 600..720 region is padding
        content = sum(min(max(600 - s, 0), 60) for s in out.windows)
        assert out.extent == content


class TestZeroToco:
    def test_zeroes_toco_only_and_idempotent(self):
        r = make_record(n=100)
        out = zero_toco(r)
        assert np.all(out.toco == 0.0)
        np.testing.assert_array_equal(out.fhr, r.fhr)
        np.testing.assert_array_equal(out.mask, r.mask)
        again = zero_toco(out)
        np.testing.assert_array_equal(again.toco, out.toco)
        np.testing.assert_array_equal(again.fhr, out.fhr)
        assert np.all(r.toco == 20.0)  # input untouched


class TestShuffle:
    def test_chunk_multiset_preserved(self):
        rng = np.random.default_rng(2)
        fhr = rng.uniform(100, 180, 240)
        r = CtgRecord(id="s", hz=1, fhr=fhr, toco=rng.uniform(0, 100, 240),
                      mask=np.ones(240, dtype=bool))
        out = shuffle_chunks(r, chunk_s=60, seed=4)
        orig = {tuple(fhr[i:i + 60]) for i in range(0, 240, 60)}
        got = {tuple(out.fhr[i:i + 60]) for i in range(0, 240, 60)}
        assert orig == got
        assert not np.array_equal(out.fhr, fhr)  # 4 chunks, permuted for this seed

    def test_channels_move_together(self):
        n = 180
        fhr = np.repeat([100.0, 120.0, 140.0], 60)
        toco = np.repeat([10.0, 20.0, 30.0], 60)
        r = CtgRecord(id="s", hz=1, fhr=fhr, toco=toco, mask=np.ones(n, dtype=bool))
        out = shuffle_chunks(r, chunk_s=60, seed=1)
        pairs = {(out.fhr[i], out.toco[i]) for i in range(0, n, 60)}
        assert pairs == {(100.0, 10.0), (120.0, 20.0), (140.0, 30.0)}

    def test_non_divisible_rejected(self):
        with pytest.raises(LengthError):
            shuffle_chunks(make_record(n=250), chunk_s=60, seed=0)

    def test_deterministic_per_record_id(self):
        a = shuffle_chunks(make_record(n=240, rec_id="a"), 60, seed=9)
        b = shuffle_chunks(make_record(n=240, rec_id="a"), 60, seed=9)
        np.testing.assert_array_equal(a.fhr, b.fhr)


class TestMaskSegments:
    def test_fraction_zero_is_identity(self):
        r = make_record(n=300)
        out = mask_segments(r, 0.0, 60, seed=3)
        np.testing.assert_array_equal(out.fhr, r.fhr)
        np.testing.assert_array_equal(out.mask, r.mask)

    def test_masks_rounded_share_of_segments(self):
        r = make_record(n=600)
        out = mask_segments(r, 0.25, 60, seed=3)
        # 10 segments, round(2.5) -> expect 2 fully hidden minutes
        hidden = sum(1 for i in range(0, 600, 60) if not out.mask[i:i + 60].any())
        assert hidden == round(0.25 * 10)
        assert np.all(out.fhr[~out.mask] == 0.0)
        out.validate()

    def test_audit_ids_match_effect(self):
        r = make_record(n=600, rec_id="audit")
        ids = masked_segment_ids(r, 0.2, 60, seed=8)
        out = mask_segments(r, 0.2, 60, seed=8)
        for seg in range(10):
            fully_hidden = not out.mask[seg * 60:(seg + 1) * 60].any()
            assert fully_hidden == (seg in set(ids))

    def test_iteration_order_independent(self):
        # per-record seeding: outcome depends on (seed, id), not processing order
        records = [make_record(n=240, rec_id=f"r{i}") for i in range(6)]
        serial = [mask_segments(r, 0.3, 60, seed=5) for r in records]
        reverse = [mask_segments(r, 0.3, 60, seed=5) for r in reversed(records)][::-1]
        for a, b in zip(serial, reverse):
            np.testing.assert_array_equal(a.mask, b.mask)
        shuffled_out = [shuffle_chunks(r, 60, seed=5) for r in records]
        shuffled_rev = [shuffle_chunks(r, 60, seed=5) for r in reversed(records)][::-1]
        for a, b in zip(shuffled_out, shuffled_rev):
            np.testing.assert_array_equal(a.fhr, b.fhr)


class TestPreprocessor:
    def test_pipeline_matches_manual_composition(self, raw_cohort_4hz):
        prep = Preprocessor(target_hz=1, pad_len=720)
        out = prep.fit_transform(raw_cohort_4hz)
        for raw, got in zip(raw_cohort_4hz, out):
            manual = pad_to(downsample(raw, 1), 720)
            np.testing.assert_array_equal(got.fhr, manual.fhr)
            np.testing.assert_array_equal(got.mask, manual.mask)
            assert got.extent == manual.extent

    def test_get_params_round_trip(self):
        prep = Preprocessor(target_hz=1, pad_len=720)
        clone = Preprocessor(**prep.get_params())
        assert clone.get_params() == prep.get_params()
