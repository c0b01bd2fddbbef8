"""Text serialization, parsing, and the token vocabulary."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_record
from ctgbench.errors import LengthError, ParameterError, VocabularyError
from ctgbench.records import CtgRecord
from ctgbench.text import (
    NEWLINE,
    Vocabulary,
    default_vocabulary,
    parse_serialized,
    serialize_text,
)


def build_two_minutes():
    fhr = np.concatenate([np.full(60, 141.4), np.full(60, 119.6)])
    toco = np.concatenate([np.full(60, 10.0), np.full(60, 55.5)])
    mask = np.ones(120, dtype=bool)
    mask[3] = False
    fhr[3] = 0.0
    return CtgRecord(id="two", hz=1, fhr=fhr, toco=toco, mask=mask)


class TestSerialize:
    def test_exact_layout_hand_checked(self):
        text = serialize_text(build_two_minutes(), style="paired")
        lines = text.split("\n")
        assert len(lines) == 2
        head, toco_part = lines[0].split(" | ")
        fields = head.split(" ")
        assert fields[0] == "t=0:" and fields[1] == "FHR"
        values = fields[2:]
        assert len(values) == 60
        assert values[3] == "-"  # masked sample
        assert values[0] == "141"  # np.rint of 141.4
        assert toco_part.split(" ")[0] == "TOCO"
        assert toco_part.split(" ")[1:][0] == "10"
        # second minute: rounding of 119.6 and 55.5 (round-half-even -> 56)
        assert lines[1].startswith("t=1: FHR 120")
        assert lines[1].split(" | TOCO ")[1].split(" ")[0] == "56"

    def test_fhr_only_style_has_no_toco(self):
        text = serialize_text(build_two_minutes(), style="fhr-only")
        assert "TOCO" not in text and "|" not in text
        assert text.split("\n")[0].split(" ")[1] == "FHR"

    def test_unknown_style_rejected(self):
        with pytest.raises(ParameterError, match="style"):
            serialize_text(build_two_minutes(), style="rich")

    def test_non_divisible_length_rejected(self):
        with pytest.raises(LengthError):
            serialize_text(make_record(n=90, hz=1))

    def test_minute_labels_come_from_windows(self):
        r = make_record(n=120, hz=1, windows=(240, 480))
        text = serialize_text(r)
        assert text.split("\n")[0].startswith("t=4:")
        assert text.split("\n")[1].startswith("t=8:")


class TestParse:
    def test_round_trip_values_and_mask(self):
        r = build_two_minutes()
        parsed = parse_serialized(serialize_text(r))
        assert parsed.minutes == [0, 1]
        assert parsed.fhr.shape == (120,)
        assert not parsed.mask[3]
        np.testing.assert_array_equal(parsed.fhr[parsed.mask], np.rint(r.fhr[r.mask]))
        np.testing.assert_array_equal(parsed.toco, np.rint(r.toco))

    def test_round_trip_fhr_only(self):
        parsed = parse_serialized(serialize_text(build_two_minutes(), style="fhr-only"))
        assert parsed.toco is None
        assert parsed.minutes == [0, 1]

    def test_rejects_mixed_styles(self):
        paired = serialize_text(build_two_minutes())
        bare = serialize_text(build_two_minutes(), style="fhr-only")
        mixed = paired.split("\n")[0] + "\n" + bare.split("\n")[1]
        with pytest.raises(ParameterError, match="mix"):
            parse_serialized(mixed)


class TestVocabulary:
    def test_default_size_and_coverage(self):
        vocab = default_vocabulary()
        assert len(vocab) == 306
        # serialized text of any record must tokenize without gaps
        r = build_two_minutes()
        for style in ("paired", "fhr-only"):
            ids = vocab.tokenize(serialize_text(r, style=style))
            assert ids.ndim == 1 and len(ids) > 0

    def test_tokenize_detokenize_round_trip(self):
        vocab = default_vocabulary()
        text = serialize_text(build_two_minutes())
        assert vocab.detokenize(vocab.tokenize(text)) == text

    def test_unknown_token_names_offset(self):
        vocab = default_vocabulary()
        with pytest.raises(VocabularyError, match="'a' at character offset 5"):
            vocab.tokenize("t=0: a")

    def test_duplicate_tokens_rejected(self):
        with pytest.raises(ParameterError, match="duplicate"):
            Vocabulary(["a", "b", "a"])

    def test_newline_is_a_token(self):
        vocab = default_vocabulary()
        ids = vocab.tokenize("120\n121")
        assert len(ids) == 3
        assert vocab.detokenize(ids) == "120\n121"

    @given(st.lists(st.integers(min_value=0, max_value=240), min_size=1, max_size=40))
    @settings(max_examples=50, deadline=None)
    def test_numeric_round_trip_property(self, values):
        vocab = default_vocabulary()
        text = " ".join(str(v) for v in values)
        assert vocab.detokenize(vocab.tokenize(text)) == text


def test_serialized_tokens_per_minute_is_fixed():
    # paired line: label + FHR + 60 values + | + TOCO + 60 values = 124 tokens
    vocab = default_vocabulary()
    text = serialize_text(build_two_minutes())
    ids = vocab.tokenize(text)
    assert len(ids) == 2 * 124 + 1  # one newline token between the two lines
