"""Text serialization of records and a word-level tokenizer.

A record becomes one line per 60-sample window:

    t=<minute>: FHR v1 ... v60 | TOCO u1 ... u60

Values are rounded to integers (banker's rounding via np.rint). Missing FHR
samples render as "-". Records carrying stride-window metadata keep their
original minute labels, so a strided recording reads t=0, t=2, ..., t=58.
The ``| TOCO ...`` block is omitted when serializing FHR only.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

from .errors import LengthError, ParameterError, VocabularyError
from .records import CtgRecord

NEWLINE = "<nl>"


def serialize_text(record: CtgRecord, style: str = "paired", window_s: int = 60) -> str:
    if style not in ("paired", "fhr-only"):
        raise ParameterError(f"unknown serialization style {style!r}")
    include_toco = style == "paired"
    if record.hz != 1:
        raise ParameterError(f"serialize_text expects a 1 Hz record, got {record.hz} Hz")
    n = len(record)
    if record.windows is not None and len(record.windows) > 0:
        starts = record.windows
        if n % len(starts) != 0:
            raise LengthError(f"record {record.id}: {n} samples do not split into {len(starts)} windows")
        line_len = n // len(starts)
        minutes = [s // 60 for s in starts]
    else:
        if n % window_s != 0:
            raise LengthError(f"record {record.id}: length {n} not divisible by line length {window_s}")
        line_len = window_s
        minutes = list(range(n // window_s))

    fhr_int = np.rint(record.fhr).astype(int)
    toco_int = np.rint(record.toco).astype(int)
    lines = []
    for i, minute in enumerate(minutes):
        lo, hi = i * line_len, (i + 1) * line_len
        fhr_words = ["-" if not record.mask[j] else str(fhr_int[j]) for j in range(lo, hi)]
        line = f"t={minute}: FHR " + " ".join(fhr_words)
        if include_toco:
            line += " | TOCO " + " ".join(str(v) for v in toco_int[lo:hi])
        lines.append(line)
    return "\n".join(lines)


@dataclass
class ParsedText:
    """Arrays recovered from serialized text; toco is None for FHR-only text."""

    minutes: list
    fhr: np.ndarray
    toco: np.ndarray | None
    mask: np.ndarray


def parse_serialized(text: str) -> ParsedText:
    """Invert serialize_text up to integer rounding."""
    minutes = []
    fhr_parts, toco_parts, mask_parts = [], [], []
    saw_toco = None
    for lineno, line in enumerate(text.split("\n")):
        if not line.strip():
            continue
        m = re.match(r"^t=(\d+): FHR (.*)$", line)
        if m is None:
            raise ParameterError(f"line {lineno} is not serialized record text: {line[:40]!r}")
        minutes.append(int(m.group(1)))
        body = m.group(2)
        if " | TOCO " in body:
            fhr_body, toco_body = body.split(" | TOCO ", 1)
            has_toco = True
        else:
            fhr_body, toco_body = body, ""
            has_toco = False
        if saw_toco is None:
            saw_toco = has_toco
        elif saw_toco != has_toco:
            raise ParameterError(f"line {lineno} mixes FHR-only and paired formats")

        fhr_vals, mask_vals = [], []
        for word in fhr_body.split(" "):
            if word == "-":
                fhr_vals.append(0.0)
                mask_vals.append(False)
            else:
                fhr_vals.append(float(int(word)))
                mask_vals.append(True)
        fhr_parts.append(fhr_vals)
        mask_parts.append(mask_vals)
        if has_toco:
            toco_parts.append([float(int(w)) for w in toco_body.split(" ")])

    fhr = np.array([v for part in fhr_parts for v in part])
    mask = np.array([v for part in mask_parts for v in part], dtype=bool)
    toco = np.array([v for part in toco_parts for v in part]) if saw_toco else None
    return ParsedText(minutes=minutes, fhr=fhr, toco=toco, mask=mask)


class Vocabulary:
    """Fixed word-level vocabulary with exact whitespace round-trip.

    Tokens are whitespace-separated words plus an explicit newline token.
    Unknown words raise VocabularyError naming the word and its character
    offset; there is no catch-all unknown id.
    """

    def __init__(self, tokens):
        self.tokens = list(tokens)
        if len(set(self.tokens)) != len(self.tokens):
            raise ParameterError("vocabulary contains duplicate tokens")
        self.index = {tok: i for i, tok in enumerate(self.tokens)}

    def __len__(self):
        return len(self.tokens)

    def __contains__(self, token):
        return token in self.index

    def tokenize(self, text: str) -> np.ndarray:
        ids = []
        for m in re.finditer(r"\n|[^\s]+", text):
            word = NEWLINE if m.group(0) == "\n" else m.group(0)
            idx = self.index.get(word)
            if idx is None:
                raise VocabularyError(f"unknown token {m.group(0)!r} at character offset {m.start()}")
            ids.append(idx)
        return np.array(ids, dtype=np.int64)

    def detokenize(self, ids) -> str:
        pieces = []
        for i in ids:
            tok = self.tokens[int(i)]
            if tok == NEWLINE:
                pieces.append("\n")
            else:
                if pieces and pieces[-1] != "\n":
                    pieces.append(" ")
                pieces.append(tok)
        return "".join(pieces)


def default_vocabulary(max_minute: int = 59, max_value: int = 240) -> Vocabulary:
    """Vocabulary covering every token serialize_text can emit."""
    tokens = [NEWLINE, "FHR", "TOCO", "|", "-"]
    tokens += [f"t={m}:" for m in range(max_minute + 1)]
    tokens += [str(v) for v in range(max_value + 1)]
    return Vocabulary(tokens)
