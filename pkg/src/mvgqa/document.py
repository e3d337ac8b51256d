"""Hybrid table-text documents: dataset parsing, tokenization, number parsing.

A dataset file is a JSON array of documents, each holding one table, its
paragraphs, and the annotated questions.  All types are plain immutable
dataclasses; validation runs once at parse time.
"""

from __future__ import annotations

import enum
import json
import math
import re
from dataclasses import dataclass


class DatasetParseError(ValueError):
    """Malformed JSON or schema violation; carries a byte offset when known."""

    def __init__(self, message: str, offset: int | None = None):
        super().__init__(message)
        self.offset = offset


class ValidationError(ValueError):
    """A document violates a type invariant; names the offending document."""


class Scale(enum.Enum):
    NONE = "none"
    THOUSAND = "thousand"
    MILLION = "million"
    BILLION = "billion"
    PERCENT = "percent"


class Operator(enum.Enum):
    SPAN_IN_TEXT = "span-in-text"
    CELL_IN_TABLE = "cell-in-table"
    SPANS = "spans"
    COUNT = "count"
    SUM = "sum"
    AVERAGE = "average"
    MULTIPLICATION = "multiplication"
    DIVISION = "division"
    DIFFERENCE = "difference"
    CHANGE_RATIO = "change-ratio"


SPAN_OPERATORS = frozenset(
    {Operator.SPAN_IN_TEXT, Operator.CELL_IN_TABLE, Operator.SPANS, Operator.COUNT}
)
ARITHMETIC_OPERATORS = frozenset(set(Operator) - SPAN_OPERATORS)


class AnswerType(enum.Enum):
    SPAN = "span"
    SPANS = "spans"
    COUNT = "count"
    ARITHMETIC = "arithmetic"


@dataclass(frozen=True)
class Table:
    cells: tuple[tuple[str, ...], ...]  # row-major
    header_rows: int = 1
    header_cols: int = 1

    @property
    def n_rows(self) -> int:
        return len(self.cells)

    @property
    def n_cols(self) -> int:
        return len(self.cells[0]) if self.cells else 0


@dataclass(frozen=True)
class Paragraph:
    order: int
    text: str


@dataclass(frozen=True)
class Question:
    id: str
    text: str
    answer_type: AnswerType
    answer_spans: tuple[str, ...] | None = None
    answer_number: float | None = None
    scale: Scale = Scale.NONE
    operator: Operator | None = None
    derivation: str | None = None
    source: str | None = None  # "table" | "text" | "table-text", reporting only


@dataclass(frozen=True)
class HybridDocument:
    id: str
    table: Table
    paragraphs: tuple[Paragraph, ...]
    questions: tuple[Question, ...]


# Numeric tokens keep digit-internal commas whole; every other punctuation
# character becomes its own token.
_TOKEN_RE = re.compile(r"\d+(?:,\d+)*|\w+|[^\w\s]")


def tokenize(text: str) -> list[tuple[str, tuple[int, int]]]:
    """Lowercased tokens with (start, end) character spans into `text`."""
    return [
        (m.group(0).lower(), (m.start(), m.end())) for m in _TOKEN_RE.finditer(text)
    ]


def parse_number(token: str) -> float | None:
    """Parse a financial-style numeric token; None when not numeric.

    Strips commas, "$", "%" and whitespace; "(x)" means -x.
    """
    s = token.strip()
    if len(s) >= 2 and s.startswith("(") and s.endswith(")"):
        inner = parse_number(s[1:-1])
        return None if inner is None else -inner
    s = s.replace(",", "").replace("$", "").strip()
    if s.endswith("%"):
        s = s[:-1]
    if not s:
        return None
    try:
        value = float(s)
    except ValueError:
        return None
    if not math.isfinite(value):
        return None
    return value


def _expect(cond: bool, msg: str, doc_id: str | None = None) -> None:
    if not cond:
        raise ValidationError(msg if doc_id is None else f"document {doc_id!r}: {msg}")


def validate_document(doc: HybridDocument) -> None:
    t = doc.table
    _expect(t.n_rows >= 2 and t.n_cols >= 2, "table must be at least 2x2", doc.id)
    for r, row in enumerate(t.cells):
        _expect(
            len(row) == t.n_cols,
            f"ragged table: row {r} has {len(row)} cells, expected {t.n_cols}",
            doc.id,
        )
    _expect(0 <= t.header_rows < t.n_rows, "header_rows out of range", doc.id)
    _expect(0 <= t.header_cols < t.n_cols, "header_cols out of range", doc.id)
    _expect(len(doc.paragraphs) >= 1, "need at least one paragraph", doc.id)
    for p in doc.paragraphs:
        _expect(p.text.strip() != "", f"paragraph {p.order} is empty", doc.id)
    seen: set[str] = set()
    for q in doc.questions:
        _expect(q.id not in seen, f"duplicate question id {q.id!r}", doc.id)
        seen.add(q.id)
        if q.answer_type is AnswerType.ARITHMETIC:
            _expect(
                q.answer_number is not None,
                f"question {q.id!r}: arithmetic answer must be numeric",
                doc.id,
            )
        elif q.answer_type is AnswerType.COUNT:
            _expect(
                q.answer_number is not None
                and q.answer_number >= 0
                and float(q.answer_number).is_integer(),
                f"question {q.id!r}: count answer must be a non-negative integer",
                doc.id,
            )


def _parse_question(raw: dict, doc_id: str) -> Question:
    try:
        answer_type = AnswerType(raw["answer_type"])
    except (KeyError, ValueError) as e:
        raise DatasetParseError(f"document {doc_id!r}: bad answer_type ({e})")
    answer = raw.get("answer")
    spans: tuple[str, ...] | None = None
    number: float | None = None
    if isinstance(answer, list):
        spans = tuple(str(a) for a in answer)
        # count questions may annotate the countable spans; the gold number
        # is then their count
        if answer_type is AnswerType.COUNT:
            number = float(len(spans))
    elif isinstance(answer, (int, float)):
        number = float(answer)
    op = raw.get("operator")
    return Question(
        id=str(raw["id"]),
        text=str(raw["text"]),
        answer_type=answer_type,
        answer_spans=spans,
        answer_number=number,
        scale=Scale(raw.get("scale", "none")),
        operator=Operator(op) if op else None,
        derivation=raw.get("derivation"),
        source=raw.get("source"),
    )


def parse_dataset(raw: bytes | str) -> list[HybridDocument]:
    if isinstance(raw, bytes):
        raw = raw.decode("utf-8")
    try:
        data = json.loads(raw)
    except json.JSONDecodeError as e:
        raise DatasetParseError(f"malformed JSON at byte {e.pos}: {e.msg}", e.pos)
    if not isinstance(data, list):
        raise DatasetParseError("top level must be an array of documents")
    docs = []
    for entry in data:
        try:
            table = Table(
                cells=tuple(tuple(str(c) for c in row) for row in entry["table"]["cells"]),
                header_rows=int(entry["table"].get("header_rows", 1)),
                header_cols=int(entry["table"].get("header_cols", 1)),
            )
            doc = HybridDocument(
                id=str(entry["id"]),
                table=table,
                paragraphs=tuple(
                    Paragraph(order=int(p["order"]), text=str(p["text"]))
                    for p in entry["paragraphs"]
                ),
                questions=tuple(
                    _parse_question(q, str(entry["id"])) for q in entry["questions"]
                ),
            )
        except (KeyError, TypeError) as e:
            raise DatasetParseError(f"missing or malformed field: {e}")
        validate_document(doc)
        docs.append(doc)
    return docs


def _question_to_json(q: Question) -> dict:
    out: dict = {"id": q.id, "text": q.text, "answer_type": q.answer_type.value}
    if q.answer_spans is not None:
        out["answer"] = list(q.answer_spans)
    elif q.answer_number is not None:
        out["answer"] = q.answer_number
    out["scale"] = q.scale.value
    if q.operator is not None:
        out["operator"] = q.operator.value
    if q.derivation is not None:
        out["derivation"] = q.derivation
    if q.source is not None:
        out["source"] = q.source
    return out


def serialize_dataset(docs: list[HybridDocument]) -> bytes:
    data = [
        {
            "id": d.id,
            "table": {
                "cells": [list(row) for row in d.table.cells],
                "header_rows": d.table.header_rows,
                "header_cols": d.table.header_cols,
            },
            "paragraphs": [{"order": p.order, "text": p.text} for p in d.paragraphs],
            "questions": [_question_to_json(q) for q in d.questions],
        }
        for d in docs
    ]
    return json.dumps(data, ensure_ascii=False, sort_keys=True).encode("utf-8")
