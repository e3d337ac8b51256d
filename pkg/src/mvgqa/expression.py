"""Binary arithmetic expression trees: pre-order (de)serialization, evaluation,
and final-answer scale normalization."""

from __future__ import annotations

import math
from dataclasses import dataclass

from .document import Scale

OPERATOR_SYMBOLS = ("+", "-", "*", "/", "avg")

SCALE_FACTOR = {
    Scale.NONE: 1.0,
    Scale.THOUSAND: 1e3,
    Scale.MILLION: 1e6,
    Scale.BILLION: 1e9,
    Scale.PERCENT: 0.01,
}


class EvaluationError(ArithmeticError):
    pass


class ExprParseError(ValueError):
    def __init__(self, message: str, position: int):
        super().__init__(f"{message} (at token {position})")
        self.position = position


@dataclass(frozen=True)
class Leaf:
    value: float
    provenance: int | None = None  # source node index; None for constants


@dataclass(frozen=True)
class OpNode:
    symbol: str
    left: "ExpressionTree"
    right: "ExpressionTree"


ExpressionTree = Leaf | OpNode


def evaluate(tree: ExpressionTree) -> float:
    if isinstance(tree, Leaf):
        return tree.value
    a = evaluate(tree.left)
    b = evaluate(tree.right)
    if tree.symbol == "+":
        out = a + b
    elif tree.symbol == "-":
        out = a - b
    elif tree.symbol == "*":
        out = a * b
    elif tree.symbol == "/":
        if abs(b) < 1e-12:
            raise EvaluationError(f"division by zero: {a} / {b}")
        out = a / b
    elif tree.symbol == "avg":
        out = (a + b) / 2.0
    else:
        raise EvaluationError(f"unknown operator {tree.symbol!r}")
    if not math.isfinite(out):
        raise EvaluationError(f"non-finite result from {tree.symbol!r}")
    return out


def format_number(value: float) -> str:
    if float(value).is_integer() and abs(value) < 1e15:
        return str(int(value))
    return repr(float(value))


def preorder_serialize(tree: ExpressionTree) -> list[str]:
    if isinstance(tree, Leaf):
        return [format_number(tree.value)]
    return [tree.symbol] + preorder_serialize(tree.left) + preorder_serialize(tree.right)


def preorder_parse(tokens: list[str]) -> ExpressionTree:
    """Parse exactly one pre-order expression; reject leftovers or truncation."""

    def parse_at(pos: int) -> tuple[ExpressionTree, int]:
        if pos >= len(tokens):
            raise ExprParseError("unexpected end of tokens", pos)
        tok = tokens[pos]
        if tok in OPERATOR_SYMBOLS:
            left, pos = parse_at(pos + 1)
            right, pos = parse_at(pos)
            return OpNode(tok, left, right), pos
        try:
            value = float(tok)
        except ValueError:
            raise ExprParseError(f"not an operator or number: {tok!r}", pos)
        return Leaf(value), pos + 1

    tree, end = parse_at(0)
    if end != len(tokens):
        raise ExprParseError("trailing tokens after expression", end)
    return tree


@dataclass(frozen=True)
class FinalAnswer:
    """A scored answer: either a scale-normalized number or a span list."""

    spans: tuple[str, ...] | None
    value: float | None
    scale: Scale
    normalized: bool = False  # guard: the scale factor is applied exactly once

    @property
    def is_numeric(self) -> bool:
        return self.value is not None


def apply_scale(answer: float | list[str] | tuple[str, ...], scale: Scale) -> FinalAnswer:
    """Normalize a raw prediction by its scale; spans keep the scale attached."""
    if isinstance(answer, (list, tuple)):
        return FinalAnswer(spans=tuple(answer), value=None, scale=scale, normalized=True)
    return FinalAnswer(
        spans=None, value=float(answer) * SCALE_FACTOR[scale], scale=scale, normalized=True
    )


def round_for_report(value: float) -> float:
    return round(value, 4)
