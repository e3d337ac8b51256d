"""Operator/scale classifiers, answer-path routing, and span tagging."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from . import kernel as K
from .document import ARITHMETIC_OPERATORS, Operator, Scale
from .graph import MultiViewGraph, Node, NodeKind
from .kernel import Tensor
from .model import Model

OPERATOR_ORDER: tuple[Operator, ...] = tuple(Operator)
SCALE_ORDER: tuple[Scale, ...] = tuple(Scale)


class AnswerPath(enum.Enum):
    SPAN = "span"
    TREE = "tree"


@dataclass
class SummaryVectors:
    cls: Tensor  # mean over all nodes
    h_q: Tensor
    h_t: Tensor
    h_p: Tensor


@dataclass
class TagSequence:
    node_indices: list[int]  # taggable nodes: paragraph words, then cells
    probs: Tensor  # (n_taggable,)

    def labels(self) -> np.ndarray:
        return self.probs.data >= 0.5


@dataclass
class Prediction:
    question_id: str
    operator: Operator
    scale: Scale
    answer_spans: tuple[str, ...] | None = None
    answer_number: float | None = None
    # both candidate outputs, kept so gold-operator studies can re-route
    spans: tuple[str, ...] = ()
    tree_value: float | None = None
    tree_derivation: str | None = None

    def to_json(self) -> dict:
        answer: object
        if self.answer_spans is not None:
            answer = list(self.answer_spans)
        else:
            answer = self.answer_number
        out = {
            "question_id": self.question_id,
            "operator": self.operator.value,
            "scale": self.scale.value,
            "answer": answer,
        }
        if self.tree_derivation is not None:
            out["derivation"] = self.tree_derivation
        return out


def question_indices(graph: MultiViewGraph) -> list[int]:
    return [
        n.index
        for n in graph.nodes
        if n.kind is NodeKind.QUESTION
        or (n.kind in (NodeKind.WORD, NodeKind.NUMBER) and n.para is None and n.cell is None)
    ]


def table_indices(graph: MultiViewGraph) -> list[int]:
    return [
        n.index
        for n in graph.nodes
        if n.kind in (NodeKind.ROW, NodeKind.COLUMN, NodeKind.CELL) or n.cell is not None
    ]


def paragraph_indices(graph: MultiViewGraph) -> list[int]:
    return [
        n.index
        for n in graph.nodes
        if n.kind is NodeKind.SENTENCE
        or (n.kind in (NodeKind.WORD, NodeKind.NUMBER) and n.para is not None)
    ]


def summarize(z_bar: Tensor, graph: MultiViewGraph) -> SummaryVectors:
    def pooled(indices: list[int], what: str) -> Tensor:
        if not indices:
            raise ValueError(f"cannot summarize: no {what} nodes")
        return K.mean_pool(K.gather_rows(z_bar, indices), axis=0)

    return SummaryVectors(
        cls=K.mean_pool(z_bar, axis=0),
        h_q=pooled(question_indices(graph), "question"),
        h_t=pooled(table_indices(graph), "table"),
        h_p=pooled(paragraph_indices(graph), "paragraph"),
    )


def _ffn_head(x: Tensor, w1: Tensor, b1: Tensor, w2: Tensor, b2: Tensor) -> Tensor:
    hidden = K.gelu(K.add(K.matmul(x, w1), b1))
    return K.add(K.matmul(hidden, w2), b2)


def predict_operator(summary: SummaryVectors, model: Model) -> Tensor:
    """Distribution over the ten operators."""
    logits = _ffn_head(summary.cls, model["op_w1"], model["op_b1"],
                       model["op_w2"], model["op_b2"])
    return K.softmax(logits, axis=-1)


def predict_scale(summary: SummaryVectors, model: Model) -> Tensor:
    """Distribution over the five scales."""
    x = K.concat([summary.cls, summary.h_q, summary.h_t, summary.h_p])
    logits = _ffn_head(x, model["scale_w1"], model["scale_b1"],
                       model["scale_w2"], model["scale_b2"])
    return K.softmax(logits, axis=-1)


def route(operator: Operator) -> AnswerPath:
    return AnswerPath.TREE if operator in ARITHMETIC_OPERATORS else AnswerPath.SPAN


def taggable_indices(graph: MultiViewGraph) -> list[int]:
    words = [
        n.index
        for n in graph.nodes
        if n.kind in (NodeKind.WORD, NodeKind.NUMBER) and n.para is not None
    ]
    cells = [n.index for n in graph.nodes if n.kind is NodeKind.CELL]
    return words + cells


def tag_logits(z_bar: Tensor, graph: MultiViewGraph, model: Model) -> Tensor:
    # condition on the question summary: hash-bucket features carry no joint
    # question-context encoding, so per-node logits alone cannot distinguish
    # questions over the same document
    indices = taggable_indices(graph)
    feats = K.gather_rows(z_bar, indices)
    h_q = K.mean_pool(K.gather_rows(z_bar, question_indices(graph)), axis=0)
    tiled = K.matmul(
        Tensor(np.ones((len(indices), 1))), K.reshape(h_q, (1, model.config.d))
    )
    logits = _ffn_head(K.concat([feats, tiled], axis=1), model["tag_w1"],
                       model["tag_b1"], model["tag_w2"], model["tag_b2"])
    return K.reshape(logits, (len(indices),))


def tag_spans(
    z_bar: Tensor, graph: MultiViewGraph, model: Model
) -> tuple[TagSequence, list[str]]:
    """Per-node I/O probabilities and the extracted answer spans."""
    indices = taggable_indices(graph)
    probs = K.sigmoid(tag_logits(z_bar, graph, model))
    tags = TagSequence(node_indices=indices, probs=probs)
    return tags, extract_spans(tags, graph)


def extract_spans(tags: TagSequence, graph: MultiViewGraph) -> list[str]:
    """Maximal runs of I-tagged paragraph words (within one sentence) plus
    I-tagged cells; de-duplicated in first-occurrence order."""
    tagged = {
        idx for idx, on in zip(tags.node_indices, tags.labels()) if on
    }
    spans: list[str] = []
    run: list[Node] = []

    def flush():
        if run:
            spans.append(" ".join(n.text for n in run))
            run.clear()

    prev: Node | None = None
    for n in graph.nodes:
        if n.kind in (NodeKind.WORD, NodeKind.NUMBER) and n.para is not None:
            if n.index in tagged and (not run or prev.sentence == n.sentence):
                run.append(n)
            else:
                flush()
                if n.index in tagged:
                    run.append(n)
            prev = n
    flush()
    for n in graph.nodes:
        if n.kind is NodeKind.CELL and n.index in tagged:
            spans.append(n.text)

    seen: set[str] = set()
    out = []
    for s in spans:
        key = s.strip().lower()
        if key and key not in seen:
            seen.add(key)
            out.append(s)
    return out


def finalize_span_answer(
    operator: Operator, spans: list[str], scale: Scale, question_id: str = ""
) -> Prediction:
    if operator in ARITHMETIC_OPERATORS:
        raise ValueError(f"{operator} is not a span-family operator")
    if operator is Operator.COUNT:
        return Prediction(question_id, operator, Scale.NONE,
                          answer_number=float(len(spans)), spans=tuple(spans))
    if operator is Operator.SPANS:
        chosen = tuple(spans)
    else:  # span-in-text / cell-in-table: first span only
        chosen = tuple(spans[:1])
    return Prediction(question_id, operator, scale,
                      answer_spans=chosen, spans=tuple(spans))
