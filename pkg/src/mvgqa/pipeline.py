"""End-to-end inference: encode, classify, route, and answer one question."""

from __future__ import annotations

import numpy as np

from .decoder import DecodeError, decode_tree
from .document import HybridDocument, Question
from .encoder import encode
from .expression import EvaluationError, evaluate, preorder_serialize
from .graph import NodeKind, build_multi_view_graph
from .heads import (
    OPERATOR_ORDER,
    SCALE_ORDER,
    AnswerPath,
    Prediction,
    finalize_span_answer,
    predict_operator,
    predict_scale,
    route,
    summarize,
    tag_spans,
)
from .model import Model


def predict_question(
    model: Model,
    doc: HybridDocument,
    question: Question,
    beam: int = 1,
    gold_operator=None,
    gold_scale=None,
) -> Prediction:
    graph = build_multi_view_graph(doc, question, model.config.graph)
    z = encode(graph, model)
    summary = summarize(z, graph)
    operator = gold_operator or OPERATOR_ORDER[
        int(np.argmax(predict_operator(summary, model).data))
    ]
    scale = gold_scale or SCALE_ORDER[int(np.argmax(predict_scale(summary, model).data))]
    _, spans = tag_spans(z, graph, model)

    tree_value = None
    derivation = None
    if any(n.kind is NodeKind.NUMBER for n in graph.nodes):
        try:
            tree = decode_tree(z, graph, model, beam=beam)
            tree_value = evaluate(tree)
            derivation = " ".join(preorder_serialize(tree))
        except (DecodeError, EvaluationError):
            pass

    if route(operator) is AnswerPath.SPAN:
        pred = finalize_span_answer(operator, spans, scale, question.id)
        pred.tree_value = tree_value
        pred.tree_derivation = derivation
        return pred
    return Prediction(
        question_id=question.id,
        operator=operator,
        scale=scale,
        answer_number=tree_value,
        spans=tuple(spans),
        tree_value=tree_value,
        tree_derivation=derivation,
    )


def predict_dataset(
    model: Model,
    docs: list[HybridDocument],
    beam: int = 1,
    use_gold_operator: bool = False,
    use_gold_scale: bool = False,
) -> list[Prediction]:
    from .training import derive_operator

    preds = []
    for doc in docs:
        for q in doc.questions:
            preds.append(
                predict_question(
                    model, doc, q, beam=beam,
                    gold_operator=derive_operator(q, doc) if use_gold_operator else None,
                    gold_scale=q.scale if use_gold_scale else None,
                )
            )
    return sorted(preds, key=lambda p: p.question_id)
