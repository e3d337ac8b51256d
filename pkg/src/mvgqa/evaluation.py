"""Exact-match and F1 scoring with answer-type/source breakdown and the
gold-operator / gold-scale override studies."""

from __future__ import annotations

import re
import string
from collections import Counter
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .document import HybridDocument, Question, Scale
from .expression import FinalAnswer, apply_scale
from .heads import AnswerPath, Prediction, route

_ARTICLES = re.compile(r"\b(a|an|the)\b")


def normalize_answer(s: str) -> str:
    """Lowercase; strip punctuation, articles, and extra whitespace."""
    s = "".join(ch for ch in s.lower() if ch not in set(string.punctuation))
    s = _ARTICLES.sub(" ", s)
    return " ".join(s.split())


def _numeric_close(p: float, g: float) -> bool:
    return abs(p - g) <= 1e-4 * max(1.0, abs(g))


def exact_match(pred: FinalAnswer, gold: FinalAnswer) -> int:
    if pred.scale is not gold.scale:
        return 0
    if gold.is_numeric:
        return int(pred.is_numeric and _numeric_close(pred.value, gold.value))
    if pred.spans is None:
        return 0
    p = {normalize_answer(s) for s in pred.spans}
    g = {normalize_answer(s) for s in gold.spans}
    return int(p == g and len(p) > 0)


def _token_f1(pred_span: str, gold_span: str) -> float:
    p = Counter(normalize_answer(pred_span).split())
    g = Counter(normalize_answer(gold_span).split())
    same = sum((p & g).values())
    if same == 0:
        return 0.0
    precision = same / sum(p.values())
    recall = same / sum(g.values())
    return 2 * precision * recall / (precision + recall)


def f1(pred: FinalAnswer, gold: FinalAnswer) -> float:
    if pred.scale is not gold.scale:
        return 0.0
    if gold.is_numeric:
        return float(exact_match(pred, gold))
    if pred.spans is None or not pred.spans or not gold.spans:
        return 0.0
    # optimal one-to-one assignment maximizing summed token-level F1
    scores = np.array([[_token_f1(p, g) for g in gold.spans] for p in pred.spans])
    rows, cols = linear_sum_assignment(-scores)
    matched = scores[rows, cols].sum()
    precision = matched / len(pred.spans)
    recall = matched / len(gold.spans)
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


@dataclass
class Bucket:
    n: int = 0
    em: float = 0.0
    f1: float = 0.0

    def finalize(self) -> None:
        if self.n:
            self.em /= self.n
            self.f1 /= self.n


@dataclass
class EvalReport:
    em: float
    f1: float
    n: int
    operator_accuracy: float
    scale_accuracy: float
    breakdown: dict[str, Bucket] = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "em": self.em,
            "f1": self.f1,
            "n": self.n,
            "operator_accuracy": self.operator_accuracy,
            "scale_accuracy": self.scale_accuracy,
            "breakdown": {
                k: {"n": b.n, "em": b.em, "f1": b.f1} for k, b in self.breakdown.items()
            },
        }

    def to_text(self) -> str:
        lines = [
            f"{'bucket':<28}{'n':>5}{'EM':>9}{'F1':>9}",
            f"{'overall':<28}{self.n:>5}{self.em:>9.4f}{self.f1:>9.4f}",
        ]
        for key in sorted(self.breakdown):
            b = self.breakdown[key]
            lines.append(f"{key:<28}{b.n:>5}{b.em:>9.4f}{b.f1:>9.4f}")
        lines.append(f"operator accuracy: {self.operator_accuracy:.4f}")
        lines.append(f"scale accuracy: {self.scale_accuracy:.4f}")
        return "\n".join(lines)


def gold_answer(q: Question) -> FinalAnswer:
    if q.answer_number is not None:
        return apply_scale(q.answer_number, q.scale)
    return apply_scale(list(q.answer_spans or ()), q.scale)


def prediction_answer(
    pred: Prediction,
    gold_q: Question,
    doc: HybridDocument,
    use_gold_operator: bool = False,
    use_gold_scale: bool = False,
) -> FinalAnswer:
    from .document import Operator
    from .training import derive_operator

    op = derive_operator(gold_q, doc) if use_gold_operator else pred.operator
    scale = gold_q.scale if use_gold_scale else pred.scale
    if route(op) is AnswerPath.SPAN:
        if op is Operator.COUNT:
            return apply_scale(float(len(pred.spans)),
                               gold_q.scale if use_gold_scale else Scale.NONE)
        spans = pred.spans if op is Operator.SPANS else pred.spans[:1]
        return apply_scale(list(spans), scale)
    if pred.tree_value is None:
        return FinalAnswer(spans=None, value=None, scale=scale, normalized=True)
    return apply_scale(pred.tree_value, scale)


def evaluate_dataset(
    predictions: list[Prediction],
    docs: list[HybridDocument],
    use_gold_operator: bool = False,
    use_gold_scale: bool = False,
) -> EvalReport:
    from .training import derive_operator

    golds: dict[str, tuple[HybridDocument, Question]] = {}
    for doc in docs:
        for q in doc.questions:
            golds[q.id] = (doc, q)
    pred_ids = {p.question_id for p in predictions}
    missing = sorted(set(golds) - pred_ids)
    extra = sorted(pred_ids - set(golds))
    if missing or extra:
        raise ValueError(f"prediction/gold id mismatch: missing={missing} extra={extra}")

    total_em = total_f1 = 0.0
    op_hits = scale_hits = 0
    buckets: dict[str, Bucket] = {}
    for p in predictions:
        doc, q = golds[p.question_id]
        pa = prediction_answer(p, q, doc, use_gold_operator, use_gold_scale)
        ga = gold_answer(q)
        em_q = exact_match(pa, ga)
        f1_q = max(float(em_q), f1(pa, ga))
        total_em += em_q
        total_f1 += f1_q
        op_hits += int(p.operator is derive_operator(q, doc))
        scale_hits += int((q.scale if use_gold_scale else p.scale) is q.scale)
        key = f"{q.answer_type.value}|{q.source or 'table-text'}"
        b = buckets.setdefault(key, Bucket())
        b.n += 1
        b.em += em_q
        b.f1 += f1_q
    for b in buckets.values():
        b.finalize()
    n = len(predictions)
    return EvalReport(
        em=total_em / n if n else 0.0,
        f1=total_f1 / n if n else 0.0,
        n=n,
        operator_accuracy=op_hits / n if n else 0.0,
        scale_accuracy=scale_hits / n if n else 0.0,
        breakdown=buckets,
    )
