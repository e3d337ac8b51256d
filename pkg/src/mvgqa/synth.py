"""Deterministic synthetic fixture: 32 questions over 8 small documents.

16 arithmetic questions cover all six arithmetic operators (including nested
depth-2 derivations), 12 are span/spans, 4 are count; all five scales appear.
Used by the overfit training harness and the CLI demo.
"""

from __future__ import annotations

from .document import (
    AnswerType,
    HybridDocument,
    Operator,
    Paragraph,
    Question,
    Scale,
    Table,
)
from .expression import evaluate, preorder_parse

_ITEM_A = ("widgets", "gears", "pumps", "valves", "cables", "motors", "filters", "sensors")
_ITEM_B = ("north", "south", "east", "west", "delta", "omega", "sigma", "kappa")
_ADJ = (
    "remarkably strong", "surprisingly weak", "broadly stable", "notably volatile",
    "fairly resilient", "clearly improving", "slightly lagging", "highly consistent",
)

# per-document pair of (derivation template, operator name, scale name)
_ARITH = {
    0: [("+ {a1} {b2}", "sum", "thousand"), ("- {b1} {a1}", "difference", "none")],
    1: [("* {a1} {b1}", "multiplication", "million"), ("/ {b2} {a2}", "division", "none")],
    2: [("avg {a1} {b1}", "average", "thousand"),
        ("/ - {b1} {a1} {a1}", "change-ratio", "percent")],
    3: [("+ {a1} + {a2} {b1}", "sum", "million"),
        ("- {b2} - {b1} {a1}", "difference", "none")],
    4: [("avg {a2} avg {a1} {b1}", "average", "billion"),
        ("* {a2} - {b1} {a1}", "multiplication", "none")],
    5: [("/ - {b2} {a2} {a2}", "change-ratio", "percent"),
        ("+ {p1} {a1}", "sum", "thousand")],
    6: [("- {b1} {p1}", "difference", "none"), ("avg {a1} {a2}", "average", "none")],
    7: [("* {b1} {b2}", "multiplication", "billion"), ("/ {a2} {b1}", "division", "none")],
}

_ARITH_TEXT = {
    "sum": "what was the combined total of {expr} in {scale} terms",
    "difference": "what was the change between {expr}",
    "multiplication": "what was the product of {expr} at {scale} scale",
    "division": "what was the ratio of {expr}",
    "average": "what was the average of {expr} in {scale} terms",
    "change-ratio": "what was the percentage change ratio of {expr}",
}


def overfit_fixture() -> list[HybridDocument]:
    docs = []
    for i in range(8):
        a, b, adj = _ITEM_A[i], _ITEM_B[i], _ADJ[i]
        base = 100 + 31 * i
        v = {
            "a1": base + 3, "a2": base + 17,
            "b1": base + 8, "b2": base + 24,
            "p1": base + 40,
        }
        table = Table(
            cells=(
                ("segment", "alpha", "beta"),
                (a, str(v["a1"]), str(v["a2"])),
                (b, str(v["b1"]), str(v["b2"])),
            )
        )
        paragraphs = (
            Paragraph(0, f"The {a} segment performed well this year. "
                         f"Shipments reached {v['p1']} units."),
            Paragraph(1, f"Analysts called the {b} line {adj} overall."),
        )
        questions = []
        for j, (deriv_tpl, op_name, scale_name) in enumerate(_ARITH[i]):
            derivation = deriv_tpl.format(**v)
            answer = evaluate(preorder_parse(derivation.split()))
            expr_words = " and ".join(
                tok for tok in deriv_tpl.replace("{", "").replace("}", "").split()
                if tok.isalnum()
            )
            text = _ARITH_TEXT[op_name].format(expr=f"{expr_words} for {a} and {b}",
                                               scale=scale_name) + "?"
            questions.append(
                Question(
                    id=f"d{i}q{j}", text=text, answer_type=AnswerType.ARITHMETIC,
                    answer_number=answer, scale=Scale(scale_name),
                    operator=Operator(op_name), derivation=derivation,
                    source="table" if "p1" not in deriv_tpl else "table-text",
                )
            )
        if i < 4:
            questions.append(
                Question(
                    id=f"d{i}q2",
                    text=f"how did analysts describe the {b} line?",
                    answer_type=AnswerType.SPAN,
                    answer_spans=(adj,),
                    scale=Scale.NONE,
                    operator=Operator.SPAN_IN_TEXT,
                    source="text",
                )
            )
            questions.append(
                Question(
                    id=f"d{i}q3",
                    text="how many segments are listed in the table?",
                    answer_spans=(a, b),
                    answer_type=AnswerType.COUNT,
                    answer_number=2.0,
                    scale=Scale.NONE,
                    operator=Operator.COUNT,
                    source="table",
                )
            )
        else:
            questions.append(
                Question(
                    id=f"d{i}q2",
                    text=f"which segment reported alpha of {v['a1']}?",
                    answer_type=AnswerType.SPAN,
                    answer_spans=(a,),
                    scale=Scale.NONE,
                    operator=Operator.CELL_IN_TABLE,
                    source="table",
                )
            )
            questions.append(
                Question(
                    id=f"d{i}q3",
                    text="which segments are listed in the table?",
                    answer_type=AnswerType.SPANS,
                    answer_spans=(a, b),
                    scale=Scale.NONE,
                    operator=Operator.SPANS,
                    source="table",
                )
            )
        docs.append(
            HybridDocument(
                id=f"doc{i}", table=table, paragraphs=paragraphs,
                questions=tuple(questions),
            )
        )
    return docs
