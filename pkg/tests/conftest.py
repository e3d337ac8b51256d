"""Shared fixtures and independent oracles used across the test suite.

The oracles here are deliberately written as direct pairwise/recursive rules
over node metadata and token lists, not by calling the library's builders, so
they can catch construction bugs.
"""

from __future__ import annotations

import numpy as np
import pytest

from mvgqa.document import HybridDocument, Paragraph, Question, Table, AnswerType
from mvgqa.expression import Leaf, OpNode
from mvgqa.graph import Node, NodeKind

WORDS = ["revenue", "cost", "profit", "north", "south", "total", "net", "gross"]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_document(rng: np.random.Generator, doc_id: str = "doc") -> tuple[HybridDocument, Question]:
    """Small random doc: table <= 4x4, <= 2 paragraphs of <= 3 sentences."""
    n_rows = int(rng.integers(2, 5))
    n_cols = int(rng.integers(2, 5))

    def cell_text() -> str:
        kind = rng.integers(0, 4)
        if kind == 0:
            return str(int(rng.integers(0, 50)))  # duplicates likely
        if kind == 1:
            return f"{rng.choice(WORDS)} {int(rng.integers(0, 500))}"
        if kind == 2:
            return ""  # empty cell
        return str(rng.choice(WORDS))

    cells = tuple(tuple(cell_text() for _ in range(n_cols)) for _ in range(n_rows))
    paras = []
    for order in range(int(rng.integers(1, 3))):
        sents = []
        for _ in range(int(rng.integers(1, 4))):
            toks = [str(rng.choice(WORDS)) for _ in range(int(rng.integers(2, 6)))]
            if rng.random() < 0.6:
                toks.append(str(int(rng.integers(0, 50))))
            sents.append(" ".join(toks) + ".")
        paras.append(Paragraph(order, " ".join(sents)))
    q = Question(
        id=f"{doc_id}-q0",
        text=f"what was the {rng.choice(WORDS)} {int(rng.integers(0, 50))}?",
        answer_type=AnswerType.SPAN,
        answer_spans=("x",),
    )
    doc = HybridDocument(id=doc_id, table=Table(cells=cells), paragraphs=tuple(paras),
                         questions=(q,))
    return doc, q


# ------------------------------------------------------- graph edge oracles


def _is_token(n: Node) -> bool:
    return n.kind in (NodeKind.WORD, NodeKind.NUMBER)


def oracle_tabular_edge(a: Node, b: Node) -> bool:
    if a.kind is NodeKind.CELL and b.kind is NodeKind.CELL:
        return (a.row == b.row and abs(a.col - b.col) == 1) or (
            a.col == b.col and abs(a.row - b.row) == 1
        )
    if a.kind is NodeKind.CELL and b.kind is NodeKind.ROW:
        return a.row == b.row
    if a.kind is NodeKind.CELL and b.kind is NodeKind.COLUMN:
        return a.col == b.col
    if _is_token(a) and a.cell is not None and b.kind is NodeKind.CELL:
        return a.cell == b.index
    return False


def oracle_relation_edge(a: Node, b: Node, nodes: list[Node],
                         question_bridging: bool = True) -> bool:
    # containment
    if _is_token(a):
        if a.cell is not None and b.kind is NodeKind.CELL and a.cell == b.index:
            return True
        if a.cell is None and a.sentence is not None and b.index == a.sentence:
            return True
    if a.kind is NodeKind.CELL and b.kind is NodeKind.ROW and a.row == b.row:
        return True
    if a.kind is NodeKind.CELL and b.kind is NodeKind.COLUMN and a.col == b.col:
        return True

    def bridgeable(w: Node) -> bool:
        if not _is_token(w) or w.cell is not None:
            return False
        if w.sentence is not None and nodes[w.sentence].kind is NodeKind.QUESTION:
            return question_bridging
        return True

    cell_tokens = [n for n in nodes if _is_token(n) and n.cell is not None]
    # bridging: free token -- matching cell
    if bridgeable(a) and b.kind is NodeKind.CELL:
        if any(t.cell == b.index and t.text == a.text for t in cell_tokens):
            return True
    # bridging: owner sentence/question -- matched cell's row/column
    if a.kind in (NodeKind.SENTENCE, NodeKind.QUESTION) and b.kind in (
        NodeKind.ROW, NodeKind.COLUMN
    ):
        for w in nodes:
            if not bridgeable(w) or w.sentence != a.index:
                continue
            for t in cell_tokens:
                if t.text != w.text:
                    continue
                cell = nodes[t.cell]
                if b.kind is NodeKind.ROW and cell.row == b.row:
                    return True
                if b.kind is NodeKind.COLUMN and cell.col == b.col:
                    return True
    return False


def oracle_numerical_edge(a: Node, b: Node) -> bool:
    return (
        a.kind is NodeKind.NUMBER
        and b.kind is NodeKind.NUMBER
        and a.numeric_value > b.numeric_value
    )


def oracle_adjacency(nodes: list[Node], edge_fn, symmetric: bool) -> np.ndarray:
    n = len(nodes)
    A = np.zeros((n, n), dtype=np.int64)
    for a in nodes:
        for b in nodes:
            if a.index == b.index:
                continue
            if edge_fn(a, b):
                A[a.index, b.index] = 1
                if symmetric:
                    A[b.index, a.index] = 1
    return A


# ------------------------------------------------- expression tree oracles


def random_tree(rng: np.random.Generator, depth: int = 5):
    if depth == 0 or rng.random() < 0.35:
        v = float(rng.integers(-50, 51))
        if rng.random() < 0.3:
            v += float(np.round(rng.random(), 2))
        return Leaf(v)
    sym = str(rng.choice(["+", "-", "*", "/", "avg"]))
    return OpNode(sym, random_tree(rng, depth - 1), random_tree(rng, depth - 1))


def oracle_recursive_descent(tokens: list[str]):
    """Independent pre-order parser returning Leaf/OpNode."""
    pos = 0

    def parse():
        nonlocal pos
        tok = tokens[pos]
        pos += 1
        if tok in ("+", "-", "*", "/", "avg"):
            left = parse()
            right = parse()
            return OpNode(tok, left, right)
        return Leaf(float(tok))

    tree = parse()
    assert pos == len(tokens), "oracle: leftover tokens"
    return tree


def oracle_stack_machine(tokens: list[str]) -> float:
    """Evaluate a pre-order serialization right-to-left with a value stack."""
    stack: list[float] = []
    for tok in reversed(tokens):
        if tok in ("+", "-", "*", "/", "avg"):
            a = stack.pop()
            b = stack.pop()
            if tok == "+":
                stack.append(a + b)
            elif tok == "-":
                stack.append(a - b)
            elif tok == "*":
                stack.append(a * b)
            elif tok == "/":
                if abs(b) < 1e-12:
                    raise ZeroDivisionError
                stack.append(a / b)
            else:
                stack.append((a + b) / 2.0)
        else:
            stack.append(float(tok))
    assert len(stack) == 1
    return stack[0]
