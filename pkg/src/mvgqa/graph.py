"""Multi-granularity node enumeration and the three view adjacency builders.

Views share one node set.  Tabular and Relation adjacencies are symmetric 0/1
matrices with zero diagonal; the Numerical view is directed by strict value
order over Number nodes.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass

import numpy as np

from .document import HybridDocument, Question, Table, parse_number, tokenize


class NodeKind(enum.Enum):
    QUESTION = "question"
    SENTENCE = "sentence"
    ROW = "row"
    COLUMN = "column"
    CELL = "cell"
    WORD = "word"
    NUMBER = "number"


class View(enum.Enum):
    TABULAR = "tabular"
    RELATION = "relation"
    NUMERICAL = "numerical"


@dataclass(frozen=True)
class Node:
    index: int
    kind: NodeKind
    text: str | None = None  # token (word/number) or full text (cell/sentence)
    numeric_value: float | None = None
    para: int | None = None  # paragraph order for sentence/word nodes
    span: tuple[int, int] | None = None  # char span in paragraph/question/cell text
    row: int | None = None
    col: int | None = None
    sentence: int | None = None  # owning sentence/question node index
    cell: int | None = None  # owning cell node index (cell words only)


@dataclass(frozen=True)
class ViewGraph:
    view: View
    adjacency: np.ndarray  # N x N, entries in {0, 1}


@dataclass(frozen=True)
class MultiViewGraph:
    nodes: tuple[Node, ...]
    views: tuple[ViewGraph, ...]

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    def by_kind(self, *kinds: NodeKind) -> list[int]:
        want = set(kinds)
        return [n.index for n in self.nodes if n.kind in want]


@dataclass(frozen=True)
class GraphConfig:
    use_tabular: bool = True
    use_relation: bool = True
    use_numerical: bool = True
    row_col_nodes: bool = True
    question_bridging: bool = True


_SENTENCE_END = re.compile(r"[.!?](?=\s|$)")


def split_sentences(text: str) -> list[tuple[int, int]]:
    """Character spans of sentences, split after ./!/? followed by space or end."""
    spans = []
    start = 0
    for m in _SENTENCE_END.finditer(text):
        end = m.end()
        if text[start:end].strip():
            spans.append((start, end))
        start = end
    if text[start:].strip():
        spans.append((start, len(text)))
    return spans


def _token_node(index: int, token: str, **kw) -> Node:
    value = parse_number(token)
    if value is not None:
        return Node(index, NodeKind.NUMBER, text=token, numeric_value=value, **kw)
    return Node(index, NodeKind.WORD, text=token, **kw)


def enumerate_nodes(
    doc: HybridDocument, question: Question, row_col_nodes: bool = True
) -> list[Node]:
    """Fixed ordering: question, question words, sentences, paragraph words,
    rows, columns, cells, cell words."""
    nodes: list[Node] = []

    q_idx = 0
    nodes.append(Node(q_idx, NodeKind.QUESTION, text=question.text))
    for tok, span in tokenize(question.text):
        nodes.append(_token_node(len(nodes), tok, span=span, sentence=q_idx))

    # sentence nodes first so paragraph words can reference them by index
    sentence_spans: list[tuple[int, tuple[int, int], int]] = []  # (para, span, node idx)
    for p in doc.paragraphs:
        for span in split_sentences(p.text):
            idx = len(nodes)
            nodes.append(
                Node(idx, NodeKind.SENTENCE, text=p.text[span[0] : span[1]].strip(),
                     para=p.order, span=span)
            )
            sentence_spans.append((p.order, span, idx))
    for p in doc.paragraphs:
        for tok, span in tokenize(p.text):
            owner = None
            for para, (s, e), idx in sentence_spans:
                if para == p.order and s <= span[0] < e:
                    owner = idx
                    break
            nodes.append(
                _token_node(len(nodes), tok, para=p.order, span=span, sentence=owner)
            )

    t = doc.table
    row_idx: dict[int, int] = {}
    col_idx: dict[int, int] = {}
    if row_col_nodes:
        for r in range(t.n_rows):
            row_idx[r] = len(nodes)
            nodes.append(Node(len(nodes), NodeKind.ROW, row=r))
        for c in range(t.n_cols):
            col_idx[c] = len(nodes)
            nodes.append(Node(len(nodes), NodeKind.COLUMN, col=c))
    cell_idx: dict[tuple[int, int], int] = {}
    for r in range(t.n_rows):
        for c in range(t.n_cols):
            cell_idx[(r, c)] = len(nodes)
            nodes.append(Node(len(nodes), NodeKind.CELL, text=t.cells[r][c], row=r, col=c))
    for r in range(t.n_rows):
        for c in range(t.n_cols):
            for tok, span in tokenize(t.cells[r][c]):
                nodes.append(
                    _token_node(len(nodes), tok, row=r, col=c, span=span,
                                cell=cell_idx[(r, c)])
                )
    return nodes


def _empty(n: int) -> np.ndarray:
    return np.zeros((n, n), dtype=np.int64)


def _check_table_nodes(nodes: list[Node], table: Table) -> None:
    n_cells = sum(1 for n in nodes if n.kind is NodeKind.CELL)
    if n_cells != table.n_rows * table.n_cols:
        raise ValueError(
            f"node/table mismatch: {n_cells} cell nodes for a "
            f"{table.n_rows}x{table.n_cols} table"
        )


def build_tabular_view(nodes: list[Node], table: Table) -> ViewGraph:
    _check_table_nodes(nodes, table)
    A = _empty(len(nodes))
    cells = {(n.row, n.col): n.index for n in nodes if n.kind is NodeKind.CELL}
    rows = {n.row: n.index for n in nodes if n.kind is NodeKind.ROW}
    cols = {n.col: n.index for n in nodes if n.kind is NodeKind.COLUMN}
    for (r, c), i in cells.items():
        for dr, dc in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            j = cells.get((r + dr, c + dc))
            if j is not None:
                A[i, j] = A[j, i] = 1
        if r in rows:
            A[i, rows[r]] = A[rows[r], i] = 1
        if c in cols:
            A[i, cols[c]] = A[cols[c], i] = 1
    for n in nodes:
        if n.cell is not None:  # cell word/number inside its cell
            A[n.index, n.cell] = A[n.cell, n.index] = 1
    return ViewGraph(View.TABULAR, A)


def build_relation_view(
    nodes: list[Node], doc: HybridDocument, question_bridging: bool = True
) -> ViewGraph:
    _check_table_nodes(nodes, doc.table)
    A = _empty(len(nodes))
    rows = {n.row: n.index for n in nodes if n.kind is NodeKind.ROW}
    cols = {n.col: n.index for n in nodes if n.kind is NodeKind.COLUMN}
    cell_by_idx = {n.index: n for n in nodes if n.kind is NodeKind.CELL}

    for n in nodes:
        if n.kind in (NodeKind.WORD, NodeKind.NUMBER):
            if n.cell is not None:
                A[n.index, n.cell] = A[n.cell, n.index] = 1
            elif n.sentence is not None:
                A[n.index, n.sentence] = A[n.sentence, n.index] = 1
        elif n.kind is NodeKind.CELL:
            if n.row in rows:
                A[n.index, rows[n.row]] = A[rows[n.row], n.index] = 1
            if n.col in cols:
                A[n.index, cols[n.col]] = A[cols[n.col], n.index] = 1

    # lexical bridging: a paragraph/question word that matches a cell word
    # joins that cell, and its sentence joins the cell's row and column
    cell_words: dict[str, list[Node]] = {}
    for n in nodes:
        if n.cell is not None and n.kind in (NodeKind.WORD, NodeKind.NUMBER):
            cell_words.setdefault(n.text, []).append(n)
    for n in nodes:
        if n.kind not in (NodeKind.WORD, NodeKind.NUMBER) or n.cell is not None:
            continue
        owner = nodes[n.sentence] if n.sentence is not None else None
        if owner is not None and owner.kind is NodeKind.QUESTION and not question_bridging:
            continue
        for cw in cell_words.get(n.text, ()):
            A[n.index, cw.cell] = A[cw.cell, n.index] = 1
            cell = cell_by_idx[cw.cell]
            if n.sentence is not None:
                if cell.row in rows:
                    A[n.sentence, rows[cell.row]] = A[rows[cell.row], n.sentence] = 1
                if cell.col in cols:
                    A[n.sentence, cols[cell.col]] = A[cols[cell.col], n.sentence] = 1
    return ViewGraph(View.RELATION, A)


def build_numerical_view(nodes: list[Node]) -> ViewGraph:
    A = _empty(len(nodes))
    numbers = [n for n in nodes if n.kind is NodeKind.NUMBER]
    for a in numbers:
        for b in numbers:
            if a.numeric_value > b.numeric_value:
                A[a.index, b.index] = 1
    return ViewGraph(View.NUMERICAL, A)


def normalize_adjacency(A: np.ndarray, directed: bool) -> np.ndarray:
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"adjacency must be square, got shape {A.shape}")
    A_hat = A + np.eye(A.shape[0])
    if directed:
        return A_hat / A_hat.sum(axis=1, keepdims=True)
    d = A_hat.sum(axis=1)
    inv_sqrt = 1.0 / np.sqrt(d)
    return A_hat * inv_sqrt[:, None] * inv_sqrt[None, :]


def build_multi_view_graph(
    doc: HybridDocument, question: Question, config: GraphConfig = GraphConfig()
) -> MultiViewGraph:
    nodes = enumerate_nodes(doc, question, row_col_nodes=config.row_col_nodes)
    views = []
    if config.use_tabular:
        views.append(build_tabular_view(nodes, doc.table))
    if config.use_relation:
        views.append(build_relation_view(nodes, doc, config.question_bridging))
    if config.use_numerical:
        views.append(build_numerical_view(nodes))
    if not views:
        raise ValueError("at least one view must be enabled")
    return MultiViewGraph(nodes=tuple(nodes), views=tuple(views))


def graph_to_json(graph: MultiViewGraph) -> dict:
    """Edge-list form for CLI inspection and golden-file tests."""
    nodes = []
    for n in graph.nodes:
        entry: dict = {"index": n.index, "kind": n.kind.value}
        if n.text is not None:
            entry["text"] = n.text
        if n.numeric_value is not None:
            entry["value"] = n.numeric_value
        for key in ("para", "row", "col"):
            v = getattr(n, key)
            if v is not None:
                entry[key] = v
        nodes.append(entry)
    views = {}
    for vg in graph.views:
        i, j = np.nonzero(vg.adjacency)
        views[vg.view.value] = [[int(a), int(b)] for a, b in zip(i, j)]
    return {"nodes": nodes, "views": views}
