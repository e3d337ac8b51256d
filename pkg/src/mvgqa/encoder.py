"""Node feature initialization and the one-layer multi-view graph transformer.

Pipeline: hash-bucket token embeddings -> pooled cell/row/column/sentence
features -> two graph convolutions per view -> attention fusion over views ->
residual + layer norm + FFN.
"""

from __future__ import annotations

import numpy as np

from . import kernel as K
from .graph import MultiViewGraph, Node, NodeKind, View, normalize_adjacency
from .kernel import Tensor
from .model import Model


def _is_token(n: Node) -> bool:
    return n.kind in (NodeKind.WORD, NodeKind.NUMBER)


def init_node_features(graph: MultiViewGraph, model: Model) -> Tensor:
    """N x d feature matrix, rows aligned with node indices."""
    d = model.config.d
    nodes = graph.nodes
    tok = [n for n in nodes if _is_token(n)]
    tok_pos = {n.index: i for i, n in enumerate(tok)}
    n_tok = len(tok)

    if n_tok:
        E = K.embedding_lookup(model["emb_table"], [model.bucket(n.text) for n in tok])
    else:
        E = Tensor(np.zeros((0, d)))

    qwords = [tok_pos[n.index] for n in tok if n.para is None and n.cell is None]
    pwords = [tok_pos[n.index] for n in tok if n.para is not None]
    sep_row = K.reshape(model["sep_emb"], (1, d))

    def mean_rows(groups: list[list[int]]) -> Tensor:
        M = np.zeros((len(groups), n_tok))
        for g, members in enumerate(groups):
            if members:
                M[g, members] = 1.0 / len(members)
        return K.matmul(Tensor(M), E)

    blocks: list[Tensor] = []
    # question node then its words
    blocks.append(K.add(mean_rows([qwords]), sep_row))
    if qwords:
        blocks.append(K.gather_rows(E, qwords))

    sentences = [n for n in nodes if n.kind is NodeKind.SENTENCE]
    if sentences:
        groups = [
            [tok_pos[w.index] for w in tok if w.sentence == s.index] for s in sentences
        ]
        blocks.append(K.add(mean_rows(groups), sep_row))
    if pwords:
        blocks.append(K.gather_rows(E, pwords))

    cells = [n for n in nodes if n.kind is NodeKind.CELL]
    cell_feat = None
    if cells:
        groups = [
            [tok_pos[w.index] for w in tok if w.cell == c.index] for c in cells
        ]
        empty = np.array([[1.0] if not g else [0.0] for g in groups])
        cell_feat = K.add(
            mean_rows(groups),
            K.matmul(Tensor(empty), K.reshape(model["empty_cell_emb"], (1, d))),
        )
        hidden = K.relu(K.add(K.matmul(cell_feat, model["cell_w1"]), model["cell_b1"]))
        cell_mlp = K.add(K.matmul(hidden, model["cell_w2"]), model["cell_b2"])

        n_rows = max(c.row for c in cells) + 1
        n_cols = max(c.col for c in cells) + 1
        has_rowcol = any(n.kind is NodeKind.ROW for n in nodes)
        if has_rowcol:
            R = np.zeros((n_rows, len(cells)))
            C = np.zeros((n_cols, len(cells)))
            for j, c in enumerate(cells):
                R[c.row, j] = 1.0 / n_cols
                C[c.col, j] = 1.0 / n_rows
            blocks.append(K.matmul(Tensor(R), cell_mlp))
            blocks.append(K.matmul(Tensor(C), cell_mlp))
        blocks.append(cell_feat)
        cellwords = [tok_pos[w.index] for w in tok if w.cell is not None]
        if cellwords:
            blocks.append(K.gather_rows(E, cellwords))

    X = K.concat(blocks, axis=0)
    if X.data.shape[0] != len(nodes):
        raise ValueError(
            f"feature assembly mismatch: {X.data.shape[0]} rows for {len(nodes)} nodes"
        )
    return X


def gcn_view(
    A: Tensor,
    X: Tensor,
    w1: Tensor,
    w2: Tensor,
    training: bool = False,
    drop_rate: float = 0.0,
    drop_seed: int = 0,
) -> Tensor:
    """Two stacked graph convolutions: relu(A relu(A X W1) W2)."""
    h = K.relu(K.matmul(K.matmul(A, X), w1))
    h = K.dropout(h, drop_rate, drop_seed, training)
    h = K.relu(K.matmul(K.matmul(A, h), w2))
    return K.dropout(h, drop_rate, drop_seed + 1, training)


def _col(a: Tensor, k: int) -> Tensor:
    return K.transpose(K.slice_rows(K.transpose(a), k, k + 1))


def multi_view_attention(
    feats: list[Tensor], view_query: Tensor, uniform: bool = False
) -> tuple[Tensor, Tensor]:
    """Fuse per-view node features; returns (fused N x d, weights N x K)."""
    n_views = len(feats)
    if n_views == 0:
        raise ValueError("need at least one view")
    n = feats[0].data.shape[0]
    if uniform:
        alpha = Tensor(np.full((n, n_views), 1.0 / n_views))
    else:
        c = K.concat(feats, axis=1)
        alpha = K.softmax(K.matmul(c, K.transpose(view_query)), axis=1)
    z = K.mul(_col(alpha, 0), feats[0])
    for k in range(1, n_views):
        z = K.add(z, K.mul(_col(alpha, k), feats[k]))
    return z, alpha


def graph_transformer(
    graph: MultiViewGraph,
    X: Tensor,
    model: Model,
    training: bool = False,
    drop_rate: float = 0.0,
    drop_seed: int = 0,
) -> Tensor:
    """Fused, residual-normalized node representations (N x d)."""
    if len(graph.views) != model.config.n_views:
        raise ValueError(
            f"graph has {len(graph.views)} views, model expects {model.config.n_views}"
        )
    feats = []
    for k, vg in enumerate(graph.views):
        A = Tensor(normalize_adjacency(vg.adjacency, directed=vg.view is View.NUMERICAL))
        feats.append(
            gcn_view(A, X, model[f"gconv{k}_w1"], model[f"gconv{k}_w2"],
                     training, drop_rate, drop_seed + 10 * k)
        )
    z, _ = multi_view_attention(
        feats, model["view_query"], uniform=not model.config.use_mv_attention
    )
    z_hat = K.add(z, K.layer_norm(z, model["ln1_g"], model["ln1_b"]))
    hidden = K.gelu(K.add(K.matmul(z_hat, model["ffn_w1"]), model["ffn_b1"]))
    ffn = K.add(K.matmul(hidden, model["ffn_w2"]), model["ffn_b2"])
    ffn = K.dropout(ffn, drop_rate, drop_seed + 999, training)
    return K.add(z_hat, K.layer_norm(ffn, model["ln2_g"], model["ln2_b"]))


def encode(
    graph: MultiViewGraph,
    model: Model,
    training: bool = False,
    drop_rate: float = 0.0,
    drop_seed: int = 0,
) -> Tensor:
    return graph_transformer(
        graph, init_node_features(graph, model), model, training, drop_rate, drop_seed
    )
