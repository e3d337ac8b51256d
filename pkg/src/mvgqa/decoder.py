"""Goal-driven tree decoder: attention, context aggregation, GRU state,
copy-or-generate prediction, and stack-based pre-order tree assembly with
greedy or beam search."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from . import kernel as K
from .expression import ExpressionTree, Leaf, OpNode, format_number
from .graph import MultiViewGraph, NodeKind
from .kernel import Tensor
from .model import OP_SYMBOLS, Model


class DecodeError(RuntimeError):
    pass


class EntryKind(enum.Enum):
    OP = "op"
    CONST = "const"
    COPY = "copy"


@dataclass(frozen=True)
class VocabEntry:
    kind: EntryKind
    symbol: str
    value: float | None = None
    source_node: int | None = None  # first realizing node (copy entries)
    nodes: tuple[int, ...] = ()  # every node realizing this value


def build_vocab(graph: MultiViewGraph, constants: tuple[float, ...]) -> list[VocabEntry]:
    """Fixed order: operators, constants, then copyable numbers by first node."""
    entries = [VocabEntry(EntryKind.OP, s) for s in OP_SYMBOLS]
    entries += [
        VocabEntry(EntryKind.CONST, format_number(c), value=float(c)) for c in constants
    ]
    by_value: dict[float, list[int]] = {}
    for n in graph.nodes:
        if n.kind is NodeKind.NUMBER:
            by_value.setdefault(n.numeric_value, []).append(n.index)
    for value, nodes in sorted(by_value.items(), key=lambda kv: kv[1][0]):
        entries.append(
            VocabEntry(EntryKind.COPY, format_number(value), value=value,
                       source_node=nodes[0], nodes=tuple(nodes))
        )
    return entries


def attend(z_bar: Tensor, s_t: Tensor, g_t: Tensor, model: Model) -> tuple[Tensor, Tensor]:
    """Hybrid context c_t and attention over nodes."""
    proj = K.add(
        K.matmul(z_bar, model["att_wh"]),
        K.matmul(K.concat([s_t, g_t]), model["att_ws"]),
    )
    scores = K.matmul(K.tanh(proj), model["att_v"])
    alpha = K.softmax(scores, axis=-1)
    return K.matmul(alpha, z_bar), alpha


def aggregate_context(
    g_t: Tensor, g_parent: Tensor | None, g_left: Tensor | None,
    g_right: Tensor | None, model: Model
) -> Tensor:
    d = model.config.d
    zero = Tensor(np.zeros(d))
    parts = [g_t, g_parent or zero, g_left or zero, g_right or zero]
    return K.sigmoid(K.add(K.matmul(K.concat(parts), model["agg_w"]), model["agg_b"]))


def step_state(c_t: Tensor, g_t: Tensor, e_y: Tensor, s_t: Tensor, model: Model) -> Tensor:
    return K.gru_cell(K.concat([c_t, g_t, e_y]), s_t, model.gru())


def token_embedding(entry: VocabEntry, index: int, z_bar: Tensor, model: Model) -> Tensor:
    if entry.kind is EntryKind.COPY:
        return K.reshape(K.gather_rows(z_bar, [entry.source_node]), (model.config.d,))
    return K.reshape(K.gather_rows(model["dec_emb"], [index]), (model.config.d,))


def predict_token(
    s_t: Tensor, c_t: Tensor, r_t: Tensor, alpha: Tensor,
    vocab: list[VocabEntry], model: Model,
) -> Tensor:
    """Distribution over the whole vocabulary (generation ∪ copy)."""
    n_gen = sum(1 for e in vocab if e.kind is not EntryKind.COPY)
    copies = vocab[n_gen:]
    feats = K.concat([s_t, c_t, r_t])
    p_g = K.softmax(K.add(K.matmul(feats, model["gen_w"]), model["gen_b"]), axis=-1)
    if not copies:
        return p_g
    gate = K.sigmoid(K.add(K.matmul(feats, model["gate_w"]), model["gate_b"]))  # (1,)
    n = alpha.data.shape[0]
    sel = np.zeros((n, len(copies)))
    num_mask = np.zeros(n)
    for j, e in enumerate(copies):
        sel[e.nodes, j] = 1.0
        num_mask[list(e.nodes)] = 1.0
    raw = K.matmul(alpha, Tensor(sel))  # summed attention per copy entry
    total = K.matmul(alpha, Tensor(num_mask))
    p_c = K.div(raw, total)  # renormalized over number nodes
    one = Tensor(np.ones(1))
    return K.concat([K.mul(p_g, K.sub(one, gate)), K.mul(p_c, gate)])


# ------------------------------------------------------------ tree assembly


@dataclass
class _Frame:
    symbol: str
    g_emit: Tensor
    children: list[tuple[ExpressionTree, Tensor]] = field(default_factory=list)


@dataclass
class DecoderState:
    s_t: Tensor
    g_t: Tensor
    frames: list[_Frame] = field(default_factory=list)
    emitted: list[str] = field(default_factory=list)
    n_ops: int = 0
    complete: ExpressionTree | None = None
    log_prob: float = 0.0

    def open_slots(self) -> int:
        if self.complete is not None:
            return 0
        if not self.frames:
            return 0 if self.emitted else 1
        return sum(2 - len(f.children) for f in self.frames)

    def clone(self) -> "DecoderState":
        return DecoderState(
            s_t=self.s_t, g_t=self.g_t,
            frames=[_Frame(f.symbol, f.g_emit, list(f.children)) for f in self.frames],
            emitted=list(self.emitted), n_ops=self.n_ops,
            complete=self.complete, log_prob=self.log_prob,
        )


def initial_state(z_bar: Tensor, model: Model) -> DecoderState:
    s1 = K.min_pool(z_bar, axis=0)
    return DecoderState(s_t=s1, g_t=s1)


def _reduce(state: DecoderState) -> None:
    while state.frames and len(state.frames[-1].children) == 2:
        frame = state.frames.pop()
        tree = OpNode(frame.symbol, frame.children[0][0], frame.children[1][0])
        if state.frames:
            state.frames[-1].children.append((tree, frame.g_emit))
        else:
            state.complete = tree


def push_token(state: DecoderState, entry: VocabEntry) -> None:
    """Apply one emitted token to the assembly stack, reducing when a
    quantity completes [op, left, right]."""
    state.emitted.append(entry.symbol)
    if entry.kind is EntryKind.OP:
        state.frames.append(_Frame(entry.symbol, state.g_t))
        state.n_ops += 1
        return
    leaf = Leaf(entry.value, provenance=entry.source_node)
    if not state.frames:
        if state.complete is not None or len(state.emitted) > 1:
            raise DecodeError("quantity emitted after tree completion")
        state.complete = leaf
        return
    state.frames[-1].children.append((leaf, state.g_t))
    _reduce(state)


def advance_states(
    state: DecoderState, entry: VocabEntry, entry_index: int,
    c_t: Tensor, z_bar: Tensor, model: Model,
) -> None:
    """Update g and s for the next position after emitting `entry`."""
    g_parent = state.frames[-1].g_emit if state.frames else None
    g_left = None
    if state.frames and len(state.frames[-1].children) == 1:
        g_left = state.frames[-1].children[0][1]
    g_prev = state.g_t
    state.g_t = aggregate_context(g_prev, g_parent, g_left, None, model)
    e_y = token_embedding(entry, entry_index, z_bar, model)
    state.s_t = step_state(c_t, g_prev, e_y, state.s_t, model)


def _token_budget(model: Model) -> int:
    return 2 * model.config.max_ops + 1


def _allowed_mask(state: DecoderState, vocab: list[VocabEntry], budget: int) -> np.ndarray:
    """Forced validity: ops masked when the budget only admits leaves."""
    used = len(state.emitted)
    slots = state.open_slots()
    mask = np.ones(len(vocab))
    # emitting an op consumes a slot and opens two: net +1 open slot
    if used + 1 + (slots + 1) > budget:
        for i, e in enumerate(vocab):
            if e.kind is EntryKind.OP:
                mask[i] = 0.0
    return mask


def decode_tree(
    z_bar: Tensor,
    graph: MultiViewGraph,
    model: Model,
    beam: int = 1,
    max_ops: int | None = None,
) -> ExpressionTree:
    """Generate one expression tree; beam=1 is greedy."""
    vocab = build_vocab(graph, model.config.constants)
    if not any(e.kind is EntryKind.COPY for e in vocab) and not model.config.constants:
        raise DecodeError("no copyable quantities and no constants")
    if not any(e.kind is EntryKind.COPY for e in vocab):
        raise DecodeError("no copyable quantities in graph")
    budget = 2 * (max_ops if max_ops is not None else model.config.max_ops) + 1

    states = [initial_state(z_bar, model)]
    finished: list[DecoderState] = []
    for _ in range(budget):
        candidates: list[tuple[float, int, int, DecoderState]] = []
        order = 0
        for state in states:
            c_t, alpha = attend(z_bar, state.s_t, state.g_t, model)
            p = predict_token(state.s_t, c_t, state.g_t, alpha, vocab, model)
            masked = p.data * _allowed_mask(state, vocab, budget)
            total = masked.sum()
            if total <= 0:
                continue
            masked = masked / total
            top = np.argsort(-masked)[:beam]
            for idx in top:
                if masked[idx] <= 0:
                    continue
                nxt = state.clone()
                nxt.log_prob += math.log(masked[idx])
                push_token(nxt, vocab[idx])
                if nxt.complete is not None:
                    finished.append(nxt)
                else:
                    advance_states(nxt, vocab[idx], int(idx), c_t, z_bar, model)
                    candidates.append((-nxt.log_prob, order, int(idx), nxt))
                order += 1
        candidates.sort(key=lambda t: (t[0], t[1]))
        states = [c[3] for c in candidates[:beam]]
        if not states:
            break
        if finished and max(f.log_prob for f in finished) >= -min(c[0] for c in candidates[:beam]):
            # no open state can beat the best finished tree
            if len(finished) >= beam:
                break
    if not finished:
        raise DecodeError("token budget exhausted before a tree completed")
    return max(finished, key=lambda f: f.log_prob).complete


def _entry_for_token(token: str, vocab: list[VocabEntry]) -> tuple[int, VocabEntry]:
    if token in OP_SYMBOLS:
        for i, e in enumerate(vocab):
            if e.kind is EntryKind.OP and e.symbol == token:
                return i, e
    try:
        value = float(token)
    except ValueError:
        raise ValueError(f"gold token {token!r} is not an operator or number")
    for i, e in enumerate(vocab):
        if e.kind is EntryKind.CONST and abs(e.value - value) < 1e-9:
            return i, e
    for i, e in enumerate(vocab):
        if e.kind is EntryKind.COPY and abs(e.value - value) < 1e-9:
            return i, e
    raise ValueError(
        f"gold token {token!r} is not in the vocabulary (number absent from graph)"
    )


def teacher_forced_nll(
    z_bar: Tensor, graph: MultiViewGraph, gold_tokens: list[str], model: Model
) -> Tensor:
    """Sum of -log P(gold_t) with states advanced along the gold pre-order."""
    from .expression import preorder_parse

    preorder_parse(gold_tokens)  # validates well-formedness
    vocab = build_vocab(graph, model.config.constants)
    state = initial_state(z_bar, model)
    loss: Tensor | None = None
    for token in gold_tokens:
        idx, entry = _entry_for_token(token, vocab)
        c_t, alpha = attend(z_bar, state.s_t, state.g_t, model)
        p = predict_token(state.s_t, c_t, state.g_t, alpha, vocab, model)
        onehot = np.zeros(len(vocab))
        onehot[idx] = 1.0
        step = K.neg(K.log(K.matmul(Tensor(onehot), p)))
        loss = step if loss is None else K.add(loss, step)
        push_token(state, entry)
        if state.complete is None:
            advance_states(state, entry, idx, c_t, z_bar, model)
    return loss


def serialize_entries(tree: ExpressionTree) -> str:
    from .expression import preorder_serialize

    return " ".join(preorder_serialize(tree))
