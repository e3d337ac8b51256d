"""Composite training loss, AdamW with linear warmup/decay, and the training
loop used by the desk-scale overfit harness."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import kernel as K
from .document import (
    ARITHMETIC_OPERATORS,
    AnswerType,
    HybridDocument,
    Operator,
    Question,
    tokenize,
)
from .decoder import teacher_forced_nll
from .encoder import encode
from .expression import Leaf, OpNode, preorder_parse
from .graph import MultiViewGraph, NodeKind, build_multi_view_graph
from .heads import (
    OPERATOR_ORDER,
    SCALE_ORDER,
    predict_operator,
    predict_scale,
    summarize,
    tag_logits,
    taggable_indices,
)
from .kernel import Tape, Tensor, backward
from .model import Model, ModelConfig


@dataclass
class LossToggles:
    op: bool = True
    scale: bool = True
    tree: bool = True
    tag: bool = True


@dataclass
class TrainConfig:
    epochs: int = 100
    batch_size: int = 8
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    weight_decay: float = 0.01
    warmup_frac: float = 0.1
    dropout: float = 0.5
    seed: int = 42
    grad_clip: float = 5.0
    losses: LossToggles = field(default_factory=LossToggles)
    eval_every: int = 10
    early_stop_em: float | None = None

    def __post_init__(self):
        if not (0.0 <= self.warmup_frac < 1.0):
            raise ValueError("warmup_frac must be in [0, 1)")
        if self.epochs <= 0 or self.batch_size <= 0 or self.lr <= 0:
            raise ValueError("epochs, batch_size and lr must be positive")


# ------------------------------------------------------------- supervision


def derive_operator(question: Question, doc: HybridDocument) -> Operator:
    """Gold operator: annotated when present, else inferred from the answer
    type and derivation."""
    if question.operator is not None:
        return question.operator
    at = question.answer_type
    if at is AnswerType.SPANS:
        return Operator.SPANS
    if at is AnswerType.COUNT:
        return Operator.COUNT
    if at is AnswerType.SPAN:
        span = (question.answer_spans or ("",))[0].strip().lower()
        for row in doc.table.cells:
            if any(c.strip().lower() == span for c in row):
                return Operator.CELL_IN_TABLE
        return Operator.SPAN_IN_TEXT
    tree = preorder_parse((question.derivation or "").split())
    if isinstance(tree, Leaf):
        return Operator.SUM
    if (
        tree.symbol == "/"
        and isinstance(tree.left, OpNode)
        and tree.left.symbol == "-"
        and isinstance(tree.left.right, Leaf)
        and isinstance(tree.right, Leaf)
        and tree.left.right.value == tree.right.value
    ):
        return Operator.CHANGE_RATIO
    return {
        "+": Operator.SUM,
        "-": Operator.DIFFERENCE,
        "*": Operator.MULTIPLICATION,
        "/": Operator.DIVISION,
        "avg": Operator.AVERAGE,
    }[tree.symbol]


def gold_tag_targets(graph: MultiViewGraph, question: Question) -> np.ndarray:
    """0/1 targets over taggable nodes by matching gold spans against cells
    and consecutive paragraph token runs."""
    indices = taggable_indices(graph)
    target = {i: 0.0 for i in indices}
    spans = question.answer_spans or ()
    norm = lambda s: " ".join(t for t, _ in tokenize(s))
    para_nodes = [
        n for n in graph.nodes
        if n.kind in (NodeKind.WORD, NodeKind.NUMBER) and n.para is not None
    ]
    for span in spans:
        want = norm(span)
        for n in graph.nodes:
            if n.kind is NodeKind.CELL and norm(n.text) == want:
                target[n.index] = 1.0
        want_toks = want.split()
        if not want_toks:
            continue
        for start in range(len(para_nodes) - len(want_toks) + 1):
            window = para_nodes[start : start + len(want_toks)]
            if [w.text for w in window] == want_toks:
                for w in window:
                    target[w.index] = 1.0
    return np.array([target[i] for i in indices])


@dataclass
class PreparedExample:
    doc: HybridDocument
    question: Question
    graph: MultiViewGraph
    op_index: int
    scale_index: int
    tag_targets: np.ndarray | None  # span-family only
    gold_tokens: list[str] | None  # arithmetic only


def prepare_examples(docs: list[HybridDocument], model: Model) -> list[PreparedExample]:
    out = []
    for doc in docs:
        for q in doc.questions:
            graph = build_multi_view_graph(doc, q, model.config.graph)
            op = derive_operator(q, doc)
            is_arith = op in ARITHMETIC_OPERATORS
            out.append(
                PreparedExample(
                    doc=doc,
                    question=q,
                    graph=graph,
                    op_index=OPERATOR_ORDER.index(op),
                    scale_index=SCALE_ORDER.index(q.scale),
                    tag_targets=None if is_arith else gold_tag_targets(graph, q),
                    gold_tokens=q.derivation.split() if is_arith and q.derivation else None,
                )
            )
    return out


# ------------------------------------------------------------------ losses


def _nll(probs: Tensor, index: int) -> Tensor:
    onehot = np.zeros(probs.data.shape[-1])
    onehot[index] = 1.0
    return K.neg(K.log(K.matmul(Tensor(onehot), probs)))


def question_loss(
    example: PreparedExample,
    model: Model,
    toggles: LossToggles,
    training: bool = False,
    drop_rate: float = 0.0,
    drop_seed: int = 0,
) -> Tensor:
    z = encode(example.graph, model, training, drop_rate, drop_seed)
    summary = summarize(z, example.graph)
    loss = Tensor(np.array(0.0))
    if toggles.op:
        loss = K.add(loss, _nll(predict_operator(summary, model), example.op_index))
    if toggles.scale:
        loss = K.add(loss, _nll(predict_scale(summary, model), example.scale_index))
    if example.gold_tokens is not None and toggles.tree:
        loss = K.add(loss, teacher_forced_nll(z, example.graph, example.gold_tokens, model))
    if example.tag_targets is not None and toggles.tag:
        loss = K.add(
            loss, K.bce_with_logits(tag_logits(z, example.graph, model), example.tag_targets)
        )
    return loss


def total_loss(
    batch: list[PreparedExample],
    model: Model,
    toggles: LossToggles,
    training: bool = False,
    drop_rate: float = 0.0,
    drop_seed: int = 0,
) -> Tensor:
    """Batch-mean composite loss."""
    acc: Tensor | None = None
    for i, ex in enumerate(batch):
        term = question_loss(ex, model, toggles, training, drop_rate, drop_seed + 131 * i)
        acc = term if acc is None else K.add(acc, term)
    return K.scale(acc, 1.0 / len(batch))


# --------------------------------------------------------------- optimizer


class AdamW:
    """Decoupled weight decay Adam with linear warmup then linear decay."""

    def __init__(
        self,
        params: dict[str, Tensor],
        total_steps: int,
        lr: float = 1e-4,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
        weight_decay: float = 0.0,
        warmup_frac: float = 0.1,
        grad_clip: float = 5.0,
    ):
        self.params = params
        self.total_steps = total_steps
        self.lr = lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.weight_decay = weight_decay
        self.warmup_steps = int(round(warmup_frac * total_steps))
        self.grad_clip = grad_clip
        self.t = 0
        self.m = {k: np.zeros_like(v.data) for k, v in params.items()}
        self.v = {k: np.zeros_like(v.data) for k, v in params.items()}

    def lr_at(self, step: int) -> float:
        if self.warmup_steps > 0 and step < self.warmup_steps:
            return self.lr * step / self.warmup_steps
        remaining = max(self.total_steps - step, 0)
        denom = max(self.total_steps - self.warmup_steps, 1)
        return self.lr * remaining / denom

    def step(self) -> None:
        grads = {k: p.grad for k, p in self.params.items() if p.grad is not None}
        sq = sum(float((g ** 2).sum()) for g in grads.values())
        if not np.isfinite(sq):
            raise FloatingPointError("non-finite gradient in optimizer step")
        norm = np.sqrt(sq)
        clip = self.grad_clip / norm if norm > self.grad_clip else 1.0
        lr_t = self.lr_at(self.t)
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        for k, p in self.params.items():
            g = p.grad
            if g is None:
                continue
            g = g * clip
            self.m[k] = b1 * self.m[k] + (1 - b1) * g
            self.v[k] = b2 * self.v[k] + (1 - b2) * g * g
            m_hat = self.m[k] / (1 - b1 ** self.t)
            v_hat = self.v[k] / (1 - b2 ** self.t)
            p.data -= lr_t * (m_hat / (np.sqrt(v_hat) + self.eps)
                              + self.weight_decay * p.data)

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None


# ------------------------------------------------------------ train loop


def train(
    docs: list[HybridDocument],
    config: TrainConfig,
    model_config: ModelConfig = ModelConfig(),
    beam: int = 1,
    log_fn=None,
) -> tuple[Model, list[dict]]:
    """Deterministic given config.seed; returns the model and per-epoch logs."""
    from .evaluation import evaluate_dataset
    from .pipeline import predict_dataset

    model = Model(model_config, seed=config.seed)
    examples = prepare_examples(docs, model)
    n = len(examples)
    steps_per_epoch = (n + config.batch_size - 1) // config.batch_size
    opt = AdamW(
        model.trainable(),
        total_steps=config.epochs * steps_per_epoch,
        lr=config.lr,
        beta1=config.beta1,
        beta2=config.beta2,
        weight_decay=config.weight_decay,
        warmup_frac=config.warmup_frac,
        grad_clip=config.grad_clip,
    )
    rng = np.random.default_rng(config.seed)
    logs: list[dict] = []
    t0 = time.time()
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        epoch_loss = 0.0
        for b in range(steps_per_epoch):
            batch = [examples[i] for i in order[b * config.batch_size : (b + 1) * config.batch_size]]
            opt.zero_grad()
            tape = Tape()
            with tape:
                loss = total_loss(
                    batch, model, config.losses, training=True,
                    drop_rate=config.dropout,
                    drop_seed=config.seed + 7919 * (epoch * steps_per_epoch + b),
                )
            backward(tape, loss)
            opt.step()
            epoch_loss += float(loss.data)
        entry = {
            "epoch": epoch,
            "loss": epoch_loss / steps_per_epoch,
            "elapsed_s": round(time.time() - t0, 2),
        }
        if (epoch + 1) % config.eval_every == 0 or epoch == config.epochs - 1:
            preds = predict_dataset(model, docs, beam=beam)
            report = evaluate_dataset(preds, docs)
            entry["em"] = report.em
            entry["f1"] = report.f1
        logs.append(entry)
        if log_fn is not None:
            log_fn(entry)
        if (
            config.early_stop_em is not None
            and entry.get("em", 0.0) >= config.early_stop_em
        ):
            break
    return model, logs
