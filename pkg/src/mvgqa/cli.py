"""Command-line surface: ingest, graph, train, predict, eval, gradcheck, synth."""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from .document import (
    DatasetParseError,
    ValidationError,
    parse_dataset,
    serialize_dataset,
)
from .evaluation import evaluate_dataset
from .graph import GraphConfig, build_multi_view_graph, graph_to_json
from .heads import Prediction
from .model import Model, ModelConfig
from .pipeline import predict_dataset
from .synth import overfit_fixture
from .training import LossToggles, TrainConfig, train

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_INTERNAL = 2


def _graph_config(args) -> GraphConfig:
    return GraphConfig(
        use_tabular=not args.no_tabular_view,
        use_relation=not args.no_relation_view,
        use_numerical=not args.no_numerical_view,
        row_col_nodes=not args.no_row_col_nodes,
    )


def _model_config(args) -> ModelConfig:
    return ModelConfig(
        d=args.dim,
        use_mv_attention=not args.no_mv_attention,
        graph=_graph_config(args),
    )


def _load_docs(path: str):
    with open(path, "rb") as fh:
        return parse_dataset(fh.read())


def _write(path: str | None, payload: str) -> None:
    if path:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(payload)
    else:
        print(payload)


def cmd_ingest(args) -> int:
    docs = _load_docs(args.dataset)
    n_q = sum(len(d.questions) for d in docs)
    print(f"ok: {len(docs)} documents, {n_q} questions")
    return EXIT_OK


def cmd_synth(args) -> int:
    _write(args.out, serialize_dataset(overfit_fixture()).decode("utf-8"))
    return EXIT_OK


def cmd_graph(args) -> int:
    docs = _load_docs(args.dataset)
    config = _graph_config(args)
    out = []
    for doc in docs:
        for q in doc.questions:
            g = build_multi_view_graph(doc, q, config)
            entry = graph_to_json(g)
            entry["question_id"] = q.id
            out.append(entry)
    _write(args.out, json.dumps(out, indent=2))
    return EXIT_OK


def cmd_train(args) -> int:
    docs = _load_docs(args.dataset)
    config = TrainConfig(
        epochs=args.epochs,
        batch_size=args.batch_size,
        lr=args.lr,
        weight_decay=args.weight_decay,
        warmup_frac=args.warmup,
        dropout=args.dropout,
        seed=args.seed,
        eval_every=args.eval_every,
        early_stop_em=args.early_stop_em,
        losses=LossToggles(
            op=not args.no_op_loss,
            scale=not args.no_scale_loss,
            tree=not args.no_tree_loss,
            tag=not args.no_tag_loss,
        ),
    )
    log_fh = open(args.log, "w", encoding="utf-8") if args.log else None

    def log_fn(entry):
        line = json.dumps(entry)
        print(line)
        if log_fh:
            log_fh.write(line + "\n")

    model, _ = train(docs, config, _model_config(args), beam=args.beam, log_fn=log_fn)
    if log_fh:
        log_fh.close()
    model.save(args.checkpoint)
    print(f"saved checkpoint to {args.checkpoint}")
    return EXIT_OK


def cmd_predict(args) -> int:
    docs = _load_docs(args.dataset)
    model = Model.load(args.checkpoint)
    preds = predict_dataset(
        model, docs, beam=args.beam,
        use_gold_operator=args.gold_operator,
        use_gold_scale=args.gold_scale,
    )
    _write(args.out, json.dumps([p.to_json() for p in preds], indent=2))
    return EXIT_OK


def cmd_eval(args) -> int:
    docs = _load_docs(args.dataset)
    with open(args.predictions, encoding="utf-8") as fh:
        raw = json.load(fh)
    from .document import Operator, Scale

    preds = []
    for entry in raw:
        answer = entry.get("answer")
        spans = tuple(answer) if isinstance(answer, list) else None
        number = float(answer) if isinstance(answer, (int, float)) else None
        preds.append(
            Prediction(
                question_id=entry["question_id"],
                operator=Operator(entry["operator"]),
                scale=Scale(entry["scale"]),
                answer_spans=spans,
                answer_number=number,
                spans=spans or (),
                tree_value=number,
            )
        )
    report = evaluate_dataset(
        preds, docs,
        use_gold_operator=args.gold_operator,
        use_gold_scale=args.gold_scale,
    )
    _write(args.out, json.dumps(report.to_json(), indent=2))
    print(report.to_text())
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    from . import kernel as K
    from .encoder import encode
    from .graph import build_multi_view_graph
    from .training import LossToggles, prepare_examples, question_loss

    rng = np.random.default_rng(args.seed)
    worst = 0.0

    w = K.Tensor(rng.normal(size=(4, 3)), requires_grad=True)
    x = rng.normal(size=4)
    err = K.grad_check(lambda: K.sum_(K.matmul(K.Tensor(x), w)), [w], rng=rng)
    print(f"matmul/sum: {err:.2e}")
    worst = max(worst, err)

    model = Model(ModelConfig(d=8, ffn_hidden=16, n_buckets=64), seed=args.seed)
    docs = overfit_fixture()[:1]
    examples = prepare_examples(docs, model)[:2]
    params = list(model.trainable().values())
    for ex in examples:
        err = K.grad_check(
            lambda: question_loss(ex, model, LossToggles()), params,
            max_samples=3, rng=rng,
        )
        print(f"pipeline loss ({ex.question.id}): {err:.2e}")
        worst = max(worst, err)
    print(f"max relative error: {worst:.2e}")
    return EXIT_OK if worst < 1e-3 else EXIT_INTERNAL


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mvgqa")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, dataset=True):
        if dataset:
            p.add_argument("--dataset", required=True)
        p.add_argument("--seed", type=int, default=42)
        p.add_argument("--dim", type=int, default=64)
        p.add_argument("--beam", type=int, choices=(1, 3), default=1)
        p.add_argument("--no-tabular-view", action="store_true")
        p.add_argument("--no-relation-view", action="store_true")
        p.add_argument("--no-numerical-view", action="store_true")
        p.add_argument("--no-mv-attention", action="store_true")
        p.add_argument("--no-row-col-nodes", action="store_true")
        p.add_argument("--gold-operator", action="store_true")
        p.add_argument("--gold-scale", action="store_true")

    p = sub.add_parser("ingest", help="validate a dataset file")
    common(p)
    p.set_defaults(fn=cmd_ingest)

    p = sub.add_parser("synth", help="emit the synthetic overfit fixture")
    p.add_argument("--out")
    p.set_defaults(fn=cmd_synth)

    p = sub.add_parser("graph", help="emit view graphs as JSON edge lists")
    common(p)
    p.add_argument("--out")
    p.set_defaults(fn=cmd_graph)

    p = sub.add_parser("train")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--batch-size", type=int, default=8)
    p.add_argument("--lr", type=float, default=1e-4)
    p.add_argument("--weight-decay", type=float, default=0.01)
    p.add_argument("--warmup", type=float, default=0.1)
    p.add_argument("--dropout", type=float, default=0.5)
    p.add_argument("--eval-every", type=int, default=10)
    p.add_argument("--early-stop-em", type=float, default=None)
    p.add_argument("--log")
    p.add_argument("--no-op-loss", action="store_true")
    p.add_argument("--no-scale-loss", action="store_true")
    p.add_argument("--no-tree-loss", action="store_true")
    p.add_argument("--no-tag-loss", action="store_true")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("predict")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out")
    p.set_defaults(fn=cmd_predict)

    p = sub.add_parser("eval")
    common(p)
    p.add_argument("--predictions", required=True)
    p.add_argument("--out")
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("gradcheck", help="run the gradient oracle suite")
    p.add_argument("--seed", type=int, default=42)
    p.set_defaults(fn=cmd_gradcheck)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (DatasetParseError, ValidationError, FileNotFoundError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT
    except AssertionError as e:
        print(f"internal error: {e}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
