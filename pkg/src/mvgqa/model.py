"""All learnable parameters for the encoder, heads, and tree decoder.

Parameters live in one named dict so the optimizer, gradient checks, and the
binary checkpoint format can treat the model uniformly.  Token features use
seeded hash-bucket embeddings, so no external vocabulary file exists.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, replace

import numpy as np

from .graph import GraphConfig
from .kernel import GRUParams, Tensor, load_checkpoint, save_checkpoint

N_OPERATORS = 10
N_SCALES = 5
OP_SYMBOLS = ("+", "-", "*", "/", "avg")


@dataclass(frozen=True)
class ModelConfig:
    d: int = 64
    n_buckets: int = 2 ** 14
    ffn_hidden: int = 128
    constants: tuple[float, ...] = (1.0, 100.0)
    max_ops: int = 4
    use_mv_attention: bool = True
    graph: GraphConfig = field(default_factory=GraphConfig)

    @property
    def n_views(self) -> int:
        g = self.graph
        return int(g.use_tabular) + int(g.use_relation) + int(g.use_numerical)


def token_bucket(token: str, n_buckets: int, seed: int = 0) -> int:
    h = hashlib.blake2b(
        token.encode("utf-8"), digest_size=8, salt=seed.to_bytes(8, "little")
    )
    return int.from_bytes(h.digest(), "little") % n_buckets


class Model:
    def __init__(self, config: ModelConfig = ModelConfig(), seed: int = 42):
        self.config = config
        self.seed = seed
        rng = np.random.default_rng(seed)
        d = config.d
        f = config.ffn_hidden
        K = config.n_views
        n_gen = len(OP_SYMBOLS) + len(config.constants)
        self.params: dict[str, Tensor] = {}

        def p(name: str, *shape: int, std: float | None = None) -> Tensor:
            if std is None:
                fan_in = shape[0] if len(shape) > 1 else shape[0]
                std = 1.0 / np.sqrt(fan_in)
            t = Tensor(rng.normal(0.0, std, size=shape), requires_grad=True)
            self.params[name] = t
            return t

        def zeros(name: str, *shape: int) -> Tensor:
            t = Tensor(np.zeros(shape), requires_grad=True)
            self.params[name] = t
            return t

        def ones(name: str, *shape: int) -> Tensor:
            t = Tensor(np.ones(shape), requires_grad=True)
            self.params[name] = t
            return t

        # node feature initialization
        p("emb_table", config.n_buckets, d, std=0.1)
        p("sep_emb", d, std=0.1)
        p("empty_cell_emb", d, std=0.1)
        p("cell_w1", d, d)
        zeros("cell_b1", d)
        p("cell_w2", d, d)
        zeros("cell_b2", d)

        # per-view two-layer graph convolutions
        for k in range(K):
            p(f"gconv{k}_w1", d, d)
            p(f"gconv{k}_w2", d, d)
        p("view_query", K, K * d)

        # post-fusion layer norms and FFN
        ones("ln1_g", d)
        zeros("ln1_b", d)
        ones("ln2_g", d)
        zeros("ln2_b", d)
        p("ffn_w1", d, f)
        zeros("ffn_b1", f)
        p("ffn_w2", f, d)
        zeros("ffn_b2", d)

        # operator / scale / tagging heads
        p("op_w1", d, d)
        zeros("op_b1", d)
        p("op_w2", d, N_OPERATORS)
        zeros("op_b2", N_OPERATORS)
        p("scale_w1", 4 * d, d)
        zeros("scale_b1", d)
        p("scale_w2", d, N_SCALES)
        zeros("scale_b2", N_SCALES)
        p("tag_w1", 2 * d, d)  # input: [node ; question summary]
        zeros("tag_b1", d)
        p("tag_w2", d, 1)
        zeros("tag_b2", 1)

        # tree decoder
        p("att_wh", d, d)
        p("att_ws", 2 * d, d)
        p("att_v", d)
        p("agg_w", 4 * d, d)
        zeros("agg_b", d)
        p("gru_wz", 4 * d, d)
        zeros("gru_bz", d)
        p("gru_wr", 4 * d, d)
        zeros("gru_br", d)
        p("gru_wh", 4 * d, d)
        zeros("gru_bh", d)
        p("gate_w", 3 * d, 1)
        zeros("gate_b", 1)
        p("gen_w", 3 * d, n_gen)
        zeros("gen_b", n_gen)
        p("dec_emb", n_gen, d, std=0.1)

    def __getitem__(self, name: str) -> Tensor:
        return self.params[name]

    def gru(self) -> GRUParams:
        return GRUParams(
            wz=self["gru_wz"], bz=self["gru_bz"],
            wr=self["gru_wr"], br=self["gru_br"],
            wh=self["gru_wh"], bh=self["gru_bh"],
        )

    def bucket(self, token: str) -> int:
        return token_bucket(token, self.config.n_buckets, self.seed)

    def trainable(self) -> dict[str, Tensor]:
        return self.params

    # -- checkpoint: config scalars ride along as reserved-name tensors

    def save(self, path: str) -> None:
        g = self.config.graph
        meta = {
            "__cfg__/d": self.config.d,
            "__cfg__/n_buckets": self.config.n_buckets,
            "__cfg__/ffn_hidden": self.config.ffn_hidden,
            "__cfg__/max_ops": self.config.max_ops,
            "__cfg__/use_mv_attention": int(self.config.use_mv_attention),
            "__cfg__/use_tabular": int(g.use_tabular),
            "__cfg__/use_relation": int(g.use_relation),
            "__cfg__/use_numerical": int(g.use_numerical),
            "__cfg__/row_col_nodes": int(g.row_col_nodes),
            "__cfg__/question_bridging": int(g.question_bridging),
            "__cfg__/seed": self.seed,
        }
        out = {k: Tensor(np.array(float(v))) for k, v in meta.items()}
        out["__cfg__/constants"] = Tensor(np.array(self.config.constants))
        out.update(self.params)
        save_checkpoint(out, path)

    @classmethod
    def load(cls, path: str) -> "Model":
        raw = load_checkpoint(path)
        cfg = {k.split("/", 1)[1]: v for k, v in raw.items() if k.startswith("__cfg__/")}
        graph = GraphConfig(
            use_tabular=bool(cfg["use_tabular"]),
            use_relation=bool(cfg["use_relation"]),
            use_numerical=bool(cfg["use_numerical"]),
            row_col_nodes=bool(cfg["row_col_nodes"]),
            question_bridging=bool(cfg["question_bridging"]),
        )
        config = ModelConfig(
            d=int(cfg["d"]),
            n_buckets=int(cfg["n_buckets"]),
            ffn_hidden=int(cfg["ffn_hidden"]),
            constants=tuple(float(c) for c in np.atleast_1d(cfg["constants"])),
            max_ops=int(cfg["max_ops"]),
            use_mv_attention=bool(cfg["use_mv_attention"]),
            graph=graph,
        )
        model = cls(config, seed=int(cfg["seed"]))
        for name, t in model.params.items():
            if name not in raw:
                raise ValueError(f"checkpoint missing tensor {name!r}")
            if raw[name].shape != t.data.shape:
                raise ValueError(
                    f"checkpoint tensor {name!r} has shape {raw[name].shape}, "
                    f"expected {t.data.shape}"
                )
            t.data = raw[name].copy()
        return model

    def with_graph_config(self, graph: GraphConfig) -> "Model":
        """Fresh model (same seed) under a different view configuration."""
        return Model(replace(self.config, graph=graph), seed=self.seed)
