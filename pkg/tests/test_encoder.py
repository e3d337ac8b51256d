import numpy as np
import pytest

from mvgqa.encoder import encode, init_node_features, multi_view_attention
from mvgqa.graph import NodeKind, build_multi_view_graph
from mvgqa.kernel import Tensor
from mvgqa.model import Model, ModelConfig
from test_graph import tiny_doc


@pytest.fixture
def small_model():
    return Model(ModelConfig(d=16, ffn_hidden=32, n_buckets=256), seed=3)


class TestInitNodeFeatures:
    def test_rows_align_with_nodes(self, small_model):
        doc, q = tiny_doc()
        g = build_multi_view_graph(doc, q, small_model.config.graph)
        X = init_node_features(g, small_model)
        assert X.data.shape == (g.n_nodes, small_model.config.d)

    def test_question_is_word_mean_plus_sep(self, small_model):
        doc, q = tiny_doc()
        g = build_multi_view_graph(doc, q, small_model.config.graph)
        X = init_node_features(g, small_model).data
        qwords = [n for n in g.nodes
                  if n.kind in (NodeKind.WORD, NodeKind.NUMBER)
                  and n.para is None and n.cell is None]
        emb = small_model["emb_table"].data
        mean = np.mean([emb[small_model.bucket(n.text)] for n in qwords], axis=0)
        np.testing.assert_allclose(X[0], mean + small_model["sep_emb"].data, atol=1e-12)

    def test_cell_is_word_mean(self, small_model):
        doc, q = tiny_doc()
        g = build_multi_view_graph(doc, q, small_model.config.graph)
        X = init_node_features(g, small_model).data
        emb = small_model["emb_table"].data
        for cell in g.nodes:
            if cell.kind is not NodeKind.CELL:
                continue
            words = [n for n in g.nodes if n.cell == cell.index]
            want = np.mean([emb[small_model.bucket(w.text)] for w in words], axis=0)
            np.testing.assert_allclose(X[cell.index], want, atol=1e-12)

    def test_empty_cell_uses_learned_embedding(self, small_model):
        from mvgqa.document import (AnswerType, HybridDocument, Paragraph,
                                    Question, Table)
        doc = HybridDocument(
            id="d", table=Table(cells=(("a", ""), ("b", "c"))),
            paragraphs=(Paragraph(0, "words here."),),
            questions=(Question(id="q", text="what?", answer_type=AnswerType.SPAN,
                                answer_spans=("a",)),),
        )
        g = build_multi_view_graph(doc, doc.questions[0], small_model.config.graph)
        X = init_node_features(g, small_model).data
        empty = [n for n in g.nodes if n.kind is NodeKind.CELL and n.text == ""]
        assert len(empty) == 1
        np.testing.assert_allclose(
            X[empty[0].index], small_model["empty_cell_emb"].data, atol=1e-12
        )


class TestMultiViewAttention:
    def test_simplex_rows(self, rng):
        for _ in range(20):
            feats = [Tensor(rng.normal(size=(6, 4))) for _ in range(3)]
            q = Tensor(rng.normal(size=(3, 12)))
            _, alpha = multi_view_attention(feats, q)
            np.testing.assert_allclose(alpha.data.sum(axis=1), np.ones(6), atol=1e-9)
            assert np.all(alpha.data >= 0)

    def test_single_view_identity(self, rng):
        f = Tensor(rng.normal(size=(5, 4)))
        z, alpha = multi_view_attention([f], Tensor(rng.normal(size=(1, 4))))
        np.testing.assert_array_equal(z.data, f.data)
        np.testing.assert_array_equal(alpha.data, np.ones((5, 1)))

    def test_identical_views_fixpoint(self, rng):
        base = rng.normal(size=(5, 4))
        feats = [Tensor(base.copy()) for _ in range(3)]
        z, _ = multi_view_attention(feats, Tensor(rng.normal(size=(3, 12))))
        np.testing.assert_allclose(z.data, base, atol=1e-12)

    def test_uniform_flag(self, rng):
        feats = [Tensor(rng.normal(size=(4, 3))) for _ in range(2)]
        z, alpha = multi_view_attention(feats, Tensor(rng.normal(size=(2, 6))),
                                        uniform=True)
        np.testing.assert_allclose(alpha.data, np.full((4, 2), 0.5))
        np.testing.assert_allclose(z.data, 0.5 * (feats[0].data + feats[1].data))

    def test_no_views_rejected(self):
        with pytest.raises(ValueError, match="at least one view"):
            multi_view_attention([], Tensor(np.zeros((1, 1))))


class TestEncode:
    def test_output_shape(self, small_model):
        doc, q = tiny_doc()
        g = build_multi_view_graph(doc, q, small_model.config.graph)
        z = encode(g, small_model)
        assert z.data.shape == (g.n_nodes, small_model.config.d)
        assert np.isfinite(z.data).all()

    def test_view_count_mismatch(self, small_model):
        from mvgqa.graph import GraphConfig
        doc, q = tiny_doc()
        g = build_multi_view_graph(doc, q, GraphConfig(use_numerical=False))
        with pytest.raises(ValueError, match="views"):
            encode(g, small_model)

    def test_deterministic(self, small_model):
        doc, q = tiny_doc()
        g = build_multi_view_graph(doc, q, small_model.config.graph)
        np.testing.assert_array_equal(
            encode(g, small_model).data, encode(g, small_model).data
        )
