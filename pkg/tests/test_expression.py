import numpy as np
import pytest

from conftest import oracle_stack_machine, random_tree
from mvgqa.document import Scale
from mvgqa.expression import (
    EvaluationError,
    ExprParseError,
    Leaf,
    OpNode,
    apply_scale,
    evaluate,
    format_number,
    preorder_parse,
    preorder_serialize,
)


class TestEvaluate:
    @pytest.mark.parametrize(
        "sym,a,b,expected",
        [("+", 2, 3, 5), ("-", 2, 3, -1), ("*", 2, 3, 6), ("/", 3, 2, 1.5),
         ("avg", 2, 3, 2.5)],
    )
    def test_binary_ops(self, sym, a, b, expected):
        assert evaluate(OpNode(sym, Leaf(a), Leaf(b))) == expected

    def test_nested(self):
        # (100 + 50) / (10 - 8) = 75
        tree = OpNode("/", OpNode("+", Leaf(100), Leaf(50)),
                      OpNode("-", Leaf(10), Leaf(8)))
        assert evaluate(tree) == 75.0

    def test_division_by_zero(self):
        with pytest.raises(EvaluationError, match="division by zero"):
            evaluate(OpNode("/", Leaf(1), Leaf(0)))

    def test_division_by_near_zero(self):
        with pytest.raises(EvaluationError):
            evaluate(OpNode("/", Leaf(1), Leaf(1e-13)))


class TestSerialization:
    def test_round_trip_small(self):
        tree = OpNode("avg", Leaf(3.0), OpNode("-", Leaf(10.0), Leaf(4.0)))
        tokens = preorder_serialize(tree)
        assert tokens == ["avg", "3", "-", "10", "4"]
        assert preorder_parse(tokens) == tree

    def test_round_trip_random(self):
        rng = np.random.default_rng(7)
        for _ in range(100):
            tree = random_tree(rng)
            assert preorder_parse(preorder_serialize(tree)) == tree

    def test_parse_truncated(self):
        with pytest.raises(ExprParseError) as exc:
            preorder_parse(["+", "1"])
        assert exc.value.position == 2

    def test_parse_trailing(self):
        with pytest.raises(ExprParseError, match="trailing"):
            preorder_parse(["1", "2"])

    def test_parse_bad_token(self):
        with pytest.raises(ExprParseError, match="frog"):
            preorder_parse(["+", "frog", "2"])


class TestStackMachineOracle:
    def test_matches_recursive_evaluator(self):
        rng = np.random.default_rng(11)
        checked = 0
        while checked < 200:
            tree = random_tree(rng)
            tokens = preorder_serialize(tree)
            try:
                expected = evaluate(tree)
            except EvaluationError:
                with pytest.raises(ZeroDivisionError):
                    oracle_stack_machine(tokens)
                continue
            got = oracle_stack_machine(tokens)
            assert abs(got - expected) <= 1e-12 * max(1.0, abs(expected))
            checked += 1


class TestFormatNumber:
    def test_integers_are_bare(self):
        assert format_number(5.0) == "5"
        assert format_number(-120.0) == "-120"

    def test_floats_round_trip(self):
        s = format_number(1.75)
        assert float(s) == 1.75


class TestApplyScale:
    @pytest.mark.parametrize(
        "scale,factor",
        [(Scale.NONE, 1.0), (Scale.THOUSAND, 1e3), (Scale.MILLION, 1e6),
         (Scale.BILLION, 1e9), (Scale.PERCENT, 0.01)],
    )
    def test_numeric_factors(self, scale, factor):
        fa = apply_scale(3.0, scale)
        assert fa.is_numeric and fa.value == 3.0 * factor
        assert fa.scale is scale and fa.normalized

    def test_spans_keep_scale(self):
        fa = apply_scale(["a", "b"], Scale.PERCENT)
        assert not fa.is_numeric
        assert fa.spans == ("a", "b") and fa.scale is Scale.PERCENT
