# tests/test_anf.py
# Tests for administrative reduction: let series, elementary terms and the normalizer's fuel
# RELEVANT FILES: pbcalc/services/anf.py, pbcalc/syntax/terms.py

import pytest

from pbcalc.services.anf import (
    LetSeries,
    a_normal_term,
    a_normalize,
    a_step,
    binding_names,
    inline_functions,
    is_elementary,
    is_function_value,
    is_let_series,
)
from pbcalc.services.engine import PullbackEngine
from pbcalc.syntax.analysis import alpha_equivalent
from pbcalc.syntax.parser import parse_term
from pbcalc.syntax.terms import App, Lam, Pair, PrimApp, Proj, RealLit, Sum, Var, Zero, let_term
from pbcalc.syntax.types import REAL
from pbcalc.utils.errors import ANFFuelExhausted, ANormalForm, TermShapeError

a, b, p = Var("a"), Var("b"), Var("p")


class TestElementary:
    """Which terms may be bound without further splitting"""

    @pytest.mark.parametrize(
        "term",
        [
            a,
            Proj(2, Proj(1, p)),
            RealLit(3.0),
            Zero(),
            Pair(a, Proj(1, p)),
            Sum((a, b)),
            PrimApp("sin", a),
            App(a, b),
            Lam("u", let_term("k", PrimApp("cos", Var("u")), Var("k"))),
        ],
    )
    def test_elementary(self, term):
        assert is_elementary(term)

    @pytest.mark.parametrize(
        "term",
        [
            Pair(PrimApp("sin", a), b),
            Sum((a, b, a)),
            PrimApp("sin", RealLit(1.0)),
            App(Lam("u", Var("u")), a),
            Lam("u", PrimApp("cos", Var("u"))),
        ],
    )
    def test_not_elementary(self, term):
        assert not is_elementary(term)

    def test_let_series(self):
        series = let_term("z1", PrimApp("sin", a), let_term("z2", PrimApp("cos", Var("z1")), Var("z2")))
        assert is_let_series(series)
        assert not is_let_series(let_term("z1", PrimApp("sin", a), PrimApp("cos", Var("z1"))))


class TestRunningBody:
    """The running example's pullback body"""

    @pytest.fixture
    def body(self, running_program):
        return running_program.term.fn.body

    def test_four_bindings(self, body):
        series = a_normalize(body)
        assert len(series) == 4
        assert list(binding_names(series)) == ["z1", "z2", "z3", "z4"]

    def test_bindings(self, body):
        series = a_normalize(body)
        p = Var(body.arg.arg.arg.left.body.name)  # the pattern binder
        assert series.bindings[0][1] == Pair(Proj(1, p), Proj(2, p))
        assert series.bindings[1][1] == PrimApp("g", Var("z1"))
        assert series.bindings[2][1] == PrimApp("mult", Var("z2"))
        assert series.bindings[3][1] == PrimApp("pow2", Var("z3"))

    def test_printout(self, body):
        text = str(a_normalize(body))
        assert text.startswith("let\n  z1 = <pi1 ")
        assert "  z2 = g(z1);\n" in text
        assert text.endswith("  z4 = pow2(z3)\nin z4")

    def test_fuel(self, body):
        with pytest.raises(ANFFuelExhausted):
            a_normalize(body, fuel=1)


class TestSeries:
    """Let concatenation and the series record"""

    def test_let_of_a_non_elementary_bound(self):
        series = a_normalize(parse_term("let a = sin(1.0) in pow2(a)"))
        assert len(series) == 3
        assert series.bindings[0][1] == RealLit(1.0)
        assert series.bindings[1] == ("a", PrimApp("sin", Var(series.bindings[0][0])))
        assert series.bindings[2][1] == PrimApp("pow2", Var("a"))

    def test_atoms_in_function_position_stay(self):
        series = a_normalize(App(Var("f"), Var("d")))
        assert series.bindings == (("z1", App(Var("f"), Var("d"))),)

    def test_applications_bind_both_operands(self):
        series = a_normalize(App(Var("f"), RealLit(7.0)))
        assert len(series) == 3
        assert series.bindings[-1][1] == App(Var(series.bindings[0][0]), Var(series.bindings[1][0]))

    def test_long_sums_split_into_pairs(self):
        series = a_normalize(Sum((a, b, a)))
        assert series.bindings[-1][1] == Sum((Var(series.bindings[0][0]), a))

    def test_step_on_a_series_signals_normal_form(self):
        series = a_normalize(PrimApp("sin", PrimApp("cos", a))).to_term()
        with pytest.raises(ANormalForm):
            a_step(series)

    def test_from_term_rejects_other_shapes(self):
        with pytest.raises(TermShapeError):
            LetSeries.from_term(PrimApp("sin", a))

    def test_renumbered(self):
        series = LetSeries((("q", PrimApp("sin", a)), ("r", PrimApp("cos", Var("q")))))
        renumbered = series.renumbered()
        assert renumbered.bindings == (("z1", PrimApp("sin", a)), ("z2", PrimApp("cos", Var("z1"))))

    def test_renumbered_primes_nested_lets(self):
        x = Var("x")
        series = LetSeries(
            (
                ("a1", Var("l")),
                ("b7", Lam("x", let_term("c9", Sum((x, x)), Var("c9")), REAL)),
                ("d3", App(Var("a1"), Var("b7"))),
            )
        )
        renumbered = series.renumbered()
        assert list(binding_names(renumbered)) == ["z1", "z2", "z3"]
        assert renumbered.bindings[1][1] == Lam("x", let_term("z2'", Sum((x, x)), Var("z2'")), REAL)
        assert renumbered.bindings[2][1] == App(Var("z1"), Var("z2"))

    def test_renumbered_sum_body(self, sum_program):
        series = a_normalize(sum_program.term.fn.body).renumbered()
        assert list(binding_names(series)) == ["z1", "z2", "z3", "z4", "z5"]
        assert series.bindings[0][1] == Var("l")
        assert series.bindings[2][1] == App(Var("z1"), Var("z2"))
        assert series.bindings[4][1] == App(Var("z3"), Var("z4"))
        inner = series.bindings[1][1]
        assert inner.body.fn.name == "z2'"
        assert inner.body.arg.body.fn.name == "z2''"

    def test_round_trip_through_terms(self):
        series = LetSeries((("q", PrimApp("sin", a)), ("r", PrimApp("cos", Var("q")))))
        assert LetSeries.from_term(series.to_term()) == series


class TestInlining:
    """Applications of abstractions to function values are reduced before splitting"""

    def test_function_values(self):
        identity = Lam("u", Var("u"), REAL)
        assert is_function_value(identity)
        assert is_function_value(Pair(identity, Pair(RealLit(2.0), a)))
        assert not is_function_value(Pair(a, RealLit(2.0)))
        assert not is_function_value(Pair(identity, PrimApp("sin", a)))
        assert not is_function_value(a)

    def test_curried_identities(self):
        t = parse_term("(\\f:R -> R. \\k:R -> R. k (f x)) (\\z:R. z) (\\z:R. z)")
        assert alpha_equivalent(inline_functions(t), parse_term("(\\z:R. z) ((\\z:R. z) x)"))

    def test_first_order_lets_stay(self):
        t = parse_term("let a = sin(x) in pow2(a)")
        assert inline_functions(t) == t

    def test_tuple_of_functions_is_projected(self):
        t = parse_term("(\\p:(R -> R) * R. (pi1 p) (pi2 p)) <(\\u:R. cos(u)), 2.0>")
        assert alpha_equivalent(inline_functions(t), parse_term("(\\u:R. cos(u)) 2.0"))

    def test_fuel(self):
        loop = Lam("f", App(Var("f"), Var("f")))
        with pytest.raises(ANFFuelExhausted):
            inline_functions(App(loop, loop), fuel=10)


class TestSemantics:
    """A-normalization does not change the value of closed terms"""

    @pytest.mark.parametrize(
        "text",
        [
            "pow2(mult(g<1.0, 3.0>))",
            "let a = <1.0, 2.0> in pi2 a + pi1 a",
            "(\\u:R. sin(u) + cos(u)) 0.5",
            "pi1 g<exp(0.25), -1.0>",
        ],
    )
    def test_same_value(self, text, registry):
        t = parse_term(text)
        engine = PullbackEngine(registry)
        assert engine.normalize(a_normal_term(t))[0] == engine.normalize(t)[0]


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
