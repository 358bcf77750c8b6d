# tests/test_engine.py
# Tests for the pullback engine: the running example and its trace, single rules, gradients and the fuel budget
# RELEVANT FILES: pbcalc/services/engine.py, pbcalc/models/trace.py, programs/*.pb

import numpy as np
import pytest

from pbcalc.models.trace import Phase, RuleId
from pbcalc.services.anf import LetSeries, a_normalize
from pbcalc.services.engine import PullbackEngine, _Run, decompose, function_of, plug, subterm
from pbcalc.services.oracle import check_gradient
from pbcalc.syntax.analysis import alpha_equivalent, decode_vector
from pbcalc.syntax.parser import parse_term
from pbcalc.syntax.printer import format_term
from pbcalc.syntax.terms import (
    App,
    DualMap,
    DualVec,
    Jac,
    Lam,
    Pair,
    PrimApp,
    Proj,
    Pullback,
    RealLit,
    Var,
    Zero,
)
from pbcalc.syntax.types import REAL, real_power
from pbcalc.utils.errors import ErrorCode, FuelExhausted, HigherOrderResult, StuckPremise, TermShapeError


class TestRunningExample:
    """pb (\\<x,y>. pow2(mult(g<x,y>))) (pbof [1]) applied to <1, 3>"""

    @pytest.fixture
    def result(self, engine, running_program):
        return engine.normalize(running_program.term)

    def test_value(self, result):
        value, _ = result
        assert isinstance(value, DualVec)
        assert value.values == (660.0, 528.0)
        assert value.ty == real_power(2)

    def test_starts_with_administrative_step(self, result):
        _, trace = result
        first = trace.top_level()[0]
        assert first.rule == RuleId.ADMIN
        assert len(LetSeries.from_term(first.result.body)) == 4

    def test_splits_before_pulling_back(self, result):
        _, trace = result
        assert trace.rules()[:6] == ["A", "8", "8", "8", "7", "20a"]

    def test_forward_values(self, result):
        _, trace = result
        computed = [decode_vector(e.result).tolist() for e in trace.top_level() if e.rule == RuleId.PRIM_LIT]
        assert computed == [[2.0, 11.0], [22.0], [484.0]]

    def test_reverse_covectors(self, result):
        _, trace = result
        covectors = [e.result.values for e in trace.top_level() if e.rule == RuleId.DUAL_JAC]
        assert covectors == [
            (0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 44.0),
            (0.0, 0.0, 0.0, 0.0, 484.0, 88.0),
            (0.0, 0.0, 660.0, 528.0),
            (660.0, 528.0),
        ]

    def test_phases(self, result):
        _, trace = result
        top = trace.top_level()
        first_reverse = next(i for i, e in enumerate(top) if e.phase == Phase.REVERSE)
        assert top[first_reverse].rule == RuleId.DUAL_JAC
        assert all(e.phase == Phase.REVERSE for e in top[first_reverse:])
        assert all(e.phase == Phase.FORWARD for e in top[:first_reverse])

    def test_trace_records(self, result):
        _, trace = result
        records = trace.records()
        assert [r.step for r in records] == list(range(1, len(trace) + 1))
        assert records[-1].result == "([660, 528]* : R^2)"

    def test_types_are_preserved(self, registry, running_program):
        value, _ = PullbackEngine(registry, check_types=True).normalize(running_program.term)
        assert value.values == (660.0, 528.0)


class TestRules:
    """Single reductions"""

    def test_beta(self, engine):
        assert engine.step(App(Lam("x", PrimApp("pow2", Var("x")), REAL), RealLit(3.0))) == PrimApp(
            "pow2", RealLit(3.0)
        )

    def test_projection(self, engine):
        assert engine.step(parse_term("pi1 <1.0, 2.0>")) == RealLit(1.0)

    def test_jacobian_application(self, engine):
        # J(mult)(2, 11) applied to the tangent (1, 2)
        value, trace = engine.normalize(parse_term("(jac mult <1.0, 2.0>) <2.0, 11.0>"))
        assert value == RealLit(15.0)
        assert trace.rules() == ["4"]

    def test_dual_map_against_covector(self, engine):
        value, trace = engine.normalize(DualMap("v", App(Jac("pow2", Var("v")), RealLit(22.0)), DualVec((1.0,))))
        assert value == DualVec((44.0,), REAL)
        assert trace.rules() == ["5"]

    def test_dual_map_composition(self, engine):
        inner = DualMap("b", Proj(1, Var("b")), Var("w"))
        value, trace = engine.normalize(DualMap("a", Pair(Var("a"), Var("a")), inner))
        assert value == DualMap("a", Var("a"), Var("w"))
        assert trace.rules() == ["6"]

    def test_constant_body_pulls_back_to_zero(self, engine):
        t = App(Pullback("y", RealLit(2.0), Var("ω"), REAL), RealLit(1.0))
        value, trace = engine.normalize(t)
        assert isinstance(value, Zero)
        assert trace.rules() == ["9"]

    def test_literal_sums_fold(self, engine):
        value, _ = engine.normalize(parse_term("(\\a:R. a + a + 1.5) 2.0"))
        assert value == RealLit(5.5)

    def test_stuck_application_is_noted(self, engine):
        value, trace = engine.normalize(App(Var("f"), RealLit(1.0)))
        assert value == App(Var("f"), RealLit(1.0))
        assert len(trace) == 0
        assert trace.notes[0].note.startswith("stuck value")

    def test_step_on_a_value(self, engine):
        with pytest.raises(TermShapeError) as exc_info:
            engine.step(DualVec((1.0,)))
        assert exc_info.value.code == ErrorCode.NO_REDEX


class TestDecomposition:
    """Evaluation contexts"""

    def test_value_has_no_redex(self):
        assert decompose(DualVec((1.0, 2.0))) is None
        assert decompose(Lam("x", PrimApp("sin", RealLit(1.0)))) is None

    def test_innermost_redex_first(self):
        t = PrimApp("pow2", Proj(1, Pair(RealLit(1.0), RealLit(2.0))))
        found = decompose(t)
        assert found.context == (0,)
        assert found.redex.rule == RuleId.PROJ_PAIR
        assert subterm(t, found.context) == found.redex.term
        assert plug(t, found.context, RealLit(1.0)) == PrimApp("pow2", RealLit(1.0))

    def test_call_by_value_argument_before_beta(self):
        t = App(Lam("x", Var("x"), REAL), PrimApp("sin", RealLit(0.0)))
        found = decompose(t)
        assert found.redex.rule == RuleId.PRIM_LIT
        assert found.context == (1,)


class TestSumExample:
    """Derivative of sum over a Church-encoded list at [-1, 7]"""

    def test_value(self, sum_program):
        value, _ = PullbackEngine(env=sum_program.context).normalize(sum_program.term)
        assert isinstance(value, DualMap)
        # the 1-form is taken at the sum -1 + 7
        assert value.arg == App(Var("ω"), RealLit(6.0))
        body = format_term(value.body)
        assert value.name in body
        assert "0.0" in body

    def test_derivative_applies_the_tangent_list(self, sum_program):
        value, _ = PullbackEngine(env=sum_program.context).normalize(sum_program.term)
        # dual<v. v (\x. \y. L) 0> (ω 6), with L the let series of x + y
        body = value.body
        assert isinstance(body, App) and isinstance(body.fn, App)
        assert body.fn.fn == Var(value.name)
        assert body.arg == RealLit(0.0)
        step = a_normalize(parse_term("\\x:R. \\y:R. x + y")).bindings[0][1]
        assert alpha_equivalent(body.fn.arg, step)


class TestGradients:
    """grad and jacobian"""

    def test_running_function(self, engine, running_function):
        np.testing.assert_allclose(engine.grad(running_function, [1.0, 3.0], 1), [660.0, 528.0])

    def test_identity(self, engine):
        np.testing.assert_allclose(engine.grad(parse_term("\\x:R. x"), [5.0], 1), [1.0])

    def test_constant(self, engine):
        np.testing.assert_allclose(engine.grad(parse_term("\\x:R. 3.0"), [2.0], 1), [0.0])

    def test_jacobian_of_g(self, engine):
        jacobian = engine.jacobian(parse_term("\\<a, b>. g<a, b>"), [1.0, 3.0])
        np.testing.assert_allclose(jacobian, [[1.0, 0.0], [2.0, 6.0]])

    def test_output_size(self, engine, running_function):
        assert engine.output_size(running_function, 2) == 1

    def test_higher_order_result(self, engine):
        with pytest.raises(HigherOrderResult):
            engine.grad(parse_term("\\x:R. \\y:R. x"), [1.0], 1)

    def test_function_of(self, running_program):
        f, point = function_of(running_program.term)
        assert isinstance(f, Lam)
        assert point == [1.0, 3.0]
        assert function_of(RealLit(1.0)) == (RealLit(1.0), None)


HIGHER_ORDER = [
    ("\\x:R. (\\f:R -> R. \\k:R -> R. k (f x)) (\\z:R. z) (\\z:R. z)", [0.3]),
    ("\\x:R. (\\f:R -> R. \\k:R -> R. k (f x)) (\\z:R. exp(z)) (\\z:R. pow2(z))", [0.3]),
    ("\\x:R. (\\f:R -> R. \\k:R -> R. k (f x)) (\\z:R. mult<z, x>) (\\z:R. sin(z))", [0.7]),
    ("\\x:R. let sq = (\\z:R. mult<z, z>) in sq (exp(x))", [0.4]),
    ("\\x:R. (\\h:R -> R. h (h x)) (\\z:R. sin(z))", [1.1]),
    ("\\x:R. let k = (\\z:R. mult<z, x>) in k x", [0.3]),
    ("\\x:R. (\\u:R. \\w:R. mult<u, w>) x x", [0.3]),
    ("\\<a, b>. (\\f:R -> R -> R. f a (f b a)) (\\u:R. \\w:R. mult<u, w>)", [0.5, -1.5]),
]


class TestHigherOrder:
    """Closed programs that bind, pass and return functions"""

    def test_curried_identities(self, engine):
        f = parse_term("\\x:R. (\\f:R -> R. \\k:R -> R. k (f x)) (\\z:R. z) (\\z:R. z)")
        np.testing.assert_allclose(engine.grad(f, [0.3], 1), [1.0])

    def test_curried_product(self, engine):
        f = parse_term("\\x:R. (\\u:R. \\w:R. mult<u, w>) x x")
        np.testing.assert_allclose(engine.grad(f, [0.3], 1), [0.6])

    @pytest.mark.parametrize("source, x", HIGHER_ORDER)
    def test_against_finite_differences(self, engine, source, x):
        report = check_gradient(parse_term(source), x, 1, engine)
        assert report.ok, report

    @pytest.mark.parametrize("source, x", HIGHER_ORDER)
    def test_types_are_preserved(self, registry, engine, source, x):
        f = parse_term(source)
        checked = PullbackEngine(registry, check_types=True)
        np.testing.assert_allclose(checked.grad(f, x, 1), engine.grad(f, x, 1), rtol=1e-12)

    def test_function_parameter_applied_under_a_lambda_is_reported(self, engine):
        # a let series is pulled back as written, so h's parameter stays a free function inside its body
        f = parse_term(
            "\\x:R. let h = (\\f:R -> R. let u = f x in u) in let s = (\\z:R. let t = sin(z) in t) in"
            " let r = h s in r"
        )
        term, _ = engine.gradient_term(f, [0.3], 1)
        value, trace = engine.normalize(term)
        assert not isinstance(value, DualVec)
        assert any(note.note.startswith("stuck premise") for note in trace.notes)
        with pytest.raises(HigherOrderResult):
            engine.grad(f, [0.3], 1)


class TestPremises:
    """A premise must end in a dual map over its own 1-form"""

    def test_dual_map_over_the_fresh_form(self, engine):
        term = DualMap("v", Var("v"), App(Var("ω9"), RealLit(1.0)), REAL)
        run = _Run(engine, term, engine.fuel)
        assert run._premise_dual(term, "ω9", 0) == ("v", Var("v"))

    def test_dual_map_over_another_covector(self, engine):
        term = DualMap("v", Var("v"), Var("d"), REAL)
        run = _Run(engine, term, engine.fuel)
        with pytest.raises(StuckPremise):
            run._premise_dual(term, "ω9", 0)

    def test_zero_premise(self, engine):
        run = _Run(engine, Zero(REAL), engine.fuel)
        assert run._premise_dual(Zero(REAL), "ω9", 0) is None


class TestTraceReplay:
    """The top-level trace entries rebuild the reduction sequence"""

    @pytest.fixture(params=["running", "sum"])
    def program(self, request, running_program, sum_program):
        return running_program if request.param == "running" else sum_program

    def test_replay(self, registry, program):
        engine = PullbackEngine(registry, env=program.context)
        value, trace = engine.normalize(program.term)
        t = program.term
        for entry in trace.top_level():
            found = engine.decompose(t)
            assert found is not None
            assert found.redex.term == entry.redex
            t = plug(t, found.context, entry.result, registry)
        assert t == value
        assert engine.decompose(t) is None

    def test_deterministic(self, registry, program):
        engine = PullbackEngine(registry, env=program.context)
        first_value, first = engine.normalize(program.term)
        second_value, second = engine.normalize(program.term)
        assert first_value == second_value
        assert first.records() == second.records()
        assert first.notes == second.notes


class TestFuel:
    """The step budget"""

    def test_exhaustion(self, registry, running_program):
        with pytest.raises(FuelExhausted) as exc_info:
            PullbackEngine(registry, fuel=3).normalize(running_program.term)
        tail = exc_info.value.tail
        assert [record.step for record in tail] == [1, 2, 3]
        assert exc_info.value.code == ErrorCode.FUEL_EXHAUSTED

    def test_fuel_per_call(self, engine, running_program):
        with pytest.raises(FuelExhausted):
            engine.normalize(running_program.term, fuel=2)


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
