# tests/test_typechecker.py
# Tests for type inference and checking: the fixtures, linearity of dual maps and the error kinds
# RELEVANT FILES: pbcalc/services/typechecker.py, pbcalc/utils/errors.py

import pytest

from pbcalc.services.typechecker import TypeChecker
from pbcalc.syntax.parser import parse_term
from pbcalc.syntax.printer import format_type
from pbcalc.syntax.terms import App, DualVec, Jac, Lam, Pair, PrimApp, Proj, Pullback, RealLit, Sum, Var, Zero
from pbcalc.syntax.types import REAL, Arrow, Dual, real_power
from pbcalc.utils.errors import ErrorCode, TypeCheckError, TypeErrorKind


@pytest.fixture
def checker(registry):
    return TypeChecker(registry)


def kind_of(checker, t, env=None):
    with pytest.raises(TypeCheckError) as exc_info:
        checker.infer(env or {}, t)
    return exc_info.value.kind


class TestFixtures:
    """Types of the two fixture programs"""

    def test_running_example(self, checker, running_program):
        ty = checker.infer(running_program.context, running_program.term)
        assert ty == Dual(real_power(2))
        assert format_type(ty) == "R^2*"

    def test_sum_example(self, checker, sum_program):
        ty = checker.infer(sum_program.context, sum_program.term)
        church = Arrow(Arrow(REAL, Arrow(REAL, REAL)), Arrow(REAL, REAL))
        assert ty == Dual(church)
        assert format_type(ty) == "((R -> R -> R) -> R -> R)*"


class TestInference:
    """Synthesized types"""

    def test_literals(self, checker):
        assert checker.infer({}, RealLit(2.0)) == REAL
        assert checker.infer({}, DualVec((1.0, 2.0))) == Dual(real_power(2))
        assert checker.infer({}, Zero(real_power(3))) == real_power(3)

    def test_primitives(self, checker):
        assert checker.infer({}, PrimApp("g", Pair(RealLit(1.0), RealLit(3.0)))) == real_power(2)
        assert checker.infer({}, Jac("g", Pair(RealLit(1.0), RealLit(2.0)))) == Arrow(real_power(2), real_power(2))

    def test_let_needs_no_annotation(self, checker):
        t = parse_term("let a = <1.0, 2.0> in pi2 a + pi1 a")
        assert checker.infer({}, t) == REAL

    def test_projection(self, checker):
        assert checker.infer({"c": real_power(3)}, Proj(2, Var("c"))) == REAL

    def test_linear_dual_map(self, checker):
        t = parse_term("dual<v:R. jac pow2 v 22.0> [1]*")
        assert checker.infer({}, t) == Dual(REAL)

    def test_check_pushes_types_into_zero(self, checker):
        checker.check({}, Zero(), real_power(2))
        checker.check({}, Lam("x", Zero()), Arrow(REAL, REAL))

    def test_check_preserved(self, checker):
        before = App(Lam("x", PrimApp("pow2", Var("x")), REAL), RealLit(3.0))
        assert checker.check_preserved(before, PrimApp("pow2", RealLit(3.0)), {})

    def test_unannotated_zero_takes_the_primitive_shape(self, checker):
        env = {"v2": real_power(2), "w": REAL}
        assert checker.infer(env, Jac("mult", Pair(Proj(2, Var("v2")), Zero()))) == Arrow(real_power(2), REAL)
        applied = App(Jac("mult", Pair(Proj(2, Var("v2")), Zero())), Pair(RealLit(0.3), Var("w")))
        assert checker.infer(env, applied) == REAL
        assert checker.infer(env, PrimApp("add", Pair(Zero(), Var("w")))) == REAL

    def test_check_preserved_rejects_a_changed_type(self, checker):
        before = App(Lam("x", PrimApp("pow2", Var("x")), REAL), RealLit(3.0))
        assert not checker.check_preserved(before, Pair(RealLit(3.0), RealLit(3.0)), {})
        assert not checker.check_preserved(before, Lam("x", Var("x"), REAL), {})
        assert not checker.check_preserved(before, Zero(real_power(2)), {})
        assert checker.check_preserved(before, Zero(), {})


class TestTypingProperties:
    """Uniqueness of synthesized types and weakening"""

    TERMS = [
        "\\x:R. sin(x)",
        "let a = <1.0, 2.0> in g<pi2 a, pi1 a>",
        "\\p:R^2. pow2(mult(g<pi1 p, pi2 p>))",
        "dual<v:R. jac pow2 v 22.0> [1]*",
        "(\\f:R -> R. f 2.0) (\\z:R. exp(z))",
        "\\l:((R -> R -> R) -> R -> R). l (\\x:R. \\y:R. x + y) 0.0",
    ]

    @pytest.mark.parametrize("source", TERMS)
    def test_synthesized_type_is_the_only_one(self, checker, source):
        t = parse_term(source)
        ty = checker.infer({}, t)
        checker.check({}, t, ty)
        with pytest.raises(TypeCheckError):
            checker.check({}, t, Dual(ty))

    @pytest.mark.parametrize("source", TERMS)
    def test_weakening(self, checker, source):
        t = parse_term(source)
        assert checker.infer({"unused": real_power(3)}, t) == checker.infer({}, t)

    def test_running_example_under_a_larger_context(self, checker, running_program):
        wider = {**running_program.context, "c": Arrow(REAL, REAL)}
        assert checker.infer(wider, running_program.term) == checker.infer(running_program.context, running_program.term)


class TestErrors:
    """Every failure names its kind"""

    def test_not_linear(self, checker):
        assert kind_of(checker, parse_term("dual<y:R. 5.0> [1]*")) == TypeErrorKind.NOT_LINEAR

    def test_nonlinear_use_of_binder(self, checker):
        assert kind_of(checker, parse_term("dual<y:R. sin(y)> [1]*")) == TypeErrorKind.NOT_LINEAR

    def test_unbound(self, checker):
        with pytest.raises(TypeCheckError) as exc_info:
            checker.infer({}, Var("q"))
        assert exc_info.value.kind == TypeErrorKind.UNBOUND
        assert exc_info.value.code == ErrorCode.UNBOUND_VARIABLE
        assert exc_info.value.name == "q"

    def test_unknown_primitive(self, checker):
        assert kind_of(checker, PrimApp("tanh", RealLit(1.0))) == TypeErrorKind.UNBOUND

    def test_bad_dimension(self, checker):
        assert kind_of(checker, PrimApp("mult", RealLit(1.0))) == TypeErrorKind.BAD_DIMENSION
        assert kind_of(checker, DualVec((1.0,), real_power(2))) == TypeErrorKind.BAD_DIMENSION

    def test_unannotated(self, checker):
        assert kind_of(checker, Zero()) == TypeErrorKind.UNANNOTATED
        assert kind_of(checker, Lam("x", Var("x"))) == TypeErrorKind.UNANNOTATED

    def test_not_a_function(self, checker):
        assert kind_of(checker, App(RealLit(1.0), RealLit(2.0))) == TypeErrorKind.NOT_A_FUNCTION

    def test_mismatch(self, checker):
        assert kind_of(checker, Proj(1, RealLit(1.0))) == TypeErrorKind.MISMATCH
        assert kind_of(checker, Sum((RealLit(1.0), Pair(RealLit(1.0), RealLit(2.0))))) == TypeErrorKind.MISMATCH

    def test_pullback_needs_a_one_form(self, checker):
        t = Pullback("x", Var("x"), RealLit(1.0), REAL)
        assert kind_of(checker, t) == TypeErrorKind.MISMATCH

    def test_error_record(self, checker):
        with pytest.raises(TypeCheckError) as exc_info:
            checker.infer({}, Proj(1, RealLit(1.0)))
        record = exc_info.value.to_dict()
        assert record["error_code"] == ErrorCode.TYPE_MISMATCH.value
        assert record["kind"] == "mismatch"
        assert record["term"].startswith("pi1")


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
