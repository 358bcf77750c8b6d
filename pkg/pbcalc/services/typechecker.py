"""
Bidirectional type checker for the pullback calculus

`infer` synthesizes a type; `check` pushes an expected type into unannotated binders, Zero and
dual vectors. Binder types of unannotated lambdas and pullbacks in function position are read from
the argument, so let-sugar and applied pullbacks need no annotations.
"""

from typing import Dict, Mapping, Optional

from pbcalc.core.logging import get_logger
from pbcalc.services.primitives import PrimitiveRegistry, default_registry
from pbcalc.syntax.analysis import is_linear
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
    Sum,
    Term,
    Var,
    Zero,
)
from pbcalc.syntax.types import REAL, Arrow, Dual, Prod, Ty, omega, real_power
from pbcalc.utils.errors import RegistryError, TypeCheckError, TypeErrorKind

logger = get_logger(__name__)

TypingEnv = Mapping[str, Ty]


def _error(kind: TypeErrorKind, t: Term, message: str, name: Optional[str] = None) -> TypeCheckError:
    return TypeCheckError(kind, str(t), message, name=name)


def _extend(env: TypingEnv, name: str, ty: Ty) -> Dict[str, Ty]:
    return {**env, name: ty}


class TypeChecker:
    """Typing rules, with primitive dimensions read from a registry"""

    def __init__(self, registry: Optional[PrimitiveRegistry] = None):
        self.registry = registry or default_registry()

    # --- synthesis -------------------------------------------------------------

    def infer(self, env: TypingEnv, t: Term) -> Ty:
        match t:
            case Var(name):
                if name not in env:
                    raise _error(TypeErrorKind.UNBOUND, t, f"unbound variable {name}", name=name)
                return env[name]
            case RealLit():
                return REAL
            case Zero(ty):
                if ty is None:
                    raise _error(TypeErrorKind.UNANNOTATED, t, "cannot determine the type of 0")
                return ty
            case DualVec(values, ty):
                if ty is None:
                    return Dual(real_power(len(values)))
                if not ty.is_first_order or ty.leaf_count != len(values):
                    raise _error(TypeErrorKind.BAD_DIMENSION, t, f"{len(values)} entries do not cover {ty}")
                return Dual(ty)
            case Sum(terms):
                return self._infer_sum(env, t, terms)
            case Lam(name, body, ty):
                if ty is None:
                    raise _error(TypeErrorKind.UNANNOTATED, t, f"binder {name} needs a type annotation", name=name)
                return Arrow(ty, self.infer(_extend(env, name, ty), body))
            case App(fn, arg):
                return self._infer_app(env, t, fn, arg)
            case Proj(index, body):
                ty = self.infer(env, body)
                if not isinstance(ty, Prod):
                    raise _error(TypeErrorKind.MISMATCH, t, f"projection out of non-product type {ty}")
                return ty.left if index == 1 else ty.right
            case Pair(left, right):
                return Prod(self.infer(env, left), self.infer(env, right))
            case PrimApp(prim, arg):
                n_in, n_out = self._dims(t, prim)
                self._expect_leaves(env, t, arg, n_in)
                return real_power(n_out)
            case Jac(prim, arg):
                n_in, n_out = self._dims(t, prim)
                return Arrow(self._expect_leaves(env, t, arg, n_in), real_power(n_out))
            case DualMap(name, body, arg, ty):
                return self._dual_map(env, t, ty)
            case Pullback(name, body, form, ty):
                if ty is None:
                    raise _error(TypeErrorKind.UNANNOTATED, t, f"pullback binder {name} needs a type", name=name)
                return self._pullback(env, t, ty)
        raise _error(TypeErrorKind.MISMATCH, t, "not a term")

    def _infer_sum(self, env: TypingEnv, t: Term, terms) -> Ty:
        pending: Optional[TypeCheckError] = None
        for summand in terms:
            try:
                ty = self.infer(env, summand)
            except TypeCheckError as exc:
                if exc.kind != TypeErrorKind.UNANNOTATED:
                    raise
                pending = pending or exc
                continue
            for other in terms:
                if other is not summand:
                    self.check(env, other, ty)
            return ty
        assert pending is not None
        raise pending

    def _infer_app(self, env: TypingEnv, t: Term, fn: Term, arg: Term) -> Ty:
        if isinstance(fn, Lam) and fn.ty is None:
            arg_ty = self.infer(env, arg)
            return self.infer(_extend(env, fn.name, arg_ty), fn.body)
        if isinstance(fn, Pullback) and fn.ty is None:
            arg_ty = self.infer(env, arg)
            return self._pullback(env, fn, arg_ty).cod  # type: ignore[attr-defined]
        fn_ty = self.infer(env, fn)
        if not isinstance(fn_ty, Arrow):
            raise _error(TypeErrorKind.NOT_A_FUNCTION, t, f"applying a term of type {fn_ty}")
        self.check(env, arg, fn_ty.dom)
        return fn_ty.cod

    def _dims(self, t: Term, prim: str):
        try:
            p = self.registry.get(prim)
        except RegistryError:
            raise _error(TypeErrorKind.UNBOUND, t, f"unknown primitive {prim}", name=prim) from None
        return p.n_in, p.n_out

    def _expect_leaves(self, env: TypingEnv, t: Term, arg: Term, n: int) -> Ty:
        try:
            ty = self.infer(env, arg)
        except TypeCheckError as exc:
            if exc.kind != TypeErrorKind.UNANNOTATED:
                raise
            # an unannotated 0 inside the argument takes its type from the primitive
            ty = real_power(n)
            self.check(env, arg, ty)
            return ty
        if not ty.is_first_order or ty.leaf_count != n:
            raise _error(TypeErrorKind.BAD_DIMENSION, t, f"expected an argument with {n} real components, got {ty}")
        return ty

    def _dual_map(self, env: TypingEnv, t: DualMap, sigma: Optional[Ty]) -> Ty:
        if not is_linear(t.name, t.body):
            raise _error(TypeErrorKind.NOT_LINEAR, t, f"{t.name} is not linear in the dual map body", name=t.name)
        if sigma is None:
            raise _error(TypeErrorKind.UNANNOTATED, t, f"dual map binder {t.name} needs a type", name=t.name)
        inner = _extend(env, t.name, sigma)
        try:
            tau = self.infer(inner, t.body)
        except TypeCheckError as exc:
            if exc.kind != TypeErrorKind.UNANNOTATED:
                raise
            covector = self.infer(env, t.arg)
            if not isinstance(covector, Dual):
                raise _error(TypeErrorKind.MISMATCH, t, f"dual map argument has non-dual type {covector}") from None
            self.check(inner, t.body, covector.of)
        else:
            self.check(env, t.arg, Dual(tau))
        return Dual(sigma)

    def _pullback(self, env: TypingEnv, t: Pullback, sigma: Ty) -> Ty:
        try:
            form_ty = self.infer(env, t.form)
        except TypeCheckError as exc:
            if exc.kind != TypeErrorKind.UNANNOTATED:
                raise
            tau = self.infer(_extend(env, t.name, sigma), t.body)
            self.check(env, t.form, omega(tau))
        else:
            if not (isinstance(form_ty, Arrow) and form_ty.cod == Dual(form_ty.dom)):
                raise _error(TypeErrorKind.MISMATCH, t, f"pullback expects a 1-form, got {form_ty}")
            self.check(_extend(env, t.name, sigma), t.body, form_ty.dom)
        return omega(sigma)

    # --- checking -------------------------------------------------------------

    def check(self, env: TypingEnv, t: Term, expected: Ty) -> None:
        match t:
            case Zero(ty):
                if ty is not None and ty != expected:
                    raise _error(TypeErrorKind.MISMATCH, t, f"0 : {ty} used at {expected}")
                return
            case DualVec(values, _):
                if not (isinstance(expected, Dual) and expected.of.is_first_order):
                    raise _error(TypeErrorKind.MISMATCH, t, f"dual vector used at {expected}")
                if expected.of.leaf_count != len(values):
                    raise _error(TypeErrorKind.BAD_DIMENSION, t, f"{len(values)} entries used at {expected}")
                return
            case Sum(terms):
                for summand in terms:
                    self.check(env, summand, expected)
                return
            case Pair(left, right) if isinstance(expected, Prod):
                self.check(env, left, expected.left)
                self.check(env, right, expected.right)
                return
            case Lam(name, body, None) if isinstance(expected, Arrow):
                self.check(_extend(env, name, expected.dom), body, expected.cod)
                return
            case DualMap(_, _, _, None) if isinstance(expected, Dual):
                self._dual_map(env, t, expected.of)
                return
            case Pullback(_, _, _, None) if isinstance(expected, Arrow):
                actual = self._pullback(env, t, expected.dom)
                if actual != expected:
                    raise _error(TypeErrorKind.MISMATCH, t, f"expected {expected}, got {actual}")
                return
            case App(Lam(name, body, None), arg):
                self.check(_extend(env, name, self.infer(env, arg)), body, expected)
                return
        actual = self.infer(env, t)
        if actual != expected:
            raise _error(TypeErrorKind.MISMATCH, t, f"expected {expected}, got {actual}")

    def check_preserved(self, before: Term, after: Term, env: TypingEnv) -> bool:
        """Whether one reduction step kept the type; `before` must be typeable"""
        expected = self.infer(env, before)
        try:
            self.check(env, after, expected)
        except TypeCheckError as exc:
            logger.debug("type not preserved", expected=str(expected), reason=exc.message)
            return False
        return True


_default: Optional[TypeChecker] = None


def default_checker() -> TypeChecker:
    global _default
    if _default is None:
        _default = TypeChecker()
    return _default


def infer(env: TypingEnv, t: Term) -> Ty:
    return default_checker().infer(env, t)


def check(env: TypingEnv, t: Term, expected: Ty) -> None:
    default_checker().check(env, t, expected)


def check_preserved(before: Term, after: Term, env: TypingEnv) -> bool:
    return default_checker().check_preserved(before, after, env)
