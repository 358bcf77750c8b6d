"""
Pullback engine: call-by-value reduction of the pullback calculus

A term is either a value or decomposes uniquely into an evaluation context and a redex. Besides the
call-by-value redexes (beta, projection of a pair, primitive on a literal, Jacobian application) the
engine reduces dual maps against covectors, splits pullbacks along let series and pulls 1-forms back
through elementary terms. Rules with a premise normalize the premise term on the spot, out of the
same step budget, and splice the body of the resulting dual map into their conclusion.

Reduction of a pullback applied to a point runs in two phases: the forward phase evaluates the
program while stacking dual maps, the reverse phase collapses the stack into one covector.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Iterator, List, Optional, Sequence, Set, Tuple

import numpy as np

from pbcalc.core.config import settings
from pbcalc.core.logging import get_logger
from pbcalc.models.trace import Phase, RuleId, TraceNote, TraceRecord
from pbcalc.services.anf import a_normal_term, inline_functions, is_elementary, is_let_series
from pbcalc.services.primitives import PrimitiveRegistry, default_registry
from pbcalc.services.typechecker import TypeChecker, TypingEnv
from pbcalc.syntax.analysis import (
    basis_dual,
    decode_vector,
    encode_vector,
    instantiate,
    mk_app,
    mk_dual_map,
    mk_jac,
    mk_proj,
    mk_sum,
    rename,
    shape_of,
    substitute,
)
from pbcalc.syntax.names import NameSupply
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
    all_names,
    atom_path,
    is_atom,
    is_let,
    is_literal_tree,
    path_term,
    project,
)
from pbcalc.syntax.types import Dual, Prod, Ty, component, leaf_range, real_power
from pbcalc.utils.errors import (
    DimensionMismatch,
    ErrorCode,
    FuelExhausted,
    HigherOrderResult,
    PbCalcError,
    StuckPremise,
    TermShapeError,
    TypeCheckError,
    TypeErrorKind,
)

logger = get_logger(__name__)

Path = Tuple[int, ...]

_REVERSE_RULES = (RuleId.DUAL_JAC, RuleId.DUAL_COMPOSE)


@dataclass(frozen=True)
class Redex:
    rule: RuleId
    term: Term


@dataclass(frozen=True)
class Decomposition:
    """t = context[redex]; the context is the child-index path from the root to the hole"""

    context: Path
    redex: Redex


@dataclass(frozen=True)
class TraceEntry:
    step: int
    rule: RuleId
    phase: Phase
    depth: int
    redex: Term
    result: Term

    def record(self) -> TraceRecord:
        return TraceRecord(
            step=self.step,
            rule=self.rule,
            phase=self.phase,
            depth=self.depth,
            redex=str(self.redex),
            result=str(self.result),
        )

    def __str__(self) -> str:
        indent = "  " * self.depth
        return f"{indent}[{self.step}] ({self.rule.value}) {self.redex}  ~>  {self.result}"


class ReductionTrace:
    """Every step of one normalization, premise steps included, plus notes on stuck values"""

    def __init__(self):
        self.entries: List[TraceEntry] = []
        self.notes: List[TraceNote] = []

    def record(self, rule: RuleId, phase: Phase, depth: int, redex: Term, result: Term) -> TraceEntry:
        entry = TraceEntry(len(self.entries) + 1, rule, phase, depth, redex, result)
        self.entries.append(entry)
        return entry

    def note(self, depth: int, note: str, term: Term) -> None:
        self.notes.append(TraceNote(step=len(self.entries), depth=depth, note=note, term=str(term)))

    def top_level(self) -> List[TraceEntry]:
        return [e for e in self.entries if e.depth == 0]

    def rules(self, depth: Optional[int] = 0) -> List[str]:
        return [e.rule.value for e in self.entries if depth is None or e.depth == depth]

    def records(self, max_depth: Optional[int] = None) -> List[TraceRecord]:
        return [e.record() for e in self.entries if max_depth is None or e.depth <= max_depth]

    def tail(self, n: int) -> List[TraceEntry]:
        return self.entries[-n:] if n else []

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self) -> Iterator[TraceEntry]:
        return iter(self.entries)


# --- contexts ------------------------------------------------------------------


def subterm(t: Term, path: Path) -> Term:
    for index in path:
        match t:
            case App(fn, arg):
                t = fn if index == 0 else arg
            case Proj(_, body) | PrimApp(_, body) | Jac(_, body):
                t = body
            case Pair(left, right):
                t = left if index == 0 else right
            case DualMap(_, body, arg):
                t = body if index == 0 else arg
            case Pullback(_, body, form):
                t = body if index == 0 else form
            case Sum(terms):
                t = terms[index]
            case _:
                raise TermShapeError(f"no subterm {index} in `{t}`")
    return t


def plug(t: Term, path: Path, new: Term, registry: Optional[PrimitiveRegistry] = None) -> Term:
    """Replace the hole at `path` by `new`; Zero and sums propagate through linear frames"""
    if not path:
        return new
    index, rest = path[0], path[1:]
    match t:
        case App(fn, arg):
            if index == 0:
                return mk_app(plug(fn, rest, new, registry), arg)
            return App(fn, plug(arg, rest, new, registry))
        case Proj(i, body):
            return mk_proj(i, plug(body, rest, new, registry))
        case Pair(left, right):
            if index == 0:
                return Pair(plug(left, rest, new, registry), right)
            return Pair(left, plug(right, rest, new, registry))
        case PrimApp(prim, arg):
            return PrimApp(prim, plug(arg, rest, new, registry))
        case Jac(prim, arg):
            cod = real_power(registry.get(prim).n_out) if registry is not None and prim in registry else None
            return mk_jac(prim, plug(arg, rest, new, registry), cod)
        case DualMap(name, body, arg, ty):
            if index == 0:
                return mk_dual_map(name, plug(body, rest, new, registry), arg, ty)
            return mk_dual_map(name, body, plug(arg, rest, new, registry), ty)
        case Pullback(name, body, form, ty):
            if index == 0:
                return Pullback(name, plug(body, rest, new, registry), form, ty)
            return Pullback(name, body, plug(form, rest, new, registry), ty)
        case Sum(terms):
            return mk_sum(terms[:index] + (plug(terms[index], rest, new, registry),) + terms[index + 1 :])
    raise TermShapeError(f"no hole {index} in `{t}`")


# --- literal folding -------------------------------------------------------------


def _foldable(terms: Sequence[Term]) -> bool:
    reals = sum(isinstance(s, RealLit) for s in terms)
    duals = sum(isinstance(s, DualVec) for s in terms)
    return reals > 1 or duals > 1


def _fold(terms: Sequence[Term]) -> Term:
    """Add up the real literals and the dual vectors of a sum of values; shorter vectors are zero-padded"""
    reals = [s.value for s in terms if isinstance(s, RealLit)]
    duals = [s for s in terms if isinstance(s, DualVec)]
    width = max((len(d.values) for d in duals), default=0)
    total = np.zeros(width)
    for d in duals:
        total[: len(d.values)] += d.values
    shape = next((d.ty for d in duals if len(d.values) == width and d.ty is not None), None)
    folded: List[Term] = []
    real_done = dual_done = False
    for s in terms:
        if isinstance(s, RealLit) and len(reals) > 1:
            if not real_done:
                folded.append(RealLit(float(sum(reals))))
                real_done = True
        elif isinstance(s, DualVec) and len(duals) > 1:
            if not dual_done:
                folded.append(DualVec(tuple(float(r) for r in total), shape))
                dual_done = True
        else:
            folded.append(s)
    return mk_sum(folded)


# --- one normalization -----------------------------------------------------------


class _Run:
    """State of one normalization: name supply, step budget, trace and phase"""

    def __init__(self, engine: "PullbackEngine", term: Term, fuel: int):
        self.registry = engine.registry
        self.checker = engine.checker
        self.env: Dict[str, Ty] = dict(engine.env)
        self.check_types = engine.check_types
        self.supply = NameSupply(all_names(term) | set(self.env))
        self.fuel = fuel
        self.steps = 0
        self.trace = ReductionTrace()
        self.reverse = False
        self._stuck: Set[Term] = set()

    # --- decomposition ---------------------------------------------------------

    def find(self, t: Term, path: Path = ()) -> Optional[Decomposition]:
        """The leftmost-innermost redex in call-by-value order, or None for a value"""
        match t:
            case App(fn, arg):
                found = self.find(fn, path + (0,)) or self.find(arg, path + (1,))
                if found is not None:
                    return found
                if self._stuck and t in self._stuck:
                    return None
                rule = self._application_rule(fn, arg)
                return None if rule is None else Decomposition(path, Redex(rule, t))
            case Proj(_, body):
                found = self.find(body, path + (0,))
                if found is None and isinstance(body, Pair):
                    return Decomposition(path, Redex(RuleId.PROJ_PAIR, t))
                return found
            case Pair(left, right):
                return self.find(left, path + (0,)) or self.find(right, path + (1,))
            case PrimApp(prim, arg):
                found = self.find(arg, path + (0,))
                if found is None and is_literal_tree(arg) and prim in self.registry:
                    return Decomposition(path, Redex(RuleId.PRIM_LIT, t))
                return found
            case Jac(_, arg):
                return self.find(arg, path + (0,))
            case DualMap(_, body, arg):
                found = self.find(arg, path + (1,)) or self.find(body, path + (0,))
                if found is not None:
                    return found
                if self._transpose(t) is not None:
                    return Decomposition(path, Redex(RuleId.DUAL_JAC, t))
                if isinstance(arg, DualMap):
                    return Decomposition(path, Redex(RuleId.DUAL_COMPOSE, t))
                return None
            case Pullback(name, body, form):
                if is_let(body) and is_let_series(body):
                    lam = body.fn
                    rule = RuleId.LET_LAST if lam.body == Var(lam.name) else RuleId.LET_SPLIT
                    return Decomposition(path, Redex(rule, t))
                if not _ready(name, body):
                    return Decomposition(path, Redex(RuleId.ADMIN, t))
                return self.find(form, path + (1,))
            case Sum(terms):
                for index, summand in enumerate(terms):
                    found = self.find(summand, path + (index,))
                    if found is not None:
                        return found
                return Decomposition(path, Redex(RuleId.FOLD, t)) if _foldable(terms) else None
        return None

    def _application_rule(self, fn: Term, arg: Term) -> Optional[RuleId]:
        match fn:
            case Lam():
                return RuleId.BETA
            case Jac(prim, tangent) if is_literal_tree(tangent) and is_literal_tree(arg) and prim in self.registry:
                return RuleId.JAC_APPLY
            case Pullback(name, body):
                return _pullback_rule(name, body, arg)
        return None

    # --- contraction -----------------------------------------------------------

    def contract(self, redex: Redex, depth: int) -> Tuple[RuleId, Term]:
        t, rule = redex.term, redex.rule
        match t:
            case App(Lam(name, body), arg) if rule is RuleId.BETA:
                return rule, substitute(body, arg, name)
            case Proj(index, Pair(left, right)):
                return rule, left if index == 1 else right
            case PrimApp(prim, arg):
                p = self.registry.get(prim)
                return rule, encode_vector(self.registry.eval_prim(prim, decode_vector(arg)), real_power(p.n_out))
            case App(Jac(prim, tangent), point) if rule is RuleId.JAC_APPLY:
                # (jac f s) r is J(f)(r) s: the Jacobian's argument is the tangent, the applied value the point
                p = self.registry.get(prim)
                out = self.registry.jvp(prim, decode_vector(tangent), decode_vector(point))
                return rule, encode_vector(out, real_power(p.n_out))
            case DualMap(name, body, arg, ty) if rule is RuleId.DUAL_JAC:
                covector = self._transpose(t)
                assert covector is not None
                return rule, DualVec(tuple(float(r) for r in covector), ty or _literal_binder_shape(t, self.registry))
            case DualMap(name, body, DualMap(inner, inner_body, inner_arg), ty):
                return rule, mk_dual_map(name, instantiate(inner_body, body, inner), inner_arg, ty)
            case Pullback(name, body, form, ty) if rule is RuleId.ADMIN:
                return rule, Pullback(name, a_normal_term(inline_functions(body), self.supply), form, ty)
            case Pullback(name, App(Lam(x, rest), bound), form, ty) if rule is RuleId.LET_LAST:
                return rule, Pullback(name, bound, form, ty)
            case Pullback(name, App(Lam(x, rest), bound), form, ty):
                return rule, self._split(name, x, rest, bound, form, ty)
            case Sum(terms):
                return rule, _fold(terms)
            case App(Pullback() as pb, value):
                return self._pull_back(rule, pb, value, depth)
        raise TermShapeError(f"`{t}` is not a {rule.value} redex")

    def _split(self, y: str, x: str, rest: Term, bound: Term, form: Term, ty: Optional[Ty]) -> Term:
        """pb (\\y. let x = E in L) w  ~>  pb (\\y. <y, E>) (pb (\\<y, x>. L) w)"""
        w = self.supply.fresh("w")
        bound_ty = self._try_infer(bound, {**self.env, y: ty} if ty is not None else self.env)
        w_ty = Prod(ty, bound_ty) if ty is not None and bound_ty is not None else None
        self._declare(x, bound_ty)
        self._declare(w, w_ty)
        inner = substitute(substitute(rest, Proj(1, Var(w)), y), Proj(2, Var(w)), x)
        return Pullback(y, Pair(Var(y), bound), Pullback(w, inner, form, w_ty), ty)

    def _pull_back(self, rule: RuleId, pb: Pullback, value: Term, depth: int) -> Tuple[RuleId, Term]:
        """(pb (\\y. E) w) V for an elementary E"""
        y, e, form = pb.name, pb.body, pb.form
        sigma = self._binder_type(pb, value)
        if rule is RuleId.CONSTANT:
            return rule, Zero(Dual(sigma) if sigma is not None else None)
        v = self.supply.fresh("v")
        self._declare(y, sigma)
        self._declare(v, sigma)

        def scope() -> TypingEnv:
            return {**self.env, y: sigma} if sigma is not None else self.env

        def dual(body: Term, point: Term) -> Term:
            return mk_dual_map(v, body, mk_app(form, point), sigma)

        def lin(a: Term) -> Term:
            path = atom_path(a, y)
            return path_term(Var(v), path) if path is not None else Zero(self._try_infer(a, scope()))

        def at(a: Term) -> Term:
            path = atom_path(a, y)
            return project(value, path) if path is not None else a

        def premise(body: Term) -> Term:
            omega = self.supply.fresh("ω")
            found = self._premise_dual(App(Pullback(y, body, Var(omega), sigma), value), omega, depth)
            if found is None:
                return Zero(self._try_infer(body, scope()))
            name, result = found
            return rename(result, name, v)

        if isinstance(e, (Lam, DualMap)):
            self._declare(e.name, e.ty)

        match rule:
            case RuleId.LINEAR_ID | RuleId.LINEAR_PROJ:
                return rule, dual(lin(e), at(e))
            case RuleId.LINEAR_SUM_FREE | RuleId.LINEAR_SUM:
                a, b = e.terms
                return rule, dual(mk_sum([lin(a), lin(b)]), mk_sum([at(a), at(b)]))
            case RuleId.PAIR_LEFT | RuleId.PAIR_RIGHT | RuleId.PAIR_BOTH:
                return rule, dual(Pair(lin(e.left), lin(e.right)), Pair(at(e.left), at(e.right)))
            case RuleId.JACOBIAN:
                return rule, dual(Jac(e.prim, lin(e.arg)), Jac(e.prim, at(e.arg)))
            case RuleId.FUNCTION_SYMBOL:
                point = at(e.arg)
                return rule, dual(App(Jac(e.prim, lin(e.arg)), point), PrimApp(e.prim, point))
            case RuleId.DUAL_MAP_CONST:
                return rule, dual(
                    DualMap(e.name, e.body, lin(e.arg), e.ty), DualMap(e.name, e.body, at(e.arg), e.ty)
                )
            case RuleId.DUAL_MAP_FREE:
                body = premise(e.body)
                moved = instantiate(e.body, value, y)
                return rule, dual(mk_dual_map(e.name, body, e.arg, e.ty), DualMap(e.name, moved, e.arg, e.ty))
            case RuleId.DUAL_MAP_BOTH:
                body = premise(e.body)
                moved = instantiate(e.body, value, y)
                summed = mk_sum(
                    [DualMap(e.name, moved, lin(e.arg), e.ty), mk_dual_map(e.name, body, at(e.arg), e.ty)]
                )
                return rule, dual(summed, DualMap(e.name, moved, at(e.arg), e.ty))
            case RuleId.PULLBACK:
                a = self.supply.fresh("a")
                self._declare(a, e.ty)
                result = self.normalize(App(e, Var(a)), depth + 1)
                return rule, App(Pullback(y, Lam(a, result, e.ty), form, pb.ty), value)
            case RuleId.ABSTRACTION:
                body = premise(e.body)
                return rule, dual(Lam(e.name, body, e.ty), Lam(e.name, instantiate(e.body, value, y), e.ty))
            case RuleId.APP_FREE_ARG:
                return rule, dual(App(lin(e.fn), e.arg), App(at(e.fn), e.arg))
            case RuleId.APP_BOUND:
                return self._pull_back_application(e, y, value, v, dual, lin, depth)
            case RuleId.PAIR_DEPENDENT:
                body = premise(e.right)
                return rule, dual(Pair(Var(v), body), Pair(value, instantiate(e.right, value, y)))
            case RuleId.PAIR_CONST:
                return rule, dual(Pair(Var(v), Zero(self._try_infer(e.right, self.env))), Pair(value, e.right))
        raise TermShapeError(f"rule {rule.value} does not pull back through `{e}`")

    def _pull_back_application(self, e: App, y: str, value: Term, v: str, dual, lin, depth: int):
        """Both the function and its argument come from the point: differentiate through the function too"""
        fn_value = project(value, atom_path(e.fn, y))
        arg_path = atom_path(e.arg, y)
        arg_value = project(value, arg_path)
        assert isinstance(fn_value, Lam)
        sigma = fn_value.ty or shape_of(arg_value) or self._try_infer(arg_value, self.env)
        self._declare(fn_value.name, sigma)
        omega = self.supply.fresh("ω")
        result = self._premise_dual(
            App(Pullback(fn_value.name, fn_value.body, Var(omega), sigma), arg_value), omega, depth
        )
        head = App(lin(e.fn), arg_value)
        point = App(fn_value, arg_value)
        if result is None:
            return RuleId.APP_BOUND_CONST, dual(head, point)
        inner, body = result
        return RuleId.APP_BOUND, dual(mk_sum([head, substitute(body, path_term(Var(v), arg_path), inner)]), point)

    # --- premises --------------------------------------------------------------

    def _premise_dual(self, term: Term, omega: str, depth: int) -> Optional[Tuple[str, Term]]:
        """Normalize a premise pulling back along the fresh 1-form `omega`.

        None when it reduces to 0, else the binder and body of its dual map, which must act on
        `omega` applied to a point.
        """
        logger.debug("premise", depth=depth + 1, size=term.size)
        result = self.normalize(term, depth + 1)
        match result:
            case Zero():
                return None
            case DualMap(name, body, App(Var(head), _)) if head == omega:
                return name, body
        raise StuckPremise(
            f"premise `{term}` reduced to `{result}`, not a dual map over {omega}", details={"result": str(result)}
        )

    # --- dual maps against covectors ---------------------------------------------

    def _transpose(self, t: DualMap) -> Optional[np.ndarray]:
        """The covector `dual<v. body> c` denotes, over the flattened binder shape, when body is linear first-order"""
        if not isinstance(t.arg, DualVec):
            return None
        sigma = t.ty or _literal_binder_shape(t, self.registry)
        if sigma is None or not sigma.is_first_order:
            return None
        acc = np.zeros(sigma.leaf_count)
        if not self._pull_covector(t.body, t.name, sigma, np.asarray(t.arg.values, dtype=float), acc):
            return None
        return acc

    def _pull_covector(self, t: Term, name: str, sigma: Ty, c: np.ndarray, acc: np.ndarray) -> bool:
        match t:
            case Zero():
                return True
            case Sum(terms):
                return all(self._pull_covector(s, name, sigma, c, acc) for s in terms)
            case Pair(left, right):
                width = self._width(left, name, sigma)
                if width is None:
                    right_width = self._width(right, name, sigma)
                    if right_width is None:
                        return False
                    width = len(c) - right_width
                if not 0 <= width <= len(c):
                    return False
                return self._pull_covector(left, name, sigma, c[:width], acc) and self._pull_covector(
                    right, name, sigma, c[width:], acc
                )
            case App(Jac(prim, arg), point) if is_literal_tree(point) and prim in self.registry:
                p = self.registry.get(prim)
                x = decode_vector(point)
                if len(x) != p.n_in or len(c) != p.n_out:
                    return False
                return self._pull_covector(arg, name, sigma, p.jacobian_at(x).T @ c, acc)
        path = atom_path(t, name)
        if path is None:
            return False
        try:
            start, stop = leaf_range(sigma, path)
        except ValueError:
            return False
        if stop - start != len(c):
            return False
        acc[start:stop] += c
        return True

    def _width(self, t: Term, name: str, sigma: Ty) -> Optional[int]:
        match t:
            case Zero(ty):
                return ty.leaf_count if ty is not None and ty.is_first_order else None
            case Sum(terms):
                return next((w for w in (self._width(s, name, sigma) for s in terms) if w is not None), None)
            case Pair(left, right):
                lw, rw = self._width(left, name, sigma), self._width(right, name, sigma)
                return lw + rw if lw is not None and rw is not None else None
            case App(Jac(prim, _), _) if prim in self.registry:
                return self.registry.get(prim).n_out
        path = atom_path(t, name)
        if path is None:
            return None
        try:
            part = component(sigma, path)
        except ValueError:
            return None
        return part.leaf_count if part.is_first_order else None

    # --- types -----------------------------------------------------------------

    def _try_infer(self, t: Term, env: TypingEnv) -> Optional[Ty]:
        try:
            return self.checker.infer(env, t)
        except (PbCalcError, ValueError):
            return None

    def _binder_type(self, pb: Pullback, value: Term) -> Optional[Ty]:
        return pb.ty or shape_of(value) or self._try_infer(value, self.env)

    def _declare(self, name: str, ty: Optional[Ty]) -> None:
        """Remember the type of a binder met during the run so that zeros built later under it are annotated"""
        if ty is not None:
            self.env.setdefault(name, ty)

    def _check_preserved(self, before: Term, after: Term) -> None:
        try:
            preserved = self.checker.check_preserved(before, after, self.env)
        except TypeCheckError:
            # an untypeable intermediate term, e.g. an unannotated binder in the input
            return
        if not preserved:
            expected = self._try_infer(before, self.env)
            raise TypeCheckError(TypeErrorKind.MISMATCH, str(after), f"reduction step does not keep the type {expected}")

    # --- driver ------------------------------------------------------------------

    def _spend(self) -> None:
        self.steps += 1
        if self.steps > self.fuel:
            tail = [e.record() for e in self.trace.tail(settings.TRACE_TAIL)]
            logger.error("fuel exhausted", fuel=self.fuel)
            raise FuelExhausted(f"no value within {self.fuel} steps", tail=tail)

    def normalize(self, t: Term, depth: int = 0) -> Term:
        while True:
            found = self.find(t)
            if found is None:
                return t
            self._spend()
            try:
                rule, result = self.contract(found.redex, depth)
            except StuckPremise as exc:
                logger.warning("stuck premise", depth=depth, message=exc.message)
                self._stuck.add(found.redex.term)
                self.trace.note(depth, f"stuck premise: {exc.message}", found.redex.term)
                continue
            if depth == 0 and rule in _REVERSE_RULES:
                self.reverse = True
            phase = Phase.REVERSE if self.reverse else Phase.FORWARD
            entry = self.trace.record(rule, phase, depth, found.redex.term, result)
            logger.debug("reduction step", step=entry.step, rule=rule.value, depth=depth)
            reduced = plug(t, found.context, result, self.registry)
            if self.check_types and depth == 0:
                self._check_preserved(t, reduced)
            t = reduced

    def note_stuck(self, value: Term) -> None:
        for note, term in _stuck_points(value):
            self.trace.note(0, note, term)


def _ready(name: str, body: Term) -> bool:
    """Whether a pullback body is in the shape the pullback rules consume"""
    if is_elementary(body):
        return True
    return isinstance(body, Pair) and body.left == Var(name) and is_elementary(body.right)


def _pullback_rule(y: str, e: Term, value: Term) -> Optional[RuleId]:
    """Which pullback rule applies to (pb (\\y. e) w) value, or None when the application is stuck"""
    if y not in e.free_vars:
        return RuleId.CONSTANT
    if is_atom(e):
        return RuleId.LINEAR_ID if atom_path(e, y) == () else RuleId.LINEAR_PROJ
    match e:
        case Sum((a, b)) if is_atom(a) and is_atom(b):
            both = atom_path(a, y) is not None and atom_path(b, y) is not None
            return RuleId.LINEAR_SUM if both else RuleId.LINEAR_SUM_FREE
        case Pair(a, b) if is_atom(a) and is_atom(b):
            left, right = atom_path(a, y) is not None, atom_path(b, y) is not None
            if left and right:
                return RuleId.PAIR_BOTH
            return RuleId.PAIR_LEFT if left else RuleId.PAIR_RIGHT
        case Pair(Var(name), rest) if name == y:
            return RuleId.PAIR_DEPENDENT if y in rest.free_vars else RuleId.PAIR_CONST
        case Jac(_, arg) if is_atom(arg):
            return RuleId.JACOBIAN
        case PrimApp(_, arg) if is_atom(arg):
            return RuleId.FUNCTION_SYMBOL
        case DualMap(name, body, arg) if is_atom(arg):
            if y not in body.free_vars - {name}:
                return RuleId.DUAL_MAP_CONST
            return RuleId.DUAL_MAP_BOTH if atom_path(arg, y) is not None else RuleId.DUAL_MAP_FREE
        case Pullback():
            return RuleId.PULLBACK
        case Lam():
            return RuleId.ABSTRACTION
        case App(fn, arg) if is_atom(fn) and is_atom(arg):
            fn_path, arg_path = atom_path(fn, y), atom_path(arg, y)
            if fn_path is None:
                return None
            if arg_path is None:
                return RuleId.APP_FREE_ARG
            return RuleId.APP_BOUND if isinstance(project(value, fn_path), Lam) else None
    return None


def _literal_binder_shape(t: DualMap, registry: PrimitiveRegistry) -> Optional[Ty]:
    """Binder shape of the plain dual<v. (jac f v) r> c redex when the binder is unannotated"""
    match t.body:
        case App(Jac(prim, Var(name)), _) if name == t.name and prim in registry:
            return real_power(registry.get(prim).n_in)
    return None


def _stuck_points(t: Term) -> Iterator[Tuple[str, Term]]:
    """Applications in evaluation positions of a value that cannot reduce"""
    match t:
        case App(fn, arg):
            yield from _stuck_points(fn)
            yield from _stuck_points(arg)
            if is_atom(fn):
                yield "stuck value: free variable in function position", t
            elif not isinstance(fn, (Lam, Jac)):
                yield "stuck value: non-abstraction in function position", t
        case Proj(_, body) | PrimApp(_, body) | Jac(_, body):
            yield from _stuck_points(body)
        case Pair(left, right):
            yield from _stuck_points(left)
            yield from _stuck_points(right)
        case DualMap(_, body, arg):
            yield from _stuck_points(arg)
            yield from _stuck_points(body)
        case Pullback(_, _, form):
            yield from _stuck_points(form)
        case Sum(terms):
            for summand in terms:
                yield from _stuck_points(summand)


# --- public API --------------------------------------------------------------------


class PullbackEngine:
    """Reduces terms of the pullback calculus; configured once, reusable across terms"""

    def __init__(
        self,
        registry: Optional[PrimitiveRegistry] = None,
        env: Optional[TypingEnv] = None,
        fuel: Optional[int] = None,
        check_types: bool = False,
    ):
        self.registry = registry or default_registry()
        self.checker = TypeChecker(self.registry)
        self.env: Dict[str, Ty] = dict(env or {})
        self.fuel = settings.FUEL if fuel is None else fuel
        self.check_types = check_types

    def decompose(self, t: Term) -> Optional[Decomposition]:
        return _Run(self, t, self.fuel).find(t)

    def step(self, t: Term) -> Term:
        run = _Run(self, t, self.fuel)
        found = run.find(t)
        if found is None:
            raise TermShapeError(f"`{t}` is a value", code=ErrorCode.NO_REDEX)
        _, result = run.contract(found.redex, 0)
        return plug(t, found.context, result, self.registry)

    def normalize(self, t: Term, fuel: Optional[int] = None) -> Tuple[Term, ReductionTrace]:
        run = _Run(self, t, self.fuel if fuel is None else fuel)
        logger.info("normalizing", size=t.size, fuel=run.fuel)
        value = run.normalize(t)
        run.note_stuck(value)
        logger.info("normalized", steps=run.steps, top_level=len(run.trace.top_level()), notes=len(run.trace.notes))
        return value, run.trace

    # --- gradients ---------------------------------------------------------------

    def _function_parts(self, f: Term, n: int) -> Tuple[str, Term, Ty]:
        if isinstance(f, Lam):
            dom = f.ty or real_power(n)
            if not dom.is_first_order or dom.leaf_count != n:
                raise DimensionMismatch(f"a point of {n} reals does not fit the domain {dom}")
            return f.name, f.body, dom
        name = NameSupply(all_names(f) | set(self.env)).fresh("x")
        return name, App(f, Var(name)), real_power(n)

    def gradient_term(self, f: Term, x: Sequence[float], p: int) -> Tuple[Term, Ty]:
        """(pb f (pbof e_p)) x, and the domain shape of f"""
        point = np.asarray(x, dtype=float).ravel()
        name, body, dom = self._function_parts(f, len(point))
        cod = self.checker.infer({**self.env, name: dom}, body)
        if not cod.is_first_order:
            raise HigherOrderResult(f"f returns {cod}, which has no Jacobian rows")
        form = basis_dual(p, cod.leaf_count, cod)
        return App(Pullback(name, body, form, dom), encode_vector(point, dom)), dom

    def grad_trace(self, f: Term, x: Sequence[float], p: int) -> Tuple[np.ndarray, ReductionTrace]:
        term, dom = self.gradient_term(f, x, p)
        value, trace = self.normalize(term)
        match value:
            case DualVec(values):
                return np.asarray(values, dtype=float), trace
            case Zero():
                return np.zeros(dom.leaf_count), trace
        raise HigherOrderResult(f"normal form `{value}` is not a dual vector", details={"value": str(value)})

    def grad(self, f: Term, x: Sequence[float], p: int) -> np.ndarray:
        """Row p of the Jacobian of f at x"""
        return self.grad_trace(f, x, p)[0]

    def output_size(self, f: Term, n: int) -> int:
        name, body, dom = self._function_parts(f, n)
        cod = self.checker.infer({**self.env, name: dom}, body)
        if not cod.is_first_order:
            raise HigherOrderResult(f"f returns {cod}, which has no Jacobian rows")
        return cod.leaf_count

    def jacobian(self, f: Term, x: Sequence[float]) -> np.ndarray:
        n = len(np.asarray(x, dtype=float).ravel())
        return np.vstack([self.grad(f, x, p) for p in range(1, self.output_size(f, n) + 1)])


def decompose(t: Term, env: Optional[TypingEnv] = None) -> Optional[Decomposition]:
    return PullbackEngine(env=env).decompose(t)


def step(t: Term, env: Optional[TypingEnv] = None) -> Term:
    return PullbackEngine(env=env).step(t)


def normalize(
    t: Term, fuel: Optional[int] = None, env: Optional[TypingEnv] = None
) -> Tuple[Term, ReductionTrace]:
    return PullbackEngine(env=env, fuel=fuel).normalize(t)


def grad(f: Term, x: Sequence[float], p: int, env: Optional[TypingEnv] = None) -> np.ndarray:
    return PullbackEngine(env=env).grad(f, x, p)


def jacobian(f: Term, x: Sequence[float], env: Optional[TypingEnv] = None) -> np.ndarray:
    return PullbackEngine(env=env).jacobian(f, x)


def function_of(t: Term) -> Tuple[Term, Optional[List[float]]]:
    """The function of an applied pullback `(pb (\\x. e) w) p` and its point, or t itself"""
    match t:
        case App(Pullback(name, body, _, ty), point) if is_literal_tree(point):
            return Lam(name, body, ty), decode_vector(point).tolist()
    return t, None
