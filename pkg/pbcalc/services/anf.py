"""
Administrative reduction: decomposing terms into let series of elementary terms

Atoms (variables and projection chains over a variable) may stand as operands of pairs, sums,
projections, primitive applications, Jacobians and the argument positions of dual maps and
pullbacks. Both operands of an application are always bound to their own variables, and so are
literals.
"""

from dataclasses import dataclass
from itertools import count
from typing import Dict, Iterable, List, Optional, Set, Tuple

from pbcalc.core.config import settings
from pbcalc.core.logging import get_logger
from pbcalc.syntax.analysis import rename, substitute
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
    children,
    is_atom,
    with_children,
)
from pbcalc.utils.errors import ANFFuelExhausted, ANormalForm, TermShapeError

logger = get_logger(__name__)

Binding = Tuple[str, Term]

# kinds of position a subterm can occupy
_OPERAND = 0  # an atom may stay in place
_BOUND = 1  # right-hand side of a let: an elementary term may stay in place
_SERIES = 2  # only a let series is settled


@dataclass(frozen=True)
class LetSeries:
    """let z1 = E1; ...; zn = En in zn"""

    bindings: Tuple[Binding, ...]

    @property
    def result(self) -> str:
        return self.bindings[-1][0]

    def to_term(self) -> Term:
        body: Term = Var(self.result)
        for name, bound in reversed(self.bindings):
            body = App(Lam(name, body), bound)
        return body

    @classmethod
    def from_term(cls, t: Term) -> "LetSeries":
        bindings: List[Binding] = []
        while isinstance(t, App) and isinstance(t.fn, Lam):
            bindings.append((t.fn.name, t.arg))
            t = t.fn.body
        if not bindings or t != Var(bindings[-1][0]):
            raise TermShapeError(f"`{t}` does not end a let series")
        return cls(tuple(bindings))

    def renumbered(self, stem: str = "z") -> "LetSeries":
        """Rename the bound variables to z1..zn in binding order.

        Lets nested inside the bound term of zi (under a lambda, say) become zi', zi'', ...
        and take no numbers of their own.
        """
        old = [name for name, _ in self.bindings]
        nested = set().union(*(_let_binders(e) for _, e in self.bindings))
        names = set().union(*(all_names(e) for _, e in self.bindings))
        free = set().union(*(e.free_vars for _, e in self.bindings))
        taken = (names - nested - set(old)) | (free - set(old))
        supply = NameSupply(taken)
        fresh = [supply.fresh(stem) for _ in old]
        avoid = names | set(old) | set(fresh)
        # rename through temporaries so that old and new names may overlap
        temps_supply = NameSupply(avoid)
        temps = [temps_supply.fresh("tmp") for _ in old]
        bindings: List[Binding] = []
        for index, (_, bound) in enumerate(self.bindings):
            bound = _prime_lets(bound, fresh[index], avoid | set(temps))
            for source, temp in zip(old[:index], temps):
                bound = rename(bound, source, temp)
            for temp, target in zip(temps[:index], fresh):
                bound = rename(bound, temp, target)
            bindings.append((fresh[index], bound))
        return LetSeries(tuple(bindings))

    def __len__(self) -> int:
        return len(self.bindings)

    def __str__(self) -> str:
        lines = [f"  {name} = {bound};" for name, bound in self.bindings]
        lines[-1] = lines[-1].rstrip(";")
        return "let\n" + "\n".join(lines) + f"\nin {self.result}"


class _Shapes:
    """Memoized elementary / let-series checks for the lifetime of one normalization"""

    def __init__(self):
        self._elementary: Dict[int, bool] = {}
        self._series: Dict[int, bool] = {}
        self._alive: List[Term] = []

    def elementary(self, t: Term) -> bool:
        key = id(t)
        if key not in self._elementary:
            self._alive.append(t)
            self._elementary[key] = self._compute_elementary(t)
        return self._elementary[key]

    def series(self, t: Term) -> bool:
        key = id(t)
        if key not in self._series:
            self._alive.append(t)
            self._series[key] = self._compute_series(t)
        return self._series[key]

    def _compute_elementary(self, t: Term) -> bool:
        if is_atom(t):
            return True
        match t:
            case Zero() | RealLit() | DualVec():
                return True
            case Sum(terms):
                return len(terms) == 2 and all(is_atom(s) for s in terms)
            case Lam(_, body):
                return self.series(body)
            case App(fn, arg) | Pair(fn, arg):
                return is_atom(fn) and is_atom(arg)
            case PrimApp(_, arg) | Jac(_, arg):
                return is_atom(arg)
            case DualMap(_, body, arg) | Pullback(_, body, arg):
                return is_atom(arg) and self.series(body)
        return False

    def _compute_series(self, t: Term) -> bool:
        if not (isinstance(t, App) and isinstance(t.fn, Lam)):
            return False
        lam = t.fn
        if not self.elementary(t.arg):
            return False
        return lam.body == Var(lam.name) or self.series(lam.body)


def is_elementary(t: Term) -> bool:
    return _Shapes().elementary(t)


def is_let_series(t: Term) -> bool:
    return _Shapes().series(t)


class ANormalizer:
    """One administrative reduction at a time, left to right, components before the node"""

    def __init__(self, supply: NameSupply, shapes: Optional[_Shapes] = None):
        self.supply = supply
        self.shapes = shapes or _Shapes()

    def step(self, t: Term) -> Term:
        result = self._step(t, _SERIES)
        if result is None:
            raise ANormalForm("no A-redex")
        return result

    def _settled(self, t: Term, position: int) -> bool:
        if self.shapes.series(t):
            return True
        if position == _OPERAND:
            return is_atom(t)
        if position == _BOUND:
            return self.shapes.elementary(t)
        return False

    def _step(self, t: Term, position: int) -> Optional[Term]:
        if self._settled(t, position):
            return None
        for index, (child, child_position) in enumerate(self._components(t)):
            reduced = self._step(child, child_position)
            if reduced is not None:
                return self._replace(t, index, reduced)
        return self._contract(t)

    def _components(self, t: Term) -> List[Tuple[Term, int]]:
        """Subterms in A-context order, each with the kind of position it occupies"""
        match t:
            case App(Lam(_, body), bound):
                return [(bound, _BOUND), (body, _SERIES)]
            case App(fn, arg):
                if is_atom(fn) and is_atom(arg):
                    return []
                return [(fn, _SERIES), (arg, _SERIES)]
            case Sum(terms):
                return [(s, _OPERAND) for s in terms]
            case Pair(left, right):
                return [(left, _OPERAND), (right, _OPERAND)]
            case Proj(_, body) | PrimApp(_, body) | Jac(_, body):
                return [(body, _OPERAND)]
            case Lam(_, body):
                return [(body, _SERIES)]
            case DualMap(_, body, arg) | Pullback(_, body, arg):
                return [(arg, _OPERAND), (body, _SERIES)]
        return []

    def _replace(self, t: Term, index: int, new: Term) -> Term:
        match t:
            case App(Lam(name, body, ty), bound):
                return App(Lam(name, body, ty), new) if index == 0 else App(Lam(name, new, ty), bound)
            case App(fn, arg):
                return App(new, arg) if index == 0 else App(fn, new)
            case Sum(terms):
                return Sum(terms[:index] + (new,) + terms[index + 1 :])
            case Pair(left, right):
                return Pair(new, right) if index == 0 else Pair(left, new)
            case Proj(i, _):
                return Proj(i, new)
            case PrimApp(prim, _):
                return PrimApp(prim, new)
            case Jac(prim, _):
                return Jac(prim, new)
            case Lam(name, _, ty):
                return Lam(name, new, ty)
            case DualMap(name, body, arg, ty):
                return DualMap(name, body, new, ty) if index == 0 else DualMap(name, new, arg, ty)
            case Pullback(name, body, form, ty):
                return Pullback(name, body, new, ty) if index == 0 else Pullback(name, new, form, ty)
        raise TermShapeError(f"no component {index} in `{t}`")

    def _operand(self, t: Term) -> Tuple[List[Binding], Term]:
        if is_atom(t):
            return [], t
        series = LetSeries.from_term(t)
        return list(series.bindings), Var(series.result)

    def _bind(self, bindings: List[Binding], elementary: Term) -> Term:
        return LetSeries(tuple(bindings) + ((self.supply.fresh("z"), elementary),)).to_term()

    def _contract(self, t: Term) -> Term:
        """Turn a node whose components are normal into one let series"""
        match t:
            case App(Lam(name, body, _), bound):
                if self.shapes.elementary(bound):
                    head: List[Binding] = [(name, bound)]
                else:
                    series = LetSeries.from_term(bound)
                    head = list(series.bindings[:-1]) + [(name, series.bindings[-1][1])]
                return LetSeries(tuple(head) + LetSeries.from_term(body).bindings).to_term()
            case App(fn, arg) if not (is_atom(fn) and is_atom(arg)):
                fb, fv = self._operand(fn)
                ab, av = self._operand(arg)
                return self._bind(fb + ab, App(fv, av))
            case Sum(terms):
                bindings: List[Binding] = []
                atoms: List[Term] = []
                for summand in terms:
                    b, a = self._operand(summand)
                    bindings += b
                    atoms.append(a)
                acc = atoms[0]
                for atom in atoms[1:-1]:
                    name = self.supply.fresh("z")
                    bindings.append((name, Sum((acc, atom))))
                    acc = Var(name)
                return self._bind(bindings, Sum((acc, atoms[-1])))
            case Pair(left, right):
                lb, la = self._operand(left)
                rb, ra = self._operand(right)
                return self._bind(lb + rb, Pair(la, ra))
            case Proj(index, body):
                b, a = self._operand(body)
                return self._bind(b, Proj(index, a))
            case PrimApp(prim, arg):
                b, a = self._operand(arg)
                return self._bind(b, PrimApp(prim, a))
            case Jac(prim, arg):
                b, a = self._operand(arg)
                return self._bind(b, Jac(prim, a))
            case DualMap(name, body, arg, ty):
                b, a = self._operand(arg)
                return self._bind(b, DualMap(name, body, a, ty))
            case Pullback(name, body, form, ty):
                b, a = self._operand(form)
                return self._bind(b, Pullback(name, body, a, ty))
        # variables, atoms, literals, Zero, dual vectors, lambdas and applications of atoms
        return self._bind([], t)


def a_step(t: Term, supply: Optional[NameSupply] = None) -> Term:
    """One administrative reduction; raises ANormalForm when t is already a let series"""
    return ANormalizer(supply or NameSupply(all_names(t))).step(t)


def a_normalize(t: Term, fuel: Optional[int] = None, supply: Optional[NameSupply] = None) -> LetSeries:
    """Iterate a_step to the let series of t"""
    fuel = settings.ANF_FUEL if fuel is None else fuel
    normalizer = ANormalizer(supply or NameSupply(all_names(t)))
    steps = 0
    while True:
        try:
            t = normalizer.step(t)
        except ANormalForm:
            break
        steps += 1
        if steps > fuel:
            raise ANFFuelExhausted(f"A-normalization did not finish within {fuel} steps")
    series = LetSeries.from_term(t)
    logger.debug("a-normalized", steps=steps, bindings=len(series))
    return series


def a_normal_term(t: Term, supply: Optional[NameSupply] = None) -> Term:
    return a_normalize(t, supply=supply).to_term()


def binding_names(series: LetSeries) -> Iterable[str]:
    return (name for name, _ in series.bindings)


def _let_binders(t: Term) -> Set[str]:
    found: Set[str] = set()
    stack = [t]
    while stack:
        node = stack.pop()
        if isinstance(node, App) and isinstance(node.fn, Lam):
            found.add(node.fn.name)
        stack.extend(children(node))
    return found


def _prime_lets(t: Term, base: str, avoid: Set[str]) -> Term:
    """Rename the lets nested in t to base', base'', ... in order of appearance"""
    primes = count(1)

    def fresh() -> str:
        while True:
            name = base + "'" * next(primes)
            if name not in avoid:
                return name

    def walk(t: Term) -> Term:
        if isinstance(t, App) and isinstance(t.fn, Lam):
            new = fresh()
            bound = walk(t.arg)
            return App(Lam(new, rename(walk(t.fn.body), t.fn.name, new), t.fn.ty), bound)
        return with_children(t, [walk(child) for child in children(t)])

    return walk(t)


# --- function inlining -----------------------------------------------------------


def _duplicable(t: Term) -> bool:
    match t:
        case Lam() | RealLit() | DualVec() | Zero():
            return True
        case Pair(left, right):
            return _duplicable(left) and _duplicable(right)
    return is_atom(t)


def is_function_value(t: Term) -> bool:
    """A lambda, or a tuple of lambdas, atoms and literals with a lambda among its leaves"""
    match t:
        case Lam():
            return True
        case Pair(left, right):
            return _duplicable(t) and (is_function_value(left) or is_function_value(right))
    return False


def inline_functions(t: Term, fuel: Optional[int] = None) -> Term:
    """Beta-reduce every application of an abstraction to a function value, innermost first.

    Afterwards no lambda parameter is bound to a function that is known in the term, so functions
    reach the pullback rules only as let-bound values or free variables. Terminates on well-typed
    terms; the budget bounds untyped input.
    """
    budget = settings.ANF_FUEL if fuel is None else fuel
    spent = 0

    def walk(t: Term) -> Term:
        nonlocal spent
        t = with_children(t, [walk(child) for child in children(t)])
        if isinstance(t, App) and isinstance(t.fn, Lam) and is_function_value(t.arg):
            spent += 1
            if spent > budget:
                raise ANFFuelExhausted(f"function inlining did not finish within {budget} steps")
            return walk(substitute(t.fn.body, t.arg, t.fn.name, project_pairs=True))
        return t

    result = walk(t)
    if spent:
        logger.debug("inlined functions", steps=spent)
    return result
