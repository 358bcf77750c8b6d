"""
Term variants of the pullback calculus

Terms are immutable. Binder-carrying variants (Lam, DualMap, Pullback) hold an optional
annotation of the binder type; Zero and DualVec hold an optional annotation of their own
type (for DualVec, the first-order shape the covector acts on).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import FrozenSet, Optional, Sequence, Tuple

from pbcalc.syntax.types import Ty


class Term:
    """Base class of term variants"""

    def __str__(self) -> str:
        from pbcalc.syntax.printer import format_term

        return format_term(self)

    @cached_property
    def free_vars(self) -> FrozenSet[str]:
        match self:
            case Var(name):
                return frozenset((name,))
            case Lam(name, body):
                return body.free_vars - {name}
            case DualMap(name, body, arg) | Pullback(name, body, arg):
                return (body.free_vars - {name}) | arg.free_vars
            case App(fn, arg):
                return fn.free_vars | arg.free_vars
            case Pair(left, right):
                return left.free_vars | right.free_vars
            case Proj(_, body) | PrimApp(_, body) | Jac(_, body):
                return body.free_vars
            case Sum(terms):
                return frozenset().union(*(t.free_vars for t in terms))
        return frozenset()

    @cached_property
    def size(self) -> int:
        return 1 + sum(child.size for child in children(self))


@dataclass(frozen=True)
class Var(Term):
    name: str


@dataclass(frozen=True)
class Lam(Term):
    name: str
    body: Term
    ty: Optional[Ty] = None


@dataclass(frozen=True)
class App(Term):
    fn: Term
    arg: Term


@dataclass(frozen=True)
class Proj(Term):
    index: int
    body: Term


@dataclass(frozen=True)
class Pair(Term):
    left: Term
    right: Term


@dataclass(frozen=True)
class RealLit(Term):
    value: float


@dataclass(frozen=True)
class PrimApp(Term):
    prim: str
    arg: Term


@dataclass(frozen=True)
class Jac(Term):
    prim: str
    arg: Term


@dataclass(frozen=True)
class DualMap(Term):
    """dual<x. body> arg: the adjoint of the linear map x |-> body applied to the covector arg"""

    name: str
    body: Term
    arg: Term
    ty: Optional[Ty] = None


@dataclass(frozen=True)
class Pullback(Term):
    """pb (\\x. body) form: the pullback of the 1-form along x |-> body"""

    name: str
    body: Term
    form: Term
    ty: Optional[Ty] = None


@dataclass(frozen=True)
class DualVec(Term):
    values: Tuple[float, ...]
    ty: Optional[Ty] = None


@dataclass(frozen=True)
class Zero(Term):
    ty: Optional[Ty] = None


@dataclass(frozen=True)
class Sum(Term):
    terms: Tuple[Term, ...]


def children(t: Term) -> Tuple[Term, ...]:
    match t:
        case Lam(_, body):
            return (body,)
        case App(fn, arg):
            return (fn, arg)
        case Proj(_, body) | PrimApp(_, body) | Jac(_, body):
            return (body,)
        case Pair(left, right):
            return (left, right)
        case DualMap(_, body, arg):
            return (body, arg)
        case Pullback(_, body, form):
            return (body, form)
        case Sum(terms):
            return terms
    return ()


def with_children(t: Term, kids: Sequence[Term]) -> Term:
    """t with its children, in the order `children` lists them, replaced by kids"""
    match t:
        case Lam(name, _, ty):
            return Lam(name, kids[0], ty)
        case App():
            return App(kids[0], kids[1])
        case Proj(index, _):
            return Proj(index, kids[0])
        case PrimApp(prim, _):
            return PrimApp(prim, kids[0])
        case Jac(prim, _):
            return Jac(prim, kids[0])
        case Pair():
            return Pair(kids[0], kids[1])
        case DualMap(name, _, _, ty):
            return DualMap(name, kids[0], kids[1], ty)
        case Pullback(name, _, _, ty):
            return Pullback(name, kids[0], kids[1], ty)
        case Sum():
            return Sum(tuple(kids))
    return t


def binder_names(t: Term) -> FrozenSet[str]:
    """Every name bound anywhere inside t"""
    names = set()
    stack = [t]
    while stack:
        node = stack.pop()
        if isinstance(node, (Lam, DualMap, Pullback)):
            names.add(node.name)
        stack.extend(children(node))
    return frozenset(names)


def all_names(t: Term) -> FrozenSet[str]:
    return binder_names(t) | t.free_vars


def is_atom(t: Term) -> bool:
    """Variables and projection chains over a variable"""
    while isinstance(t, Proj):
        t = t.body
    return isinstance(t, Var)


def atom_root(t: Term) -> Optional[str]:
    while isinstance(t, Proj):
        t = t.body
    return t.name if isinstance(t, Var) else None


def atom_path(t: Term, name: str) -> Optional[Tuple[int, ...]]:
    """The projection path of an atom rooted at `name`, or None"""
    path = []
    while isinstance(t, Proj):
        path.append(t.index)
        t = t.body
    if isinstance(t, Var) and t.name == name:
        return tuple(reversed(path))
    return None


def path_term(base: Term, path: Tuple[int, ...]) -> Term:
    for index in path:
        base = Proj(index, base)
    return base


def project(value: Term, path: Tuple[int, ...]) -> Term:
    """Apply the projections of `path` to a value, taking pair components directly"""
    for index in path:
        if isinstance(value, Pair):
            value = value.left if index == 1 else value.right
        else:
            value = Proj(index, value)
    return value


def is_literal_tree(t: Term) -> bool:
    match t:
        case RealLit():
            return True
        case Pair(left, right):
            return is_literal_tree(left) and is_literal_tree(right)
        case Zero(ty):
            return ty is not None and ty.is_first_order
    return False


def let_term(name: str, bound: Term, body: Term, ty: Optional[Ty] = None) -> Term:
    """let name = bound in body, i.e. (\\name. body) bound"""
    return App(Lam(name, body, ty), bound)


def is_let(t: Term) -> bool:
    return isinstance(t, App) and isinstance(t.fn, Lam)
