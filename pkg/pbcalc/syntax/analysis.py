"""
Variable analysis, substitution, sum normalization and vector encodings
"""

from __future__ import annotations

from typing import Dict, FrozenSet, Iterable, List, Optional, Sequence, Tuple

import numpy as np

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
    project,
)
from pbcalc.syntax.types import Arrow, Dual, Prod, Ty, leaf_paths, real_power
from pbcalc.utils.errors import TermShapeError


def free_vars(t: Term) -> FrozenSet[str]:
    return t.free_vars


# --- linearity -------------------------------------------------------------


def is_linear(name: str, t: Term) -> bool:
    """Whether `name` occurs only in linear positions of t.

    Zero is linear in every variable and a sum is linear when each summand is.
    """
    match t:
        case Var(n):
            return n == name
        case Zero():
            return True
        case Sum(terms):
            return all(is_linear(name, s) for s in terms)
        case Lam(n, body):
            return n != name and is_linear(name, body)
        case App(fn, arg):
            return name not in arg.free_vars and is_linear(name, fn)
        case Proj(_, body) | Jac(_, body):
            return is_linear(name, body)
        case Pair(left, right):
            return is_linear(name, left) and is_linear(name, right)
        case DualMap(n, body, arg):
            scoped = body.free_vars - {n}
            in_body = n != name and name not in arg.free_vars and is_linear(name, body)
            return in_body or (name not in scoped and is_linear(name, arg))
    return False


def linear_vars(t: Term) -> FrozenSet[str]:
    """Variables of a simple term occurring in linear positions"""
    if isinstance(t, (Sum, Zero)):
        raise TermShapeError(f"linear variables are defined on simple terms, got `{t}`")
    return frozenset(n for n in t.free_vars if is_linear(n, t))


# --- sums and linear-position constructors ----------------------------------


def summands(t: Term) -> Tuple[Term, ...]:
    if isinstance(t, Sum):
        return t.terms
    if isinstance(t, Zero):
        return ()
    return (t,)


def mk_sum(terms: Iterable[Term], ty: Optional[Ty] = None) -> Term:
    """Flatten, drop Zero summands, collapse the empty and singleton sums"""
    flat: List[Term] = []
    for t in terms:
        if isinstance(t, Sum):
            flat.extend(s for s in t.terms if not isinstance(s, Zero))
        elif isinstance(t, Zero):
            ty = ty or t.ty
        else:
            flat.append(t)
    if not flat:
        return Zero(ty)
    if len(flat) == 1:
        return flat[0]
    return Sum(tuple(flat))


def mk_app(fn: Term, arg: Term) -> Term:
    if isinstance(fn, Zero):
        return Zero(fn.ty.cod if isinstance(fn.ty, Arrow) else None)
    if isinstance(fn, Sum):
        return mk_sum(mk_app(s, arg) for s in fn.terms)
    return App(fn, arg)


def mk_proj(index: int, body: Term) -> Term:
    if isinstance(body, Zero):
        ty = body.ty
        return Zero((ty.left if index == 1 else ty.right) if isinstance(ty, Prod) else None)
    if isinstance(body, Sum):
        return mk_sum(mk_proj(index, s) for s in body.terms)
    return Proj(index, body)


def mk_jac(prim: str, arg: Term, cod: Optional[Ty] = None) -> Term:
    """jac prim arg, with a Zero tangent collapsed to 0 : tangent -> cod"""
    if isinstance(arg, Zero):
        return Zero(Arrow(arg.ty, cod) if arg.ty is not None and cod is not None else None)
    if isinstance(arg, Sum):
        return mk_sum(mk_jac(prim, s, cod) for s in arg.terms)
    return Jac(prim, arg)


def mk_dual_map(name: str, body: Term, arg: Term, ty: Optional[Ty] = None) -> Term:
    if isinstance(body, Zero) or isinstance(arg, Zero):
        return Zero(Dual(ty) if ty is not None else None)
    if isinstance(arg, Sum):
        return mk_sum(mk_dual_map(name, body, s, ty) for s in arg.terms)
    return DualMap(name, body, arg, ty)


def normalize_sum(t: Term) -> Term:
    """Flatten nested sums, drop Zero summands and collapse singleton sums everywhere in t"""
    match t:
        case Sum(terms):
            return mk_sum(normalize_sum(s) for s in terms)
        case Lam(name, body, ty):
            return Lam(name, normalize_sum(body), ty)
        case App(fn, arg):
            return App(normalize_sum(fn), normalize_sum(arg))
        case Proj(index, body):
            return Proj(index, normalize_sum(body))
        case Pair(left, right):
            return Pair(normalize_sum(left), normalize_sum(right))
        case PrimApp(prim, arg):
            return PrimApp(prim, normalize_sum(arg))
        case Jac(prim, arg):
            return Jac(prim, normalize_sum(arg))
        case DualMap(name, body, arg, ty):
            return DualMap(name, normalize_sum(body), normalize_sum(arg), ty)
        case Pullback(name, body, form, ty):
            return Pullback(name, normalize_sum(body), normalize_sum(form), ty)
    return t


# --- substitution ------------------------------------------------------------


def substitute(t: Term, p: Term, x: str, *, project_pairs: bool = False) -> Term:
    """Capture-avoiding t[p/x].

    When p is a sum (or Zero) and x is linear in t the result is the sum of the substituted
    copies; elsewhere the sum is substituted whole and the linear-position constructors
    distribute it locally. With project_pairs, projection chains over x are taken directly
    out of p when p is a pair.
    """
    if x not in t.free_vars:
        return t
    if isinstance(p, (Sum, Zero)) and not isinstance(t, (Sum, Zero)) and is_linear(x, t):
        return mk_sum(_subst(t, s, x, project_pairs) for s in summands(p))
    return _subst(t, p, x, project_pairs)


def instantiate(t: Term, value: Term, x: str) -> Term:
    """t[value/x] with projections of the value taken eagerly"""
    return substitute(t, value, x, project_pairs=True)


def rename(t: Term, old: str, new: str) -> Term:
    return _subst(t, Var(new), old, False) if old in t.free_vars else t


def _under_binder(name: str, body: Term, p: Term, x: str, project_pairs: bool) -> Tuple[str, Term]:
    if name == x:
        return name, body
    if name in p.free_vars and x in body.free_vars:
        supply = NameSupply(all_names(body) | all_names(p) | {x})
        fresh = supply.fresh(name)
        body = rename(body, name, fresh)
        name = fresh
    return name, _subst(body, p, x, project_pairs)


def _subst(t: Term, p: Term, x: str, project_pairs: bool) -> Term:
    if x not in t.free_vars:
        return t
    match t:
        case Var():
            return p
        case Proj(index, body):
            if project_pairs:
                path = atom_path(t, x)
                if path is not None:
                    return project(p, path)
            return mk_proj(index, _subst(body, p, x, project_pairs))
        case Lam(name, body, ty):
            name, body = _under_binder(name, body, p, x, project_pairs)
            return Lam(name, body, ty)
        case App(fn, arg):
            return mk_app(_subst(fn, p, x, project_pairs), _subst(arg, p, x, project_pairs))
        case Pair(left, right):
            return Pair(_subst(left, p, x, project_pairs), _subst(right, p, x, project_pairs))
        case PrimApp(prim, arg):
            return PrimApp(prim, _subst(arg, p, x, project_pairs))
        case Jac(prim, arg):
            return mk_jac(prim, _subst(arg, p, x, project_pairs))
        case DualMap(name, body, arg, ty):
            new_arg = _subst(arg, p, x, project_pairs)
            name, body = _under_binder(name, body, p, x, project_pairs)
            return mk_dual_map(name, body, new_arg, ty)
        case Pullback(name, body, form, ty):
            new_form = _subst(form, p, x, project_pairs)
            name, body = _under_binder(name, body, p, x, project_pairs)
            return Pullback(name, body, new_form, ty)
        case Sum(terms):
            return mk_sum(_subst(s, p, x, project_pairs) for s in terms)
    return t


# --- alpha renaming -----------------------------------------------------------


def alpha_rename(t: Term, reserved: Iterable[str] = ()) -> Term:
    """Rename binders so that every binder name is distinct from every other name in t and from `reserved`"""
    supply = NameSupply(set(reserved) | t.free_vars)
    return _uniquify(t, {}, supply)


def _bind(name: str, env: Dict[str, str], supply: NameSupply) -> Tuple[str, Dict[str, str]]:
    new = supply.fresh(name) if name in supply else name
    supply.reserve((new,))
    return new, {**env, name: new}


def _uniquify(t: Term, env: Dict[str, str], supply: NameSupply) -> Term:
    match t:
        case Var(name):
            return Var(env.get(name, name))
        case Lam(name, body, ty):
            new, inner = _bind(name, env, supply)
            return Lam(new, _uniquify(body, inner, supply), ty)
        case DualMap(name, body, arg, ty):
            new_arg = _uniquify(arg, env, supply)
            new, inner = _bind(name, env, supply)
            return DualMap(new, _uniquify(body, inner, supply), new_arg, ty)
        case Pullback(name, body, form, ty):
            new_form = _uniquify(form, env, supply)
            new, inner = _bind(name, env, supply)
            return Pullback(new, _uniquify(body, inner, supply), new_form, ty)
        case App(fn, arg):
            return App(_uniquify(fn, env, supply), _uniquify(arg, env, supply))
        case Proj(index, body):
            return Proj(index, _uniquify(body, env, supply))
        case Pair(left, right):
            return Pair(_uniquify(left, env, supply), _uniquify(right, env, supply))
        case PrimApp(prim, arg):
            return PrimApp(prim, _uniquify(arg, env, supply))
        case Jac(prim, arg):
            return Jac(prim, _uniquify(arg, env, supply))
        case Sum(terms):
            return Sum(tuple(_uniquify(s, env, supply) for s in terms))
    return t


def alpha_equivalent(a: Term, b: Term) -> bool:
    return _alpha_eq(a, b, {}, {})


def _alpha_eq(a: Term, b: Term, left: Dict[str, int], right: Dict[str, int]) -> bool:
    if type(a) is not type(b):
        return False
    match a:
        case Var(name):
            la, rb = left.get(name), right.get(b.name)
            return la == rb and (la is not None or name == b.name)
        case Lam(name, body, ty) | DualMap(name, body, _, ty) | Pullback(name, body, _, ty):
            if ty != b.ty:
                return False
            if isinstance(a, (DualMap, Pullback)):
                other = a.arg if isinstance(a, DualMap) else a.form
                other_b = b.arg if isinstance(b, DualMap) else b.form
                if not _alpha_eq(other, other_b, left, right):
                    return False
            depth = len(left)
            return _alpha_eq(body, b.body, {**left, name: depth}, {**right, b.name: depth})
        case App() | Pair() | Sum():
            kids_a, kids_b = _kids(a), _kids(b)
            return len(kids_a) == len(kids_b) and all(_alpha_eq(x, y, left, right) for x, y in zip(kids_a, kids_b))
        case Proj(index, body):
            return index == b.index and _alpha_eq(body, b.body, left, right)
        case PrimApp(prim, arg) | Jac(prim, arg):
            return prim == b.prim and _alpha_eq(arg, b.arg, left, right)
    return a == b


def _kids(t: Term) -> Tuple[Term, ...]:
    match t:
        case App(fn, arg):
            return (fn, arg)
        case Pair(left, right):
            return (left, right)
        case Sum(terms):
            return terms
    return ()


# --- vectors ------------------------------------------------------------------


def encode_vector(values: Sequence[float] | np.ndarray, shape: Optional[Ty] = None) -> Term:
    """Numeral tuple <r1, ..., rn>, left-nested unless a first-order shape is given"""
    flat = [float(v) for v in np.asarray(values, dtype=float).ravel()]
    if not flat:
        raise TermShapeError("cannot encode an empty vector")
    shape = shape or real_power(len(flat))
    if not shape.is_first_order or shape.leaf_count != len(flat):
        raise TermShapeError(f"{len(flat)} values do not fill the shape {shape}")
    leaves = iter(flat)
    return _fill(shape, leaves)


def _fill(shape: Ty, leaves) -> Term:
    if isinstance(shape, Prod):
        left = _fill(shape.left, leaves)
        return Pair(left, _fill(shape.right, leaves))
    return RealLit(next(leaves))


def decode_vector(t: Term) -> np.ndarray:
    """Flatten a pair tree of real literals (or an annotated first-order Zero) left to right"""
    out: List[float] = []
    _flatten(t, out)
    return np.asarray(out, dtype=float)


def _flatten(t: Term, out: List[float]) -> None:
    match t:
        case RealLit(value):
            out.append(value)
        case Pair(left, right):
            _flatten(left, out)
            _flatten(right, out)
        case Zero(ty) if ty is not None and ty.is_first_order:
            out.extend([0.0] * ty.leaf_count)
        case _:
            raise TermShapeError(f"`{t}` is not a numeral tuple")


def shape_of(t: Term) -> Optional[Ty]:
    """The first-order type of a pair tree of literals, or None"""
    match t:
        case RealLit():
            return real_power(1)
        case Pair(left, right):
            ls, rs = shape_of(left), shape_of(right)
            return Prod(ls, rs) if ls is not None and rs is not None else None
        case Zero(ty) if ty is not None and ty.is_first_order:
            return ty
    return None


def basis_dual(p: int, n: int, shape: Optional[Ty] = None, name: str = "x") -> Term:
    """The constant 1-form \\x. (e_p)*"""
    if not 1 <= p <= n:
        raise TermShapeError(f"basis index {p} out of range 1..{n}")
    if shape is not None and (not shape.is_first_order or shape.leaf_count != n):
        raise TermShapeError(f"shape {shape} does not have {n} leaves")
    values = tuple(1.0 if i == p - 1 else 0.0 for i in range(n))
    return Lam(name, DualVec(values, shape))


def leaf_atoms(base: Term, shape: Ty) -> List[Term]:
    """Projection chains of `base` reaching each leaf of a first-order shape"""
    atoms = []
    for path in leaf_paths(shape):
        atom = base
        for index in path:
            atom = Proj(index, atom)
        atoms.append(atom)
    return atoms
