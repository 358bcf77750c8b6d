"""
Seeded random programs for the property suites

- closed first-order functions \\x. let z1 = E1 in ... in out, with magnitudes kept bounded so that
  finite differences stay well conditioned
- terms linear in a designated variable
- elementary terms over a designated pullback binder
"""

from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from pbcalc.core.logging import get_logger
from pbcalc.services.primitives import PrimitiveRegistry, default_registry
from pbcalc.syntax.analysis import encode_vector, leaf_atoms
from pbcalc.syntax.terms import (
    App,
    DualMap,
    DualVec,
    Jac,
    Lam,
    Pair,
    PrimApp,
    Proj,
    RealLit,
    Sum,
    Term,
    Var,
    Zero,
    let_term,
)
from pbcalc.syntax.types import REAL, Prod, Ty, leaf_paths, real_power

logger = get_logger(__name__)

MAX_DEPTH = 8
MAX_DIM = 4
MAX_BOUND = 8.0

Bounds = Tuple[float, ...]

# upper bounds of |f(x)| per output leaf, from bounds of |x|
_BOUNDS: Dict[str, Callable[[Bounds], Bounds]] = {
    "add": lambda b: (b[0] + b[1],),
    "mult": lambda b: (b[0] * b[1],),
    "pow2": lambda b: (b[0] ** 2,),
    "neg": lambda b: (b[0],),
    "exp": lambda b: (float(np.exp(b[0])),),
    "sin": lambda b: (1.0,),
    "cos": lambda b: (1.0,),
    "g": lambda b: (b[0] + 1.0, 2.0 * b[0] + b[1] ** 2),
}


def _tuple(parts: Sequence[Term]) -> Term:
    """Left-nested tuple, matching real_power"""
    acc = parts[0]
    for part in parts[1:]:
        acc = Pair(acc, part)
    return acc


@dataclass(frozen=True)
class _Entry:
    term: Term
    ty: Ty
    bounds: Bounds


@dataclass(frozen=True)
class RandomProgram:
    function: Lam
    n_in: int
    n_out: int
    lets: int


class ProgramGenerator:
    """Random closed first-order programs over the registry's primitives"""

    def __init__(self, seed: int = 0, registry: Optional[PrimitiveRegistry] = None):
        self.rng = np.random.default_rng(seed)
        self.registry = registry or default_registry()
        self.prims = [name for name in self.registry.names() if name in _BOUNDS]

    # --- first-order programs -------------------------------------------------

    def program(self, max_depth: int = MAX_DEPTH, max_dim: int = MAX_DIM) -> RandomProgram:
        n_in = int(self.rng.integers(1, max_dim + 1))
        lets = int(self.rng.integers(1, max_depth + 1))
        dom = real_power(n_in)
        pool = [_Entry(Var("x"), dom, (1.0,) * n_in)]
        bindings: List[Tuple[str, Term]] = []
        for index in range(1, lets + 1):
            term, entry = self._binding(pool, max_dim)
            name = f"z{index}"
            bindings.append((name, term))
            pool.append(_Entry(Var(name), entry.ty, entry.bounds))
        out = self._output(pool, max_dim)
        body = out.term
        for name, bound in reversed(bindings):
            body = let_term(name, bound, body)
        logger.debug("generated program", n_in=n_in, lets=lets, n_out=out.ty.leaf_count)
        return RandomProgram(Lam("x", body, dom), n_in, out.ty.leaf_count, lets)

    def programs(self, count: int, **kwargs) -> List[RandomProgram]:
        return [self.program(**kwargs) for _ in range(count)]

    def point(self, n: int) -> np.ndarray:
        return self.rng.uniform(-1.0, 1.0, size=n)

    def _leaves(self, pool: List[_Entry]) -> List[Tuple[Term, float]]:
        leaves = []
        for entry in pool:
            leaves.extend(zip(leaf_atoms(entry.term, entry.ty), entry.bounds))
        return leaves

    def _binding(self, pool: List[_Entry], max_dim: int) -> Tuple[Term, _Entry]:
        choice = self.rng.choice(["prim", "prim", "pair", "proj", "sum", "literal"])
        if choice == "pair":
            a, b = self._pick(pool), self._pick(pool)
            if a.ty.leaf_count + b.ty.leaf_count <= max_dim:
                return Pair(a.term, b.term), _Entry(Pair(a.term, b.term), Prod(a.ty, b.ty), a.bounds + b.bounds)
        if choice == "proj":
            products = [e for e in pool if isinstance(e.ty, Prod)]
            if products:
                e = products[int(self.rng.integers(len(products)))]
                index = int(self.rng.integers(1, 3))
                width = e.ty.left.leaf_count
                part = e.ty.left if index == 1 else e.ty.right
                bounds = e.bounds[:width] if index == 1 else e.bounds[width:]
                return Proj(index, e.term), _Entry(Proj(index, e.term), part, bounds)
        reals = [e for e in pool if e.ty == REAL]
        if choice == "sum" and reals:
            a, b = self._pick(reals), self._pick(reals)
            if a.bounds[0] + b.bounds[0] <= MAX_BOUND:
                term = Sum((a.term, b.term))
                return term, _Entry(term, REAL, (a.bounds[0] + b.bounds[0],))
        if choice == "literal":
            value = round(float(self.rng.uniform(-2.0, 2.0)), 3)
            return RealLit(value), _Entry(RealLit(value), REAL, (abs(value),))
        return self._prim_binding(pool)

    def _prim_binding(self, pool: List[_Entry]) -> Tuple[Term, _Entry]:
        leaves = self._leaves(pool)
        for _ in range(8):
            name = self.prims[int(self.rng.integers(len(self.prims)))]
            p = self.registry.get(name)
            picks = [leaves[int(i)] for i in self.rng.integers(len(leaves), size=p.n_in)]
            bounds = _BOUNDS[name](tuple(b for _, b in picks))
            if max(bounds) <= MAX_BOUND:
                term = PrimApp(name, _tuple([atom for atom, _ in picks]))
                return term, _Entry(term, real_power(p.n_out), bounds)
        atom, _ = leaves[int(self.rng.integers(len(leaves)))]
        term = PrimApp("sin", atom)
        return term, _Entry(term, REAL, (1.0,))

    def _pick(self, pool: List[_Entry]) -> _Entry:
        # favour recent bindings so that programs chain
        weights = np.arange(1, len(pool) + 1, dtype=float)
        return pool[int(self.rng.choice(len(pool), p=weights / weights.sum()))]

    def _output(self, pool: List[_Entry], max_dim: int) -> _Entry:
        last = pool[-1]
        if last.ty.leaf_count > max_dim:
            last = pool[0]
        other = self._pick(pool)
        if self.rng.random() < 0.3 and last.ty.leaf_count + other.ty.leaf_count <= max_dim:
            return _Entry(Pair(last.term, other.term), Prod(last.ty, other.ty), last.bounds + other.bounds)
        return last

    # --- linear terms ---------------------------------------------------------

    def linear_term(self, var: str = "v", var_ty: Optional[Ty] = None, depth: int = 3) -> Tuple[Term, Ty, Ty]:
        """A closed-but-for-`var` simple term with `var` in linear position; returns (term, type of var, type)"""
        var_ty = var_ty or real_power(int(self.rng.integers(1, MAX_DIM + 1)))
        out_ty = real_power(int(self.rng.integers(1, 3)))
        scalars: List[Term] = [RealLit(0.5), RealLit(-1.25)]
        body = self._linear(var, var_ty, out_ty, depth, scalars)
        if self.rng.random() < 0.4:
            # bind a nonlinear scalar that later Jacobian base points may use
            name = "s"
            bound = PrimApp("sin", RealLit(round(float(self.rng.uniform(-1.0, 1.0)), 3)))
            body = let_term(name, bound, self._linear(var, var_ty, out_ty, depth, scalars + [Var(name)]))
        return body, var_ty, out_ty

    def _linear(self, var: str, var_ty: Ty, target: Ty, depth: int, scalars: List[Term]) -> Term:
        # sums stay at the real leaves: the engine folds sums of literals, not of tuples
        if isinstance(target, Prod):
            left = self._linear(var, var_ty, target.left, depth - 1, scalars)
            return Pair(left, self._linear(var, var_ty, target.right, depth - 1, scalars))
        roll = self.rng.random() if depth > 0 else 0.0
        if roll < 0.4:
            paths = list(leaf_paths(var_ty))
            path = paths[int(self.rng.integers(len(paths)))]
            atom: Term = Var(var)
            for index in path:
                atom = Proj(index, atom)
            return atom
        if roll < 0.6:
            return Sum(
                (
                    self._linear(var, var_ty, target, depth - 1, scalars),
                    self._linear(var, var_ty, target, depth - 1, scalars),
                )
            )
        if roll < 0.7:
            inner = self._linear(var, var_ty, target, depth - 1, scalars)
            return Proj(1, Pair(inner, Zero(REAL)))
        # (jac f s) r with s linear and r a point built from constants
        name = self.prims[int(self.rng.integers(len(self.prims)))]
        p = self.registry.get(name)
        tangent = self._linear(var, var_ty, real_power(p.n_in), depth - 1, scalars)
        applied = App(Jac(name, tangent), self._base_point(p.n_in, scalars))
        return applied if p.n_out == 1 else Proj(int(self.rng.integers(1, 3)), applied)

    def _base_point(self, n: int, scalars: List[Term]) -> Term:
        return _tuple([scalars[int(self.rng.integers(len(scalars)))] for _ in range(n)])

    # --- elementary terms -----------------------------------------------------

    def elementary_term(self, binder: str = "y", binder_ty: Optional[Ty] = None) -> Term:
        """An elementary term over `binder` and the free variables a : R, c : R^2"""
        binder_ty = binder_ty or real_power(2)
        reals = [Var("a")] + leaf_atoms(Var(binder), binder_ty)
        pairs = [Var("c")] + ([Var(binder)] if binder_ty == real_power(2) else [])

        def real() -> Term:
            return reals[int(self.rng.integers(len(reals)))]

        def vector() -> Term:
            return pairs[int(self.rng.integers(len(pairs)))]

        shape = self.rng.choice(
            ["zero", "sum", "atom", "proj", "pair", "literal", "prim1", "prim2", "jac", "dual", "lambda", "dualmap"]
        )
        match shape:
            case "zero":
                return Zero(REAL)
            case "sum":
                return Sum((real(), real()))
            case "atom":
                return real()
            case "proj":
                return Proj(int(self.rng.integers(1, 3)), vector())
            case "pair":
                return Pair(real(), real())
            case "literal":
                return RealLit(round(float(self.rng.uniform(-2.0, 2.0)), 3))
            case "prim1":
                return PrimApp(["sin", "cos", "neg", "pow2"][int(self.rng.integers(4))], real())
            case "prim2":
                return PrimApp(["add", "mult", "g"][int(self.rng.integers(3))], vector())
            case "jac":
                return Jac(["add", "mult", "g"][int(self.rng.integers(3))], vector())
            case "dual":
                return DualVec((1.0, 2.0))
            case "lambda":
                # \u. let z = u + r in z
                return Lam("u", let_term("k", Sum((Var("u"), real())), Var("k")), REAL)
        # dual<u. let k = <u, r> in k> d, a dual map whose body may read the binder
        body = let_term("k", Pair(Var("u"), real()), Var("k"))
        return DualMap("u", body, Var("d"), REAL)


def elementary_value(binder_ty: Optional[Ty] = None, rng: Optional[np.random.Generator] = None) -> Term:
    """A literal point for the binder of elementary_term"""
    binder_ty = binder_ty or real_power(2)
    rng = rng or np.random.default_rng(0)
    return encode_vector(np.round(rng.uniform(-2.0, 2.0, size=binder_ty.leaf_count), 3), binder_ty)


def random_programs(count: int, seed: int = 0, **kwargs) -> List[RandomProgram]:
    return ProgramGenerator(seed).programs(count, **kwargs)
