"""
Numeric reference for first-order automatic differentiation

A program is a straight-line graph of nodes acting on a running state vector. Forward mode pushes a
tangent along with the state; reverse mode records every intermediate state on a forward sweep and
folds the transposed node Jacobians back over a covector. Both serve as independent checks of the
symbolic engine, together with central finite differences.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from pbcalc.core.config import settings
from pbcalc.core.logging import get_logger
from pbcalc.models.trace import GradReport
from pbcalc.services.primitives import PrimitiveRegistry, default_registry
from pbcalc.syntax.analysis import decode_vector, encode_vector
from pbcalc.syntax.terms import App, Lam, Pair, PrimApp, Proj, RealLit, Sum, Term, Var, Zero
from pbcalc.syntax.types import Prod, Ty, real_power
from pbcalc.utils.errors import DimensionMismatch, LoweringError, PbCalcError

logger = get_logger(__name__)

Vector = np.ndarray


@dataclass(frozen=True)
class Node:
    """One elementary step on the running state.

    prim    f(state[indices])
    const   a constant vector
    select  state[indices]: slices, permutations and duplicates
    sum     state[indices] + state[others]

    With keep the output is appended to the state, otherwise it replaces it.
    """

    kind: str
    indices: Tuple[int, ...] = ()
    prim: Optional[str] = None
    others: Tuple[int, ...] = ()
    value: Tuple[float, ...] = ()
    keep: bool = False

    def out_dim(self, registry: PrimitiveRegistry) -> int:
        if self.kind == "prim":
            return registry.get(self.prim).n_out
        if self.kind == "const":
            return len(self.value)
        return len(self.indices)


@dataclass
class Graph:
    """Straight-line program R^n_in -> R^n_out"""

    n_in: int
    nodes: List[Node] = field(default_factory=list)
    registry: PrimitiveRegistry = field(default_factory=default_registry)

    def dims(self) -> List[int]:
        """State dimension before the first node and after each node"""
        dims = [self.n_in]
        for position, node in enumerate(self.nodes):
            d = dims[-1]
            used = node.indices + node.others
            if used and max(used) >= d:
                raise DimensionMismatch(f"node {position} reads index {max(used)} of a state of size {d}")
            if node.kind == "prim":
                n_in = self.registry.get(node.prim).n_in
                if len(node.indices) != n_in:
                    raise DimensionMismatch(f"node {position}: {node.prim} takes {n_in} inputs, got {len(node.indices)}")
            if node.kind == "sum" and len(node.others) != len(node.indices):
                raise DimensionMismatch(f"node {position}: summands of different lengths")
            out = node.out_dim(self.registry)
            dims.append(d + out if node.keep else out)
        return dims

    @property
    def n_out(self) -> int:
        return self.dims()[-1]

    def _check_input(self, x: Sequence[float], what: str = "point") -> Vector:
        v = np.asarray(x, dtype=float).ravel()
        if v.shape[0] != self.n_in:
            raise DimensionMismatch(f"graph expects a {what} of length {self.n_in}, got {v.shape[0]}")
        return v

    def apply_node(self, node: Node, state: Vector) -> Vector:
        match node.kind:
            case "prim":
                out = self.registry.eval_prim(node.prim, state[list(node.indices)])
            case "const":
                out = np.asarray(node.value, dtype=float)
            case "select":
                out = state[list(node.indices)]
            case "sum":
                out = state[list(node.indices)] + state[list(node.others)]
            case _:
                raise LoweringError(f"unknown node kind {node.kind}")
        return np.concatenate([state, out]) if node.keep else out

    def node_jacobian(self, node: Node, state: Vector) -> np.ndarray:
        """d(next state) / d(state)"""
        d = state.shape[0]
        local = np.zeros((node.out_dim(self.registry), d))
        match node.kind:
            case "prim":
                jac = self.registry.get(node.prim).jacobian_at(state[list(node.indices)])
                for column, index in enumerate(node.indices):
                    local[:, index] += jac[:, column]
            case "select":
                for row, index in enumerate(node.indices):
                    local[row, index] += 1.0
            case "sum":
                for row, (i, j) in enumerate(zip(node.indices, node.others)):
                    local[row, i] += 1.0
                    local[row, j] += 1.0
        return np.vstack([np.eye(d), local]) if node.keep else local

    def __call__(self, x: Sequence[float]) -> Vector:
        state = self._check_input(x)
        for node in self.nodes:
            state = self.apply_node(node, state)
        return state


# --- forward and reverse mode ------------------------------------------------------


def forward_sweep(g: Graph, x0: Sequence[float], seed: Sequence[float]) -> List[Tuple[Vector, Vector]]:
    """The pairs <x_i, alpha_i> of the forward iteration, the input pair first"""
    state = g._check_input(x0)
    tangent = g._check_input(seed, "seed")
    pairs = [(state, tangent)]
    for node in g.nodes:
        tangent = g.node_jacobian(node, state) @ tangent
        state = g.apply_node(node, state)
        pairs.append((state, tangent))
    return pairs


def forward_mode(g: Graph, x0: Sequence[float], seed: Sequence[float]) -> Vector:
    """J(f)(x0) x seed"""
    return forward_sweep(g, x0, seed)[-1][1]


def naive_forward_jacobian(g: Graph, x0: Sequence[float]) -> np.ndarray:
    """Carry the whole Jacobian matrix along the chain instead of one tangent"""
    state = g._check_input(x0)
    jac = np.eye(g.n_in)
    for node in g.nodes:
        jac = g.node_jacobian(node, state) @ jac
        state = g.apply_node(node, state)
    return jac


def _states(g: Graph, x0: Sequence[float]) -> List[Vector]:
    states = [g._check_input(x0)]
    for node in g.nodes:
        states.append(g.apply_node(node, states[-1]))
    return states


def _fold_back(g: Graph, states: List[Vector], beta: Vector) -> List[Vector]:
    covectors = [beta]
    for node, state in zip(reversed(g.nodes), reversed(states[:-1])):
        beta = g.node_jacobian(node, state).T @ beta
        covectors.append(beta)
    return covectors


def reverse_sweep(g: Graph, x0: Sequence[float], p: int) -> List[Vector]:
    """Covectors from the output back to the input, starting with e_p"""
    states = _states(g, x0)
    m = states[-1].shape[0]
    if not 1 <= p <= m:
        raise DimensionMismatch(f"row {p} out of range 1..{m}")
    beta = np.zeros(m)
    beta[p - 1] = 1.0
    return _fold_back(g, states, beta)


def reverse_mode(g: Graph, x0: Sequence[float], p: int) -> Vector:
    """Row p of J(f)(x0)"""
    return reverse_sweep(g, x0, p)[-1]


def pullback_numeric(g: Graph, omega: Callable[[Vector], Sequence[float]], x0: Sequence[float]) -> Vector:
    """The pulled-back 1-form at x0: J(f)(x0)^T omega(f(x0)), composed node by node"""
    states = _states(g, x0)
    beta = np.asarray(omega(states[-1]), dtype=float).ravel()
    if beta.shape[0] != states[-1].shape[0]:
        raise DimensionMismatch(f"1-form returned {beta.shape[0]} entries for an output of size {states[-1].shape[0]}")
    return _fold_back(g, states, beta)[-1]


def finite_diff(f: Callable[[Vector], Sequence[float]], x: Sequence[float], h: float = settings.FD_STEP) -> np.ndarray:
    """Central differences, one column per input"""
    x = np.asarray(x, dtype=float).ravel()
    columns = []
    for i in range(x.shape[0]):
        e = np.zeros_like(x)
        e[i] = h
        plus = np.asarray(f(x + e), dtype=float).ravel()
        minus = np.asarray(f(x - e), dtype=float).ravel()
        columns.append((plus - minus) / (2.0 * h))
    return np.column_stack(columns)


def running_graph(registry: Optional[PrimitiveRegistry] = None) -> Graph:
    """pow2 . mult . g on R^2"""
    return Graph(
        n_in=2,
        nodes=[Node("prim", (0, 1), prim="g"), Node("prim", (0, 1), prim="mult"), Node("prim", (0,), prim="pow2")],
        registry=registry or default_registry(),
    )


# --- lowering ---------------------------------------------------------------------

Layout = Union[int, Tuple["Layout", "Layout"]]


def _leaves(layout: Layout) -> List[int]:
    if isinstance(layout, int):
        return [layout]
    return _leaves(layout[0]) + _leaves(layout[1])


def _layout(ty: Ty, indices: List[int]) -> Layout:
    it = iter(indices)

    def build(t: Ty) -> Layout:
        if isinstance(t, Prod):
            left = build(t.left)
            return (left, build(t.right))
        return next(it)

    return build(ty)


class _Lowering:
    """Keeps every computed leaf on the state; a term lowers to the layout of its leaves"""

    def __init__(self, n_in: int, registry: PrimitiveRegistry):
        self.graph = Graph(n_in=n_in, registry=registry)
        self.size = n_in

    def _emit(self, node: Node) -> List[int]:
        self.graph.nodes.append(node)
        out = node.out_dim(self.graph.registry)
        start = self.size
        self.size += out
        return list(range(start, start + out))

    def lower(self, t: Term, env: Dict[str, Layout]) -> Layout:
        match t:
            case Var(name):
                if name not in env:
                    raise LoweringError(f"free variable {name}")
                return env[name]
            case RealLit(value):
                return self._emit(Node("const", value=(value,), keep=True))[0]
            case Zero(ty) if ty is not None and ty.is_first_order:
                return _layout(ty, self._emit(Node("const", value=(0.0,) * ty.leaf_count, keep=True)))
            case Pair(left, right):
                return (self.lower(left, env), self.lower(right, env))
            case Proj(index, body):
                layout = self.lower(body, env)
                if isinstance(layout, int):
                    raise LoweringError(f"projection out of a real in `{t}`")
                return layout[index - 1]
            case PrimApp(prim, arg):
                p = self.graph.registry.get(prim)
                leaves = _leaves(self.lower(arg, env))
                if len(leaves) != p.n_in:
                    raise LoweringError(f"{prim} takes {p.n_in} inputs, got {len(leaves)}")
                return _layout(real_power(p.n_out), self._emit(Node("prim", tuple(leaves), prim=prim, keep=True)))
            case Sum(terms):
                layouts = [self.lower(s, env) for s in terms]
                acc = layouts[0]
                for other in layouts[1:]:
                    a, b = _leaves(acc), _leaves(other)
                    if len(a) != len(b):
                        raise LoweringError(f"summands of different sizes in `{t}`")
                    acc = _relayout(acc, self._emit(Node("sum", tuple(a), others=tuple(b), keep=True)))
                return acc
            case App(Lam(name, body), bound):
                return self.lower(body, {**env, name: self.lower(bound, env)})
        raise LoweringError(f"`{t}` is outside the first-order fragment")


def _relayout(template: Layout, indices: List[int]) -> Layout:
    it = iter(indices)

    def build(layout: Layout) -> Layout:
        if isinstance(layout, int):
            return next(it)
        left = build(layout[0])
        return (left, build(layout[1]))

    return build(template)


def lower_program(f: Term, n_in: int, registry: Optional[PrimitiveRegistry] = None) -> Graph:
    """Lower a closed first-order function \\x. e (lets, pairs, projections, primitives, literals, sums)"""
    if not isinstance(f, Lam):
        raise LoweringError("only abstractions lower to graphs")
    dom = f.ty or real_power(n_in)
    if not dom.is_first_order or dom.leaf_count != n_in:
        raise LoweringError(f"domain {dom} does not have {n_in} leaves")
    lowering = _Lowering(n_in, registry or default_registry())
    result = lowering.lower(f.body, {f.name: _layout(dom, list(range(n_in)))})
    lowering.graph.nodes.append(Node("select", tuple(_leaves(result))))
    logger.debug("lowered program", nodes=len(lowering.graph.nodes), n_in=n_in)
    return lowering.graph


# --- cross checks -----------------------------------------------------------------


def term_evaluator(f: Term, engine=None) -> Callable[[Vector], Vector]:
    """Evaluate f at a point by normalizing f applied to the point's numeral tuple"""
    from pbcalc.services.engine import PullbackEngine

    engine = engine or PullbackEngine()

    def evaluate(x: Vector) -> Vector:
        shape = f.ty if isinstance(f, Lam) and f.ty is not None else None
        value, _ = engine.normalize(App(f, encode_vector(x, shape)))
        return decode_vector(value)

    return evaluate


def check_gradient(f: Term, x: Sequence[float], row: int, engine=None) -> GradReport:
    """Compare the engine's Jacobian row with the reverse-mode oracle and with finite differences"""
    from pbcalc.services.engine import PullbackEngine

    engine = engine or PullbackEngine()
    point = np.asarray(x, dtype=float).ravel()
    gradient, trace = engine.grad_trace(f, point, row)
    try:
        graph = lower_program(f, point.shape[0], engine.registry)
    except PbCalcError as exc:
        logger.info("program does not lower, checking against finite differences only", reason=exc.message)
        graph = None
    oracle = reverse_mode(graph, point, row) if graph is not None else None
    evaluator = graph if graph is not None else term_evaluator(f, engine)
    fd = finite_diff(evaluator, point, settings.FD_STEP)[row - 1]
    ok = bool(np.allclose(gradient, fd, rtol=settings.FD_RTOL, atol=settings.FD_ATOL))
    if oracle is not None:
        ok = ok and bool(np.allclose(gradient, oracle, rtol=settings.ORACLE_RTOL, atol=settings.ORACLE_RTOL))
    report = GradReport(
        point=point.tolist(),
        row=row,
        gradient=gradient.tolist(),
        steps=len(trace),
        oracle=None if oracle is None else oracle.tolist(),
        finite_difference=fd.tolist(),
        ok=ok,
    )
    if not ok:
        logger.warning("gradient check failed", row=row, point=report.point)
    return report
