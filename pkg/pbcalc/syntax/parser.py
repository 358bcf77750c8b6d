"""
Surface-syntax parser

Grammar (lowest to highest precedence):

    program := ("given" NAME ":" type ";")* expr
    expr    := "\\" binder [":" type] "." expr | "let" NAME [":" type] "=" expr "in" expr | at
    at      := sum ("@" (lambda | let | sum))*            explicit application
    sum     := app ("+" app)*
    app     := item item*                                  juxtaposition, left-assoc
    item    := "pi1" atom | "pi2" atom | "jac" NAME atom | "pb" atom atom
             | "dual" "<" binder [":" type] "." expr ">" atom | "pbof" "[" nums "]" | atom
    atom    := NUMBER | "[" nums "]" "*" | "<" expr ("," expr)+ ">" | "(" expr [":" type] ")"
             | PRIM "(" expr ")" | PRIM "<" ... ">" | NAME
    binder  := NAME | "<" binder ("," binder)+ ">"         tuple patterns desugar to projections

A bare `0` is the zero term; any other numeral (`0.0` included) is a real literal. Tuples of width k
nest to the left. Types are `R`, `R^n`, `T * T`, `T -> T`, postfix `T*` and `Omega T`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Tuple, Union

import pyparsing as pp

from pbcalc.core.logging import get_logger
from pbcalc.syntax.analysis import alpha_rename, basis_dual, mk_sum, substitute
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
    Term,
    Var,
    Zero,
    all_names,
    path_term,
)
from pbcalc.syntax.types import REAL, Arrow, Dual, Prod, Ty, omega, real_power
from pbcalc.utils.errors import ParseError

logger = get_logger(__name__)

pp.ParserElement.enable_packrat()

KEYWORDS = ("let", "in", "pb", "pbof", "dual", "jac", "pi1", "pi2", "given", "Omega")


@dataclass
class SourceProgram:
    """A parsed program file"""

    text: str
    term: Term
    context: Dict[str, Ty] = field(default_factory=dict)
    spans: Dict[str, Tuple[int, int]] = field(default_factory=dict)


@dataclass(frozen=True)
class _Pattern:
    """Binder pattern: a name or a left-nested tuple of patterns"""

    name: Optional[str] = None
    parts: Tuple["_Pattern", ...] = ()

    def leaves(self, path: Tuple[int, ...] = ()) -> List[Tuple[str, Tuple[int, ...]]]:
        if self.name is not None:
            return [(self.name, path)]
        left, right = self.parts
        return left.leaves(path + (1,)) + right.leaves(path + (2,))


def _nest(parts: List[_Pattern]) -> _Pattern:
    pattern = parts[0]
    for part in parts[1:]:
        pattern = _Pattern(parts=(pattern, part))
    return pattern


def _bind(pattern: _Pattern, body: Term) -> Tuple[str, Term]:
    """Desugar \\<x,y>. body into \\p. body[pi1 p/x][pi2 p/y]"""
    if pattern.name is not None:
        return pattern.name, body
    leaves = pattern.leaves()
    names = [name for name, _ in leaves]
    if len(set(names)) != len(names):
        raise ValueError(f"repeated name in pattern <{', '.join(names)}>")
    supply = NameSupply(all_names(body) | set(names))
    binder = supply.fresh("p")
    for name, path in leaves:
        body = substitute(body, path_term(Var(binder), path), name)
    return binder, body


def _number(text: str) -> Term:
    return Zero() if text == "0" else RealLit(float(text))


def _fold_app(terms: Iterable[Term]) -> Term:
    it = iter(terms)
    result = next(it)
    for arg in it:
        result = App(result, arg)
    return result


def _fold_pair(terms: List[Term]) -> Term:
    result = terms[0]
    for item in terms[1:]:
        result = Pair(result, item)
    return result


def _ascribe(term: Term, ty: Ty) -> Term:
    match term:
        case Zero():
            return Zero(ty)
        case DualVec(values):
            return DualVec(values, ty)
    raise ValueError(f"type ascription is only allowed on 0 and dual vectors, got `{term}`")


def _type_grammar() -> pp.ParserElement:
    ty = pp.Forward()
    lpar, rpar = pp.Suppress("("), pp.Suppress(")")
    real = pp.Regex(r"R(?:\^(?P<n>\d+))?(?!\w)")
    real.set_parse_action(lambda t: real_power(int(t.n)) if t.n else REAL)
    ty_atom = real | (lpar + ty + rpar)
    omega_ty = pp.Suppress(pp.Keyword("Omega")) + ty_atom
    omega_ty.set_parse_action(lambda t: omega(t[0]))
    type_start = pp.Regex(r"R(?!\w)|\(|Omega(?!\w)")
    dual_star = pp.Literal("*") + ~type_start
    postfix = (omega_ty | ty_atom) + pp.ZeroOrMore(dual_star)

    def wrap_duals(tokens):
        result = tokens[0]
        for _ in tokens[1:]:
            result = Dual(result)
        return result

    postfix.set_parse_action(wrap_duals)
    product = postfix + pp.ZeroOrMore(pp.Suppress("*") + postfix)

    def fold_prod(tokens):
        result = tokens[0]
        for item in tokens[1:]:
            result = Prod(result, item)
        return result

    product.set_parse_action(fold_prod)
    arrow = product + pp.Optional(pp.Suppress("->") + ty)
    arrow.set_parse_action(lambda t: Arrow(t[0], t[1]) if len(t) == 2 else t[0])
    ty <<= arrow
    return ty


class _Builder:
    """Builds the term grammar for one parse; records binder positions as it goes"""

    def __init__(self, prims: Iterable[str]):
        self.spans: Dict[str, Tuple[int, int]] = {}
        self.prims = sorted(set(prims), key=len, reverse=True)

    def _span(self, name: str, text: str, loc: int) -> None:
        self.spans.setdefault(name, (pp.lineno(loc, text), pp.col(loc, text)))

    def grammar(self) -> pp.ParserElement:
        ty = _type_grammar()
        lpar, rpar, lt, gt, comma = map(pp.Suppress, "()<>,")
        colon, dot, star = pp.Suppress(":"), pp.Suppress("."), pp.Suppress("*")
        keyword = pp.MatchFirst([pp.Keyword(k) for k in KEYWORDS])
        name = ~keyword + pp.Regex(r"[^\W\d]\w*'*")
        number = pp.Regex(r"-?\d+(?:\.\d+)?(?:[eE][-+]?\d+)?")
        numbers = pp.Suppress("[") + pp.DelimitedList(number) + pp.Suppress("]")
        annotation = pp.Optional(colon + ty, default=None)

        expr = pp.Forward()
        atom = pp.Forward()

        pattern = pp.Forward()
        name_pattern = name.copy().set_parse_action(self._name_pattern)
        tuple_pattern = lt + pattern + pp.OneOrMore(comma + pattern) + gt
        tuple_pattern.set_parse_action(lambda t: _nest(list(t)))
        pattern <<= name_pattern | tuple_pattern

        lam = pp.Suppress("\\") + pattern + annotation + dot + expr
        lam.set_parse_action(self._lam)
        let = pp.Suppress(pp.Keyword("let")) + name_pattern + annotation + pp.Suppress("=") + expr
        let = let + pp.Suppress(pp.Keyword("in")) + expr
        let.set_parse_action(self._let)

        zero_or_real = number.copy().set_parse_action(lambda t: _number(t[0]))
        dual_vec = numbers + star
        dual_vec.set_parse_action(lambda t: DualVec(tuple(float(v) for v in t)))
        tuple_lit = lt + expr + pp.OneOrMore(comma + expr) + gt
        tuple_lit.set_parse_action(lambda t: _fold_pair(list(t)))
        paren = lpar + expr + annotation + rpar
        paren.set_parse_action(lambda t: t[0] if t[1] is None else _ascribe(t[0], t[1]))
        var = name.copy().set_parse_action(lambda t: Var(t[0]))
        if self.prims:
            prim_name = pp.Regex("|".join(f"{p}(?![\\w'])" for p in self.prims))
            prim_call = prim_name + ((lpar + expr + rpar) | tuple_lit)
            prim_call.set_parse_action(lambda t: PrimApp(t[0], t[1]))
            atom <<= zero_or_real | dual_vec | tuple_lit | paren | prim_call | var
        else:
            atom <<= zero_or_real | dual_vec | tuple_lit | paren | var

        proj = pp.Regex(r"pi(?P<i>[12])(?!\w)") + atom
        proj.set_parse_action(lambda t: Proj(int(t[0][2]), t[1]))
        jac = pp.Suppress(pp.Keyword("jac")) + name + atom
        jac.set_parse_action(lambda t: Jac(t[0], t[1]))
        pullback = pp.Suppress(pp.Keyword("pb")) + atom + atom
        pullback.set_parse_action(self._pullback)
        dual = pp.Suppress(pp.Keyword("dual")) + lt + pattern + annotation + dot + expr + gt + atom
        dual.set_parse_action(self._dual)
        pbof = pp.Suppress(pp.Keyword("pbof")) + numbers + pp.Optional(star)
        pbof.set_parse_action(lambda t: basis_form(float(v) for v in t))

        item = proj | jac | pullback | dual | pbof | atom
        app = pp.OneOrMore(item).set_parse_action(lambda t: _fold_app(t))
        summed = app + pp.ZeroOrMore(pp.Suppress("+") + app)
        summed.set_parse_action(lambda t: mk_sum(list(t)) if len(t) > 1 else t[0])
        at = summed + pp.ZeroOrMore(pp.Suppress("@") + (lam | let | summed))
        at.set_parse_action(lambda t: _fold_app(t))
        expr <<= lam | let | at

        given = pp.Suppress(pp.Keyword("given")) + name + colon + ty + pp.Suppress(";")
        given.set_parse_action(self._given)
        program = pp.Group(pp.ZeroOrMore(given)) + expr + pp.StringEnd()
        program.ignore(pp.python_style_comment)
        return program

    def _name_pattern(self, text, loc, tokens):
        self._span(tokens[0], text, loc)
        return _Pattern(name=tokens[0])

    def _given(self, text, loc, tokens):
        self._span(tokens[0], text, loc)
        return pp.ParseResults([(tokens[0], tokens[1])])

    @staticmethod
    def _lam(tokens):
        binder, body = _bind(tokens[0], tokens[2])
        return Lam(binder, body, tokens[1])

    @staticmethod
    def _let(tokens):
        binder, body = _bind(tokens[0], tokens[3])
        return App(Lam(binder, body, tokens[1]), tokens[2])

    @staticmethod
    def _dual(tokens):
        binder, body = _bind(tokens[0], tokens[2])
        return DualMap(binder, body, tokens[3], tokens[1])

    @staticmethod
    def _pullback(tokens):
        fn, form = tokens[0], tokens[1]
        if isinstance(fn, Lam):
            return Pullback(fn.name, fn.body, form, fn.ty)
        binder = NameSupply(all_names(fn)).fresh("x")
        return Pullback(binder, App(fn, Var(binder)), form)


def basis_form(values: Iterable[float]) -> Term:
    """pbof [r1, ..., rn]: the constant 1-form \\x. [r1, ..., rn]*"""
    values = tuple(values)
    if values.count(1.0) == 1 and values.count(0.0) == len(values) - 1:
        return basis_dual(values.index(1.0) + 1, len(values))
    return Lam("x", DualVec(values))


def _default_prims() -> List[str]:
    from pbcalc.services.primitives import default_registry

    return default_registry().names()


def parse(text: str, prims: Optional[Iterable[str]] = None) -> SourceProgram:
    """Parse a program file; binders come out alpha-renamed apart from each other and from the context"""
    builder = _Builder(_default_prims() if prims is None else prims)
    try:
        decls, term = builder.grammar().parse_string(text, parse_all=True)
    except pp.ParseBaseException as exc:
        raise ParseError(exc.msg, exc.lineno, exc.col) from exc
    except ValueError as exc:
        raise ParseError(str(exc), 1, 1) from exc
    context: Dict[str, Ty] = {}
    for decl_name, decl_ty in decls:
        context[decl_name] = decl_ty
    term = alpha_rename(term, reserved=context)
    logger.debug("parsed program", size=term.size, context=list(context))
    return SourceProgram(text=text, term=term, context=context, spans=builder.spans)


def parse_term(text: str, prims: Optional[Iterable[str]] = None) -> Term:
    return parse(text, prims).term


def parse_type(text: str) -> Ty:
    try:
        return _type_grammar().parse_string(text, parse_all=True)[0]
    except pp.ParseBaseException as exc:
        raise ParseError(exc.msg, exc.lineno, exc.col) from exc


def parse_point(text: str) -> Union[List[float], None]:
    """Comma separated reals, as given to --at"""
    if not text.strip():
        return None
    try:
        return [float(part) for part in text.split(",")]
    except ValueError as exc:
        raise ParseError(f"bad point {text!r}", 1, 1) from exc
