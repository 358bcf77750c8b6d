"""
Pretty-printer for terms and types in the concrete surface grammar

The output parses back to an alpha-equivalent term (see pbcalc.syntax.parser).
"""

from __future__ import annotations

import math

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
from pbcalc.syntax.types import Arrow, Dual, Prod, Real, Ty, is_omega, real_power_size

# term precedence levels
_TOP, _SUM, _APP, _ATOM = 0, 1, 2, 3

# type precedence levels
_T_ARROW, _T_PROD, _T_POSTFIX, _T_ATOM = 0, 1, 2, 3


def format_number(value: float) -> str:
    if math.isfinite(value) and value == int(value):
        text = str(int(value))
        # a bare 0 is the zero term
        return "0.0" if text in ("0", "-0") else text
    return repr(float(value))


def format_type(ty: Ty) -> str:
    return _type(ty, _T_ARROW)


def _type(ty: Ty, ctx: int) -> str:
    match ty:
        case Real():
            return "R"
        case Prod(left, right):
            n = real_power_size(ty)
            if n is not None:
                return f"R^{n}"
            text = f"{_type(left, _T_PROD)} * {_type(right, _T_POSTFIX)}"
            return text if ctx <= _T_PROD else f"({text})"
        case Arrow(dom, cod):
            if is_omega(ty):
                text = f"Omega {_type(dom, _T_ATOM)}"
                return text if ctx <= _T_POSTFIX else f"({text})"
            text = f"{_type(dom, _T_PROD)} -> {_type(cod, _T_ARROW)}"
            return text if ctx <= _T_ARROW else f"({text})"
        case Dual(of):
            text = f"{_type(of, _T_POSTFIX)}*"
            return text if ctx <= _T_POSTFIX else f"({text})"
    raise TypeError(f"not a type: {ty!r}")


def format_term(t: Term) -> str:
    return _term(t, _TOP)


def _binder(name: str, ty: Ty | None) -> str:
    return name if ty is None else f"{name}:{format_type(ty)}"


def _wrap(text: str, level: int, ctx: int) -> str:
    return text if ctx <= level else f"({text})"


def _term(t: Term, ctx: int) -> str:
    match t:
        case Var(name):
            return name
        case RealLit(value):
            return format_number(value)
        case Zero(ty):
            return "0" if ty is None else f"(0 : {format_type(ty)})"
        case DualVec(values, ty):
            text = "[" + ", ".join(format_number(v) for v in values) + "]*"
            return text if ty is None else f"({text} : {format_type(ty)})"
        case Pair(left, right):
            return f"<{_term(left, _TOP)}, {_term(right, _TOP)}>"
        case PrimApp(prim, Pair() as arg):
            return f"{prim}{_term(arg, _ATOM)}"
        case PrimApp(prim, arg):
            return f"{prim}({_term(arg, _TOP)})"
        case App(Lam(name, body, ty), bound):
            text = f"let {_binder(name, ty)} = {_term(bound, _TOP)} in {_term(body, _TOP)}"
            return _wrap(text, _TOP, ctx)
        case Lam(name, body, ty):
            return _wrap(f"\\{_binder(name, ty)}. {_term(body, _TOP)}", _TOP, ctx)
        case App(fn, arg):
            return _wrap(f"{_term(fn, _APP)} {_term(arg, _ATOM)}", _APP, ctx)
        case Sum(terms):
            return _wrap(" + ".join(_term(s, _APP) for s in terms), _SUM, ctx)
        case Proj(index, body):
            return _wrap(f"pi{index} {_term(body, _ATOM)}", _APP, ctx)
        case Jac(prim, arg):
            return _wrap(f"jac {prim} {_term(arg, _ATOM)}", _APP, ctx)
        case DualMap(name, body, arg, ty):
            text = f"dual<{_binder(name, ty)}. {_term(body, _TOP)}> {_term(arg, _ATOM)}"
            return _wrap(text, _APP, ctx)
        case Pullback(name, body, form, ty):
            text = f"pb (\\{_binder(name, ty)}. {_term(body, _TOP)}) {_term(form, _ATOM)}"
            return _wrap(text, _APP, ctx)
    raise TypeError(f"not a term: {t!r}")
