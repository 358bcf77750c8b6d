"""
Types of the pullback calculus: R, products, arrows and duals
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Iterator, Tuple


class Ty:
    """Base class of type variants"""

    def __str__(self) -> str:
        from pbcalc.syntax.printer import format_type

        return format_type(self)

    @cached_property
    def is_first_order(self) -> bool:
        """True for R and products of first-order types"""
        match self:
            case Real():
                return True
            case Prod(left, right):
                return left.is_first_order and right.is_first_order
        return False

    @cached_property
    def leaf_count(self) -> int:
        """Number of real leaves of a first-order type"""
        match self:
            case Real():
                return 1
            case Prod(left, right):
                return left.leaf_count + right.leaf_count
        raise ValueError(f"{self} is not first-order")


@dataclass(frozen=True)
class Real(Ty):
    pass


@dataclass(frozen=True)
class Prod(Ty):
    left: Ty
    right: Ty


@dataclass(frozen=True)
class Arrow(Ty):
    dom: Ty
    cod: Ty


@dataclass(frozen=True)
class Dual(Ty):
    of: Ty


REAL = Real()


def real_power(n: int) -> Ty:
    """R^n, left-nested: R^(n+1) = R^n * R"""
    if n < 1:
        raise ValueError(f"R^{n} has no real leaves")
    ty: Ty = REAL
    for _ in range(n - 1):
        ty = Prod(ty, REAL)
    return ty


def omega(sigma: Ty) -> Ty:
    """The 1-form type, sigma => sigma*"""
    return Arrow(sigma, Dual(sigma))


def is_omega(ty: Ty) -> bool:
    return isinstance(ty, Arrow) and ty.cod == Dual(ty.dom)


def real_power_size(ty: Ty) -> int | None:
    """n when ty is exactly the left-nested R^n, else None"""
    n = 1
    while isinstance(ty, Prod):
        if ty.right != REAL:
            return None
        ty = ty.left
        n += 1
    return n if ty == REAL else None


def leaf_paths(ty: Ty, prefix: Tuple[int, ...] = ()) -> Iterator[Tuple[int, ...]]:
    """Projection paths to every leaf, left to right; a path lists projections in the order they apply"""
    if isinstance(ty, Prod):
        yield from leaf_paths(ty.left, prefix + (1,))
        yield from leaf_paths(ty.right, prefix + (2,))
    else:
        yield prefix


def leaf_range(ty: Ty, path: Tuple[int, ...]) -> Tuple[int, int]:
    """Flat [start, stop) range of the component of ty reached by the projection path"""
    start = 0
    for index in path:
        if not isinstance(ty, Prod):
            raise ValueError(f"cannot project {index} out of {ty}")
        if index == 2:
            start += ty.left.leaf_count
            ty = ty.right
        else:
            ty = ty.left
    return start, start + ty.leaf_count


def component(ty: Ty, path: Tuple[int, ...]) -> Ty:
    for index in path:
        if not isinstance(ty, Prod):
            raise ValueError(f"cannot project {index} out of {ty}")
        ty = ty.left if index == 1 else ty.right
    return ty
