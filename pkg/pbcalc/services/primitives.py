"""
Primitive registry: the differentiable function symbols, their evaluators and analytic Jacobians
"""

from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Dict, List, Sequence

import numpy as np

from pbcalc.core.config import settings
from pbcalc.core.logging import get_logger
from pbcalc.models.trace import PrimitiveInfo
from pbcalc.utils.errors import DimensionMismatch, ErrorCode, RegistryError

logger = get_logger(__name__)

Vector = np.ndarray


@dataclass(frozen=True)
class Primitive:
    """A function symbol f: R^n_in -> R^n_out with its Jacobian"""

    name: str
    n_in: int
    n_out: int
    fn: Callable[[Vector], Vector]
    jacobian: Callable[[Vector], np.ndarray]

    def __call__(self, x: Vector) -> Vector:
        return np.asarray(self.fn(x), dtype=float).reshape(self.n_out)

    def jacobian_at(self, x: Vector) -> np.ndarray:
        return np.asarray(self.jacobian(x), dtype=float).reshape(self.n_out, self.n_in)


class PrimitiveRegistry:
    """Write-once table of primitives; frozen after startup"""

    def __init__(self):
        self._prims: Dict[str, Primitive] = {}
        self._frozen = False

    def register(self, prim: Primitive, self_test: bool = True) -> None:
        if self._frozen:
            raise RegistryError(f"registry is frozen, cannot add {prim.name}", code=ErrorCode.REGISTRY_FROZEN)
        if prim.name in self._prims:
            raise RegistryError(f"primitive {prim.name} already registered", code=ErrorCode.DUPLICATE_PRIMITIVE)
        if prim.n_in < 1 or prim.n_out < 1:
            raise RegistryError(
                f"primitive {prim.name} has dimensions {prim.n_in} -> {prim.n_out}", code=ErrorCode.ZERO_DIMENSION
            )
        if self_test:
            self._self_test(prim)
        self._prims[prim.name] = prim
        logger.debug("registered primitive", name=prim.name, n_in=prim.n_in, n_out=prim.n_out)

    def freeze(self) -> "PrimitiveRegistry":
        self._frozen = True
        return self

    @property
    def frozen(self) -> bool:
        return self._frozen

    def _self_test(self, prim: Primitive) -> None:
        from pbcalc.services.oracle import finite_diff

        rng = np.random.default_rng(settings.SELF_TEST_SEED)
        for _ in range(settings.SELF_TEST_POINTS):
            x = rng.uniform(-1.0, 1.0, prim.n_in)
            analytic = prim.jacobian_at(x)
            numeric = finite_diff(prim, x, settings.FD_STEP)
            if not np.allclose(analytic, numeric, rtol=settings.FD_RTOL, atol=settings.FD_ATOL):
                raise RegistryError(
                    f"Jacobian of {prim.name} disagrees with finite differences at {x.tolist()}",
                    code=ErrorCode.SELF_TEST_FAILED,
                    details={"analytic": analytic.tolist(), "numeric": numeric.tolist()},
                )

    def get(self, name: str) -> Primitive:
        try:
            return self._prims[name]
        except KeyError:
            raise RegistryError(f"unknown primitive {name}", code=ErrorCode.UNKNOWN_PRIMITIVE) from None

    def __contains__(self, name: str) -> bool:
        return name in self._prims

    def names(self) -> List[str]:
        return list(self._prims)

    def info(self) -> List[PrimitiveInfo]:
        return [PrimitiveInfo(name=p.name, n_in=p.n_in, n_out=p.n_out) for p in self._prims.values()]

    def _vector(self, prim: Primitive, values: Sequence[float], size: int, what: str) -> Vector:
        x = np.asarray(values, dtype=float).ravel()
        if x.shape[0] != size:
            raise DimensionMismatch(
                f"{prim.name} expects a {what} of length {size}, got {x.shape[0]}",
                details={"primitive": prim.name, "expected": size, "actual": int(x.shape[0])},
            )
        return x

    def eval_prim(self, name: str, x: Sequence[float]) -> Vector:
        prim = self.get(name)
        return prim(self._vector(prim, x, prim.n_in, "point"))

    def jvp(self, name: str, tangent: Sequence[float], point: Sequence[float]) -> Vector:
        """J(f)(point) x tangent"""
        prim = self.get(name)
        u = self._vector(prim, tangent, prim.n_in, "tangent")
        x = self._vector(prim, point, prim.n_in, "point")
        return prim.jacobian_at(x) @ u

    def vjp(self, name: str, cotangent: Sequence[float], point: Sequence[float]) -> Vector:
        """J(f)(point)^T x cotangent"""
        prim = self.get(name)
        w = self._vector(prim, cotangent, prim.n_out, "cotangent")
        x = self._vector(prim, point, prim.n_in, "point")
        return prim.jacobian_at(x).T @ w


BUILTINS = [
    Primitive("add", 2, 1, lambda x: [x[0] + x[1]], lambda x: [[1.0, 1.0]]),
    Primitive("mult", 2, 1, lambda x: [x[0] * x[1]], lambda x: [[x[1], x[0]]]),
    Primitive("pow2", 1, 1, lambda x: [x[0] ** 2], lambda x: [[2.0 * x[0]]]),
    Primitive("neg", 1, 1, lambda x: [-x[0]], lambda x: [[-1.0]]),
    Primitive("exp", 1, 1, lambda x: np.exp(x), lambda x: [[np.exp(x[0])]]),
    Primitive("sin", 1, 1, lambda x: np.sin(x), lambda x: [[np.cos(x[0])]]),
    Primitive("cos", 1, 1, lambda x: np.cos(x), lambda x: [[-np.sin(x[0])]]),
    # g<x, y> = <x + 1, 2x + y^2>
    Primitive("g", 2, 2, lambda x: [x[0] + 1.0, 2.0 * x[0] + x[1] ** 2], lambda x: [[1.0, 0.0], [2.0, 2.0 * x[1]]]),
]


def build_registry(prims: Sequence[Primitive] = BUILTINS, freeze: bool = True) -> PrimitiveRegistry:
    registry = PrimitiveRegistry()
    for prim in prims:
        registry.register(prim)
    return registry.freeze() if freeze else registry


@lru_cache(maxsize=1)
def default_registry() -> PrimitiveRegistry:
    """The built-in primitives, self-tested and frozen"""
    registry = build_registry()
    logger.info("primitive registry ready", count=len(registry.names()))
    return registry
