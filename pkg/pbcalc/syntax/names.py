"""
Deterministic fresh-name supply
"""

import re
from typing import Iterable, Set

_STEM = re.compile(r"^(.*?)(\d+)?('*)$")


def stem(name: str) -> str:
    """Strip a trailing counter and primes: z12 -> z, v'' -> v"""
    base = _STEM.match(name).group(1)  # type: ignore[union-attr]
    return base or name


class NameSupply:
    """Hands out names stem1, stem2, ... that collide with nothing reserved or handed out before.

    One supply is owned per normalization, so two runs over the same term produce the same names.
    """

    def __init__(self, reserved: Iterable[str] = ()):
        self._used: Set[str] = set(reserved)
        self._counters: dict = {}

    def reserve(self, names: Iterable[str]) -> None:
        self._used.update(names)

    def fresh(self, base: str = "x") -> str:
        root = stem(base)
        counter = self._counters.get(root, 0)
        while True:
            counter += 1
            candidate = f"{root}{counter}"
            if candidate not in self._used:
                break
        self._counters[root] = counter
        self._used.add(candidate)
        return candidate

    def __contains__(self, name: str) -> bool:
        return name in self._used
