"""Named invariant checks collected into a machine-readable report."""

from __future__ import annotations

import math
from dataclasses import dataclass


@dataclass(frozen=True)
class Check:
    """One evaluated invariant: passes when ``value <= tolerance``."""

    check: str
    module: str
    paper_ref: str
    value: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return math.isfinite(self.value) and self.value <= self.tolerance

    def to_json(self) -> dict:
        return {"check": self.check, "module": self.module, "paper_ref": self.paper_ref,
                "value": float(self.value), "tolerance": float(self.tolerance),
                "pass": self.passed}


class Report:
    """Ordered collection of checks."""

    def __init__(self):
        self.items: list[Check] = []

    def add(self, check: str, module: str, paper_ref: str, value, tolerance) -> Check:
        c = Check(check, module, paper_ref, float(value), float(tolerance))
        self.items.append(c)
        return c

    @property
    def all_passed(self) -> bool:
        return all(c.passed for c in self.items)

    def to_json(self) -> list:
        return [c.to_json() for c in self.items]
