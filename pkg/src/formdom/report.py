"""Structured results of numerical checks."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np

PASS = "PASS"
FAIL = "FAIL"
PRECONDITION_FAILED = "PRECONDITION_FAILED"


def _jsonable(value: Any) -> Any:
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return _jsonable(value.tolist())
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.floating, float)):
        value = float(value)
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        if math.isnan(value):
            return "nan"
        return value
    if isinstance(value, (complex, np.complexfloating)):
        return [float(value.real), float(value.imag)]
    if isinstance(value, np.bool_):
        return bool(value)
    return value


@dataclass
class VerificationReport:
    """Outcome of one check.

    ``max_violation`` is the largest amount by which the checked inequality
    was exceeded (negative or zero when it held everywhere with room to spare).
    """

    check: str
    verdict: str
    max_violation: float = 0.0
    samples: int = 0
    seed: int | None = None
    worst_case: dict = field(default_factory=dict)
    violations: list = field(default_factory=list)
    details: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.verdict == PASS

    def __bool__(self) -> bool:
        return self.passed

    def to_dict(self) -> dict:
        out = {
            "check": self.check,
            "seed": self.seed,
            "samples": self.samples,
            "max_violation": self.max_violation,
            "worst_case": self.worst_case,
            "verdict": self.verdict,
        }
        if self.violations:
            out["violations"] = self.violations
        if self.details:
            out["details"] = self.details
        return _jsonable(out)

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, **kwargs)

    def summary(self) -> str:
        line = f"{self.check}: {self.verdict} (max violation {self.max_violation:.3e}, {self.samples} samples)"
        if self.worst_case and not self.passed:
            line += f" worst={_jsonable(self.worst_case)}"
        return line


def combine(check: str, reports: list[VerificationReport], seed: int | None = None) -> VerificationReport:
    """Fold several reports into one; FAIL if any part failed."""
    verdict = PASS
    for r in reports:
        if r.verdict != PASS:
            verdict = r.verdict if verdict == PASS else verdict
    worst = max(reports, key=lambda r: r.max_violation) if reports else None
    return VerificationReport(
        check=check,
        verdict=verdict,
        max_violation=worst.max_violation if worst else 0.0,
        samples=sum(r.samples for r in reports),
        seed=seed,
        worst_case=dict(worst.worst_case, part=worst.check) if worst else {},
        details={"parts": [r.to_dict() for r in reports]},
    )
