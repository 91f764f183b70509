"""Structured pass/fail reports shared by the validation routines."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any


@dataclass(frozen=True)
class Check:
    """One named check with an optional measured margin."""

    name: str
    passed: bool
    detail: str = ""
    margin: float | None = None

    def to_dict(self) -> dict[str, Any]:
        return {"check": self.name, "passed": self.passed, "margin": self.margin, "detail": self.detail}


@dataclass(frozen=True)
class ValidationReport:
    checks: tuple[Check, ...] = field(default_factory=tuple)

    @property
    def ok(self) -> bool:
        return all(c.passed for c in self.checks)

    def __bool__(self) -> bool:
        return self.ok

    @property
    def failures(self) -> list[Check]:
        return [c for c in self.checks if not c.passed]

    def get(self, name: str) -> Check:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def to_dict(self) -> dict[str, Any]:
        return {"ok": self.ok, "checks": [c.to_dict() for c in self.checks]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def to_text(self) -> str:
        lines = []
        for c in self.checks:
            mark = "PASS" if c.passed else "FAIL"
            margin = "" if c.margin is None else f" (margin {c.margin:.6g})"
            detail = f": {c.detail}" if c.detail else ""
            lines.append(f"[{mark}] {c.name}{margin}{detail}")
        lines.append("overall: " + ("ok" if self.ok else "failed"))
        return "\n".join(lines)
