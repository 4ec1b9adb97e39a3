"""Report containers and serialization.

BoundReport aggregates the empirical constants measured for the package's
inequality checks; ValidationReport covers the standing-assumption audit.
Both serialize to JSON with stable key order so identical inputs produce
byte-identical reports (timestamps live outside the deterministic payload).
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import sys
from dataclasses import dataclass, field
from typing import Any, Iterable

import numpy as np

__all__ = [
    "BoundReport",
    "ValidationEntry",
    "ValidationReport",
    "RunReport",
    "emit_report",
    "emit_csv",
    "config_hash",
    "canonical_json",
]

_STATUSES = ("pass", "fail", "info")


def _jsonable(value: Any) -> Any:
    if isinstance(value, (np.floating, np.integer)):
        value = value.item()
    if isinstance(value, float):
        if math.isnan(value):
            return "nan"
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return value
    if isinstance(value, np.ndarray):
        return [_jsonable(v) for v in value.tolist()]
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    return value


@dataclass
class BoundReport:
    """Measured constants for one inequality.

    `inequality` is the stable identifier key of the inequality being
    measured.  `constants` holds the empirical values (sup/inf ratios,
    residual norms); `stability_delta` is the relative change under grid
    refinement; `status` is "pass", "fail" or "info".
    """

    inequality: str
    constants: dict[str, float] = field(default_factory=dict)
    stability_delta: float | None = None
    status: str = "info"
    witness: dict[str, Any] = field(default_factory=dict)
    notes: str = ""

    def __post_init__(self):
        if self.status not in _STATUSES:
            raise ValueError(f"status must be one of {_STATUSES}, got {self.status!r}")

    @property
    def passed(self) -> bool:
        return self.status == "pass"

    def require_finite(self) -> "BoundReport":
        """Downgrade to fail if any constant is non-finite."""
        if any(not math.isfinite(float(v)) for v in self.constants.values()):
            self.status = "fail"
        return self

    def as_dict(self) -> dict[str, Any]:
        return {
            "inequality": self.inequality,
            "constants": _jsonable(self.constants),
            "stability_delta": _jsonable(self.stability_delta),
            "status": self.status,
            "witness": _jsonable(self.witness),
            "notes": self.notes,
        }


@dataclass
class ValidationEntry:
    assumption: str
    status: str
    worst_violation: float
    witness: dict[str, Any] = field(default_factory=dict)
    notes: str = ""

    def as_dict(self) -> dict[str, Any]:
        return {
            "assumption": self.assumption,
            "status": self.status,
            "worst_violation": _jsonable(self.worst_violation),
            "witness": _jsonable(self.witness),
            "notes": self.notes,
        }


@dataclass
class ValidationReport:
    entries: list[ValidationEntry] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(e.status == "pass" for e in self.entries)

    def entry(self, assumption: str) -> ValidationEntry:
        for e in self.entries:
            if e.assumption == assumption:
                return e
        raise KeyError(assumption)

    def as_dict(self) -> dict[str, Any]:
        return {"passed": self.passed, "entries": [e.as_dict() for e in self.entries]}

    def to_json(self) -> str:
        return canonical_json(self.as_dict())


@dataclass
class RunReport:
    """Aggregate emitted by the CLI: bound reports, logs, provenance."""

    config: dict[str, Any]
    bounds: list[BoundReport] = field(default_factory=list)
    validation: ValidationReport | None = None
    logs: dict[str, Any] = field(default_factory=dict)

    def add(self, report: BoundReport) -> BoundReport:
        self.bounds.append(report)
        return report

    @property
    def passed(self) -> bool:
        ok = all(b.status != "fail" for b in self.bounds)
        if self.validation is not None:
            ok = ok and self.validation.passed
        return ok

    def as_dict(self) -> dict[str, Any]:
        return {
            "provenance": {
                "config_hash": config_hash(self.config),
                "python": sys.version.split()[0],
                "numpy": np.__version__,
            },
            "config": _jsonable(self.config),
            "passed": self.passed,
            "bounds": [b.as_dict() for b in self.bounds],
            "validation": self.validation.as_dict() if self.validation else None,
            "logs": _jsonable(self.logs),
        }


def canonical_json(payload: Any) -> str:
    return json.dumps(_jsonable(payload), sort_keys=True, indent=2)


def config_hash(config: dict[str, Any]) -> str:
    blob = json.dumps(_jsonable(config), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def emit_report(results: RunReport | dict[str, Any], path=None) -> str:
    """Render a run report to canonical JSON, optionally writing it out."""
    payload = results.as_dict() if isinstance(results, RunReport) else results
    text = canonical_json(payload) + "\n"
    if path is not None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    return text

def emit_csv(rows: Iterable[Iterable[Any]], header: Iterable[str], path) -> None:
    """RFC-4180-style CSV with a header row, '.' decimal point, no locale."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\r\n")
        writer.writerow(list(header))
        for row in rows:
            writer.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
