"""
Run Logger Module for the Destabilization Complex

This module records what a run computed and which checks failed, in both
human-readable and machine-readable formats.

Features:
- Dataclass records for homology rows, check results and failures
- TSV homology tables with explicit zero rows (header s, degree, dim)
- JSON-lines failure files (reason, s, degree, witness)
- Matrix dumps and a JSON run summary with timestamps
"""

import json
import logging
import threading
from dataclasses import asdict, dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, TextIO

import numpy as np

from fpla import DestabError

logger = logging.getLogger(__name__)

TSV_HEADER = "s\tdegree\tdim"


@dataclass
class FailureRecord:
    """One failed identity, with enough context to reproduce it"""
    reason: str
    check: str = ""
    s: Optional[int] = None
    degree: Optional[int] = None
    witness: Dict[str, Any] = field(default_factory=dict)

    @classmethod
    def from_error(cls, error: DestabError, check: str = "", s: Optional[int] = None,
                   degree: Optional[int] = None) -> "FailureRecord":
        witness = dict(error.witness)
        witness.setdefault("message", str(error))
        return cls(error.reason, check, s, degree if degree is not None else witness.get("degree"), witness)


@dataclass
class HomologyRow:
    """Dimension of H_s or D_s in one internal degree"""
    s: int
    degree: int
    dim: int
    upper_bound: bool = False


@dataclass
class CheckResult:
    """Outcome of a verification; informative results never fail a run"""
    name: str
    passed: bool = True
    informative: bool = False
    checked: int = 0
    failures: List[FailureRecord] = field(default_factory=list)
    details: Dict[str, Any] = field(default_factory=dict)

    def fail(self, reason: str, s: Optional[int] = None, degree: Optional[int] = None, **witness: Any) -> None:
        self.passed = False
        self.failures.append(FailureRecord(reason, self.name, s, degree, witness))
        logger.debug(f"{self.name}: {reason} at s={s}, degree={degree}")

    def merge(self, other: "CheckResult") -> "CheckResult":
        """Fold another result into this one"""
        self.passed = self.passed and (other.passed or other.informative)
        self.checked += other.checked
        self.failures.extend(other.failures)
        self.details[other.name] = other.details
        return self


def _jsonable(obj: Any) -> Any:
    """Convert tuples, sets, numpy scalars and named tuples into JSON-friendly values"""
    if isinstance(obj, dict):
        return {str(key): _jsonable(value) for key, value in obj.items()}
    if isinstance(obj, tuple) and hasattr(obj, "_fields"):
        return str(obj)
    if isinstance(obj, (list, tuple)):
        return [_jsonable(item) for item in obj]
    if isinstance(obj, set):
        return sorted(_jsonable(item) for item in obj)
    if isinstance(obj, np.ndarray):
        return [_jsonable(item) for item in obj.tolist()]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def format_table(rows: Iterable[HomologyRow]) -> List[str]:
    """TSV lines, header first, rows sorted by (s, degree)"""
    lines = [TSV_HEADER]
    for row in sorted(rows, key=lambda r: (r.s, r.degree)):
        lines.append(f"{row.s}\t{row.degree}\t{row.dim}")
    return lines


def parse_table(text: str) -> List[HomologyRow]:
    """Inverse of format_table"""
    lines = [line for line in text.splitlines() if line.strip()]
    if not lines or lines[0] != TSV_HEADER:
        raise ValueError(f"expected header {TSV_HEADER!r}")
    rows = []
    for line in lines[1:]:
        s, degree, dim = (int(x) for x in line.split("\t"))
        rows.append(HomologyRow(s, degree, dim))
    return rows


def failure_line(record: FailureRecord) -> str:
    return json.dumps(_jsonable(asdict(record)), sort_keys=True, default=str)


class RunLogger:
    """
    Collects the records of one CLI run and writes them out
    """

    def __init__(self, out: Optional[str] = None, failures_path: Optional[str] = None):
        """
        Initialize the run logger

        Args:
            out: Path of the TSV table or report; stdout when None
            failures_path: Path of the JSON-lines failure file; derived from out when None
        """
        self.out = Path(out) if out else None
        if failures_path:
            self.failures_path = Path(failures_path)
        elif self.out:
            self.failures_path = self.out.with_suffix(".failures.jsonl")
        else:
            self.failures_path = None
        self.start_time = datetime.now().isoformat()
        self.rows: List[HomologyRow] = []
        self.results: List[CheckResult] = []
        self._lock = threading.Lock()

    def add_rows(self, rows: Iterable[HomologyRow]) -> None:
        with self._lock:
            self.rows.extend(rows)

    def record(self, result: CheckResult) -> None:
        """Keep a check result and log its outcome"""
        with self._lock:
            self.results.append(result)
        if result.passed:
            logger.info(f"check {result.name} passed ({result.checked} comparisons)")
        elif result.informative:
            logger.warning(f"check {result.name} failed but is informative only: "
                           f"{len(result.failures)} failures")
        else:
            logger.error(f"check {result.name} failed: {len(result.failures)} failures")

    @property
    def failures(self) -> List[FailureRecord]:
        return [f for r in self.results if not r.informative for f in r.failures]

    @property
    def passed(self) -> bool:
        return all(r.passed or r.informative for r in self.results)

    def write_table(self, stream: Optional[TextIO] = None, matrix_lines: Optional[List[str]] = None) -> None:
        """Write the TSV table to out (or the given stream), then the matrix dump if requested"""
        lines = format_table(self.rows)
        if matrix_lines:
            lines += ["# matrices: degree s row col value"] + matrix_lines
        text = "\n".join(lines) + "\n"
        if self.out:
            self.out.write_text(text)
            logger.info(f"table written to {self.out}")
        elif stream is not None:
            stream.write(text)

    def write_report(self, stream: Optional[TextIO] = None) -> None:
        """Human-readable pass/fail report"""
        lines = []
        for r in self.results:
            status = "PASS" if r.passed else ("INFO" if r.informative else "FAIL")
            lines.append(f"{status}\t{r.name}\t{r.checked}\t{len(r.failures)}")
            for f in r.failures[:5]:
                lines.append(f"  {f.reason} s={f.s} degree={f.degree} {json.dumps(_jsonable(f.witness), default=str)}")
        text = "\n".join(lines) + "\n"
        if self.out:
            self.out.write_text(text)
        elif stream is not None:
            stream.write(text)

    def write_failures(self, extra: Iterable[FailureRecord] = ()) -> Optional[Path]:
        """Write every non-informative failure as one JSON object per line"""
        records = self.failures + list(extra)
        if not records or self.failures_path is None:
            return None
        with open(self.failures_path, "w") as f:
            for record in records:
                f.write(failure_line(record) + "\n")
        logger.info(f"{len(records)} failures written to {self.failures_path}")
        return self.failures_path

    def summary(self) -> Dict[str, Any]:
        return {
            "start_time": self.start_time,
            "end_time": datetime.now().isoformat(),
            "passed": self.passed,
            "rows": len(self.rows),
            "checks": [{"name": r.name, "passed": r.passed, "informative": r.informative,
                        "checked": r.checked, "failures": len(r.failures)} for r in self.results],
        }

    def save_summary(self, path: str) -> None:
        with open(path, "w") as f:
            json.dump(_jsonable(self.summary()), f, indent=2, default=str)
