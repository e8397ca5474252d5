"""
Exact graded linear algebra over F_p

Sparse matrices with entries reduced mod p, deterministic row reduction, and
homology of a pair of composable maps. Every other module funnels its linear
problems (pullbacks, kernels, homology) through here.

Features:
- GradedBasis: degree -> ordered, duplicate-free labels
- SparseMatFp: immutable sparse matrix over F_p
- row_reduce / homology_at / solve_mod_p with first-nonzero pivoting
- the error hierarchy shared by the whole package
"""

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, Hashable, Iterable, List, Optional, Sequence, Tuple

import numpy as np

logger = logging.getLogger(__name__)


class DestabError(ValueError):
    """Base class for all errors raised by the package"""
    reason = "error"

    def __init__(self, message: Optional[str] = None, witness: Optional[Dict[str, Any]] = None):
        self.witness = witness or {}
        super().__init__(message or self.reason)

    def to_record(self) -> Dict[str, Any]:
        return {"reason": self.reason, "message": str(self), "witness": self.witness}


class PrimeMismatchError(DestabError):
    reason = "prime mismatch"


class NotAComplexError(DestabError):
    reason = "not a complex"


class BasisMismatchError(DestabError):
    reason = "basis mismatch"


class WindowExceededError(DestabError):
    reason = "window exceeded"


class RankCapError(DestabError):
    reason = "rank cap"


class CapExceededError(DestabError):
    reason = "cap exceeded"


class StabilityViolationError(DestabError):
    reason = "stability violation"


class DifferentialError(DestabError):
    reason = "differential leaves R_{s-1}"


class WindowExhaustedError(DestabError):
    reason = "window exhausted"

    def __init__(self, message: Optional[str] = None, first_unreliable: Optional[int] = None,
                 witness: Optional[Dict[str, Any]] = None):
        self.first_unreliable = first_unreliable
        witness = dict(witness or {})
        if first_unreliable is not None:
            witness.setdefault("degree", first_unreliable)
        super().__init__(message, witness)


class ModuleParseError(DestabError):
    reason = "parse error"

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        text = f"line {line}: {message}" if line is not None else message
        super().__init__(text, {"line": line} if line is not None else None)


class RelationViolationError(DestabError):
    reason = "relation violation"


class TwistTooSmallError(DestabError):
    reason = "twist too small"


def check_prime(p: int) -> int:
    """Validate that p is an odd prime"""
    if p < 3 or any(p % q == 0 for q in range(2, int(p ** 0.5) + 1)):
        raise ValueError(f"p must be an odd prime, got {p}")
    return p


class GradedBasis:
    """Map from degree to an ordered tuple of unique labels"""

    def __init__(self, by_degree: Optional[Dict[int, Iterable[Hashable]]] = None):
        self._by_degree: Dict[int, Tuple[Hashable, ...]] = {}
        self._index: Dict[int, Dict[Hashable, int]] = {}
        for degree, labels in (by_degree or {}).items():
            self.set_degree(degree, labels)

    def set_degree(self, degree: int, labels: Iterable[Hashable]) -> None:
        labels = tuple(labels)
        index = {label: i for i, label in enumerate(labels)}
        if len(index) != len(labels):
            raise ValueError(f"duplicate labels in degree {degree}")
        if labels:
            self._by_degree[degree] = labels
            self._index[degree] = index
        else:
            self._by_degree.pop(degree, None)
            self._index.pop(degree, None)

    def __getitem__(self, degree: int) -> Tuple[Hashable, ...]:
        return self._by_degree.get(degree, ())

    def index(self, degree: int, label: Hashable) -> int:
        return self._index[degree][label]

    def contains(self, degree: int, label: Hashable) -> bool:
        return label in self._index.get(degree, {})

    def dim(self, degree: int) -> int:
        return len(self._by_degree.get(degree, ()))

    def degrees(self) -> List[int]:
        return sorted(self._by_degree)

    def items(self):
        for degree in self.degrees():
            yield degree, self._by_degree[degree]

    def __len__(self) -> int:
        return sum(len(v) for v in self._by_degree.values())

    def __eq__(self, other) -> bool:
        return isinstance(other, GradedBasis) and self._by_degree == other._by_degree

    def __repr__(self) -> str:
        dims = {d: len(v) for d, v in sorted(self._by_degree.items())}
        return f"GradedBasis({dims})"


@dataclass(frozen=True)
class SparseMatFp:
    """
    Sparse matrix over F_p; entries hold (row, col) -> nonzero residue.

    rows and cols optionally carry the basis labels indexing the target and
    source, so that composites can be checked against the bases they join.
    """
    p: int
    n_rows: int
    n_cols: int
    entries: Dict[Tuple[int, int], int] = field(default_factory=dict)
    rows: Optional[Tuple[Hashable, ...]] = field(default=None, compare=False)
    cols: Optional[Tuple[Hashable, ...]] = field(default=None, compare=False)

    def __post_init__(self):
        if self.rows is not None and len(self.rows) != self.n_rows:
            raise ValueError(f"{len(self.rows)} row labels for {self.n_rows} rows")
        if self.cols is not None and len(self.cols) != self.n_cols:
            raise ValueError(f"{len(self.cols)} column labels for {self.n_cols} columns")

    @classmethod
    def from_entries(cls, p: int, n_rows: int, n_cols: int,
                     entries: Iterable[Tuple[int, int, int]],
                     rows: Optional[Sequence[Hashable]] = None,
                     cols: Optional[Sequence[Hashable]] = None) -> "SparseMatFp":
        reduced: Dict[Tuple[int, int], int] = {}
        for r, c, v in entries:
            if not (0 <= r < n_rows and 0 <= c < n_cols):
                raise IndexError(f"entry ({r}, {c}) outside {n_rows}x{n_cols}")
            if (r, c) in reduced:
                raise ValueError(f"duplicate entry ({r}, {c})")
            v %= p
            if v:
                reduced[(r, c)] = v
        return cls(p, n_rows, n_cols, reduced,
                   tuple(rows) if rows is not None else None, tuple(cols) if cols is not None else None)

    @classmethod
    def from_dense(cls, p: int, rows: Sequence[Sequence[int]], n_cols: Optional[int] = None) -> "SparseMatFp":
        n_rows = len(rows)
        if n_cols is None:
            n_cols = len(rows[0]) if n_rows else 0
        return cls.from_entries(
            p, n_rows, n_cols,
            ((r, c, v) for r, row in enumerate(rows) for c, v in enumerate(row)),
        )

    @classmethod
    def zero(cls, p: int, n_rows: int, n_cols: int,
             rows: Optional[Sequence[Hashable]] = None, cols: Optional[Sequence[Hashable]] = None) -> "SparseMatFp":
        return cls.from_entries(p, n_rows, n_cols, (), rows, cols)

    @classmethod
    def identity(cls, p: int, n: int) -> "SparseMatFp":
        return cls(p, n, n, {(i, i): 1 for i in range(n)})

    @property
    def shape(self) -> Tuple[int, int]:
        return self.n_rows, self.n_cols

    def to_dense(self) -> np.ndarray:
        dense = np.zeros((self.n_rows, self.n_cols), dtype=np.int64)
        for (r, c), v in self.entries.items():
            dense[r, c] = v
        return dense

    def is_zero(self) -> bool:
        return not self.entries

    def compose(self, other: "SparseMatFp") -> "SparseMatFp":
        """self ∘ other"""
        if self.p != other.p:
            raise PrimeMismatchError(f"prime mismatch: {self.p} vs {other.p}")
        if self.n_cols != other.n_rows:
            raise ValueError(f"shape mismatch: {self.shape} ∘ {other.shape}")
        product = (self.to_dense() @ other.to_dense()) % self.p
        return SparseMatFp.from_dense(self.p, product.tolist(), other.n_cols)

    def apply(self, vector: Sequence[int]) -> List[int]:
        out = [0] * self.n_rows
        for (r, c), v in self.entries.items():
            out[r] = (out[r] + v * vector[c]) % self.p
        return out


def _rref(p: int, dense: np.ndarray) -> Tuple[np.ndarray, List[int]]:
    """Reduced row echelon form mod p; pivot is the first nonzero in column order"""
    a = dense.astype(np.int64) % p
    n_rows, n_cols = a.shape
    pivots: List[int] = []
    row = 0
    for col in range(n_cols):
        if row >= n_rows:
            break
        nonzero = np.nonzero(a[row:, col])[0]
        if nonzero.size == 0:
            continue
        pivot_row = row + int(nonzero[0])
        if pivot_row != row:
            a[[row, pivot_row]] = a[[pivot_row, row]]
        inv = pow(int(a[row, col]), p - 2, p)
        a[row] = (a[row] * inv) % p
        factors = a[:, col].copy()
        factors[row] = 0
        if factors.any():
            a = (a - np.outer(factors, a[row])) % p
        pivots.append(col)
        row += 1
    return a, pivots


def rank_of(m: SparseMatFp) -> int:
    if m.is_zero():
        return 0
    return len(_rref(m.p, m.to_dense())[1])


def _kernel_from_rref(p: int, reduced: np.ndarray, pivots: List[int], n_cols: int) -> List[List[int]]:
    pivot_set = set(pivots)
    kernel = []
    for free in range(n_cols):
        if free in pivot_set:
            continue
        vec = [0] * n_cols
        vec[free] = 1
        for r, pc in enumerate(pivots):
            vec[pc] = int(-reduced[r, free]) % p
        kernel.append(vec)
    return kernel


def row_reduce(m: SparseMatFp) -> Tuple[int, List[List[int]], List[List[int]]]:
    """
    Row-reduce m.

    Returns:
        (rank, kernel_basis, image_basis): kernel vectors live in the column space,
        image vectors are the columns of m at the pivot positions.
    """
    if m.n_rows == 0 or m.n_cols == 0 or m.is_zero():
        kernel = [[1 if i == j else 0 for i in range(m.n_cols)] for j in range(m.n_cols)]
        return 0, kernel, []
    dense = m.to_dense()
    reduced, pivots = _rref(m.p, dense)
    kernel = _kernel_from_rref(m.p, reduced, pivots, m.n_cols)
    image = [[int(x) for x in dense[:, c]] for c in pivots]
    return len(pivots), kernel, image


def homology_at(d_in: SparseMatFp, d_out: SparseMatFp) -> Tuple[int, List[List[int]]]:
    """
    Homology of  A --d_in--> B --d_out--> C  at B.

    Returns:
        (dim, representatives): representatives are kernel vectors spanning a
        complement of the image, chosen by deterministic pivoting.
    """
    if d_in.p != d_out.p:
        raise PrimeMismatchError(f"prime mismatch: {d_in.p} vs {d_out.p}")
    p = d_in.p
    if d_in.n_rows != d_out.n_cols:
        raise ValueError(f"shape mismatch: d_in {d_in.shape}, d_out {d_out.shape}")
    if d_in.rows is not None and d_out.cols is not None and d_in.rows != d_out.cols:
        position = next((i for i, (a, b) in enumerate(zip(d_in.rows, d_out.cols)) if a != b), None)
        raise BasisMismatchError(
            "basis mismatch: d_in lands in a different basis from the one d_out starts at",
            witness={"position": position},
        )
    middle = d_in.n_rows
    if not d_in.is_zero() and not d_out.is_zero():
        composite = d_out.compose(d_in)
        if not composite.is_zero():
            (r, c), v = min(composite.entries.items())
            raise NotAComplexError(
                f"not a complex: composite entry ({r}, {c}) = {v}",
                witness={"row": r, "col": c, "value": v},
            )
    _, kernel, _ = row_reduce(d_out)
    if not kernel:
        return 0, []
    image_cols = []
    if not d_in.is_zero():
        dense_in = d_in.to_dense()
        image_cols = [dense_in[:, c] for c in range(d_in.n_cols)]
    columns = image_cols + [np.array(k, dtype=np.int64) for k in kernel]
    stacked = np.stack(columns, axis=1) if columns else np.zeros((middle, 0), dtype=np.int64)
    _, pivots = _rref(p, stacked)
    n_image = len(image_cols)
    reps = [list(kernel[c - n_image]) for c in pivots if c >= n_image]
    return len(reps), reps


def solve_mod_p(p: int, a: np.ndarray, b: np.ndarray) -> Optional[np.ndarray]:
    """Solve a x = b over F_p; None when inconsistent"""
    a = np.asarray(a, dtype=np.int64) % p
    b = np.asarray(b, dtype=np.int64).reshape(-1, 1) % p
    n_cols = a.shape[1]
    reduced, pivots = _rref(p, np.hstack([a, b]))
    if n_cols in pivots:
        return None
    x = np.zeros(n_cols, dtype=np.int64)
    for r, pc in enumerate(pivots):
        x[pc] = reduced[r, n_cols]
    return x


def inverse_mod_p(p: int, a: np.ndarray) -> Optional[np.ndarray]:
    a = np.asarray(a, dtype=np.int64) % p
    n = a.shape[0]
    if a.shape != (n, n):
        return None
    reduced, pivots = _rref(p, np.hstack([a, np.eye(n, dtype=np.int64)]))
    if pivots[:n] != list(range(n)) or len(pivots) > n:
        return None
    return reduced[:, n:]


def format_matrix_dump(matrices: Dict[Tuple[int, int], SparseMatFp]) -> List[str]:
    """Lines "deg s row col value", lexicographically sorted, for (degree, s) keyed matrices"""
    rows = []
    for (degree, s), m in matrices.items():
        for (r, c), v in m.entries.items():
            rows.append((degree, s, r, c, v))
    return [f"{d} {s} {r} {c} {v}" for d, s, r, c, v in sorted(rows)]
