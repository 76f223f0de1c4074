"""Metered access to kernel (Gram) matrices.

The only sanctioned path to a kernel value is through a MeteredGram, which
hides the underlying point set and charges one unit per distinct unordered
entry (i, j) revealed. Re-reading a revealed entry is free in the distinct
count but still counted as a request. An optional budget caps the number of
distinct entries; exceeding it raises BudgetExhaustedError, which callers
may catch to emulate a query-bounded adversary.

Entries are counted as unordered pairs, the diagonal counting once, because
a re-read carries no new information. Values for the instances in this
package lie in {0, 1/2, 1, c0, c1} and small dot products, so float64 is
exact for all comparisons that matter.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import BudgetExhaustedError, ContractViolationError

LINEAR = "linear"
INDICATOR = "indicator"

# full() materializes a dense n x n matrix; refuse beyond this size
_FULL_REVEAL_MAX_N = 20_000


@dataclass(frozen=True)
class KernelSpec:
    """Kernel selector: plain dot product, or a two-valued kernel on basis vectors.

    The indicator kind models any kernel that takes a value c1 on a basis
    vector paired with itself and c0 < c1 on two distinct basis vectors
    (dot-product and distance kernels restricted to the standard basis all
    have this form).
    """

    kind: str
    c0: Optional[float] = None
    c1: Optional[float] = None

    def __post_init__(self):
        if self.kind == LINEAR:
            if self.c0 is not None or self.c1 is not None:
                raise ContractViolationError("linear kernel carries no parameters")
        elif self.kind == INDICATOR:
            if self.c0 is None or self.c1 is None:
                raise ContractViolationError("indicator kernel needs c0 and c1")
            if not self.c1 > self.c0:
                raise ContractViolationError(
                    f"indicator kernel requires c1 > c0, got c0={self.c0}, c1={self.c1}"
                )
        else:
            raise ContractViolationError(f"unknown kernel kind {self.kind!r}")

    @staticmethod
    def linear() -> "KernelSpec":
        return KernelSpec(LINEAR)

    @staticmethod
    def indicator(c0: float, c1: float) -> "KernelSpec":
        return KernelSpec(INDICATOR, c0=float(c0), c1=float(c1))


def _basis_index(x: np.ndarray) -> int:
    """Index of the 1 in a standard basis vector; error if x is not one."""
    x = np.asarray(x, dtype=np.float64)
    nz = np.flatnonzero(x)
    if nz.size != 1 or x[nz[0]] != 1.0:
        raise ContractViolationError("indicator kernel applies to standard basis vectors only")
    return int(nz[0])


def kernel_eval(spec: KernelSpec, x, y) -> float:
    """Evaluate the kernel on two explicit vectors."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise ContractViolationError(f"dimension mismatch: {x.shape} vs {y.shape}")
    if spec.kind == LINEAR:
        return float(np.dot(x, y))
    return spec.c1 if _basis_index(x) == _basis_index(y) else spec.c0


@dataclass(frozen=True)
class QueryReport:
    """Immutable snapshot of ledger counters."""

    distinct_entries: int
    total_requests: int
    budget: Optional[int]
    budget_exhausted: bool
    per_row: tuple

    def to_json(self) -> dict:
        return {
            "distinct_entries": self.distinct_entries,
            "total_requests": self.total_requests,
            "budget": self.budget,
            "budget_exhausted": self.budget_exhausted,
        }


class QueryLedger:
    """Audit record for one gram: distinct entries, requests, per-row touches.

    Counters are monotone over the gram's lifetime. A key i * n + j (i <= j)
    identifies each unordered pair; once the full matrix has been revealed
    the pair set is dropped and replaced by an all-revealed flag.
    """

    def __init__(self, n: int, budget: Optional[int] = None):
        if budget is not None and budget < 0:
            raise ContractViolationError("budget must be nonnegative")
        self.n = n
        self.budget = budget
        self.distinct_entries = 0
        self.total_requests = 0
        self.per_row = np.zeros(n, dtype=np.int64)
        self.budget_exhausted = False
        self._revealed: Optional[set] = set()

    # -- bookkeeping ---------------------------------------------------

    def _key(self, i: int, j: int) -> int:
        a, b = (i, j) if i <= j else (j, i)
        return a * self.n + b

    def is_revealed(self, i: int, j: int) -> bool:
        if self._revealed is None:
            return True
        return self._key(i, j) in self._revealed

    def charge_scalar(self, i: int, j: int) -> bool:
        """Count one request; returns True if the pair is newly revealed."""
        self.total_requests += 1
        if self._revealed is None:
            return False
        key = self._key(i, j)
        if key in self._revealed:
            return False
        if self.budget is not None and self.distinct_entries + 1 > self.budget:
            self.budget_exhausted = True
            self.total_requests -= 1
            raise BudgetExhaustedError(
                f"budget of {self.budget} distinct entries exhausted at ({i}, {j})"
            )
        self._revealed.add(key)
        self.distinct_entries += 1
        self.per_row[i] += 1
        if j != i:
            self.per_row[j] += 1
        return True

    def charge_block(self, rows: np.ndarray, cols: np.ndarray):
        """Count a rectangular read; atomic with respect to the budget.

        The request count grows by rows*cols; the distinct count only by the
        previously unseen unordered pairs in the rectangle. If the fresh
        pairs would exceed the budget, nothing in the block is revealed.
        """
        self.total_requests += int(rows.size) * int(cols.size)
        if self._revealed is None:
            return
        ii = np.repeat(rows, cols.size)
        jj = np.tile(cols, rows.size)
        lo = np.minimum(ii, jj).astype(np.int64)
        hi = np.maximum(ii, jj).astype(np.int64)
        keys = np.unique(lo * self.n + hi)
        fresh = [int(k) for k in keys if int(k) not in self._revealed]
        if self.budget is not None and self.distinct_entries + len(fresh) > self.budget:
            self.budget_exhausted = True
            self.total_requests -= int(rows.size) * int(cols.size)
            raise BudgetExhaustedError(
                f"block read of {len(fresh)} fresh entries exceeds budget {self.budget}"
            )
        self._revealed.update(fresh)
        self.distinct_entries += len(fresh)
        if fresh:
            fresh_arr = np.asarray(fresh, dtype=np.int64)
            fi = fresh_arr // self.n
            fj = fresh_arr % self.n
            np.add.at(self.per_row, fi, 1)
            off = fi != fj
            np.add.at(self.per_row, fj[off], 1)

    def charge_full(self):
        total = self.n * (self.n + 1) // 2
        self.total_requests += self.n * self.n
        if self._revealed is None:
            return
        if self.budget is not None and total > self.budget:
            self.budget_exhausted = True
            self.total_requests -= self.n * self.n
            raise BudgetExhaustedError(
                f"full reveal of {total} entries exceeds budget {self.budget}"
            )
        self._revealed = None
        self.distinct_entries = total
        self.per_row[:] = self.n

    def report(self) -> QueryReport:
        return QueryReport(
            distinct_entries=int(self.distinct_entries),
            total_requests=int(self.total_requests),
            budget=self.budget,
            budget_exhausted=self.budget_exhausted,
            per_row=tuple(int(c) for c in self.per_row),
        )


class MeteredGram:
    """Kernel matrix of a hidden point set, readable only entry by entry.

    points: (n, d) array, one hidden point per row. All reads go through
    query / query_block / full, which update a shared ledger. Revealed
    scalar values are cached; a cached re-read costs a request but no
    distinct entry. Safe for concurrent readers: ledger updates and cache
    insertion hold a lock, so final counts match some serialization.
    """

    def __init__(self, points, spec: KernelSpec = KernelSpec.linear(),
                 budget: Optional[int] = None):
        pts = np.asarray(points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[0] == 0:
            raise ContractViolationError("points must be a nonempty (n, d) array")
        self._points = pts
        self.spec = spec
        self.n = pts.shape[0]
        self.dim = pts.shape[1]
        self.ledger = QueryLedger(self.n, budget)
        self._cache: dict = {}
        self._lock = threading.Lock()
        if spec.kind == INDICATOR:
            # all points must be basis vectors; remember their indices
            self._basis = np.empty(self.n, dtype=np.int64)
            for i in range(self.n):
                self._basis[i] = _basis_index(pts[i])
        else:
            self._basis = None

    # -- evaluation (no metering) ---------------------------------------

    def _eval_scalar(self, i: int, j: int) -> float:
        if self.spec.kind == LINEAR:
            return float(np.dot(self._points[i], self._points[j]))
        return self.spec.c1 if self._basis[i] == self._basis[j] else self.spec.c0

    def _eval_block(self, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
        if self.spec.kind == LINEAR:
            return self._points[rows] @ self._points[cols].T
        same = self._basis[rows][:, None] == self._basis[cols][None, :]
        return np.where(same, self.spec.c1, self.spec.c0)

    def _check_index(self, i: int):
        if not 0 <= i < self.n:
            raise ContractViolationError(f"index {i} out of range [0, {self.n})")

    # -- metered access --------------------------------------------------

    def query(self, i: int, j: int) -> float:
        """One kernel entry; charges a distinct entry on first touch."""
        i, j = int(i), int(j)
        self._check_index(i)
        self._check_index(j)
        key = (i, j) if i <= j else (j, i)
        with self._lock:
            cached = self._cache.get(key)
            if cached is not None:
                self.ledger.charge_scalar(i, j)
                return cached
            self.ledger.charge_scalar(i, j)
            value = self._eval_scalar(i, j)
            self._cache[key] = value
            return value

    def query_block(self, rows, cols) -> np.ndarray:
        """Rectangular block of entries, vectorized. Atomic under a budget."""
        rows = np.atleast_1d(np.asarray(rows, dtype=np.int64))
        cols = np.atleast_1d(np.asarray(cols, dtype=np.int64))
        if rows.size == 0 or cols.size == 0:
            return np.zeros((rows.size, cols.size))
        for idx in (int(rows.min()), int(rows.max()), int(cols.min()), int(cols.max())):
            self._check_index(idx)
        with self._lock:
            self.ledger.charge_block(rows, cols)
            return self._eval_block(rows, cols)

    def full(self) -> np.ndarray:
        """The entire matrix; ledger jumps to n(n+1)/2 distinct entries."""
        if self.n > _FULL_REVEAL_MAX_N:
            raise ContractViolationError(
                f"refusing to materialize a {self.n} x {self.n} matrix"
            )
        with self._lock:
            self.ledger.charge_full()
            idx = np.arange(self.n)
            return self._eval_block(idx, idx)

    def ledger_report(self) -> QueryReport:
        with self._lock:
            return self.ledger.report()


def ledger_report(gram: MeteredGram) -> QueryReport:
    """Snapshot of the gram's counters; later queries do not mutate it."""
    return gram.ledger_report()
