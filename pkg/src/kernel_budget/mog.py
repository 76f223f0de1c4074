"""Query-efficient clustering of isotropic Gaussian mixtures.

The pipeline spends its kernel queries in two places: a t x t bootstrap
block, factored to recover t points up to a common rotation, and 2m
queries per remaining point to push it through a sketch whose rows are
rescaled differences of same-mean bootstrap points (each such difference
is an isotropic Gaussian, so the sketch is a Gaussian projection the
oracle can apply without ever seeing coordinates). Assignment decisions
happen in the sketched space via midpoint sign tests against projected
mean estimates.

Everything downstream of the bootstrap depends on inner products only, so
rotating the hidden point set changes nothing.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from math import ceil, log, sqrt
from typing import Optional

import numpy as np

from .errors import (ContractViolationError, DegenerateRowError,
                     DegenerateSketchError, EstimationFailureError,
                     NumericalDegeneracyError, PipelineStageError)
from .kkmc import Clustering
from .oracle import MeteredGram, QueryReport

FIRST = 1
SECOND = 2

# Gaussian-mean test threshold constant: separation^2 >= 144 sigma^2 ln(1/delta)
# keeps sigma at most a twelfth of the separation, which the midpoint sign
# test needs even with means known only to within sigma.
PAIR_TEST_SEPARATION_CONST = 144.0

DEFAULT_SKETCH_CONST = 8.0
DEFAULT_MEAN_SAMPLE_CONST = 2.0


@dataclass
class Bootstrap:
    """Points recovered from the leading t x t Gram block, in an arbitrary
    rotation of the original frame."""

    t: int
    points: np.ndarray                     # (t, t), row i is recovered point i
    labels: Optional[np.ndarray] = None
    means: Optional[np.ndarray] = None     # (k, t) estimated means, same frame


def bootstrap_extract(gram: MeteredGram, t: int) -> Bootstrap:
    """Read the leading t x t block and factor it into explicit points.

    Eigenvalues are clipped at zero; anything below -1e-8 (relative) means
    the block is not a Gram matrix to working precision and is an error.
    Charges exactly t(t+1)/2 fresh entries on an untouched gram.
    """
    if not 1 <= t <= gram.n:
        raise ContractViolationError(f"t = {t} out of range [1, {gram.n}]")
    idx = np.arange(t)
    block = gram.query_block(idx, idx)
    block = 0.5 * (block + block.T)
    vals, vecs = np.linalg.eigh(block)
    floor = -1e-8 * max(1.0, float(vals.max(initial=0.0)))
    if vals.min() < floor:
        raise NumericalDegeneracyError(
            f"bootstrap block has eigenvalue {vals.min():.3g} below tolerance")
    vals = np.clip(vals, 0.0, None)
    points = vecs * np.sqrt(vals)
    return Bootstrap(t=t, points=points)


def mean_sample_size(k: int, d: int, c: float = DEFAULT_MEAN_SAMPLE_CONST) -> int:
    """Labeled bootstrap sample large enough for sigma-accurate empirical means."""
    return ceil(c * k * (d + log(max(k, 2))))


def min_component_count(k: int, d: int) -> int:
    """Fewest labeled points per component tolerated by estimate_means."""
    return max(2, ceil(d + log(max(k, 2))))


def estimate_means(points, labels, k: int, min_count: int) -> np.ndarray:
    """Per-component empirical means over labeled sample points."""
    pts = np.asarray(points, dtype=np.float64)
    lab = np.asarray(labels)
    if lab.shape[0] != pts.shape[0]:
        raise ContractViolationError("labels must match points")
    counts = np.bincount(lab, minlength=k)
    if (counts < min_count).any():
        short = np.flatnonzero(counts < min_count)
        raise EstimationFailureError(
            f"components {short.tolist()} have fewer than {min_count} labeled points")
    means = np.zeros((k, pts.shape[1]))
    for ell in range(k):
        means[ell] = pts[lab == ell].mean(axis=0)
    return means


def certify_mean_accuracy(recovered_points, true_points, est_means, true_means,
                          sigma: float) -> bool:
    """Harness-side check that estimated means are within sigma of truth.

    The recovered frame differs from the original by an unknown isometry;
    align by orthogonal Procrustes on the bootstrap points, map the true
    means through it, and compare.
    """
    Y = np.asarray(recovered_points, dtype=np.float64)
    X = np.asarray(true_points, dtype=np.float64)
    M = X.T @ Y
    u, _, vt = np.linalg.svd(M, full_matrices=False)
    q = u @ vt
    mapped = np.asarray(true_means, dtype=np.float64) @ q
    err = np.linalg.norm(np.asarray(est_means) - mapped, axis=1)
    return bool((err <= sigma + 1e-6).all())


def pair_test(x_rep, mu1_hat, mu2_hat) -> int:
    """Decide which of two estimated means generated x: FIRST iff
    (x - c) . (mu1 - c) > 0 with c the midpoint; an exact zero goes SECOND."""
    x = np.asarray(x_rep, dtype=np.float64)
    m1 = np.asarray(mu1_hat, dtype=np.float64)
    m2 = np.asarray(mu2_hat, dtype=np.float64)
    c = 0.5 * (m1 + m2)
    return FIRST if float((x - c) @ (m1 - c)) > 0.0 else SECOND


def assign_by_pair_tests(X, means):
    """All-pairs sign tests: row i gets the unique mean beating every other.

    Returns (assignment, confident) where confident[i] is False when no
    mean won all its tests and the nearest mean was used instead.
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    means = np.asarray(means, dtype=np.float64)
    k = means.shape[0]
    if k == 1:
        return np.zeros(X.shape[0], dtype=np.int64), np.ones(X.shape[0], dtype=bool)
    wins = np.ones((X.shape[0], k), dtype=bool)
    for j in range(k):
        for ell in range(k):
            if ell == j:
                continue
            c = 0.5 * (means[j] + means[ell])
            direction = means[j] - c
            wins[:, j] &= (X - c) @ direction > 0.0
    n_wins = wins.sum(axis=1)
    confident = n_wins == 1
    assignment = np.argmax(wins, axis=1).astype(np.int64)
    if (~confident).any():
        dist = ((X[~confident, None, :] - means[None, :, :]) ** 2).sum(axis=2)
        assignment[~confident] = np.argmin(dist, axis=1)
    return assignment, confident


def sketch_dimension(n: int, k: int, eps: float, c_sketch: float = DEFAULT_SKETCH_CONST,
                     delta_exponent: int = 3) -> int:
    """Rows needed to separate all points from all wrong means at once:
    ceil(c_sketch * (1/eps) * ln((n k)^delta_exponent))."""
    return ceil(c_sketch * (1.0 / eps) * delta_exponent * log(n * k))


def separation_thresholds(n: int, d: int, k: int, eps: float, sigma: float,
                          m: int, delta_exponent: int = 3) -> dict:
    """Mean-separation floors under which each pipeline stage is reliable.

    mean_learning covers recovering means to within sigma; pair_test covers
    the bootstrap same-mean pairing at failure rate (2m+k)^-delta_exponent;
    sketched_regime is the scale below which misassignment is cost-free.
    """
    c = PAIR_TEST_SEPARATION_CONST
    mean_learning = sigma * sqrt(c * log(max(k, 2)))
    pair = sigma * sqrt(c * delta_exponent * log(2 * m + k))
    sketched = sigma * sqrt(eps * d)
    return {
        "mean_learning": mean_learning,
        "pair_test": pair,
        "sketched_regime": sketched,
        "max": max(mean_learning, pair, sketched),
    }


@dataclass
class SketchOperator:
    """m x t operator whose rows are same-mean bootstrap differences divided
    by sigma * sqrt(2), making each row standard Gaussian. The SVD of the
    rows is kept so sketched vectors can be pulled back onto the operator's
    row space: S x = U diag(s) (Vt x) gives Vt x = diag(1/s) U' (S x)."""

    m: int
    pairs: np.ndarray                      # (m, 2) source point indices
    scale: float
    rows: np.ndarray = field(repr=False)   # (m, t)
    _u: np.ndarray = field(repr=False)
    _s: np.ndarray = field(repr=False)
    _vt: np.ndarray = field(repr=False)

    @property
    def source_indices(self) -> np.ndarray:
        return self.pairs.reshape(-1)

    def project_sketched(self, sx) -> np.ndarray:
        """Row-space coordinates from sketched values: diag(1/s) U' sx."""
        sx = np.asarray(sx, dtype=np.float64)
        return (self._u.T @ sx) / (self._s if sx.ndim == 1 else self._s[:, None])

    def project_direct(self, v) -> np.ndarray:
        """Row-space coordinates of an explicit frame vector: Vt v."""
        return self._vt @ np.asarray(v, dtype=np.float64)


def build_sketch(points, pairs, sigma: float) -> SketchOperator:
    """Assemble the operator from same-mean index pairs into `points`."""
    if sigma <= 0:
        raise ContractViolationError("sigma must be positive to scale sketch rows")
    pts = np.asarray(points, dtype=np.float64)
    pairs = np.asarray(pairs, dtype=np.int64)
    if pairs.ndim != 2 or pairs.shape[1] != 2 or pairs.shape[0] == 0:
        raise ContractViolationError("pairs must be a nonempty (m, 2) array")
    flat = pairs.reshape(-1)
    if np.unique(flat).size != flat.size:
        raise ContractViolationError("sketch source pairs must be disjoint")
    scale = sigma * sqrt(2.0)
    rows = (pts[pairs[:, 0]] - pts[pairs[:, 1]]) / scale
    norms = np.linalg.norm(rows, axis=1)
    if (norms == 0.0).any():
        bad = int(np.flatnonzero(norms == 0.0)[0])
        raise DegenerateRowError(f"pair {pairs[bad].tolist()} gives a zero row")
    u, s, vt = np.linalg.svd(rows, full_matrices=False)
    if s.min() <= 1e-10 * s.max():
        raise DegenerateSketchError("sketch rows are linearly dependent")
    return SketchOperator(m=pairs.shape[0], pairs=pairs, scale=scale,
                          rows=rows, _u=u, _s=s, _vt=vt)


@dataclass
class SketchedPoint:
    index: int
    values: np.ndarray                     # (m,) sketched coordinates
    queries_spent: int


def sketch_apply(gram: MeteredGram, sketch: SketchOperator, i: int) -> SketchedPoint:
    """Sketch one hidden point through the oracle: row ell of the result is
    (K[a_ell, i] - K[b_ell, i]) / scale, two queries per row."""
    i = int(i)
    if i in set(int(v) for v in sketch.source_indices):
        raise ContractViolationError(f"point {i} is a sketch source")
    before = gram.ledger_report().distinct_entries
    col = gram.query_block(sketch.source_indices, np.array([i]))[:, 0]
    spent = gram.ledger_report().distinct_entries - before
    pairs = sketch.pairs
    lookup = {int(v): pos for pos, v in enumerate(sketch.source_indices)}
    va = col[[lookup[int(p)] for p in pairs[:, 0]]]
    vb = col[[lookup[int(p)] for p in pairs[:, 1]]]
    return SketchedPoint(index=i, values=(va - vb) / sketch.scale, queries_spent=spent)


def sketch_apply_many(gram: MeteredGram, sketch: SketchOperator, indices) -> np.ndarray:
    """Sketch many points in one block read; returns (m, len(indices))."""
    idx = np.asarray(indices, dtype=np.int64)
    cols = gram.query_block(sketch.source_indices, idx)
    pairs = sketch.pairs
    lookup = {int(v): pos for pos, v in enumerate(sketch.source_indices)}
    a_pos = [lookup[int(p)] for p in pairs[:, 0]]
    b_pos = [lookup[int(p)] for p in pairs[:, 1]]
    return (cols[a_pos] - cols[b_pos]) / sketch.scale


def sketched_assign(sketch: SketchOperator, sx, means) -> tuple:
    """Pick a center for a sketched point: project both the point and the
    estimated means onto the sketch row space, then run the all-pairs sign
    tests there. Returns (center index, fallback flag); fallback means no
    center won every test and the nearest projected mean was used."""
    means = np.asarray(means, dtype=np.float64)
    values = sx.values if isinstance(sx, SketchedPoint) else np.asarray(sx)
    x_proj = sketch.project_sketched(values)
    proj_means = np.vstack([sketch.project_direct(mu) for mu in means])
    assignment, confident = assign_by_pair_tests(x_proj[None, :], proj_means)
    return int(assignment[0]), not bool(confident[0])


@dataclass
class MogResult:
    clustering: Clustering
    report: QueryReport
    m: int
    t: int
    flags: dict
    stage_timings: dict
    cost: Optional[float] = None
    bootstrap: Optional[Bootstrap] = None
    sketch: Optional[SketchOperator] = None

    def to_json(self) -> dict:
        return {
            "assignment": self.clustering.to_json(),
            "cost": self.cost,
            "query_report": self.report.to_json(),
            "stage_timings": self.stage_timings,
        }


def _pair_up(indices: np.ndarray) -> list:
    return [(int(indices[2 * i]), int(indices[2 * i + 1]))
            for i in range(indices.size // 2)]


def cluster_mog(gram: MeteredGram, k: int, eps: float, sigma: float, d: int,
                bootstrap_labels, c_sketch: float = DEFAULT_SKETCH_CONST,
                c_mean: float = DEFAULT_MEAN_SAMPLE_CONST, delta_exponent: int = 3,
                m: Optional[int] = None, t: Optional[int] = None) -> MogResult:
    """Full pipeline: bootstrap, estimate means, pick same-mean pairs, sketch
    everything else, and assign by sketched sign tests.

    bootstrap_labels supplies ground-truth component labels for the leading
    points, standing in for a black-box mean estimator; only the first t are
    used. Stage failures raise PipelineStageError tagged with the stage.
    On an untouched gram the ledger ends at exactly
    t(t+1)/2 + 2 m (n - t) distinct entries (no sketching when k = 1).
    """
    n = gram.n
    timings = {}
    flags = {"fallback_count": 0, "pair_test_confident": None, "t_squared_exceeds_n": None}

    if m is None:
        m = sketch_dimension(n, k, eps, c_sketch, delta_exponent) if k > 1 else 0
    if t is None:
        t = max(mean_sample_size(k, d, c_mean), 2 * m + k, d)
    if t > n:
        raise PipelineStageError("configure", f"bootstrap size t = {t} exceeds n = {n}")
    flags["t_squared_exceeds_n"] = t * t > n
    labels = np.asarray(bootstrap_labels)
    if labels.shape[0] < t:
        raise PipelineStageError("configure", f"need labels for {t} bootstrap points")
    if sigma <= 0 and k > 1:
        raise PipelineStageError("configure", "sigma = 0 degenerates every sketch row")

    tic = time.perf_counter()
    try:
        boot = bootstrap_extract(gram, t)
    except (NumericalDegeneracyError, ContractViolationError) as e:
        raise PipelineStageError("bootstrap", str(e)) from e
    boot.labels = labels[:t]
    timings["bootstrap"] = time.perf_counter() - tic

    tic = time.perf_counter()
    try:
        means = estimate_means(boot.points, boot.labels, k, min_component_count(k, d))
    except EstimationFailureError as e:
        raise PipelineStageError("estimate-means", str(e)) from e
    boot.means = means
    timings["estimate_means"] = time.perf_counter() - tic

    if k == 1:
        clustering = Clustering(np.zeros(n, dtype=np.int64))
        return MogResult(clustering=clustering, report=gram.ledger_report(),
                         m=0, t=t, flags=flags, stage_timings=timings, bootstrap=boot)

    tic = time.perf_counter()
    boot_assign, confident = assign_by_pair_tests(boot.points, means)
    flags["pair_test_confident"] = int(confident.sum())
    pairs = []
    for ell in range(k):
        members = np.flatnonzero((boot_assign == ell) & confident)
        pairs.extend(_pair_up(members))
    if len(pairs) < m:
        raise PipelineStageError(
            "pairing", f"only {len(pairs)} same-mean pairs available, need {m}")
    pairs = np.asarray(sorted(pairs[:m]), dtype=np.int64)
    try:
        sketch = build_sketch(boot.points, pairs, sigma)
    except (DegenerateRowError, DegenerateSketchError) as e:
        raise PipelineStageError("sketch", str(e)) from e
    timings["sketch_build"] = time.perf_counter() - tic

    tic = time.perf_counter()
    sources = set(int(v) for v in sketch.source_indices)
    remaining = np.array([i for i in range(n) if i not in sources], dtype=np.int64)
    sketched = sketch_apply_many(gram, sketch, remaining)
    proj_means = np.vstack([sketch.project_direct(mu) for mu in means])
    proj_x = sketch.project_sketched(sketched).T
    rem_assign, rem_confident = assign_by_pair_tests(proj_x, proj_means)
    flags["fallback_count"] = int((~rem_confident).sum())
    timings["sketch_assign"] = time.perf_counter() - tic

    assignment = np.empty(n, dtype=np.int64)
    assignment[remaining] = rem_assign
    for (a, b), owner in zip(pairs, boot_assign[pairs[:, 0]]):
        assignment[a] = owner
        assignment[b] = owner
    return MogResult(clustering=Clustering(assignment), report=gram.ledger_report(),
                     m=m, t=t, flags=flags, stage_timings=timings,
                     bootstrap=boot, sketch=sketch)
