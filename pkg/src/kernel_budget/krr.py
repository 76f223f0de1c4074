"""Kernel ridge regression: exact and approximate solvers, effective
dimension, the hard-instance closed form, and the rank-one indicator path.

The regularized objective ||K a - z||^2 + lam * a' K a has minimizer
a = (K + lam I)^{-1} z. Everything here is dense, factored through a
symmetric positive-definite Cholesky solve; desk scale (n <= 5000) needs
no iterative machinery.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import ContractViolationError, SingularSystemError
from .instances import CLASS_S1, CLASS_S2, KrrInstance
from .rng import stream

_SYM_TOL = 1e-8


@dataclass
class KrrSolution:
    """Solver output: coefficients plus the residual and objective at them."""

    alpha: np.ndarray
    lam: float
    residual_norm: float
    objective: float

    def to_json(self) -> dict:
        return {
            "lambda": self.lam,
            "alpha": [float(a) for a in self.alpha],
            "objective": self.objective,
            "residual_norm": self.residual_norm,
        }


def _check_symmetric(K: np.ndarray, what: str = "K"):
    skew = np.abs(K - K.T).max()
    scale = 1.0 + np.abs(K).max()
    if skew > _SYM_TOL * scale:
        raise ContractViolationError(f"{what} is not symmetric (max skew {skew:.3g})")


def _solution_from_alpha(K: np.ndarray, z: np.ndarray, lam: float,
                         alpha: np.ndarray) -> KrrSolution:
    resid = K @ alpha - z
    return KrrSolution(
        alpha=alpha,
        lam=float(lam),
        residual_norm=float(np.linalg.norm(resid)),
        objective=float(resid @ resid + lam * (alpha @ (K @ alpha))),
    )


def solve_exact(K, z, lam: float) -> KrrSolution:
    """Minimize the ridge objective: alpha = (K + lam I)^{-1} z."""
    K = np.asarray(K, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    if lam <= 0:
        raise ContractViolationError("lam must be positive")
    if K.ndim != 2 or K.shape[0] != K.shape[1] or K.shape[0] != z.shape[0]:
        raise ContractViolationError("K must be square and conform with z")
    _check_symmetric(K)
    reg = K + lam * np.eye(K.shape[0])
    cho = scipy.linalg.cho_factor(reg, lower=True, check_finite=False)
    alpha = scipy.linalg.cho_solve(cho, z, check_finite=False)
    return _solution_from_alpha(K, z, lam, alpha)


def d_eff(eigenvalues, lam: float) -> float:
    """Effective statistical dimension sum(s / (s + lam)) over eigenvalues s."""
    if lam <= 0:
        raise ContractViolationError("lam must be positive")
    s = np.asarray(eigenvalues, dtype=np.float64)
    if (s < -1e-8).any():
        raise ContractViolationError("eigenvalues must be nonnegative")
    s = np.clip(s, 0.0, None)
    return float(np.sum(s / (s + lam)))


def d_eff_from_gram(K, lam: float) -> float:
    """trace(K (K + lam I)^{-1}), computed through the eigenvalues of K."""
    K = np.asarray(K, dtype=np.float64)
    _check_symmetric(K)
    return d_eff(np.linalg.eigvalsh(K), lam)


@dataclass
class SpectralApprox:
    """An approximation K_tilde together with a certified one-sided bound b
    such that K - K_tilde <= b * I in the semidefinite order. The bound is
    measured on the instance at build time, never assumed."""

    k_tilde: np.ndarray
    bound: float


def uniform_nystrom_approx(K, n_landmarks: int, seed: int = 0) -> SpectralApprox:
    """Low-rank approximation from uniformly sampled landmark columns.

    K_tilde = C W^+ C' with C the sampled columns and W the landmark block,
    so K - K_tilde is positive semidefinite (a Schur complement); the
    certified bound is its measured top eigenvalue.
    """
    K = np.asarray(K, dtype=np.float64)
    _check_symmetric(K)
    n = K.shape[0]
    if not 1 <= n_landmarks <= n:
        raise ContractViolationError("n_landmarks must be in [1, n]")
    rng = stream(seed, "nystrom")
    landmarks = np.sort(rng.choice(n, size=n_landmarks, replace=False))
    C = K[:, landmarks]
    W = K[np.ix_(landmarks, landmarks)]
    w_vals, w_vecs = np.linalg.eigh(W)
    tol = max(1e-12, 1e-12 * abs(w_vals).max()) if w_vals.size else 0.0
    keep = w_vals > tol
    if keep.any():
        inv = (w_vecs[:, keep] / w_vals[keep]) @ w_vecs[:, keep].T
        k_tilde = C @ inv @ C.T
    else:
        k_tilde = np.zeros_like(K)
    k_tilde = 0.5 * (k_tilde + k_tilde.T)
    bound = float(np.linalg.eigvalsh(K - k_tilde).max())
    return SpectralApprox(k_tilde=k_tilde, bound=max(bound, 0.0))


def approx_solve_spectral(approx: SpectralApprox, z, lam: float) -> KrrSolution:
    """Solve against the approximation: alpha_hat = (K_tilde + lam I)^{-1} z.

    Whenever the certificate bound <= lam * eps holds (and K_tilde is PSD),
    alpha_hat is within eps relative distance of the exact minimizer.
    Residual and objective in the result are measured against K_tilde.
    """
    if lam <= 0:
        raise ContractViolationError("lam must be positive")
    kt = np.asarray(approx.k_tilde, dtype=np.float64)
    _check_symmetric(kt, "K_tilde")
    z = np.asarray(z, dtype=np.float64)
    alpha = np.linalg.solve(kt + lam * np.eye(kt.shape[0]), z)
    return _solution_from_alpha(kt, z, lam, alpha)


def check_guarantee(alpha_hat, alpha_opt, eps: float) -> bool:
    """||alpha_hat - alpha_opt|| <= eps * ||alpha_opt|| (inclusive)."""
    a = np.asarray(alpha_hat, dtype=np.float64)
    b = np.asarray(alpha_opt, dtype=np.float64)
    if a.shape != b.shape:
        raise ContractViolationError("vectors must have the same length")
    return bool(np.linalg.norm(a - b) <= eps * np.linalg.norm(b))


def hard_instance_optimum(instance: KrrInstance) -> np.ndarray:
    """Closed-form exact minimizer on a generated ridge hard instance.

    Point i shares its basis direction with n_{j_i} - 1 others, so its
    coordinate is 1 / (n_{j_i} + lam). Each augmented point sits alone in a
    fresh direction with squared norm (n/k)^2, giving 1 / ((n/k)^2 + lam).
    """
    counts = instance.counts
    lam = instance.lam
    alpha = 1.0 / (counts[instance.basis_index] + lam)
    if instance.augmented:
        scale = instance.n / instance.k
        extra = np.full(round(instance.k), 1.0 / (scale * scale + lam))
        alpha = np.concatenate([alpha, extra])
    return alpha


def classification_midpoint(eps: float) -> float:
    """Threshold between the two ideal scaled coordinate values."""
    return 0.5 * (1.0 / (1.0 + eps) + 1.0 / (1.0 + 2.0 * eps))


def classify_rows(alpha_hat, n: int, k: float, eps: float) -> np.ndarray:
    """Label each row S1 or S2 from an (approximate) solve.

    Scaled by n/k, the ideal coordinate values are 1/(1+eps) for rows drawn
    from the S1 half and 1/(1+2 eps) for the S2 half; rows above the
    midpoint of those two values are labeled S1. The midpoint maximizes the
    margin symmetrically, and any threshold strictly between the ideals
    works given the size of the gap.
    """
    scaled = (n / k) * np.asarray(alpha_hat, dtype=np.float64)
    return np.where(scaled > classification_midpoint(eps), CLASS_S1, CLASS_S2)


def indicator_solve(G, z, lam: float, c0: float, c1: float) -> KrrSolution:
    """Ridge solve for K = c0 * ones + (c1 - c0) * G without assembling K.

    The all-ones offset is a rank-one update of (c1 - c0) G + lam I, so with
    A = (c1 - c0) G + lam I and C = c0 * 1' A^{-1} 1,

        alpha = A^{-1} z - A^{-1} 1 * (c0 * 1' A^{-1} z) / (1 + C),

    which for z = 1 collapses to (1 / ((c1 - c0)(1 + C))) *
    (G + (lam / (c1 - c0)) I)^{-1} z. The reported residual and objective
    are measured against the assembled K.
    """
    if not c1 > c0:
        raise ContractViolationError(f"need c1 > c0, got c0={c0}, c1={c1}")
    if lam <= 0:
        raise ContractViolationError("lam must be positive")
    G = np.asarray(G, dtype=np.float64)
    _check_symmetric(G, "G")
    z = np.asarray(z, dtype=np.float64)
    n = G.shape[0]
    A = (c1 - c0) * G + lam * np.eye(n)
    cho = scipy.linalg.cho_factor(A, lower=True, check_finite=False)
    ones = np.ones(n)
    w = scipy.linalg.cho_solve(cho, ones, check_finite=False)
    y = scipy.linalg.cho_solve(cho, z, check_finite=False)
    denom = 1.0 + c0 * (ones @ w)
    if abs(denom) < 1e-12:
        raise SingularSystemError("rank-one update denominator vanished")
    alpha = y - w * (c0 * (ones @ y) / denom)
    K = c0 * np.ones((n, n)) + (c1 - c0) * G
    return _solution_from_alpha(K, z, lam, alpha)
