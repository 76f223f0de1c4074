"""Seeded generators for the hard input distributions and the Gaussian mixture.

Every instance carries its hidden ground truth (basis indices, blocks,
labels, counts) alongside a MeteredGram, so experiments read kernel values
through the oracle while tests verify against the truth. Generators are
pure functions of (parameters, seed) and safe to call in parallel with
distinct seeds.

Advisory asymptotic preconditions (such as J^2 = O(n)) surface as warnings,
not errors: desk-scale runs deliberately probe small regimes.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from math import comb
from typing import Optional

import numpy as np

from .errors import ContractViolationError, GenerationFailureError
from .oracle import INDICATOR, KernelSpec, MeteredGram
from .rng import stream

CLASS_S1 = 1
CLASS_S2 = 2


def _one_hot(indices: np.ndarray, dim: int, scales: Optional[np.ndarray] = None) -> np.ndarray:
    pts = np.zeros((indices.size, dim))
    pts[np.arange(indices.size), indices] = 1.0 if scales is None else scales
    return pts


@dataclass
class KrrInstance:
    """Ridge-regression hard input: n basis-vector draws plus closed-form truth.

    Points are standard basis vectors e_j in dimension 3J/4. Half the draws
    come uniformly from the first J/2 indices (class S1) and half uniformly
    from the next J/4 (class S2), so S2 indices are drawn twice as often.
    The regression target is all ones and the regularizer is n/k with
    k = eps * J. The augmented variant appends k extra points (n/k) e_j in
    k fresh directions, each alone in its own coordinate.
    """

    n: int
    J: int
    eps: float
    seed: int
    basis_index: np.ndarray          # per-point j_i in [0, 3J/4)
    augmented: bool
    spec: KernelSpec
    gram: MeteredGram = field(repr=False)
    points: np.ndarray = field(repr=False)

    @property
    def k(self) -> float:
        return self.eps * self.J

    @property
    def lam(self) -> float:
        return self.n / self.k

    @property
    def n_total(self) -> int:
        return self.n + (round(self.k) if self.augmented else 0)

    @property
    def z(self) -> np.ndarray:
        return np.ones(self.n_total)

    @property
    def counts(self) -> np.ndarray:
        """Copies of each basis vector among the n original draws."""
        return np.bincount(self.basis_index, minlength=3 * self.J // 4)

    @property
    def classes(self) -> np.ndarray:
        """CLASS_S1 where j_i < J/2, else CLASS_S2 (original points only)."""
        return np.where(self.basis_index < self.J // 2, CLASS_S1, CLASS_S2)

    def to_params(self) -> dict:
        return {
            "type": "krr",
            "n": self.n,
            "k_or_J": self.J,
            "epsilon": self.eps,
            "sigma": None,
            "d": None,
            "separation": None,
            "seed": self.seed,
            "augmented": self.augmented,
        }


def gen_krr(n: int, J: int, eps: float, seed: int, augmented: bool = False,
            spec: KernelSpec = KernelSpec.linear(),
            budget: Optional[int] = None) -> KrrInstance:
    """Draw a ridge-regression hard instance.

    Each of the n points is, with probability 1/2, uniform over the first
    J/2 basis vectors and otherwise uniform over the next J/4.
    """
    if n < 1:
        raise ContractViolationError("n must be positive")
    if J % 4 != 0:
        raise ContractViolationError(f"J must be divisible by 4, got {J}")
    if not 0 < eps:
        raise ContractViolationError("eps must be positive")
    if J * J > 16 * n:
        warnings.warn(f"J^2 = {J * J} is large relative to n = {n}; "
                      "count concentration will be poor", stacklevel=2)
    if augmented and spec.kind == INDICATOR:
        raise ContractViolationError(
            "augmented points are not basis vectors; indicator kernel does not apply")
    rng = stream(seed, "gen-krr")
    coin = rng.random(n) < 0.5
    s1 = rng.integers(0, J // 2, size=n)
    s2 = J // 2 + rng.integers(0, J // 4, size=n)
    basis_index = np.where(coin, s1, s2)

    dim = 3 * J // 4
    k_int = round(eps * J)
    if augmented:
        idx = np.concatenate([basis_index, dim + np.arange(k_int)])
        scales = np.concatenate([np.ones(n), np.full(k_int, n / (eps * J))])
        points = _one_hot(idx, dim + k_int, scales)
    else:
        points = _one_hot(basis_index, dim)
    gram = MeteredGram(points, spec=spec, budget=budget)
    return KrrInstance(n=n, J=J, eps=eps, seed=seed, basis_index=basis_index,
                       augmented=augmented, spec=spec, gram=gram, points=points)


@dataclass
class RankInstance:
    """Rank-k versus rank-(k+1) planted input."""

    n: int
    k: int
    seed: int
    basis_index: np.ndarray          # per-point index in [0, k], k means planted vector
    planted: bool
    planted_index: Optional[int]
    gram: MeteredGram = field(repr=False)
    points: np.ndarray = field(repr=False)

    def to_params(self) -> dict:
        return {
            "type": "rank",
            "n": self.n,
            "k_or_J": self.k,
            "epsilon": None,
            "sigma": None,
            "d": None,
            "separation": None,
            "seed": self.seed,
            "augmented": None,
        }


def gen_rank(n: int, k: int, seed: int, budget: Optional[int] = None) -> RankInstance:
    """Uniform draws from the first k basis vectors; with probability 1/2 one
    uniformly chosen position is overwritten by the (k+1)-st."""
    if not n > k >= 1:
        raise ContractViolationError(f"need n > k >= 1, got n={n}, k={k}")
    rng = stream(seed, "gen-rank")
    basis_index = rng.integers(0, k, size=n)
    planted = bool(rng.random() < 0.5)
    planted_index = None
    if planted:
        planted_index = int(rng.integers(0, n))
        basis_index[planted_index] = k
    points = _one_hot(basis_index, k + 1)
    gram = MeteredGram(points, budget=budget)
    return RankInstance(n=n, k=k, seed=seed, basis_index=basis_index,
                        planted=planted, planted_index=planted_index,
                        gram=gram, points=points)


@dataclass
class KkmcInstance:
    """Clustering hard input: two-hot unit vectors inside k blocks.

    The ambient k/eps coordinates split into k blocks of 1/eps. Each point
    picks a uniform block and a uniform unordered coordinate pair (j1, j2)
    inside it, and equals (e_l1 + e_l2) / sqrt(2). Inner products are 1 on
    identical pairs, 1/2 on same-block pairs sharing one coordinate, else 0.
    """

    n: int
    k: int
    eps: float
    seed: int
    block: np.ndarray                # per-point block in [0, k)
    pair: np.ndarray                 # per-point (j1, j2), j1 < j2, within-block
    gram: MeteredGram = field(repr=False)
    points: np.ndarray = field(repr=False)

    @property
    def inv_eps(self) -> int:
        return round(1.0 / self.eps)

    @property
    def dim(self) -> int:
        return self.k * self.inv_eps

    def coordinates(self) -> np.ndarray:
        """Per-point absolute coordinate indices, shape (n, 2)."""
        return self.block[:, None] * self.inv_eps + self.pair

    def to_params(self) -> dict:
        return {
            "type": "kkmc",
            "n": self.n,
            "k_or_J": self.k,
            "epsilon": self.eps,
            "sigma": None,
            "d": None,
            "separation": None,
            "seed": self.seed,
            "augmented": None,
        }


def _validate_inv_eps(eps: float) -> int:
    inv = 1.0 / eps
    if abs(inv - round(inv)) > 1e-9 or round(inv) < 2:
        raise ContractViolationError(f"1/eps must be an integer >= 2, got 1/{eps}")
    return round(inv)


def _two_hot_points(block: np.ndarray, pair: np.ndarray, inv_eps: int, dim: int) -> np.ndarray:
    n = block.size
    pts = np.zeros((n, dim))
    base = block * inv_eps
    pts[np.arange(n), base + pair[:, 0]] = 1.0 / np.sqrt(2.0)
    pts[np.arange(n), base + pair[:, 1]] = 1.0 / np.sqrt(2.0)
    return pts


def gen_kkmc(n: int, k: int, eps: float, seed: int,
             budget: Optional[int] = None) -> KkmcInstance:
    """Draw n i.i.d. two-hot block vectors."""
    if n < 1 or k < 1:
        raise ContractViolationError("n and k must be positive")
    inv_eps = _validate_inv_eps(eps)
    n_types = k * comb(inv_eps, 2)
    if 10 * n_types > n:
        warnings.warn(f"{n_types} vector types against n = {n} draws; "
                      "per-type counts will be sparse", stacklevel=2)
    rng = stream(seed, "gen-kkmc")
    block = rng.integers(0, k, size=n)
    pair_list = np.array([(a, b) for a in range(inv_eps) for b in range(a + 1, inv_eps)])
    pair = pair_list[rng.integers(0, len(pair_list), size=n)]
    points = _two_hot_points(block, pair, inv_eps, k * inv_eps)
    gram = MeteredGram(points, budget=budget)
    return KkmcInstance(n=n, k=k, eps=eps, seed=seed, block=block, pair=pair,
                        gram=gram, points=points)


def make_balanced_kkmc(k: int, eps: float, copies: int) -> KkmcInstance:
    """Exactly balanced variant: every (block, pair) type appears `copies` times."""
    inv_eps = _validate_inv_eps(eps)
    pair_list = np.array([(a, b) for a in range(inv_eps) for b in range(a + 1, inv_eps)])
    block = np.repeat(np.arange(k), len(pair_list) * copies)
    pair = np.tile(np.repeat(pair_list, copies, axis=0), (k, 1))
    n = block.size
    points = _two_hot_points(block, pair, inv_eps, k * inv_eps)
    gram = MeteredGram(points)
    return KkmcInstance(n=n, k=k, eps=eps, seed=0, block=block, pair=pair,
                        gram=gram, points=points)


def block_of(instance: KkmcInstance, i: int) -> int:
    """Ground-truth block of point i."""
    if not 0 <= i < instance.n:
        raise ContractViolationError(f"index {i} out of range [0, {instance.n})")
    return int(instance.block[i])


@dataclass
class MogInstance:
    """Isotropic Gaussian mixture with recorded means and labels."""

    n: int
    d: int
    k: int
    sigma: float
    separation: float
    seed: int
    means: np.ndarray                # (k, d)
    weights: np.ndarray              # (k,)
    labels: np.ndarray               # per-point component in [0, k)
    gram: MeteredGram = field(repr=False)
    points: np.ndarray = field(repr=False)

    def min_separation(self) -> float:
        if self.k == 1:
            return np.inf
        diffs = self.means[:, None, :] - self.means[None, :, :]
        dist = np.linalg.norm(diffs, axis=2)
        return float(dist[~np.eye(self.k, dtype=bool)].min())

    def to_params(self) -> dict:
        return {
            "type": "mog",
            "n": self.n,
            "k_or_J": self.k,
            "epsilon": None,
            "sigma": self.sigma,
            "d": self.d,
            "separation": self.separation,
            "seed": self.seed,
            "augmented": None,
        }


def gen_mog(n: int, d: int, k: int, sigma: float, separation: float, seed: int,
            weights=None, budget: Optional[int] = None,
            max_retries: int = 50) -> MogInstance:
    """Sample a separated Gaussian mixture.

    Means sit at separation * (random orthonormal directions) when k <= d,
    which puts every pair at distance separation * sqrt(2); otherwise
    rejection sampling inside a scaled ball, with bounded retries.
    """
    if n < 1 or k < 1 or d < 1:
        raise ContractViolationError("n, d, k must be positive")
    if sigma < 0:
        raise ContractViolationError("sigma must be nonnegative")
    rng = stream(seed, "gen-mog")
    if k <= d:
        g = rng.standard_normal((d, k))
        q, _ = np.linalg.qr(g)
        means = separation * q[:, :k].T
    else:
        means = None
        radius = separation * max(1.0, k ** (1.0 / d))
        for _ in range(max_retries):
            cand = rng.uniform(-radius, radius, size=(k, d))
            diffs = np.linalg.norm(cand[:, None, :] - cand[None, :, :], axis=2)
            if diffs[~np.eye(k, dtype=bool)].min() >= separation:
                means = cand
                break
            radius *= 1.5
        if means is None:
            raise GenerationFailureError(
                f"could not place {k} means at separation {separation} in dimension {d}")
    if weights is None:
        weights = np.full(k, 1.0 / k)
    else:
        weights = np.asarray(weights, dtype=np.float64)
        if weights.shape != (k,) or abs(weights.sum() - 1.0) > 1e-9 or (weights < 0).any():
            raise ContractViolationError("weights must be a length-k probability vector")
    labels = rng.choice(k, size=n, p=weights)
    points = means[labels] + sigma * rng.standard_normal((n, d))
    inst = MogInstance(n=n, d=d, k=k, sigma=sigma, separation=separation, seed=seed,
                       means=means, weights=weights, labels=labels,
                       gram=MeteredGram(points, budget=budget), points=points)
    if k > 1 and inst.min_separation() < separation * (1 - 1e-12):
        raise GenerationFailureError("mean placement failed the separation check")
    return inst


def params_to_instance(params: dict):
    """Rebuild an instance from its JSON parameter block."""
    kind = params["type"]
    if kind == "krr":
        return gen_krr(params["n"], params["k_or_J"], params["epsilon"],
                       params["seed"], augmented=bool(params.get("augmented")))
    if kind == "rank":
        return gen_rank(params["n"], params["k_or_J"], params["seed"])
    if kind == "kkmc":
        return gen_kkmc(params["n"], params["k_or_J"], params["epsilon"], params["seed"])
    if kind == "mog":
        return gen_mog(params["n"], params["d"], params["k_or_J"], params["sigma"],
                       params["separation"], params["seed"])
    raise ContractViolationError(f"unknown instance type {kind!r}")


def params_roundtrip(params: dict) -> dict:
    """JSON-serialize and parse a parameter block (stability check helper)."""
    return json.loads(json.dumps(params))
