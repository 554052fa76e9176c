"""Identification codebooks by greedy saturated sphere packing in the reduced space.

Candidates are drawn in the original (molecule) space so that every accepted
centre has a constraint-feasible preimage, mapped through ``abar`` and then
projected with ``u_t``. A candidate is accepted when its reduced image lies
at least ``2 * r0`` from every centre accepted before it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import (
    ValidationError,
    check_kappa,
    check_l,
    check_matrix,
    check_nonnegative,
    check_positive,
    check_positive_int,
)
from .affinity import ReductionMap, svd_reduction
from .channel import ChannelParams, spawn_rng


class UndefinedDistanceError(ValueError):
    """Minimum distance requested for a codebook with fewer than two codewords."""


def packing_radius(a: float, b: float, kappa: float, l: float, t: int) -> tuple[float, float]:
    """Return ``(epsilon_t, r0)`` with ``epsilon_t = a / t**((2 - (kappa + 4l + b)) / 2)``
    and ``r0 = sqrt(t * epsilon_t)``."""
    a = check_positive(a, "a")
    b = check_nonnegative(b, "b")
    kappa = check_kappa(kappa)
    l = check_l(l)
    t = check_positive_int(t, "t")
    eps = a / t ** ((2 - (kappa + 4 * l + b)) / 2)
    return eps, math.sqrt(t * eps)


def sphere_volume(t: int, r: float) -> float:
    """Volume of a t-ball, ``pi**(t/2) r**t / Gamma(t/2 + 1)``."""
    return math.exp(0.5 * t * math.log(math.pi) + t * math.log(r) - gammaln(t / 2 + 1))


def _dists(points: np.ndarray, x: np.ndarray) -> np.ndarray:
    # the single distance kernel shared by acceptance and verification
    return np.sqrt(np.sum((points - x) ** 2, axis=1))


@dataclass(frozen=True)
class Codebook:
    original: np.ndarray
    affine: np.ndarray
    reduced: np.ndarray
    r0: float
    c_avg: float
    c_max: float
    seed: int
    candidate_budget: int
    saturated: bool
    saturation_count: int = 0

    def __post_init__(self):
        for name in ("original", "affine", "reduced"):
            arr = np.asarray(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if not (self.original.shape[0] == self.affine.shape[0] == self.reduced.shape[0] >= 1):
            raise ValidationError("codebook representations disagree on the codeword count")
        if np.any(self.original < 0) or np.any(self.original > self.c_avg):
            raise ValidationError("codewords must lie in [0, c_avg]^N")
        if self.c_avg > self.c_max:
            raise ValidationError("c_avg exceeds c_max")

    @property
    def m(self) -> int:
        return self.original.shape[0]

    @property
    def t(self) -> int:
        return self.reduced.shape[1]

    def to_json(self) -> dict:
        return {
            "m": self.m,
            "r0": self.r0,
            "c_avg": self.c_avg,
            "c_max": self.c_max,
            "seed": self.seed,
            "candidate_budget": self.candidate_budget,
            "saturated": self.saturated,
            "saturation_count": self.saturation_count,
            "original": self.original.tolist(),
            "checksums": {
                "affine_row_norm_sum": float(np.linalg.norm(self.affine, axis=1).sum()),
                "reduced_row_norm_sum": float(np.linalg.norm(self.reduced, axis=1).sum()),
            },
        }

    @classmethod
    def from_json(cls, doc: dict, ch: ChannelParams, red: ReductionMap) -> "Codebook":
        """Rebuild from the stored original codewords and verify the checksums."""
        original = np.asarray(doc["original"], dtype=float)
        affine = original @ ch.abar.T
        reduced = red.transform(affine)
        for key, arr in (("affine_row_norm_sum", affine), ("reduced_row_norm_sum", reduced)):
            stored = doc["checksums"][key]
            got = float(np.linalg.norm(arr, axis=1).sum())
            if not math.isclose(stored, got, rel_tol=1e-9, abs_tol=1e-12):
                raise ValidationError(f"{key} mismatch: stored {stored}, recomputed {got}")
        return cls(original, affine, reduced, doc["r0"], doc["c_avg"], doc["c_max"], doc["seed"],
                   doc["candidate_budget"], doc["saturated"], doc.get("saturation_count", 0))


def _greedy_centres(abar, red, c_avg, r0, budget, seed):
    n = abar.shape[1]
    cands = spawn_rng(seed, 0).uniform(0.0, c_avg, size=(budget, n))
    reduced = red.transform(cands @ abar.T)
    keep = np.empty(budget, dtype=np.intp)
    centres = np.empty_like(reduced)
    m = 0
    two_r0 = 2.0 * r0
    for i in range(budget):
        x = reduced[i]
        if m == 0 or _dists(centres[:m], x).min() >= two_r0:
            centres[m] = x
            keep[m] = i
            m += 1
    original = cands[keep[:m]]
    return original


def _probe(original, reduced, abar, red, c_avg, r0, probes, rng) -> int:
    cands = rng.uniform(0.0, c_avg, size=(probes, original.shape[1]))
    cand_red = red.transform(cands @ abar.T)
    # chunk to bound the (probes x m) distance matrix
    hits = 0
    step = max(1, 2_000_000 // max(1, reduced.shape[0]))
    for lo in range(0, probes, step):
        block = cand_red[lo:lo + step]
        d2 = ((block[:, None, :] - reduced[None, :, :]) ** 2).sum(axis=2)
        hits += int(np.sum(np.sqrt(d2.min(axis=1)) >= 2.0 * r0))
    return hits


def construct_greedy(ch: ChannelParams, red: ReductionMap, c_avg: float, c_max: float,
                     r0: float, candidate_budget: int, seed: int) -> Codebook:
    """Greedy random sequential packing with a fixed candidate budget.

    After the pass, ``budget // 10`` (at least one) fresh candidates probe
    for admissible centres the pass missed; ``saturated`` is true when
    none is found.
    """
    c_avg = check_positive(c_avg, "c_avg")
    c_max = check_positive(c_max, "c_max")
    if c_avg > c_max:
        raise ValidationError(f"c_avg ({c_avg}) exceeds c_max ({c_max})")
    r0 = check_positive(r0, "r0")
    budget = check_positive_int(candidate_budget, "candidate_budget")
    if red.k != ch.k:
        raise ValidationError("reduction map and channel disagree on K")

    original = _greedy_centres(ch.abar, red, c_avg, r0, budget, seed)
    affine = original @ ch.abar.T
    reduced = red.transform(affine)
    probes = max(1, budget // 10)
    hits = _probe(original, reduced, ch.abar, red, c_avg, r0, probes, spawn_rng(seed, 1))
    return Codebook(original, affine, reduced, r0, c_avg, c_max, int(seed), budget,
                    saturated=hits == 0, saturation_count=hits)


def min_distance_reduced(cb: Codebook) -> float:
    """Smallest pairwise Euclidean distance between reduced codewords."""
    if cb.m < 2:
        raise UndefinedDistanceError("minimum distance needs at least two codewords")
    best = math.inf
    red = cb.reduced
    for i in range(cb.m - 1):
        best = min(best, float(_dists(red[i + 1:], red[i]).min()))
    return best


def saturation_probe(cb: Codebook, ch: ChannelParams, red: ReductionMap, probes: int,
                     rng: np.random.Generator) -> int:
    """Count fresh uniform candidates that could still be added to ``cb``."""
    probes = check_positive_int(probes, "probes")
    return _probe(cb.original, cb.reduced, ch.abar, red, cb.c_avg, cb.r0, probes, rng)


def achieved_rate(m: int, t: int) -> float:
    """``log2(m) / (t log2 t)``, the rate on the super-exponential scale."""
    m = check_positive_int(m, "m")
    t = check_positive_int(t, "t", minimum=2)
    return math.log2(m) / (t * math.log2(t))


def packing_density(cb: Codebook, region_volume: float) -> float:
    """Fraction of ``region_volume`` covered by the m balls of radius r0."""
    return cb.m * sphere_volume(cb.t, cb.r0) / check_positive(region_volume, "region_volume")


class GreedySpherePacker(BaseEstimator):
    """Estimator wrapper around :func:`construct_greedy`.

    ``fit`` takes the K x N composite matrix ``abar`` (affinity times
    gains). The packing radius follows from ``(a, b, kappa, l)`` and the
    rank of ``abar`` unless ``r0`` is given explicitly.

    Parameters
    ----------
    a, b, kappa, l : float
        Packing constants and scaling exponents.
    c_avg, c_max : float
        Per-entry box for candidates and the peak constraint.
    r0 : float or None
        Explicit packing radius, overriding the formula.
    candidate_budget : int
    random_state : int
    """

    def __init__(self, a=1.0, b=0.0, kappa=1.0, l=0.0, c_avg=1.0, c_max=None, r0=None,
                 candidate_budget=1000, random_state=0):
        self.a = a
        self.b = b
        self.kappa = kappa
        self.l = l
        self.c_avg = c_avg
        self.c_max = c_max
        self.r0 = r0
        self.candidate_budget = candidate_budget
        self.random_state = random_state

    def fit(self, X, y=None):
        from .affinity import AffinityMatrix
        from .channel import make_channel

        abar = check_matrix(X, "abar", nonnegative=True)
        self.reduction_ = svd_reduction(abar)
        t = self.reduction_.t
        if self.r0 is None:
            self.epsilon_, self.r0_ = packing_radius(self.a, self.b, self.kappa, self.l, t)
        else:
            self.epsilon_, self.r0_ = None, check_positive(self.r0, "r0")
        nz = abar[abar > 0]
        # gains are already folded into abar, so wrap it as a unit-gain channel
        ch = make_channel(AffinityMatrix(abar, nz.min(), nz.max()), 1.0, 1.0)
        c_max = self.c_avg if self.c_max is None else self.c_max
        self.codebook_ = construct_greedy(ch, self.reduction_, self.c_avg, c_max, self.r0_,
                                          self.candidate_budget, self.random_state)
        self.n_codewords_ = self.codebook_.m
        self._abar = abar
        return self

    def transform(self, X):
        """Reduced coordinates of original-space codewords (rows of length N)."""
        check_is_fitted(self, "codebook_")
        X = check_matrix(np.atleast_2d(X), "X")
        return self.reduction_.transform(X @ self._abar.T)
