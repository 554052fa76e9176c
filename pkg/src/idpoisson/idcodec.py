"""Threshold identification decoder and Monte Carlo type I / type II error estimates.

To test whether message ``j`` was sent, the decoder computes

    Z(y; j) = (1/T) * sum_{k in E_T} [(y_k - (cbar_k^j + lambda_k))**2 - y_k]

over the T linearly independent receptor rows ``E_T`` and accepts iff
``|Z| <= psi_t``. Under the true message, ``E[Z] = 0``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy.stats import norm
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import (
    ValidationError,
    check_matrix,
    check_positive_int,
    check_vector,
)
from .affinity import ReductionMap
from .channel import ChannelParams, spawn_rng
from .codebook import Codebook, packing_radius

Z95 = float(norm.ppf(0.975))
WILSON_BELOW = 5

# stream tags for derive_seed
_MESSAGE_ORDER, _TYPE1, _TYPE2, _PAIR_ORDER = 0, 1, 2, 3


@dataclass(frozen=True)
class DecoderParams:
    a: float
    b: float
    kappa: float
    l: float
    t: int
    psi_t: float
    e_t: tuple

    @classmethod
    def from_constants(cls, a, b, kappa, l, red: ReductionMap) -> "DecoderParams":
        """Threshold ``psi_t = (4/3) * epsilon_t`` for the reduction's rank."""
        eps, _ = packing_radius(a, b, kappa, l, red.t)
        return cls(float(a), float(b), float(kappa), float(l), red.t, 4.0 * eps / 3.0,
                   red.independent_rows)


def z_metric(y, affine_codeword, lam, e_t) -> np.ndarray | float:
    """Decoding statistic. ``y`` may be one observation or a batch in rows."""
    y = np.asarray(y, dtype=float)
    idx = np.asarray(e_t, dtype=np.intp)
    k = y.shape[-1]
    if idx.size == 0:
        raise ValidationError("e_t must hold at least one index")
    if idx.min() < 0 or idx.max() >= k:
        raise ValidationError(f"e_t indices must lie in [0, {k})")
    mean = (np.asarray(affine_codeword, dtype=float) + np.asarray(lam, dtype=float))[idx]
    ys = y[..., idx]
    z = ((ys - mean) ** 2 - ys).sum(axis=-1) / idx.size
    return float(z) if np.ndim(z) == 0 else z


def identify(y, j: int, cb: Codebook, ch: ChannelParams, dp: DecoderParams):
    """Accept (True) iff ``|Z(y; j)| <= psi_t``. Vectorised over rows of ``y``."""
    if isinstance(j, bool) or not 0 <= int(j) < cb.m:
        raise ValidationError(f"message index {j} outside [0, {cb.m})")
    z = z_metric(y, cb.affine[int(j)], ch.lam, dp.e_t)
    return np.abs(z) <= dp.psi_t


def proportion_halfwidth(errors: int, trials: int) -> tuple[float, str]:
    """95% half-width for a binomial proportion.

    Normal approximation, switching to the Wilson score interval when
    fewer than five errors were observed.
    """
    p = errors / trials
    if errors < WILSON_BELOW:
        z2 = Z95 ** 2
        denom = 1 + z2 / trials
        half = Z95 * math.sqrt(p * (1 - p) / trials + z2 / (4 * trials ** 2)) / denom
        return half, "wilson"
    return Z95 * math.sqrt(p * (1 - p) / trials), "normal"


@dataclass(frozen=True)
class ErrorEstimate:
    """Measured error probabilities.

    ``*_ci_halfwidth`` is the 95% half-width of the proportion attaining the
    maximum. Type II fields are ``None`` when the codebook has one codeword.
    The sampled type II maximum is a lower estimate of the maximum over all
    pairs.
    """

    trials_per_pair: int
    type1_max: float
    type1_mean: float
    type2_max: float | None
    type2_mean: float | None
    type1_ci_halfwidth: float
    type2_ci_halfwidth: float | None
    pairs_evaluated: int
    messages_evaluated: int
    type1_errors: tuple
    type2_errors: tuple
    ci_method: str
    b_zero_flag: bool = False

    def to_json(self) -> dict:
        doc = asdict(self)
        doc["type1_errors"] = list(self.type1_errors)
        doc["type2_errors"] = list(self.type2_errors)
        return doc


CSV_FIELDS = ("T", "m", "kappa", "l", "a", "b", "psi_t", "trials",
              "type1_max", "type1_mean", "type2_max", "type2_mean",
              "type1_ci_halfwidth", "type2_ci_halfwidth")


def csv_row(est: ErrorEstimate, dp: DecoderParams, m: int) -> dict:
    return {
        "T": dp.t, "m": m, "kappa": dp.kappa, "l": dp.l, "a": dp.a, "b": dp.b,
        "psi_t": dp.psi_t, "trials": est.trials_per_pair,
        "type1_max": est.type1_max, "type1_mean": est.type1_mean,
        "type2_max": est.type2_max, "type2_mean": est.type2_mean,
        "type1_ci_halfwidth": est.type1_ci_halfwidth,
        "type2_ci_halfwidth": est.type2_ci_halfwidth,
    }


def _sample_pairs(m: int, cap: int, rng: np.random.Generator) -> list[tuple[int, int]]:
    total = m * (m - 1)
    if total <= cap:
        flat = np.arange(total)
    else:
        flat = np.sort(rng.choice(total, size=cap, replace=False))
    i = flat // (m - 1)
    r = flat % (m - 1)
    j = np.where(r >= i, r + 1, r)
    return list(zip(i.tolist(), j.tolist()))


def estimate_errors(cb: Codebook, ch: ChannelParams, dp: DecoderParams, trials: int,
                    root_seed: int, pair_cap: int) -> ErrorEstimate:
    """Monte Carlo estimate of type I and type II error probabilities.

    Type I: for up to ``pair_cap`` messages (seeded shuffle), the fraction of
    ``trials`` channel outputs for codeword i rejected by test i.
    Type II: for up to ``pair_cap`` sampled ordered pairs ``(i, j)``, the
    fraction of outputs for codeword i accepted by test j.

    Every message and pair draws from its own stream derived from
    ``root_seed``, so results do not depend on evaluation order. Counts are
    kept as exact integers.
    """
    trials = check_positive_int(trials, "trials")
    pair_cap = check_positive_int(pair_cap, "pair_cap")
    if dp.psi_t < 0 or not math.isfinite(dp.psi_t):
        raise ValidationError("psi_t must be a finite non-negative threshold")
    m = cb.m

    order = spawn_rng(root_seed, _MESSAGE_ORDER).permutation(m)[:pair_cap]
    messages = np.sort(order)
    type1 = []
    for i in messages:
        y = spawn_rng(root_seed, _TYPE1, i).poisson(cb.affine[i] + ch.lam, size=(trials, ch.k))
        type1.append(int(np.count_nonzero(~identify(y, i, cb, ch, dp))))

    type2 = []
    pairs = _sample_pairs(m, pair_cap, spawn_rng(root_seed, _PAIR_ORDER)) if m >= 2 else []
    for i, j in pairs:
        y = spawn_rng(root_seed, _TYPE2, i, j).poisson(cb.affine[i] + ch.lam, size=(trials, ch.k))
        type2.append(int(np.count_nonzero(identify(y, j, cb, ch, dp))))

    methods = []
    worst1 = max(type1)
    hw1, meth = proportion_halfwidth(worst1, trials)
    methods.append(f"type1:{meth}")
    if type2:
        worst2 = max(type2)
        hw2, meth = proportion_halfwidth(worst2, trials)
        methods.append(f"type2:{meth}")
        t2max, t2mean = worst2 / trials, float(np.mean(type2)) / trials
    else:
        hw2 = t2max = t2mean = None

    return ErrorEstimate(
        trials_per_pair=trials,
        type1_max=worst1 / trials,
        type1_mean=float(np.mean(type1)) / trials,
        type2_max=t2max,
        type2_mean=t2mean,
        type1_ci_halfwidth=hw1,
        type2_ci_halfwidth=hw2,
        pairs_evaluated=len(pairs),
        messages_evaluated=len(type1),
        type1_errors=tuple(type1),
        type2_errors=tuple(type2),
        ci_method=",".join(methods),
        b_zero_flag=dp.b == 0,
    )


class ThresholdIdentifier(BaseEstimator):
    """Scikit-learn style wrapper for the threshold decoder.

    ``fit(X, lam=..., independent_rows=...)`` stores the affine codebook
    (rows of length K). ``decision_function(Y, j)`` returns the statistic
    for each observation row and ``predict(Y, j)`` the accept decisions.
    """

    def __init__(self, a=1.0, b=0.0, kappa=1.0, l=0.0):
        self.a = a
        self.b = b
        self.kappa = kappa
        self.l = l

    def fit(self, X, y=None, *, lam, independent_rows):
        self.codewords_ = check_matrix(X, "X", nonnegative=True)
        k = self.codewords_.shape[1]
        self.lam_ = check_vector(lam, "lam", size=k, positive=True)
        self.independent_rows_ = tuple(int(i) for i in independent_rows)
        t = len(self.independent_rows_)
        eps, _ = packing_radius(self.a, self.b, self.kappa, self.l, t)
        self.psi_t_ = 4.0 * eps / 3.0
        self.n_features_in_ = k
        return self

    def decision_function(self, Y, j):
        check_is_fitted(self, "codewords_")
        if not 0 <= j < self.codewords_.shape[0]:
            raise ValidationError(f"message index {j} out of range")
        return z_metric(np.atleast_2d(Y), self.codewords_[j], self.lam_, self.independent_rows_)

    def predict(self, Y, j):
        return np.abs(self.decision_function(Y, j)) <= self.psi_t_
