"""Discrete affine Poisson channel: ``Y_k ~ Pois(sum_n a_kn v_n x_n + lambda_k)``."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from ._validation import ValidationError, check_vector
from .affinity import AffinityMatrix

_MASK64 = (1 << 64) - 1


def mix64(z: int) -> int:
    """SplitMix64 finaliser."""
    z = (z + 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def derive_seed(root_seed: int, *indices: int) -> int:
    """Fold a root seed and a path of indices into one 64-bit seed.

    Each step adds the next index to the running state and mixes, so
    ``derive_seed(s, i, j)`` is stable regardless of evaluation order.
    """
    state = mix64(int(root_seed) & _MASK64)
    for idx in indices:
        state = mix64((state + int(idx)) & _MASK64)
    return state


def spawn_rng(root_seed: int, *indices: int) -> np.random.Generator:
    return np.random.default_rng(derive_seed(root_seed, *indices))


@dataclass(frozen=True)
class ChannelParams:
    """A channel instance. ``abar = A @ diag(v)`` is precomputed."""

    affinity: AffinityMatrix
    v: np.ndarray
    lam: np.ndarray
    v_min: float
    v_max: float
    lambda_min: float
    lambda_max: float

    def __post_init__(self):
        a = self.affinity
        v = check_vector(self.v, "v", size=a.n, positive=True)
        lam = check_vector(self.lam, "lambda", size=a.k, positive=True)
        if not 0 < self.v_min <= self.v_max:
            raise ValidationError("need 0 < v_min <= v_max")
        if not 0 < self.lambda_min <= self.lambda_max:
            raise ValidationError("need 0 < lambda_min <= lambda_max")
        if v.min() < self.v_min or v.max() > self.v_max:
            raise ValidationError(f"v outside declared range [{self.v_min}, {self.v_max}]")
        if lam.min() < self.lambda_min or lam.max() > self.lambda_max:
            raise ValidationError(f"lambda outside declared range [{self.lambda_min}, {self.lambda_max}]")
        abar = a.entries * v[np.newaxis, :]
        for arr in (v, lam, abar):
            arr.setflags(write=False)
        object.__setattr__(self, "v", v)
        object.__setattr__(self, "lam", lam)
        object.__setattr__(self, "abar", abar)
        for name in ("v_min", "v_max", "lambda_min", "lambda_max"):
            object.__setattr__(self, name, float(getattr(self, name)))

    @property
    def k(self) -> int:
        return self.affinity.k

    @property
    def n(self) -> int:
        return self.affinity.n

    def to_json(self) -> dict:
        return {
            "affinity": self.affinity.to_json(),
            "v": self.v.tolist(),
            "lambda": self.lam.tolist(),
            "v_min": self.v_min,
            "v_max": self.v_max,
            "lambda_min": self.lambda_min,
            "lambda_max": self.lambda_max,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "ChannelParams":
        try:
            return cls(
                AffinityMatrix.from_json(doc["affinity"]),
                np.asarray(doc["v"], dtype=float),
                np.asarray(doc["lambda"], dtype=float),
                doc["v_min"], doc["v_max"], doc["lambda_min"], doc["lambda_max"],
            )
        except KeyError as exc:
            raise ValidationError(f"channel document missing {exc}") from exc


def make_channel(affinity: AffinityMatrix, v=1.0, lam=1.0, *, v_range=None,
                 lambda_range=None) -> ChannelParams:
    """Build a channel, broadcasting scalar ``v`` / ``lam``.

    Declared ranges default to the observed min and max.
    """
    v = np.broadcast_to(np.asarray(v, dtype=float), (affinity.n,)).copy()
    lam = np.broadcast_to(np.asarray(lam, dtype=float), (affinity.k,)).copy()
    v_lo, v_hi = v_range if v_range is not None else (v.min(), v.max())
    l_lo, l_hi = lambda_range if lambda_range is not None else (lam.min(), lam.max())
    return ChannelParams(affinity, v, lam, v_lo, v_hi, l_lo, l_hi)


def _check_input(ch: ChannelParams, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != ch.n:
        raise ValidationError(f"input has {x.shape[-1]} rates, channel expects {ch.n}")
    if np.any(x < 0) or not np.all(np.isfinite(x)):
        raise ValidationError("release rates must be finite and non-negative")
    return x


def mean_vector(ch: ChannelParams, x) -> np.ndarray:
    """Poisson means ``abar @ x + lambda``; accepts a batch of inputs in rows."""
    x = _check_input(ch, x)
    return x @ ch.abar.T + ch.lam


def sample(ch: ChannelParams, x, rng: np.random.Generator, size=None) -> np.ndarray:
    """Draw receptor counts for input ``x``.

    ``size`` prepends extra sample dimensions, e.g. ``size=(trials,)``
    returns an array of shape ``(trials, K)``.
    """
    mu = mean_vector(ch, x)
    shape = mu.shape if size is None else tuple(np.atleast_1d(size)) + mu.shape
    return rng.poisson(np.broadcast_to(mu, shape))


def log_likelihood(ch: ChannelParams, x, y) -> float:
    """Natural-log probability of counts ``y`` given input ``x``."""
    y = np.asarray(y)
    if y.shape != (ch.k,) or np.any(y < 0) or np.any(y != np.round(y)):
        raise ValidationError("y must be K non-negative integers")
    mu = mean_vector(ch, x)
    return float(np.sum(-mu + y * np.log(mu) - gammaln(y + 1.0)))
