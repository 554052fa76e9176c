"""Affinity matrices and the linear algebra built on them.

Generators for the standard matrix families (identity, banded Toeplitz,
random sparse), the SVD reduction onto the rank-T left singular subspace,
the finite-size condition diagnostics, zonotope volumes via Cauchy-Binet
sums, determinant-maximising column subsets, and the two small matrix
inequalities used by the rate and distance arguments.

All row and column indices are 0-based.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import (
    ValidationError,
    check_matrix,
    check_positive,
    check_positive_int,
)

RANK_RTOL = 1e-10
ORTHO_RTOL = 1e-9
EXHAUSTIVE_LIMIT = 10**6
_SUBSET_CHUNK = 20_000


@dataclass(frozen=True)
class AffinityMatrix:
    """K x N non-negative receptor/molecule affinity matrix.

    Every non-zero entry must lie in ``[a_min, a_max]``.
    """

    entries: np.ndarray
    a_min: float
    a_max: float

    def __post_init__(self):
        entries = check_matrix(self.entries, "entries", nonnegative=True)
        a_min = check_positive(self.a_min, "a_min")
        a_max = check_positive(self.a_max, "a_max")
        if a_min > a_max:
            raise ValidationError(f"a_min ({a_min}) exceeds a_max ({a_max})")
        nz = entries[entries != 0]
        if nz.size and (nz.min() < a_min or nz.max() > a_max):
            raise ValidationError(
                f"non-zero entries span [{nz.min()}, {nz.max()}], outside [{a_min}, {a_max}]"
            )
        entries = entries.copy()
        entries.setflags(write=False)
        object.__setattr__(self, "entries", entries)
        object.__setattr__(self, "a_min", a_min)
        object.__setattr__(self, "a_max", a_max)

    @property
    def k(self) -> int:
        return self.entries.shape[0]

    @property
    def n(self) -> int:
        return self.entries.shape[1]

    @property
    def f_counts(self) -> np.ndarray:
        """Number of non-zero entries in each row."""
        return np.count_nonzero(self.entries, axis=1)

    def to_json(self) -> dict:
        return {
            "k": self.k,
            "n": self.n,
            "rows": self.entries.tolist(),
            "a_min": self.a_min,
            "a_max": self.a_max,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "AffinityMatrix":
        try:
            rows = np.asarray(doc["rows"], dtype=float)
            k, n = int(doc["k"]), int(doc["n"])
            a_min, a_max = doc["a_min"], doc["a_max"]
        except (KeyError, TypeError, ValueError) as exc:
            raise ValidationError(f"malformed matrix document: {exc}") from exc
        if rows.ndim != 2 or rows.shape != (k, n):
            raise ValidationError(f"rows have shape {rows.shape}, header says ({k}, {n})")
        return cls(rows, a_min, a_max)


def save_matrix(a: AffinityMatrix, path) -> None:
    Path(path).write_text(json.dumps(a.to_json(), indent=1) + "\n")


def load_matrix(path) -> AffinityMatrix:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: not valid JSON ({exc})") from exc
    return AffinityMatrix.from_json(doc)


def _from_entries(entries: np.ndarray) -> AffinityMatrix:
    nz = entries[entries != 0]
    return AffinityMatrix(entries, float(nz.min()), float(nz.max()))


def gen_identity(n: int) -> AffinityMatrix:
    n = check_positive_int(n, "n")
    return AffinityMatrix(np.eye(n), 1.0, 1.0)


def gen_toeplitz(taps, n: int) -> AffinityMatrix:
    """Lower-triangular banded Toeplitz matrix, ``entry[k, j] = taps[k - j]``."""
    n = check_positive_int(n, "n")
    taps = np.asarray(taps, dtype=float).ravel()
    if taps.size == 0:
        raise ValidationError("taps must be non-empty")
    if taps.size > n:
        raise ValidationError(f"{taps.size} taps do not fit in an {n}x{n} matrix")
    if np.any(taps <= 0):
        raise ValidationError("taps must be positive")
    entries = np.zeros((n, n))
    for lag, tap in enumerate(taps):
        idx = np.arange(lag, n)
        entries[idx, idx - lag] = tap
    return _from_entries(entries)


def gen_random_sparse(k: int, n: int, l: float, a_min: float, a_max: float, seed: int,
                      max_retries: int = 100) -> tuple[AffinityMatrix, int]:
    """Random sparse affinity matrix with ``ceil(k**l)`` non-zeros per row.

    The whole matrix is redrawn (up to ``max_retries`` extra times) until it
    has full row rank; if that never happens the best draw is kept.

    Returns
    -------
    (AffinityMatrix, int)
        The matrix and its achieved numerical rank.
    """
    k = check_positive_int(k, "k")
    n = check_positive_int(n, "n")
    if k > n:
        raise ValidationError(f"k ({k}) must not exceed n ({n})")
    if not 0 <= l < 1:
        raise ValidationError(f"l must lie in [0, 1), got {l}")
    a_min = check_positive(a_min, "a_min")
    a_max = check_positive(a_max, "a_max")
    if a_min > a_max:
        raise ValidationError("a_min exceeds a_max")
    # guard against k**l landing a hair above an integer
    per_row = math.ceil(k ** l - 1e-12)
    if per_row > n:
        raise ValidationError(f"{per_row} non-zeros per row do not fit in {n} columns")

    rng = np.random.default_rng(seed)
    best, best_rank = None, -1
    for _ in range(max_retries + 1):
        entries = np.zeros((k, n))
        for row in range(k):
            cols = rng.choice(n, size=per_row, replace=False)
            entries[row, cols] = rng.uniform(a_min, a_max, size=per_row)
        rank = numerical_rank(entries)
        if rank > best_rank:
            best, best_rank = entries, rank
        if rank == k:
            break
    return AffinityMatrix(best, a_min, a_max), best_rank


def numerical_rank(m) -> int:
    s = np.linalg.svd(np.asarray(m, dtype=float), compute_uv=False)
    if s.size == 0 or s[0] == 0:
        return 0
    return int(np.sum(s > RANK_RTOL * s[0]))


@dataclass(frozen=True)
class ReductionMap:
    """Projection from receptor space (K) onto the rank-T left singular subspace."""

    t: int
    u_t: np.ndarray
    singular_values: np.ndarray
    independent_rows: tuple

    def __post_init__(self):
        u = np.asarray(self.u_t, dtype=float)
        s = np.asarray(self.singular_values, dtype=float)
        if u.ndim != 2 or u.shape[1] != self.t or s.shape != (self.t,):
            raise ValidationError("u_t / singular_values inconsistent with t")
        if not np.allclose(u.T @ u, np.eye(self.t), atol=1e-10, rtol=0):
            raise ValidationError("u_t columns are not orthonormal")
        if np.any(s <= 0) or np.any(np.diff(s) > 0):
            raise ValidationError("singular values must be positive and non-increasing")
        if len(self.independent_rows) != self.t:
            raise ValidationError("independent_rows must hold exactly t indices")
        for arr in (u, s):
            arr.setflags(write=False)
        object.__setattr__(self, "u_t", u)
        object.__setattr__(self, "singular_values", s)
        object.__setattr__(self, "independent_rows", tuple(int(i) for i in self.independent_rows))

    @property
    def k(self) -> int:
        return self.u_t.shape[0]

    def transform(self, affine) -> np.ndarray:
        """Reduced coordinates ``affine @ u_t`` for row vectors in receptor space."""
        return np.asarray(affine, dtype=float) @ self.u_t


def independent_rows(m, count=None) -> tuple:
    """Lexicographically first set of linearly independent rows.

    Forward Gaussian elimination in natural row order with partial pivoting
    on the column of largest residual magnitude. Stops after ``count`` rows
    when given.
    """
    m = np.asarray(m, dtype=float)
    tol = RANK_RTOL * max(float(np.abs(m).max()), np.finfo(float).tiny) * max(m.shape)
    basis: list[tuple[int, np.ndarray]] = []
    chosen = []
    for i, row in enumerate(m):
        r = row.copy()
        for pc, b in basis:
            if r[pc] != 0:
                r -= r[pc] * b
        pc = int(np.argmax(np.abs(r)))
        if abs(r[pc]) > tol:
            basis.append((pc, r / r[pc]))
            chosen.append(i)
            if count is not None and len(chosen) == count:
                break
    return tuple(chosen)


def svd_reduction(abar) -> ReductionMap:
    abar = check_matrix(abar, "abar")
    if not np.any(abar):
        raise ValidationError("abar is the zero matrix; no reduction exists")
    u, s, _ = np.linalg.svd(abar, full_matrices=False)
    t = int(np.sum(s > RANK_RTOL * s[0]))
    u_t = u[:, :t].copy()
    # deterministic sign: largest-magnitude entry of each column positive
    lead = np.argmax(np.abs(u_t), axis=0)
    signs = np.sign(u_t[lead, np.arange(t)])
    u_t *= signs
    rows = independent_rows(abar, count=t)
    if len(rows) != t or numerical_rank(abar[list(rows)]) != t:
        raise ArithmeticError("row elimination disagrees with the SVD rank; matrix is ill-conditioned")
    return ReductionMap(t, u_t, s[:t].copy(), rows)


class SubspaceReducer(TransformerMixin, BaseEstimator):
    """Scikit-learn transformer projecting receptor-space vectors onto the
    left singular subspace of a composite matrix ``abar``.

    ``fit`` takes the K x N matrix; ``transform`` maps rows of length K
    (affine codewords or observations) to length-T reduced coordinates.

    Attributes
    ----------
    reduction_ : ReductionMap
    rank_ : int
    components_ : ndarray of shape (K, T)
    singular_values_ : ndarray of shape (T,)
    independent_rows_ : tuple of int
    """

    def fit(self, X, y=None):
        self.reduction_ = svd_reduction(X)
        self.rank_ = self.reduction_.t
        self.components_ = self.reduction_.u_t
        self.singular_values_ = self.reduction_.singular_values
        self.independent_rows_ = self.reduction_.independent_rows
        self.n_features_in_ = self.reduction_.k
        return self

    def transform(self, X):
        check_is_fitted(self, "reduction_")
        X = check_matrix(np.atleast_2d(X), "X")
        if X.shape[1] != self.n_features_in_:
            raise ValidationError(f"expected {self.n_features_in_} columns, got {X.shape[1]}")
        return self.reduction_.transform(X)

    def inverse_transform(self, X):
        check_is_fitted(self, "reduction_")
        return np.atleast_2d(np.asarray(X, dtype=float)) @ self.components_.T


@dataclass(frozen=True)
class ConditionReport:
    kappa_hat: float
    l_hat: float
    tau_hat: float
    f_counts: tuple
    non_orthogonal_counts: tuple
    c1_ok: bool
    c2_ok: bool
    c3_ok: bool
    c4_metric: float
    best_subset: tuple = field(default=())
    subset_mode: str = "exhaustive"

    def to_json(self) -> dict:
        return {
            "kappa_hat": self.kappa_hat,
            "l_hat": self.l_hat,
            "tau_hat": self.tau_hat,
            "f_counts": list(self.f_counts),
            "non_orthogonal_counts": list(self.non_orthogonal_counts),
            "c1_ok": self.c1_ok,
            "c2_ok": self.c2_ok,
            "c3_ok": self.c3_ok,
            "c4_metric": self.c4_metric,
            "best_subset": list(self.best_subset),
            "subset_mode": self.subset_mode,
        }


def _close(x, y, tol=1e-12) -> bool:
    return abs(x - y) <= tol


def non_orthogonal_counts(gram: np.ndarray) -> np.ndarray:
    """For each column of ``gram``, how many other columns are not orthogonal to it."""
    norms = np.linalg.norm(gram, axis=0)
    inner = np.abs(gram.T @ gram)
    nonortho = inner > ORTHO_RTOL * np.outer(norms, norms)
    np.fill_diagonal(nonortho, False)
    return nonortho.sum(axis=1)


def condition_metrics(a: AffinityMatrix, t: int) -> ConditionReport:
    """Finite-size estimates of the receptor, sparsity and rank exponents.

    ``t`` is the rank of ``a`` (as returned by :func:`svd_reduction`).
    Indicator ``[kappa_hat < 1]`` and the C3 interval ends are evaluated
    with an absolute slack of 1e-12 since the exponents come from logs.
    """
    t = check_positive_int(t, "t")
    if a.k == 1 or a.n == 1:
        raise ValidationError("exponent estimates need K >= 2 and N >= 2")
    if t > min(a.k, a.n):
        raise ValidationError(f"t ({t}) exceeds min(K, N) = {min(a.k, a.n)}")
    kappa_hat = math.log(a.k) / math.log(a.n)
    f = a.f_counts
    if t == 1:
        l_hat = 0.0
    else:
        l_hat = max((math.log(fk) / math.log(t) if fk > 1 else 0.0) for fk in f)
    tau_hat = math.log(t) / math.log(a.k)

    mode = "exhaustive" if math.comb(a.n, t) <= EXHAUSTIVE_LIMIT else "greedy"
    subset = best_column_subset(a.entries, t, mode)
    cols = a.entries[:, list(subset)]
    counts = non_orthogonal_counts(cols.T @ cols)

    c1 = 0 < kappa_hat <= 1 + 1e-12
    c2 = l_hat < 1
    below_one = 1.0 if kappa_hat < 1 and not _close(kappa_hat, 1) else 0.0
    c3 = 1 / (kappa_hat + below_one * l_hat) <= tau_hat + 1e-12 and tau_hat <= 1 + 1e-12
    return ConditionReport(
        kappa_hat=kappa_hat,
        l_hat=l_hat,
        tau_hat=tau_hat,
        f_counts=tuple(int(x) for x in f),
        non_orthogonal_counts=tuple(int(x) for x in counts),
        c1_ok=bool(c1),
        c2_ok=bool(c2),
        c3_ok=bool(c3),
        c4_metric=float(counts.max() / t) if counts.size else 0.0,
        best_subset=subset,
        subset_mode=mode,
    )


def _subset_chunks(n, t):
    it = itertools.combinations(range(n), t)
    while True:
        block = list(itertools.islice(it, _SUBSET_CHUNK))
        if not block:
            return
        yield np.asarray(block, dtype=np.intp).reshape(len(block), t)


def _gram_dets(abar: np.ndarray, subsets: np.ndarray) -> np.ndarray:
    cols = abar[:, subsets]                 # (K, S, t)
    cols = np.moveaxis(cols, 1, 0)          # (S, K, t)
    gram = np.einsum("skt,sku->stu", cols, cols)
    return np.linalg.det(gram)


def _check_rank(abar, t):
    rank = numerical_rank(abar)
    if rank != t:
        raise ValidationError(f"t ({t}) does not match rank(abar) = {rank}")


def zonotope_volume(abar, t: int, c_avg: float, mode: str = "exhaustive", *,
                    subset_samples: int = 100_000, seed: int = 0) -> float:
    """T-dimensional volume of the image of the cube ``[0, c_avg]^N`` under ``abar``.

    Evaluated as ``c_avg**t * sum_G sqrt(det(abar_G^T abar_G))`` over all
    size-``t`` column subsets ``G``. Determinants within ``-1e-12`` of zero
    are clamped to zero. ``mode="monte_carlo_subsets"`` averages over
    ``subset_samples`` uniformly drawn subsets and rescales by the subset count.
    """
    abar = check_matrix(abar, "abar")
    t = check_positive_int(t, "t")
    c_avg = check_positive(c_avg, "c_avg")
    _check_rank(abar, t)
    n = abar.shape[1]
    total = math.comb(n, t)

    if mode == "exhaustive":
        if total > EXHAUSTIVE_LIMIT:
            raise ValidationError(f"{total} column subsets exceed the exhaustive limit {EXHAUSTIVE_LIMIT}")
        acc = 0.0
        for block in _subset_chunks(n, t):
            acc += float(np.sqrt(_clamp_dets(_gram_dets(abar, block))).sum())
    elif mode == "monte_carlo_subsets":
        rng = np.random.default_rng(seed)
        subsets = np.sort(np.argsort(rng.random((subset_samples, n)), axis=1)[:, :t], axis=1)
        dets = _clamp_dets(_gram_dets(abar, subsets))
        acc = float(np.sqrt(dets).mean()) * total
    else:
        raise ValidationError(f"unknown mode {mode!r}")
    return c_avg ** t * acc


def _clamp_dets(dets: np.ndarray) -> np.ndarray:
    if np.any(dets < -1e-12):
        raise ArithmeticError(f"Gram determinant {dets.min():.3e} is materially negative")
    return np.clip(dets, 0.0, None)


def best_column_subset(abar, t: int, mode: str = "exhaustive") -> tuple:
    """Column subset of size ``t`` maximising ``det(abar_G^T abar_G)``.

    Exhaustive mode breaks ties toward the lexicographically smallest
    subset. Greedy mode adds, one at a time, the column with the largest
    residual norm against the span of those already chosen (which maximises
    the determinant increment), lowest index on ties.
    """
    abar = check_matrix(abar, "abar")
    t = check_positive_int(t, "t")
    n = abar.shape[1]
    if t > n:
        raise ValidationError(f"t ({t}) exceeds the column count {n}")

    if mode == "exhaustive":
        if math.comb(n, t) > EXHAUSTIVE_LIMIT:
            raise ValidationError(f"{math.comb(n, t)} column subsets exceed the exhaustive limit")
        best_val, best = -np.inf, None
        for block in _subset_chunks(n, t):
            dets = _gram_dets(abar, block)
            i = int(np.argmax(dets))
            # strict improvement beyond round-off keeps the earliest subset on ties
            if best is None or dets[i] > best_val + 1e-12 * max(1.0, abs(best_val)):
                hi = dets[i] - 1e-12 * max(1.0, abs(dets[i]))
                first = int(np.argmax(dets >= hi))
                best_val, best = dets[first], block[first]
        return tuple(int(c) for c in best)

    if mode == "greedy":
        residual = abar.copy()
        chosen: list[int] = []
        for _ in range(t):
            norms = np.einsum("kn,kn->n", residual, residual)
            norms[chosen] = -1.0
            top = norms.max()
            c = int(np.argmax(norms >= top - 1e-12 * max(1.0, top)))
            chosen.append(c)
            q = residual[:, c]
            qn = float(q @ q)
            if qn > 0:
                residual = residual - np.outer(q, q @ residual) / qn
        return tuple(sorted(chosen))

    raise ValidationError(f"unknown mode {mode!r}")


def hadamard_bound(m) -> float:
    """Product of column Euclidean norms, an upper bound on ``|det(m)|``."""
    m = check_matrix(m, "m", square=True)
    return float(np.prod(np.linalg.norm(m, axis=0)))


def min_gain(b) -> float:
    """Smallest singular value: the least stretch ``||b x|| / ||x||``."""
    b = check_matrix(b, "b", square=True)
    s = np.linalg.svd(b, compute_uv=False)
    if s[0] == 0 or s[-1] <= RANK_RTOL * s[0]:
        raise ValidationError("b is rank deficient")
    return float(s[-1])
