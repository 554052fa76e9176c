"""Independent brute-force and Monte Carlo checks of the finite-size results.

Each check yields an :class:`OracleReport` comparing a closed form against
an oracle that does not share its code path.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from ._validation import ValidationError, check_matrix, check_positive, check_positive_int
from .affinity import (
    AffinityMatrix,
    ReductionMap,
    gen_identity,
    hadamard_bound,
    min_gain,
    svd_reduction,
    zonotope_volume,
)
from .channel import ChannelParams, log_likelihood, make_channel, spawn_rng
from .codebook import Codebook, construct_greedy, min_distance_reduced, packing_radius

GRID_CELLS = 512
MIN_SAMPLES_PER_CELL = 4
_CHUNK = 250_000


@dataclass(frozen=True)
class OracleReport:
    name: str
    closed_form_value: float
    oracle_value: float
    tolerance: float
    passed: bool
    samples_or_cases: int
    kind: str = "absolute"

    @classmethod
    def compare(cls, name, closed, oracle, tol, cases, kind="absolute") -> "OracleReport":
        closed, oracle = float(closed), float(oracle)
        gap = abs(closed - oracle)
        if kind == "relative":
            gap /= max(abs(closed), np.finfo(float).tiny)
        return cls(name, closed, oracle, float(tol), bool(gap <= tol), int(cases), kind)

    def to_json(self) -> dict:
        doc = asdict(self)
        doc["pass"] = doc.pop("passed")
        return doc


def poisson_moment4_exact(lam: float) -> float:
    """``lam^4 + 6 lam^3 + 7 lam^2 + lam``.

    This is the fourth raw moment ``E[X^4]`` of ``X ~ Pois(lam)``. It is not
    the central moment ``E[(X - lam)^4]``, which is
    :func:`poisson_central_moment4_exact`; both lie below
    :func:`poisson_moment4_bound`.
    """
    lam = check_positive(lam, "lam")
    return lam ** 4 + 6 * lam ** 3 + 7 * lam ** 2 + lam


def poisson_central_moment4_exact(lam: float) -> float:
    """``E[(X - lam)^4] = 3 lam^2 + lam`` for ``X ~ Pois(lam)``."""
    lam = check_positive(lam, "lam")
    return 3 * lam ** 2 + lam


def poisson_moment4_bound(lam: float) -> float:
    lam = check_positive(lam, "lam")
    return 7 * (lam ** 4 + lam ** 3 + lam ** 2 + lam)


def poisson_moment4_mc(lam: float, samples: int, rng: np.random.Generator, *,
                       central: bool = True) -> tuple[float, float]:
    """Sample mean of ``(X - lam)**4`` (or ``X**4`` if not ``central``) and its standard error."""
    lam = check_positive(lam, "lam")
    samples = check_positive_int(samples, "samples", minimum=10_000)
    x = rng.poisson(lam, size=samples).astype(float)
    d4 = (x - lam) ** 4 if central else x ** 4
    return float(d4.mean()), float(d4.std(ddof=1) / math.sqrt(samples))


def zonotope_volume_mc(abar, red: ReductionMap, c_avg: float, samples: int,
                       rng: np.random.Generator) -> tuple[float, float]:
    """Volume of the image of ``[0, c_avg]^N`` in reduced coordinates, by grid occupancy.

    Cube samples (half uniform, half on random T-faces) are mapped to the
    reduced space; the cells they touch form the occupancy set. The cell
    edge is ``diag / 512`` of the images' bounding box, coarsened if needed
    so the box averages at least four samples per cell. Fresh uniform
    samples of the bounding box are then hit-tested against it. Returns ``(estimate, band)`` where ``band`` is the
    volume of occupied cells with an unoccupied axis neighbour.
    """
    abar = check_matrix(abar, "abar")
    c_avg = check_positive(c_avg, "c_avg")
    samples = check_positive_int(samples, "samples", minimum=100_000)
    t = red.t
    if t > 3:
        raise ValidationError(f"grid occupancy supports T <= 3, got {t}")
    n = abar.shape[1]

    def images(count):
        for lo in range(0, count, _CHUNK):
            size = min(_CHUNK, count - lo)
            x = rng.uniform(0.0, c_avg, size=(size, n))
            # pin N - T coordinates of every other sample to a cube face: each
            # image point has a preimage on some T-face, and the uniform
            # interior alone almost never reaches the zonotope's corners
            face = x[::2]
            order = np.argsort(rng.random(face.shape), axis=1)[:, :n - t]
            ends = c_avg * rng.integers(0, 2, size=order.shape)
            np.put_along_axis(face, order, ends, axis=1)
            yield red.transform(x @ abar.T)

    pts = np.concatenate(list(images(samples)))
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    span = hi - lo
    h = float(np.linalg.norm(span)) / GRID_CELLS
    if h == 0:
        return 0.0, 0.0
    # coarsen when the samples cannot populate the grid; an undersampled grid
    # has holes and underestimates
    h = max(h, (float(np.prod(np.maximum(span, h))) * MIN_SAMPLES_PER_CELL / samples) ** (1.0 / t))
    dims = np.maximum(1, np.ceil((hi - lo) / h).astype(np.int64))

    def cell_keys(p):
        idx = np.floor((p - lo) / h).astype(np.int64)
        idx = np.clip(idx, 0, dims - 1)
        return np.ravel_multi_index(idx.T, dims)

    occupied = np.unique(cell_keys(pts))

    def is_occupied(keys):
        pos = np.searchsorted(occupied, keys)
        pos = np.minimum(pos, occupied.size - 1)
        return occupied[pos] == keys

    hits = 0
    for start in range(0, samples, _CHUNK):
        size = min(_CHUNK, samples - start)
        probe = lo + rng.random((size, t)) * (hi - lo)
        hits += int(np.count_nonzero(is_occupied(cell_keys(probe))))
    box = float(np.prod(hi - lo))
    estimate = box * hits / samples

    coords = np.stack(np.unravel_index(occupied, dims), axis=1)
    surface = np.zeros(occupied.size, dtype=bool)
    for axis in range(t):
        for step in (-1, 1):
            nb = coords.copy()
            nb[:, axis] += step
            outside = (nb[:, axis] < 0) | (nb[:, axis] >= dims[axis])
            inside_keys = np.ravel_multi_index(np.clip(nb, 0, dims - 1).T, dims)
            surface |= outside | ~is_occupied(inside_keys)
    band = int(surface.sum()) * h ** t
    return estimate, band


def converse_pairwise_report(cb: Codebook, ch: ChannelParams, theta_t: float) -> tuple[int, int]:
    """Count ordered pairs with some receptor where ``|1 - d^{i2}_k / d^{i1}_k| > theta_t``.

    ``d^i = affine[i] + lambda``. Returns ``(satisfying_pairs, total_pairs)``.
    """
    theta_t = check_positive(theta_t, "theta_t")
    if cb.m < 2:
        raise ValidationError("pairwise report needs at least two codewords")
    d = cb.affine + ch.lam
    satisfied = 0
    for i1 in range(cb.m):
        ratio = np.abs(1.0 - d / d[i1])          # row i2 against i1
        ok = (ratio > theta_t).any(axis=1)
        ok[i1] = False
        satisfied += int(ok.sum())
    return satisfied, cb.m * (cb.m - 1)


def isometry_report(cases: int, rng: np.random.Generator) -> float:
    """Largest relative gap between affine and reduced pairwise distances."""
    worst = 0.0
    for _ in range(cases):
        k, n = int(rng.integers(2, 7)), int(rng.integers(2, 7))
        r = int(rng.integers(1, min(k, n) + 1))
        abar = np.abs(rng.standard_normal((k, r)) @ rng.standard_normal((r, n)))
        red = svd_reduction(abar)
        x = rng.uniform(0.0, 5.0, size=(2, n))
        aff = x @ abar.T
        d_aff = np.linalg.norm(aff[0] - aff[1])
        d_red = np.linalg.norm(red.transform(aff[0]) - red.transform(aff[1]))
        if d_aff > 0:
            worst = max(worst, abs(d_red - d_aff) / d_aff)
    return worst


def pmf_total(ch: ChannelParams, x, cutoff: int) -> float:
    """Sum of the channel pmf over counts ``0..cutoff`` in each receptor (K <= 3)."""
    if ch.k > 3:
        raise ValidationError("pmf enumeration supports K <= 3")
    grid = np.stack(np.meshgrid(*[np.arange(cutoff + 1)] * ch.k, indexing="ij"), -1).reshape(-1, ch.k)
    return float(sum(math.exp(log_likelihood(ch, x, y)) for y in grid))


@dataclass(frozen=True)
class SubmatrixSVReport:
    min_sv_mean: float
    min_sv_min: float
    max_sv: float
    count_violations: int
    norm_violations: int
    trials: int


def haar_orthogonal(k: int, rng: np.random.Generator) -> np.ndarray:
    q, r = np.linalg.qr(rng.standard_normal((k, k)))
    return q * np.sign(np.diag(r))


def unitary_submatrix_sv_report(k: int, t: int, trials: int, rng: np.random.Generator) -> SubmatrixSVReport:
    """Singular values of leading t x t blocks of random orthogonal k x k matrices.

    Counts trials where more than ``k - t`` singular values fall below
    ``1 - 1e-9`` or any exceeds ``1 + 1e-9``.
    """
    k = check_positive_int(k, "k")
    t = check_positive_int(t, "t")
    trials = check_positive_int(trials, "trials")
    if t > k:
        raise ValidationError(f"t ({t}) exceeds k ({k})")
    mins, top = [], 0.0
    count_bad = norm_bad = 0
    for _ in range(trials):
        s = np.linalg.svd(haar_orthogonal(k, rng)[:t, :t], compute_uv=False)
        mins.append(s.min())
        top = max(top, s.max())
        count_bad += int(np.sum(s < 1 - 1e-9) > k - t)
        norm_bad += int(np.any(s > 1 + 1e-9))
    return SubmatrixSVReport(float(np.mean(mins)), float(np.min(mins)), float(top),
                             count_bad, norm_bad, trials)


VOLUME_BATTERY = (
    ("identity_2x2", [[1.0, 0.0], [0.0, 1.0]]),
    ("hexagon_2x3", [[1.0, 0.0, 1.0], [0.0, 1.0, 1.0]]),
    ("skew_2x4", [[1.0, 0.5, 0.0, 2.0], [0.0, 1.0, 1.5, 0.5]]),
    ("rank2_3x5", [[1.0, 0.0, 1.0, 2.0, 0.5], [0.0, 1.0, 1.0, 0.0, 1.5], [1.0, 1.0, 2.0, 2.0, 2.0]]),
    ("rank1_4x3", [[1.0, 2.0, 0.5], [2.0, 4.0, 1.0], [0.5, 1.0, 0.25], [1.0, 2.0, 0.5]]),
)

FAULTS = ("moment4", "zonotope", "hadamard")


def run_battery(seed: int = 0, fault: str | None = None, *, moment_samples: int = 10**6,
                volume_samples: int = 10**6, cases: int = 1000) -> list[OracleReport]:
    """Run every oracle check. ``fault`` corrupts one closed form on purpose."""
    if fault is not None and fault not in FAULTS:
        raise ValidationError(f"unknown fault {fault!r}; choose from {FAULTS}")
    reports = []
    corrupt = 1.1

    for i, lam in enumerate((0.5, 1.0, 5.0)):
        scale = corrupt if fault == "moment4" else 1.0
        for j, (label, closed, central) in enumerate((
                ("poisson_raw_moment4", poisson_moment4_exact(lam), False),
                ("poisson_central_moment4", poisson_central_moment4_exact(lam), True))):
            est, se = poisson_moment4_mc(lam, moment_samples, spawn_rng(seed, 10, i, j),
                                         central=central)
            reports.append(OracleReport.compare(f"{label}[lam={lam}]", closed * scale, est,
                                                4 * se, moment_samples))

    # the bound must dominate the true central moment, and the raw one too
    grid = (0.1, 0.5, 1.0, 2.0, 5.0, 10.0)
    bad = sum(not (poisson_central_moment4_exact(x) < poisson_moment4_bound(x)
                   and poisson_moment4_exact(x) < poisson_moment4_bound(x)) for x in grid)
    reports.append(OracleReport.compare("poisson_moment4_bound", 0, bad, 0, len(grid)))

    for i, (name, m) in enumerate(VOLUME_BATTERY):
        abar = np.asarray(m)
        red = svd_reduction(abar)
        closed = zonotope_volume(abar, red.t, 1.0) * (corrupt if fault == "zonotope" else 1.0)
        est, _ = zonotope_volume_mc(abar, red, 1.0, volume_samples, spawn_rng(seed, 20, i))
        reports.append(OracleReport.compare(f"zonotope_volume[{name}]", closed, est, 0.03,
                                            volume_samples, "relative"))

    rng = spawn_rng(seed, 30)
    bad = 0
    for _ in range(cases):
        d = int(rng.integers(2, 9))
        x = rng.standard_normal((d, d))
        bound = hadamard_bound(x) * (1 / corrupt ** 8 if fault == "hadamard" else 1.0)
        bad += abs(np.linalg.det(x)) > bound * (1 + 1e-9)
    reports.append(OracleReport.compare("hadamard_bound", 0, bad, 0, cases))

    rng = spawn_rng(seed, 40)
    bad = 0
    for _ in range(cases):
        d = int(rng.integers(2, 9))
        b = rng.standard_normal((d, d))
        x = rng.standard_normal(d)
        bad += np.linalg.norm(b @ x) < min_gain(b) * np.linalg.norm(x) - 1e-9
    reports.append(OracleReport.compare("min_gain", 0, bad, 0, cases))

    rng = spawn_rng(seed, 50)
    count_bad = norm_bad = 0
    for _ in range(cases):
        k = int(rng.integers(4, 9))
        t = int(rng.integers(1, k))
        rep = unitary_submatrix_sv_report(k, t, 1, rng)
        count_bad += rep.count_violations
        norm_bad += rep.norm_violations
    reports.append(OracleReport.compare("unitary_submatrix_count", 0, count_bad, 0, cases))
    reports.append(OracleReport.compare("unitary_submatrix_norm", 0, norm_bad, 0, cases))

    worst = isometry_report(100, spawn_rng(seed, 70))
    reports.append(OracleReport.compare("reduction_isometry", 0, worst, 1e-9, 100))

    ch = make_channel(AffinityMatrix(np.array([[1.0, 0.5], [0.0, 2.0]]), 0.5, 2.0), [1.0, 0.5], [0.3, 1.2])
    reports.append(OracleReport.compare("pmf_normalization", 1.0, pmf_total(ch, [0.7, 1.3], 60),
                                        1e-9, 61 ** 2))

    # minimum distance of a greedy codebook against the squared-distance guarantee
    t = 8
    ch = make_channel(gen_identity(t), 1.0, 1.0)
    red = svd_reduction(ch.abar)
    eps, r0 = packing_radius(1.0, 0.4, 1.0, 0.0, t)
    cb = construct_greedy(ch, red, 10.0, 10.0, r0, 500, int(spawn_rng(seed, 60).integers(2**31)))
    dmin = min_distance_reduced(cb) if cb.m >= 2 else math.inf
    reports.append(OracleReport.compare("min_distance_guarantee", 0, int(dmin ** 2 < 4 * t * eps),
                                        0, cb.m))
    return reports
