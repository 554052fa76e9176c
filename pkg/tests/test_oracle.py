import numpy as np
import pytest

from idpoisson import ValidationError
from idpoisson.affinity import gen_identity, svd_reduction, zonotope_volume
from idpoisson.bounds import converse_threshold
from idpoisson.channel import make_channel, spawn_rng
from idpoisson.codebook import Codebook, construct_greedy
from idpoisson.oracle import (
    VOLUME_BATTERY,
    OracleReport,
    converse_pairwise_report,
    haar_orthogonal,
    isometry_report,
    pmf_total,
    poisson_central_moment4_exact,
    poisson_moment4_bound,
    poisson_moment4_exact,
    poisson_moment4_mc,
    run_battery,
    unitary_submatrix_sv_report,
    zonotope_volume_mc,
)


class TestMoments:
    def test_closed_forms(self):
        assert poisson_moment4_exact(1) == 15
        assert poisson_moment4_exact(2) == 94
        assert poisson_moment4_bound(1) == 28
        assert poisson_central_moment4_exact(1) == 4

    @pytest.mark.parametrize("lam", [0.1, 0.5, 1, 2, 5, 10])
    def test_bound_dominates(self, lam):
        assert poisson_central_moment4_exact(lam) < poisson_moment4_bound(lam)
        assert poisson_moment4_exact(lam) < poisson_moment4_bound(lam)

    @pytest.mark.parametrize("lam", [0.5, 1.0, 5.0])
    def test_raw_moment_mc(self, lam):
        est, se = poisson_moment4_mc(lam, 10**6, spawn_rng(1, int(lam * 10)), central=False)
        assert abs(est - poisson_moment4_exact(lam)) <= 4 * se

    @pytest.mark.parametrize("lam", [0.5, 1.0, 5.0])
    def test_central_moment_mc(self, lam):
        est, se = poisson_moment4_mc(lam, 10**6, spawn_rng(2, int(lam * 10)))
        assert abs(est - poisson_central_moment4_exact(lam)) <= 4 * se

    def test_deterministic(self):
        assert poisson_moment4_mc(1.0, 10**4, spawn_rng(3)) == poisson_moment4_mc(1.0, 10**4, spawn_rng(3))

    def test_minimum_samples(self):
        with pytest.raises(ValidationError):
            poisson_moment4_mc(1.0, 100, spawn_rng(0))


class TestZonotopeMc:
    def test_unit_square(self):
        red = svd_reduction(np.eye(2))
        est, band = zonotope_volume_mc(np.eye(2), red, 1.0, 10**5, spawn_rng(0))
        assert est == pytest.approx(1.0, rel=0.03)
        assert band > 0

    def test_hexagon(self):
        abar = np.array([[1.0, 0, 1], [0, 1, 1]])
        est, _ = zonotope_volume_mc(abar, svd_reduction(abar), 1.0, 10**6, spawn_rng(1))
        assert est == pytest.approx(3.0, rel=0.03)

    def test_scaling(self):
        abar = np.array([[1.0, 0, 1], [0, 1, 1]])
        est, _ = zonotope_volume_mc(abar, svd_reduction(abar), 2.0, 10**6, spawn_rng(1))
        assert est == pytest.approx(12.0, rel=0.03)

    def test_three_dimensional(self):
        abar = np.array([[1.0, 0, 0, 1], [0, 1, 0, 1], [0, 0, 1, 1]])
        est, _ = zonotope_volume_mc(abar, svd_reduction(abar), 1.0, 10**6, spawn_rng(2))
        assert est == pytest.approx(zonotope_volume(abar, 3, 1.0), rel=0.05)

    @pytest.mark.parametrize("name,m", VOLUME_BATTERY)
    def test_battery(self, name, m):
        abar = np.asarray(m)
        red = svd_reduction(abar)
        est, _ = zonotope_volume_mc(abar, red, 1.0, 10**6, spawn_rng(5))
        assert est == pytest.approx(zonotope_volume(abar, red.t, 1.0), rel=0.03)

    def test_dimension_cap(self):
        with pytest.raises(ValidationError):
            zonotope_volume_mc(np.eye(4), svd_reduction(np.eye(4)), 1.0, 10**5, spawn_rng(0))


class TestOtherOracles:
    def test_submatrix_singular_values(self):
        rep = unitary_submatrix_sv_report(6, 3, 200, spawn_rng(0))
        assert rep.count_violations == 0 and rep.norm_violations == 0
        assert rep.max_sv <= 1 + 1e-9
        # generic blocks are strictly contracting, so unit singular values are not given
        assert rep.min_sv_mean < 1

    def test_haar_is_orthogonal(self):
        q = haar_orthogonal(5, spawn_rng(1))
        np.testing.assert_allclose(q @ q.T, np.eye(5), atol=1e-12)

    def test_isometry(self):
        assert isometry_report(100, spawn_rng(3)) <= 1e-9

    def test_pmf(self):
        ch = make_channel(gen_identity(2), 1.0, [0.5, 3.0])
        assert pmf_total(ch, [1.0, 2.0], 80) == pytest.approx(1.0, abs=1e-9)

    def test_converse_pairs(self):
        ch = make_channel(gen_identity(2), 1.0, 1.0)
        red = svd_reduction(ch.abar)
        orig = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 0.01]])
        cb = Codebook(orig, orig, orig, 0.001, 1.0, 1.0, 0, 3, False)
        theta = converse_threshold(1.0, 1.0, 0.0, 0.0, 50)    # 0.02
        ok, total = converse_pairwise_report(cb, ch, theta)
        # the pair (0, 2) differs by 1% only, so both orderings fail
        assert (ok, total) == (4, 6)

    def test_converse_needs_two(self):
        ch = make_channel(gen_identity(1), 1.0, 1.0)
        red = svd_reduction(ch.abar)
        cb = construct_greedy(ch, red, 1.0, 1.0, 5.0, 3, 0)
        with pytest.raises(ValidationError):
            converse_pairwise_report(cb, ch, 0.1)

    def test_report_json(self):
        rep = OracleReport.compare("x", 1.0, 1.02, 0.03, 10, "relative")
        assert rep.passed and rep.to_json()["pass"] is True


class TestBattery:
    def test_all_pass(self):
        reports = run_battery(0, moment_samples=10**5, volume_samples=10**6, cases=200)
        failed = [r.name for r in reports if not r.passed]
        assert failed == []

    @pytest.mark.parametrize("fault", ["moment4", "zonotope", "hadamard"])
    def test_fault_detected(self, fault):
        reports = run_battery(0, fault, moment_samples=10**5, volume_samples=10**5, cases=200)
        assert any(not r.passed for r in reports)

    def test_unknown_fault(self):
        with pytest.raises(ValidationError):
            run_battery(0, "nonsense")
