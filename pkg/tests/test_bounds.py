import csv
import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from idpoisson import ValidationError
from idpoisson.bounds import (
    capacity_bounds,
    codebook_size,
    converse_threshold,
    density_bounds,
    fmt,
    type1_bound,
    type2_bound,
    write_bounds_csv,
)


class TestCapacity:
    def test_identity_case(self):
        cb = capacity_bounds(1, 0)
        assert (cb.lower, cb.upper) == (0.25, 1.5)
        assert cb.regime == "kappa_eq_1"

    @pytest.mark.parametrize("l", [0.0, 0.05, 0.1, 0.15, 0.2])
    def test_unit_kappa_family(self, l):
        cb = capacity_bounds(1, l)
        assert abs(cb.lower - (0.25 - l)) <= 1e-12
        assert abs(cb.upper - (1.5 + l)) <= 1e-12

    def test_sub_unit_kappa(self):
        cb = capacity_bounds(0.8, 0.05)
        assert cb.lower == pytest.approx(0.25)
        assert cb.upper == pytest.approx(1.45)
        assert cb.regime == "kappa_lt_1"

    def test_clamp_and_flag(self):
        cb = capacity_bounds(1, 0.3)
        assert cb.lower == pytest.approx(-0.05)
        assert cb.lower_clamped == 0.0
        assert cb.l_outside_proven_range

    @pytest.mark.parametrize("kappa", [0.0, 1.0000001, -1])
    def test_kappa_range(self, kappa):
        with pytest.raises(ValidationError):
            capacity_bounds(kappa, 0.0)

    def test_jump_at_unit_kappa(self):
        l = 0.1
        below = capacity_bounds(1 - 1e-12, l).upper
        assert below - capacity_bounds(1, l).upper == pytest.approx(2 * l, abs=1e-9)

    @given(st.floats(0.01, 0.99), st.floats(0.0, 0.9), st.floats(1e-3, 0.05))
    def test_monotone_within_regime(self, kappa, l, d):
        base = capacity_bounds(kappa, l)
        if kappa + d < 1:
            nk = capacity_bounds(kappa + d, l)
            assert nk.lower < base.lower and nk.upper > base.upper
        if l + d < 1:
            nl = capacity_bounds(kappa, l + d)
            assert nl.lower < base.lower and nl.upper > base.upper
        assert base.lower <= base.upper


class TestThresholds:
    def test_converse(self):
        assert converse_threshold(1, 1, 0, 0, 4) == pytest.approx(0.25)
        assert converse_threshold(1, 1, 0, 0, 1) == 1.0
        assert converse_threshold(2, 0.5, 0.1, 0, 16) == pytest.approx(2 / 16 ** 0.7)
        assert converse_threshold(2, 0.5, 0.1, 0, 16) == pytest.approx(0.2872, abs=1e-4)

    def test_converse_unit_kappa_exponent(self):
        assert converse_threshold(1, 1, 0.2, 0.3, 10) == pytest.approx(10 ** -(1 + 0.2 + 0.3))

    def test_density(self):
        lo, hi = density_bounds(1)
        assert lo == 0.5 and hi == pytest.approx(0.66021, abs=1e-5)
        assert density_bounds(10) == (2.0 ** -10, 2.0 ** -5.99)

    @given(st.integers(1, 500))
    def test_density_ordered(self, t):
        lo, hi = density_bounds(t)
        assert lo <= hi

    def test_codebook_size(self):
        assert codebook_size(0.5, 4) == (16.0, 4.0)
        assert codebook_size(0, 8)[0] == 1.0
        assert codebook_size(0.25, 16)[0] == 2.0 ** 16

    def test_codebook_size_overflow(self):
        value, log2m = codebook_size(1.0, 2000)
        assert value == math.inf and log2m == pytest.approx(2000 * math.log2(2000))

    def test_codebook_size_small_t(self):
        with pytest.raises(ValidationError):
            codebook_size(0.5, 1)


class TestErrorBounds:
    def test_unit_parameters(self):
        assert type1_bound(1, 1, 1, 1, 1, 1, 1.0) == pytest.approx(210)
        assert type1_bound(2, 1, 1, 1, 1, 1, 1.0) == pytest.approx(2380)

    def test_decreasing_in_t(self):
        vals = [type1_bound(1, 1, 1, 1, 1, t, 0.5) for t in (1, 2, 4, 8)]
        assert all(a > b for a, b in zip(vals, vals[1:]))

    def test_type2_exceeds_type1(self):
        args = (1, 1.0, 1.0, 10.0, 1.0, 16, 0.58)
        assert type2_bound(*args) > type1_bound(*args)
        big_a = 11.0
        cross = 16 * 100 * big_a / (16 * 0.58 ** 2)
        assert type2_bound(*args) - type1_bound(*args) == pytest.approx(cross)


class TestCsv:
    def test_single_row(self, tmp_path):
        path = write_bounds_csv([1], [0], tmp_path / "b.csv")
        lines = path.read_text().splitlines()
        assert lines == ["kappa,l,lower_raw,lower_clamped,upper", "1,0,0.25,0.25,1.5"]

    def test_clamped_row(self, tmp_path):
        path = write_bounds_csv([1], [0.3], tmp_path / "b.csv")
        row = next(csv.DictReader(path.open()))
        assert float(row["lower_raw"]) == pytest.approx(-0.05)
        assert float(row["lower_clamped"]) == 0.0

    def test_empty_grid(self, tmp_path):
        with pytest.raises(ValidationError):
            write_bounds_csv([], [0], tmp_path / "b.csv")

    def test_fmt(self):
        assert fmt(None) == "" and fmt(True) == "1" and fmt(3) == "3"
        assert fmt(1 / 3) == "0.333333333333"
