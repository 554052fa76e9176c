import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from idpoisson import ValidationError
from idpoisson.affinity import AffinityMatrix, gen_identity
from idpoisson.channel import (
    ChannelParams,
    derive_seed,
    log_likelihood,
    make_channel,
    mean_vector,
    mix64,
    sample,
    spawn_rng,
)


def _channel(rows, v, lam):
    rows = np.asarray(rows, dtype=float)
    nz = rows[rows > 0]
    return make_channel(AffinityMatrix(rows, nz.min(), nz.max()), v, lam)


class TestMean:
    def test_scalar(self):
        ch = make_channel(gen_identity(1), 1.0, 1.0)
        np.testing.assert_allclose(mean_vector(ch, [2.0]), [3.0])

    def test_zero_input(self):
        ch = make_channel(gen_identity(2), 1.0, 0.5)
        np.testing.assert_allclose(mean_vector(ch, [0.0, 0.0]), [0.5, 0.5])

    def test_gains(self):
        ch = _channel([[1.0, 2.0]], [1.0, 0.5], [1.0])
        np.testing.assert_allclose(mean_vector(ch, [1.0, 1.0]), [3.0])
        np.testing.assert_array_equal(ch.abar, [[1.0, 1.0]])

    def test_negative_rate(self):
        ch = make_channel(gen_identity(2))
        with pytest.raises(ValidationError):
            mean_vector(ch, [1.0, -0.1])

    def test_batch(self):
        ch = make_channel(gen_identity(2), 2.0, 1.0)
        np.testing.assert_allclose(mean_vector(ch, [[0, 0], [1, 2]]), [[1, 1], [3, 5]])

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.floats(0, 50), min_size=3, max_size=3),
           st.lists(st.floats(0, 50), min_size=3, max_size=3))
    def test_affine(self, x1, x2):
        ch = _channel([[1.0, 0.5, 0.0], [0.2, 1.0, 2.0]], [1.0, 2.0, 0.5], [0.3, 1.5])
        lhs = mean_vector(ch, np.add(x1, x2)) - ch.lam
        rhs = (mean_vector(ch, x1) - ch.lam) + (mean_vector(ch, x2) - ch.lam)
        np.testing.assert_allclose(lhs, rhs, rtol=1e-12, atol=1e-12)


class TestParams:
    def test_range_violation(self):
        with pytest.raises(ValidationError):
            make_channel(gen_identity(2), [1.0, 3.0], 1.0, v_range=(1.0, 2.0))

    def test_nonpositive_lambda(self):
        with pytest.raises(ValidationError):
            make_channel(gen_identity(2), 1.0, 0.0)

    def test_json_roundtrip(self):
        ch = make_channel(gen_identity(3), [1.0, 2.0, 3.0], 0.5, v_range=(0.5, 4.0))
        back = ChannelParams.from_json(ch.to_json())
        assert back.abar.tobytes() == ch.abar.tobytes()
        assert back.v_min == 0.5 and back.v_max == 4.0

    def test_immutable(self):
        ch = make_channel(gen_identity(2))
        with pytest.raises(ValueError):
            ch.abar[0, 0] = 5.0


class TestSampling:
    def test_deterministic(self):
        ch = make_channel(gen_identity(4), 1.0, 2.0)
        y1 = sample(ch, [1, 2, 3, 4], spawn_rng(5, 1))
        y2 = sample(ch, [1, 2, 3, 4], spawn_rng(5, 1))
        assert y1.tolist() == y2.tolist()

    def test_mean_and_variance(self):
        ch = make_channel(gen_identity(1), 1.0, 1.0)
        y = sample(ch, [2.0], spawn_rng(0), size=10**6)[:, 0]
        assert abs(y.mean() - 3.0) <= 3 * math.sqrt(3 / 10**6)
        assert abs(y.var() - 3.0) <= 0.05

    def test_shape(self):
        ch = make_channel(gen_identity(3))
        assert sample(ch, [0, 0, 0], spawn_rng(0), size=(7,)).shape == (7, 3)


class TestLikelihood:
    def test_zero_count(self):
        ch = make_channel(gen_identity(1), 1.0, 1.0)
        assert log_likelihood(ch, [0.0], [0]) == pytest.approx(-1.0)

    def test_hand_value(self):
        ch = make_channel(gen_identity(1), 1.0, 1.0)
        assert log_likelihood(ch, [2.0], [2]) == pytest.approx(-3 + 2 * math.log(3) - math.log(2))

    def test_product(self):
        ch = make_channel(gen_identity(2), 1.0, 2.0)
        assert log_likelihood(ch, [0.0, 0.0], [0, 0]) == pytest.approx(-4.0)

    def test_rejects_fractional(self):
        ch = make_channel(gen_identity(1))
        with pytest.raises(ValidationError):
            log_likelihood(ch, [0.0], [0.5])

    @pytest.mark.parametrize("mu", [0.5, 5.0, 20.0])
    def test_normalisation(self, mu):
        ch = make_channel(gen_identity(1), 1.0, mu)
        total = sum(math.exp(log_likelihood(ch, [0.0], [y])) for y in range(201))
        assert total == pytest.approx(1.0, abs=1e-9)


class TestSeeding:
    def test_mix_known_value(self):
        # first SplitMix64 output for state 0
        assert mix64(0) == 0xE220A8397B1DCDAF

    def test_paths_differ(self):
        assert derive_seed(1, 0, 1) != derive_seed(1, 1, 0)
        assert derive_seed(1, 2) == derive_seed(1, 2)
        assert 0 <= derive_seed(-5, 3) < 2**64
