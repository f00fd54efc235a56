import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from metastable.density import EXAMPLE_WEIGHTS
from metastable.errors import MetastableError
from metastable.stochastic import (TransitionMatrix, build_transition_matrix, check_beta,
                                   stationary_vector, verify_left_invariant)

from conftest import random_weights


class TestBuild:
    def test_two_cell(self):
        m = build_transition_matrix([0.5, 0.5], [0.5, 0.5])
        np.testing.assert_allclose(m.entries, [[0.75, 0.25], [0.25, 0.75]])

    @pytest.mark.parametrize("n, beta", [(3, 0.2), (5, 0.5), (10, 0.9)])
    def test_uniform_v(self, n, beta):
        m = build_transition_matrix(np.full(n, 1 / n), beta)
        np.testing.assert_allclose(m.entries, beta * np.eye(n) + (1 - beta) / n, atol=1e-15)

    def test_example_column_six(self):
        m = build_transition_matrix(EXAMPLE_WEIGHTS, 0.4).entries
        off = np.delete(m[:, 5], 5)
        np.testing.assert_allclose(off, 0.6 * 0.75, atol=1e-15)
        np.testing.assert_allclose(m, 0.4 * np.eye(10) + 0.6 * EXAMPLE_WEIGHTS, atol=1e-15)

    @pytest.mark.parametrize("beta", [0.0, 1.0, -0.2, [0.5, 1.2], np.nan])
    def test_bad_beta(self, beta):
        with pytest.raises(MetastableError):
            build_transition_matrix([0.5, 0.5], beta)

    def test_beta_length(self):
        with pytest.raises(ValueError):
            check_beta([0.1, 0.2, 0.3], 2)

    def test_immutable(self):
        m = build_transition_matrix([0.5, 0.5], 0.5)
        with pytest.raises(ValueError):
            m.entries[0, 0] = 1.0

    def test_csv_round_trip(self, tmp_path):
        m = build_transition_matrix(EXAMPLE_WEIGHTS, 0.4)
        m.to_csv(tmp_path / "M.csv")
        back = TransitionMatrix.from_csv(tmp_path / "M.csv")
        np.testing.assert_array_equal(back.entries, m.entries)
        np.testing.assert_array_equal(back.v, m.v)
        np.testing.assert_array_equal(back.beta, m.beta)

    @settings(max_examples=100)
    @given(st.integers(2, 30), st.integers(0, 2**32 - 1))
    def test_row_stochastic_and_invariant(self, n, seed):
        rng = np.random.default_rng(seed)
        v = random_weights(rng, n)
        m = build_transition_matrix(v, rng.uniform(0.01, 0.99, n))
        assert np.all(m.entries >= 0)
        np.testing.assert_allclose(m.entries.sum(axis=1), 1.0, atol=1e-14)
        assert verify_left_invariant(m, v) <= 1e-12


class TestVerify:
    def test_identity(self):
        assert verify_left_invariant(np.eye(3), [0.2, 0.3, 0.5]) == 0.0

    def test_swap(self):
        assert verify_left_invariant([[0, 1], [1, 0]], [0.3, 0.7]) == pytest.approx(0.4)

    def test_shape(self):
        with pytest.raises(MetastableError):
            verify_left_invariant(np.eye(3), [0.5, 0.5])


class TestStationary:
    def test_symmetric(self):
        sv = stationary_vector([[0.75, 0.25], [0.25, 0.75]])
        np.testing.assert_allclose(sv.weights, [0.5, 0.5])
        assert sv.unique

    def test_example_recovers_v(self):
        sv = stationary_vector(build_transition_matrix(EXAMPLE_WEIGHTS, 0.4))
        np.testing.assert_allclose(sv.weights, EXAMPLE_WEIGHTS, atol=1e-9)

    def test_identity_not_unique(self):
        sv = stationary_vector(np.eye(4))
        np.testing.assert_allclose(sv.weights, 0.25)
        assert not sv.unique

    def test_rejects_non_stochastic(self):
        with pytest.raises(MetastableError):
            stationary_vector([[0.5, 0.6], [0.5, 0.5]])
