import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from loopsig.errors import DomainError
from loopsig.states import (
    PhotonNumberDistribution,
    RawPhotonNumberDistribution,
    coherent_truncated,
    fock,
    from_weights,
    mean_photon_number,
)


def poisson_truncated_mp(nbar, K):
    mpmath.mp.dps = 50
    w = [mpmath.mpf(nbar) ** n / mpmath.factorial(n) for n in range(K + 1)]
    total = mpmath.fsum(w)
    return [float(x / total) for x in w]


class TestCoherent:
    def test_vacuum(self):
        np.testing.assert_array_equal(coherent_truncated(0, 4).probs, [1, 0, 0, 0, 0])

    def test_k1_half_half(self):
        np.testing.assert_allclose(coherent_truncated(1, 1).probs, poisson_truncated_mp(1, 1), rtol=0, atol=1e-15)
        np.testing.assert_allclose(coherent_truncated(1, 1).probs, [0.5, 0.5], atol=1e-15)

    def test_negligible_tail_matches_untruncated(self):
        mpmath.mp.dps = 50
        exact = float(mpmath.exp(-8))
        assert coherent_truncated(8, 30).probs[0] == pytest.approx(exact, rel=1e-9)

    @pytest.mark.parametrize("nbar,K", [(0.3, 5), (4.6, 15), (6.5, 30), (15.0, 40), (20.0, 40)])
    def test_matches_high_precision(self, nbar, K):
        np.testing.assert_allclose(coherent_truncated(nbar, K).probs, poisson_truncated_mp(nbar, K), rtol=1e-12, atol=1e-300)

    @pytest.mark.parametrize("bad", [-1.0, math.inf, math.nan])
    def test_domain(self, bad):
        with pytest.raises(DomainError):
            coherent_truncated(bad, 3)

    @settings(max_examples=200, deadline=None)
    @given(st.floats(0, 20), st.integers(1, 40))
    def test_unit_trace(self, nbar, K):
        assert abs(math.fsum(coherent_truncated(nbar, K).probs) - 1) <= 1e-12

    @settings(max_examples=100, deadline=None)
    @given(st.floats(0.01, 20), st.integers(1, 30), st.integers(1, 10))
    def test_ratios_independent_of_truncation(self, nbar, K, extra):
        a = coherent_truncated(nbar, K).probs
        b = coherent_truncated(nbar, K + extra).probs[: K + 1]
        mask = (a > 1e-250) & (b > 1e-250)
        ratio = a[mask] / b[mask]
        np.testing.assert_allclose(ratio, ratio[0], rtol=1e-10)


class TestFock:
    def test_vacuum(self):
        np.testing.assert_array_equal(fock(0, 2).probs, [1, 0, 0])

    def test_top(self):
        np.testing.assert_array_equal(fock(2, 2).probs, [0, 0, 1])

    def test_out_of_range(self):
        with pytest.raises(DomainError):
            fock(3, 2)

    @given(st.integers(0, 40), st.integers(0, 10))
    def test_mean_is_exact(self, n, extra):
        assert mean_photon_number(fock(n, n + extra)) == n


class TestMeanAndWeights:
    def test_means(self):
        assert mean_photon_number(fock(0, 2)) == 0
        assert mean_photon_number(fock(2, 2)) == 2
        assert mean_photon_number(coherent_truncated(1, 1)) == pytest.approx(0.5, abs=1e-15)

    @pytest.mark.parametrize(
        "w,expected", [((2, 2), (0.5, 0.5)), ((0, 0, 5), (0, 0, 1)), ((1, 2, 1), (0.25, 0.5, 0.25))]
    )
    def test_from_weights(self, w, expected):
        np.testing.assert_allclose(from_weights(w).probs, expected, atol=1e-15)

    @pytest.mark.parametrize("w", [(0, 0), (1, -1), (math.nan, 1), ()])
    def test_from_weights_rejects(self, w):
        with pytest.raises(DomainError):
            from_weights(w)

    @given(st.lists(st.floats(0, 1e6), min_size=1, max_size=40).filter(lambda w: sum(w) > 1e-300))
    def test_from_weights_normalized(self, w):
        assert abs(math.fsum(from_weights(w).probs) - 1) <= 1e-12


class TestValidationAndRaw:
    def test_rejects_negative(self):
        with pytest.raises(DomainError):
            PhotonNumberDistribution([1.5, -0.5])

    def test_rejects_unnormalized(self):
        with pytest.raises(DomainError):
            PhotonNumberDistribution([0.5, 0.4])

    def test_immutable(self):
        s = fock(1, 2)
        with pytest.raises(ValueError):
            s.probs[0] = 1.0

    def test_raw_flags(self):
        raw = RawPhotonNumberDistribution([1.2, -0.1, 0.0])
        assert not raw.is_physical
        assert raw.negative_indices == [1]
        assert raw.trace_deviation == pytest.approx(0.1)
        assert raw.to_distribution() == PhotonNumberDistribution([1.0, 0.0, 0.0])

    def test_raw_is_not_a_state(self):
        assert not isinstance(RawPhotonNumberDistribution([1.0]), PhotonNumberDistribution)

    def test_json_round_trip(self):
        s = coherent_truncated(2.5, 10)
        back = PhotonNumberDistribution.from_json(s.to_json())
        assert back == s
        assert s.to_dict()["K"] == 10

    def test_json_k_mismatch(self):
        with pytest.raises(DomainError):
            PhotonNumberDistribution.from_dict({"K": 3, "probs": [1.0, 0.0]})
