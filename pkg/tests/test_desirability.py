import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from xaitune.desirability import (DesirabilitySpec, d_max, d_min, d_target, desirability,
                                  overall_desirability)
from xaitune.errors import ConfigurationError

finite = st.floats(-1e6, 1e6, allow_nan=False)


class TestRamps:
    def test_maximize_examples(self):
        assert d_max(-1, DesirabilitySpec.maximize(0, 1)) == 0
        assert d_max(0.5, DesirabilitySpec.maximize(0, 1, s=2)) == 0.25
        assert d_max(2, DesirabilitySpec.maximize(0, 1)) == 1

    def test_minimize_loss_thresholds(self):
        spec = DesirabilitySpec.minimize(0.1, 0.7)
        assert d_min(0.05, spec) == 1.0
        assert d_min(0.4, spec) == pytest.approx(0.5, abs=1e-12)
        assert d_min(0.8, spec) == 0.0

    def test_target_examples(self):
        spec = DesirabilitySpec.target(0, 1, 2)
        assert d_target(1, spec) == 1
        assert d_target(0.5, spec) == 0.5
        assert d_target(2.5, spec) == 0

    def test_closed_interval_endpoints(self):
        spec = DesirabilitySpec.minimize(0.1, 0.7)
        assert d_min(0.1, spec) == 1.0
        assert d_min(0.7, spec) == 0.0

    def test_target_asymmetric_steepness(self):
        spec = DesirabilitySpec.target(0, 1, 3, s1=2, s2=0.5)
        assert d_target(0.5, spec) == pytest.approx(0.25)
        assert d_target(2.0, spec) == pytest.approx(math.sqrt(0.5))

    @pytest.mark.parametrize("bad", [math.nan, math.inf, -math.inf])
    def test_non_finite_maps_to_zero(self, bad, caplog):
        for spec in (DesirabilitySpec.minimize(0, 1), DesirabilitySpec.maximize(0, 1),
                     DesirabilitySpec.target(0, 0.5, 1)):
            assert desirability(bad, spec) == 0.0
        assert "non-finite" in caplog.text

    @pytest.mark.parametrize("kwargs", [dict(A=1, B=1), dict(A=2, B=1), dict(A=0, B=1, s=0),
                                        dict(A=0, B=1, s=-1)])
    def test_invalid_specs(self, kwargs):
        with pytest.raises(ConfigurationError):
            DesirabilitySpec("minimize", **kwargs)

    def test_target_needs_interior_t0(self):
        with pytest.raises(ConfigurationError):
            DesirabilitySpec.target(0, 2, 1)
        with pytest.raises(ConfigurationError):
            DesirabilitySpec("target", 0, 1)

    def test_wrong_kind_rejected(self):
        with pytest.raises(ConfigurationError):
            d_max(0.5, DesirabilitySpec.minimize(0, 1))

    def test_linear_slope(self):
        # piecewise linear at s=1: slope is -(B - A)^-1 inside the ramp
        spec = DesirabilitySpec.minimize(0.1, 0.7)
        h = 1e-6
        for f in np.linspace(0.15, 0.65, 11):
            slope = (d_min(f + h, spec) - d_min(f - h, spec)) / (2 * h)
            assert slope == pytest.approx(-1 / 0.6, rel=1e-6)


class TestProperties:
    @given(finite, finite, st.floats(0.01, 1e3), st.floats(0.1, 5))
    def test_unit_interval(self, f, A, width, s):
        for spec in (DesirabilitySpec.minimize(A, A + width, s),
                     DesirabilitySpec.maximize(A, A + width, s),
                     DesirabilitySpec.target(A, A + width / 3, A + width, s, 1 / s)):
            assert 0.0 <= desirability(f, spec) <= 1.0

    @given(finite, finite, finite, st.floats(0.1, 5))
    def test_monotone(self, f1, f2, A, s):
        lo, hi = sorted((f1, f2))
        spec_min, spec_max = DesirabilitySpec.minimize(A, A + 1, s), DesirabilitySpec.maximize(A, A + 1, s)
        assert d_min(lo, spec_min) >= d_min(hi, spec_min)
        assert d_max(lo, spec_max) <= d_max(hi, spec_max)

    @given(finite, finite, st.floats(0.01, 100))
    def test_linear_symmetry(self, f, A, width):
        B = A + width
        total = d_max(f, DesirabilitySpec.maximize(A, B)) + d_min(f, DesirabilitySpec.minimize(A, B))
        assert total == pytest.approx(1.0, abs=1e-9)


class TestOverall:
    def test_examples(self):
        assert overall_desirability([1, 1]) == 1
        assert overall_desirability([0.25, 1]) == 0.5
        assert overall_desirability([0.9, 0]) == 0

    def test_errors(self):
        with pytest.raises(ConfigurationError):
            overall_desirability([])
        with pytest.raises(ConfigurationError):
            overall_desirability([0.5, 1.2])

    def test_zero_dominance_random(self):
        rng = np.random.default_rng(7)
        for _ in range(1000):
            ds = rng.random(rng.integers(1, 6))
            ds[rng.integers(len(ds))] = 0.0
            assert overall_desirability(ds) == 0.0

    @given(st.lists(st.floats(1e-6, 1.0), min_size=1, max_size=8))
    def test_positive_iff_all_positive(self, ds):
        assert overall_desirability(ds) > 0

    @given(st.floats(0.0, 1.0), st.integers(1, 8))
    def test_equal_components(self, d, k):
        assert overall_desirability([d] * k) == pytest.approx(d, rel=1e-12, abs=1e-300)

    @given(st.lists(st.floats(1e-3, 1.0), min_size=1, max_size=6))
    def test_matches_log_mean(self, ds):
        oracle = math.exp(sum(math.log(d) for d in ds) / len(ds))
        assert overall_desirability(ds) == pytest.approx(oracle, rel=1e-12)
