import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from xaitune.doe import (ACTIVATIONS, Dim, SearchSpace, clamp, default_space, design_point,
                         design_table, latin_hypercube, realize, round_half_away, to_raw)
from xaitune.errors import ConfigurationError


def test_round_half_away():
    assert [round_half_away(v) for v in (2.5, 3.5, -2.5, 2.49, 0.5)] == [3, 4, -3, 2, 1]


def test_realize_examples():
    space = default_space()
    raw = space.lower.copy()
    raw[0], raw[1], raw[5] = 5.0, 9.0, 3.2
    hp = realize(raw, space)
    assert hp["l1"] == 32
    assert hp["epochs"] == 512
    assert hp["activation"] == "Swish"


def test_default_space_domain():
    space = default_space()
    assert space.names == ["l1", "epochs", "batch_size", "dropout_p", "lr_multiplier",
                           "activation", "optimizer"]
    np.testing.assert_array_equal(space.lower, [2, 4, 4, 0, 0.1, 0, 0])
    np.testing.assert_array_equal(space.upper, [10, 11, 10, 0.4, 5, 3, 6])
    assert space["activation"].levels == ACTIVATIONS
    assert len(space["optimizer"].levels) == 7


def test_transforms():
    space = default_space()
    assert [d.transform for d in space.dims] == ["pow2"] * 3 + ["identity"] * 2 + ["level-lookup"] * 2


def test_clamp_warns(caplog):
    space = default_space()
    raw = space.upper + 1
    clipped = clamp(raw, space)
    np.testing.assert_array_equal(clipped, space.upper)
    assert "clamped" in caplog.text
    assert realize(raw, space)["l1"] == 1024


def test_clamp_shape_error():
    with pytest.raises(ConfigurationError):
        clamp([1.0, 2.0], default_space())


def test_to_raw_round_trip():
    space = default_space()
    hp = dict(l1=64, epochs=16, batch_size=32, dropout_p=0.1, lr_multiplier=2.0,
              activation="ELU", optimizer="RMSprop")
    assert realize(to_raw(hp, space), space) == hp
    with pytest.raises(ConfigurationError):
        to_raw({**hp, "l1": 48}, space)


def test_invalid_dims():
    with pytest.raises(ConfigurationError):
        Dim("x", "continuous", 1.0, 1.0)
    with pytest.raises(ConfigurationError):
        Dim("x", "categorical", levels=("only",))
    with pytest.raises(ConfigurationError):
        Dim("x", "ordinal")
    with pytest.raises(ConfigurationError):
        default_space().replace(width=(1, 2))


class TestLatinHypercube:
    def test_quartile_bins(self):
        space = SearchSpace((Dim("a", "continuous", 0, 1), Dim("b", "continuous", -2, 2)))
        raw = np.array([p.raw for p in latin_hypercube(4, space, seed=3)])
        for j in range(2):
            u = (raw[:, j] - space.lower[j]) / (space.upper[j] - space.lower[j])
            assert sorted(np.floor(u * 4).astype(int)) == [0, 1, 2, 3]

    def test_deterministic(self):
        a = latin_hypercube(20, default_space(), seed=11)
        b = latin_hypercube(20, default_space(), seed=11)
        assert a == b
        assert a != latin_hypercube(20, default_space(), seed=12)

    def test_single_point(self):
        (p,) = latin_hypercube(1, default_space(), seed=0)
        space = default_space()
        assert np.all(p.raw >= space.lower) and np.all(p.raw <= space.upper)

    @pytest.mark.parametrize("n", [0, -1, 2.5])
    def test_bad_n(self, n):
        with pytest.raises(ConfigurationError):
            latin_hypercube(n, default_space(), seed=0)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(1, 60), st.integers(0, 2**32 - 1))
    def test_marginal_stratification(self, n, seed):
        space = default_space()
        raw = np.array([p.raw for p in latin_hypercube(n, space, seed)])
        u = (raw - space.lower) / (space.upper - space.lower)
        bins = np.minimum(np.floor(u * n).astype(int), n - 1)
        for j in range(len(space)):
            assert sorted(bins[:, j]) == list(range(n))


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-3, 15, allow_nan=False), min_size=7, max_size=7))
def test_realize_properties(raw):
    space = default_space()
    hp = realize(raw, space)
    # realizing a realized point's raw coordinates changes nothing
    assert realize(to_raw(hp, space), space) == hp
    for d in space.dims:
        if d.kind == "integer-exponent":
            v = hp[d.name]
            assert v & (v - 1) == 0
            assert 2 ** d.lower <= v <= 2 ** d.upper


def test_design_table():
    space = default_space()
    pts = latin_hypercube(3, space, seed=0)
    header, rows = design_table(pts, space)
    assert header[:7] == [f"raw_{n}" for n in space.names] and header[7:] == space.names
    assert len(rows) == 3
    assert rows[0][7:] == [pts[0].concrete[n] for n in space.names]


def test_design_point_equality():
    space = default_space()
    p = design_point(space.lower, space)
    assert p == design_point(space.lower.copy(), space)
