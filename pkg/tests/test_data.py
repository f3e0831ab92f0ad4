import gzip

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from xaitune.data import (DATA_DIR_ENV, Dataset, fixture_path, load_table, resolve_data_path,
                          scaler_apply, scaler_fit, split, standardize, write_table)
from xaitune.errors import ConfigurationError, IngestionError


def _write(tmp_path, text, name="t.csv"):
    p = tmp_path / name
    p.write_text(text)
    return p


class TestLoad:
    def test_three_rows(self, tmp_path):
        ds = load_table(_write(tmp_path, "a,b,y\n1,2,3\n4,5,6\n7,8,9\n"))
        assert len(ds) == 3
        assert ds.feature_names == ["a", "b"] and ds.target_name == "y"
        np.testing.assert_array_equal(ds.targets, [3, 6, 9])

    def test_nan_row_skipped(self, tmp_path, caplog):
        ds = load_table(_write(tmp_path, "a,b,y\n1,2,3\n4,nan,6\n7,8,9\n"))
        assert len(ds) == 2 and ds.skipped == 1
        assert "skipped 1" in caplog.text

    def test_missing_header(self, tmp_path):
        with pytest.raises(IngestionError, match="header"):
            load_table(_write(tmp_path, "1,2,3\n4,5,6\n"))

    def test_ragged_row_names_line(self, tmp_path):
        with pytest.raises(IngestionError, match=":3:"):
            load_table(_write(tmp_path, "a,b,y\n1,2,3\n4,5\n"))

    def test_bad_number_names_line(self, tmp_path):
        with pytest.raises(IngestionError, match=":2:"):
            load_table(_write(tmp_path, "a,b,y\n1,x,3\n"))

    def test_named_target(self, tmp_path):
        ds = load_table(_write(tmp_path, "y,a,b\n1,2,3\n"), target="y")
        assert ds.feature_names == ["a", "b"]
        with pytest.raises(IngestionError, match="target"):
            load_table(_write(tmp_path, "y,a,b\n1,2,3\n"), target="z")

    def test_missing_file(self, tmp_path):
        with pytest.raises(IngestionError):
            load_table(tmp_path / "nope.csv")

    def test_gzip_and_round_trip(self, tmp_path):
        ds = Dataset(np.array([[0.1, 2.0], [3.5, -1.25]]), np.array([1.0, 2.0]), ["u", "v"], "w")
        p = tmp_path / "x.csv"
        write_table(ds, p)
        with open(p, "rb") as src, gzip.open(tmp_path / "x.csv.gz", "wb") as dst:
            dst.write(src.read())
        back = load_table(tmp_path / "x.csv.gz")
        np.testing.assert_array_equal(back.features, ds.features)
        assert back.feature_names == ["u", "v"]


def test_fixture(fixture_data):
    assert len(fixture_data) == 2000
    assert fixture_data.feature_names == ["MedInc", "HouseAge", "AveRooms", "AveBedrms",
                                          "Population", "AveOccup", "Latitude", "Longitude"]
    assert fixture_data.target_name == "MedHouseVal"
    assert fixture_data.skipped == 0


def test_resolve_data_path(monkeypatch, tmp_path):
    assert resolve_data_path("fixture") == fixture_path()
    (tmp_path / "mine.csv").write_text("a,y\n1,2\n")
    monkeypatch.setenv(DATA_DIR_ENV, str(tmp_path))
    assert resolve_data_path("mine.csv") == tmp_path / "mine.csv"


class TestSplit:
    def _ds(self, n):
        return Dataset(np.arange(2 * n, dtype=float).reshape(n, 2), np.arange(n, dtype=float),
                       ["a", "b"], "y")

    def test_sizes(self):
        sp = split(self._ds(10), seed=0)
        assert (len(sp.train), len(sp.validation), len(sp.test)) == (6, 2, 2)

    def test_deterministic(self):
        a, b = split(self._ds(50), seed=4), split(self._ds(50), seed=4)
        assert a.indices == b.indices

    def test_union_is_original(self):
        sp = split(self._ds(37), seed=1)
        allt = np.concatenate([sp.train.targets, sp.validation.targets, sp.test.targets])
        np.testing.assert_array_equal(np.sort(allt), np.arange(37))

    def test_errors(self):
        with pytest.raises(ConfigurationError):
            split(self._ds(2))
        with pytest.raises(ConfigurationError):
            split(self._ds(10), fractions=(0.5, 0.5, 0.5))

    def test_access_counter(self):
        sp = split(self._ds(10))
        assert sp.test_accesses == 0
        sp.test
        sp.test
        assert sp.test_accesses == 2
        std, _ = standardize(sp)
        assert std.test_accesses == 0 and sp.test_accesses == 2


class TestScaler:
    def test_example(self):
        sc = scaler_fit([[1.0], [3.0]])
        assert sc.mean[0] == 2 and sc.std[0] == 1
        np.testing.assert_array_equal(scaler_apply(sc, [[1.0], [3.0]]).ravel(), [-1, 1])

    def test_same_data_same_statistics(self):
        X = np.random.default_rng(0).normal(3, 2, (50, 3))
        Z = scaler_apply(scaler_fit(X), X)
        np.testing.assert_allclose(Z.mean(axis=0), 0, atol=1e-12)
        np.testing.assert_allclose(Z.std(axis=0), 1, atol=1e-12)

    def test_constant_column_names_feature(self):
        with pytest.raises(ConfigurationError, match="b"):
            scaler_fit([[1.0, 5.0], [2.0, 5.0]], ["a", "b"])

    def test_width_mismatch(self):
        with pytest.raises(ConfigurationError):
            scaler_apply(scaler_fit([[1.0, 2.0], [2.0, 1.0]]), [[1.0]])

    @settings(max_examples=100, deadline=None)
    @given(arrays(float, (6, 3), elements=st.floats(-1e3, 1e3)))
    def test_round_trip(self, X):
        X[0] += np.arange(3) + 1.0     # keep every column non-constant
        X[1] -= np.arange(3) + 1.0
        sc = scaler_fit(X)
        np.testing.assert_allclose(sc.inverse_transform(sc.transform(X)), X, rtol=1e-12, atol=1e-9)
