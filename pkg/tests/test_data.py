import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dlvkl.data import (
    Dataset,
    apply_stats,
    load_table,
    split,
    standardize,
    step_function,
    toy_classify2d,
    toy_step,
    write_table,
)
from dlvkl.errors import EmptyDataset, InvalidLabel, ParseError, SchemaMismatch


def _write(tmp_path, text, name="d.csv"):
    p = tmp_path / name
    p.write_text(text)
    return p


class TestLoadTable:
    def test_basic(self, tmp_path):
        ds = load_table(_write(tmp_path, "a,b,y\n1,2,3\n4,5,6\n"))
        np.testing.assert_array_equal(ds.X, [[1, 2], [4, 5]])
        np.testing.assert_array_equal(ds.Y, [[3], [6]])
        assert ds.header == ["a", "b", "y"]

    def test_two_outputs(self, tmp_path):
        ds = load_table(_write(tmp_path, "a,y1,y2\n1,2,3\n"), n_outputs=2)
        assert ds.d_x == 1 and ds.d_y == 2

    def test_parse_error_carries_line(self, tmp_path):
        with pytest.raises(ParseError) as err:
            load_table(_write(tmp_path, "a,y\n1,2\n3,abc\n"))
        assert err.value.line == 3

    def test_ragged_row(self, tmp_path):
        with pytest.raises(ParseError):
            load_table(_write(tmp_path, "a,y\n1,2,3\n"))

    def test_nonfinite_rows_rejected(self, tmp_path):
        with pytest.warns(UserWarning):
            ds = load_table(_write(tmp_path, "a,y\n1,2\nnan,3\n4,inf\n5,6\n"))
        assert ds.n == 2 and ds.n_rejected == 2

    def test_schema(self, tmp_path):
        with pytest.raises(SchemaMismatch):
            load_table(_write(tmp_path, "y\n1\n"))

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_table(tmp_path / "nope.csv")

    def test_empty(self, tmp_path):
        with pytest.raises(EmptyDataset):
            load_table(_write(tmp_path, "a,y\n"))

    def test_labels(self, tmp_path):
        with pytest.raises(InvalidLabel):
            load_table(_write(tmp_path, "a,y\n1,0.5\n"), task="binary")
        with pytest.raises(InvalidLabel):
            load_table(_write(tmp_path, "a,y\n1,2\n"), task="binary")
        assert load_table(_write(tmp_path, "a,y\n1,2\n2,0\n"), task="multiclass").num_classes == 3

    def test_round_trip(self, tmp_path, rng):
        ds = Dataset(rng.standard_normal((5, 2)), rng.standard_normal(5))
        write_table(ds, tmp_path / "o.csv")
        back = load_table(tmp_path / "o.csv")
        np.testing.assert_array_equal(back.X, ds.X)
        np.testing.assert_array_equal(back.Y, ds.Y)


class TestStandardize:
    def test_example(self):
        ds, stats = standardize(Dataset(np.array([[1.0], [3.0]]), np.array([0.0, 2.0])))
        np.testing.assert_array_equal(ds.X[:, 0], [-1.0, 1.0])
        np.testing.assert_array_equal(stats.x_mean, [2.0])

    @given(st.integers(0, 2**31 - 1))
    def test_moments_and_idempotence(self, seed):
        r = np.random.default_rng(seed)
        ds = Dataset(r.normal(3, 5, (20, 3)), r.normal(-1, 2, 20))
        once, _ = standardize(ds)
        np.testing.assert_allclose(once.X.mean(axis=0), 0, atol=1e-12)
        np.testing.assert_allclose(once.X.std(axis=0), 1, rtol=1e-12)
        twice, _ = standardize(once)
        np.testing.assert_allclose(twice.X, once.X, atol=1e-12)

    def test_constant_column(self):
        with pytest.warns(UserWarning, match="constant"):
            ds, stats = standardize(Dataset(np.array([[1.0, 2.0], [1.0, 4.0]]), np.array([0.0, 1.0])))
        np.testing.assert_array_equal(ds.X[:, 0], 0.0)
        assert stats.warnings

    def test_labels_untouched(self):
        ds, stats = standardize(Dataset(np.array([[0.0], [1.0]]), np.array([0.0, 1.0]), "binary"))
        np.testing.assert_array_equal(ds.Y[:, 0], [0.0, 1.0])
        assert stats.y_mean is None

    def test_apply_stats_uses_training_moments(self, rng):
        train = Dataset(rng.normal(5, 2, (30, 1)), rng.normal(size=30))
        _, stats = standardize(train)
        test = apply_stats(Dataset(np.array([[5.0]]), np.array([0.0])), stats)
        np.testing.assert_allclose(test.X[0], (5.0 - stats.x_mean) / stats.x_std)


class TestSplit:
    @given(st.integers(2, 60), st.floats(0.05, 0.5), st.integers(0, 1000))
    def test_partition(self, n, frac, seed):
        ds = Dataset(np.arange(n, dtype=float)[:, None], np.zeros(n))
        if math.ceil(n * frac) >= n:
            with pytest.raises(EmptyDataset):
                split(ds, frac, seed)
            return
        tr, te = split(ds, frac, seed)
        assert te.n == math.ceil(n * frac)
        joined = np.sort(np.concatenate([tr.X[:, 0], te.X[:, 0]]))
        np.testing.assert_array_equal(joined, np.arange(n))

    def test_seeded(self):
        ds = Dataset(np.arange(20.0)[:, None], np.zeros(20))
        a, b = split(ds, 0.25, 3)[1], split(ds, 0.25, 3)[1]
        np.testing.assert_array_equal(a.X, b.X)
        assert not np.array_equal(a.X, split(ds, 0.25, 4)[1].X)

    def test_bad_fraction(self):
        with pytest.raises(ValueError):
            split(Dataset(np.zeros((4, 1)), np.zeros(4)), 1.0)


class TestToys:
    def test_step_values(self):
        assert step_function(0.0) == pytest.approx(0.0, abs=1e-15)
        assert step_function(-1.0) == pytest.approx(np.cos(-5) * np.exp(0.5) + 1, rel=1e-15)
        assert step_function(-1.0) == pytest.approx(1.46768, abs=1e-5)

    def test_step_jump(self):
        assert step_function(-1e-9) - step_function(0.0) == pytest.approx(2.0, abs=1e-6)

    def test_toy_step(self):
        ds = toy_step(50, seed=2)
        assert ds.X.shape == (50, 1)
        assert np.all(np.abs(ds.X) <= 1.5)
        np.testing.assert_array_equal(ds.Y[:, 0], step_function(ds.X[:, 0]))
        np.testing.assert_array_equal(toy_step(50, seed=2).X, ds.X)

    def test_moons_balanced(self):
        ds = toy_classify2d(201, seed=0)
        counts = np.bincount(ds.Y[:, 0].astype(int))
        assert abs(counts[0] - counts[1]) <= 1

    def test_moons_not_linearly_separable(self):
        # least-squares linear classifier as an oracle for a non-linear boundary
        ds = toy_classify2d(400, seed=1)
        A = np.c_[ds.X, np.ones(ds.n)]
        w, *_ = np.linalg.lstsq(A, 2 * ds.Y[:, 0] - 1, rcond=None)
        acc = np.mean((A @ w > 0) == (ds.Y[:, 0] == 1))
        assert acc < 0.9
