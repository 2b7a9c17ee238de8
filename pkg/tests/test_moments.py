import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sirreg.exceptions import InputError
from sirreg.moments import (
    Dataset,
    SliceAssignment,
    SliceScheme,
    compute_sliced_moments,
    read_csv,
    slice_by_response,
    sliced_moments,
    write_csv,
)


def brute_force_moments(X, labels, h):
    """Defining sums with explicit loops."""
    n, p = X.shape
    xbar = [sum(X[i, j] for i in range(n)) / n for j in range(p)]
    f, means = [], []
    for y in range(h):
        rows = [i for i in range(n) if labels[i] == y]
        f.append(len(rows) / n)
        means.append([sum(X[i, j] for i in rows) / len(rows) for j in range(p)])
    sigma = [[sum((X[i, a] - xbar[a]) * (X[i, b] - xbar[b]) for i in range(n)) / n
              for b in range(p)] for a in range(p)]
    gamma = [[sum(f[y] * (means[y][a] - xbar[a]) * (means[y][b] - xbar[b]) for y in range(h))
              for b in range(p)] for a in range(p)]
    return np.array(f), np.array(xbar), np.array(means), np.array(sigma), np.array(gamma)


class TestSlicing:
    def test_sorted_halves(self):
        a = slice_by_response(Dataset(np.zeros((4, 1)), [1, 2, 3, 4]), 2)
        assert a.labels.tolist() == [0, 0, 1, 1]
        assert a.counts.tolist() == [2, 2]

    def test_single_slice(self):
        a = slice_by_response(Dataset(np.zeros((4, 1)), [5, 5, 5, 5]), 1)
        assert a.labels.tolist() == [0, 0, 0, 0]
        assert a.counts.tolist() == [4]

    def test_ties_broken_by_index(self):
        # sort order by (Y, index): rows 1, 3, 0, 2, 4, 5
        a = slice_by_response(Dataset(np.zeros((6, 1)), [3, 1, 4, 1, 5, 9]), 3)
        assert a.counts.tolist() == [2, 2, 2]
        assert a.labels.tolist() == [1, 0, 1, 0, 2, 2]

    def test_sizes_differ_by_at_most_one(self, rng):
        for n, h in [(10, 3), (7, 7), (101, 8)]:
            counts = slice_by_response(Dataset(np.zeros((n, 1)), rng.standard_normal(n)), h).counts
            assert counts.sum() == n and counts.max() - counts.min() <= 1

    @pytest.mark.parametrize("h", [0, -1, 5])
    def test_bad_h(self, h):
        with pytest.raises(InputError):
            slice_by_response(Dataset(np.zeros((4, 1)), [1, 2, 3, 4]), h)

    def test_too_many_slices_message(self):
        with pytest.raises(InputError, match="too many slices"):
            slice_by_response(Dataset(np.zeros((4, 1)), [1, 2, 3, 4]), 5)

    def test_equal_width_not_implemented(self):
        with pytest.raises(NotImplementedError):
            slice_by_response(Dataset(np.zeros((4, 1)), [1, 2, 3, 4]), 2, SliceScheme.EQUAL_WIDTH)


class TestDataset:
    def test_rejects_non_finite(self):
        with pytest.raises(InputError):
            Dataset([[0.0], [np.nan]], [1.0, 2.0])

    def test_rejects_mismatch_and_tiny(self):
        with pytest.raises(InputError):
            Dataset(np.zeros((3, 2)), np.zeros(2))
        with pytest.raises(InputError):
            Dataset(np.zeros((1, 2)), np.zeros(1))

    def test_immutable(self):
        ds = Dataset(np.zeros((3, 2)), np.zeros(3))
        with pytest.raises(ValueError):
            ds.X[0, 0] = 1.0


class TestMoments:
    def test_toy_example(self, toy):
        np.testing.assert_allclose(toy.f, [0.5, 0.5])
        np.testing.assert_allclose(toy.xbar, [1, 1])
        np.testing.assert_allclose(toy.slice_means, [[1, 0], [1, 2]])
        np.testing.assert_allclose(toy.sigma, np.eye(2), atol=1e-15)
        np.testing.assert_allclose(toy.gamma, [[0, 0], [0, 1]], atol=1e-15)

    def test_constant_rows(self):
        m = sliced_moments(Dataset(np.tile([0.1, 0.7, -3.3], (9, 1)), np.arange(9.0)), 3)
        assert np.all(m.sigma == 0) and np.all(m.gamma == 0) and np.all(m.deltas == 0)

    def test_single_slice_gamma_exactly_zero(self, rng):
        m = sliced_moments(Dataset(rng.standard_normal((20, 4)), rng.standard_normal(20)), 1)
        assert np.all(m.gamma == 0)

    def test_matches_brute_force(self, rng):
        X = rng.standard_normal((23, 4))
        a = slice_by_response(Dataset(X, rng.standard_normal(23)), 4)
        m = compute_sliced_moments(Dataset(X, np.zeros(23)), a)
        f, xbar, means, sigma, gamma = brute_force_moments(X, a.labels, 4)
        np.testing.assert_allclose(m.f, f)
        np.testing.assert_allclose(m.xbar, xbar, atol=1e-14)
        np.testing.assert_allclose(m.slice_means, means, atol=1e-14)
        np.testing.assert_allclose(m.sigma, sigma, atol=1e-13)
        np.testing.assert_allclose(m.gamma, gamma, atol=1e-13)

    def test_empty_slice_rejected(self):
        ds = Dataset(np.zeros((3, 1)), [1, 2, 3])
        with pytest.raises(InputError, match="empty slice"):
            compute_sliced_moments(ds, SliceAssignment(np.array([0, 0, 2]), 3))

    def test_gamma_as_weighted_gram(self, rng):
        m = sliced_moments(Dataset(rng.standard_normal((50, 6)), rng.standard_normal(50)), 5)
        M = m.slice_means - m.xbar
        np.testing.assert_allclose(m.gamma, M.T @ np.diag(m.f) @ M, atol=1e-12)

    def test_summary_constant(self):
        s = sliced_moments(Dataset(np.ones((6, 2)), np.arange(6.0)), 3).summary()
        assert s["sigma_rank"] == 0
        assert s["slice_mean_norms"] == [0.0, 0.0, 0.0]


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(8, 60), p=st.integers(1, 6), h=st.integers(1, 8))
def test_moment_invariants(seed, n, p, h):
    rng = np.random.default_rng(seed)
    h = min(h, n)
    X = rng.standard_normal((n, p)) * rng.uniform(0.1, 10, p)
    ds = Dataset(X, rng.standard_normal(n))
    m = sliced_moments(ds, h)
    assert abs(m.f.sum() - 1) <= 1e-12 and np.all(m.f > 0)
    np.testing.assert_allclose(m.deltas @ m.f, 0, atol=1e-10)
    for M in (m.sigma, m.gamma):
        assert np.max(np.abs(M - M.T)) <= 1e-12
        assert np.linalg.eigvalsh(M)[0] >= -1e-10 * max(np.linalg.norm(M), 1e-300)
    s = np.linalg.svd(m.gamma, compute_uv=False)
    assert np.sum(s > 1e-8 * s[0]) <= h - 1 if s[0] > 0 else True
    # translation invariance
    shifted = sliced_moments(Dataset(X + rng.uniform(-50, 50, p), ds.Y), h)
    np.testing.assert_allclose(shifted.sigma, m.sigma, atol=1e-10)
    np.testing.assert_allclose(shifted.gamma, m.gamma, atol=1e-10)


class TestCsv:
    def test_round_trip(self, tmp_path, rng):
        ds = Dataset(rng.standard_normal((7, 3)), rng.standard_normal(7))
        write_csv(ds, tmp_path / "d.csv")
        back = read_csv(tmp_path / "d.csv", "y")
        np.testing.assert_array_equal(back.X, ds.X)
        np.testing.assert_array_equal(back.Y, ds.Y)
        assert back.columns == ("x1", "x2", "x3")

    def test_response_by_index(self, tmp_path):
        (tmp_path / "d.csv").write_text("y,a,b\n1,2,3\n4,5,6\n")
        ds = read_csv(tmp_path / "d.csv", "0")
        assert ds.Y.tolist() == [1, 4] and ds.columns == ("a", "b")

    @pytest.mark.parametrize("body, line", [
        ("a,y\n1,2\n3\n", 3),
        ("a,y\n1,2\n3,x\n", 3),
        ("a,y\n1,\n", 2),
        ("a,y\n1,2\n3,4\nnan,1\n", 4),
    ])
    def test_malformed_reports_line(self, tmp_path, body, line):
        (tmp_path / "d.csv").write_text(body)
        with pytest.raises(InputError, match=f":{line}:"):
            read_csv(tmp_path / "d.csv", "y")

    def test_unknown_response(self, tmp_path):
        (tmp_path / "d.csv").write_text("a,b\n1,2\n3,4\n")
        with pytest.raises(InputError, match="not found"):
            read_csv(tmp_path / "d.csv", "y")
