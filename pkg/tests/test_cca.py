import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from ccaedge import cca
from ccaedge.errors import DimensionError, SingularCorrelationError


def whitened_svd_oracle(y1, y2):
    """Canonical correlations via symmetric inverse square roots (no Cholesky)."""
    t = y1.shape[1]
    r11, r22, r12 = y1 @ y1.T / t, y2 @ y2.T / t, y1 @ y2.T / t

    def inv_sqrt(r):
        w, v = np.linalg.eigh(r)
        return v @ np.diag(w**-0.5) @ v.T

    return np.linalg.svd(inv_sqrt(r11) @ r12 @ inv_sqrt(r22), compute_uv=False)


def loop_correlation(a, b):
    out = np.zeros((a.shape[0], b.shape[0]))
    for i in range(a.shape[0]):
        for j in range(b.shape[0]):
            for k in range(a.shape[1]):
                out[i, j] += a[i, k] * b[j, k]
    return out / a.shape[1]


def test_center_rows_examples():
    np.testing.assert_array_equal(cca.center_rows([[1.0, 1.0, 1.0]]), [[0.0, 0.0, 0.0]])
    np.testing.assert_array_equal(cca.center_rows([[1.0, -1.0]]), [[1.0, -1.0]])
    np.testing.assert_allclose(cca.center_rows([[2.0, 4.0, 6.0]]), [[-2.0, 0.0, 2.0]])


def test_center_rows_leaves_input_alone():
    y = np.array([[2.0, 4.0, 6.0]])
    cca.center_rows(y)
    np.testing.assert_array_equal(y, [[2.0, 4.0, 6.0]])


@given(arrays(np.float64, st.tuples(st.integers(1, 4), st.integers(1, 12)),
              elements=st.floats(-1e3, 1e3)))
def test_center_rows_zero_mean(y):
    c = cca.center_rows(y)
    scale = np.max(np.abs(y), axis=1) + 1.0
    assert np.all(np.abs(c.mean(axis=1)) <= 1e-12 * scale * y.shape[1])


def test_sample_correlations_identity():
    c = cca.sample_correlations(np.eye(2), np.eye(2))
    for r in (c.r11, c.r22, c.r12):
        np.testing.assert_array_equal(r, 0.5 * np.eye(2))


def test_sample_correlations_zero_view():
    c = cca.sample_correlations(np.zeros((2, 3)), np.ones((2, 3)))
    np.testing.assert_array_equal(c.r12, 0)
    np.testing.assert_array_equal(c.r11, 0)


def test_sample_correlations_against_loop(rng):
    y1 = rng.integers(-5, 6, size=(2, 3)).astype(float)
    y2 = rng.integers(-5, 6, size=(2, 3)).astype(float)
    c = cca.sample_correlations(y1, y2)
    np.testing.assert_allclose(c.r12, loop_correlation(y1, y2), atol=1e-14)
    np.testing.assert_allclose(c.r11, loop_correlation(y1, y1), atol=1e-14)
    np.testing.assert_allclose(c.r22, loop_correlation(y2, y2), atol=1e-14)


def test_sample_correlations_psd_and_symmetric(rng):
    c = cca.sample_correlations(rng.standard_normal((6, 40)), rng.standard_normal((4, 40)))
    for r in (c.r11, c.r22):
        np.testing.assert_allclose(r, r.T, atol=1e-10)
        w = np.linalg.eigvalsh(r)
        assert w[0] >= -1e-10 * w[-1]


def test_sample_correlations_shape_error_names_shapes():
    with pytest.raises(DimensionError, match=r"\(2, 3\).*\(2, 4\)"):
        cca.sample_correlations(np.zeros((2, 3)), np.zeros((2, 4)))


def test_identical_views_give_unit_correlations(rng):
    y = rng.standard_normal((4, 60))
    sol = cca.solve_cca(cca.sample_correlations(y, y), 4, ridge=0.0)
    np.testing.assert_allclose(sol.rho, 1.0, atol=1e-8)


def test_small_instance_matches_whitened_svd(rng):
    y1 = rng.standard_normal((4, 50))
    y2 = 0.7 * y1[::-1] + rng.standard_normal((4, 50))
    sol = cca.solve_cca(cca.sample_correlations(y1, y2), 4, ridge=0.0)
    np.testing.assert_allclose(sol.rho, whitened_svd_oracle(y1, y2), atol=1e-8)


def test_solution_invariants(rng):
    y1 = rng.standard_normal((6, 80))
    y2 = np.vstack([y1[:2] + 0.3 * rng.standard_normal((2, 80)), rng.standard_normal((3, 80))])
    corr = cca.sample_correlations(y1, y2)
    sol = cca.solve_cca(corr, 3, ridge=0.0)
    assert np.all(np.diff(sol.rho) <= 0)
    assert np.all((sol.rho >= 0) & (sol.rho <= 1 + 1e-8))
    np.testing.assert_allclose(sol.q1.T @ corr.r11 @ sol.q1, np.eye(3), atol=1e-6)
    np.testing.assert_allclose(sol.q2.T @ corr.r22 @ sol.q2, np.eye(3), atol=1e-6)
    # the canonical pairs reach the reported correlations
    cross = sol.q1.T @ corr.r12 @ sol.q2
    np.testing.assert_allclose(np.diag(cross), sol.rho, atol=1e-8)


def test_sign_convention(rng):
    y1, y2 = rng.standard_normal((2, 5, 40))
    sol = cca.solve_cca(cca.sample_correlations(y1, y2), 3)
    lead = sol.q1[np.argmax(np.abs(sol.q1), axis=0), np.arange(3)]
    assert np.all(lead > 0)


def test_rho_invariant_to_row_mixing(rng):
    y1 = rng.standard_normal((4, 200))
    y2 = np.vstack([y1[:2], rng.standard_normal((2, 200))]) + 0.5 * rng.standard_normal((4, 200))
    a = rng.standard_normal((4, 4)) + 3 * np.eye(4)
    base = cca.solve_cca(cca.sample_correlations(y1, y2), 4, ridge=0.0).rho
    mixed = cca.solve_cca(cca.sample_correlations(a @ y1, y2), 4, ridge=0.0).rho
    np.testing.assert_allclose(mixed, base, atol=1e-6)


def test_degenerate_view_with_ridge(rng):
    y1 = np.vstack([rng.standard_normal((2, 30))] * 2)  # rank 2 of 4
    y2 = rng.standard_normal((3, 30))
    corr = cca.sample_correlations(y1, y2)
    sol = cca.solve_cca(corr, 3, ridge=1e-3)
    assert np.all((sol.rho >= 0) & (sol.rho <= 1))


def test_singular_without_ridge_advises_ridge(rng):
    y1 = np.vstack([rng.standard_normal((2, 30))] * 2)
    with pytest.raises(SingularCorrelationError, match="larger ridge"):
        cca.solve_cca(cca.sample_correlations(y1, rng.standard_normal((3, 30))), 2, ridge=0.0)


def test_too_many_components(rng):
    y1, y2 = rng.standard_normal((2, 3, 20))
    with pytest.raises(DimensionError):
        cca.solve_cca(cca.sample_correlations(y1, y2), 4)


def test_complex_views_are_supported(rng):
    s = rng.standard_normal((1, 500))
    y1 = rng.standard_normal((3, 1)) * s + 0.1 * (rng.standard_normal((3, 500)) + 1j * rng.standard_normal((3, 500)))
    y2 = (1j * rng.standard_normal((3, 1))) * s + 0.1 * rng.standard_normal((3, 500))
    sol = cca.solve_cca(cca.sample_correlations(y1, y2), 1)
    assert sol.q1.dtype.kind == "c"
    assert sol.rho[0] > 0.95


def test_count_above():
    assert cca.count_above([0.9, 0.6, 0.5, 0.2]) == 3
    assert cca.count_above([0.9, 0.6, 0.5, 0.2], rho_min=0.7) == 1


def test_project_examples(rng):
    np.testing.assert_array_equal(cca.project(rng.standard_normal((4, 6)), np.zeros((4, 2))), 0)
    np.testing.assert_array_equal(cca.project(np.eye(3), np.eye(3)[:, :1]), np.eye(3)[:, :1])
    y, q = rng.standard_normal((4, 6)), rng.standard_normal((4, 2))
    naive = np.array([[sum(y[r, t] * q[r, n] for r in range(4)) for n in range(2)] for t in range(6)])
    np.testing.assert_allclose(cca.project(y, q), naive, atol=1e-13)
    with pytest.raises(DimensionError):
        cca.project(y, np.zeros((3, 2)))


def test_maxvar_examples(rng):
    g = rng.standard_normal((5, 2))
    assert cca.maxvar_objective(g, [g, g]) == 0.0
    p = rng.standard_normal((5, 2))
    assert cca.maxvar_objective(np.zeros((5, 2)), [p]) == pytest.approx(np.sum(p**2))
    p1, p2 = rng.standard_normal((2, 5, 2))
    avg = (p1 + p2) / 2
    direct = sum((p1[i, j] - avg[i, j]) ** 2 + (p2[i, j] - avg[i, j]) ** 2
                 for i in range(5) for j in range(2))
    assert cca.maxvar_objective(avg, [p1, p2]) == pytest.approx(direct, rel=1e-12)
    with pytest.raises(DimensionError):
        cca.maxvar_objective(g, [np.zeros((5, 3))])


def test_maxvar_identities_at_cca_solution(rng):
    t = 400
    common = rng.standard_normal((2, t))
    y1 = np.vstack([common, rng.standard_normal((2, t))]) + 0.4 * rng.standard_normal((4, t))
    y2 = np.vstack([common[::-1], rng.standard_normal((3, t))]) + 0.4 * rng.standard_normal((5, t))
    sol = cca.solve_cca(cca.sample_correlations(y1, y2), 2, ridge=0.0)
    p1 = cca.project(y1, sol.q1) / np.sqrt(t)
    p2 = cca.project(y2, sol.q2) / np.sqrt(t)
    # distance between unit-variance projections
    np.testing.assert_allclose(np.sum((p1 - p2) ** 2), 2 * np.sum(1 - sol.rho), atol=1e-6)
    # two-view cost at the orthonormalized average
    u, _, vt = np.linalg.svd((p1 + p2) / 2, full_matrices=False)
    g = u @ vt
    expected = 4 * np.sum(1 - np.sqrt((1 + sol.rho) / 2))
    np.testing.assert_allclose(cca.maxvar_objective(g, [p1, p2]), expected, atol=1e-6)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 5), st.integers(2, 5))
def test_rho_bounded_property(seed, d1, d2):
    r = np.random.default_rng(seed)
    y1 = r.standard_normal((d1, 40))
    y2 = r.standard_normal((d2, 40)) + 0.5 * y1[:1]
    sol = cca.solve_cca(cca.sample_correlations(y1, y2), min(d1, d2))
    assert np.all(sol.rho >= 0) and np.all(sol.rho <= 1 + 1e-8)
    assert np.all(np.diff(sol.rho) <= 1e-12)
