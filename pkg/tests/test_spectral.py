import itertools
import math

import numpy as np
import pytest
import scipy.linalg
import scipy.sparse as sp

from oracles import jacobi_eigh, random_grid_mesh, random_sphere_mesh
from schrodiff.errors import HypothesisViolated, KTooLarge
from schrodiff.mesh_io import luminance
from schrodiff.operator import (
    SparseSymmetricOperator,
    assemble_mesh_laplacian,
    assemble_schrodinger,
    build_potential,
)
from schrodiff.spectral import (
    auto_time,
    diffusion_distance,
    distance_map,
    distance_maps,
    eigendecompose,
    evolve,
    kernel_matrix,
    kernel_slice,
    loglog_slopes,
    stability_experiment,
)


def grid_op(seed, nx, ny, potential=None):
    rng = np.random.default_rng(seed)
    mesh = random_grid_mesh(rng, nx=nx, ny=ny)
    lap = assemble_mesh_laplacian(mesh)
    if potential is None:
        return mesh, lap
    return mesh, assemble_schrodinger(lap, potential(rng, mesh))


def test_two_vertex_closed_form():
    w = 0.75
    m = sp.csr_matrix(np.array([[w, -w], [-w, w]]))
    dec = eigendecompose(SparseSymmetricOperator(m, s=1.0, s_factor=0.2), 2)
    np.testing.assert_allclose(dec.eigenvalues, [0.0, 2 * w], atol=1e-15)
    assert abs(abs(dec.eigenvectors[0, 0]) - 1 / math.sqrt(2)) < 1e-15


def test_laplacian_kernel_mode_is_constant():
    _, lap = grid_op(0, 8, 6)
    dec = eigendecompose(lap, 10)
    assert abs(dec.eigenvalues[0]) <= 1e-8 * dec.eigenvalues[-1]
    np.testing.assert_allclose(dec.eigenvectors[:, 0], 1 / math.sqrt(lap.n), atol=1e-10)


def test_matches_jacobi_on_80_vertices():
    _, H = grid_op(1, 10, 8, potential=lambda rng, m: rng.uniform(0, 1, m.n_vertices))
    assert H.n == 80
    dec = eigendecompose(H, 80)
    vals, _ = jacobi_eigh(H.toarray())
    np.testing.assert_allclose(dec.eigenvalues, vals, rtol=0, atol=1e-8)


def test_invariants_and_sign_convention():
    _, H = grid_op(2, 9, 7, potential=lambda rng, m: rng.uniform(0, 1, m.n_vertices))
    dec = eigendecompose(H, 30)
    lam, phi = dec.eigenvalues, dec.eigenvectors
    assert np.all(np.diff(lam) >= 0)
    assert lam[0] >= -1e-8 * lam[-1]
    np.testing.assert_allclose(phi.T @ phi, np.eye(30), atol=1e-8)
    resid = np.linalg.norm(H.matrix @ phi - phi * lam, axis=0)
    assert np.all(resid <= 1e-6 * np.maximum(1, lam))
    peak = phi[np.argmax(np.abs(phi), axis=0), np.arange(30)]
    assert np.all(peak > 0)


def test_sparse_solver_agrees_with_dense():
    rng = np.random.default_rng(3)
    mesh = random_sphere_mesh(rng, 3)
    H = assemble_schrodinger(assemble_mesh_laplacian(mesh), build_potential(mesh, luminance(mesh)))
    dense = eigendecompose(H, 20, method="dense")
    sparse = eigendecompose(H, 20, method="sparse")
    np.testing.assert_allclose(sparse.eigenvalues, dense.eigenvalues, rtol=1e-9, atol=1e-12)
    # well-separated modes agree up to the shared sign convention
    gaps = np.diff(dense.eigenvalues)
    simple = [j for j in range(1, 19) if min(gaps[j - 1], gaps[j]) > 1e-3 * dense.eigenvalues[-1]]
    assert simple
    for j in simple:
        np.testing.assert_allclose(sparse.eigenvectors[:, j], dense.eigenvectors[:, j], atol=1e-6)


def test_k_too_large():
    _, lap = grid_op(0, 5, 5)
    with pytest.raises(KTooLarge):
        eigendecompose(lap, 26)


def test_constant_shift_preserves_eigenvectors():
    mesh, lap = grid_op(4, 9, 6)
    V = np.random.default_rng(4).uniform(0, 1, lap.n)
    a = eigendecompose(assemble_schrodinger(lap, V), lap.n)
    b = eigendecompose(assemble_schrodinger(lap, V + 2.5), lap.n)
    np.testing.assert_allclose(b.eigenvalues, a.eigenvalues + 2.5, rtol=0, atol=1e-8)
    gaps = np.diff(a.eigenvalues)
    for j in range(1, lap.n - 1):
        if min(gaps[j - 1], gaps[j]) > 1e-6:
            cos = abs(np.dot(a.eigenvectors[:, j], b.eigenvectors[:, j]))
            assert math.acos(min(cos, 1.0)) <= 1e-6


def test_auto_time_halves_second_mode():
    _, lap = grid_op(5, 8, 5)
    dec = eigendecompose(lap, 5)
    t = auto_time(dec)
    assert math.exp(-2 * dec.eigenvalues[1] * t) == pytest.approx(0.5, rel=1e-14)


# -- kernels and distances -------------------------------------------------------

def full(seed=6, nx=8, ny=7):
    _, H = grid_op(seed, nx, ny, potential=lambda rng, m: rng.uniform(0, 0.5, m.n_vertices))
    return H, eigendecompose(H, H.n)


def test_completeness_at_time_zero():
    H, dec = full()
    np.testing.assert_allclose(kernel_slice(dec, 1e-300, 7), np.eye(H.n)[7], atol=1e-12)


def test_long_time_leaves_kernel_mode():
    _, lap = grid_op(7, 7, 6)
    dec = eigendecompose(lap, lap.n)
    t = 30.0 / dec.eigenvalues[1]
    np.testing.assert_allclose(kernel_slice(dec, t, 3), 1 / lap.n, rtol=1e-10)


def test_kernel_slice_matches_expm_on_60_vertices():
    H, dec = full(8, 10, 6)
    assert H.n == 60
    t = 0.7 * auto_time(dec)
    ref = scipy.linalg.expm(-t * H.toarray())
    for x in (0, 17, 59):
        got = kernel_slice(dec, t, x)
        assert np.linalg.norm(got - ref[:, x]) <= 1e-6 * np.linalg.norm(ref[:, x])


def test_diffusion_distance_matches_expm_on_50_vertices():
    _, H = grid_op(9, 10, 5, potential=lambda rng, m: rng.uniform(0, 0.5, m.n_vertices))
    dec = eigendecompose(H, H.n)
    t = auto_time(dec)
    K = scipy.linalg.expm(-t * H.toarray())
    for x, y in [(0, 49), (3, 4), (12, 30)]:
        expected = np.linalg.norm(K[:, x] - K[:, y])
        assert diffusion_distance(dec, t, x, y) == pytest.approx(expected, rel=1e-6)


def test_distance_basics():
    H, dec = full()
    t = auto_time(dec)
    for x in (0, 11, 55):
        assert diffusion_distance(dec, t, x, x) == 0.0
        d = distance_map(dec, t, x)
        assert d[x] == 0.0 and d.min() >= 0.0
        looped = np.array([diffusion_distance(dec, t, x, y) for y in range(H.n)])
        np.testing.assert_array_equal(d, looped)
    for x, y in [(1, 2), (5, 40), (0, 55)]:
        assert diffusion_distance(dec, t, x, y) == diffusion_distance(dec, t, y, x)
    np.testing.assert_array_equal(distance_maps(dec, t, [3, 9])[1], distance_map(dec, t, 9))


def test_metric_axioms_small_mesh():
    H, dec = full(10, 6, 5)
    t = auto_time(dec)
    D = distance_maps(dec, t, range(H.n))
    assert np.array_equal(D, D.T)
    off = D[~np.eye(H.n, dtype=bool)]
    assert off.min() > 0
    for x, y, z in itertools.permutations(range(H.n), 3):
        assert D[x, z] <= D[x, y] + D[y, z] + 1e-9


def test_monotone_damping():
    H, dec = full()
    times = np.geomspace(0.1, 100, 25) * auto_time(dec)
    for x, y in [(0, 1), (4, 50), (20, 21)]:
        d = [diffusion_distance(dec, t, x, y) for t in times]
        assert np.all(np.diff(d) <= 0)


def test_full_kernel_positive():
    H, dec = full()
    K = kernel_matrix(dec, auto_time(dec))
    assert K.min() >= -1e-9


# -- evolve ------------------------------------------------------------------

def test_evolve_steady_state():
    _, lap = grid_op(11, 7, 6)
    u0 = np.full(lap.n, 1 / math.sqrt(lap.n))
    np.testing.assert_allclose(evolve(lap, u0, 3.7, 64), u0, atol=1e-10)


def test_evolve_first_order_convergence():
    H, dec = full(12, 7, 6)
    t = 0.7 * auto_time(dec)
    x = 5
    exact = kernel_slice(dec, t, x)
    u0 = np.eye(H.n)[x]
    errs = [np.linalg.norm(evolve(H, u0, t, s) - exact) for s in (256, 512, 1024, 2048)]
    ratios = np.array(errs[:-1]) / np.array(errs[1:])
    np.testing.assert_allclose(ratios, 2.0, rtol=0.02)


def test_constant_potential_factors_out():
    _, lap = grid_op(13, 7, 5)
    c, t, steps = 0.8, 2.0, 4096
    u0 = np.random.default_rng(13).standard_normal(lap.n)
    heat = evolve(lap, u0, t, steps)
    shifted = evolve(assemble_schrodinger(lap, np.full(lap.n, c)), u0, t, steps)
    expected = math.exp(-c * t) * heat
    assert np.linalg.norm(shifted - expected) <= 1e-3 * np.linalg.norm(expected)


# -- stability -------------------------------------------------------------------

def test_zero_eps_gives_zero_error():
    mesh, lap = grid_op(14, 7, 5)
    V = np.zeros(lap.n)
    u0 = np.eye(lap.n)[0]
    rows = stability_experiment(lap, V, np.ones(lap.n), [0.0], u0, 1.0, 64)
    assert rows[0].error == 0.0


def test_constant_perturbation_closed_form():
    _, lap = grid_op(15, 7, 5)
    u0 = np.random.default_rng(15).standard_normal(lap.n)
    t, steps = 1.5, 2048
    heat = evolve(lap, u0, t, steps)
    rows = stability_experiment(lap, np.zeros(lap.n), np.ones(lap.n), [1e-1, 1e-2, 1e-3], u0, t, steps)
    for row in rows:
        expected = (1 - math.exp(-row.eps * t)) * np.linalg.norm(heat)
        assert row.error == pytest.approx(expected, rel=1e-3)


def test_random_perturbation_slope_100_vertices():
    rng = np.random.default_rng(16)
    mesh = random_grid_mesh(rng, nx=10, ny=10)
    lap = assemble_mesh_laplacian(mesh)
    V = rng.uniform(0, 1, lap.n)
    N = rng.uniform(0, 1, lap.n)
    dec = eigendecompose(assemble_schrodinger(lap, V), 2)
    rows = stability_experiment(lap, V, N, [1e-1, 1e-2, 1e-3, 1e-4], np.eye(lap.n)[0], auto_time(dec))
    slope = np.polyfit(np.log([r.eps for r in rows]), np.log([r.error for r in rows]), 1)[0]
    assert 0.8 <= slope <= 1.2


def test_rows_sorted_descending_and_slopes():
    _, lap = grid_op(17, 6, 5)
    rows = stability_experiment(lap, np.zeros(lap.n), np.ones(lap.n), [1e-3, 1e-1, 1e-2], np.eye(lap.n)[2], 1.0, 128)
    assert [r.eps for r in rows] == [1e-1, 1e-2, 1e-3]
    slopes = loglog_slopes(rows)
    assert slopes[0] is None and all(abs(s - 1) < 0.1 for s in slopes[1:])


def test_negative_perturbed_potential_violates_hypothesis():
    _, lap = grid_op(18, 6, 5)
    with pytest.raises(HypothesisViolated):
        stability_experiment(lap, np.zeros(lap.n), -np.ones(lap.n), [0.1], np.eye(lap.n)[0], 1.0, 8)
    with pytest.raises(HypothesisViolated):
        stability_experiment(lap, np.zeros(lap.n), np.ones(lap.n), [-0.1], np.eye(lap.n)[0], 1.0, 8)
