"""Independent reference computations used by the tests.

None of these call into the code paths they check: the Laplacian is built
with plain per-vertex loops, eigenpairs come from a cyclic Jacobi solver,
EMD from a transportation LP.
"""

import itertools
import math

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog

from schrodiff.mesh_io import TriangleMesh
from schrodiff.synthetic import icosphere, strip_grid


# -- random meshes ------------------------------------------------------------

def random_rotation(rng):
    q, r = np.linalg.qr(rng.standard_normal((3, 3)))
    q *= np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] *= -1
    return q


def random_grid_mesh(rng, nx=None, ny=None):
    nx = nx or int(rng.integers(6, 18))
    ny = ny or int(rng.integers(5, 18))
    v, f = strip_grid(nx, ny, length=float(rng.uniform(1, 5)), width=float(rng.uniform(1, 5)))
    h = min(v[ny, 0] - v[0, 0], v[1, 1] - v[0, 1])
    v[:, :2] += rng.uniform(-0.2, 0.2, (len(v), 2)) * h
    v[:, 2] = rng.uniform(-0.3, 0.3) * np.sin(v[:, 0]) * np.cos(v[:, 1])
    return TriangleMesh(v, f, rng.uniform(0, 1, (len(v), 3)))


def random_sphere_mesh(rng, subdivisions=None):
    sub = subdivisions if subdivisions is not None else int(rng.integers(1, 3))
    v, f = icosphere(sub)
    v = v * (1.0 + 0.1 * rng.standard_normal((len(v), 1)))
    v = v @ random_rotation(rng).T + rng.standard_normal(3)
    return TriangleMesh(v, f, rng.uniform(0, 1, (len(v), 3)))


def random_mesh(rng):
    return random_grid_mesh(rng) if rng.random() < 0.5 else random_sphere_mesh(rng)


# -- operator ------------------------------------------------------------------

def literal_laplacian(mesh, s_factor=0.2):
    """Dense ``-Δ_s`` built vertex by vertex, straight from the defining sum."""
    v = [np.array(p) for p in mesh.vertices]
    tris = [tuple(int(i) for i in t) for t in mesh.triangles]
    edges = set()
    for a, b, c in tris:
        for p, q in ((a, b), (b, c), (c, a)):
            edges.add((min(p, q), max(p, q)))
    lengths = sorted(math.dist(v[p], v[q]) for p, q in edges)
    s = s_factor * float(np.median(lengths))
    n = len(v)
    lap = np.zeros((n, n))
    for i in range(n):
        for tri in tris:
            if i not in tri:
                continue
            a, b, c = (v[j] for j in tri)
            area = 0.5 * np.linalg.norm(np.cross(b - a, c - a))
            for w in tri:
                weight = area / 3.0 * math.exp(-np.sum((v[i] - v[w]) ** 2) / (4 * s)) / (4 * math.pi * s * s)
                lap[i, w] += weight
                lap[i, i] -= weight
    return -lap, s


def plane_fit_gradient_norm(p0, p1, p2, values):
    """Gradient norm of the linear interpolant, in triangle-local 2-D coordinates."""
    e1 = (p1 - p0) / np.linalg.norm(p1 - p0)
    normal = np.cross(p1 - p0, p2 - p0)
    e2 = np.cross(normal / np.linalg.norm(normal), e1)
    A = np.array([[np.dot(p - p0, e1), np.dot(p - p0, e2), 1.0] for p in (p0, p1, p2)])
    a, b, _ = np.linalg.solve(A, np.asarray(values, dtype=float))
    return math.hypot(a, b)


# -- eigen ----------------------------------------------------------------------

def jacobi_eigh(A, tol=1e-14, max_sweeps=60):
    """Cyclic Jacobi eigensolver for a dense symmetric matrix (ascending)."""
    A = np.array(A, dtype=float)
    n = len(A)
    V = np.eye(n)
    scale = np.linalg.norm(A)
    for _ in range(max_sweeps):
        off = math.sqrt(max(np.sum(A * A) - np.sum(np.diag(A) ** 2), 0.0))
        if off <= tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                if abs(apq) < 1e-300:
                    continue
                theta = (A[q, q] - A[p, p]) / (2.0 * apq)
                t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                ap, aq = A[:, p].copy(), A[:, q].copy()
                A[:, p] = c * ap - s * aq
                A[:, q] = s * ap + c * aq
                ap, aq = A[p, :].copy(), A[q, :].copy()
                A[p, :] = c * ap - s * aq
                A[q, :] = s * ap + c * aq
                vp, vq = V[:, p].copy(), V[:, q].copy()
                V[:, p] = c * vp - s * vq
                V[:, q] = s * vp + c * vq
    vals = np.diag(A).copy()
    order = np.argsort(vals)
    return vals[order], V[:, order]


# -- emd --------------------------------------------------------------------------

def transport_lp(a, b, scale=1e5):
    """Optimal transport cost between histograms with ground cost |i - j|.

    HiGHS's feasibility tolerance is absolute (1e-10 at best), which would
    cost ~1e-8 in the objective at 120 bins; solving with the marginals
    multiplied by ``scale`` and dividing the optimum back keeps the oracle
    well below 1e-12.
    """
    n = len(a)
    cost = np.abs(np.subtract.outer(np.arange(n), np.arange(n))).astype(float).ravel()
    A = sp.vstack([sp.kron(sp.eye(n), np.ones((1, n))), sp.kron(np.ones((1, n)), sp.eye(n))]).tocsr()
    res = linprog(cost, A_eq=A, b_eq=scale * np.concatenate([a, b]), bounds=(0, None), method="highs-ds",
                  options={"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10})
    assert res.status == 0, res.message
    return res.fun / scale


def random_histogram(rng, bins=120):
    h = rng.random(bins) ** 3
    return h / h.sum()


# -- retrieval --------------------------------------------------------------------

def brute_metrics(M, labels):
    n = len(labels)
    nn = nn2 = 0
    for i in range(n):
        others = sorted((M[i][j], j) for j in range(n) if j != i)
        nn += labels[others[0][1]] == labels[i]
        nn2 += labels[others[1][1]] == labels[i]
    top = max(max(row) for row in M)
    same = [M[i][j] for i, j in itertools.combinations(range(n), 2) if labels[i] == labels[j]]
    diff = [M[i][j] for i, j in itertools.combinations(range(n), 2) if labels[i] != labels[j]]
    return {
        "nn_correct": nn,
        "second_nn_correct": nn2,
        "intra_class_mean": sum(same) / len(same) / top if same else None,
        "inter_class_mean": sum(diff) / len(diff) / top if diff else None,
    }
