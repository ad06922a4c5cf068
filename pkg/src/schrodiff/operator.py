"""Discrete Gaussian mesh Laplacian, texture gradient norms, potentials and the
Schrödinger operator ``-Δ_s + diag(V)``.

All operators are stored as the positive semidefinite matrix ``H`` (the
negated Laplacian plus the potential), so eigenvalues are nonnegative and
``exp(-tH)`` is the diffusion semigroup.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .errors import DegenerateMesh, NegativePotential, SingularTriangle
from .mesh_io import TriangleMesh, as_field, atomic_write_text

DEFAULT_S_FACTOR = 0.2
MAX_GRAM_CONDITION = 1e12


class PotentialKind(str, enum.Enum):
    NONE = "none"
    RAW = "raw"
    LOG_RAW = "log_raw"
    GRAD = "grad"
    LOG_GRAD = "log_grad"

    @property
    def uses_texture(self) -> bool:
        return self is not PotentialKind.NONE

    @property
    def uses_beta(self) -> bool:
        return self in (PotentialKind.LOG_RAW, PotentialKind.LOG_GRAD)


@dataclass(frozen=True, eq=False)
class SparseSymmetricOperator:
    """Symmetric PSD sparse matrix ``H = -Δ_s + diag(V)`` plus assembly metadata."""

    matrix: sp.csr_matrix
    s: float
    s_factor: float
    potential_kind: str = PotentialKind.NONE.value
    alpha: float = 1.0
    beta: float = 1.0
    potential: np.ndarray | None = None

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    def apply(self, f) -> np.ndarray:
        return self.matrix @ np.asarray(f, dtype=np.float64)

    def toarray(self) -> np.ndarray:
        return self.matrix.toarray()

    def norm(self) -> float:
        """Max absolute row sum; an upper bound on the spectral norm."""
        return float(abs(self.matrix).sum(axis=1).max())

    def dump(self, path) -> None:
        """Write ``i j value`` triplets of the upper triangle (0-based, row-major)."""
        upper = sp.triu(self.matrix, format="coo")
        order = np.lexsort((upper.col, upper.row))
        lines = [f"{i} {j} {v!r}" for i, j, v in
                 zip(upper.row[order].tolist(), upper.col[order].tolist(), upper.data[order].tolist())]
        atomic_write_text(Path(path), "\n".join(lines) + "\n")


def _pair_weights(mesh: TriangleMesh, s: float):
    """Per-triangle Gaussian weight of each of the three edges, shape (m, 3)."""
    v, t = mesh.vertices, mesh.triangles
    area = mesh.triangle_areas()
    scale = 1.0 / (4.0 * math.pi * s * s) * (area / 3.0)
    w = np.empty((len(t), 3))
    for col, (a, b) in enumerate(((0, 1), (1, 2), (2, 0))):
        d2 = np.sum((v[t[:, a]] - v[t[:, b]]) ** 2, axis=1)
        w[:, col] = scale * np.exp(-d2 / (4.0 * s))
    return w


def assemble_mesh_laplacian(mesh: TriangleMesh, s_factor: float = DEFAULT_S_FACTOR) -> SparseSymmetricOperator:
    """Assemble ``-Δ_s`` with one-ring Gaussian weights.

    ``s`` is ``s_factor`` times the median unique-edge length. Every ordered
    pair (a, b) of a triangle contributes ``exp(-|a-b|^2 / 4s) A / (12 π s^2)``;
    contributions are summed in triangle order, then mirrored so the matrix is
    symmetric bit for bit.
    """
    if not s_factor > 0:
        raise ValueError(f"s_factor must be positive, got {s_factor}")
    median = float(np.median(mesh.edge_lengths()))
    if not median > 0:
        raise DegenerateMesh("median edge length is zero")
    s = s_factor * median
    n = mesh.n_vertices
    t = mesh.triangles

    w = _pair_weights(mesh, s)
    assert np.all(w > 0), "nonpositive Gaussian weight on a nondegenerate mesh"
    # half-edges in triangle order: (tri0: e01 e12 e20), (tri1: ...), ...
    a = t[:, [0, 1, 2]].ravel()
    b = t[:, [1, 2, 0]].ravel()
    lo, hi = np.minimum(a, b), np.maximum(a, b)
    keys = lo * n + hi
    uniq, inverse = np.unique(keys, return_inverse=True)
    offdiag = np.bincount(inverse, weights=w.ravel(), minlength=len(uniq))
    rows, cols = uniq // n, uniq % n
    diag = np.bincount(rows, weights=offdiag, minlength=n) + np.bincount(cols, weights=offdiag, minlength=n)

    upper = sp.coo_matrix((-offdiag, (rows, cols)), shape=(n, n))
    matrix = (upper + upper.T + sp.diags(diag)).tocsr()
    matrix.sort_indices()
    return SparseSymmetricOperator(matrix=matrix, s=s, s_factor=float(s_factor))


def triangle_gradient_norms(mesh: TriangleMesh, values) -> np.ndarray:
    """Gradient norm of ``values`` seen from each corner of each triangle, shape (m, 3).

    For corner v with neighbours u, w the unit edge directions r_u, r_w span
    the triangle plane; with g the two difference quotients, the squared norm
    is ``g^T (P P^T)^{-1} g`` where P stacks r_u and r_w.
    """
    f = as_field(values, mesh, "texture")
    v, t = mesh.vertices, mesh.triangles
    out = np.empty((len(t), 3))
    for corner in range(3):
        iv, iu, iw = t[:, corner], t[:, (corner + 1) % 3], t[:, (corner + 2) % 3]
        eu = v[iu] - v[iv]
        ew = v[iw] - v[iv]
        lu = np.linalg.norm(eu, axis=1)
        lw = np.linalg.norm(ew, axis=1)
        c = np.sum(eu * ew, axis=1) / (lu * lw)
        cond = (1.0 + np.abs(c)) / np.maximum(1.0 - np.abs(c), 0.0)
        bad = ~(cond <= MAX_GRAM_CONDITION)
        if bad.any():
            face = int(np.nonzero(bad)[0][0])
            raise SingularTriangle(f"triangle {face} has near-collinear edges (Gram condition {cond[face]:.3g})")
        gu = (f[iu] - f[iv]) / lu
        gw = (f[iw] - f[iv]) / lw
        # inverse of [[1, c], [c, 1]]
        sq = (gu * gu - 2.0 * c * gu * gw + gw * gw) / (1.0 - c * c)
        out[:, corner] = np.sqrt(np.maximum(sq, 0.0))
    return out


def gradient_norm_field(mesh: TriangleMesh, values) -> np.ndarray:
    """Per-vertex |∇I|: unweighted mean of the corner estimates over the one-ring."""
    per_corner = triangle_gradient_norms(mesh, values)
    n = mesh.n_vertices
    t = mesh.triangles.ravel()
    total = np.bincount(t, weights=per_corner.ravel(), minlength=n)
    count = np.bincount(t, minlength=n)
    return np.divide(total, count, out=np.zeros(n), where=count > 0)


def _positive_mean_inverse(x):
    pos = x[x > 0]
    return 1.0 / float(pos.mean()) if pos.size else 1.0


def resolve_beta(mesh: TriangleMesh, texture, kind, beta=None) -> float:
    """Return ``beta``, or its automatic value when ``beta`` is None.

    Automatic beta is the reciprocal mean of the positive entries of the
    quantity the log is applied to (|∇I| for log_grad, I - min I for log_raw),
    which makes the potential invariant to rescaling the texture intensity.
    Kinds without a beta resolve to 1.
    """
    kind = PotentialKind(kind)
    if beta is not None:
        if not beta >= 0:
            raise ValueError(f"beta must be >= 0, got {beta}")
        return float(beta)
    if kind is PotentialKind.LOG_GRAD:
        return _positive_mean_inverse(gradient_norm_field(mesh, texture))
    if kind is PotentialKind.LOG_RAW:
        f = as_field(texture, mesh, "texture")
        return _positive_mean_inverse(f - f.min())
    return 1.0


def build_potential(mesh: TriangleMesh, texture, kind=PotentialKind.LOG_GRAD,
                    alpha: float = 1.0, beta: float | None = None) -> np.ndarray:
    """Nonnegative potential field derived from the texture ``texture``.

    ``texture`` may be None only for kind ``none``.
    """
    kind = PotentialKind(kind)
    if not alpha >= 0:
        raise ValueError(f"alpha must be >= 0, got {alpha}")
    if kind is PotentialKind.NONE:
        return np.zeros(mesh.n_vertices)
    f = as_field(texture, mesh, "texture")
    b = resolve_beta(mesh, f, kind, beta)
    if kind is PotentialKind.RAW:
        return alpha * (f - f.min())
    if kind is PotentialKind.LOG_RAW:
        return alpha * np.log1p(b * (f - f.min()))
    g = gradient_norm_field(mesh, f)
    if kind is PotentialKind.GRAD:
        return alpha * g
    return alpha * np.log1p(b * g)


def assemble_schrodinger(laplacian: SparseSymmetricOperator, potential, *,
                         kind=None, alpha=None, beta=None) -> SparseSymmetricOperator:
    """``H = -Δ_s + diag(V)``; only the diagonal changes."""
    V = np.asarray(potential, dtype=np.float64)
    if V.shape != (laplacian.n,):
        raise ValueError(f"potential has shape {V.shape}, operator has dimension {laplacian.n}")
    if not np.all(np.isfinite(V)):
        raise NegativePotential("potential contains non-finite values")
    if V.min(initial=0.0) < -1e-12:
        i = int(np.argmin(V))
        raise NegativePotential(f"potential is negative at vertex {i}: {V[i]!r}")
    V = np.maximum(V, 0.0)
    matrix = (laplacian.matrix + sp.diags(V)).tocsr()
    matrix.sort_indices()
    return replace(
        laplacian,
        matrix=matrix,
        potential=V,
        potential_kind=PotentialKind(kind).value if kind is not None else laplacian.potential_kind,
        alpha=laplacian.alpha if alpha is None else float(alpha),
        beta=laplacian.beta if beta is None else float(beta),
    )
