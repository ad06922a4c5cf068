"""Low spectrum of the Schrödinger operator, spectral diffusion kernels and
distances, an implicit-Euler time stepper, and the potential-perturbation
stability experiment.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ConvergenceFailure, EigenError, HypothesisViolated, KTooLarge, SolveFailure
from .operator import SparseSymmetricOperator, assemble_schrodinger

logger = logging.getLogger(__name__)

#: meshes up to this many vertices are solved with a dense eigensolver
DENSE_LIMIT = 1500
DEFAULT_K = 100


@dataclass(frozen=True, eq=False)
class SpectralDecomposition:
    """The ``k`` smallest eigenpairs of an operator, ascending.

    ``eigenvectors`` has shape (n, k); column j pairs with ``eigenvalues[j]``.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    s: float
    s_factor: float
    potential_kind: str
    alpha: float
    beta: float

    @property
    def k(self) -> int:
        return len(self.eigenvalues)

    @property
    def n(self) -> int:
        return self.eigenvectors.shape[0]


def _fix_signs(vecs):
    idx = np.argmax(np.abs(vecs), axis=0)  # first maximum wins ties
    signs = np.sign(vecs[idx, np.arange(vecs.shape[1])])
    signs[signs == 0] = 1.0
    return vecs * signs


def _start_vector(n):
    # deterministic, not orthogonal to any smooth mode in practice
    i = np.arange(n, dtype=np.float64)
    return 1.0 + 0.5 * np.cos(i * 0.6180339887498949 * 2.0 * math.pi) + 0.25 * np.sin(i * 1.3)


def eigendecompose(op: SparseSymmetricOperator, k: int = DEFAULT_K, method: str = "auto") -> SpectralDecomposition:
    """Compute the ``k`` algebraically smallest eigenpairs of ``op``.

    ``method`` is ``"dense"``, ``"sparse"`` (shift-invert Lanczos followed by a
    Rayleigh-Ritz clean-up) or ``"auto"``, which goes dense up to
    ``DENSE_LIMIT`` vertices. Each eigenvector is signed so that its entry of
    largest magnitude is positive.
    """
    n = op.n
    if k < 1:
        raise KTooLarge(f"k must be >= 1, got {k}")
    if k > n:
        raise KTooLarge(f"k={k} exceeds the operator dimension {n}")
    if method == "auto":
        method = "dense" if (n <= DENSE_LIMIT or k >= n - 1) else "sparse"

    if method == "dense":
        vals, vecs = scipy.linalg.eigh(op.toarray(), subset_by_index=[0, k - 1], driver="evr")
    elif method == "sparse":
        if k >= n - 1:
            raise KTooLarge(f"sparse solver needs k < n - 1 (k={k}, n={n}); use method='dense'")
        sigma = -1e-6 * op.norm()
        try:
            _, basis = spla.eigsh(op.matrix.tocsc(), k=k, sigma=sigma, which="LM",
                                  v0=_start_vector(n), tol=0.0, maxiter=max(1000, 20 * n))
        except spla.ArpackNoConvergence as exc:
            raise ConvergenceFailure(
                f"Lanczos did not converge: {len(exc.eigenvalues)} of {k} eigenpairs",
                iterations=max(1000, 20 * n)) from exc
        # Rayleigh-Ritz on the returned subspace restores exact orthonormality
        q, _ = np.linalg.qr(basis)
        small = q.T @ (op.matrix @ q)
        vals, rot = np.linalg.eigh(0.5 * (small + small.T))
        vecs = q @ rot
    else:
        raise ValueError(f"unknown eigensolver method {method!r}")

    order = np.argsort(vals, kind="stable")
    vals = np.ascontiguousarray(vals[order])
    vecs = _fix_signs(np.ascontiguousarray(vecs[:, order]))

    resid = np.linalg.norm(op.matrix @ vecs - vecs * vals, axis=0)
    worst = int(np.argmax(resid / np.maximum(1.0, np.abs(vals))))
    if resid[worst] > 1e-6 * max(1.0, abs(vals[worst])):
        raise ConvergenceFailure(f"eigenpair {worst} residual {resid[worst]:.3g} above tolerance")
    if vals[0] < -1e-8 * max(abs(vals[-1]), 1e-300):
        raise EigenError(f"operator is not positive semidefinite: smallest eigenvalue {vals[0]!r}")
    vals.setflags(write=False)
    vecs.setflags(write=False)
    return SpectralDecomposition(vals, vecs, op.s, op.s_factor, op.potential_kind, op.alpha, op.beta)


def auto_time(dec: SpectralDecomposition) -> float:
    """``ln 2 / (2 λ_2)``: the time at which the second mode's weight in the
    squared distance has decayed to one half."""
    if dec.k < 2:
        raise EigenError("automatic diffusion time needs at least two eigenpairs")
    lam2 = float(dec.eigenvalues[1])
    if lam2 <= 1e-12 * float(dec.eigenvalues[-1]) or lam2 <= 0.0:
        raise EigenError(f"second eigenvalue {lam2!r} is numerically zero; mesh is disconnected?")
    return math.log(2.0) / (2.0 * lam2)


def resolve_time(dec: SpectralDecomposition, t="auto") -> float:
    """Turn ``"auto"`` or a positive number into a concrete diffusion time."""
    if t is None or t == "auto":
        return auto_time(dec)
    t = float(t)
    if not t > 0:
        raise ValueError(f"diffusion time must be positive, got {t}")
    return t


def _embedding(dec, t):
    return dec.eigenvectors * np.exp(-dec.eigenvalues * t)


def kernel_slice(dec: SpectralDecomposition, t, x: int) -> np.ndarray:
    """``h_t(x, .)`` truncated to the available eigenpairs."""
    t = resolve_time(dec, t)
    return dec.eigenvectors @ (np.exp(-dec.eigenvalues * t) * dec.eigenvectors[x])


def kernel_matrix(dec: SpectralDecomposition, t) -> np.ndarray:
    t = resolve_time(dec, t)
    return (dec.eigenvectors * np.exp(-dec.eigenvalues * t)) @ dec.eigenvectors.T


def _rows_to(psi, x):
    diff = psi - psi[x]
    return np.sqrt(np.sum(diff * diff, axis=1))


def diffusion_distance(dec: SpectralDecomposition, t, x: int, y: int) -> float:
    """``sqrt(sum_j exp(-2 λ_j t) (φ_j(x) - φ_j(y))^2)``."""
    t = resolve_time(dec, t)
    psi = _embedding(dec, t)
    return float(_rows_to(psi[[y, x]], 1)[0])


def distance_map(dec: SpectralDecomposition, t, x: int) -> np.ndarray:
    """Diffusion distance from ``x`` to every vertex, in O(n k)."""
    t = resolve_time(dec, t)
    return _rows_to(_embedding(dec, t), x)


def distance_maps(dec: SpectralDecomposition, t, sources) -> np.ndarray:
    """Stacked distance maps, shape (len(sources), n)."""
    t = resolve_time(dec, t)
    psi = _embedding(dec, t)
    return np.stack([_rows_to(psi, int(x)) for x in sources])


def evolve(op: SparseSymmetricOperator, u0, t: float, steps: int) -> np.ndarray:
    """Integrate ``u' = -H u`` from ``u0`` to time ``t`` with implicit Euler.

    Each step solves ``(I + (t/steps) H) u_{m+1} = u_m`` with one sparse LU
    factorization reused across steps.
    """
    u = np.array(u0, dtype=np.float64)
    if u.shape != (op.n,):
        raise ValueError(f"initial state has shape {u.shape}, operator has dimension {op.n}")
    if not t > 0:
        raise ValueError(f"time must be positive, got {t}")
    if steps < 1:
        raise ValueError(f"steps must be >= 1, got {steps}")
    dt = t / steps
    system = (sp.identity(op.n, format="csc") + dt * op.matrix).tocsc()
    try:
        lu = spla.splu(system)
    except RuntimeError as exc:
        raise SolveFailure(f"factorization of the implicit Euler system failed: {exc}") from exc
    for _ in range(steps):
        u = lu.solve(u)
    if not np.all(np.isfinite(u)):
        raise SolveFailure("implicit Euler produced non-finite values")
    return u


@dataclass(frozen=True)
class StabilityRow:
    eps: float
    error: float


def stability_experiment(laplacian: SparseSymmetricOperator, potential, perturbation, eps_list,
                         u0, t: float, steps: int = 2048) -> list[StabilityRow]:
    """Measure ``||u_eps(t) - u_0(t)||`` for potentials ``V + eps N``.

    ``u_0`` evolves under ``V`` alone; every run uses the same stepper
    settings. Rows come back sorted by eps, largest first.
    """
    V = np.asarray(potential, dtype=np.float64)
    N = np.asarray(perturbation, dtype=np.float64)
    eps_values = sorted((float(e) for e in eps_list), reverse=True)
    if any(e < 0 for e in eps_values):
        raise HypothesisViolated("eps values must be nonnegative")
    if V.min(initial=0.0) < -1e-12:
        raise HypothesisViolated(f"base potential is negative (min {V.min()!r})")
    for e in eps_values:
        lo = float((V + e * N).min())
        if lo < -1e-12:
            raise HypothesisViolated(f"V + {e!r} N has negative entry {lo!r}")

    reference = evolve(assemble_schrodinger(laplacian, V), u0, t, steps)
    rows = []
    for e in eps_values:
        u = evolve(assemble_schrodinger(laplacian, V + e * N), u0, t, steps)
        err = float(np.linalg.norm(u - reference))
        logger.debug("stability eps=%g error=%g", e, err)
        rows.append(StabilityRow(e, err))
    return rows


def loglog_slopes(rows) -> list[float | None]:
    """Local slope ``d log(error) / d log(eps)`` between consecutive rows; None
    for the first row or where either value is not positive."""
    out = [None]
    for prev, cur in zip(rows, rows[1:]):
        if min(prev.eps, cur.eps, prev.error, cur.error) > 0 and prev.eps != cur.eps:
            out.append(math.log(cur.error / prev.error) / math.log(cur.eps / prev.eps))
        else:
            out.append(None)
    return out
