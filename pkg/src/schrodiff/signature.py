"""Farthest point sampling, diffusion-distance histograms and the exact 1-D
earth mover's distance between them."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import BinMismatch

DEFAULT_BINS = 120
DEFAULT_SAMPLES = 100


class DegenerateRangeWarning(UserWarning):
    """All pooled distances were zero; the histogram is a delta at bin 0."""


@dataclass(frozen=True, eq=False)
class DiffusionSignature:
    histogram: np.ndarray
    t: float
    k: int
    potential_kind: str
    alpha: float
    beta: float
    sample_count: int
    s_factor: float
    mesh_hash: str
    d_max: float = float("nan")
    range_mode: str = "auto"
    degenerate: bool = False

    def __post_init__(self):
        h = np.array(self.histogram, dtype=np.float64)
        if h.ndim != 1 or len(h) < 2:
            raise ValueError("a signature needs at least 2 bins")
        if np.any(h < 0) or not np.all(np.isfinite(h)):
            raise ValueError("histogram bins must be finite and nonnegative")
        if abs(h.sum() - 1.0) > 1e-12:
            raise ValueError(f"histogram must sum to 1, sums to {h.sum()!r}")
        h.setflags(write=False)
        object.__setattr__(self, "histogram", h)

    @property
    def bins(self) -> int:
        return len(self.histogram)

    def __eq__(self, other):
        if not isinstance(other, DiffusionSignature):
            return NotImplemented
        same_floats = all(
            _same_float(getattr(self, f), getattr(other, f))
            for f in ("t", "alpha", "beta", "s_factor", "d_max"))
        return (same_floats
                and np.array_equal(self.histogram, other.histogram)
                and (self.k, self.potential_kind, self.sample_count, self.mesh_hash,
                     self.range_mode, self.degenerate)
                == (other.k, other.potential_kind, other.sample_count, other.mesh_hash,
                    other.range_mode, other.degenerate))

    __hash__ = None


def _same_float(a, b):
    return a == b or (a != a and b != b)


@dataclass(frozen=True)
class SamplePlan:
    """Vertex ids in pick order. ``radii[i]`` is the min distance of pick i to
    the earlier picks (distance to the centroid for the seed)."""

    ids: tuple[int, ...]
    radii: tuple[float, ...] = field(default=(), compare=False)
    seed_rule: str = "farthest-from-centroid"

    def __len__(self):
        return len(self.ids)


def farthest_point_sample(mesh, m: int) -> SamplePlan:
    """Greedy farthest point sampling under Euclidean vertex distance.

    The seed is the vertex farthest from the vertex centroid; every later pick
    maximizes the distance to the nearest earlier pick. Ties go to the lowest
    vertex index.
    """
    if m < 1:
        raise ValueError(f"sample count must be >= 1, got {m}")
    pts = np.asarray(mesh.vertices if hasattr(mesh, "vertices") else mesh, dtype=np.float64)
    n = len(pts)
    m = min(m, n)
    to_centroid = np.linalg.norm(pts - pts.mean(axis=0), axis=1)
    seed = int(np.argmax(to_centroid))
    ids, radii = [seed], [float(to_centroid[seed])]
    nearest = np.linalg.norm(pts - pts[seed], axis=1)
    nearest[seed] = -np.inf
    for _ in range(m - 1):
        nxt = int(np.argmax(nearest))
        ids.append(nxt)
        radii.append(float(nearest[nxt]))
        nearest = np.minimum(nearest, np.linalg.norm(pts - pts[nxt], axis=1))
        nearest[ids] = -np.inf
    return SamplePlan(tuple(ids), tuple(radii))


def bin_counts(values, bins: int, upper: float) -> np.ndarray:
    """Integer counts over ``bins`` equal bins on ``[0, upper]``.

    Bins are closed on the right, bin 0 also holds 0 itself, so ``upper``
    lands in the last bin. Values above ``upper`` are clipped into the last bin.
    """
    d = np.asarray(values, dtype=np.float64).ravel()
    idx = np.ceil(d / upper * bins).astype(np.int64) - 1
    np.clip(idx, 0, bins - 1, out=idx)
    return np.bincount(idx, minlength=bins)


def histogram_from_distances(values, bins: int = DEFAULT_BINS, value_range=None):
    """Normalized histogram of pooled distances.

    Returns ``(histogram, d_max, degenerate)``. With ``value_range`` None the
    bins span ``[0, max(values)]``.
    """
    if bins < 2:
        raise ValueError(f"need at least 2 bins, got {bins}")
    d = np.asarray(values, dtype=np.float64).ravel()
    if d.size == 0:
        raise ValueError("no distances to bin")
    d_max = float(d.max())
    upper = d_max if value_range is None else float(value_range)
    if value_range is not None and not upper > 0:
        raise ValueError(f"histogram range must be positive, got {value_range}")
    if not upper > 0:
        warnings.warn("all diffusion distances are zero; returning a delta histogram",
                      DegenerateRangeWarning, stacklevel=2)
        h = np.zeros(bins)
        h[0] = 1.0
        return h, d_max, True
    counts = bin_counts(d, bins, upper)
    return counts / counts.sum(), d_max, False


def build_histogram(dec, t, plan: SamplePlan, bins: int = DEFAULT_BINS, value_range=None,
                    mesh_hash: str = "") -> DiffusionSignature:
    """Pool the distance maps of all sampled vertices, self-distances included,
    into one normalized histogram."""
    from .spectral import distance_maps, resolve_time

    if len(plan) == 0:
        raise ValueError("sample plan is empty")
    t = resolve_time(dec, t)
    pooled = distance_maps(dec, t, plan.ids)
    hist, d_max, degenerate = histogram_from_distances(pooled, bins, value_range)
    return DiffusionSignature(
        histogram=hist, t=t, k=dec.k, potential_kind=dec.potential_kind,
        alpha=float(dec.alpha), beta=float(dec.beta), sample_count=len(plan),
        s_factor=float(dec.s_factor), mesh_hash=mesh_hash, d_max=d_max,
        range_mode="auto" if value_range is None else repr(float(value_range)),
        degenerate=degenerate,
    )


def _hist(x):
    return x.histogram if isinstance(x, DiffusionSignature) else np.asarray(x, dtype=np.float64)


def emd_1d(a, b, normalized: bool = False) -> float:
    """Exact earth mover's distance between two histograms on the same bins,
    ground distance ``|i - j|`` in bin units.

    With ``normalized`` the result is divided by ``bins - 1`` so the bin axis
    spans [0, 1].
    """
    ha, hb = _hist(a), _hist(b)
    if ha.shape != hb.shape:
        raise BinMismatch(f"bin counts differ: {ha.shape[-1]} vs {hb.shape[-1]}")
    gap = np.cumsum(ha[:-1]) - np.cumsum(hb[:-1])
    cost = float(np.sum(np.abs(gap)))
    return cost / (len(ha) - 1) if normalized else cost
