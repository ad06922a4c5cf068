"""Procedural meshes and vertex textures for experiments and tests.

Nothing here uses random numbers: every generator is a pure function of its
arguments, so corpora are reproducible byte for byte.
"""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np

from .mesh_io import TriangleMesh, save_mesh


def icosphere(subdivisions: int = 3) -> tuple[np.ndarray, np.ndarray]:
    """Unit icosphere; 10 * 4**subdivisions + 2 vertices."""
    phi = (1.0 + 5.0 ** 0.5) / 2.0
    verts = [(-1, phi, 0), (1, phi, 0), (-1, -phi, 0), (1, -phi, 0),
             (0, -1, phi), (0, 1, phi), (0, -1, -phi), (0, 1, -phi),
             (phi, 0, -1), (phi, 0, 1), (-phi, 0, -1), (-phi, 0, 1)]
    faces = [(0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
             (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
             (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
             (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1)]
    v = [np.array(p, dtype=float) / np.linalg.norm(p) for p in verts]
    for _ in range(subdivisions):
        cache = {}

        def midpoint(a, b):
            key = (min(a, b), max(a, b))
            if key not in cache:
                p = v[a] + v[b]
                v.append(p / np.linalg.norm(p))
                cache[key] = len(v) - 1
            return cache[key]

        new = []
        for a, b, c in faces:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            new += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = new
    return np.array(v), np.array(faces, dtype=np.int64)


def strip_grid(nx: int = 41, ny: int = 5, length: float = 10.0, width: float = 1.0):
    """Flat triangulated rectangle [0, length] x [0, width] in the xy-plane."""
    xs = np.linspace(0.0, length, nx)
    ys = np.linspace(0.0, width, ny)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    v = np.column_stack([X.ravel(), Y.ravel(), np.zeros(X.size)])
    faces = []
    for i in range(nx - 1):
        for j in range(ny - 1):
            a, b = i * ny + j, (i + 1) * ny + j
            c, d = (i + 1) * ny + j + 1, i * ny + j + 1
            faces += [(a, b, c), (a, c, d)] if (i + j) % 2 == 0 else [(a, b, d), (b, c, d)]
    return v, np.array(faces, dtype=np.int64)


# -- geometry families -------------------------------------------------------
# each maps points of the unit icosphere to a member of the family. The four
# families are deliberately close to one another, so geometry alone confuses
# them the way similar animal classes do.

def sphere_family(p):
    return p.copy()


def ellipsoid_family(p):
    return p * np.array([1.0, 1.0, 1.15])


def ovoid_family(p):
    return p * np.array([1.0, 0.9, 1.25])


def capsule_family(p):
    out = p * np.array([0.8, 0.8, 1.0])
    out[:, 2] += 0.2 * np.tanh(3.0 * p[:, 2])
    return out


FAMILIES = {
    "sphere": sphere_family,
    "ellipsoid": ellipsoid_family,
    "ovoid": ovoid_family,
    "capsule": capsule_family,
}


def _pose(p, variant):
    """Small smooth radial deformation for integer ``variant``; 0 is the rest pose."""
    if variant == 0:
        return p
    amp = 0.06 * math.sin(1.7 * variant)
    return p * (1.0 + amp * np.sin(2.0 * p[:, 0] + variant))[:, None]


def family_mesh(name: str, variant: int = 0, subdivisions: int = 3):
    """Vertices, triangles and the undeformed sphere points of a family member.

    Textures are evaluated on the sphere points so they travel with the shape.
    """
    base, faces = icosphere(subdivisions)
    return _pose(FAMILIES[name](base), variant), faces, base


# -- textures ----------------------------------------------------------------

def _sharp(x, k=6.0):
    return 0.5 + 0.5 * np.tanh(k * x)


def bands(freq):
    """Horizontal bands."""
    return lambda b: _sharp(np.sin(freq * math.pi * b[:, 2]))


def stripes(freq):
    """Stripes around the vertical axis, zebra-like."""
    return lambda b: _sharp(np.sin(freq * np.arctan2(b[:, 1], b[:, 0])))


def spots(freq):
    """Blobs from a product of sines."""
    return lambda b: _sharp(6.0 * np.sin(freq * b[:, 0]) * np.sin(freq * b[:, 1]) * np.sin(freq * b[:, 2]))


TEXTURES = {
    "bands2": bands(2), "bands3": bands(3), "bands4": bands(4), "bands5": bands(5),
    "stripes3": stripes(3), "stripes6": stripes(6), "stripes9": stripes(9),
    "spots2": spots(2), "spots2.5": spots(2.5), "spots3": spots(3), "spots4": spots(4),
}

#: (family, texture) classes of the default corpus; two textures per family
DEFAULT_CLASSES = (
    ("sphere", "bands3"), ("sphere", "stripes6"),
    ("ellipsoid", "bands2"), ("ellipsoid", "spots2.5"),
    ("ovoid", "stripes3"), ("ovoid", "spots4"),
    ("capsule", "bands4"), ("capsule", "stripes9"),
)


def gray(values) -> np.ndarray:
    """Grayscale RGB colors with the given luminance."""
    v = np.clip(np.asarray(values, dtype=float), 0.0, 1.0)
    return np.column_stack([v, v, v])


def textured_shape(family: str, texture: str, variant: int = 0, subdivisions: int = 3) -> TriangleMesh:
    v, f, base = family_mesh(family, variant, subdivisions)
    return TriangleMesh(v, f, gray(TEXTURES[texture](base)))


def corpus_entries(classes=DEFAULT_CLASSES, per_class: int = 3):
    """``(family, texture, pose, label)`` for every shape of a corpus.

    Pose 0 is shared by all classes of a family, so each family contributes
    shapes with identical geometry that differ only in texture; the other
    poses are unique to their class.
    """
    out, used = [], {}
    for fam, tex in classes:
        nxt = used.get(fam, 1)
        poses = [0] + list(range(nxt, nxt + per_class - 1))
        used[fam] = nxt + per_class - 1
        out += [(fam, tex, pose, f"{fam}-{tex}") for pose in poses]
    return out


def write_corpus(out_dir, classes=DEFAULT_CLASSES, per_class: int = 3, subdivisions: int = 3,
                 ext: str = ".off") -> Path:
    """Write a labeled corpus and its manifest; returns the manifest path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    lines = []
    for fam, tex, pose, label in corpus_entries(classes, per_class):
        path = out_dir / f"{fam}_{tex}_{pose}{ext}"
        save_mesh(textured_shape(fam, tex, pose, subdivisions), path)
        lines.append(f"{path.name}\t{label}")
    manifest = out_dir / "manifest.tsv"
    manifest.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return manifest
