"""Triangle meshes with optional per-vertex color, their file formats, and the
signature JSON format.

Supported mesh formats are ASCII OFF/COFF, ASCII PLY 1.0 and OBJ. Faces with
anything other than three vertices are rejected; meshes are never repaired.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import re
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    DegenerateTriangle,
    MissingColor,
    NonTriangleFace,
    ParseError,
    SchemaError,
    SignatureIOError,
)
from .signature import DiffusionSignature

#: squared-area floor below which a triangle counts as degenerate
AREA_EPS = 1e-12

LUMA_WEIGHTS = np.array([0.2126, 0.7152, 0.0722])

_INT_TOKEN = re.compile(r"^[+-]?\d+$")


@dataclass(frozen=True, eq=False)
class TriangleMesh:
    """Vertex positions, triangle connectivity and optional RGB colors in [0, 1].

    Arrays are copied and frozen on construction, so a mesh can be shared
    freely between threads.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    colors: np.ndarray | None = None

    def __post_init__(self):
        v = np.array(self.vertices, dtype=np.float64)
        t = np.array(self.triangles, dtype=np.int64)
        if v.ndim != 2 or v.shape[1] != 3:
            raise ParseError(f"vertices must have shape (n, 3), got {v.shape}")
        if t.ndim != 2 or t.shape[1] != 3:
            raise NonTriangleFace(f"triangles must have shape (m, 3), got {t.shape}")
        if len(v) < 3:
            raise ParseError(f"need at least 3 vertices, got {len(v)}")
        if len(t) < 1:
            raise ParseError("need at least 1 triangle")
        if not np.all(np.isfinite(v)):
            raise ParseError("non-finite vertex coordinate")
        if t.min() < 0 or t.max() >= len(v):
            bad = np.nonzero((t < 0).any(axis=1) | (t >= len(v)).any(axis=1))[0]
            raise ParseError(f"triangle index out of range in face {int(bad[0])}")
        repeated = (t[:, 0] == t[:, 1]) | (t[:, 1] == t[:, 2]) | (t[:, 0] == t[:, 2])
        if repeated.any():
            faces = np.nonzero(repeated)[0].tolist()
            raise DegenerateTriangle(f"faces with repeated vertices: {faces[:10]}", faces=faces)
        cross = np.cross(v[t[:, 1]] - v[t[:, 0]], v[t[:, 2]] - v[t[:, 0]])
        area = 0.5 * np.linalg.norm(cross, axis=1)
        small = area <= AREA_EPS
        if small.any():
            faces = np.nonzero(small)[0].tolist()
            raise DegenerateTriangle(f"degenerate faces (area <= {AREA_EPS}): {faces[:10]}", faces=faces)

        c = self.colors
        if c is not None:
            c = np.array(c, dtype=np.float64)
            if c.shape != v.shape:
                raise ParseError(f"colors must have shape {v.shape}, got {c.shape}")
            if not np.all(np.isfinite(c)) or c.min() < 0.0 or c.max() > 1.0:
                raise ParseError("color channels must lie in [0, 1]")
            c.setflags(write=False)
        v.setflags(write=False)
        t.setflags(write=False)
        area.setflags(write=False)
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "triangles", t)
        object.__setattr__(self, "colors", c)
        object.__setattr__(self, "_areas", area)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @property
    def has_color(self) -> bool:
        return self.colors is not None

    def triangle_areas(self) -> np.ndarray:
        return self._areas

    def edges(self) -> np.ndarray:
        """Unique undirected edges as sorted index pairs, shape (e, 2)."""
        t = self.triangles
        e = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
        e.sort(axis=1)
        return np.unique(e, axis=0)

    def edge_lengths(self) -> np.ndarray:
        e = self.edges()
        return np.linalg.norm(self.vertices[e[:, 0]] - self.vertices[e[:, 1]], axis=1)

    def content_hash(self) -> str:
        h = hashlib.sha256()
        h.update(b"v")
        h.update(self.vertices.astype("<f8").tobytes())
        h.update(b"t")
        h.update(self.triangles.astype("<i8").tobytes())
        if self.colors is not None:
            h.update(b"c")
            h.update(self.colors.astype("<f8").tobytes())
        return h.hexdigest()

    def transformed(self, rotation, translation=(0.0, 0.0, 0.0)) -> "TriangleMesh":
        v = self.vertices @ np.asarray(rotation, dtype=float).T + np.asarray(translation, dtype=float)
        return TriangleMesh(v, self.triangles, self.colors)

    def with_colors(self, colors) -> "TriangleMesh":
        return TriangleMesh(self.vertices, self.triangles, colors)


def as_field(values, mesh: TriangleMesh, name="field") -> np.ndarray:
    """Validate a per-vertex scalar field against ``mesh`` and return it as float64."""
    f = np.asarray(values, dtype=np.float64)
    if f.shape != (mesh.n_vertices,):
        raise ValueError(f"{name} has shape {f.shape}, mesh has {mesh.n_vertices} vertices")
    if not np.all(np.isfinite(f)):
        raise ValueError(f"{name} contains non-finite values")
    return f


def luminance(mesh: TriangleMesh) -> np.ndarray:
    """Rec. 709 luminance of the vertex colors, one value in [0, 1] per vertex."""
    if mesh.colors is None:
        raise MissingColor("mesh has no per-vertex color; a texture potential needs one")
    return np.clip(mesh.colors @ LUMA_WEIGHTS, 0.0, 1.0)


# ---------------------------------------------------------------------------
# mesh parsing

def _tokens(path):
    """Yield (line number, tokens) for non-blank lines with comments stripped."""
    with open(path, "r", encoding="utf-8", errors="replace") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if line:
                yield lineno, line.split()


def _floats(tokens, lineno, path):
    try:
        return [float(x) for x in tokens]
    except ValueError:
        raise ParseError(f"expected numbers, got {' '.join(tokens)!r}", line=lineno, path=path) from None


def _ints(tokens, lineno, path):
    try:
        return [int(x) for x in tokens]
    except ValueError:
        raise ParseError(f"expected integers, got {' '.join(tokens)!r}", line=lineno, path=path) from None


def _color_rows(rows, integer):
    c = np.array(rows, dtype=np.float64)
    return c / 255.0 if integer else c


def _read_off(path):
    lines = _tokens(path)
    try:
        lineno, toks = next(lines)
    except StopIteration:
        raise ParseError("empty file", path=path) from None
    head = toks[0].upper()
    if head not in ("OFF", "COFF"):
        raise ParseError(f"expected OFF or COFF header, got {toks[0]!r}", line=lineno, path=path)
    has_color = head == "COFF"
    counts = toks[1:]
    if not counts:
        try:
            lineno, counts = next(lines)
        except StopIteration:
            raise ParseError("missing counts line", path=path) from None
    if len(counts) < 2:
        raise ParseError("counts line needs vertex and face counts", line=lineno, path=path)
    nv, nf = _ints(counts[:2], lineno, path)

    verts, cols, integer = [], [], True
    for _ in range(nv):
        try:
            lineno, toks = next(lines)
        except StopIteration:
            raise ParseError(f"expected {nv} vertices, got {len(verts)}", path=path) from None
        if has_color:
            if len(toks) not in (6, 7):
                raise ParseError("COFF vertex line needs x y z r g b [a]", line=lineno, path=path)
            integer = integer and all(_INT_TOKEN.match(x) for x in toks[3:6])
            cols.append(_floats(toks[3:6], lineno, path))
        elif len(toks) < 3:
            raise ParseError("vertex line needs x y z", line=lineno, path=path)
        verts.append(_floats(toks[:3], lineno, path))

    faces = []
    for _ in range(nf):
        try:
            lineno, toks = next(lines)
        except StopIteration:
            raise ParseError(f"expected {nf} faces, got {len(faces)}", path=path) from None
        (count,) = _ints(toks[:1], lineno, path)
        if count != 3:
            raise NonTriangleFace(f"face with {count} vertices", line=lineno, path=path)
        if len(toks) < 4:
            raise ParseError("face line truncated", line=lineno, path=path)
        faces.append(_ints(toks[1:4], lineno, path))
    colors = _color_rows(cols, integer) if has_color else None
    return verts, faces, colors


_PLY_INT_TYPES = {"char", "uchar", "short", "ushort", "int", "uint",
                  "int8", "uint8", "int16", "uint16", "int32", "uint32"}
_PLY_FLOAT_TYPES = {"float", "double", "float32", "float64"}


def _read_ply(path):
    lines = _tokens(path)
    lineno, toks = next(lines, (1, [""]))
    if toks[0] != "ply":
        raise ParseError("missing 'ply' magic", line=lineno, path=path)
    elements = []  # (name, count, [(prop name, type, is_list)])
    fmt = None
    for lineno, toks in lines:
        key = toks[0]
        if key == "format":
            fmt = toks[1:]
        elif key == "element":
            if len(toks) != 3:
                raise ParseError("malformed element line", line=lineno, path=path)
            elements.append((toks[1], _ints(toks[2:3], lineno, path)[0], []))
        elif key == "property":
            if not elements:
                raise ParseError("property before element", line=lineno, path=path)
            if toks[1] == "list":
                elements[-1][2].append((toks[-1], toks[3], True))
            else:
                elements[-1][2].append((toks[2], toks[1], False))
        elif key == "end_header":
            break
        elif key in ("comment", "obj_info"):
            continue
        else:
            raise ParseError(f"unexpected header line {key!r}", line=lineno, path=path)
    else:
        raise ParseError("missing end_header", path=path)
    if not fmt or fmt[0] != "ascii":
        raise ParseError(f"only ASCII PLY is supported, got format {' '.join(fmt or [])!r}", path=path)

    verts, faces, colors = [], [], None
    for name, count, props in elements:
        if name == "vertex":
            names = [p[0] for p in props]
            for axis in "xyz":
                if axis not in names:
                    raise ParseError(f"vertex element lacks property {axis!r}", path=path)
            rgb = [names.index(c) for c in ("red", "green", "blue") if c in names]
            if rgb and len(rgb) != 3:
                raise ParseError("partial red/green/blue vertex properties", path=path)
            integer = bool(rgb) and all(props[i][1] in _PLY_INT_TYPES for i in rgb)
            xyz = [names.index(a) for a in "xyz"]
            cols = []
            for _ in range(count):
                try:
                    lineno, toks = next(lines)
                except StopIteration:
                    raise ParseError(f"expected {count} vertices", path=path) from None
                if len(toks) < len(props):
                    raise ParseError("vertex row has too few values", line=lineno, path=path)
                vals = _floats(toks[:len(props)], lineno, path)
                verts.append([vals[i] for i in xyz])
                if rgb:
                    cols.append([vals[i] for i in rgb])
            if rgb:
                colors = _color_rows(cols, integer)
        elif name == "face":
            if not props or not props[0][2]:
                raise ParseError("face element needs a vertex index list", path=path)
            for _ in range(count):
                try:
                    lineno, toks = next(lines)
                except StopIteration:
                    raise ParseError(f"expected {count} faces", path=path) from None
                (k,) = _ints(toks[:1], lineno, path)
                if k != 3:
                    raise NonTriangleFace(f"face with {k} vertices", line=lineno, path=path)
                faces.append(_ints(toks[1:4], lineno, path))
        else:
            for _ in range(count):
                if next(lines, None) is None:
                    raise ParseError(f"truncated element {name!r}", path=path)
    return verts, faces, colors


def _read_obj(path):
    verts, cols, faces = [], [], []
    integer = True
    for lineno, toks in _tokens(path):
        key = toks[0]
        if key == "v":
            if len(toks) not in (4, 7, 8):
                raise ParseError("'v' line needs x y z [r g b]", line=lineno, path=path)
            verts.append(_floats(toks[1:4], lineno, path))
            if len(toks) >= 7:
                integer = integer and all(_INT_TOKEN.match(x) for x in toks[4:7])
                cols.append(_floats(toks[4:7], lineno, path))
        elif key == "f":
            idx = toks[1:]
            if len(idx) != 3:
                raise NonTriangleFace(f"face with {len(idx)} vertices", line=lineno, path=path)
            face = []
            for tok in idx:
                (i,) = _ints([tok.split("/", 1)[0]], lineno, path)
                face.append(i - 1 if i > 0 else len(verts) + i)
            faces.append(face)
    if cols and len(cols) != len(verts):
        raise ParseError("some but not all 'v' lines carry colors", path=path)
    colors = _color_rows(cols, integer) if cols else None
    return verts, faces, colors


_READERS = {".off": _read_off, ".coff": _read_off, ".ply": _read_ply, ".obj": _read_obj}


def load_mesh(path) -> TriangleMesh:
    """Read an OFF/COFF, ASCII PLY or OBJ mesh.

    Integer color channels are read as 0-255 and scaled to [0, 1]; float
    channels are taken as already normalized.
    """
    path = Path(path)
    reader = _READERS.get(path.suffix.lower())
    if reader is None:
        raise ParseError(f"unsupported mesh extension {path.suffix!r}", path=path)
    if not path.is_file():
        raise FileNotFoundError(f"no such mesh file: {path}")
    verts, faces, colors = reader(path)
    if not faces:
        raise ParseError("mesh has no faces", path=path)
    try:
        return TriangleMesh(np.array(verts, dtype=float).reshape(-1, 3),
                            np.array(faces, dtype=np.int64).reshape(-1, 3), colors)
    except ParseError as exc:
        exc.path = path
        exc.args = (f"{path}: {exc.args[0]}",)
        raise


def _fmt(x):
    return repr(float(x))


def save_mesh(mesh: TriangleMesh, path) -> None:
    """Write ``mesh`` as OFF (COFF when colored), PLY or OBJ, chosen by extension.

    Coordinates and colors are written with round-trip precision; colors are
    written as floats.
    """
    path = Path(path)
    ext = path.suffix.lower()
    v, t, c = mesh.vertices, mesh.triangles, mesh.colors
    out = []
    if ext in (".off", ".coff"):
        out.append("COFF" if c is not None else "OFF")
        out.append(f"{len(v)} {len(t)} 0")
        for i, p in enumerate(v):
            row = [_fmt(x) for x in p]
            if c is not None:
                row += [_fmt(x) for x in c[i]] + ["1.0"]
            out.append(" ".join(row))
        out.extend(f"3 {a} {b} {d}" for a, b, d in t)
    elif ext == ".ply":
        out += ["ply", "format ascii 1.0", f"element vertex {len(v)}",
                "property double x", "property double y", "property double z"]
        if c is not None:
            out += ["property float red", "property float green", "property float blue"]
        out += [f"element face {len(t)}", "property list uchar int vertex_indices", "end_header"]
        for i, p in enumerate(v):
            row = [_fmt(x) for x in p]
            if c is not None:
                row += [_fmt(x) for x in c[i]]
            out.append(" ".join(row))
        out.extend(f"3 {a} {b} {d}" for a, b, d in t)
    elif ext == ".obj":
        for i, p in enumerate(v):
            row = ["v"] + [_fmt(x) for x in p]
            if c is not None:
                row += [_fmt(x) for x in c[i]]
            out.append(" ".join(row))
        out.extend(f"f {a + 1} {b + 1} {d + 1}" for a, b, d in t)
    else:
        raise ParseError(f"unsupported mesh extension {path.suffix!r}", path=path)
    atomic_write_text(path, "\n".join(out) + "\n")


# ---------------------------------------------------------------------------
# signature files

SIGNATURE_FIELDS = ("bins", "histogram", "t", "k", "potential_kind", "alpha", "beta",
                    "sample_count", "s_factor", "mesh_hash")


def atomic_write_text(path, text: str) -> None:
    """Write via a temp file in the target directory and rename over ``path``."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_bytes(path, data: bytes) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def signature_to_dict(sig: DiffusionSignature) -> dict:
    return {
        "bins": sig.bins,
        "histogram": [float(x) for x in sig.histogram],
        "t": sig.t,
        "k": sig.k,
        "potential_kind": sig.potential_kind,
        "alpha": sig.alpha,
        "beta": sig.beta,
        "sample_count": sig.sample_count,
        "s_factor": sig.s_factor,
        "mesh_hash": sig.mesh_hash,
        "d_max": sig.d_max,
        "range_mode": sig.range_mode,
        "degenerate": sig.degenerate,
    }


def signature_from_dict(doc: dict) -> DiffusionSignature:
    if not isinstance(doc, dict):
        raise SchemaError("signature document must be a JSON object")
    for name in SIGNATURE_FIELDS:
        if name not in doc:
            raise SchemaError(f"signature is missing field {name!r}", field=name)
    hist = doc["histogram"]
    if not isinstance(hist, list) or len(hist) != doc["bins"]:
        raise SchemaError("'histogram' must be a list of length 'bins'", field="histogram")
    try:
        return DiffusionSignature(
            histogram=np.array(hist, dtype=np.float64),
            t=float(doc["t"]),
            k=int(doc["k"]),
            potential_kind=str(doc["potential_kind"]),
            alpha=float(doc["alpha"]),
            beta=float(doc["beta"]),
            sample_count=int(doc["sample_count"]),
            s_factor=float(doc["s_factor"]),
            mesh_hash=str(doc["mesh_hash"]),
            d_max=float(doc.get("d_max", math.nan)),
            range_mode=str(doc.get("range_mode", "auto")),
            degenerate=bool(doc.get("degenerate", False)),
        )
    except (TypeError, ValueError) as exc:
        raise SchemaError(f"invalid signature field: {exc}") from exc


def dumps_signature(sig: DiffusionSignature) -> str:
    # json writes floats with repr(), i.e. shortest round-trip (<= 17 digits)
    return json.dumps(signature_to_dict(sig), indent=1) + "\n"


def save_signature(sig: DiffusionSignature, path) -> None:
    try:
        atomic_write_text(path, dumps_signature(sig))
    except OSError as exc:
        raise SignatureIOError(f"cannot write signature {path}: {exc}") from exc


def load_signature(path) -> DiffusionSignature:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise SignatureIOError(f"cannot read signature {path}: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: not valid JSON: {exc}") from exc
    return signature_from_dict(doc)
