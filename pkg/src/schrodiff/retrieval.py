"""Batch signatures over a labeled shape database, pairwise EMD matrix,
nearest-neighbour retrieval and the evaluation metrics."""

from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path

import numpy as np

from .errors import EmptyDatabase, ParseError, PipelineError, SchrodiffError
from .mesh_io import atomic_write_bytes, atomic_write_text, load_mesh, signature_from_dict, signature_to_dict
from .pipeline import PipelineConfig, compute_signature
from .signature import DiffusionSignature, emd_1d

logger = logging.getLogger(__name__)


def read_manifest(path) -> list[tuple[Path, str]]:
    """Parse ``path<TAB>label`` lines; relative paths resolve against the
    manifest's directory."""
    path = Path(path)
    items = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\r\n")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 2 or not parts[0].strip() or not parts[1].strip():
                raise ParseError("manifest line must be 'path<TAB>label'", line=lineno, path=path)
            p = Path(parts[0].strip())
            items.append((p if p.is_absolute() else path.parent / p, parts[1].strip()))
    return items


@dataclass(frozen=True)
class DatabaseEntry:
    path: str
    label: str
    signature: DiffusionSignature


@dataclass
class ShapeDatabase:
    entries: list[DatabaseEntry]
    config: PipelineConfig
    errors: list[PipelineError] = field(default_factory=list)

    @property
    def labels(self) -> list[str]:
        return [e.label for e in self.entries]

    def __len__(self):
        return len(self.entries)


def _run_entry(path, label, config):
    try:
        mesh = load_mesh(path)
    except FileNotFoundError as exc:
        return PipelineError(str(path), "io", exc)
    except SchrodiffError as exc:
        return PipelineError(str(path), exc.stage, exc)
    try:
        sig = compute_signature(mesh, config)
    except SchrodiffError as exc:
        return PipelineError(str(path), exc.stage, exc)
    except (ValueError, ArithmeticError) as exc:
        return PipelineError(str(path), "signature", exc)
    return DatabaseEntry(str(path), label, sig)


def build_database(items, config: PipelineConfig = PipelineConfig(), jobs: int = 1) -> ShapeDatabase:
    """Run the full pipeline on every ``(path, label)``.

    A failing entry is recorded in ``errors`` with the stage that failed and
    does not stop the batch. Entry order follows ``items`` whatever ``jobs`` is.
    """
    items = [(Path(p), str(lab)) for p, lab in items]
    if not items:
        raise EmptyDatabase("no shapes listed")
    for _, lab in items:
        if not lab:
            raise ParseError("empty class label")
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(lambda it: _run_entry(it[0], it[1], config), items))
    else:
        results = [_run_entry(p, lab, config) for p, lab in items]
    entries = [r for r in results if isinstance(r, DatabaseEntry)]
    errors = [r for r in results if isinstance(r, PipelineError)]
    for err in errors:
        logger.warning("%s", err)
    if not entries:
        raise EmptyDatabase(f"every entry failed ({len(errors)} errors)")
    return ShapeDatabase(entries, config, errors)


def pairwise_matrix(db: ShapeDatabase) -> np.ndarray:
    """EMD between every pair of signatures; upper triangle computed, then mirrored."""
    n = len(db)
    M = np.zeros((n, n))
    for i, j in combinations(range(n), 2):
        M[i, j] = M[j, i] = emd_1d(db.entries[i].signature, db.entries[j].signature)
    return M


def ranked_neighbours(matrix) -> list[list[int]]:
    """Other shapes by increasing distance; ties go to the lower index."""
    M = np.asarray(matrix)
    out = []
    for i in range(len(M)):
        order = np.argsort(M[i], kind="stable")
        out.append([int(j) for j in order if j != i])
    return out


def evaluate(matrix, labels) -> dict:
    """Nearest/second-nearest class hit rates and max-normalized mean
    intra-/inter-class distances.

    Second-nearest hits are counted independently of the nearest one. A mean
    with no pairs to average (e.g. inter-class with a single class) is None.
    """
    M = np.asarray(matrix, dtype=np.float64)
    labels = list(labels)
    n = len(labels)
    if M.shape != (n, n):
        raise ValueError(f"matrix shape {M.shape} does not match {n} labels")
    ranked = ranked_neighbours(M)
    nn = sum(labels[r[0]] == labels[i] for i, r in enumerate(ranked) if r)
    nn2 = sum(labels[r[1]] == labels[i] for i, r in enumerate(ranked) if len(r) > 1)
    top = float(M.max()) if n else 0.0
    intra, inter = [], []
    for i, j in combinations(range(n), 2):
        (intra if labels[i] == labels[j] else inter).append(M[i, j])

    def norm_mean(vals):
        if not vals:
            return None
        return float(np.mean(vals)) / top if top > 0 else 0.0

    return {
        "count": n,
        "nn_correct": int(nn),
        "nn_accuracy": nn / n if n > 1 else None,
        "second_nn_correct": int(nn2),
        "second_nn_accuracy": nn2 / n if n > 2 else None,
        "intra_class_mean": norm_mean(intra),
        "inter_class_mean": norm_mean(inter),
        "max_distance": top,
    }


@dataclass
class RetrievalReport:
    matrix: np.ndarray
    labels: list[str]
    paths: list[str]
    metrics: dict
    ranked: list[list[int]]
    errors: list[dict] = field(default_factory=list)
    config: dict = field(default_factory=dict)
    signatures: list[DiffusionSignature] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "labels": self.labels,
            "paths": self.paths,
            "matrix": [[float(x) for x in row] for row in self.matrix],
            "metrics": self.metrics,
            "ranked": self.ranked,
            "errors": self.errors,
            "config": self.config,
            "signatures": [signature_to_dict(s) for s in self.signatures],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "RetrievalReport":
        return cls(
            matrix=np.array(doc["matrix"], dtype=np.float64).reshape(len(doc["labels"]), -1),
            labels=list(doc["labels"]),
            paths=list(doc["paths"]),
            metrics=dict(doc["metrics"]),
            ranked=[list(r) for r in doc["ranked"]],
            errors=list(doc.get("errors", [])),
            config=dict(doc.get("config", {})),
            signatures=[signature_from_dict(s) for s in doc.get("signatures", [])],
        )

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=1) + "\n"


def retrieve(db: ShapeDatabase) -> RetrievalReport:
    M = pairwise_matrix(db)
    return RetrievalReport(
        matrix=M,
        labels=db.labels,
        paths=[e.path for e in db.entries],
        metrics=evaluate(M, db.labels),
        ranked=ranked_neighbours(M),
        errors=[{"path": e.path, "stage": e.stage, "message": str(e.cause)} for e in db.errors],
        config=db.config.as_dict(),
        signatures=[e.signature for e in db.entries],
    )


def matrix_image(matrix) -> bytes:
    """Binary PGM of the matrix: white is zero distance, black the maximum."""
    M = np.asarray(matrix, dtype=np.float64)
    top = M.max() if M.size else 0.0
    scaled = M / top if top > 0 else np.zeros_like(M)
    pixels = np.round(255.0 * (1.0 - scaled)).astype(np.uint8)
    h, w = pixels.shape
    return f"P5\n{w} {h}\n255\n".encode("ascii") + pixels.tobytes()


def metrics_table(metrics: dict) -> str:
    n = metrics["count"]

    def frac(key):
        return f"{metrics[key]}/{n}"

    def num(key):
        v = metrics[key]
        return "undefined" if v is None else f"{v:.4f}"

    rows = [
        ("Nearest shape belongs to correct class", frac("nn_correct")),
        ("Second nearest shape belongs to correct class", frac("second_nn_correct")),
        ("Normalized avg. distance for shapes in same class", num("intra_class_mean")),
        ("Normalized avg. distance for shapes in different classes", num("inter_class_mean")),
    ]
    width = max(len(r[0]) for r in rows)
    return "\n".join(f"{name:<{width}}  {value}" for name, value in rows) + "\n"


def write_report(report: RetrievalReport, out_dir) -> dict[str, Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {
        "report": out_dir / "report.json",
        "image": out_dir / "matrix.pgm",
        "table": out_dir / "metrics.txt",
    }
    atomic_write_text(paths["report"], report.dumps())
    atomic_write_bytes(paths["image"], matrix_image(report.matrix))
    atomic_write_text(paths["table"], metrics_table(report.metrics))
    return paths
