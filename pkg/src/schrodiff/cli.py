"""Command-line interface.

Exit codes: 0 success, 1 parse / missing color, 2 operator assembly,
3 eigensolve, 4 file io, 5 bin mismatch, 6 empty database, 7 stability
hypothesis violated. Command-line usage errors are reported by click with
its own code 2.
"""

from __future__ import annotations

import functools
import logging
import os
import sys

import click
import numpy as np

from . import mesh_io, retrieval
from .errors import SchrodiffError
from .operator import PotentialKind, gradient_norm_field
from .pipeline import PipelineConfig, build_operator, compute_signature
from .signature import emd_1d, farthest_point_sample
from .spectral import (
    distance_map,
    eigendecompose,
    kernel_slice,
    loglog_slopes,
    resolve_time,
    stability_experiment,
)

IO_EXIT = 4


def _auto_or_positive(name):
    def convert(ctx, param, value):
        if value is None or str(value).lower() == "auto":
            return None
        try:
            x = float(value)
        except ValueError:
            raise click.BadParameter(f"{name} must be 'auto' or a positive number") from None
        if not x > 0:
            raise click.BadParameter(f"{name} must be positive")
        return x
    return convert


def _auto_or_nonneg(ctx, param, value):
    if value is None or str(value).lower() == "auto":
        return None
    try:
        x = float(value)
    except ValueError:
        raise click.BadParameter("beta must be 'auto' or a number >= 0") from None
    if not x >= 0:
        raise click.BadParameter("beta must be >= 0")
    return x


def pipeline_options(func):
    """Attach the PipelineConfig flags; the wrapped command receives ``config``."""
    options = [
        click.option("--s-factor", type=click.FloatRange(min=0, min_open=True), default=0.2, show_default=True,
                     help="Gaussian width as a fraction of the median edge length."),
        click.option("--potential", type=click.Choice([k.value for k in PotentialKind]), default="log_grad",
                     show_default=True, help="Texture potential."),
        click.option("--alpha", type=click.FloatRange(min=0), default=1.0, show_default=True,
                     help="Potential scale."),
        click.option("--beta", default="auto", show_default=True, callback=_auto_or_nonneg,
                     help="Log-potential gain; auto = 1/mean|grad I|."),
        click.option("--k", "k", type=click.IntRange(min=1), default=100, show_default=True,
                     help="Number of eigenpairs (clamped to the vertex count)."),
        click.option("--time", "time_", default="auto", show_default=True, callback=_auto_or_positive("time"),
                     help="Diffusion time; auto = ln2 / (2 lambda_2)."),
        click.option("--samples", type=click.IntRange(min=1), default=100, show_default=True,
                     help="Farthest-point samples."),
        click.option("--bins", type=click.IntRange(min=2), default=120, show_default=True,
                     help="Histogram bins."),
        click.option("--range", "range_", default="auto", show_default=True, callback=_auto_or_positive("range"),
                     help="Histogram upper edge; auto = per-shape max distance."),
        click.option("--eigensolver", type=click.Choice(["auto", "dense", "sparse"]), default="auto",
                     show_default=True, help="Eigensolver backend."),
    ]

    @functools.wraps(func)
    def wrapper(s_factor, potential, alpha, beta, k, time_, samples, bins, range_, eigensolver, **kwargs):
        config = PipelineConfig(
            s_factor=s_factor, potential=potential, alpha=alpha, beta=beta, k=k,
            time="auto" if time_ is None else time_, samples=samples, bins=bins,
            value_range=range_, eigensolver=eigensolver,
        )
        return func(config=config, **kwargs)

    for opt in reversed(options):
        wrapper = opt(wrapper)
    return wrapper


def _fail(exc, code, stage):
    click.echo(f"error [{stage}]: {exc}", err=True)
    sys.exit(code)


def guarded(func):
    """Map library errors to the documented exit codes."""
    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except SchrodiffError as exc:
            _fail(exc, exc.exit_code, exc.stage)
        except OSError as exc:
            _fail(exc, IO_EXIT, "io")
    return wrapper


def _load(path):
    return mesh_io.load_mesh(path)


@click.group(context_settings={"help_option_names": ["-h", "--help"], "show_default": True})
@click.version_option(package_name="artifact")
def main():
    """Texture-aware Schrödinger diffusion signatures for triangle meshes."""
    level = os.environ.get("SCHRODIFF_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")


@main.command()
@click.argument("mesh", type=click.Path(dir_okay=False))
@click.option("-o", "--out", required=True, type=click.Path(dir_okay=False), help="Signature JSON to write.")
@pipeline_options
@guarded
def signature(mesh, out, config):
    """Compute the diffusion-distance signature of MESH."""
    sig = compute_signature(_load(mesh), config)
    mesh_io.save_signature(sig, out)


@main.command()
@click.argument("a", type=click.Path(dir_okay=False))
@click.argument("b", type=click.Path(dir_okay=False))
@click.option("--normalized", is_flag=True, help="Divide by bins - 1 (bin axis on [0, 1]).")
@guarded
def compare(a, b, normalized):
    """Print the earth mover's distance between two signature files."""
    d = emd_1d(mesh_io.load_signature(a), mesh_io.load_signature(b), normalized=normalized)
    click.echo(f"{d:.15g}")


@main.command()
@click.argument("manifest", type=click.Path(dir_okay=False))
@click.option("-o", "--out-dir", required=True, type=click.Path(file_okay=False),
              help="Directory for report.json, matrix.pgm and metrics.txt.")
@click.option("--jobs", type=click.IntRange(min=1), default=1, show_default=True, help="Worker threads.")
@pipeline_options
@guarded
def retrieve(manifest, out_dir, jobs, config):
    """Signatures, pairwise EMD matrix and retrieval metrics for a manifest
    of 'path<TAB>label' lines."""
    db = retrieval.build_database(retrieval.read_manifest(manifest), config, jobs=jobs)
    report = retrieval.retrieve(db)
    retrieval.write_report(report, out_dir)
    for err in db.errors:
        click.echo(f"skipped [{err.stage}]: {err}", err=True)
    click.echo(retrieval.metrics_table(report.metrics), nl=False)


def _parse_eps(ctx, param, value):
    try:
        return [float(x) for x in value.split(",") if x.strip()]
    except ValueError:
        raise click.BadParameter("expected a comma-separated list of numbers") from None


@main.command()
@click.argument("mesh", type=click.Path(dir_okay=False))
@click.option("--eps", default="0.1,0.01,0.001,0.0001", show_default=True, callback=_parse_eps,
              help="Perturbation sizes, comma separated.")
@click.option("--steps", type=click.IntRange(min=1), default=2048, show_default=True,
              help="Implicit Euler steps.")
@pipeline_options
@guarded
def stability(mesh, eps, steps, config):
    """Perturb the potential by eps * |grad I| and report the solution error.

    The initial state is a unit delta at the farthest-point seed vertex.
    """
    m = _load(mesh)
    op = build_operator(m, config)
    base = op.potential
    laplacian = build_operator(m, PipelineConfig(s_factor=config.s_factor, potential="none"))
    perturbation = gradient_norm_field(m, mesh_io.luminance(m))
    if config.time == "auto":
        t = resolve_time(eigendecompose(op, min(2, m.n_vertices), method=config.eigensolver), "auto")
    else:
        t = float(config.time)
    u0 = np.zeros(m.n_vertices)
    u0[farthest_point_sample(m, 1).ids[0]] = 1.0
    rows = stability_experiment(laplacian, base, perturbation, eps, u0, t, steps)
    click.echo(f"# t = {t!r}")
    click.echo("eps\terror\tslope")
    for row, slope in zip(rows, loglog_slopes(rows)):
        s = "-" if slope is None else f"{slope:.6f}"
        click.echo(f"{row.eps:.6g}\t{row.error:.12e}\t{s}")


@main.command("dump-operator")
@click.argument("mesh", type=click.Path(dir_okay=False))
@click.option("-o", "--out", required=True, type=click.Path(dir_okay=False))
@pipeline_options
@guarded
def dump_operator(mesh, out, config):
    """Write the assembled operator as 'i j value' upper-triangle triplets."""
    build_operator(_load(mesh), config).dump(out)


@main.command("dump-distance-map")
@click.argument("mesh", type=click.Path(dir_okay=False))
@click.option("--vertex", type=click.IntRange(min=0), default=None,
              help="Source vertex; defaults to the farthest-point seed.")
@click.option("--kernel", is_flag=True, help="Write the heat kernel slice instead of distances.")
@click.option("-o", "--out", required=True, type=click.Path(dir_okay=False))
@pipeline_options
@guarded
def dump_distance_map(mesh, vertex, kernel, out, config):
    """Write 'vertex_id value' lines of a diffusion distance map (or kernel slice)."""
    m = _load(mesh)
    x = farthest_point_sample(m, 1).ids[0] if vertex is None else vertex
    if x >= m.n_vertices:
        raise click.BadParameter(f"vertex {x} out of range (mesh has {m.n_vertices})", param_hint="--vertex")
    dec = eigendecompose(build_operator(m, config), min(config.k, m.n_vertices), method=config.eigensolver)
    t = resolve_time(dec, config.time)
    values = kernel_slice(dec, t, x) if kernel else distance_map(dec, t, x)
    mesh_io.atomic_write_text(out, "".join(f"{i} {v!r}\n" for i, v in enumerate(values.tolist())))


if __name__ == "__main__":
    main()
