"""Texture-aware Schrödinger diffusion distance signatures for triangle meshes."""

from .errors import SchrodiffError
from .mesh_io import TriangleMesh, load_mesh, load_signature, luminance, save_mesh, save_signature
from .operator import (
    PotentialKind,
    SparseSymmetricOperator,
    assemble_mesh_laplacian,
    assemble_schrodinger,
    build_potential,
    gradient_norm_field,
)
from .pipeline import PipelineConfig, compute_signature
from .signature import DiffusionSignature, SamplePlan, build_histogram, emd_1d, farthest_point_sample
from .spectral import (
    SpectralDecomposition,
    diffusion_distance,
    distance_map,
    eigendecompose,
    evolve,
    kernel_slice,
    stability_experiment,
)

__version__ = "0.1.0"
