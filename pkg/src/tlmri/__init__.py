"""Blind compressed-sensing MRI reconstruction with learned sparsifying transforms."""
from .errors import (
    ConfigError,
    FormatError,
    GeometryError,
    ParameterError,
    SolverPreconditionError,
    TLMRIError,
    ValidationError,
)
from .kspace import (
    KSpaceData,
    adjoint,
    forward,
    make_cartesian_mask,
    make_pseudo_radial_mask,
    make_random2d_mask,
    simulate_measurements,
    spokes_for_acceleration,
    zero_fill_recon,
)
from .lowrank import lowrank_groups, rank_shrink
from .metrics import psnr
from .patches import (
    BlockMatchResult,
    PatchGeometry,
    aggregate_patches,
    block_match,
    extract_patches,
    stack_3d,
    stack_block,
)
from .phantom import generate_phantom, shepp_logan, smooth_blobs
from .recon import BCDSolver, ReconConfig, continuation_schedule, run_bcd
from .transforms import (
    FristModel,
    SquareTransform,
    TransformUnion,
    cluster_assign_frist,
    cluster_assign_unite,
    hard_threshold,
    update_transform_stl,
    update_transform_unitary,
)

__version__ = "0.1.0"
