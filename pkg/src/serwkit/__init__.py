"""Optimal transport, Gromov-Wasserstein and sub-embedding robust Wasserstein
(SERW) distances between point clouds that live in different spaces."""

__version__ = "0.1.0"

from .align import InvariantOtResult, Rotation, invariant_ot, procrustes, random_orthogonal
from .analysis import (
    CurveReport,
    DtwResult,
    ProximityReport,
    cyclic_sequence,
    dimension_sweep,
    dtw,
    normalize_curve,
    proximity_ratios,
    sequence_curve,
)
from .embed import (
    Adam,
    ClassicalMDS,
    DistortionEstimate,
    LocallyLinearEmbedding,
    ResidualEmbedding,
    distortion_loss,
    distortion_threshold,
    estimate_distortion,
    lle_embed,
    mds_embed,
    target_dimension,
)
from .exceptions import ConfigurationError, DegenerateInputError, InputError, SerwError, SolverError
from .gromov import GromovWasserstein, GwSolution, eccentricity, flb, gw_objective, gw_solve
from .mmspace import (
    MmSpace,
    Moments,
    distance_matrix,
    l2_normalize,
    lower_bound_constant,
    moments,
    upper_bound_constant,
)
from .ot import Coupling, OtSolution, exact_ot, sinkhorn, squared_euclidean_cost, w2_squared
from .serw import (
    SERW,
    BoundsReport,
    FixedSERW,
    SerwConfig,
    SerwResult,
    alignment_cost,
    base_embedding,
    check_bounds,
    fserw,
    resolve_dimension,
    serw_train,
)

__all__ = [name for name in dir() if not name.startswith("_")]
