"""walkdim: local dimension and walk exponents on finite metric samples.

The package estimates two pointwise exponents on a sampled compact space:
the volume growth exponent alpha(x) of a reference measure, and the walk
exponent beta read off exit times of uniform jump walks, together with the
killed-operator spectral theory tying them together.
"""

from .geometry import BallSpec, MeasureWeights, PointCloud
from .fractals import (
    CarpetParams,
    GasketParams,
    KochParams,
    VicsekParams,
    carpet_stage,
    euclidean_cloud,
    gasket_stage,
    koch_alpha,
    koch_natural_weights,
    koch_stage,
    vicsek_stage,
)
from .nets import EpsilonNet, WalkGraph, build_epsilon_net, build_walk_graph, graph_is_connected
from .walks import (
    BetaField,
    CTWalkPath,
    ExitTimeField,
    MCExitResult,
    exit_time_graph,
    exit_time_measure,
    exit_time_renormalized,
    mc_exit_time,
    simulate_ct_walk,
)
from .exponents import (
    AhlforsReport,
    LocalBetaResult,
    ScalingFit,
    default_scale_grid,
    estimate_alpha_local,
    estimate_beta_ball,
    estimate_beta_local,
    fit_ahlfors,
    fit_power_law,
    local_hausdorff_weights,
)
from .spectral import (
    BetaLowerBoundCheck,
    FaberKrahnSweep,
    GreenKernel,
    KilledOperator,
    SpectralReport,
    beta_lower_bound_check,
    bottom_eigenvalue,
    build_killed_operator,
    faber_krahn_sweep,
    green_kernel,
    spectral_radius_bound,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
