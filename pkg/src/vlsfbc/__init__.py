"""Nonasymptotic and second-order bounds for variable-length stop-feedback
coding over common-message broadcast channels, with a Monte Carlo simulator
of the coding scheme for cross-validation."""

from ._kernels import backend_name
from .asymptotics import (
    NormalApprox,
    ProfileFunction,
    SecondOrderConstants,
    check_corollary4,
    constant_profile,
    emax_gaussians,
    hatv,
    hatv_profile,
    lemma1_check,
    normal_approx,
    psi,
    psi_inv,
    psi_prime,
    second_order_constants,
    xi_a,
    xi_a_bar,
    xi_c,
)
from .bounds import (
    AchievabilityPoint,
    ConversePoint,
    achievability_curve,
    achievability_eps,
    build_walk_suite,
    converse_Lt_bruteforce,
    converse_curve,
    converse_ell,
    converse_g,
)
from .channel import (
    BroadcastChannel,
    ChannelAnalysis,
    Dmc,
    analyze,
    conditional_info_variance,
    converse_capacity_condition,
    directional_derivative,
    load_channel,
    make_bsc,
    make_common_output_pair,
    mutual_information,
    replicate,
    save_channel,
    solve_caid,
    unconditional_info_variance,
)
from .simulator import SimConfig, SimResult, run_vlsf, validate_against_bounds
from .walks import (
    IncrementLaw,
    LatticeWalk,
    StoppingLaw,
    crossing_order_prob,
    expected_max_stopping,
    increment_law,
    quantize,
    running_max_crossing,
    stopping_time_cdf,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
