"""Number-theoretic tools: Weyl sums, rational approximation, Farey bumps,
divisor counts, the kernel K_N with its three-piece split, and the
superlevel-set check for short-time free waves."""
from .arithmetic import (
    FareyCheck,
    LevelSetReport,
    RamanujanReport,
    RationalApprox,
    dirichlet_approx,
    divisor_count,
    divisor_counts,
    divisor_level_set_check,
    farey_bump_coeffs,
    farey_identity_check,
    mobius_table,
    ramanujan_bound_check,
    ramanujan_sum,
    ramanujan_sum_direct,
    ramanujan_table,
    totient,
)
from .decomposition import (
    KernelDecomposition,
    TimeWeights,
    kernel_decomposition,
    lambda_window,
    ladder_K,
    level_L,
    partition_error,
    resolution_e,
    resolution_pieces,
    time_weights,
)
from .distribution import DistributionReport, admissible_symbol, distributional_check, free_wave, superlevel_measure
from .weyl import (
    T_WINDOW,
    QuadratureWarning,
    WeylBoundReport,
    kernel_KN,
    line_factor,
    line_factor_sup,
    weyl_bound_check,
    weyl_sum,
    weyl_sup_x,
    window,
)

__all__ = [name for name in dir() if not name.startswith("_")]
