"""Moving-plane diagnostics, Harnack chains and estimate checks."""
from .chain import CylinderChain, ball_overlap, build_chain, point_net
from .checks import (GrowthReport, HarnackReport, SmallVolumeVerdict, SubsolutionVerdict,
                     boundary_growth, growth_divergent, harnack_quotient, holder_seminorm,
                     verify_small_volume_mp, verify_subsolution_bound)
from .moving_plane import (STRICT_TOL, TIE_TOL, ContinuityProbe, DecayReport, OmegaSet,
                           ProfileVerdict, SweepResult, classify_series, fit_decay,
                           infimum_on_cap, lambda_grid, lambda_sweep, left_continuity_probe,
                           monitor_S, omega_limit, positivity_alternative, profile_verdict,
                           symmetry_verdict)
from .reflection import (ReflectionDiff, reflect_diff, reflect_diff_series, reflected_operator_values,
                         reflection_matrix)

__all__ = [name for name in dir() if not name.startswith("_")]
