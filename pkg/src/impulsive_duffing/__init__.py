"""Semilinear Duffing oscillators with periodic velocity-reversal impulses."""

from .energy_geometry import EnergyCurve, LevelError, energy_curve, intercepts, min_level, sample_curve, tau, tau_flow_oracle
from .impulsive_flow import DEFAULT_SETTINGS, Diagnostics, FlowError, FlowSettings, LiftedState, apply_impulse, evolve, flow_segment
from .models import (
    Forcing,
    GField,
    HypothesisError,
    ImpulseSchedule,
    ImpulsiveSystem,
    check_hypotheses,
    make_linear,
    make_semilinear,
    system_from_config,
)
from .orbits import OrbitRecord, displacement_winding, find_fixed_points, verify_orbit
from .poincare import PoincareOutcome, area_defect, jacobian, poincare_map
from .twist import AnnulusSpec, gap_profile, tau_scan, twist_check, winding_on_curve

__version__ = "0.1.0"
