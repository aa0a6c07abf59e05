"""Self-homodyne detection and feedback cooling of a levitated nanoparticle.

Numerical library and CLI: dipole-interference optics, Paul-trap radial-mode
analysis with a feedback spring, stochastic time-domain simulation of the
detected motion, and the spectral-analysis chain (PSD estimation, Lorentzian
and cooling-curve fits).
"""

__version__ = "0.1.0"

from .constants import C, CONSTANTS, EPS0, HBAR, K_B
from .optics import (
    Beam,
    FringeState,
    OpticalSetup,
    OutOfLinearRangeWarning,
    RayleighValidityWarning,
    Scatterer,
    backaction_psd,
    calibration_deviation,
    collection_efficiency,
    detection_efficiency,
    dipole_density,
    fringe_slope,
    fringe_state,
    imprecision,
    interference_intensity,
    mirror_sensitivity,
    particle_sensitivity,
    rayleigh_scattered_power,
    total_power_from_collected,
    volts_to_meters,
)
from .modes import (
    DETECTION_AXIS,
    ModeSolution,
    TrapConfig,
    mode_temperature,
    phonon_occupation,
    project_psd,
    radial_modes,
    spring_gain_from_frequencies,
)
from .langevin import (
    Bath,
    CalibrationResult,
    DetectorModel,
    FeedbackConfig,
    Trajectory,
    gas_damping_rate,
    run_calibration,
    simulate,
    synthesize_detector,
    thermal_force_psd,
    white_force_samples,
)
from .spectral import (
    CoolingCurveFit,
    FitError,
    LorentzianFit,
    Psd,
    cooling_curve_fit,
    gaussian_waist_fit,
    imprecision_from_floor,
    lorentzian_fit,
    welch_psd,
)
from .config import ConfigError, ScenarioConfig, default_config_dict
