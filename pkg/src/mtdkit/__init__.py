"""Multi-target detection at desk scale.

Recover a signal's group orbit from one long noisy observation holding
many transformed copies at unknown, separated locations.  The package
covers the whole pipeline: observation synthesis, autocorrelation
analysis, orbit recovery (moment matching, bispectrum inversion,
rotation-invariant coefficient recovery), and Monte-Carlo scaling
experiments with an emphasis on bitwise reproducibility.
"""

from .autocorr import (
    AutocorrSet,
    InvariantFeatures,
    NoiseBias,
    empirical_autocorr,
    ensemble_autocorr,
    exact_invariant_features,
    features_from_mtd_moments,
    mra_invariant_features,
    mtd_moment_prediction,
    noise_bias,
)
from .errors import (
    CapacityError,
    ConfigError,
    DomainError,
    FormatError,
    HypothesisViolation,
    MtdError,
)
from .generate import (
    MraSampleSet,
    MtdObservation,
    PlacementPlan,
    SeparationMode,
    TruthRecord,
    draw_signal,
    embed_mra_as_mtd,
    generate_mra,
    generate_mtd,
    load_observation,
    make_placement,
    save_observation,
    validate_separation,
    window_law,
)
from .model import (
    CategoricalCyclic,
    CyclicShift,
    Identity,
    PlanarRotation,
    PointMassIdentity,
    Signal,
    SteerableImage,
    UniformCyclic,
    UniformSO2,
    apply_group,
    orbit_mse,
    rotation_aligned_error,
    sample_group,
)
from .recover import (
    RecoveryConfig,
    RecoveryResult,
    RotationInvariants,
    invert_bispectrum,
    moment_match_lsq,
    recover_identity_group,
    recover_rotation_coeffs,
    residual_and_gradient,
    rotation_invariants,
)
from .sweeps import (
    FitResult,
    SampleComplexityResult,
    SweepConfig,
    SweepTable,
    TrialRecord,
    estimate_sample_complexity,
    fit_scaling_exponent,
    mra_vs_mtd_comparison,
    run_sweep,
    run_trial,
)

__version__ = "0.1.0"
