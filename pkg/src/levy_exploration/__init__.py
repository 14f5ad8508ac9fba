"""Exploration process of a spectrally positive Levy tree: simulation and checks."""
from .exploration import ExcursionView, ExplorationError, ExplorationTrajectory, excursion_decomposition, explore, ladder_height
from .generator_lab import (
    EstimatorReport,
    GeneratorFunctional,
    K_of,
    K_truncated_of,
    F_of,
    f0_zero_target,
    duality_test,
    lambda_identity,
    martingale_test,
    resolvent_mc,
    resolvent_target,
)
from .levy_model import (
    LevyMechanism,
    QuadratureError,
    StableJumps,
    TabulatedJumps,
    TruncatedMechanism,
    load_mechanism,
    psi_eval,
    psi_inverse,
    psi_prime,
    tilt,
    truncate,
    truncation_bias,
    validate,
)
from .measure import (
    AtomicMeasure,
    TestFunction,
    WeightFunction,
    concat,
    distance,
    erase,
    height,
    height_profile,
    integrate,
    occupation_integral,
    partial_height,
)
from .path_sim import (
    ExcursionInterval,
    HorizonExhausted,
    LevyPath,
    excursions,
    future_infimum,
    infimum_process,
    inverse_local_time,
    simulate_path,
)
from .poisson_rep import (
    MarkedPoissonConfig,
    campbell_check,
    continuous_closed_form,
    exchangeability_check,
    lattice_closed_form,
    representation_test,
    sample_functionals,
    sample_pair,
    variance_check,
)

__version__ = "0.1.0"
