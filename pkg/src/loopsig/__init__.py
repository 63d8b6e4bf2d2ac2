"""Signature-based photon-counting statistics for multiplexed on/off detectors."""

__version__ = "0.1.0"

from .detector import (
    DARK_COUNT_PROBABILITY,
    CALIBRATED_EFFICIENCIES,
    ConditionalMatrix,
    DetectorConfig,
    LoopGeometry,
    Signature,
    SignatureDistribution,
    click_marginals,
    click_prob_binomial,
    conditional_matrix,
    config_from_bin_efficiencies,
    loop_config,
    signature_distribution,
    signature_matrix,
    signature_prob_given_n,
    signature_prob_given_n_bruteforce,
    signature_prob_state,
    with_catch_all,
)
from .errors import CapacityError, DomainError
from .optim import OptimOptions, OptimReport, nelder_mead
from .reconstruction import (
    ClickProbabilities,
    FitResult,
    afterpulse_correct,
    estimate_click_probs,
    estimate_signature_probs,
    free_form_fit,
    mse,
    poisson_sweep_fit,
)
from .simulator import AfterpulseModel, RunResult, SourceSpec, open_loop_config, simulate_cycle, simulate_run
from .states import (
    PhotonNumberDistribution,
    RawPhotonNumberDistribution,
    coherent_truncated,
    fock,
    from_weights,
    mean_photon_number,
)
