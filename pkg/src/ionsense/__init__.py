"""Continuous sensing with monitored few-level emitters.

Simulates photon-counting records of driven dissipative few-level systems in
the renewal regime, quantifies the parameter information they carry (record
Fisher information and the joint system-environment bound), provides the
closed-form approximations valid in the intermittent and dark-state regimes,
and estimates parameters from records by maximum likelihood.
"""

from . import errors
from .approx import (BlinkingAnsatz, BlinkingFiApprox, DarkStatePerturbation,
                     ThreeLevelSpectrum, blinking_rates, bright_manifold_ee,
                     darkstate_perturbation, fi_blinking_approx,
                     free_step_operator, saturating_class_check,
                     threelevel_spectrum, wprime_dark, wprime_exact,
                     wtd3ls_perturbative, wtd_blinking_ansatz)
from .estimate import (EstimatorStats, MleResult, default_grid,
                       estimator_stats, mle_fit, repeat_mle)
from .fisher import (FisherEstimate, fi_monte_carlo, fi_rate_integral,
                     qfi_rate, qfi_time_curve, qfi_twosided)
from .generators import (NojumpMode, SteadyStateInfo, Superoperator,
                         devectorize, lindblad_superop, match_modes,
                         nojump_superop, spectrum_nojump, steady_state,
                         trace_functional, twosided_superop, vectorize)
from .model import (GAMMA_SI, ModelOperators, ModelParams, build_model,
                    effective_hamiltonian, preset, rate_to_hz,
                    time_to_seconds)
from .numerics import (SpectralForm, eig_general, expm_action,
                       expm_action_many, null_space_trace_one)
from .renewal import (EmissionRecord, WtdCache, WtdTable,
                      batch_log_likelihood, build_wtd, detection_rate,
                      load_records, log_likelihood, p0_eval, record_stream,
                      sample_record, sample_records, sample_waits,
                      save_records)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
