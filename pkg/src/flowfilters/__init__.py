"""Particle flow filtering library and benchmark harness.

Implements the Gaussian particle filter, invertible particle flow
(EDH/LEDH), particle flow particle filters, and the particle flow
Gaussian particle filter, together with two benchmark scenarios
(multi-target acoustic tracking; a high-dimensional sensor network with
skewed-t dynamics and Poisson counts) and a seeded campaign runner.
"""

from .errors import (AllWeightsDegenerate, CardinalityMismatch, ConfigError,
                     DomainError, EmptyParticleSet, FlowFilterError,
                     InvalidSchedule, MissingCapability, NotPositiveDefinite,
                     RateOverflow, ShapeMismatch, SingularFlowStep)
from .filters import (FILTER_IDS, FilterState, StepOutput, ess,
                      flow_filter_step, gpf_step, init_state, pfgpf_step,
                      pfpf_step, step, systematic_resample)
from .flow import (FlowParams, FlowRecord, LambdaSchedule, accumulate_logdet,
                   edh_params, invert_flow, ledh_params, make_schedule, migrate,
                   run_flow)
from .harness import CampaignConfig, RunRecord, emit_results, run_campaign, summarize
from .kalman import UkfParams, ekf_predict, ekf_update, ukf_predict, ukf_update
from .metrics import extract_target_positions, mse, omat
from .models import (DynamicModel, GaussianBelief, MeasurementModel,
                     ParticleSet, ScenarioModel, normalize_log_weights)
from .numerics import (cholesky_with_jitter, log_bessel_k, log_gaussian_density,
                       weighted_mean_cov)

__version__ = "0.1.0"
