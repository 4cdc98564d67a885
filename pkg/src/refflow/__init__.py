"""Non-parametric flow matching with reference-mean guidance."""

__version__ = "0.1.0"

from .bridge import LINEAR, AffineSchedule, coefficients, interpolate, mean_from_velocity, velocity_from_mean
from .errors import ConfigError, InputError, SamplingError, SingularityError, TrainingError
from .guidance import (
    ArithmeticMixture,
    GuidanceKind,
    GuidanceSpec,
    RmgField,
    arithmetic_guided_mean,
    arithmetic_weight,
    guided_mean,
    rmg_velocity,
    schedule_value,
)
from .posterior import (
    DataSet,
    EmpiricalPosterior,
    empirical_score,
    empirical_velocity,
    endpoint_mean,
    log_marginal_density,
    posterior_weights,
)
from .sampler import SamplerConfig, Trajectory, euler_sample, flow_field_grid, sample_source
