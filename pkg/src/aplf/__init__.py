"""Online probabilistic load forecasting.

Per-calendar-type Gaussian channels updated recursively with forgetting,
and a sequential forward recursion that turns the latest parameters into
Gaussian forecasts with calibrated uncertainty.
"""

from .features import ObservationVector, TemperatureShiftEncoder, TemperatureTracker, calendar_type, encode_observations
from .forecaster import ForecastPath, InstanceVector, forecast_step, gaussian_product_split, predict, quantile
from .metrics import EvalReport, calibration_and_ece, evaluate_forecasts, mape, mean_pinball, pinball, rmse
from .model_types import (
    ChannelState,
    ForecastPoint,
    GaussianChannelParams,
    HyperParams,
    LearnerState,
    ModelParams,
)
from .recursive_learner import (
    OnlineLearner,
    batch_initialize,
    channel_update,
    trace_reset,
    weighted_log_likelihood,
)

__version__ = "0.1.0"
