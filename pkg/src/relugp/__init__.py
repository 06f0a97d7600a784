"""ReLU-GP residual (RGPR) uncertainty calibration for small ReLU networks."""

from .errors import DimensionMismatch, EmptyInput, InvalidRange, NonFiniteLoss, NotPositiveDefinite
from .kernels import LayeredDscsParams, cubic_spline_1d, dscs_1d, dscs_multi, layered_dscs_var
from .laplace import GaussianPosterior, PredictiveGaussian, fit_laplace, linearized_predictive, probit_predict
from .network import ReluNet, TrainConfig, forward, grad_logit, train_map
from .rgpr import RgprModel, confidence, mc_predict, rgpr_predictive

__version__ = "0.1.0"
