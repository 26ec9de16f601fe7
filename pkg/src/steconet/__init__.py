"""Slant TEC simulation and operator-network prediction for GNSS rays."""

__version__ = "0.1.0"

from .dataset import RayRecord, SplitSpec, compute_aifw, encode_time
from .deeponet import OperatorModel, operator_forward, weighted_loss
from .geometry import EcefPos, GeodeticPos, Ray, geodetic_to_ecef, make_ray
from .ionosim import EpsteinParams, IonosphereModel, stec_along_ray
from .kernel import InputFunction, KernelSpec, fit_input_function
from .metrics import EvalReport, evaluate, mape, qa, r2, rmse
from .sobol import sobol_points
from .training import (Checkpoint, TrainConfig, load_checkpoint, predict,
                       save_checkpoint, train)

__all__ = [
    "RayRecord", "SplitSpec", "compute_aifw", "encode_time",
    "OperatorModel", "operator_forward", "weighted_loss",
    "EcefPos", "GeodeticPos", "Ray", "geodetic_to_ecef", "make_ray",
    "EpsteinParams", "IonosphereModel", "stec_along_ray",
    "InputFunction", "KernelSpec", "fit_input_function",
    "EvalReport", "evaluate", "mape", "qa", "r2", "rmse",
    "sobol_points",
    "Checkpoint", "TrainConfig", "load_checkpoint", "predict",
    "save_checkpoint", "train",
]
