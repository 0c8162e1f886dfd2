"""Ray-basis neural networks for modelling acoustic amplitude fields."""

from .core import (
    Box,
    DivergenceError,
    FixedCoeff,
    FreeField,
    InvalidArgumentError,
    LearnedRcnn,
    PressureRelease,
    Rayleigh,
    RBNNError,
    RcnnWeights,
    SingularityError,
    Waveguide,
)
from .data import Dataset
from .estimators import GeometryAidedRBNN, IDWRegressor, ImageSourceRBNN, PlaneWaveRBNN
from .grid import GridSpec, predict_grid
from .metrics import evaluate, idw_baseline, mate, rms_error_db, spearman
from .model import GeometryAidedModel, ImageSourceModel, PlaneWaveModel, model_from_dict
from .oracle import TrajectoryConfig, field_ism, gen_zigzag_trajectory, make_dataset
from .raytrace import NominalRay, nominal_rays
from .scenarios import run_scenario
from .train import TrainConfig, TrainReport, multi_restart_train, refine_positions, train

__version__ = "0.1.0"

__all__ = [
    "Box", "Dataset", "DivergenceError", "FixedCoeff", "FreeField", "GeometryAidedModel", "GeometryAidedRBNN",
    "GridSpec", "IDWRegressor", "ImageSourceModel", "ImageSourceRBNN", "InvalidArgumentError", "LearnedRcnn",
    "NominalRay", "PlaneWaveModel", "PlaneWaveRBNN", "PressureRelease", "RBNNError", "Rayleigh", "RcnnWeights",
    "SingularityError", "TrainConfig", "TrainReport", "TrajectoryConfig", "Waveguide", "evaluate", "field_ism",
    "gen_zigzag_trajectory", "idw_baseline", "make_dataset", "mate", "model_from_dict", "multi_restart_train",
    "nominal_rays", "predict_grid", "refine_positions", "rms_error_db", "run_scenario", "spearman", "train",
]
