"""MPC for a multi-component reactor, distilled into a neural controller."""

from .config import AppConfig, load_config
from .dataset import TrainingSet, generate_grid, label_with_mpc, split
from .harness import (DisturbanceSpec, EvalReport, SimResult, batch_evaluate,
                      performance_index, simulate, suboptimality_pct)
from .linearize import (ContinuousLinearModel, LinearModel, discretize_zoh,
                        jacobian, nominal_model)
from .mlp import (Mlp, MlpRegressor, NeuralController, TrainConfig, activation,
                  forward_batch, loss_and_gradient, train)
from .mpc import CondensedMpc, MpcConfig, MpcController, condense, solve_mpc
from .plant import PlantParams, find_steady_state, rhs, step_rk4
from .qp import QpProblem, QpSolution, solve

__all__ = [
    "AppConfig", "load_config",
    "TrainingSet", "generate_grid", "label_with_mpc", "split",
    "DisturbanceSpec", "EvalReport", "SimResult", "batch_evaluate",
    "performance_index", "simulate", "suboptimality_pct",
    "ContinuousLinearModel", "LinearModel", "discretize_zoh", "jacobian", "nominal_model",
    "Mlp", "MlpRegressor", "NeuralController", "TrainConfig", "activation",
    "forward_batch", "loss_and_gradient", "train",
    "CondensedMpc", "MpcConfig", "MpcController", "condense", "solve_mpc",
    "PlantParams", "find_steady_state", "rhs", "step_rk4",
    "QpProblem", "QpSolution", "solve",
]
