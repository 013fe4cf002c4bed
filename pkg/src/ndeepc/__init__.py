"""Neural data-enabled predictive control toolkit."""

__version__ = "0.1.0"

from .controllers import (ControlConfig, ControlStepResult, NeuralDeepcController,
                          make_linear_mode)
from .errors import (ConfigError, DimensionError, NdeepcError, NumericalError,
                     RankDeficiencyError, TrainingError)
from .estimator import NeuralBasisRegressor
from .hankel import HankelSet, TrajectoryData, build_hankel, build_online_regressor
from .harness import (ClosedLoopLog, ComparisonReport, MetricsReport,
                      compare_formulations, compute_metrics, run_closed_loop)
from .linalg import matrix_rank, nullspace_basis, pseudo_inverse, singular_values
from .mlp import (MlpNetwork, NeuralDataMatrix, TrainConfig, fit_cost, forward,
                  hidden_jacobian, identity_network, load_network, make_network,
                  neural_data_matrix, refit_output_layer, save_network, train_nls)
from .plant import (PendulumParams, PendulumSimulator, measure, open_loop_rollout,
                    pendulum_step)
from .predictors import (CertificateReport, DeepcContext, ResidualMatrix,
                         equivalence_certificate, g_nls, nls_predict,
                         prepare_context, residual_matrix)
from .signals import MultisineSpec, ReferenceSpec, multisine, reference
from .sqp import NlpProblem, NlpSolution, SolverOptions, solve_nlp
