"""Structure-preserving NSFD solvers and constraint-aware PINNs for a spatial
SEIR epidemic model with vital dynamics."""

__version__ = "0.1.0"

from .model import (CompartmentFields, DomainSpec, EpidemicParams,
                    InitialConditionSpec, build_initial_conditions,
                    carrying_capacity, reaction_terms)
from .nsfd import (GridSpec, Trajectory, nsfd_step_1d, nsfd_step_2d,
                   population_identity_residual, solve)
from .network import (FourierFeatureMap, NetworkConfig, PinnModel,
                      fourier_features, inverse_transform_params,
                      load_checkpoint, save_checkpoint, transform_params)
from .autodiff import InputJet, evaluate_with_input_derivatives, loss_gradient
from .losses import (CollocationBatch, LossBreakdown, LossEvaluator, LossWeights,
                     ObservationSet, pde_residuals)
from .optim import (AdamState, CosineSchedule, LbfgsState, adam_step,
                    clip_gradient, cosine_lr, lbfgs_minimize)
from .trainer import (RunArtifacts, SamplingConfig, TrainConfig, evaluate,
                      sample_collocation, train)
from .datagen import (ErrorReport, ParamRecoveryReport, SyntheticDataset,
                      error_metrics, make_dataset, param_report)
