"""2D cylindrical roller bearing simulator with a graph-network load surrogate."""

__version__ = "0.1.0"

from .contact import ContactLaw, contact_constant, contact_deflection, contact_force
from .core import (BearingConfig, BearingState, ConfigError, DerivedGeometry,
                   LoadSchedule, SimParams, derived_geometry,
                   loaded_roller_index)
from .estimators import GraphBuilder, GraphNetRegressor
from .graphs import (Dataset, Graph, NormStats, SamplingPolicy,
                     compute_norm_stats, normalize_graph, sample_dataset,
                     snapshot_to_graph)
from .network import (GnnHyperParams, GnnModel, adam_step, gnn_forward,
                      loss_and_gradients, loss_fn, mlp_forward, mlp_init,
                      model_init)
from .simulator import (RollerContact, StepRecord, Trajectory, assemble_forces,
                        external_load, rk4_step, roller_kinematics, simulate,
                        static_equilibrium)
from .trajfile import load_trajectory, save_trajectory
from .training import (Checkpoint, TrainConfig, build_split, load_checkpoint,
                       save_checkpoint, train)
from .evaluation import (percentage_error, single_step_eval,
                         verification_sweep)

__all__ = [name for name in dir() if not name.startswith("_")]
