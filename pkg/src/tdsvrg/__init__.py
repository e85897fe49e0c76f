"""Variance-reduced temporal-difference policy evaluation with linear features."""

from .analysis import (aggregate_geometric, batch_size_table, convergence_rate_fit,
                       markov_error_bound, pd_svrg_batch_formula, theoretical_parameters)
from .errors import *  # noqa: F401,F403
from .learners import (Algorithm, LearnerConfig, RunTrace, project_ball, run, run_gtd2,
                       run_td0, run_td_svrg, run_td_svrg_markov, run_vrtd)
from .mdp import (FixedPointSolution, Mdp, dirichlet_decomposition, ergodicity_profile,
                  exact_values, fixed_point, random_mdp, reset_transform, update_deviation)
from .sampling import (BatchSchedule, Dataset, IidSource, MarkovSource,
                       estimation_batch_size, mean_path_update, sample_balanced_dataset,
                       sample_trajectory)

__version__ = "0.1.0"
