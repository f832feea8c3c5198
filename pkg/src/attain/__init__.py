"""Goal-attainment tuning of one parameter vector across several simulated scenarios."""

from attain.cost import CostValue, evaluate_all, evaluate_cost, gradient
from attain.dynamics import Trajectory, check_state_bounds, derivative, integrate
from attain.expr import evaluate, free_variables, parse
from attain.io import load_problem, write_results
from attain.model import BoxSet, ProblemSpec, Scenario, SolverOptions, validate_problem
from attain.pipeline import (
    GoalSet,
    GoalSolution,
    attainment_report,
    normalize_weights,
    run_goal_attainment,
    run_stage1,
    weight_sweep,
)
from attain.qp import QpProblem, solve_qp
from attain.sqp import NlpProblem, NlpSolution, damped_bfgs_update, solve_nlp

__version__ = "0.1.0"
