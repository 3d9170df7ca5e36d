"""Local symplectic surgery for zero-sum games.

Finds and classifies critical points of the game field, runs simGD and its
adjusted variants (consensus optimisation, SGA, two-timescale simGD) next to
the two-timescale LSS and TVLSS rules, and estimates lock-in probabilities
under martingale-difference noise.
"""

__version__ = "0.1.0"

from .errors import (ConfigError, DimensionError, DivergenceError, LSSError,  # noqa: E402
                     NumericalError, SingularityError)
from .game import (Game, GameJacobian, StrategyPoint, eval_cost, eval_jacobian,  # noqa: E402
                   eval_omega, game_from_dict, game_hash, game_to_dict, load_game)
from .autodiff import Dual, j_vec_via_two_jtv, jt_vec  # noqa: E402
from .dynamics import (DampingFunction, LambdaFunction, SchedulePair, StepSchedule,  # noqa: E402
                       TimeVaryingLambda, Trajectory, TwoTimescaleState, integrate_ode,
                       limiting_h, simulate, simulate_many)
from .equilibria import analyze, check_eigenvector_assumption, classify, find_critical_points  # noqa: E402
from .stochastic import NoiseModel, draw_noise, estimate_lockin, run_noisy  # noqa: E402
