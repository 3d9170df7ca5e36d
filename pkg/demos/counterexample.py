"""The quadratic game whose only critical point attracts simGD without being Nash.

Run: python3 demos/counterexample.py
"""

import numpy as np

from lss import (DampingFunction, LambdaFunction, SchedulePair, StepSchedule, analyze, simulate)
from lss.game import Game

game = Game.counterexample()
found, reports = analyze(game, (-2.0, 2.0), 5)
rep = reports[0]
print(f"critical point {found[0].coords}, label {rep.classification}")
print(f"  eig(J) = {np.round(rep.jacobian_eigs, 4)}")
print(f"  eig(S) = {rep.s_eigs}  (the -0.1 is the maximizing player's curvature)")

z0 = [0.3, -0.3]
tts = SchedulePair(StepSchedule.power(0.2, 0.6), StepSchedule.power(0.5, 0.51, "fast"))
runs = {
    "2ts-simgd": simulate(game, "2ts-simgd", z0, 100_000, tts, stop_tol=1e-8, stride=100),
    "co (1.0)": simulate(game, "co", z0, 100_000, StepSchedule.constant(0.05), lambda_co=1.0,
                         stop_tol=1e-8, stride=100),
    "sga (1.0)": simulate(game, "sga", z0, 100_000, StepSchedule.constant(0.05), lambda_sga=1.0,
                          stop_tol=1e-8, stride=100),
}
pair = SchedulePair(StepSchedule.constant(0.004), StepSchedule.constant(0.005, "fast"))
runs["lss"] = simulate(game, "lss", z0, 5000, pair, lam=LambdaFunction(1e-4),
                       damping=DampingFunction(1e-4), stride=100)

for name, traj in runs.items():
    print(f"{name:10s} ends at |z| = {np.linalg.norm(traj.terminal):.3g} after {traj.n[-1]} steps")
