"""Probability that noisy LSS stays near a Nash point once it gets close.

A reduced version of the acceptance run (50 trials per start time).
Run: python3 demos/lockin.py
"""

from lss import (DampingFunction, LambdaFunction, NoiseModel, SchedulePair, StepSchedule,
                 estimate_lockin)
from lss.game import Game
from lss.presets import TOY2D_LOCKIN as cfg

game = Game.toy2d()
pair = SchedulePair(StepSchedule.power(cfg["a_c"], cfg["a_alpha"]),
                    StepSchedule.power(cfg["b_c"], cfg["b_alpha"], "fast"))
noise = NoiseModel.bounded_uniform(cfg["c_z"], cfg["c_v"], seed=1)
for n0 in (1_000, 10_000):
    est = estimate_lockin(game, "lss", cfg["z_star"], cfg["r0"], cfg["epsilon"], n0, n0 + 8000,
                          n0 + 10_000, pair, noise=noise, trials=50,
                          lam=LambdaFunction(cfg["xi1"]), damping=DampingFunction(cfg["xi2"]))
    lo, hi = est.wilson_interval
    print(f"n0={n0:>6}: {est.successes}/{est.trials} stayed within {cfg['epsilon']} "
          f"(95% interval {lo:.3f} to {hi:.3f}, {est.wall_seconds:.1f}s)")
