"""Experiment presets: the 2-D quartic figures and the quadratic counterexample.

The Toy2D equilibrium coordinates below were computed once with
:func:`lss.equilibria.find_critical_points` (box [-16, 16]^2, 40x40 seeds)
and frozen; ``tests/test_presets.py`` re-derives and compares them.
"""

from dataclasses import dataclass, field
from typing import Dict, Tuple

import numpy as np

from .dynamics import SchedulePair, StepSchedule
from .errors import ConfigError
from .game import Game

__all__ = [
    "TOY2D_DNE", "TOY2D_NON_NASH", "TOY2D_LASE", "TOY2D_BOX", "toy2d_initializations",
    "RunSpec", "ExperimentPreset", "PRESETS", "get_preset", "TOY2D_LOCKIN",
]

TOY2D_BOX = (-16.0, 16.0)

TOY2D_DNE = (
    (-12.476604033044046, -8.67792559594491),
    (-11.426652020836208, 8.004295345248247),
    (12.395007146419625, -6.372831318445011),
)
TOY2D_NON_NASH = (-1.3165279824134333, -1.2242747225535864)
TOY2D_LASE = TOY2D_DNE + (TOY2D_NON_NASH,)

# the remaining critical points in the box, all saddles of the game field
TOY2D_UNSTABLE = (
    (-13.842761708081042, 1.1904648457814595),
    (-2.8114422176724974, -2.371262202993375),
    (0.0, 0.0),
    (0.9147093476735039, -14.01180346651863),
    (1.0829595985292235, 13.991007028925862),
)


def _as_tuples(points):
    return tuple(tuple(float(c) for c in p) for p in points)


def toy2d_initializations(offset=0.3):
    """One start per attractor: each LASE moved ``offset`` toward the origin."""
    pts = np.array(TOY2D_LASE)
    return pts - offset * pts / np.linalg.norm(pts, axis=1, keepdims=True)


@dataclass(frozen=True)
class RunSpec:
    """One rule of a preset, applied to every initialization of the preset."""

    label: str
    rule: str
    n_steps: int
    schedules: object = None
    dt: float = 0.0
    params: Dict[str, float] = field(default_factory=dict)
    stop_tol: float = None
    stride: int = 1

    @property
    def is_ode(self):
        return self.rule.startswith("ode-")


@dataclass(frozen=True)
class ExperimentPreset:
    name: str
    game: Game
    inits: Tuple[Tuple[float, ...], ...]
    runs: Tuple[RunSpec, ...]
    xi1: float = 1e-4
    xi2: float = 1e-4
    box: Tuple[float, float] = (-4.0, 4.0)
    grid: int = 40
    description: str = ""


_FIG_CONST = SchedulePair(StepSchedule.constant(0.004), StepSchedule.constant(0.005, "fast"))


def _toy2d_figure1():
    return ExperimentPreset(
        name="toy2d-figure1", game=Game.toy2d(),
        inits=_as_tuples(toy2d_initializations()),
        runs=(
            RunSpec("simgd-ode", "ode-omega", 10_000, dt=0.01, stop_tol=1e-10, stride=20),
            RunSpec("lss-ode", "ode-h", 10_000, dt=0.01, stop_tol=1e-10, stride=20),
        ),
        box=TOY2D_BOX, grid=40,
        description="gradient flow against the surgically adjusted flow on the quartic game",
    )


def _toy2d_figure2():
    return ExperimentPreset(
        name="toy2d-figure2", game=Game.toy2d(),
        inits=_as_tuples(toy2d_initializations()),
        runs=(
            RunSpec("lss", "lss", 10_000, schedules=_FIG_CONST, stride=10),
            RunSpec("tvlss", "tvlss", 10_000, schedules=_FIG_CONST, stride=10,
                    params={"lambda1_xi": 1e-4}),
            RunSpec("lss-ode", "ode-h", 10_000, dt=0.01, stop_tol=1e-10, stride=20),
        ),
        box=TOY2D_BOX, grid=40,
        description="two-timescale LSS (constant steps 0.004 / 0.005) against its limiting ODE",
    )


def _counterexample():
    tts = SchedulePair(StepSchedule.power(0.2, 0.6), StepSchedule.power(0.5, 0.51, "fast"))
    runs = [RunSpec("2ts-simgd", "2ts-simgd", 100_000, schedules=tts, stop_tol=1e-6, stride=100)]
    for lam in (0.1, 1.0, 10.0):
        gamma = 0.05 if lam < 10 else 0.01
        runs.append(RunSpec(f"co-{lam:g}", "co", 100_000, schedules=StepSchedule.constant(gamma),
                            params={"lambda_co": lam}, stop_tol=1e-6, stride=100))
    for lam in (0.1, 1.0, 10.0):
        gamma = 0.05 if lam < 10 else 0.01
        runs.append(RunSpec(f"sga-{lam:g}", "sga", 100_000, schedules=StepSchedule.constant(gamma),
                            params={"lambda_sga": lam}, stop_tol=1e-6, stride=100))
    runs.append(RunSpec("lss", "lss", 5_000, schedules=_FIG_CONST, stride=10))
    return ExperimentPreset(
        name="counterexample-appB", game=Game.counterexample(), inits=((0.3, -0.3),),
        runs=tuple(runs), box=(-2.0, 2.0), grid=5,
        description="quadratic game whose only critical point is a non-Nash attractor",
    )


PRESETS = {
    "toy2d-figure1": _toy2d_figure1,
    "toy2d-figure2": _toy2d_figure2,
    "counterexample-appB": _counterexample,
}


def get_preset(name):
    try:
        return PRESETS[name]()
    except KeyError:
        raise ConfigError(f"unknown preset {name!r}; valid names: {', '.join(PRESETS)}") from None


# lock-in defaults on the quartic game: the DNE with the stiffest symmetric part
TOY2D_LOCKIN = {
    "game": "toy2d", "rule": "lss", "z_star": list(TOY2D_DNE[2]), "r0": 0.2,
    "epsilon": 0.05, "n0": 10_000, "n1": 18_000, "horizon": 20_000, "trials": 200,
    "a_c": 0.05, "a_alpha": 0.8, "b_c": 0.2, "b_alpha": 0.6, "xi1": 1e-4, "xi2": 1e-4,
    "noise": "uniform", "c_z": 0.05, "c_v": 0.05, "sigma": 1.0, "seed": 0,
}
