"""Martingale-difference noise, noisy runs and lock-in probability estimates.

Randomness is counter based. Every (seed, trial, stream) triple keys its own
Philox generator and the counter is set from the iteration index, so the
draw used at step ``n`` of trial ``t`` never depends on what else ran
before it, in which batch, or on which thread.
"""

import csv
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from typing import Optional, Tuple

import numpy as np
from scipy.stats import binomtest

from .dynamics import SchedulePair, simulate_many, v_star
from .errors import ConfigError, DimensionError

__all__ = [
    "NoiseModel", "NoiseStream", "draw_noise", "run_noisy", "LockInEstimate",
    "estimate_lockin", "wilson_interval", "thread_count",
]

CHUNK = 1024
_STREAM_Z, _STREAM_V, _STREAM_INIT = 0, 1, 2
# keeps uniform draws strictly inside the bound after rounding
_SHRINK = 1.0 - 1e-12


@dataclass(frozen=True)
class NoiseModel:
    """``kind`` is ``"none"``, ``"uniform"`` (bounded uniform) or ``"gaussian"``.

    Both random kinds are symmetric, hence conditionally mean zero, and obey
    ``|M^z| <= c_z (1 + |z|)`` and ``|M^v| <= c_v (1 + |z|)`` on every draw.
    The uniform kind fills a cube inscribed in that ball. The Gaussian kind
    scales ``sigma (1 + |z|)`` normals and projects any draw outside the
    ball back onto it.
    """

    kind: str = "none"
    c_z: float = 0.0
    c_v: float = 0.0
    sigma: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("none", "uniform", "gaussian"):
            raise ConfigError(f"unknown noise kind {self.kind!r}")
        if self.c_z < 0 or self.c_v < 0 or not self.sigma > 0:
            raise ConfigError("noise constants must be non-negative (sigma positive)")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise ConfigError("seed must be a 64-bit unsigned integer")

    @classmethod
    def none(cls):
        return cls("none")

    @classmethod
    def bounded_uniform(cls, c_z, c_v, seed=0):
        return cls("uniform", float(c_z), float(c_v), 1.0, int(seed))

    @classmethod
    def trunc_gaussian(cls, c_z, c_v, sigma, seed=0):
        return cls("gaussian", float(c_z), float(c_v), float(sigma), int(seed))

    @property
    def active(self):
        return self.kind != "none"

    def describe(self):
        return asdict(self)


def _generator(seed, trial, which, chunk):
    key = np.random.SeedSequence([int(seed), int(trial), int(which)]).generate_state(2, np.uint64)
    return np.random.Generator(np.random.Philox(key=key, counter=[0, 0, 0, int(chunk)]))


def _raw_block(model, trial, which, chunk, d):
    """The ``CHUNK x d`` block of unit draws for one stream and counter value."""
    gen = _generator(model.seed, trial, which, chunk)
    if model.kind == "uniform":
        return gen.uniform(-1.0, 1.0, size=(CHUNK, d)) / math.sqrt(d)
    return gen.standard_normal(size=(CHUNK, d))


def _shape(model, raw, c, znorm):
    bound = c * (1.0 + znorm)
    if model.kind == "uniform":
        return raw * (bound * _SHRINK)[..., None]
    m = raw * (model.sigma * (1.0 + znorm))[..., None]
    norm = np.sqrt(np.sum(m * m, axis=-1))
    scale = np.where(norm > bound, bound * _SHRINK / np.where(norm > 0, norm, 1.0), 1.0)
    return m * scale[..., None]


def draw_noise(model, z, n, trial=0, dim=None):
    """``(M^z_{n+1}, M^v_{n+1})`` for one state; a pure function of its inputs."""
    z = np.asarray(z, dtype=float)
    d = z.shape[-1] if dim is None else int(dim)
    if z.shape[-1] != d:
        raise DimensionError("dim must match the state dimension")
    if not model.active:
        return np.zeros(d), np.zeros(d)
    chunk, row = divmod(int(n), CHUNK)
    znorm = np.linalg.norm(z)
    mz = _shape(model, _raw_block(model, trial, _STREAM_Z, chunk, d)[row], model.c_z, znorm)
    mv = _shape(model, _raw_block(model, trial, _STREAM_V, chunk, d)[row], model.c_v, znorm)
    return mz, mv


class NoiseStream:
    """Batched noise source for :func:`lss.dynamics.simulate_many`.

    Row ``i`` of the batch is trial ``trials[i]``. Blocks of ``CHUNK``
    counter values are generated once per trial and reused, so a batched
    draw equals :func:`draw_noise` row by row.
    """

    def __init__(self, model, d, trials=(0,)):
        self.model = model
        self.d = int(d)
        self.trials = np.asarray(trials, dtype=np.int64)
        self._chunk = None
        self._blocks = None

    def describe(self):
        return self.model.describe()

    def _load(self, chunk):
        blocks = np.empty((2, len(self.trials), CHUNK, self.d))
        for i, t in enumerate(self.trials):
            blocks[0, i] = _raw_block(self.model, t, _STREAM_Z, chunk, self.d)
            blocks[1, i] = _raw_block(self.model, t, _STREAM_V, chunk, self.d)
        self._chunk, self._blocks = chunk, blocks

    def draw(self, z, n, rows):
        if not self.model.active:
            return None
        chunk, k = divmod(int(n), CHUNK)
        if chunk != self._chunk:
            self._load(chunk)
        znorm = np.sqrt(np.sum(z * z, axis=-1))
        mz = _shape(self.model, self._blocks[0, rows, k], self.model.c_z, znorm)
        mv = _shape(self.model, self._blocks[1, rows, k], self.model.c_v, znorm)
        return mz, mv


def run_noisy(game, rule, z0, schedules, noise, n_steps, trial=0, **kw):
    """One run of ``rule`` with the noise added inside the step bracket.

    ``noise=None`` (or a ``"none"`` model) gives exactly the deterministic run.
    Extra keywords go to :func:`lss.dynamics.simulate_many`.
    """
    stream = None
    if noise is not None and noise.active:
        stream = NoiseStream(noise, game.d, [trial])
    z0 = np.asarray(getattr(z0, "coords", z0), dtype=float)
    seed = None if noise is None else noise.seed
    return simulate_many(game, rule, z0[None], n_steps, schedules, noise=stream,
                         seed=seed, **kw)[0]


def wilson_interval(successes, trials, confidence=0.95):
    """Wilson score interval for a binomial proportion."""
    ci = binomtest(int(successes), int(trials)).proportion_ci(confidence, method="wilson")
    return float(ci.low), float(ci.high)


@dataclass(frozen=True)
class LockInEstimate:
    n0: int
    n1: int
    horizon: int
    R0: float
    epsilon: float
    trials: int
    successes: int
    p_hat: float
    wilson_interval: Tuple[float, float]
    wall_seconds: float = 0.0
    outcomes: Optional[tuple] = None

    def to_dict(self):
        return {"n0": self.n0, "n1": self.n1, "horizon": self.horizon, "r0": self.R0,
                "epsilon": self.epsilon, "trials": self.trials, "successes": self.successes,
                "p_hat": self.p_hat, "wilson": list(self.wilson_interval),
                "wall_seconds": self.wall_seconds}


def thread_count(default=None):
    """Worker count from ``LSS_THREADS``; 0 means run serially in the caller."""
    raw = os.environ.get("LSS_THREADS")
    if raw is None or raw == "":
        return (os.cpu_count() or 1) if default is None else default
    try:
        value = int(raw)
    except ValueError:
        raise ConfigError(f"LSS_THREADS must be an integer, got {raw!r}") from None
    if value < 0:
        raise ConfigError("LSS_THREADS must be >= 0")
    return value


def _uniform_ball(gen, d, radius, size):
    direction = gen.standard_normal((size, d))
    direction /= np.linalg.norm(direction, axis=-1, keepdims=True)
    r = radius * gen.uniform(size=size) ** (1.0 / d)
    return direction * r[:, None]


def _initial_states(game, trial_ids, z_star, R0, seed, lam, v_radius):
    zs, vs = [], []
    for t in trial_ids:
        gen = _generator(seed, t, _STREAM_INIT, 0)
        zs.append(z_star + _uniform_ball(gen, game.d, R0, 1)[0])
        vs.append(_uniform_ball(gen, game.d, v_radius, 1)[0])
    z0 = np.array(zs)
    v0 = np.array(vs)
    if lam is not None:
        v0 = v0 + v_star(game, z0, lam)
    return z0, v0


def _lockin_batch(game, rule, z_star, R0, epsilon, n0, n1, horizon, schedules, noise,
                  trial_ids, seed, lam, damping, v_radius, extra):
    z0, v0 = _initial_states(game, trial_ids, z_star, R0, seed,
                             lam if rule in ("lss", "tvlss") else None, v_radius)
    worst = np.zeros(len(trial_ids))

    def monitor(n, z, rows):
        if n >= n1:
            dev = np.sqrt(np.sum((z - z_star) ** 2, axis=-1))
            worst[rows] = np.maximum(worst[rows], dev)

    stream = NoiseStream(noise, game.d, trial_ids) if noise is not None and noise.active else None
    kw = dict(extra)
    if rule in ("lss", "tvlss"):
        kw.update(lam=lam, damping=damping, v0=v0)
    trajs = simulate_many(game, rule, z0, horizon - n0, schedules, noise=stream,
                          stride=max(1, horizon - n0), diagnostics=False, n_start=n0,
                          monitor=monitor, **kw)
    success = np.array([t.diverged_at is None for t in trajs]) & (worst <= epsilon)
    worst[[t.diverged_at is not None for t in trajs]] = np.inf
    return success, worst


def estimate_lockin(game, rule, z_star, R0, epsilon, n0, n1, horizon, schedules,
                    noise=None, trials=200, lam=None, damping=None, seed=0,
                    v_radius=1e-3, batch_size=100, threads=None, csv_path=None, **extra):
    """Monte Carlo estimate of the probability of staying near ``z_star``.

    Each trial starts at step ``n0`` uniformly in the ``R0`` ball around
    ``z_star`` (with ``v`` within ``v_radius`` of ``v*(z)`` for the LSS rules)
    and succeeds iff ``|z_n - z_star| <= epsilon`` for every ``n`` in
    ``[n1, horizon]``. Trials run in fixed batches of ``batch_size`` on
    ``threads`` workers (``LSS_THREADS`` by default); the batching does not
    depend on the worker count, so serial and threaded runs agree bit for bit.
    """
    z_star = np.asarray(getattr(z_star, "coords", z_star), dtype=float)
    if z_star.shape != (game.d,):
        raise DimensionError(f"z_star must have dimension {game.d}")
    if not (0 < epsilon < R0):
        raise ConfigError("need 0 < epsilon < R0")
    if not (0 <= n0 < n1 <= horizon):
        raise ConfigError("need 0 <= n0 < n1 <= horizon")
    if trials < 1:
        raise ConfigError("trials must be positive")
    if rule in ("lss", "tvlss", "2ts-simgd") and not isinstance(schedules, SchedulePair):
        raise ConfigError(f"{rule} needs a slow/fast SchedulePair")
    if noise is not None and noise.active:
        seed = noise.seed
    threads = thread_count() if threads is None else int(threads)
    ids = np.arange(trials)
    batches = [ids[i:i + batch_size] for i in range(0, trials, batch_size)]

    def job(batch):
        return _lockin_batch(game, rule, z_star, R0, epsilon, n0, n1, horizon, schedules,
                             noise, batch, seed, lam, damping, v_radius, extra)

    start = time.perf_counter()
    if threads == 0 or len(batches) == 1:
        results = [job(b) for b in batches]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(job, batches))
    wall = time.perf_counter() - start
    success = np.concatenate([r[0] for r in results])
    worst = np.concatenate([r[1] for r in results])
    k = int(success.sum())
    lo, hi = wilson_interval(k, trials)
    p_hat = k / trials
    # the Wilson bounds can land a rounding error outside [0, 1] or off p_hat
    lo, hi = max(0.0, min(lo, p_hat)), min(1.0, max(hi, p_hat))
    outcomes = tuple((int(t), bool(s), float(w)) for t, s, w in zip(ids, success, worst))
    if csv_path is not None:
        with open(csv_path, "w", newline="", encoding="utf-8") as fh:
            out = csv.writer(fh)
            out.writerow(["trial", "seed", "success", "max_dev_after_n1"])
            for t, s, w in outcomes:
                out.writerow([t, seed, int(s), format(w, ".17g")])
    return LockInEstimate(n0=int(n0), n1=int(n1), horizon=int(horizon), R0=float(R0),
                          epsilon=float(epsilon), trials=int(trials), successes=k,
                          p_hat=p_hat, wilson_interval=(lo, hi), wall_seconds=wall,
                          outcomes=outcomes)
