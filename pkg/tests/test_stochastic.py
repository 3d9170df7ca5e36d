import csv

import numpy as np
import pytest

from lss.dynamics import (DampingFunction, LambdaFunction, SchedulePair, StepSchedule,
                          simulate, simulate_many)
from lss.errors import ConfigError, DimensionError
from lss.game import Game
from lss.presets import TOY2D_DNE
from lss.stochastic import (NoiseModel, NoiseStream, draw_noise, estimate_lockin, run_noisy,
                            thread_count, wilson_interval)

MODELS = [NoiseModel.bounded_uniform(0.3, 0.2, seed=7),
          NoiseModel.trunc_gaussian(0.3, 0.2, sigma=0.5, seed=7)]


@pytest.mark.parametrize("model", MODELS, ids=["uniform", "gaussian"])
def test_noise_bound_holds_on_a_million_draws(model):
    trials, steps, d = 500, 1000, 2
    stream = NoiseStream(model, d, np.arange(trials))
    rng = np.random.default_rng(0)
    rows = np.arange(trials)
    worst_z = worst_v = 0.0
    for n in range(steps):
        z = rng.normal(size=(trials, d)) * rng.uniform(0, 50, size=(trials, 1))
        mz, mv = stream.draw(z, n, rows)
        bound = 1.0 + np.linalg.norm(z, axis=-1)
        worst_z = max(worst_z, np.max(np.linalg.norm(mz, axis=-1) / bound))
        worst_v = max(worst_v, np.max(np.linalg.norm(mv, axis=-1) / bound))
    assert worst_z <= model.c_z and worst_v <= model.c_v
    # the bound is nearly attained, so the draws are not trivially small
    assert worst_z > 0.5 * model.c_z


@pytest.mark.parametrize("model", MODELS, ids=["uniform", "gaussian"])
def test_conditional_means_vanish(model):
    # bucket each draw by the sign of the previous one; every bucket must average to zero
    steps = 20_000
    z = np.zeros((1, 2))
    stream = NoiseStream(model, 2, [3])
    draws = np.array([stream.draw(z, n, np.array([0]))[0][0] for n in range(steps)])
    prev, cur = draws[:-1], draws[1:]
    for k in range(2):
        for sign in (prev[:, k] > 0, prev[:, k] <= 0):
            bucket = cur[sign]
            se = bucket.std(axis=0) / np.sqrt(len(bucket))
            assert np.all(np.abs(bucket.mean(axis=0)) <= 4.5 * se)


def test_stream_equals_pure_draws_in_any_order():
    model = MODELS[0]
    z = np.array([[1.0, 2.0], [0.0, -3.0], [5.0, 5.0]])
    stream = NoiseStream(model, 2, [4, 9, 11])
    for n in (5000, 3, 1023, 1024, 7):
        mz, mv = stream.draw(z, n, np.arange(3))
        for i, t in enumerate((4, 9, 11)):
            rz, rv = draw_noise(model, z[i], n, trial=t)
            np.testing.assert_array_equal(mz[i], rz)
            np.testing.assert_array_equal(mv[i], rv)


def test_streams_are_distinct():
    model = MODELS[1]
    a = draw_noise(model, [0.0, 0.0], 10, trial=0)
    b = draw_noise(model, [0.0, 0.0], 10, trial=1)
    c = draw_noise(NoiseModel.trunc_gaussian(0.3, 0.2, 0.5, seed=8), [0.0, 0.0], 10, trial=0)
    assert not np.array_equal(a[0], b[0]) and not np.array_equal(a[0], c[0])
    assert not np.array_equal(a[0] / 0.3, a[1] / 0.2)


def test_inactive_noise_reproduces_deterministic_run(toy2d):
    pair = SchedulePair(StepSchedule.constant(0.004), StepSchedule.constant(0.005, "fast"))
    kw = dict(lam=LambdaFunction(1e-4), damping=DampingFunction(1e-4))
    plain = simulate(toy2d, "lss", [12.0, -6.0], 200, pair, **kw)
    noisy = run_noisy(toy2d, "lss", [12.0, -6.0], pair, NoiseModel.none(), 200, **kw)
    np.testing.assert_array_equal(plain.z, noisy.z)
    np.testing.assert_array_equal(draw_noise(NoiseModel.none(), [1.0, 1.0], 3)[0], [0.0, 0.0])


def test_noisy_runs_are_reproducible(counterexample):
    model = NoiseModel.bounded_uniform(0.1, 0.1, seed=3)
    sched = StepSchedule.power(0.1, 0.7)
    a = run_noisy(counterexample, "simgd", [0.3, -0.3], sched, model, 500, trial=2)
    b = run_noisy(counterexample, "simgd", [0.3, -0.3], sched, model, 500, trial=2)
    c = run_noisy(counterexample, "simgd", [0.3, -0.3], sched, model, 500, trial=3)
    assert a.to_csv() == b.to_csv() and a.to_csv() != c.to_csv()
    assert a.seed == 3


def test_wilson_against_closed_form():
    k, n, zq = 37, 50, 1.959963984540054
    p = k / n
    centre = (p + zq * zq / (2 * n)) / (1 + zq * zq / n)
    half = zq / (1 + zq * zq / n) * np.sqrt(p * (1 - p) / n + zq * zq / (4 * n * n))
    np.testing.assert_allclose(wilson_interval(k, n), (centre - half, centre + half), rtol=1e-9)
    lo, hi = wilson_interval(200, 200)
    assert hi == pytest.approx(1.0) and lo == pytest.approx(0.98118, abs=1e-4)


def _saddle_lockin(tmp_path=None, threads=0, trials=30, rule="simgd"):
    game = Game.quadratic([[1.0, 0.0], [0.0, -1.0]], 1, 1)
    noise = NoiseModel.bounded_uniform(0.05, 0.05, seed=11)
    if rule == "simgd":
        sched = StepSchedule.power(1.0, 0.6)
        extra = {}
    else:
        sched = SchedulePair(StepSchedule.power(0.5, 0.7), StepSchedule.power(1.0, 0.6, "fast"))
        extra = dict(lam=LambdaFunction(1e-4), damping=DampingFunction(1e-4))
    path = None if tmp_path is None else tmp_path / "trials.csv"
    return estimate_lockin(game, rule, [0.0, 0.0], 0.2, 0.05, 100, 400, 500, sched,
                           noise=noise, trials=trials, threads=threads, batch_size=8,
                           csv_path=path, **extra), path


def test_lockin_serial_and_threaded_agree(tmp_path):
    serial, path = _saddle_lockin(tmp_path, threads=0)
    threaded, _ = _saddle_lockin(threads=3)
    assert serial.outcomes == threaded.outcomes
    assert serial.p_hat == 1.0
    lo, hi = serial.wilson_interval
    assert lo <= serial.p_hat <= hi
    rows = list(csv.DictReader(path.open()))
    assert len(rows) == 30 and rows[0].keys() == {"trial", "seed", "success", "max_dev_after_n1"}
    assert all(r["seed"] == "11" for r in rows)


def test_lockin_with_two_timescale_rule():
    est, _ = _saddle_lockin(rule="lss", trials=6)
    assert est.successes == 6
    assert all(w < 0.05 for _, _, w in est.outcomes)


@pytest.mark.parametrize("kw", [dict(epsilon=0.3), dict(n1=50), dict(trials=0)])
def test_lockin_argument_checks(kw):
    game = Game.quadratic([[1.0, 0.0], [0.0, -1.0]], 1, 1)
    args = dict(R0=0.2, epsilon=0.05, n0=100, n1=400, horizon=500, trials=5)
    args.update(kw)
    with pytest.raises(ConfigError):
        estimate_lockin(game, "simgd", [0.0, 0.0], schedules=StepSchedule.constant(0.1), **args)
    with pytest.raises(DimensionError):
        estimate_lockin(game, "simgd", [0.0, 0.0, 0.0], 0.2, 0.05, 1, 2, 3,
                        StepSchedule.constant(0.1))


def test_thread_count_environment(monkeypatch):
    monkeypatch.setenv("LSS_THREADS", "0")
    assert thread_count() == 0
    monkeypatch.setenv("LSS_THREADS", "4")
    assert thread_count() == 4
    monkeypatch.setenv("LSS_THREADS", "many")
    with pytest.raises(ConfigError):
        thread_count()
    monkeypatch.delenv("LSS_THREADS")
    assert thread_count() >= 1


@pytest.mark.parametrize("kw", [dict(kind="pink"), dict(kind="uniform", c_z=-1.0),
                                dict(kind="gaussian", sigma=0.0), dict(seed=-1)])
def test_bad_noise_models(kw):
    with pytest.raises(ConfigError):
        NoiseModel(**kw)


@pytest.mark.slow
def test_noisy_lss_settles_in_a_nash_basin():
    # steps start at n = 1000: at n = 0 the fast step 0.2 exceeds 2 / |J|^2 here
    game = Game.toy2d()
    z_star = np.array(TOY2D_DNE[2])
    pair = SchedulePair(StepSchedule.power(0.05, 0.8), StepSchedule.power(0.2, 0.6, "fast"))
    noise = NoiseModel.bounded_uniform(0.05, 0.05, seed=21)
    trials = 100
    offsets = np.random.default_rng(21).uniform(-0.3, 0.3, size=(trials, 2))
    trajs = simulate_many(game, "lss", z_star + offsets, 200_000, pair,
                          lam=LambdaFunction(1e-4), damping=DampingFunction(1e-4),
                          noise=NoiseStream(noise, 2, np.arange(trials)), stride=200_000,
                          diagnostics=False, n_start=1000)
    close = sum(np.linalg.norm(t.terminal - z_star) <= 0.01 for t in trajs)
    assert close >= 95


def test_noise_helps_lss_leave_the_non_nash_point(counterexample):
    trials = 100
    rng = np.random.default_rng(5)
    starts = rng.normal(size=(trials, 2))
    starts *= 0.01 * rng.uniform(size=(trials, 1)) ** 0.5 / np.linalg.norm(starts, axis=1,
                                                                           keepdims=True)
    noise = NoiseModel.bounded_uniform(0.05, 0.05, seed=5)
    pair = SchedulePair(StepSchedule.constant(0.004), StepSchedule.constant(0.005, "fast"))
    escaped = np.zeros(trials, dtype=bool)

    def monitor(n, z, rows):
        escaped[rows] |= np.linalg.norm(z, axis=1) > 0.5

    simulate_many(counterexample, "lss", starts, 30_000, pair, lam=LambdaFunction(1e-4),
                  damping=DampingFunction(1e-4), noise=NoiseStream(noise, 2, np.arange(trials)),
                  stride=30_000, diagnostics=False, monitor=monitor)
    assert escaped.sum() >= 95
