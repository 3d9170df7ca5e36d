"""Command-line front end: ``lss analyze | simulate | preset | lockin``.

Exit codes: 0 success, 1 usage or configuration error, 2 analysis warning
(a non-hyperbolic point, or a preset expectation that did not hold),
3 divergence.
"""

import argparse
import json
import subprocess
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .dynamics import (RULES, DampingFunction, LambdaFunction, SchedulePair, StepSchedule,
                       TimeVaryingLambda, integrate_ode_many, simulate_many)
from .equilibria import DNE, NON_HYPERBOLIC, NON_NASH_LASE, analyze, classify, find_critical_points
from .errors import ConfigError, DivergenceError, LSSError
from .game import eval_omega, game_hash, game_to_dict, load_game
from .presets import PRESETS, TOY2D_LOCKIN, get_preset
from .stochastic import NoiseModel, NoiseStream, estimate_lockin, thread_count
from .svg import PlotSpec, write_svg

EXIT_OK, EXIT_USAGE, EXIT_WARNING, EXIT_DIVERGED = 0, 1, 2, 3

ODE_RULES = ("ode-omega", "ode-h")

SIMULATE_DEFAULTS = {
    "game": "counterexample", "rule": "simgd", "init": None, "steps": 1000, "seed": 0,
    "a_c": 0.004, "a_alpha": 0.0, "b_c": 0.005, "b_alpha": 0.0, "xi1": 1e-4, "xi2": 1e-4,
    "lambda_co": 1.0, "lambda_sga": 1.0, "lambda1_xi": 1e-4, "x_slow": False, "dt": 0.01,
    "noise": "none", "c_z": 0.0, "c_v": 0.0, "sigma": 1.0, "stride": 1,
    "out": None, "svg": None, "json": None,
}

ANALYZE_DEFAULTS = {"game": "counterexample", "box": [-4.0, 4.0], "grid": 40,
                    "xi1": 1e-4, "xi2": 1e-4, "out": None}

LOCKIN_DEFAULTS = {
    "game": "toy2d", "rule": "lss", "z_star": None, "r0": 0.2, "epsilon": 0.05,
    "n0": 1000, "n1": 6000, "horizon": 8000, "trials": 200, "seed": 0,
    "a_c": 0.05, "a_alpha": 0.8, "b_c": 0.2, "b_alpha": 0.6, "xi1": 1e-4, "xi2": 1e-4,
    "lambda1_xi": 1e-4, "noise": "none", "c_z": 0.0, "c_v": 0.0, "sigma": 1.0,
    "v_radius": 1e-3, "out": None, "trials_csv": None,
}

LOCKIN_PRESETS = {"toy2d": TOY2D_LOCKIN, "toy2d-none": {**TOY2D_LOCKIN, "noise": "none"}}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_id():
    """``git describe`` of the source tree when available, else the version."""
    here = Path(__file__).resolve().parent
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty", "--tags"], cwd=here,
                             capture_output=True, text=True, timeout=5, check=True)
        desc = out.stdout.strip()
        if desc:
            return f"{__version__}+{desc}"
    except (OSError, subprocess.SubprocessError):
        pass
    return __version__


def _add_schedule_flags(p):
    p.add_argument("--a-c", type=float, help="slow step constant c in c/(1+n)^alpha")
    p.add_argument("--a-alpha", type=float, help="slow step exponent (0 = constant)")
    p.add_argument("--b-c", type=float, help="fast step constant")
    p.add_argument("--b-alpha", type=float, help="fast step exponent (0 = constant)")
    p.add_argument("--xi1", type=float, help="lambda(z) = xi1 (1 - exp(-|omega|^2))")
    p.add_argument("--xi2", type=float, help="damping g(u) = exp(-xi2 |u|^2)")
    p.add_argument("--lambda1-xi", type=float, help="scale of the TVLSS probe")


def _add_noise_flags(p):
    p.add_argument("--noise", choices=("none", "uniform", "gaussian"))
    p.add_argument("--c-z", type=float, help="bound constant for the z noise")
    p.add_argument("--c-v", type=float, help="bound constant for the v noise")
    p.add_argument("--sigma", type=float, help="Gaussian scale before truncation")
    p.add_argument("--seed", type=int)


def make_parser():
    parser = _Parser(prog="lss", description="Local symplectic surgery experiments.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", help="find and classify critical points")
    p.add_argument("--game", help="builtin name, JSON file or inline JSON")
    p.add_argument("--box", type=float, nargs=2, metavar=("LO", "HI"))
    p.add_argument("--grid", type=int, help="seeds per axis")
    p.add_argument("--xi1", type=float)
    p.add_argument("--xi2", type=float)
    p.add_argument("--out", help="write the JSON report here (default: stdout)")
    p.add_argument("--config", help="JSON file of option values")

    p = sub.add_parser("simulate", help="run one rule from one initial point")
    p.add_argument("--game")
    p.add_argument("--rule", help=f"one of {', '.join(RULES + ODE_RULES)}")
    p.add_argument("--init", type=float, nargs="+")
    p.add_argument("--steps", type=int)
    _add_schedule_flags(p)
    p.add_argument("--lambda-co", type=float)
    p.add_argument("--lambda-sga", type=float)
    p.add_argument("--x-slow", action="store_const", const=True,
                   help="2ts-simgd: put x on the slow timescale instead")
    p.add_argument("--dt", type=float, help="RK4 step for the ode rules")
    _add_noise_flags(p)
    p.add_argument("--stride", type=int, help="record every k-th iterate")
    p.add_argument("--out", help="trajectory CSV")
    p.add_argument("--svg", help="SVG plot (2-D games only)")
    p.add_argument("--json", help="trajectory JSON with metadata")
    p.add_argument("--config", help="JSON file of option values (e.g. a config echo)")

    p = sub.add_parser("preset", help="run a named experiment preset")
    p.add_argument("name", help=f"one of {', '.join(PRESETS)}")
    p.add_argument("--out", default="preset_out", help="output directory")

    p = sub.add_parser("lockin", help="Monte Carlo lock-in probability")
    p.add_argument("--preset", help=f"defaults from one of {', '.join(LOCKIN_PRESETS)}")
    p.add_argument("--game")
    p.add_argument("--rule")
    p.add_argument("--z-star", type=float, nargs="+")
    p.add_argument("--r0", type=float)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--n0", type=int)
    p.add_argument("--n1", type=int)
    p.add_argument("--horizon", type=int)
    p.add_argument("--trials", type=int)
    p.add_argument("--v-radius", type=float, help="v starts within this of v*(z)")
    _add_schedule_flags(p)
    _add_noise_flags(p)
    p.add_argument("--out", help="JSON result (default: stdout)")
    p.add_argument("--trials-csv", help="per-trial outcomes as CSV")
    p.add_argument("--config", help="JSON file of option values")
    return parser


def _resolve(args, defaults, *layers):
    cfg = dict(defaults)
    for layer in layers:
        cfg.update({k: v for k, v in layer.items() if k in defaults})
    if getattr(args, "config", None):
        try:
            with open(args.config, encoding="utf-8") as fh:
                loaded = json.load(fh)
        except (OSError, json.JSONDecodeError) as err:
            raise ConfigError(f"cannot read config {args.config}: {err}") from err
        loaded = loaded.get("config", loaded)
        unknown = sorted(set(loaded) - set(defaults))
        if unknown:
            raise ConfigError(f"unknown config field(s): {', '.join(unknown)}")
        cfg.update(loaded)
    cfg.update({k: v for k, v in vars(args).items() if k in defaults and v is not None})
    return cfg


def _schedule(c, alpha, role):
    if alpha == 0:
        return StepSchedule.constant(c, role)
    return StepSchedule.power(c, alpha, role)


def _schedules(cfg, rule):
    slow = _schedule(cfg["a_c"], cfg["a_alpha"], "slow")
    if rule in ("2ts-simgd", "lss", "tvlss"):
        return SchedulePair(slow, _schedule(cfg["b_c"], cfg["b_alpha"], "fast"))
    return slow


def _noise(cfg):
    kind = cfg["noise"]
    if kind == "none":
        return None
    if kind == "uniform":
        return NoiseModel.bounded_uniform(cfg["c_z"], cfg["c_v"], cfg["seed"])
    return NoiseModel.trunc_gaussian(cfg["c_z"], cfg["c_v"], cfg["sigma"], cfg["seed"])


def _dump(obj, path):
    text = json.dumps(obj, indent=2, sort_keys=True, ensure_ascii=False) + "\n"
    if path is None:
        sys.stdout.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8")


def cmd_analyze(args):
    cfg = _resolve(args, ANALYZE_DEFAULTS)
    game = load_game(cfg["game"])
    lo, hi = cfg["box"]
    if lo > hi:
        raise ConfigError(f"empty box: lo={lo} > hi={hi}")
    lam, dmp = LambdaFunction(cfg["xi1"]), DampingFunction(cfg["xi2"])
    found, reports = analyze(game, (lo, hi), cfg["grid"], lam, dmp)
    _dump([r.to_dict() for r in reports], cfg["out"])
    if any(r.classification == NON_HYPERBOLIC for r in reports):
        print("warning: non-hyperbolic critical point found", file=sys.stderr)
        return EXIT_WARNING
    return EXIT_OK


def _known_points(game, box, grid):
    found = find_critical_points(game, box, grid)
    return [(p.coords, classify(game, p, with_h=False).classification) for p in found]


def _label_terminal(game, z, known, tol=1e-4):
    """Classification of the critical point a run ended at, or why there is none."""
    w = float(np.linalg.norm(eval_omega(game, z)))
    if w > 1e-6:
        return "not_converged", w
    for coords, label in known:
        if np.linalg.norm(np.asarray(coords) - z) <= tol:
            return label, w
    return "unlisted_critical_point", w


def _svg_limits(game, trajs, known):
    pts = [t.z for t in trajs] + [np.array([c for c, _ in known])] if known else [t.z for t in trajs]
    allp = np.vstack([p for p in pts if len(p)])
    lo, hi = allp.min(axis=0), allp.max(axis=0)
    span = np.maximum(hi - lo, 1e-3)
    lo, hi = lo - 0.05 * span, hi + 0.05 * span
    return (float(lo[0]), float(hi[0])), (float(lo[1]), float(hi[1]))


def cmd_simulate(args):
    cfg = _resolve(args, SIMULATE_DEFAULTS)
    game = load_game(cfg["game"])
    rule = cfg["rule"]
    if rule not in RULES + ODE_RULES:
        raise ConfigError(f"unknown rule {rule!r}; expected one of {', '.join(RULES + ODE_RULES)}")
    if cfg["init"] is None:
        raise ConfigError("--init is required")
    z0 = np.asarray(cfg["init"], dtype=float)
    if z0.shape != (game.d,):
        raise ConfigError(f"--init has {z0.size} values, game dimension is {game.d}")
    if cfg["steps"] < 0:
        raise ConfigError("--steps must be non-negative")
    lam, dmp = LambdaFunction(cfg["xi1"]), DampingFunction(cfg["xi2"])
    if rule in ODE_RULES:
        traj = integrate_ode_many(game, z0[None], rule[4:], cfg["dt"], cfg["steps"], lam, dmp,
                                  stride=cfg["stride"])[0]
    else:
        noise = _noise(cfg)
        stream = NoiseStream(noise, game.d, [0]) if noise is not None else None
        traj = simulate_many(
            game, rule, z0[None], cfg["steps"], _schedules(cfg, rule), lam=lam, damping=dmp,
            lambda_co=cfg["lambda_co"], lambda_sga=cfg["lambda_sga"], x_fast=not cfg["x_slow"],
            lam1=TimeVaryingLambda(cfg["lambda1_xi"]), noise=stream, stride=cfg["stride"],
            seed=cfg["seed"])[0]
    traj.meta = {**traj.meta, "build_id": build_id()}
    if cfg["out"]:
        traj.to_csv(cfg["out"])
        _dump({"config": cfg, "build_id": build_id()}, cfg["out"] + ".config.json")
    if cfg["json"]:
        traj.to_json(cfg["json"])
    if cfg["svg"]:
        if game.d != 2:
            raise ConfigError("SVG output needs a 2-D game")
        xlim, ylim = _svg_limits(game, [traj], [])
        write_svg(PlotSpec(xlim, ylim, path=cfg["svg"], title=rule), {rule: traj})
    summary = {"rule": rule, "steps": cfg["steps"], "terminal": traj.terminal.tolist(),
               "omega_norm": float(np.linalg.norm(eval_omega(game, traj.terminal))),
               "diverged_at": traj.diverged_at}
    print(json.dumps(summary))
    if traj.diverged_at is not None:
        print(f"diverged at n={traj.diverged_at}", file=sys.stderr)
        return EXIT_DIVERGED
    return EXIT_OK


def _run_spec(preset, spec, lam, dmp):
    inits = np.array(preset.inits)
    if spec.is_ode:
        return integrate_ode_many(preset.game, inits, spec.rule[4:], spec.dt, spec.n_steps, lam,
                                  dmp, stride=spec.stride, stop_tol=spec.stop_tol)
    params = dict(spec.params)
    lam1 = TimeVaryingLambda(params.pop("lambda1_xi", 1e-4))
    return simulate_many(preset.game, spec.rule, inits, spec.n_steps, spec.schedules,
                         lam=lam, damping=dmp, lam1=lam1, stride=spec.stride,
                         stop_tol=spec.stop_tol, **params)


def _expectations(preset, results):
    """The outcome table each preset is expected to reproduce."""
    by_label = {}
    for r in results:
        by_label.setdefault(r["label"], []).append(r)
    exp = {}
    if preset.name == "toy2d-figure1":
        exp["lss_ode_only_dne"] = all(r["classification"] == DNE for r in by_label["lss-ode"])
        exp["simgd_ode_reaches_non_nash"] = any(
            r["classification"] == NON_NASH_LASE for r in by_label["simgd-ode"])
    elif preset.name == "toy2d-figure2":
        for label in ("lss", "tvlss", "lss-ode"):
            exp[f"{label.replace('-', '_')}_only_dne"] = all(
                r["classification"] == DNE for r in by_label[label])
        ends = {lab: {tuple(np.round(r["terminal"], 6)) for r in by_label[lab]}
                for lab in ("lss", "tvlss")}
        exp["tvlss_same_dne_set_as_lss"] = ends["lss"] == ends["tvlss"]
        exp["lss_v_tracking"] = all(r["v_gap_final_half_max"] < 1e-3 for r in by_label["lss"])
    elif preset.name == "counterexample-appB":
        for label, rs in by_label.items():
            if label == "lss":
                exp["lss_escapes_half_ball"] = all(np.linalg.norm(r["terminal"]) > 0.5 for r in rs)
            else:
                exp[f"{label}_to_origin"] = all(
                    np.linalg.norm(r["terminal"]) <= 1e-3 and r["classification"] == NON_NASH_LASE
                    for r in rs)
    return exp


def run_preset(name, out_dir, threads=None):
    """Run a preset, write per-run CSV/SVG files and return ``(summary, exit_code)``."""
    preset = get_preset(name)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    lam, dmp = LambdaFunction(preset.xi1), DampingFunction(preset.xi2)
    known = _known_points(preset.game, preset.box, preset.grid)
    threads = thread_count() if threads is None else threads

    def job(spec):
        return _run_spec(preset, spec, lam, dmp)

    if threads == 0:
        all_trajs = [job(s) for s in preset.runs]
    else:
        with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
            all_trajs = list(pool.map(job, preset.runs))

    results, diverged = [], False
    for spec, trajs in zip(preset.runs, all_trajs):
        for k, traj in enumerate(trajs):
            stem = f"{spec.label}_init{k}"
            traj.to_csv(out / f"{stem}.csv")
            xlim, ylim = _svg_limits(preset.game, [traj], known)
            write_svg(PlotSpec(xlim, ylim, path=str(out / f"{stem}.svg"),
                               title=f"{preset.name}: {spec.label}"), {spec.label: traj}, known)
            label, wn = _label_terminal(preset.game, traj.terminal, known)
            rec = {"label": spec.label, "rule": spec.rule, "init": list(preset.inits[k]),
                   "terminal": traj.terminal.tolist(), "omega_norm": wn,
                   "classification": label, "diverged_at": traj.diverged_at,
                   "converged_at": traj.meta.get("converged_at"),
                   "csv": f"{stem}.csv", "svg": f"{stem}.svg"}
            if traj.v_gap is not None:
                half = traj.v_gap[len(traj.v_gap) // 2:]
                rec["v_gap_final_half_max"] = float(np.max(half))
            diverged |= traj.diverged_at is not None
            results.append(rec)
        if preset.game.d == 2:
            xlim, ylim = _svg_limits(preset.game, trajs, known)
            write_svg(PlotSpec(xlim, ylim, path=str(out / f"{spec.label}_all.svg"),
                               title=f"{preset.name}: {spec.label}"),
                      {f"init{k}": t for k, t in enumerate(trajs)}, known)
    expectations = _expectations(preset, results)
    summary = {
        "preset": preset.name, "description": preset.description, "build_id": build_id(),
        "game": game_to_dict(preset.game), "game_hash": game_hash(preset.game),
        "critical_points": [{"z": [float(c) for c in z], "classification": lab}
                            for z, lab in known],
        "runs": results, "expectations": expectations,
        "all_expectations_met": all(expectations.values()),
    }
    _dump(summary, out / "summary.json")
    if diverged:
        return summary, EXIT_DIVERGED
    return summary, EXIT_OK if summary["all_expectations_met"] else EXIT_WARNING


def cmd_preset(args):
    summary, code = run_preset(args.name, args.out)
    print(json.dumps({"preset": summary["preset"], "expectations": summary["expectations"],
                      "summary": str(Path(args.out) / "summary.json")}))
    return code


def cmd_lockin(args):
    layers = []
    if args.preset is not None:
        if args.preset not in LOCKIN_PRESETS:
            raise ConfigError(f"unknown lockin preset {args.preset!r}; "
                              f"valid names: {', '.join(LOCKIN_PRESETS)}")
        layers.append(LOCKIN_PRESETS[args.preset])
    cfg = _resolve(args, LOCKIN_DEFAULTS, *layers)
    game = load_game(cfg["game"])
    if cfg["z_star"] is None:
        raise ConfigError("--z-star is required")
    z_star = np.asarray(cfg["z_star"], dtype=float)
    if z_star.shape != (game.d,):
        raise ConfigError(f"--z-star has {z_star.size} values, game dimension is {game.d}")
    if not 0 < cfg["epsilon"] < cfg["r0"]:
        raise ConfigError("need 0 < epsilon < r0")
    lam, dmp = LambdaFunction(cfg["xi1"]), DampingFunction(cfg["xi2"])
    report = classify(game, z_star, lam, dmp, with_h=False)
    if report.classification != DNE:
        raise ConfigError(f"z_star is classified {report.classification}, not DNE")
    extra = {}
    if cfg["rule"] == "tvlss":
        extra["lam1"] = TimeVaryingLambda(cfg["lambda1_xi"])
    est = estimate_lockin(game, cfg["rule"], z_star, cfg["r0"], cfg["epsilon"], cfg["n0"],
                          cfg["n1"], cfg["horizon"], _schedules(cfg, cfg["rule"]),
                          noise=_noise(cfg), trials=cfg["trials"], lam=lam, damping=dmp,
                          seed=cfg["seed"], v_radius=cfg["v_radius"],
                          csv_path=cfg["trials_csv"], **extra)
    doc = {"config": cfg, "build_id": build_id(), "trials": est.trials,
           "successes": est.successes, "p_hat": est.p_hat,
           "wilson": list(est.wilson_interval), "wall_seconds": est.wall_seconds}
    _dump(doc, cfg["out"])
    return EXIT_OK


COMMANDS = {"analyze": cmd_analyze, "simulate": cmd_simulate, "preset": cmd_preset,
            "lockin": cmd_lockin}


def main(argv=None):
    parser = make_parser()
    try:
        args = parser.parse_args(argv)
        return COMMANDS[args.command](args)
    except UsageError as err:
        print(f"usage error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except DivergenceError as err:
        print(f"diverged: {err}", file=sys.stderr)
        return EXIT_DIVERGED
    except (LSSError, ValueError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
