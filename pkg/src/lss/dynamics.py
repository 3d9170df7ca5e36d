"""Step rules, schedules and integrators for zero-sum game dynamics.

Single-timescale rules (simGD, consensus optimisation, SGA) and the
two-timescale rules (two-timescale simGD, LSS, TVLSS) are pure functions of
the current state. Every function accepts a batch of states stacked along
leading axes; rows never interact, so a row computed inside a batch is
bit-identical to the same row computed alone.
"""

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import autodiff as ad
from .errors import ConfigError, DimensionError, DivergenceError, NumericalError, SingularityError
from .game import eval_omega, game_hash, omega_and_jacobian

__all__ = [
    "StepSchedule", "SchedulePair", "LambdaFunction", "DampingFunction",
    "TimeVaryingLambda", "TwoTimescaleState", "Trajectory", "RULES",
    "simgd_step", "two_timescale_simgd_step", "consensus_step", "sga_step",
    "lss_step", "tvlss_step", "limiting_h", "adjustment", "v_star",
    "integrate_ode", "integrate_ode_many", "simulate", "simulate_many",
]

DIVERGENCE_RADIUS = 1e6
RULES = ("simgd", "2ts-simgd", "co", "sga", "lss", "tvlss")
TWO_TIMESCALE = ("2ts-simgd", "lss", "tvlss")

_ROTATION = np.array([[0.0, -1.0], [1.0, 0.0]])


@dataclass(frozen=True)
class StepSchedule:
    """``gamma_n = c`` (constant) or ``gamma_n = c / (1 + n)**alpha`` (power)."""

    kind: str
    c: float
    alpha: float = 0.0
    role: str = "slow"

    def __post_init__(self):
        if self.kind not in ("constant", "power"):
            raise ConfigError(f"unknown schedule kind {self.kind!r}")
        if not self.c > 0:
            raise ConfigError("step-size constant must be positive")
        if self.kind == "power" and not self.alpha > 0:
            raise ConfigError("power schedules need alpha > 0")
        if self.role not in ("slow", "fast"):
            raise ConfigError("role must be 'slow' or 'fast'")

    @classmethod
    def constant(cls, gamma, role="slow"):
        return cls("constant", float(gamma), 0.0, role)

    @classmethod
    def power(cls, c, alpha, role="slow"):
        return cls("power", float(c), float(alpha), role)

    def __call__(self, n):
        if self.kind == "constant":
            return self.c
        return self.c / (1.0 + n) ** self.alpha

    @property
    def vanishes(self):
        return self.kind == "power"

    @property
    def sum_diverges(self):
        return self.kind == "constant" or self.alpha <= 1.0

    @property
    def square_summable(self):
        return self.kind == "power" and self.alpha > 0.5

    @property
    def robbins_monro(self):
        """All three step-size conditions of the stochastic-approximation theory."""
        return self.vanishes and self.sum_diverges and self.square_summable

    def describe(self):
        return {"kind": self.kind, "c": self.c, "alpha": self.alpha, "role": self.role}


@dataclass(frozen=True)
class SchedulePair:
    """Slow schedule ``a_n`` (for z) and fast schedule ``b_n`` (for v)."""

    slow: StepSchedule
    fast: StepSchedule

    @property
    def ratio_vanishes(self):
        """Whether ``a_n / b_n -> 0``, decided from the closed forms."""
        a, b = self.slow, self.fast
        if a.kind == "constant":
            return False
        if b.kind == "constant":
            return True
        return a.alpha > b.alpha

    @property
    def ratio_violation(self):
        return not self.ratio_vanishes

    def __call__(self, n):
        return self.slow(n), self.fast(n)

    def describe(self):
        return {"slow": self.slow.describe(), "fast": self.fast.describe(),
                "ratio_violation": self.ratio_violation}


def _sqnorm(v):
    return np.sum(np.square(v), axis=-1)


@dataclass(frozen=True)
class LambdaFunction:
    """``lambda(z) = xi1 * (1 - exp(-|omega(z)|^2))``, evaluated from ``omega``."""

    xi1: float

    def __post_init__(self):
        if not self.xi1 > 0:
            raise ConfigError("xi1 must be positive")

    def __call__(self, omega):
        return -self.xi1 * np.expm1(-_sqnorm(omega))


@dataclass(frozen=True)
class DampingFunction:
    """``g(u) = exp(-xi2 * |u|^2)`` applied to the adjustment vector."""

    xi2: float

    def __post_init__(self):
        if not self.xi2 >= 0:
            raise ConfigError("xi2 must be non-negative")

    def __call__(self, u):
        return np.exp(-self.xi2 * _sqnorm(u))


@dataclass(frozen=True)
class TimeVaryingLambda:
    """``lambda_1(z) = xi * (1 - exp(-|omega|^2))**2``.

    Squaring keeps the value in ``[0, xi]``, zero exactly at critical points,
    and makes its z-gradient vanish there too.
    """

    xi: float

    def __post_init__(self):
        if not self.xi > 0:
            raise ConfigError("the time-varying lambda scale must be positive")

    def __call__(self, omega):
        return self.xi * np.square(np.expm1(-_sqnorm(omega)))


@dataclass(frozen=True)
class TwoTimescaleState:
    """Slow iterate ``z``, fast iterate ``v``, optional TVLSS clock ``theta``."""

    z: np.ndarray
    v: np.ndarray
    n: int = 0
    theta: Optional[np.ndarray] = None

    def __post_init__(self):
        z = np.asarray(getattr(self.z, "coords", self.z), dtype=float)
        v = np.asarray(self.v, dtype=float)
        if z.shape != v.shape:
            raise DimensionError("v must have the same shape as z")
        if self.n < 0:
            raise ConfigError("iteration counter must be non-negative")
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "v", v)
        if self.theta is not None:
            theta = np.asarray(self.theta, dtype=float)
            if theta.shape[-1] != 2:
                raise DimensionError("theta is a 2-vector")
            object.__setattr__(self, "theta", theta)


def _finite_or_diverge(new, old, n, rule):
    if not np.all(np.isfinite(new)):
        raise DivergenceError(f"{rule} produced a non-finite iterate at n={n}", n, old)
    return new


def _vec(z):
    return np.asarray(getattr(z, "coords", z), dtype=float)


# -- single-timescale rules ---------------------------------------------------

def simgd_step(game, z, gamma, noise=None):
    """``z - gamma * (omega(z) + noise)``."""
    z = _vec(z)
    direction = eval_omega(game, z)
    if noise is not None:
        direction = direction + noise
    return _finite_or_diverge(z - gamma * direction, z, None, "simgd")


def two_timescale_simgd_step(game, z, a_n, b_n, x_fast=True, noise=None):
    """simGD with the players on different timescales.

    With ``x_fast`` the minimising player moves with the fast step ``b_n``
    and the maximising player with the slow step ``a_n``; ``x_fast=False``
    swaps them.
    """
    z = _vec(z)
    direction = eval_omega(game, z)
    if noise is not None:
        direction = direction + noise
    step_x, step_y = (b_n, a_n) if x_fast else (a_n, b_n)
    steps = np.where(np.arange(game.d) < game.dx, step_x, step_y)
    return _finite_or_diverge(z - steps * direction, z, None, "2ts-simgd")


def consensus_step(game, z, gamma, lambda_co, noise=None):
    """Consensus optimisation: ``z - gamma * (omega + lambda J^T omega)``."""
    z = _vec(z)
    w = eval_omega(game, z)
    direction = w + lambda_co * ad.jt_vec(game, z, w)
    if noise is not None:
        direction = direction + noise
    return _finite_or_diverge(z - gamma * direction, z, None, "co")


def sga_step(game, z, gamma, lambda_sga, noise=None):
    """Symplectic gradient adjustment: ``omega + (lambda/2) (J - J^T)^T omega``."""
    z = _vec(z)
    w = eval_omega(game, z)
    rot = ad.jt_vec(game, z, w) - ad.j_vec_via_two_jtv(game, z, w)
    direction = w + 0.5 * lambda_sga * rot
    if noise is not None:
        direction = direction + noise
    return _finite_or_diverge(z - gamma * direction, z, None, "sga")


# -- limiting flow --------------------------------------------------------------

def _regularised_solve(game, z, w, jac, lam):
    """Solve ``(J^T J + lam I) v = J^T w`` row by row, refusing singular systems."""
    jt = np.swapaxes(jac, -1, -2)
    lam = np.asarray(lam, dtype=float)
    sv = np.linalg.svd(jac, compute_uv=False)
    smin, smax = sv[..., -1], sv[..., 0]
    lo = smin ** 2 + lam
    if np.any(~(lo > 1e-14 * (smax ** 2 + lam))):
        bad = np.argmin(lo / (smax ** 2 + lam + 1e-300)) if np.ndim(lo) else None
        where = z if bad is None else np.reshape(z, (-1, game.d))[bad]
        raise SingularityError("J^T J + lambda I is singular", z=where,
                               min_singular_value=float(np.min(smin)))
    a = jt @ jac + lam[..., None, None] * np.eye(game.d)
    rhs = (jt @ w[..., None])[..., 0]
    return np.linalg.solve(a, rhs[..., None])[..., 0]


def v_star(game, z, lam):
    """Fast-timescale target ``(J^T J + lambda I)^{-1} J^T omega``."""
    z = _vec(z)
    w, jac = omega_and_jacobian(game, z)
    return _regularised_solve(game, z, w, jac, lam(w))


def adjustment(game, z, lam):
    """``u = J^T (J^T J + lambda I)^{-1} J^T omega`` by dense solve."""
    z = _vec(z)
    w, jac = omega_and_jacobian(game, z)
    v = _regularised_solve(game, z, w, jac, lam(w))
    return (np.swapaxes(jac, -1, -2) @ v[..., None])[..., 0]


def limiting_h(game, z, lam, damping):
    """The surgically adjusted field ``h(z) = (omega + g(u) u) / 2``.

    ``u`` is the dense adjustment from :func:`adjustment`. With the 1/2
    factor the Jacobian of ``h`` at a critical point equals ``S(z)``.
    """
    z = _vec(z)
    w, jac = omega_and_jacobian(game, z)
    v = _regularised_solve(game, z, w, jac, lam(w))
    u = (np.swapaxes(jac, -1, -2) @ v[..., None])[..., 0]
    return 0.5 * (w + damping(u)[..., None] * u)


# -- two-timescale rules --------------------------------------------------------

def _lss_directions(game, z, v, lam, damping):
    w, jtv = ad.grad_and_jt_vec(game, z, v)
    z_dir = w + damping(jtv)[..., None] * jtv
    jv = ad.j_vec_via_two_jtv(game, z, v)
    # J^T J v - J^T omega in one transpose product
    v_dir = ad.jt_vec(game, z, jv - w) + lam(w)[..., None] * v
    return w, z_dir, v_dir


def lss_step(game, state, a_n, b_n, lam, damping, noise=None):
    """One Local Symplectic Surgery update using only transpose products.

    ``z' = z - a_n (omega + g(J^T v) J^T v + M_z)`` and
    ``v' = v - b_n (J^T J v - J^T omega + lambda(z) v + M_v)``.
    """
    z, v = state.z, state.v
    _, z_dir, v_dir = _lss_directions(game, z, v, lam, damping)
    if noise is not None:
        z_dir = z_dir + noise[0]
        v_dir = v_dir + noise[1]
    z_new = _finite_or_diverge(z - a_n * z_dir, state, state.n, "lss")
    v_new = _finite_or_diverge(v - b_n * v_dir, state, state.n, "lss")
    return TwoTimescaleState(z_new, v_new, state.n + 1, state.theta)


def tvlss_step(game, state, a_n, b_n, lam, lam1, damping, u0, noise=None):
    """Time-varying LSS: adds ``lambda_1(z) * theta_1 * u0`` to the z drift.

    ``theta`` follows an Euler step of the rotation ``theta' = R theta`` with
    the slow step, so ``theta_1`` plays the role of ``cos(t)``.
    """
    if state.theta is None:
        raise ConfigError("tvlss needs a state with theta")
    z, v, theta = state.z, state.v, state.theta
    w, z_dir, v_dir = _lss_directions(game, z, v, lam, damping)
    probe = (lam1(w) * theta[..., 0])[..., None] * np.asarray(u0, dtype=float)
    z_dir = z_dir + probe
    if noise is not None:
        z_dir = z_dir + noise[0]
        v_dir = v_dir + noise[1]
    theta_new = theta + a_n * (theta @ _ROTATION.T)
    z_new = _finite_or_diverge(z - a_n * z_dir, state, state.n, "tvlss")
    v_new = _finite_or_diverge(v - b_n * v_dir, state, state.n, "tvlss")
    return TwoTimescaleState(z_new, v_new, state.n + 1, theta_new)


# -- trajectories ---------------------------------------------------------------

@dataclass
class Trajectory:
    """Recorded iterates of one run plus the metadata needed to repeat it."""

    rule: str
    n: np.ndarray
    z: np.ndarray
    dx: int
    dy: int
    v: Optional[np.ndarray] = None
    omega_norm: Optional[np.ndarray] = None
    v_gap: Optional[np.ndarray] = None
    schedule: dict = field(default_factory=dict)
    seed: Optional[int] = None
    game_hash: str = ""
    diverged_at: Optional[int] = None
    meta: dict = field(default_factory=dict)

    @property
    def terminal(self):
        return self.z[-1]

    def header(self):
        d = self.z.shape[1]
        cols = ["n"] + [f"z_{i}" for i in range(d)]
        if self.v is not None:
            cols += [f"v_{i}" for i in range(d)]
        if self.omega_norm is not None:
            cols.append("omega_norm")
        if self.v_gap is not None:
            cols.append("v_gap")
        return cols

    def rows(self):
        blocks = [self.z]
        if self.v is not None:
            blocks.append(self.v)
        if self.omega_norm is not None:
            blocks.append(self.omega_norm[:, None])
        if self.v_gap is not None:
            blocks.append(self.v_gap[:, None])
        return np.hstack(blocks)

    def to_csv(self, path=None):
        """CSV text with 17 significant digits; written to ``path`` if given."""
        buf = io.StringIO()
        buf.write(",".join(self.header()) + "\n")
        for n, row in zip(self.n, self.rows()):
            buf.write(str(int(n)) + "," + ",".join(format(x, ".17g") for x in row) + "\n")
        if self.diverged_at is not None:
            buf.write(f"# DIVERGED at n={self.diverged_at}\n")
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
        return text

    def metadata(self):
        return {"rule": self.rule, "dx": self.dx, "dy": self.dy,
                "schedule": self.schedule, "seed": self.seed,
                "game_hash": self.game_hash, "diverged_at": self.diverged_at,
                "n_records": int(len(self.n)), **self.meta}

    def to_json(self, path=None):
        doc = {"metadata": self.metadata(), "columns": self.header(),
               "n": [int(k) for k in self.n], "data": self.rows().tolist()}
        text = json.dumps(doc, indent=1, sort_keys=True)
        if path is not None:
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(text)
        return text

    @classmethod
    def from_csv(cls, text, rule="", dx=1, dy=1):
        """Parse CSV produced by :meth:`to_csv` (divergence comment included)."""
        lines = text.splitlines()
        diverged = None
        if lines and lines[-1].startswith("# DIVERGED at n="):
            diverged = int(lines.pop().split("=")[1])
        reader = csv.reader(lines)
        header = next(reader)
        data = np.array([[float(x) for x in row] for row in reader], dtype=float)
        data = data.reshape(-1, len(header))
        d = sum(1 for h in header if h.startswith("z_"))
        col = {h: i for i, h in enumerate(header)}
        v = data[:, col["v_0"]:col["v_0"] + d] if "v_0" in col else None
        return cls(rule=rule, n=data[:, 0].astype(int), z=data[:, 1:1 + d], dx=dx, dy=dy,
                   v=v, omega_norm=data[:, col["omega_norm"]] if "omega_norm" in col else None,
                   v_gap=data[:, col["v_gap"]] if "v_gap" in col else None,
                   diverged_at=diverged)


class _Recorder:
    """Collects strided snapshots for every row of a batched run."""

    def __init__(self, n_rows, stride):
        self.stride = max(1, int(stride))
        self.rows = [[] for _ in range(n_rows)]

    def push(self, n, idx, z, v, omega_norm, v_gap):
        for k, i in enumerate(idx):
            self.rows[i].append((n, z[k].copy(), None if v is None else v[k].copy(),
                                 None if omega_norm is None else float(omega_norm[k]),
                                 None if v_gap is None else float(v_gap[k])))

    def trajectory(self, i, **kw):
        recs = self.rows[i]
        n = np.array([r[0] for r in recs], dtype=int)
        z = np.array([r[1] for r in recs])
        v = np.array([r[2] for r in recs]) if recs[0][2] is not None else None
        om = np.array([r[3] for r in recs]) if recs[0][3] is not None else None
        gap = np.array([r[4] for r in recs]) if recs[0][4] is not None else None
        return Trajectory(n=n, z=z, v=v, omega_norm=om, v_gap=gap, **kw)


def _diagnostics(game, z, v, lam, with_gap):
    w = eval_omega(game, z)
    om = np.sqrt(_sqnorm(w))
    gap = None
    if with_gap:
        try:
            gap = np.sqrt(_sqnorm(v - v_star(game, z, lam)))
        except SingularityError:
            gap = np.full(z.shape[0], np.nan)
    return om, gap


def _run_batched(game, z0, n_steps, step, *, v0=None, theta0=None, stride=1,
                 diagnostics=True, lam=None, n_start=0, radius=DIVERGENCE_RADIUS,
                 rule="", traj_kw=None, stop_tol=None, check_every=100, monitor=None):
    """Drive ``step(n, z, v, theta, rows) -> (z, v, theta)`` over a batch of rows.

    Rows that leave the ``radius`` ball or turn non-finite are frozen and
    flagged; the remaining rows keep going. With ``stop_tol`` set, a row is
    also retired (and its final state recorded) once ``|omega(z)|`` drops to
    ``stop_tol``, checked every ``check_every`` steps. ``monitor(n, z, rows)``
    sees the active rows after every step.
    """
    z = np.array(z0, dtype=float, ndmin=2)
    n_rows = z.shape[0]
    v = None if v0 is None else np.array(np.broadcast_to(v0, z.shape), dtype=float)
    theta = None if theta0 is None else np.array(
        np.broadcast_to(theta0, (n_rows, 2)), dtype=float)
    active = np.arange(n_rows)
    diverged = [None] * n_rows
    stopped = [None] * n_rows
    rec = _Recorder(n_rows, stride)
    with_gap = diagnostics and v is not None and lam is not None

    def snapshot(n, idx):
        if diagnostics:
            om, gap = _diagnostics(game, z[idx], None if v is None else v[idx], lam, with_gap)
        else:
            om = gap = None
        rec.push(n, idx, z[idx], None if v is None else v[idx], om, gap)

    snapshot(n_start, active)
    for k in range(n_steps):
        n = n_start + k
        if active.size == 0:
            break
        sub = (z[active], None if v is None else v[active],
               None if theta is None else theta[active])
        try:
            z_new, v_new, th_new = step(n, *sub, active)
            bad = _bad_rows(z_new, v_new, radius)
        except (NumericalError, DivergenceError):
            z_new, v_new, th_new, bad = _rowwise(step, n, sub, active, radius)
        z[active] = z_new
        if v is not None:
            v[active] = v_new
        if theta is not None:
            theta[active] = th_new
        if bad.any():
            for i in active[bad]:
                diverged[i] = n + 1
            # keep the last finite state for diverged rows
            z[active[bad]] = sub[0][bad]
            if v is not None:
                v[active[bad]] = sub[1][bad]
            active = active[~bad]
        if monitor is not None and active.size:
            monitor(n + 1, z[active], active)
        last = k == n_steps - 1
        if active.size and ((k + 1) % rec.stride == 0 or last):
            snapshot(n + 1, active)
        if stop_tol is not None and active.size and not last and (k + 1) % check_every == 0:
            done = np.sqrt(_sqnorm(eval_omega(game, z[active]))) <= stop_tol
            if done.any():
                if (k + 1) % rec.stride:
                    snapshot(n + 1, active[done])
                for i in active[done]:
                    stopped[i] = n + 1
                active = active[~done]
    kw = dict(traj_kw or {})
    out = []
    for i in range(n_rows):
        t = rec.trajectory(i, rule=rule, dx=game.dx, dy=game.dy, game_hash=game_hash(game),
                           diverged_at=diverged[i], **kw)
        if stop_tol is not None:
            t.meta = {**t.meta, "stop_tol": stop_tol, "converged_at": stopped[i]}
        out.append(t)
    return out


def _bad_rows(z, v, radius):
    size = _sqnorm(z)
    if v is not None:
        # a non-finite v poisons the sum and fails the test below as well
        size = size + 0.0 * _sqnorm(v)
    return ~(size <= radius * radius)


def _rowwise(step, n, sub, active, radius):
    """Re-run one step row by row so a single bad row cannot sink the batch."""
    zs, vs, ts, bad = [], [], [], []
    for k in range(active.size):
        one = tuple(None if a is None else a[k:k + 1] for a in sub)
        try:
            z1, v1, t1 = step(n, *one, active[k:k + 1])
            b = bool(_bad_rows(z1, v1, radius)[0])
        except (NumericalError, DivergenceError):
            z1, v1, t1, b = one[0], one[1], one[2], True
        zs.append(z1[0])
        vs.append(None if v1 is None else v1[0])
        ts.append(None if t1 is None else t1[0])
        bad.append(b)
    stack = (lambda xs: None if xs[0] is None else np.array(xs))
    return np.array(zs), stack(vs), stack(ts), np.array(bad)


# -- ODE integration --------------------------------------------------------------

def _field_fn(game, field_name, lam, damping):
    if field_name == "omega":
        return lambda z: eval_omega(game, z)
    if field_name == "h":
        if lam is None or damping is None:
            raise ConfigError("the h field needs lambda and damping functions")
        return lambda z: limiting_h(game, z, lam, damping)
    raise ConfigError(f"field must be 'omega' or 'h', got {field_name!r}")


def integrate_ode_many(game, z0, field_name, dt, n_steps, lam=None, damping=None,
                       stride=1, diagnostics=True, radius=DIVERGENCE_RADIUS, stop_tol=None):
    """Classical RK4 for ``z' = -F(z)`` from every row of ``z0``."""
    if not dt > 0:
        raise ConfigError("dt must be positive")
    F = _field_fn(game, field_name, lam, damping)

    def step(n, z, v, theta, rows):
        k1 = F(z)
        k2 = F(z - 0.5 * dt * k1)
        k3 = F(z - 0.5 * dt * k2)
        k4 = F(z - dt * k3)
        return z - (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4), None, None

    meta = {"field": field_name, "dt": dt}
    if lam is not None:
        meta["xi1"] = lam.xi1
    if damping is not None:
        meta["xi2"] = damping.xi2
    return _run_batched(game, z0, n_steps, step, stride=stride, diagnostics=diagnostics,
                        radius=radius, rule=f"ode-{field_name}", stop_tol=stop_tol,
                        traj_kw={"schedule": {"kind": "rk4", "dt": dt}, "meta": meta})


def integrate_ode(game, z0, field_name, dt, n_steps, lam=None, damping=None,
                  stride=1, diagnostics=True, radius=DIVERGENCE_RADIUS, stop_tol=None):
    """Single-trajectory RK4; raises :class:`DivergenceError` with the partial path."""
    z0 = _vec(z0)
    if z0.ndim != 1:
        raise DimensionError("integrate_ode takes one initial point; see integrate_ode_many")
    traj = integrate_ode_many(game, z0[None], field_name, dt, n_steps, lam, damping,
                              stride, diagnostics, radius, stop_tol)[0]
    if traj.diverged_at is not None:
        raise DivergenceError(f"trajectory left the radius-{radius:g} ball at n={traj.diverged_at}",
                              traj.diverged_at, traj.terminal, trajectory=traj)
    return traj


# -- discrete runs ------------------------------------------------------------------

def _make_step(game, rule, schedules, lam, damping, lambda_co, lambda_sga, x_fast,
               lam1, u0, noise):
    a_sched = schedules.slow if isinstance(schedules, SchedulePair) else schedules
    b_sched = schedules.fast if isinstance(schedules, SchedulePair) else None

    def draw(z, n, rows):
        if noise is None:
            return None
        return noise.draw(z, n, rows)

    if rule == "simgd":
        def step(n, z, v, th, rows):
            m = draw(z, n, rows)
            return simgd_step(game, z, a_sched(n), None if m is None else m[0]), v, th
    elif rule == "co":
        def step(n, z, v, th, rows):
            m = draw(z, n, rows)
            return consensus_step(game, z, a_sched(n), lambda_co,
                                  None if m is None else m[0]), v, th
    elif rule == "sga":
        def step(n, z, v, th, rows):
            m = draw(z, n, rows)
            return sga_step(game, z, a_sched(n), lambda_sga,
                            None if m is None else m[0]), v, th
    elif rule == "2ts-simgd":
        def step(n, z, v, th, rows):
            m = draw(z, n, rows)
            return two_timescale_simgd_step(game, z, a_sched(n), b_sched(n), x_fast,
                                            None if m is None else m[0]), v, th
    elif rule == "lss":
        def step(n, z, v, th, rows):
            s = lss_step(game, TwoTimescaleState(z, v, n), a_sched(n), b_sched(n),
                         lam, damping, draw(z, n, rows))
            return s.z, s.v, th
    elif rule == "tvlss":
        def step(n, z, v, th, rows):
            s = tvlss_step(game, TwoTimescaleState(z, v, n, th), a_sched(n), b_sched(n),
                           lam, lam1, damping, u0, draw(z, n, rows))
            return s.z, s.v, s.theta
    else:
        raise ConfigError(f"unknown rule {rule!r}; expected one of {', '.join(RULES)}")
    return step


def simulate_many(game, rule, z0, n_steps, schedules, *, lam=None, damping=None,
                  lambda_co=1.0, lambda_sga=1.0, x_fast=True, v0=None, theta0=(1.0, 0.0),
                  lam1=None, u0=None, noise=None, stride=1, diagnostics=True,
                  n_start=0, seed=None, radius=DIVERGENCE_RADIUS, stop_tol=None,
                  monitor=None):
    """Run ``rule`` from every row of ``z0`` and return one Trajectory per row.

    ``schedules`` is a :class:`StepSchedule` for single-timescale rules and a
    :class:`SchedulePair` for the two-timescale ones. ``noise`` is any object
    with ``draw(z, n, rows) -> (M_z, M_v)``; rows are passed so per-row noise
    streams stay put when the batch shrinks. ``stop_tol`` ends a row early
    once ``|omega|`` reaches it (see ``meta["converged_at"]``).
    """
    if rule not in RULES:
        raise ConfigError(f"unknown rule {rule!r}; expected one of {', '.join(RULES)}")
    if rule in TWO_TIMESCALE and not isinstance(schedules, SchedulePair):
        raise ConfigError(f"{rule} needs a slow/fast SchedulePair")
    if rule in ("lss", "tvlss"):
        if lam is None or damping is None:
            raise ConfigError(f"{rule} needs lambda and damping functions")
        if v0 is None:
            v0 = 0.0
    if rule == "tvlss":
        if lam1 is None:
            raise ConfigError("tvlss needs a time-varying lambda")
        if u0 is None:
            u0 = np.ones(game.d) / math.sqrt(game.d)
    else:
        theta0 = None
    if rule not in ("lss", "tvlss"):
        v0 = None
    z0 = np.array(_vec(z0), dtype=float, ndmin=2)
    if z0.shape[-1] != game.d:
        raise DimensionError(f"initial point has dimension {z0.shape[-1]}, game expects {game.d}")
    step = _make_step(game, rule, schedules, lam, damping, lambda_co, lambda_sga,
                      x_fast, lam1, u0, noise)
    meta = {}
    if rule == "co":
        meta["lambda_co"] = lambda_co
    if rule == "sga":
        meta["lambda_sga"] = lambda_sga
    if rule == "2ts-simgd":
        meta["x_fast"] = x_fast
    if lam is not None and rule in ("lss", "tvlss"):
        meta["xi1"] = lam.xi1
        meta["xi2"] = damping.xi2
    if rule == "tvlss":
        meta["lambda1_xi"] = lam1.xi
        meta["u0"] = [float(x) for x in np.asarray(u0)]
    if noise is not None and hasattr(noise, "describe"):
        meta["noise"] = noise.describe()
    return _run_batched(game, z0, n_steps, step, v0=v0, theta0=theta0, stride=stride,
                        diagnostics=diagnostics, lam=lam if rule in ("lss", "tvlss") else None,
                        n_start=n_start, radius=radius, rule=rule, stop_tol=stop_tol,
                        monitor=monitor,
                        traj_kw={"schedule": schedules.describe(), "seed": seed, "meta": meta})


def simulate(game, rule, z0, n_steps, schedules, **kw):
    """Single-run wrapper around :func:`simulate_many`.

    Raises :class:`DivergenceError` (carrying the partial trajectory) when the
    run leaves the divergence ball.
    """
    z0 = _vec(z0)
    if z0.ndim != 1:
        raise DimensionError("simulate takes one initial point; see simulate_many")
    traj = simulate_many(game, rule, z0[None], n_steps, schedules, **kw)[0]
    if traj.diverged_at is not None:
        raise DivergenceError(f"{rule} diverged at n={traj.diverged_at}", traj.diverged_at,
                              traj.terminal, trajectory=traj)
    return traj
