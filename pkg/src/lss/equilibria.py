"""Critical points of the game field and their stability classification."""

from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .dynamics import DampingFunction, LambdaFunction, adjustment, limiting_h
from .errors import ConfigError, DimensionError, NumericalError, SingularityError
from .game import StrategyPoint, eval_jacobian, eval_omega

__all__ = [
    "DNE", "NON_NASH_LASE", "UNSTABLE", "NON_HYPERBOLIC", "CLASSIFICATIONS",
    "CriticalPoint", "SpectrumReport", "SearchResult", "find_critical_points",
    "classify", "fd_jacobian", "check_eigenvector_assumption", "EigenvectorReport",
    "analyze",
]

DNE = "DNE"
NON_NASH_LASE = "NonNashLASE"
UNSTABLE = "Unstable"
NON_HYPERBOLIC = "NonHyperbolic"
CLASSIFICATIONS = (DNE, NON_NASH_LASE, UNSTABLE, NON_HYPERBOLIC)

TAU = 1e-8
DEDUP_RADIUS = 1e-6
FD_STEP = 1e-5


@dataclass(frozen=True)
class CriticalPoint:
    z: StrategyPoint
    omega_residual: float
    newton_iters: int
    seed_point: StrategyPoint

    @property
    def coords(self):
        return self.z.coords


@dataclass
class SpectrumReport:
    """Spectral data at a critical point and the resulting label."""

    z: np.ndarray
    residual: float
    jacobian_eigs: np.ndarray
    s_eigs_x: np.ndarray
    s_eigs_y: np.ndarray
    classification: str
    h_eigs: Optional[np.ndarray]
    hyperbolic: bool
    s_eigs: np.ndarray = field(default=None)

    def to_dict(self):
        def cplx(values):
            return [{"re": float(np.real(c)), "im": float(np.imag(c))} for c in values]

        return {
            "z": [float(x) for x in self.z],
            "residual": float(self.residual),
            "classification": self.classification,
            "hyperbolic": bool(self.hyperbolic),
            "jacobian_eigs": cplx(self.jacobian_eigs),
            "s_eigs_x": [float(x) for x in self.s_eigs_x],
            "s_eigs_y": [float(x) for x in self.s_eigs_y],
            "h_eigs": None if self.h_eigs is None else cplx(self.h_eigs),
        }


class SearchResult(list):
    """List of critical points that also counts what happened to the seeds."""

    def __init__(self, points=(), seeds=0, singular_seeds=0, unconverged_seeds=0,
                 outside_box=0):
        super().__init__(points)
        self.seeds = seeds
        self.singular_seeds = singular_seeds
        self.unconverged_seeds = unconverged_seeds
        self.outside_box = outside_box


def _box_arrays(search_box, d):
    box = np.asarray(search_box, dtype=float)
    if box.shape == (2,):
        box = np.tile(box, (d, 1))
    if box.shape != (d, 2):
        raise DimensionError(f"search box must be (lo, hi) or {d} such pairs")
    if not np.all(np.isfinite(box)):
        raise ConfigError("search box bounds must be finite")
    if np.any(box[:, 0] > box[:, 1]):
        raise ConfigError("search box is empty (lo > hi)")
    return box[:, 0], box[:, 1]


def _grid_seeds(lo, hi, grid_n):
    axes = [np.linspace(a, b, grid_n) for a, b in zip(lo, hi)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=-1)


def find_critical_points(game, search_box=(-4.0, 4.0), grid_n=40, newton_tol=1e-10,
                         max_iters=60, seeds=None, keep_outside=False):
    """Multistart Newton on ``omega`` from a grid of seeds.

    All seeds advance together. A seed whose Jacobian is numerically singular
    is dropped and counted; so is one that fails to reach ``newton_tol``.
    Converged points outside the box are discarded unless ``keep_outside``,
    and the survivors are merged when closer than 1e-6.
    """
    d = game.d
    lo, hi = _box_arrays(search_box, d)
    if seeds is None:
        if d > 4:
            raise ConfigError("grid seeding supports d <= 4; pass seeds explicitly")
        if grid_n < 2:
            raise ConfigError("grid_n must be at least 2")
        seeds = _grid_seeds(lo, hi, int(grid_n))
    seeds = np.array(seeds, dtype=float, ndmin=2)
    if seeds.shape[-1] != d:
        raise DimensionError(f"seeds must have {d} columns")

    z = seeds.copy()
    iters = np.zeros(len(z), dtype=int)
    live = np.ones(len(z), dtype=bool)
    singular = np.zeros(len(z), dtype=bool)
    done = np.zeros(len(z), dtype=bool)
    resid = np.full(len(z), np.inf)
    for _ in range(max_iters + 1):
        idx = np.flatnonzero(live & ~done)
        if idx.size == 0:
            break
        try:
            w = eval_omega(game, z[idx])
            jac = eval_jacobian(game, z[idx]).matrix
        except NumericalError:
            w, jac = _rowwise_field(game, z[idx])
        r = np.linalg.norm(w, axis=-1)
        bad = ~np.isfinite(r)
        live[idx[bad]] = False
        resid[idx] = r
        conv = r <= newton_tol
        done[idx[conv]] = True
        step_rows = ~conv & ~bad
        idx, w, jac = idx[step_rows], w[step_rows], jac[step_rows]
        if idx.size == 0:
            break
        cond = np.linalg.cond(jac)
        sing = ~(cond < 1e12)
        singular[idx[sing]] = True
        live[idx[sing]] = False
        idx, w, jac = idx[~sing], w[~sing], jac[~sing]
        if idx.size == 0 or _ == max_iters:
            break
        z[idx] = z[idx] - np.linalg.solve(jac, w[..., None])[..., 0]
        iters[idx] += 1
        # far-away iterates cannot come back into a desk-sized box
        runaway = np.linalg.norm(z[idx], axis=-1) > 1e6
        live[idx[runaway]] = False

    ok = np.flatnonzero(done)
    inside = np.all((z[ok] >= lo - 1e-9) & (z[ok] <= hi + 1e-9), axis=-1)
    outside = int(np.count_nonzero(~inside))
    if not keep_outside:
        ok = ok[inside]

    points = []
    for i in ok:
        if any(np.linalg.norm(z[i] - p.coords) <= DEDUP_RADIUS for p in points):
            continue
        points.append(CriticalPoint(
            z=game.point(z[i]), omega_residual=float(resid[i]),
            newton_iters=int(iters[i]), seed_point=game.point(seeds[i])))
    points.sort(key=lambda p: tuple(np.round(p.coords, 9)))
    return SearchResult(points, seeds=len(seeds), singular_seeds=int(singular.sum()),
                        unconverged_seeds=int(np.count_nonzero(~done & ~singular)),
                        outside_box=outside)


def _rowwise_field(game, z):
    d = game.d
    w = np.full(z.shape, np.nan)
    jac = np.full(z.shape + (d,), np.nan)
    for k in range(len(z)):
        try:
            w[k] = eval_omega(game, z[k])
            jac[k] = eval_jacobian(game, z[k]).matrix
        except NumericalError:
            pass
    return w, jac


def fd_jacobian(fn, z, step=FD_STEP):
    """Central-difference Jacobian of ``fn`` at ``z``; all 2d probes in one batch."""
    z = np.asarray(z, dtype=float)
    d = z.shape[-1]
    e = step * np.eye(d)
    probes = np.concatenate([z + e, z - e])
    vals = fn(probes)
    return ((vals[:d] - vals[d:]) / (2.0 * step)).T


def _label(jac_eigs, sx, sy, tau):
    re = np.real(jac_eigs)
    if np.any(np.abs(re) <= tau):
        return NON_HYPERBOLIC, False
    if np.min(sx) > tau and np.max(sy) < -tau:
        return DNE, True
    if np.all(re > tau):
        return NON_NASH_LASE, True
    return UNSTABLE, True


def classify(game, point, lam=None, damping=None, tau=TAU, fd_step=FD_STEP, with_h=True):
    """Label a critical point DNE / NonNashLASE / Unstable / NonHyperbolic.

    ``h_eigs`` come from a central-difference Jacobian of :func:`limiting_h`,
    deliberately independent of the dual-number derivatives.
    """
    z = np.asarray(getattr(point, "coords", point), dtype=float)
    residual = getattr(point, "omega_residual", None)
    if residual is None:
        residual = float(np.linalg.norm(eval_omega(game, z)))
    if residual > 1e-8:
        raise ConfigError(f"not a critical point: |omega| = {residual:.3g} > 1e-8")
    lam = LambdaFunction(1e-4) if lam is None else lam
    damping = DampingFunction(1e-4) if damping is None else damping
    jg = eval_jacobian(game, z)
    try:
        jac_eigs = np.linalg.eigvals(jg.matrix)
        sx = np.linalg.eigvalsh(jg.hessian_xx)
        sy = np.linalg.eigvalsh(jg.hessian_yy)
        s_eigs = np.linalg.eigvalsh(jg.symmetric_part)
    except np.linalg.LinAlgError as err:
        raise NumericalError(f"eigensolver failed: {err}", z=z) from err
    label, hyperbolic = _label(jac_eigs, sx, sy, tau)
    h_eigs = None
    if with_h:
        try:
            jh = fd_jacobian(lambda q: limiting_h(game, q, lam, damping), z, fd_step)
            h_eigs = np.linalg.eigvals(jh)
        except SingularityError:
            h_eigs = None
    order = np.lexsort((np.imag(jac_eigs), np.real(jac_eigs)))
    return SpectrumReport(z=z, residual=float(residual), jacobian_eigs=jac_eigs[order],
                          s_eigs_x=sx, s_eigs_y=sy, classification=label,
                          h_eigs=None if h_eigs is None else np.sort_complex(h_eigs),
                          hyperbolic=hyperbolic, s_eigs=s_eigs)


@dataclass
class EigenvectorReport:
    samples: int
    skipped_critical: int
    singular: int
    violations: List[np.ndarray]
    min_relative_gap: float

    @property
    def ok(self):
        return not self.violations


def check_eigenvector_assumption(game, z_samples, lam=None, rel_tol=1e-8):
    """Flag samples where the adjustment cancels the field, ``u = -omega``.

    At such a point ``h`` would vanish away from a critical point. Samples
    with ``omega = 0`` are skipped.
    """
    lam = LambdaFunction(1e-4) if lam is None else lam
    z = np.array(z_samples, dtype=float, ndmin=2)
    w = eval_omega(game, z)
    wn = np.linalg.norm(w, axis=-1)
    keep = wn > 0
    z, w, wn = z[keep], w[keep], wn[keep]
    singular = 0
    try:
        u = adjustment(game, z, lam)
    except SingularityError:
        u = np.full(z.shape, np.nan)
        for k in range(len(z)):
            try:
                u[k] = adjustment(game, z[k], lam)
            except SingularityError:
                singular += 1
    gap = np.linalg.norm(u + w, axis=-1) / wn
    valid = np.isfinite(gap)
    bad = valid & (gap <= rel_tol)
    return EigenvectorReport(samples=int(keep.size), skipped_critical=int((~keep).sum()),
                             singular=singular, violations=[z[k] for k in np.flatnonzero(bad)],
                             min_relative_gap=float(np.min(gap[valid])) if valid.any() else np.inf)


def analyze(game, search_box=(-4.0, 4.0), grid_n=40, lam=None, damping=None,
            newton_tol=1e-10, max_iters=60):
    """Find and classify every critical point in the box."""
    found = find_critical_points(game, search_box, grid_n, newton_tol, max_iters)
    reports = [classify(game, p, lam, damping) for p in found]
    return found, reports
