"""Zero-sum games and exact evaluation of cost, game field and Jacobian.

Player one picks ``x`` (the first ``dx`` coordinates) and minimises the cost;
player two picks ``y`` (the last ``dy``) and maximises it. The game field is
``omega(z) = (D_x f, -D_y f)`` and its Jacobian splits into a block-diagonal
curvature part ``S`` and a block-antisymmetric interaction part ``A``.

All evaluation functions accept either a :class:`StrategyPoint` or a float
array whose last axis has length ``d``; leading axes are treated as a batch.
"""

import hashlib
import json
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from . import autodiff as ad
from .errors import ConfigError, DimensionError, NumericalError

__all__ = [
    "StrategyPoint", "Game", "GameJacobian", "COUNTEREXAMPLE_MATRIX",
    "toy2d_cost", "eval_cost", "eval_omega", "eval_jacobian", "omega_and_jacobian",
    "load_game", "game_from_dict", "game_to_dict", "game_hash",
]

COUNTEREXAMPLE_MATRIX = ((1.0, 1.0), (1.0, 0.1))

# Quadratic games accept slightly looser symmetry when read from JSON.
_SYMMETRY_TOL = 1e-12
_FILE_SYMMETRY_TOL = 1e-9
_SPLIT_TOL = 1e-8


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class StrategyPoint:
    """A joint strategy ``z = (x, y)`` with its player split."""

    coords: np.ndarray
    dx: int
    dy: int

    def __post_init__(self):
        coords = np.asarray(self.coords, dtype=float)
        if coords.ndim != 1:
            raise DimensionError("coords must be a flat vector")
        if self.dx < 1 or self.dy < 1:
            raise DimensionError("each player needs at least one coordinate")
        if coords.size != self.dx + self.dy:
            raise DimensionError(
                f"coords has length {coords.size}, expected dx + dy = {self.dx + self.dy}")
        object.__setattr__(self, "coords", _frozen(coords))

    @property
    def d(self):
        return self.dx + self.dy

    @property
    def x(self):
        return self.coords[:self.dx]

    @property
    def y(self):
        return self.coords[self.dx:]

    def replace(self, coords):
        """Same split, new coordinates."""
        return StrategyPoint(coords, self.dx, self.dy)


def toy2d_cost(z):
    """Cost of the bounded quartic 2-D game.

    Written with the sign under which the minimising player sits at three
    differential Nash equilibria and simGD also has one non-Nash attractor
    near ``(-1.32, -1.22)``.
    """
    x, y = z[0], z[1]
    bump = ad.exp(-0.01 * (x * x + y * y))
    return -bump * ((0.3 * x * x + y) ** 2 + (0.5 * y * y + x) ** 2)


@dataclass(frozen=True)
class Game:
    """A two-player zero-sum game over ``R^d``.

    Build one with :meth:`quadratic`, :meth:`toy2d`, :meth:`counterexample`
    or :meth:`user`. Quadratic games keep ``matrix`` and use closed forms;
    the other kinds differentiate ``cost_fn`` with dual numbers.
    """

    kind: str
    dx: int
    dy: int
    matrix: Optional[np.ndarray] = None
    func: Optional[Callable] = field(default=None, compare=False)
    name: str = ""

    def __post_init__(self):
        if self.kind not in ("quadratic", "toy2d", "user"):
            raise ConfigError(f"unknown game kind {self.kind!r}")
        if self.dx < 1 or self.dy < 1:
            raise DimensionError("each player needs at least one coordinate")
        if self.kind == "quadratic":
            m = np.asarray(self.matrix, dtype=float)
            if m.shape != (self.d, self.d):
                raise DimensionError(f"matrix must be {self.d}x{self.d}, got {m.shape}")
            if not np.all(np.isfinite(m)):
                raise ConfigError("matrix entries must be finite")
            if np.max(np.abs(m - m.T), initial=0.0) > _SYMMETRY_TOL:
                raise ConfigError("quadratic game matrix must be symmetric")
            object.__setattr__(self, "matrix", _frozen(m))
            jac = _frozen(self.selector.signs[:, None] * m)
            object.__setattr__(self, "_jacobian", _split(jac, self.dx))
        elif self.kind == "toy2d" and (self.dx, self.dy) != (1, 1):
            raise DimensionError("toy2d is a game on R^2 with dx = dy = 1")
        elif self.kind == "user" and not callable(self.func):
            raise ConfigError("user games need a callable cost")

    @classmethod
    def quadratic(cls, matrix, dx=None, dy=None, name="quadratic"):
        """``f(z) = 0.5 z^T M z``; the split defaults to half and half."""
        m = np.asarray(matrix, dtype=float)
        d = m.shape[0]
        if dx is None and dy is None:
            dx = d // 2
        dx = d - dy if dx is None else dx
        dy = d - dx if dy is None else dy
        return cls("quadratic", int(dx), int(dy), matrix=m, name=name)

    @classmethod
    def counterexample(cls):
        """The 2-D quadratic whose only critical point is a non-Nash attractor."""
        return cls.quadratic(COUNTEREXAMPLE_MATRIX, 1, 1, name="counterexample")

    @classmethod
    def toy2d(cls):
        return cls("toy2d", 1, 1, name="toy2d")

    @classmethod
    def user(cls, func, dx, dy, name="user"):
        """Wrap a scalar cost ``func(z)`` where ``z`` is a tuple of components.

        ``func`` must be built from arithmetic and the functions in
        :mod:`lss.autodiff` so that it can be evaluated on dual numbers.
        """
        return cls("user", int(dx), int(dy), func=func, name=name)

    @property
    def d(self):
        return self.dx + self.dy

    @cached_property
    def selector(self):
        return ad.SignedBlockSelector(self.dx, self.dy)

    @property
    def cost_fn(self):
        """The cost as a function of a component tuple (dual-number friendly)."""
        if self.kind == "toy2d":
            return toy2d_cost
        if self.kind == "user":
            return self.func
        m = self.matrix
        d = self.d

        def quadratic_cost(z):
            total = 0.0
            for i in range(d):
                row = 0.0
                for j in range(d):
                    if m[i, j] != 0.0:
                        row = row + m[i, j] * z[j]
                total = total + z[i] * row
            return 0.5 * total

        return quadratic_cost

    def point(self, coords):
        return StrategyPoint(coords, self.dx, self.dy)


@dataclass(frozen=True)
class GameJacobian:
    """``J = S + A`` with ``S`` block-diagonal and ``A`` block-antisymmetric."""

    matrix: np.ndarray
    symmetric_part: np.ndarray
    antisymmetric_part: np.ndarray
    dx: int

    @property
    def hessian_xx(self):
        """``D_xx f``: the upper-left block of ``S``."""
        return self.symmetric_part[..., :self.dx, :self.dx]

    @property
    def hessian_yy(self):
        """``D_yy f``: minus the lower-right block of ``S``."""
        return -self.symmetric_part[..., self.dx:, self.dx:]


def _split(jac, dx):
    """Split J into the curvature and interaction blocks."""
    s = np.array(jac, dtype=float, copy=True)
    s[..., :dx, dx:] = 0.0
    s[..., dx:, :dx] = 0.0
    a = np.array(jac, dtype=float, copy=True)
    a[..., :dx, :dx] = 0.0
    a[..., dx:, dx:] = 0.0
    return GameJacobian(_frozen(jac), _frozen(s), _frozen(a), dx)


def _check_point(game, z):
    if isinstance(z, StrategyPoint) and (z.dx, z.dy) != (game.dx, game.dy):
        raise DimensionError(
            f"point split ({z.dx}, {z.dy}) does not match game ({game.dx}, {game.dy})")
    z = np.asarray(getattr(z, "coords", z), dtype=float)
    if z.ndim == 0 or z.shape[-1] != game.d:
        raise DimensionError(
            f"point has dimension {z.shape[-1] if z.ndim else 0}, game expects {game.d}")
    return z


def eval_cost(game, z):
    """Cost ``f(z)``; closed form for quadratic games."""
    z = _check_point(game, z)
    if game.kind == "quadratic":
        return 0.5 * np.einsum("...i,ij,...j->...", z, game.matrix, z)
    comps = tuple(z[..., i] for i in range(game.d))
    return np.asarray(ad.primal(game.cost_fn(comps)), dtype=float)


def eval_omega(game, z):
    """The game field ``(D_x f, -D_y f)`` as a float array shaped like ``z``."""
    z = _check_point(game, z)
    if game.kind == "quadratic":
        out = (z @ game.matrix.T) * game.selector.signs
    else:
        try:
            out = ad.grad_scalar(game.cost_fn, z) * game.selector.signs
        except NumericalError as err:
            raise NumericalError(f"game field overflow: {err}", z=z, index=err.index) from err
    if not np.all(np.isfinite(out)):
        raise NumericalError("game field is not finite", z=z)
    return out


def eval_jacobian(game, z):
    """Jacobian of the game field with its ``S``/``A`` split.

    Quadratic games return the same cached object for every ``z``. For the
    other kinds, ``J`` comes from one nested dual pass, and its blocks are
    checked against ``(J + J^T) / 2`` so inconsistent user callables surface.
    """
    z = _check_point(game, z)
    if game.kind == "quadratic":
        if z.ndim == 1:
            return game._jacobian
        jac = np.broadcast_to(game._jacobian.matrix, z.shape[:-1] + (game.d, game.d))
        return _split(jac, game.dx)
    try:
        _, _, hess = ad.hessian_scalar(game.cost_fn, z)
    except NumericalError as err:
        raise NumericalError(f"Jacobian overflow: {err}", z=z, index=err.index) from err
    jac = game.selector.signs[:, None] * hess
    out = _split(jac, game.dx)
    sym = 0.5 * (jac + np.swapaxes(jac, -1, -2))
    scale = max(1.0, float(np.max(np.abs(jac), initial=0.0)))
    if np.max(np.abs(out.symmetric_part - sym), initial=0.0) > _SPLIT_TOL * scale:
        raise NumericalError("Jacobian lacks zero-sum block structure", z=z)
    return out


def omega_and_jacobian(game, z):
    """``(omega(z), J(z))`` as plain arrays from a single nested pass."""
    z = _check_point(game, z)
    if game.kind == "quadratic":
        jac = game._jacobian.matrix
        return (z @ jac.T, np.broadcast_to(jac, z.shape[:-1] + jac.shape))
    try:
        _, grad, hess = ad.hessian_scalar(game.cost_fn, z)
    except NumericalError as err:
        raise NumericalError(f"derivative overflow: {err}", z=z, index=err.index) from err
    signs = game.selector.signs
    return grad * signs, signs[:, None] * hess


def game_from_dict(spec):
    """Build a game from its JSON form; errors name the offending field."""
    if not isinstance(spec, dict):
        raise ConfigError("game spec must be a JSON object")
    kind = spec.get("kind")
    if kind == "toy2d":
        return Game.toy2d()
    if kind == "counterexample":
        return Game.counterexample()
    if kind != "quadratic":
        raise ConfigError(f"field 'kind': expected 'quadratic' or 'toy2d', got {kind!r}")
    for key in ("dx", "dy", "matrix"):
        if key not in spec:
            raise ConfigError(f"field {key!r} is required for quadratic games")
    dx, dy = spec["dx"], spec["dy"]
    for key, val in (("dx", dx), ("dy", dy)):
        if not isinstance(val, int) or isinstance(val, bool) or val < 1:
            raise ConfigError(f"field {key!r} must be a positive integer")
    try:
        m = np.array(spec["matrix"], dtype=float)
    except (TypeError, ValueError) as err:
        raise ConfigError(f"field 'matrix': {err}") from err
    if m.shape != (dx + dy, dx + dy):
        raise ConfigError(f"field 'matrix' must be {dx + dy}x{dx + dy} row arrays")
    if not np.all(np.isfinite(m)):
        raise ConfigError("field 'matrix' has non-finite entries")
    if np.max(np.abs(m - m.T)) > _FILE_SYMMETRY_TOL:
        raise ConfigError("field 'matrix' is not symmetric")
    m = 0.5 * (m + m.T)
    return Game.quadratic(m, dx, dy, name=spec.get("name", "quadratic"))


def load_game(source):
    """Load a game from a JSON file path, a JSON string, or a built-in name."""
    if isinstance(source, dict):
        return game_from_dict(source)
    text = str(source)
    if text in ("toy2d", "counterexample"):
        return game_from_dict({"kind": text})
    path = Path(text)
    try:
        raw = path.read_text(encoding="utf-8") if path.exists() else text
        spec = json.loads(raw)
    except json.JSONDecodeError as err:
        raise ConfigError(f"game file is not valid JSON: {err}") from err
    except OSError as err:
        raise ConfigError(f"cannot read game file: {err}") from err
    return game_from_dict(spec)


def game_to_dict(game):
    if game.kind == "toy2d":
        return {"kind": "toy2d"}
    if game.kind == "quadratic":
        return {"kind": "quadratic", "dx": game.dx, "dy": game.dy,
                "matrix": game.matrix.tolist()}
    return {"kind": "user", "dx": game.dx, "dy": game.dy, "name": game.name}


def game_hash(game):
    """Short stable digest of the game definition."""
    blob = json.dumps(game_to_dict(game), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]
