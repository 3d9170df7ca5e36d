"""Forward-mode differentiation with (nestable) dual numbers.

A :class:`Dual` carries a primal and a tangent. Both may be floats, numpy
arrays or Duals themselves, so nesting two layers gives exact second
derivatives (forward-over-forward) and array components give batched
evaluation for free.

The game-level products ``jt_vec`` and ``j_vec_via_two_jtv`` never build a
Jacobian: each one is a single nested pass over the cost function with the
outer tangent direction laid out along a leading array axis.
"""

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import DimensionError, NumericalError

__all__ = [
    "Dual", "exp", "expm1", "log", "sqrt", "sin", "cos", "tanh",
    "primal", "grad_scalar", "hessian_scalar", "hvp_scalar",
    "SignedBlockSelector", "jt_vec", "grad_and_jt_vec", "j_vec_via_two_jtv",
]


class Dual:
    """Dual number ``primal + tangent * eps`` with ``eps**2 = 0``."""

    __slots__ = ("primal", "tangent")
    # numpy must hand mixed ndarray/Dual arithmetic back to us.
    __array_ufunc__ = None

    def __init__(self, primal, tangent=0.0):
        self.primal = primal
        self.tangent = tangent

    def __repr__(self):
        return f"Dual({self.primal!r}, {self.tangent!r})"

    def __add__(self, other):
        if isinstance(other, Dual):
            if _is_zero(other.tangent):
                return Dual(self.primal + other.primal, self.tangent)
            return Dual(self.primal + other.primal, self.tangent + other.tangent)
        return Dual(self.primal + other, self.tangent)

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, Dual):
            return Dual(self.primal - other.primal, self.tangent - other.tangent)
        return Dual(self.primal - other, self.tangent)

    def __rsub__(self, other):
        return Dual(other - self.primal, -self.tangent)

    def __mul__(self, other):
        if isinstance(other, Dual):
            if _is_zero(other.tangent):
                return Dual(self.primal * other.primal, self.tangent * other.primal)
            if _is_zero(self.tangent):
                return Dual(self.primal * other.primal, self.primal * other.tangent)
            return Dual(self.primal * other.primal,
                        self.primal * other.tangent + self.tangent * other.primal)
        return Dual(self.primal * other, self.tangent * other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Dual):
            q = self.primal / other.primal
            return Dual(q, (self.tangent - q * other.tangent) / other.primal)
        return Dual(self.primal / other, self.tangent / other)

    def __rtruediv__(self, other):
        q = other / self.primal
        return Dual(q, -q * self.tangent / self.primal)

    def __neg__(self):
        return Dual(-self.primal, -self.tangent)

    def __pos__(self):
        return self

    def __abs__(self):
        return Dual(abs(self.primal), _sign(self.primal) * self.tangent)

    def __pow__(self, power):
        if isinstance(power, Dual):
            return exp(power * log(self))
        if power == 2:
            return self * self
        return Dual(self.primal ** power,
                    power * self.primal ** (power - 1) * self.tangent)

    def __rpow__(self, base):
        return exp(self * np.log(base))


def _is_zero(t):
    # structural zeros only: the literal float tangents of constant layers
    return type(t) is float and t == 0.0


def _sign(x):
    return _sign(x.primal) if isinstance(x, Dual) else np.sign(x)


def exp(x):
    if isinstance(x, Dual):
        e = exp(x.primal)
        return Dual(e, e * x.tangent)
    return np.exp(x)


def expm1(x):
    if isinstance(x, Dual):
        return Dual(expm1(x.primal), exp(x.primal) * x.tangent)
    return np.expm1(x)


def log(x):
    if isinstance(x, Dual):
        return Dual(log(x.primal), x.tangent / x.primal)
    return np.log(x)


def sqrt(x):
    if isinstance(x, Dual):
        r = sqrt(x.primal)
        return Dual(r, x.tangent / (2.0 * r))
    return np.sqrt(x)


def sin(x):
    if isinstance(x, Dual):
        return Dual(sin(x.primal), cos(x.primal) * x.tangent)
    return np.sin(x)


def cos(x):
    if isinstance(x, Dual):
        return Dual(cos(x.primal), -sin(x.primal) * x.tangent)
    return np.cos(x)


def tanh(x):
    if isinstance(x, Dual):
        t = tanh(x.primal)
        return Dual(t, (1.0 - t * t) * x.tangent)
    return np.tanh(x)


def primal(x):
    """Strip every dual layer and return the underlying value."""
    while isinstance(x, Dual):
        x = x.primal
    return x


def _part(x, *path):
    # path of "p"/"t" selects primal/tangent layers, outermost first;
    # a non-Dual layer is a constant: its primal is itself, its tangent zero.
    for key in path:
        if isinstance(x, Dual):
            x = x.primal if key == "p" else x.tangent
        elif key == "t":
            return 0.0
    return primal(x)


def _axis_basis(d, batch_ndim, axis, n_lead):
    """Identity rows shaped to broadcast along leading direction ``axis``."""
    eye = np.eye(d)
    shape = [1] * n_lead + [1] * batch_ndim
    shape[axis] = d
    return [eye[i].reshape(shape) for i in range(d)]


def _check_finite(values, what, z):
    values = np.asarray(values, dtype=float)
    bad = ~np.isfinite(values)
    if bad.any():
        idx = np.argwhere(bad)[0]
        raise NumericalError(f"non-finite {what} at coordinate {int(idx[-1])}",
                             z=z, index=int(idx[-1]))
    return values


def grad_scalar(f, z):
    """Gradient of ``f`` at ``z`` (shape ``(..., d)``), one tangent per coordinate.

    ``f`` receives a tuple of ``d`` components and must use only arithmetic
    and the functions of this module. All ``d`` directional passes are run
    together along a leading axis.
    """
    z = np.asarray(z, dtype=float)
    d = z.shape[-1]
    batch = z.shape[:-1]
    basis = _axis_basis(d, len(batch), 0, 1)
    comps = tuple(Dual(z[..., i], basis[i]) for i in range(d))
    out = f(comps)
    g = np.broadcast_to(_part(out, "t"), (d,) + batch)
    return _check_finite(np.moveaxis(g, 0, -1), "gradient", z)


def hvp_scalar(f, z, w):
    """Return ``(grad f(z), H(z) w)`` from one nested forward pass."""
    z = np.asarray(z, dtype=float)
    w = np.broadcast_to(np.asarray(w, dtype=float), z.shape)
    d = z.shape[-1]
    batch = z.shape[:-1]
    basis = _axis_basis(d, len(batch), 0, 1)
    comps = tuple(Dual(Dual(z[..., i], w[..., i]), Dual(basis[i], 0.0))
                  for i in range(d))
    out = f(comps)
    grad = np.broadcast_to(_part(out, "t", "p"), (d,) + batch)
    hw = np.broadcast_to(_part(out, "t", "t"), (d,) + batch)
    return (_check_finite(np.moveaxis(grad, 0, -1), "gradient", z),
            _check_finite(np.moveaxis(hw, 0, -1), "second derivative", z))


def hessian_scalar(f, z):
    """Return ``(f, grad, hessian)`` at ``z`` from one nested pass."""
    z = np.asarray(z, dtype=float)
    d = z.shape[-1]
    batch = z.shape[:-1]
    outer = _axis_basis(d, len(batch), 0, 2)
    inner = _axis_basis(d, len(batch), 1, 2)
    comps = tuple(Dual(Dual(z[..., i], inner[i]), Dual(outer[i], 0.0))
                  for i in range(d))
    out = f(comps)
    value = np.broadcast_to(_part(out, "p", "p"), (d, d) + batch)[0, 0]
    grad = np.broadcast_to(_part(out, "t", "p"), (d, d) + batch)[:, 0]
    hess = np.broadcast_to(_part(out, "t", "t"), (d, d) + batch)
    grad = np.moveaxis(grad, 0, -1)
    hess = np.moveaxis(hess, (0, 1), (-2, -1))
    return (np.array(value, dtype=float),
            _check_finite(grad, "gradient", z),
            _check_finite(hess, "second derivative", z))


@dataclass(frozen=True)
class SignedBlockSelector:
    """Block masks for the zero-sum structure: ``diag(I, -I)`` and its negation."""

    dx: int
    dy: int

    @property
    def d(self):
        return self.dx + self.dy

    @cached_property
    def signs(self):
        """Diagonal of ``diag(I, -I)`` (read-only)."""
        s = np.concatenate([np.ones(self.dx), -np.ones(self.dy)])
        s.flags.writeable = False
        return s

    def plus_minus(self, v):
        return v * self.signs

    def minus_plus(self, v):
        return -v * self.signs

    def upper(self, v):
        out = np.array(v, dtype=float, copy=True)
        out[..., self.dx:] = 0.0
        return out

    def lower(self, v):
        out = np.array(v, dtype=float, copy=True)
        out[..., :self.dx] = 0.0
        return out


def _as_vector(game, z, u, name):
    z = np.asarray(getattr(z, "coords", z), dtype=float)
    u = np.asarray(u, dtype=float)
    if z.shape[-1] != game.d or u.shape[-1] != game.d:
        raise DimensionError(f"{name} must have last dimension {game.d}")
    if u.shape != z.shape:
        u = np.broadcast_to(u, np.broadcast_shapes(z.shape, u.shape))
    return z, u


def jt_vec(game, z, u, closed_form=True):
    """``J(z)^T u`` as the gradient of ``omega(z)^T u``.

    ``omega(z)^T u`` is the derivative of the cost along ``diag(I,-I) u``,
    so a single nested pass (inner tangent ``diag(I,-I) u``, outer tangent
    over the coordinate axes) produces the whole product without forming J.
    Quadratic games use ``M diag(I,-I) u`` unless ``closed_form`` is False.
    """
    z, u = _as_vector(game, z, u, "z and u")
    w = u * game.selector.signs
    if closed_form and game.matrix is not None:
        out = w @ game.matrix.T
        return out if out.shape == u.shape else np.broadcast_to(out, u.shape).copy()
    return hvp_scalar(game.cost_fn, np.broadcast_to(z, u.shape), w)[1]


def grad_and_jt_vec(game, z, u, closed_form=True):
    """``(omega(z), J(z)^T u)`` sharing one nested pass.

    The outer tangent of the pass behind :func:`jt_vec` already carries the
    cost gradient, so the game field comes for free.
    """
    z, u = _as_vector(game, z, u, "z and u")
    signs = game.selector.signs
    if closed_form and game.matrix is not None:
        return (z @ game.matrix.T) * signs, jt_vec(game, z, u)
    grad, hw = hvp_scalar(game.cost_fn, np.broadcast_to(z, u.shape), u * signs)
    return grad * signs, hw


def j_vec_via_two_jtv(game, z, v, closed_form=True):
    """``J(z) v`` assembled from two transpose products.

    Uses ``J v = diag(I,-I) J^T (v1, 0) + diag(-I,I) J^T (0, v2)``, which holds
    because the off-diagonal blocks of J are negated transposes of each other.
    Both products run as one batched pass, stacked on a new leading axis.
    """
    z, v = _as_vector(game, z, v, "z and v")
    sel = game.selector
    top, bottom = jt_vec(game, z, np.stack([sel.upper(v), sel.lower(v)]),
                         closed_form=closed_form)
    return sel.plus_minus(top) + sel.minus_plus(bottom)
