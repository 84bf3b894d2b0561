"""Discrete gradient, its adjoint and pseudo-inverse.

Conventions: a signal has n nodes (0-based array positions), its gradient
lives on the n-1 faces.  Index sets of faces (supports) are 1-based, so face
``j`` is array position ``j - 1`` of ``grad(x)``.
"""
import numpy as np

from .errors import DimensionError, InvalidParameters

DENSE_LIMIT = 64


def grad(x):
    """Forward differences ``x[j+1] - x[j]`` along the last axis."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] < 2:
        raise DimensionError("gradient needs at least two samples")
    return np.diff(x, axis=-1)


def grad_adjoint(w):
    """Adjoint of :func:`grad`: maps n-1 face values to n node values.

    ``(-w_1, w_1 - w_2, ..., w_{N-1} - w_N, w_N)``.
    """
    w = np.asarray(w, dtype=float)
    if w.shape[-1] < 1:
        raise DimensionError("adjoint needs at least one face value")
    pad = [(0, 0)] * (w.ndim - 1)
    return -np.diff(np.pad(w, pad + [(1, 1)]), axis=-1)


def grad_pinv(w):
    """Moore-Penrose pseudo-inverse of :func:`grad`.

    Integrates the face values and removes the mean, so the result is the
    minimum-norm solution of ``grad(x) = w``.
    """
    w = np.asarray(w, dtype=float)
    if w.shape[-1] < 1:
        raise DimensionError("pseudo-inverse needs at least one face value")
    pad = [(0, 0)] * (w.ndim - 1)
    x = np.cumsum(np.pad(w, pad + [(1, 0)]), axis=-1)
    return x - x.mean(axis=-1, keepdims=True)


def grad_matrix(n):
    """Dense ``(n-1) x n`` difference matrix, only for ``n <= 64``."""
    if n > DENSE_LIMIT:
        raise InvalidParameters(f"dense gradient limited to n <= {DENSE_LIMIT}")
    D = np.zeros((n - 1, n))
    i = np.arange(n - 1)
    D[i, i] = -1.0
    D[i, i + 1] = 1.0
    return D


def support(w, tol=0.0):
    """1-based faces where ``|w| > tol``."""
    return np.flatnonzero(np.abs(np.asarray(w, dtype=float)) > tol) + 1


def best_s_support(w, s):
    """1-based faces of the ``s`` largest magnitudes of ``w``.

    Ties are broken towards the lowest index.
    """
    w = np.asarray(w, dtype=float)
    if not 0 <= s <= w.size:
        raise InvalidParameters(f"s={s} outside [0, {w.size}]")
    order = np.argsort(-np.abs(w), kind="stable")
    return np.sort(order[:s]) + 1


def restrict(w, faces):
    """Keep the entries of ``w`` on the given 1-based faces, zero the rest."""
    w = np.asarray(w, dtype=float)
    out = np.zeros_like(w)
    idx = np.asarray(faces, dtype=np.int64) - 1
    out[..., idx] = w[..., idx]
    return out


def restrict_complement(w, faces):
    """Zero the entries of ``w`` on the given 1-based faces."""
    w = np.asarray(w, dtype=float)
    return w - restrict(w, faces)


class GradientOperator:
    """Matrix-free gradient on signals of length ``n``."""

    def __init__(self, n):
        if n < 2:
            raise InvalidParameters("n must be at least 2")
        self.n = int(n)

    @property
    def shape(self):
        return (self.n - 1, self.n)

    def apply(self, x):
        return grad(x)

    def adjoint(self, w):
        return grad_adjoint(w)

    def pinv(self, w):
        return grad_pinv(w)

    def todense(self):
        return grad_matrix(self.n)

    def norm(self):
        """Exact spectral norm ``2 cos(pi / (2n))``."""
        return 2.0 * np.cos(np.pi / (2 * self.n))
