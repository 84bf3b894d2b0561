"""Orthonormal non-dyadic Haar system attached to a :class:`SignalTree`.

Row 0 is the constant vector ``1 / sqrt(n)``; row ``v + 1`` belongs to tree
vertex ``v`` and equals ``d * d_left`` on nodes ``left+1 .. pivot`` and
``-d * d_right`` on nodes ``pivot+1 .. right`` (1-based nodes).  Both
``H`` and ``H^T`` are applied in O(n) with prefix sums and difference arrays.
"""
import numpy as np
import scipy.sparse as sp

from .errors import DimensionError, InvalidParameters
from .tree import haar_constants

DENSE_LIMIT = 256


class NonDyadicHaar:
    """Haar transform adapted to a tree.

    Parameters
    ----------
    tree : SignalTree
    """

    def __init__(self, tree):
        self.tree = tree
        self.n = tree.n
        self.d, self.d_left, self.d_right = haar_constants(tree)
        self._a = self.d * self.d_left   # value on the left half
        self._b = -self.d * self.d_right  # value on the right half
        t = tree
        N = self.n - 1
        # difference-array scatter: row v adds a on [left, pivot) and b on [pivot, right)
        rows = np.concatenate([t.left, t.pivot, t.pivot, t.right])
        cols = np.tile(np.arange(N), 4)
        vals = np.concatenate([self._a, -self._a, self._b, -self._b])
        self._scatter = sp.csr_matrix((vals, (rows, cols)), shape=(self.n + 1, N))

    @property
    def pivot_order(self):
        """Face associated with each row; row 0 is labelled with ``n``."""
        return np.concatenate(([self.n], self.tree.pivot))

    def _check(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.n:
            raise DimensionError(f"expected last axis {self.n}, got {x.shape[-1]}")
        return x

    def apply(self, x):
        """Coefficients ``H x`` along the last axis."""
        x = self._check(x)
        pad = [(0, 0)] * (x.ndim - 1)
        cs = np.cumsum(np.pad(x, pad + [(1, 0)]), axis=-1)
        t = self.tree
        lsum = cs[..., t.pivot] - cs[..., t.left]
        rsum = cs[..., t.right] - cs[..., t.pivot]
        head = cs[..., -1:] / np.sqrt(self.n)
        return np.concatenate([head, self._a * lsum + self._b * rsum], axis=-1)

    def apply_T(self, c):
        """Synthesis ``H^T c`` along the last axis."""
        c = self._check(c)
        flat = c.reshape(-1, self.n)
        diff = (self._scatter @ flat[:, 1:].T).T
        x = np.cumsum(diff, axis=-1)[:, :self.n] + flat[:, :1] / np.sqrt(self.n)
        return x.reshape(c.shape)

    def todense(self, force=False):
        """Dense matrix, limited to ``n <= 256`` unless ``force``."""
        if self.n > DENSE_LIMIT and not force:
            raise InvalidParameters(f"dense Haar matrix limited to n <= {DENSE_LIMIT}")
        return self.apply(np.eye(self.n)).T

    def grad_rows(self):
        """Sparse rows of ``H grad^T`` in COO form.

        Returns
        -------
        rows, cols, vals : ndarray
            ``rows`` are Haar row ids (row 0 is identically zero), ``cols``
            are 1-based faces.
        """
        t = self.tree
        ids = np.arange(1, self.n)
        keep_l = t.left > 0
        keep_r = t.right < self.n
        rows = np.concatenate([ids, ids[keep_l], ids[keep_r]])
        cols = np.concatenate([t.pivot, t.left[keep_l], t.right[keep_r]])
        vals = np.concatenate([-self.d, self._a[keep_l], -self._b[keep_r]])
        order = np.lexsort((cols, rows))
        return rows[order], cols[order], vals[order]

    def grad_matrix(self):
        """``H grad^T`` as a CSR matrix of shape ``(n, n-1)``."""
        r, c, v = self.grad_rows()
        return sp.csr_matrix((v, (r, c - 1)), shape=(self.n, self.n - 1))


def haar_grad_rows(tree):
    return NonDyadicHaar(tree).grad_rows()
