"""Signal-dependent binary tree over the gradient faces.

Vertices are stored in level order as flat arrays (vertex id = position),
with explicit parent and child ids.  Every vertex owns a contiguous range of
faces ``[lo, hi]``, splits it at a pivot face and records the neighbouring
faces ``left = lo - 1`` and ``right = hi + 1`` (0 and n being ghosts).
"""
from dataclasses import dataclass, field
import math

import numpy as np

from ._backend import build_tree_arrays
from .errors import InvalidParameters, SeparationTooSmall
from .signals import separation_discrete

LABEL_L0 = 0
LABEL_NAT = 1
LABEL_CIRC = 2
LABEL_NAMES = {LABEL_L0: "top", LABEL_NAT: "adjacent", LABEL_CIRC: "free"}

_TOL = 1e-12


def top_depth(s_bar):
    """Depth of the perfect top tree, ``ceil(log2(s_bar + 1))``."""
    return int(s_bar).bit_length() if s_bar > 0 else 0


def _next_pow2_exponent(ratio):
    # smallest k >= 0 with 2**k >= ratio, forgiving rounding in ratio
    k = max(0, math.ceil(math.log2(ratio) - _TOL))
    while 2.0 ** k < ratio * (1 - _TOL):
        k += 1
    return k


def extended_support(faces, delta, n, check_separation=True):
    """Pad a separated jump set to ``2**k - 1`` nearly equispaced faces.

    Each jump claims the nearest point of the grid ``i * n / (s_bar + 1)``
    (ties go to the smaller grid index); unclaimed grid points are rounded
    half up to faces and added as ghost jumps.

    Parameters
    ----------
    faces : array_like of int
        1-based jump faces.
    delta : float
        Separation constant to use; must satisfy ``8 s / n <= delta`` and not
        exceed the actual separation of ``faces``.
    n : int
        Signal length.
    check_separation : bool
        Enforce ``delta >= 8 s / n``.  Without it the construction may still
        succeed, but the spacing guarantees are void.

    Returns
    -------
    numpy.ndarray
        Sorted extended support of size ``s_bar = 2**k - 1`` with
        ``2**k >= (s + 1) / delta``.
    """
    faces = np.sort(np.unique(np.asarray(faces, dtype=np.int64)))
    s = faces.size
    if s == 0:
        raise InvalidParameters("extended support needs at least one jump")
    rep = separation_discrete(faces, n)
    if delta > rep.delta * (1 + _TOL):
        raise InvalidParameters(f"delta={delta} exceeds the separation {rep.delta} of the support")
    if check_separation and delta < 8 * s / n * (1 - _TOL):
        raise SeparationTooSmall(f"delta={delta} below 8 s / n = {8 * s / n}")
    k = _next_pow2_exponent((s + 1) / delta)
    q = 2 ** k  # s_bar + 1
    claimed = {}
    for v in faces:
        v = int(v)
        i = (v * q) // n  # grid point at or below v
        best = None
        for c in (i, i + 1):
            if 1 <= c <= q - 1:
                dist = abs(v * q - c * n)
                if best is None or dist < best[0]:
                    best = (dist, c)
        if best is None or best[1] in claimed:
            raise SeparationTooSmall(f"jump {v} cannot claim a free grid point")
        claimed[best[1]] = v
    out = []
    for i in range(1, q):
        if i in claimed:
            out.append(claimed[i])
        else:
            out.append((2 * i * n + q) // (2 * q))  # round half up of i n / q
    out = np.array(out, dtype=np.int64)
    if np.any(np.diff(out) <= 0):
        raise SeparationTooSmall("extended support collapsed two grid points")
    return out


def isometry_violations(sbar, n):
    """Pairs violating ``h |i - j| / 4 <= |z_i - z_j| <= 2 h |i - j|``.

    The boundary faces 0 and n are included as ``z_0`` and ``z_{s_bar+1}``
    and ``h = n / (s_bar + 1)``.
    """
    z = np.concatenate(([0], np.asarray(sbar, dtype=np.int64), [n])).astype(float)
    h = n / (len(z) - 1)
    idx = np.arange(len(z))
    di = np.abs(idx[:, None] - idx[None, :])
    dz = np.abs(z[:, None] - z[None, :])
    bad = (dz < 0.25 * h * di * (1 - _TOL)) | (dz > 2 * h * di * (1 + _TOL))
    return int(np.count_nonzero(np.triu(bad, 1)))


@dataclass(frozen=True, eq=False)
class SignalTree:
    """Level-ordered median-split tree.

    Attributes
    ----------
    n : int
        Signal length; the tree has ``n - 1`` vertices, one per face.
    support_bar : ndarray
        Extended support the pivots were taken from.
    level, index : ndarray
        Position ``(level, index)`` of each vertex, both 1-based.
    pivot, left, right : ndarray
        Pivot face and neighbouring faces (0 and n are ghosts).
    lo, hi : ndarray
        Face range owned by the vertex.
    parent, child_left, child_right : ndarray
        Vertex ids, -1 when absent.
    label : ndarray
        ``LABEL_L0`` (pivot in the extended support), ``LABEL_NAT`` (a
        neighbour in it) or ``LABEL_CIRC``.
    vertex_of_face : ndarray
        Length ``n + 1``; vertex id whose pivot is the face, -1 at ghosts.
    """

    n: int
    support_bar: np.ndarray
    level: np.ndarray
    index: np.ndarray
    pivot: np.ndarray
    left: np.ndarray
    right: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    parent: np.ndarray
    child_left: np.ndarray
    child_right: np.ndarray
    label: np.ndarray
    vertex_of_face: np.ndarray = field(repr=False)

    @property
    def size(self):
        return self.n - 1

    @property
    def s_bar(self):
        return int(self.support_bar.size)

    @property
    def depth(self):
        return int(self.level.max())

    @property
    def top_depth(self):
        return top_depth(self.s_bar)

    @property
    def n_left(self):
        """Size of the left half ``left+1 .. pivot`` of the node range."""
        return self.pivot - self.left

    @property
    def n_right(self):
        """Size of the right half ``pivot+1 .. right`` of the node range."""
        return self.right - self.pivot

    def vertices_with_label(self, label):
        return np.flatnonzero(self.label == label)

    def to_dict(self):
        verts = []
        for v in range(self.size):
            verts.append({
                "id": v,
                "level": int(self.level[v]),
                "index": int(self.index[v]),
                "pivot": int(self.pivot[v]),
                "left": int(self.left[v]),
                "right": int(self.right[v]),
                "range": [int(self.lo[v]), int(self.hi[v])],
                "parent": int(self.parent[v]),
                "children": [int(self.child_left[v]), int(self.child_right[v])],
                "label": LABEL_NAMES[int(self.label[v])],
            })
        return {
            "n": self.n,
            "support_bar": [int(v) for v in self.support_bar],
            "s_bar": self.s_bar,
            "depth": self.depth,
            "top_depth": self.top_depth,
            "vertices": verts,
        }

    def to_dot(self):
        shape = {LABEL_L0: "box", LABEL_NAT: "ellipse", LABEL_CIRC: "plaintext"}
        lines = ["digraph tree {"]
        for v in range(self.size):
            lines.append(f'  v{v} [label="{int(self.pivot[v])}", shape={shape[int(self.label[v])]}];')
        for v in range(self.size):
            for c in (self.child_left[v], self.child_right[v]):
                if c >= 0:
                    lines.append(f"  v{v} -> v{int(c)};")
        lines.append("}")
        return "\n".join(lines) + "\n"


def build_tree(support_bar, n):
    """Build the median-split tree for an extended support.

    Parameters
    ----------
    support_bar : array_like of int
        1-based faces; may be empty (then pivots are plain range medians).
    n : int
        Signal length, at least 2.
    """
    if n < 2:
        raise InvalidParameters("n must be at least 2")
    sbar = np.unique(np.asarray(support_bar, dtype=np.int64))
    if sbar.size and (sbar[0] < 1 or sbar[-1] > n - 1):
        raise InvalidParameters("extended support must lie in 1..n-1")
    (level, index, pivot, left, right, lo, hi, parent,
     child_l, child_r, label) = build_tree_arrays(sbar, n)
    vof = np.full(n + 1, -1, dtype=np.int64)
    vof[pivot] = np.arange(n - 1)
    arrays = [sbar, level, index, pivot, left, right, lo, hi, parent, child_l, child_r, label, vof]
    for a in arrays:
        a.setflags(write=False)
    return SignalTree(n, *arrays)


def decompose(tree):
    """Labels of the three vertex classes as index arrays.

    Returns
    -------
    dict
        ``{"top": ids, "adjacent": ids, "free": ids}``.
    """
    return {name: tree.vertices_with_label(lab) for lab, name in LABEL_NAMES.items()}


def haar_constants(tree):
    """Per-vertex ``(d, d_left, d_right)``.

    ``d = sqrt((nl + nr) / (nl nr))``, ``d_left = nr / (nl + nr)`` and
    ``d_right = nl / (nl + nr)`` where ``nl, nr`` are the half sizes.
    """
    nl = tree.n_left.astype(float)
    nr = tree.n_right.astype(float)
    tot = nl + nr
    return np.sqrt(tot / (nl * nr)), nr / tot, nl / tot


def level_scale(level, n):
    """Reference scale ``sqrt(2**(level + 1) / n)`` of a dyadic Haar row."""
    return np.sqrt(2.0 ** (np.asarray(level, dtype=float) + 1) / n)


@dataclass(frozen=True)
class BalancingReport:
    """Ratios of the Haar constants to their dyadic reference scale.

    ``beta[v] = d[v] / level_scale(level[v], n)``; extrema are ``nan`` for
    an empty class.
    """

    beta: np.ndarray
    beta_max_top: float
    beta_max_adjacent: float
    beta_min_free: float
    beta_min: float
    beta_max: float


def balancing(tree):
    d, _, _ = haar_constants(tree)
    beta = d / level_scale(tree.level, tree.n)

    def ext(lab, fn):
        sel = beta[tree.label == lab]
        return float(fn(sel)) if sel.size else float("nan")

    return BalancingReport(
        beta=beta,
        beta_max_top=ext(LABEL_L0, np.max),
        beta_max_adjacent=ext(LABEL_NAT, np.max),
        beta_min_free=ext(LABEL_CIRC, np.min),
        beta_min=float(beta.min()),
        beta_max=float(beta.max()),
    )


def tree_for_signal(faces, n, delta=None):
    """Extended support and tree for a jump set; ``delta`` defaults to its separation."""
    if delta is None:
        delta = separation_discrete(faces, n).delta
    sbar = extended_support(faces, delta, n)
    return build_tree(sbar, n)
