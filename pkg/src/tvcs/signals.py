"""Piecewise constant signals, their discretizations and separation constants."""
from dataclasses import dataclass
from functools import cached_property
import json
import math

import numpy as np

from .errors import InvalidParameters, NoJumps, ResolutionTooCoarse
from .gradient import grad, support as _face_support

FAMILIES = ("discretized-pcf", "random-jump", "densifying", "equidistant", "dense-jump")
DISCRETE_FAMILIES = ("equidistant", "dense-jump", "discretized-pcf")
MIN_LEVEL_GAP = 0.1


@dataclass(frozen=True)
class PiecewiseConstantFn:
    """Right-continuous-from-the-left step function on (0, 1].

    ``levels[i]`` is the value on ``(jumps[i-1], jumps[i]]`` with the
    conventions ``jumps[-1] = 0`` and ``jumps[s] = 1``.
    """

    jumps: tuple
    levels: tuple

    def __post_init__(self):
        jumps = tuple(float(v) for v in self.jumps)
        levels = tuple(float(v) for v in self.levels)
        if len(levels) != len(jumps) + 1:
            raise InvalidParameters("need exactly one more level than jumps")
        if any(not 0.0 < v < 1.0 for v in jumps):
            raise InvalidParameters("jumps must lie strictly inside (0, 1)")
        if any(b <= a for a, b in zip(jumps, jumps[1:])):
            raise InvalidParameters("jumps must be strictly increasing")
        if any(a == b for a, b in zip(levels, levels[1:])):
            raise InvalidParameters("adjacent levels must differ")
        object.__setattr__(self, "jumps", jumps)
        object.__setattr__(self, "levels", levels)

    @property
    def s(self):
        return len(self.jumps)

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        piece = np.searchsorted(np.asarray(self.jumps), t, side="left")
        return np.asarray(self.levels)[piece]

    def to_json(self):
        return json.dumps({"jumps": list(self.jumps), "levels": list(self.levels)})

    @classmethod
    def from_json(cls, text):
        obj = json.loads(text)
        return cls(tuple(obj["jumps"]), tuple(obj["levels"]))


@dataclass(frozen=True)
class SeparationReport:
    """Jump count, smallest gap and the separation constant.

    For discrete signals the gap is measured in faces and
    ``delta = (s + 1) * min_gap / n``; for functions on (0, 1] the gap is a
    length and ``delta = (s + 1) * min_gap``.
    """

    s: int
    min_gap: float
    delta: float
    discrete: bool


@dataclass(frozen=True, eq=False)
class Signal:
    """Discrete signal of length n.

    Parameters
    ----------
    values : array_like
        Node values.
    tol : float, optional
        Relative threshold used to decide which faces carry a jump; 0 keeps
        every non-zero difference (right for generated signals), a positive
        value is meant for data loaded from text.
    """

    values: np.ndarray
    tol: float = 0.0

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim != 1 or v.size < 2:
            raise InvalidParameters("a signal needs a 1-D array of length >= 2")
        if not np.all(np.isfinite(v)):
            raise InvalidParameters("signal values must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def n(self):
        return self.values.size

    @cached_property
    def gradient(self):
        g = grad(self.values)
        g.setflags(write=False)
        return g

    @cached_property
    def support(self):
        thr = self.tol * max(1.0, float(np.max(np.abs(self.values))))
        return _face_support(self.gradient, thr)

    @property
    def s(self):
        return int(self.support.size)

    @cached_property
    def sign_pattern(self):
        """Sign of the gradient restricted to the support (zeros elsewhere)."""
        out = np.zeros(self.n - 1)
        idx = self.support - 1
        out[idx] = np.sign(self.gradient[idx])
        return out

    @cached_property
    def separation(self):
        return separation_discrete(self.support, self.n)

    def to_csv(self):
        lines = [f"# n={self.n}"] + [repr(float(v)) for v in self.values]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_csv(cls, text, tol=1e-12):
        vals = []
        declared = None
        for line in text.splitlines():
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                body = line[1:].strip()
                if body.startswith("n="):
                    declared = int(body[2:])
                continue
            vals.extend(float(tok) for tok in line.split(",") if tok.strip())
        if declared is not None and declared != len(vals):
            raise InvalidParameters(f"header declares n={declared} but found {len(vals)} values")
        return cls(np.array(vals), tol=tol)


def separation_discrete(faces, n):
    """Separation of a 1-based face set, with 0 and n as boundary faces.

    Parameters
    ----------
    faces : array_like of int
        Jump faces in ``1..n-1``.
    n : int
        Signal length.
    """
    faces = np.sort(np.asarray(faces, dtype=np.int64))
    if faces.size == 0:
        raise NoJumps("separation is undefined without jumps")
    if faces[0] < 1 or faces[-1] > n - 1:
        raise InvalidParameters("faces must lie in 1..n-1")
    pts = np.concatenate(([0], faces, [n]))
    gap = int(np.min(np.diff(pts)))
    s = faces.size
    return SeparationReport(s=s, min_gap=gap, delta=(s + 1) * gap / n, discrete=True)


def separation_continuous(f):
    """Separation of a piecewise constant function, with 0 and 1 as boundaries."""
    if f.s == 0:
        raise NoJumps("separation is undefined without jumps")
    pts = np.concatenate(([0.0], f.jumps, [1.0]))
    gap = float(np.min(np.diff(pts)))
    return SeparationReport(s=f.s, min_gap=gap, delta=(f.s + 1) * gap, discrete=False)


def discretize(f, n):
    """Sample ``f`` at ``j / n`` for ``j = 1..n``.

    Raises
    ------
    ResolutionTooCoarse
        If two jumps fall between consecutive grid points, so the sampled
        signal loses a jump.
    """
    if n < 2:
        raise InvalidParameters("n must be at least 2")
    grid = np.arange(1, n + 1) / n
    x = Signal(f(grid))
    if x.s != f.s:
        raise ResolutionTooCoarse(f"n={n} resolves {x.s} of {f.s} jumps")
    return x


def random_levels(count, rng, min_gap=MIN_LEVEL_GAP):
    """I.i.d. U[-1, 1] levels, each redrawn until it differs from its predecessor by ``min_gap``."""
    out = np.empty(count)
    for i in range(count):
        v = rng.uniform(-1.0, 1.0)
        while i > 0 and abs(v - out[i - 1]) < min_gap:
            v = rng.uniform(-1.0, 1.0)
        out[i] = v
    return out


def _alternating_levels(count):
    return np.array([float(i % 2) for i in range(count)])


def signal_from_faces(n, faces, levels):
    """Signal with the given 1-based jump faces and piece levels."""
    faces = np.sort(np.asarray(faces, dtype=np.int64))
    levels = np.asarray(levels, dtype=float)
    if levels.size != faces.size + 1:
        raise InvalidParameters("need one more level than jump faces")
    piece = np.searchsorted(faces, np.arange(1, n + 1), side="left")
    return Signal(levels[piece])


def equidistant_faces(n, s):
    """Jump faces ``floor(i n / (s + 1))`` for ``i = 1..s``."""
    return np.array([(i * n) // (s + 1) for i in range(1, s + 1)], dtype=np.int64)


def random_separated_support(n, s, delta, rng):
    """Random face set of size ``s`` whose separation is at least ``delta``.

    Gaps between consecutive faces (boundaries included) are at least
    ``ceil(delta * n / (s + 1))``; the slack is spread uniformly at random.
    """
    min_gap = math.ceil(delta * n / (s + 1) - 1e-12)
    slack = n - (s + 1) * min_gap
    if min_gap < 1 or slack < 0:
        raise InvalidParameters(f"no {s}-jump set with separation {delta} at n={n}")
    cuts = np.sort(rng.integers(0, slack + 1, size=s))
    extra = np.diff(np.concatenate(([0], cuts, [slack])))
    gaps = min_gap + extra
    return np.cumsum(gaps[:-1]).astype(np.int64)


def generate(family, *, s, n=None, fn=None, levels=None, rng=None):
    """Draw a signal from one of the named families.

    Parameters
    ----------
    family : str
        ``equidistant``, ``dense-jump`` and ``discretized-pcf`` return a
        :class:`Signal` of length ``n``; ``random-jump`` and ``densifying``
        return a :class:`PiecewiseConstantFn`.
    s : int
        Number of jumps.
    n : int, optional
        Signal length for the discrete families.
    fn : PiecewiseConstantFn, optional
        Function to sample for ``discretized-pcf``.  When omitted a
        ``random-jump`` function is drawn first.
    levels : array_like, optional
        Piece levels (``s + 1`` values).  Defaults to random levels when an
        ``rng`` is given and to alternating 0/1 levels otherwise.
    rng : numpy.random.Generator, optional
    """
    if family not in FAMILIES:
        raise InvalidParameters(f"unknown family {family!r}")
    if s < 1:
        raise InvalidParameters("families need at least one jump")
    if family in DISCRETE_FAMILIES and n is None:
        raise InvalidParameters(f"family {family!r} needs n")
    if levels is None:
        levels = random_levels(s + 1, rng) if rng is not None else _alternating_levels(s + 1)
    levels = np.asarray(levels, dtype=float)
    if levels.size != s + 1:
        raise InvalidParameters("need s + 1 levels")

    if family == "equidistant":
        if n < s + 1:
            raise ResolutionTooCoarse(f"n={n} cannot hold {s} equidistant jumps")
        return signal_from_faces(n, equidistant_faces(n, s), levels)
    if family == "dense-jump":
        if n < s + 2:
            raise ResolutionTooCoarse(f"n={n} cannot hold {s} consecutive jumps")
        if rng is not None:
            heights = rng.uniform(MIN_LEVEL_GAP, 1.0, size=s)
        else:
            heights = np.ones(s)
        # gradient sign (-1)^i on faces 1..s
        steps = heights * (-1.0) ** np.arange(1, s + 1)
        lv = np.concatenate(([levels[0]], levels[0] + np.cumsum(steps)))
        return signal_from_faces(n, np.arange(1, s + 1), lv)
    if family == "densifying":
        jumps = tuple(1.0 - 2.0 ** (-i) for i in range(1, s + 1))
        return PiecewiseConstantFn(jumps, tuple(levels))
    if family == "random-jump":
        if rng is None:
            raise InvalidParameters("random-jump needs an rng")
        jumps = np.sort(rng.uniform(0.0, 1.0, size=s))
        while np.any(np.diff(jumps) == 0) or jumps[0] == 0.0:
            jumps = np.sort(rng.uniform(0.0, 1.0, size=s))
        return PiecewiseConstantFn(tuple(jumps), tuple(levels))
    # discretized-pcf
    if fn is None:
        fn = generate("random-jump", s=s, levels=levels, rng=rng)
    return discretize(fn, n)
