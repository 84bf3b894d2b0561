"""Random test instances shared by several test modules."""
import numpy as np

from tvcs.signals import random_levels, random_separated_support, signal_from_faces


def separated_support(rng, n, s_max=12):
    """Random face set with a separation constant delta >= 8 s / n.

    Returns ``(faces, delta)`` where ``delta`` is drawn between the lower
    limit and the actual separation of the faces.
    """
    s = int(rng.integers(1, max(1, min(s_max, n // 8)) + 1))
    while True:
        lo = 8 * s / n
        hi = (s + 1) * (n // (s + 1)) / n
        if lo <= hi or s == 1:
            break
        s -= 1
    delta = float(rng.uniform(lo, hi))
    faces = random_separated_support(n, s, delta, rng)
    return faces, delta


def separated_signal(rng, n, s_max=12):
    faces, delta = separated_support(rng, n, s_max)
    return signal_from_faces(n, faces, random_levels(faces.size + 1, rng)), delta


def solver_instance(rng, n_max=64, noisy=None):
    """Random ``(A, y, eta, x_star)`` with n <= n_max and y consistent with x_star."""
    from tvcs.signals import generate

    n = int(rng.integers(8, n_max + 1))
    s = int(rng.integers(1, max(2, n // 8)))
    family = rng.choice(["equidistant", "dense-jump"])
    x = generate(str(family), s=s, n=n, rng=rng).values
    m = int(rng.integers(max(2, n // 4), n))
    A = rng.standard_normal((m, n))
    y = A @ x
    noisy = bool(rng.integers(2)) if noisy is None else noisy
    eta = 0.0
    if noisy:
        eta = float(rng.uniform(0.01, 0.2))
        e = rng.standard_normal(m)
        y = y + e * (eta * rng.uniform(0.5, 1.0) / np.linalg.norm(e))
    return A, y, eta, x
