"""Total-variation minimisation under linear measurements.

Solves ``min ||grad x||_1`` subject to ``||A x - y||_2 <= eta`` (``eta = 0``
means equality constraints).  Two methods are available:

``pdhg``
    Primal-dual hybrid gradient on ``K = [grad; V^T]`` where ``A = U S V^T``;
    the measurement constraint becomes an ellipsoid (a point when
    ``eta = 0``) in the whitened coordinates ``V^T x``.
``dr``
    Douglas-Rachford splitting in gradient coordinates ``x = grad^+ z + c 1``:
    soft-thresholding on ``z`` alternates with the exact projection onto the
    measurement constraint.  Usually one to two orders of magnitude faster.

Both report a dual certificate: a face vector ``w`` with ``|w| <= 1`` and
multipliers ``lam`` fitted by least squares to ``A^T lam = grad^T w``.
"""
from dataclasses import dataclass, replace
import math

import numpy as np
from scipy.optimize import brentq

from .errors import DimensionError, InvalidParameters
from .gradient import grad, grad_adjoint, grad_pinv

STATUSES = ("converged", "max-iters", "infeasible-input", "cutoff")


@dataclass(frozen=True, eq=False)
class MeasurementModel:
    """Measurement matrix, observations and noise level."""

    A: np.ndarray
    y: np.ndarray
    eta: float = 0.0

    def __post_init__(self):
        A = np.asarray(self.A, dtype=float)
        y = np.asarray(self.y, dtype=float).ravel()
        if A.ndim != 2:
            raise DimensionError("A must be a matrix")
        if A.shape[0] != y.size:
            raise DimensionError(f"A has {A.shape[0]} rows but y has {y.size} entries")
        if A.shape[1] < 2:
            raise DimensionError("signals need length >= 2")
        if A.shape[0] < 1:
            raise DimensionError("need at least one measurement")
        if not (self.eta >= 0 and math.isfinite(self.eta)):
            raise InvalidParameters("eta must be a finite non-negative number")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "eta", float(self.eta))

    @property
    def m(self):
        return self.A.shape[0]

    @property
    def n(self):
        return self.A.shape[1]


@dataclass(frozen=True)
class SolveOptions:
    """Solver settings.

    ``tol`` is a relative tolerance on feasibility and on the fixed-point or
    primal-dual residuals; ``gap_tol`` bounds the duality gap relative to
    ``1 + |objective|``.  ``step_ratio`` sets ``tau / sigma = step_ratio^2``
    for the primal-dual method (default: a multiple of the largest entry of
    the least-norm solution).  ``polish`` re-solves the equality-constrained
    problem exactly on the detected jump set and keeps the result when it is
    feasible, sign-consistent and no worse.  ``objective_cutoff`` stops as soon as a feasible
    iterate has objective below the given value (status ``cutoff``), which
    certifies that any reference signal with that TV norm is not the
    minimiser.
    """

    method: str = "pdhg"
    tol: float = 1e-8
    max_iters: int = 200_000
    gap_tol: float = 1e-7
    check_every: int = 10
    objective_cutoff: float | None = None
    step_ratio: float | None = None
    dr_step: float | None = None
    polish: bool = True


@dataclass
class SolveResult:
    x: np.ndarray
    objective: float
    feasibility_residual: float
    primal_dual_gap: float
    iterations: int
    status: str
    dual_residual: float = float("nan")
    method: str = ""
    w: np.ndarray | None = None
    lam: np.ndarray | None = None


def tv_norm(x):
    return float(np.sum(np.abs(grad(x))))


def success(x_hat, x_star, tol=1e-4):
    """Relative recovery test ``||x_hat - x*|| <= tol * max(||x*||, 1)``."""
    x_hat = np.asarray(x_hat, dtype=float)
    x_star = np.asarray(x_star, dtype=float)
    return bool(np.linalg.norm(x_hat - x_star) <= tol * max(np.linalg.norm(x_star), 1.0))


def operator_norm(apply, adjoint, n, tol=1e-6, max_iter=5000, rng=None):
    """Largest singular value of a linear map by power iteration on ``K^T K``."""
    rng = np.random.default_rng(0) if rng is None else rng
    v = rng.standard_normal(n)
    v /= np.linalg.norm(v)
    est = 0.0
    for _ in range(max_iter):
        w = adjoint(apply(v))
        nw = np.linalg.norm(w)
        if nw == 0:
            return 0.0
        v = w / nw
        new = math.sqrt(nw)
        if abs(new - est) <= tol * new:
            return new
        est = new
    return est


def _measurement_factor(A):
    U, S, Vt = np.linalg.svd(A, full_matrices=False)
    keep = S > S[0] * 1e-12 if S.size else S > 0
    return U[:, keep], S[keep], Vt[keep]


class _Certificate:
    """Dual certificate bookkeeping shared by the methods."""

    def __init__(self, model, factor=None):
        self.model = model
        self.U, self.S, self.Vt = factor if factor is not None else _measurement_factor(model.A)
        self.ynorm = float(np.linalg.norm(model.y))

    def multipliers(self, w):
        # least-squares lam with A^T lam ~ grad^T w
        rhs = grad_adjoint(w)
        return self.U @ ((self.Vt @ rhs) / self.S), rhs

    def evaluate(self, x, w):
        mdl = self.model
        obj = tv_norm(x)
        feas = max(float(np.linalg.norm(mdl.A @ x - mdl.y)) - mdl.eta, 0.0)
        lam, rhs = self.multipliers(w)
        dual = float(lam @ mdl.y - mdl.eta * np.linalg.norm(lam))
        dres = float(np.linalg.norm(mdl.A.T @ lam - rhs))
        return obj, feas, abs(obj - dual), dres, lam


def _consistency(model, factor):
    # equality constraints need y in the range of A; otherwise the
    # distance from y to the range must not exceed eta
    U = factor[0]
    off = float(np.linalg.norm(model.y - U @ (U.T @ model.y)))
    return off


def solve_tv(model, opts=None, **kwargs):
    """Solve the TV problem for ``model``.

    Parameters
    ----------
    model : MeasurementModel
    opts : SolveOptions, optional
    **kwargs
        Overrides for fields of ``opts``.

    Returns
    -------
    SolveResult
    """
    opts = SolveOptions() if opts is None else opts
    if kwargs:
        opts = replace(opts, **kwargs)
    if opts.tol <= 0 or opts.max_iters < 1:
        raise InvalidParameters("tol must be positive and max_iters at least 1")
    if not (np.all(np.isfinite(model.A)) and np.all(np.isfinite(model.y))):
        return SolveResult(np.full(model.n, np.nan), float("nan"), float("inf"), float("inf"),
                           0, "infeasible-input", method=opts.method)
    factor = _measurement_factor(model.A)
    off = _consistency(model, factor)
    scale = 1.0 + float(np.linalg.norm(model.y))
    if off > model.eta + 1e-10 * scale:
        x = np.zeros(model.n)
        return SolveResult(x, 0.0, off - model.eta, float("inf"), 0, "infeasible-input",
                           method=opts.method)
    if opts.method == "pdhg":
        return _solve_pdhg(model, opts, factor)
    if opts.method == "dr":
        return _solve_dr(model, opts, factor)
    raise InvalidParameters(f"unknown method {opts.method!r}")


def _converged(opts, obj, feas, gap, ynorm):
    return feas <= opts.tol * (1 + ynorm) and gap <= opts.gap_tol * (1 + abs(obj))


def _polish(model, x, lam_hint=None, rel=1e-6, Ball=None, signs=None, rounds=30):
    """Exact solve on the detected jump set with the detected signs.

    On a fixed jump set ``J`` with signs ``sigma`` the problem becomes
    ``min sigma^T z_J`` over ``||M zc - y|| <= eta`` with
    ``M = [A grad^+ restricted to J, A 1]``, which has a closed-form
    solution when ``M`` has full column rank.  When the resulting multipliers
    violate ``|w| <= 1`` off ``J`` the most violated face joins ``J`` with the
    sign of ``w``; faces whose solved jump has the wrong sign leave ``J``.

    Returns ``(x, w)`` where ``w`` is an exact dual certificate when one was
    found (else ``None``); ``(None, None)`` when polishing does not apply.
    The jump set and signs come from ``signs`` when given, else from
    thresholding ``grad x`` at ``rel`` times its largest entry.
    """
    z = grad(x)
    if signs is None:
        zmax = float(np.max(np.abs(z))) if z.size else 0.0
        signs = np.where(np.abs(z) > rel * max(zmax, 1e-300), np.sign(z), 0.0)
    signs = np.array(signs, dtype=float)
    if Ball is None:
        Ball = pinv_columns(model.A)
    a = model.A.sum(axis=1)
    ynorm = 1 + float(np.linalg.norm(model.y))
    tv_x = tv_norm(x)
    best = (None, None)
    for _ in range(rounds):
        J = np.flatnonzero(signs)
        if J.size + 1 > model.m:
            return best
        M = np.column_stack([Ball[:, J], a])
        U, S, Vt = np.linalg.svd(M, full_matrices=False)
        if S[-1] <= 1e-10 * S[0]:
            return best
        sigma = signs[J]
        c = np.concatenate([sigma, [0.0]])
        zc = Vt.T @ ((U.T @ model.y) / S)
        rho = float(np.linalg.norm(M @ zc - model.y))
        pc = U @ ((Vt @ c) / S)  # pinv(M)^T c
        if model.eta == 0:
            if rho > 1e-11 * ynorm:
                return best
            lam_fixed = None
        else:
            if rho > model.eta:
                return best
            eta_eff = math.sqrt(model.eta ** 2 - rho ** 2)
            npc = float(np.linalg.norm(pc))
            e = -eta_eff * pc / npc
            zc = zc + Vt.T @ ((U.T @ e) / S)
            lam_fixed = (model.y - M @ zc) * (npc / eta_eff) if eta_eff > 0 else None
        wrong = np.sign(zc[:-1]) != sigma
        if np.any(wrong):
            signs[J[wrong]] = 0.0
            continue
        zp = np.zeros_like(z)
        zp[J] = zc[:-1]
        xp = grad_pinv(zp) + zc[-1]
        if np.linalg.norm(model.A @ xp - model.y) > model.eta + 1e-11 * ynorm:
            return best
        cands = []
        if lam_fixed is not None:
            cands.append(lam_fixed)
        elif model.eta == 0:
            # multipliers with M^T lam = c: the solver's own ones moved onto that
            # affine set, then the minimum-norm ones
            if lam_hint is not None:
                cands.append(lam_hint - U @ ((Vt @ (M.T @ lam_hint - c)) / S))
            cands.append(pc)
        if not cands:
            return best
        ws = [Ball.T @ lam for lam in cands]
        for w in ws:
            if np.max(np.abs(w)) <= 1 + 1e-9:
                return xp, np.clip(w, -1.0, 1.0)
        if tv_norm(xp) <= tv_x + 1e-12 * (1 + tv_x):
            best = (xp, None)
        w = min(ws, key=lambda v: float(np.max(np.abs(v))))
        viol = np.abs(w)
        viol[J] = 0.0
        j = int(np.argmax(viol))
        signs[j] = np.sign(w[j])
    return best


class _PolishTracker:
    """Attempt a polish once the detected sign pattern is stable across two checks."""

    def __init__(self):
        self.prev = None
        self.tried = set()

    def ready(self, signs):
        key = signs.astype(np.int8).tobytes()
        stable = key == self.prev and key not in self.tried
        self.prev = key
        if stable:
            self.tried.add(key)
        return stable


def _finish(model, opts, cert, x, w, Ball=None, signs=None):
    """Try to polish; returns ``(x, w, certified)``."""
    xp, wp = _polish(model, x, cert.multipliers(w)[0], Ball=Ball, signs=signs)
    if xp is not None:
        w_use = wp if wp is not None else w
        obj, feas, gap, dres, lam = cert.evaluate(xp, w_use)
        if _converged(opts, obj, feas, gap, cert.ynorm) and dres <= opts.tol * (1 + obj):
            return xp, w_use, True
    return x, w, False


# ---------------------------------------------------------------------------
# primal-dual hybrid gradient

def project_ellipsoid(a, S, yt, r):
    """Project ``a`` onto ``{b : ||S b - yt|| <= r}`` (``S`` diagonal, positive).

    The projection is ``(a + mu S yt) / (1 + mu S^2)`` with ``mu >= 0``
    chosen by a scalar root find so that the constraint is active.
    """
    res = S * a - yt
    if np.linalg.norm(res) <= r:
        return a
    if r == 0:
        return yt / S
    f = lambda mu: np.linalg.norm(res / (1 + mu * S ** 2)) - r
    hi = 1.0
    while f(hi) > 0:
        hi *= 4.0
    mu = brentq(f, 0.0, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps)
    return (a + mu * S * yt) / (1 + mu * S ** 2)


def _solve_pdhg(model, opts, factor):
    U, S, Vt = factor
    y, eta = model.y, model.eta
    n = model.n
    # whitened constraint: A x = U S (Vt x) plus an off-range part of y
    At = Vt
    yt = U.T @ y
    off2 = max(float(y @ y - yt @ yt), 0.0)
    rad = math.sqrt(max(eta ** 2 - off2, 0.0))
    cert = _Certificate(model, factor)

    def K(x):
        return grad(x), At @ x

    def KT(p, q):
        return grad_adjoint(p) + At.T @ q

    L = operator_norm(lambda v: np.concatenate(K(v)),
                      lambda u: KT(u[:n - 1], u[n - 1:]), n)
    L *= 1.01
    omega = opts.step_ratio
    if omega is None:
        # primal steps on the scale of the least-norm solution; smaller for
        # the ellipsoid constraint, whose dual converges more slowly
        xi = float(np.max(np.abs(Vt.T @ ((U.T @ y) / S))))
        omega = (0.03 if eta == 0 else 0.01) * (xi if xi > 0 else 1.0)
    tau = omega / L
    sigma = 1.0 / (omega * L)

    x = np.zeros(n)
    p = np.zeros(n - 1)
    q = np.zeros(At.shape[0])
    kx_p, kx_q = K(x)
    kty = KT(p, q)
    status = "max-iters"
    it = 0
    tracker = _PolishTracker()
    Ball = pinv_columns(model.A) if opts.polish else None
    for it in range(1, opts.max_iters + 1):
        x_new = x - tau * kty
        kxn_p, kxn_q = K(x_new)
        # extrapolated point enters only through K
        p_new = np.clip(p + sigma * (2 * kxn_p - kx_p), -1.0, 1.0)
        vq = q + sigma * (2 * kxn_q - kx_q)
        q_new = vq - sigma * project_ellipsoid(vq / sigma, S, yt, rad)
        kty_new = KT(p_new, q_new)
        if it % opts.check_every == 0:
            # Chambolle-Pock residuals, made scale-free by the step sizes
            dx = x - x_new
            prim = np.linalg.norm(dx / tau - (kty - kty_new))
            dual = math.sqrt(np.sum(((p - p_new) / sigma - (kx_p - kxn_p)) ** 2)
                             + np.sum(((q - q_new) / sigma - (kx_q - kxn_q)) ** 2))
            x, p, q, kx_p, kx_q, kty = x_new, p_new, q_new, kxn_p, kxn_q, kty_new
            obj, feas, gap, dres, lam = cert.evaluate(x, p)
            if opts.objective_cutoff is not None and obj < opts.objective_cutoff \
                    and feas <= 1e-9 * (1 + cert.ynorm):
                status = "cutoff"
                break
            ynorm_d = math.sqrt(p @ p + q @ q)
            if (_converged(opts, obj, feas, gap, cert.ynorm)
                    and prim * tau <= opts.tol * (1 + np.linalg.norm(x))
                    and dual * sigma <= opts.tol * (1 + ynorm_d)):
                status = "converged"
                break
            if opts.polish:
                gx = grad(x)
                gmax = np.max(np.abs(gx)) if gx.size else 0.0
                signs = np.where(np.abs(gx) > 1e-5 * gmax, np.sign(gx), 0.0)
                if tracker.ready(signs):
                    x_p, p_p, ok = _finish(model, opts, cert, x, p, Ball, signs)
                    if ok:
                        x, p, status = x_p, p_p, "converged"
                        break
        else:
            x, p, q, kx_p, kx_q, kty = x_new, p_new, q_new, kxn_p, kxn_q, kty_new
    if status == "converged" and opts.polish:
        x, p, _ = _finish(model, opts, cert, x, p, Ball)
    obj, feas, gap, dres, lam = cert.evaluate(x, p)
    return SolveResult(x, obj, feas, gap, it, status, dres, "pdhg", p, lam)


# ---------------------------------------------------------------------------
# Douglas-Rachford in gradient coordinates

def pinv_columns(A):
    """``A grad^+`` without forming the pseudo-inverse (tail sums of columns)."""
    A = np.asarray(A, dtype=float)
    n = A.shape[1]
    tail = np.cumsum(A[:, ::-1], axis=1)[:, ::-1][:, 1:]  # sum of columns j > k
    frac = (n - 1 - np.arange(n - 1)) / n
    return tail - A.sum(axis=1, keepdims=True) * frac


def _from_gradient_coords(zc):
    return grad_pinv(zc[:-1]) + zc[-1]


class _Projector:
    """Projection onto ``{zc : ||M zc - y|| <= eta}`` with ``M = [A grad^+, A 1]``."""

    def __init__(self, A, y, eta):
        B = pinv_columns(A)
        M = np.hstack([B, A.sum(axis=1, keepdims=True)])
        self.M = M
        self.y = y
        self.eta = eta
        if eta == 0:
            Q, R = np.linalg.qr(M.T)
            keep = np.abs(np.diag(R)) > 1e-12 * max(np.abs(np.diag(R)).max(), 1e-300)
            if not np.all(keep):
                U, S, Vt = _measurement_factor(M)
                self.V = Vt.T
                self.b = (U.T @ y) / S
            else:
                self.V = Q
                self.b = np.linalg.solve(R.T, y)
        else:
            U, S, Vt = _measurement_factor(M)
            self.V = Vt.T
            self.S = S
            yt = U.T @ y
            self.yt = yt
            off2 = max(float(y @ y - yt @ yt), 0.0)
            self.eta_eff = math.sqrt(max(eta ** 2 - off2, 0.0))

    def __call__(self, v):
        a = self.V.T @ v
        if self.eta == 0:
            return v - self.V @ (a - self.b)
        a_new = project_ellipsoid(a, self.S, self.yt, self.eta_eff)
        return v + self.V @ (a_new - a)


def _soft(v, t):
    return np.sign(v) * np.maximum(np.abs(v) - t, 0.0)


def _solve_dr(model, opts, factor):
    A, y, eta = model.A, model.y, model.eta
    n = model.n
    proj = _Projector(A, y, eta)
    cert = _Certificate(model, factor)
    u = proj(np.zeros(n))
    gam = opts.dr_step
    if gam is None:
        # step on the scale of the typical jump of the least-norm solution
        zmax = float(np.max(np.abs(u[:-1]))) if n > 1 else 1.0
        gam = zmax if zmax > 0 else 1.0
    status = "max-iters"
    it = 0
    z = u.copy()
    v = u.copy()
    tracker = _PolishTracker()
    Ball = proj.M[:, :-1]
    for it in range(1, opts.max_iters + 1):
        z = u.copy()
        z[:-1] = _soft(u[:-1], gam)
        v = proj(2 * z - u)
        u += v - z
        if it % opts.check_every == 0:
            if opts.objective_cutoff is not None and \
                    float(np.sum(np.abs(v[:-1]))) < opts.objective_cutoff:
                status = "cutoff"
                break
            fp = np.linalg.norm(v - z)
            if fp <= opts.tol * (1 + np.linalg.norm(z)):
                w = np.clip((u[:-1] - z[:-1]) / gam, -1.0, 1.0)
                x = _from_gradient_coords(v)
                obj, feas, gap, dres, lam = cert.evaluate(x, w)
                if _converged(opts, obj, feas, gap, cert.ynorm):
                    status = "converged"
                    break
            if opts.polish:
                signs = np.sign(z[:-1])
                if tracker.ready(signs):
                    w = np.clip((u[:-1] - z[:-1]) / gam, -1.0, 1.0)
                    x_p, w_p, ok = _finish(model, opts, cert, _from_gradient_coords(v), w,
                                           Ball, signs)
                    if ok:
                        status = "converged"
                        break
    w = np.clip((u[:-1] - z[:-1]) / gam, -1.0, 1.0)
    x = _from_gradient_coords(v)
    if status == "converged":
        if opts.polish and "x_p" in locals() and ok:
            x, w = x_p, w_p
        elif opts.polish:
            x, w, _ = _finish(model, opts, cert, x, w, Ball)
    obj, feas, gap, dres, lam = cert.evaluate(x, w)
    return SolveResult(x, obj, feas, gap, it, status, dres, "dr", w, lam)
