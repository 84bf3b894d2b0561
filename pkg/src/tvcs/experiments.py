"""Phase-transition, width and stability experiments.

All randomness is keyed: a phase cell trial uses the stream
``(seed, n, m, trial)``, deterministic signal families use ``(seed, n)``, so
grids can be resumed or sharded without changing any number.
"""
from dataclasses import asdict, dataclass, field
import csv
import io
import math

import numpy as np

from .errors import InvalidParameters, NumericalFailure
from .gradient import best_s_support, grad, grad_pinv, restrict, restrict_complement
from .signals import generate, separation_discrete
from .solver import MeasurementModel, SolveOptions, solve_tv, success, tv_norm
from .width import (METHODS, analytic_estimate, required_m, required_m_stable,
                    width_empirical, width_upper_mc)

RANDOM_FAMILIES = ("random-jump",)
FLAG_FRACTION = 0.1
CUTOFF_MARGIN = 1e-6


def gaussian_matrix(m, n, rng):
    """``m x n`` matrix of i.i.d. standard normal entries."""
    if m < 1 or n < 1:
        raise InvalidParameters("m and n must be positive")
    return rng.standard_normal((m, n))


def cell_rng(seed, n, m, trial):
    return np.random.default_rng([int(seed), int(n), int(m), int(trial)])


def signal_rng(seed, n):
    return np.random.default_rng([int(seed), int(n)])


def draw_signal(family, n, s, rng):
    """Discrete signal of a family; random-jump functions are discretized (redrawn if too coarse)."""
    if family in RANDOM_FAMILIES or family == "discretized-pcf":
        for _ in range(1000):
            f = generate("random-jump", s=s, rng=rng)
            try:
                return generate("discretized-pcf", s=s, n=n, fn=f)
            except InvalidParameters:
                continue
        raise InvalidParameters(f"could not resolve {s} random jumps at n={n}")
    if family == "densifying":
        return generate("discretized-pcf", s=s, n=n, fn=generate("densifying", s=s, rng=rng))
    return generate(family, s=s, n=n, rng=rng)


# ---------------------------------------------------------------------------
# phase transition

@dataclass
class PhaseConfig:
    """Grid and solver settings for :func:`phase_transition`.

    ``m_grid`` maps n to explicit m values; when omitted m runs from
    ``m_step`` to ``m_max`` (default n) in steps of ``max(1, n // 64)``.
    ``saturation`` stops a column after that many consecutive all-success
    cells; the omitted larger m are reported as not run.
    """

    family: str
    seed: int
    s: int = 5
    n_grid: tuple = (64, 128, 256, 512, 1024)
    m_grid: dict | None = None
    m_max: int | None = None
    trials: int = 50
    tol: float = 1e-4
    method: str = "dr"
    max_iters: int = 200_000
    saturation: int | None = None
    cutoff: bool = True

    def ms(self, n):
        if self.m_grid is not None:
            return sorted(int(m) for m in self.m_grid[n])
        step = max(1, n // 64)
        top = n if self.m_max is None else min(n, self.m_max)
        return list(range(step, top + 1, step))


@dataclass
class PhaseCell:
    n: int
    m: int
    trials: int
    successes: int
    max_iters: int = 0
    cutoffs: int = 0

    @property
    def probability(self):
        return self.successes / self.trials

    @property
    def flagged(self):
        return self.max_iters > FLAG_FRACTION * self.trials


@dataclass
class PhaseDiagram:
    family: str
    s: int
    seed: int
    tol: float
    trials: int
    cells: list = field(default_factory=list)

    @property
    def n_grid(self):
        return sorted({c.n for c in self.cells})

    def m_grid(self, n):
        return sorted(c.m for c in self.cells if c.n == n)

    def curve(self, n):
        cs = sorted((c for c in self.cells if c.n == n), key=lambda c: c.m)
        return np.array([c.m for c in cs]), np.array([c.probability for c in cs])

    def counts(self):
        """``{(n, m): successes}``."""
        return {(c.n, c.m): c.successes for c in self.cells}

    def m50(self, n):
        """Smallest m with success probability >= 1/2, linearly interpolated."""
        return m50_from_curve(*self.curve(n))

    def flagged(self):
        return [c for c in self.cells if c.flagged]

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["family", "n", "m", "trials", "successes", "seed", "tol"])
        for c in sorted(self.cells, key=lambda c: (c.n, c.m)):
            w.writerow([self.family, c.n, c.m, c.trials, c.successes, self.seed, self.tol])
        return buf.getvalue()

    def m50_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["family", "n", "m50"])
        for n in self.n_grid:
            w.writerow([self.family, n, _fmt(self.m50(n))])
        return buf.getvalue()


def m50_from_curve(ms, ps):
    ms = np.asarray(ms, dtype=float)
    ps = np.asarray(ps, dtype=float)
    hit = np.flatnonzero(ps >= 0.5)
    if hit.size == 0:
        return float("nan")
    k = int(hit[0])
    if k == 0:
        return float(ms[0])
    m0, m1, p0, p1 = ms[k - 1], ms[k], ps[k - 1], ps[k]
    return float(m0 + (0.5 - p0) * (m1 - m0) / (p1 - p0))


def run_cell(cfg, n, m, x_fixed=None):
    """Run all trials of one (n, m) cell."""
    opts = SolveOptions(method=cfg.method, max_iters=cfg.max_iters)
    wins = maxed = cut = 0
    for t in range(cfg.trials):
        rng = cell_rng(cfg.seed, n, m, t)
        x = x_fixed if x_fixed is not None else draw_signal(cfg.family, n, cfg.s, rng).values
        A = gaussian_matrix(m, n, rng)
        cutoff = tv_norm(x) * (1 - CUTOFF_MARGIN) if cfg.cutoff else None
        res = solve_tv(MeasurementModel(A, A @ x), opts, objective_cutoff=cutoff)
        if res.status == "max-iters":
            maxed += 1
        if res.status == "cutoff":
            cut += 1
        elif success(res.x, x, cfg.tol):
            wins += 1
    return PhaseCell(n, m, cfg.trials, wins, maxed, cut)


def phase_transition(cfg):
    """Empirical recovery probability over an (n, m) grid.

    A trial counts as a success when the recovered signal passes
    :func:`tvcs.solver.success`.  With ``cfg.cutoff`` the solver stops as
    soon as it finds a feasible point whose TV norm is below that of the
    planted signal; such trials are certified failures.
    """
    if cfg.trials < 1 or not cfg.n_grid:
        raise InvalidParameters("need trials >= 1 and a non-empty n grid")
    diag = PhaseDiagram(cfg.family, cfg.s, cfg.seed, cfg.tol, cfg.trials)
    for n in cfg.n_grid:
        x_fixed = None
        if cfg.family not in RANDOM_FAMILIES:
            x_fixed = draw_signal(cfg.family, n, cfg.s, signal_rng(cfg.seed, n)).values
        run = 0
        for m in cfg.ms(n):
            cell = run_cell(cfg, n, m, x_fixed)
            diag.cells.append(cell)
            run = run + 1 if cell.successes == cell.trials else 0
            if cfg.saturation is not None and run >= cfg.saturation:
                break
    return diag


# ---------------------------------------------------------------------------
# width sweep

@dataclass
class WidthSweepConfig:
    seed: int
    families: tuple = ("equidistant", "dense-jump")
    s: int = 5
    n_grid: tuple = (64, 128, 256, 512, 1024)
    trials: int = 200
    methods: tuple = METHODS
    tau_search: bool = False


def width_rows(x, family, methods, trials, seed, tau_search=False):
    """Evaluate the requested width methods on one signal.

    Returns
    -------
    rows : list of dict
    skipped : list of (method, reason)
    """
    rows, skipped = [], []
    for method in methods:
        try:
            if method == "empirical-polar":
                est = width_empirical(x, trials=trials, rng=seed)
            elif method == "mc-dual-upper":
                est = width_upper_mc(x, trials=trials, rng=seed, tau_search=tau_search)
            elif method == "analytic-417":
                est = analytic_estimate(x, mode="eq417")
            elif method == "analytic-418":
                est = analytic_estimate(x, mode="eq418")
            else:
                raise InvalidParameters(f"unknown width method {method!r}")
        except InvalidParameters as exc:
            if method == "empirical-polar":
                raise
            skipped.append((method, str(exc)))
            continue
        row = {"family": family, "n": x.n}
        row.update(est.row())
        rows.append(row)
    return rows, skipped


def width_sweep(cfg):
    """All width methods for every family and n; upper bounds that need a larger
    separation than the signal has are skipped and listed."""
    rows, skipped = [], []
    for fam in cfg.families:
        for n in cfg.n_grid:
            x = draw_signal(fam, n, cfg.s, signal_rng(cfg.seed, n))
            r, sk = width_rows(x, fam, cfg.methods, cfg.trials, cfg.seed, cfg.tau_search)
            rows.extend(r)
            skipped.extend((fam, n, meth, why) for meth, why in sk)
    return rows, skipped


WIDTH_COLUMNS = ("family", "n", "method", "mean_sq", "std_error")
WIDTH_COLUMNS_FULL = WIDTH_COLUMNS + ("trials", "tau", "s_bar", "beta_max_top",
                                      "beta_max_adjacent", "beta_min_free")


def _fmt(v):
    if isinstance(v, float):
        return "nan" if math.isnan(v) else repr(v)
    return str(v)


def rows_to_csv(rows, columns):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(r.get(c, "")) for c in columns])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# stability

@dataclass
class StabilityConfig:
    """Settings for :func:`stability_suite`.

    The number of measurements is ``m`` when given, else
    ``ceil(m_factor * required_m_stable(w, R, 2))`` when ``R`` is given,
    else ``ceil(m_factor * required_m(w, 2))``, with ``w`` the empirical
    width of the base signal; it is capped at n.
    """

    seed: int
    family: str = "equidistant"
    n: int = 128
    s: int = 3
    eps: tuple = (0.0,)
    eta: tuple = (0.0,)
    instances: int = 20
    m: int | None = None
    m_factor: float = 1.0
    R: float | None = None
    width_trials: int = 100


@dataclass
class StabilityRecord:
    instance: int
    eps: float
    eta: float
    m: int
    tau_x: float
    term1: float
    term2: float
    noise_term: float
    error: float
    rel_error: float
    surrogate_gap: float
    status: str


def stability_terms(x, S):
    """``tau(x)``, the off-support and centred-energy terms and the surrogate.

    Returns
    -------
    tau_x, term1, term2, surrogate
    """
    x = np.asarray(x, dtype=float)
    g = grad(x)
    on = restrict(g, S)
    tau_x = float(np.sum(np.abs(g)) / np.sum(np.abs(on)))
    term1 = float(np.linalg.norm(grad_pinv(restrict_complement(g, S))))
    term2 = float(np.linalg.norm(x - x.mean()))
    lam = x.mean() / tau_x
    surrogate = tau_x * (grad_pinv(on) + lam)
    return tau_x, term1, term2, surrogate


def stability_suite(cfg):
    """Recovery error of perturbed, noisy instances against the stability terms.

    Returns
    -------
    records : list of StabilityRecord
    skipped : list of (instance, eps, eta, reason)
    m : int
        Number of measurements used.
    """
    n, s = cfg.n, cfg.s
    base_rng = signal_rng(cfg.seed, n)
    if cfg.m is not None:
        m = int(cfg.m)
    else:
        probe = draw_signal(cfg.family, n, s, base_rng)
        w = math.sqrt(width_empirical(probe, trials=cfg.width_trials, rng=cfg.seed).mean_sq)
        base_m = required_m_stable(w, cfg.R, 2.0) if cfg.R is not None else required_m(w, 2.0)
        m = int(math.ceil(cfg.m_factor * base_m))
    m = min(m, n)
    records, skipped = [], []
    for a, eps in enumerate(cfg.eps):
        for b, eta in enumerate(cfg.eta):
            for i in range(cfg.instances):
                rng = np.random.default_rng([int(cfg.seed), n, a, b, i])
                base = draw_signal(cfg.family, n, s, rng)
                x = base.values + eps * grad_pinv(rng.uniform(-1.0, 1.0, n - 1))
                S = best_s_support(grad(x), s)
                if not np.array_equal(S, base.support):
                    skipped.append((i, eps, eta, "dominant jump set changed"))
                    continue
                if separation_discrete(S, n).delta < 8 * s / n:
                    skipped.append((i, eps, eta, "separation below 8 s / n"))
                    continue
                tau_x, t1, t2, sur = stability_terms(x, S)
                gap = abs(tv_norm(sur) - tv_norm(x))
                A = gaussian_matrix(m, n, rng)
                e = rng.standard_normal(m)
                e *= eta / np.linalg.norm(e) if eta > 0 else 0.0
                method = "dr" if eta == 0 else "pdhg"
                res = solve_tv(MeasurementModel(A, A @ x + e, eta), method=method)
                err = float(np.linalg.norm(res.x - x))
                records.append(StabilityRecord(
                    instance=i, eps=float(eps), eta=float(eta), m=m, tau_x=tau_x, term1=t1,
                    term2=t2, noise_term=eta / math.sqrt(m), error=err,
                    rel_error=err / max(float(np.linalg.norm(x)), 1.0),
                    surrogate_gap=gap, status=res.status))
    return records, skipped, m


def fit_noise_constant(records):
    """Smallest C with ``error <= C eta / sqrt(m)`` over the unperturbed noisy records."""
    ratios = [r.error / r.noise_term for r in records if r.eps == 0 and r.eta > 0]
    return max(ratios) if ratios else float("nan")


STABILITY_COLUMNS = tuple(StabilityRecord.__dataclass_fields__)


def stability_csv(records):
    return rows_to_csv([asdict(r) for r in records], STABILITY_COLUMNS)


# ---------------------------------------------------------------------------
# SVG

def phase_svg(diag, width=640, height=420):
    """Grey-tone heatmap of success probability, log-scaled n axis, m50 overlay."""
    ns = diag.n_grid
    if not ns:
        raise InvalidParameters("empty phase diagram")
    left, right, top, bottom = 60, 20, 30, 50
    pw, ph = width - left - right, height - top - bottom
    lmin, lmax = math.log2(ns[0]), math.log2(ns[-1])
    span = max(lmax - lmin, 1.0)
    col = pw / (span + 1)
    m_top = max(c.m for c in diag.cells)

    def xpos(n):
        return left + (math.log2(n) - lmin) / (span + 1) * pw

    def ypos(m):
        return top + ph - m / m_top * ph

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'viewBox="0 0 {width} {height}">',
           f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="#000"/>']
    for n in ns:
        ms, ps = diag.curve(n)
        step = (ms[1] - ms[0]) if len(ms) > 1 else 1
        for m, p in zip(ms, ps):
            g = int(round(255 * p))
            out.append(f'<rect x="{xpos(n):.2f}" y="{ypos(m):.2f}" width="{col:.2f}" '
                       f'height="{step / m_top * ph:.2f}" fill="rgb({g},{g},{g})"/>')
        # columns that stopped early are successful beyond the last cell
        if ms[-1] < m_top:
            out.append(f'<rect x="{xpos(n):.2f}" y="{top}" width="{col:.2f}" '
                       f'height="{ypos(ms[-1]) - top:.2f}" fill="rgb(255,255,255)"/>')
        out.append(f'<text x="{xpos(n) + col / 2:.2f}" y="{height - bottom + 18}" '
                   f'font-size="12" text-anchor="middle">{n}</text>')
    pts = [(xpos(n) + col / 2, ypos(diag.m50(n))) for n in ns if not math.isnan(diag.m50(n))]
    if pts:
        out.append('<polyline fill="none" stroke="#d62728" stroke-width="2" points="'
                   + " ".join(f"{a:.2f},{b:.2f}" for a, b in pts) + '"/>')
    for frac in (0.0, 0.25, 0.5, 0.75, 1.0):
        m = frac * m_top
        out.append(f'<text x="{left - 6}" y="{ypos(m) + 4:.2f}" font-size="12" '
                   f'text-anchor="end">{int(round(m))}</text>')
    out.append(f'<text x="{left + pw / 2}" y="{height - 8}" font-size="13" '
               f'text-anchor="middle">n (log scale)</text>')
    out.append(f'<text x="14" y="{top + ph / 2}" font-size="13" text-anchor="middle" '
               f'transform="rotate(-90 14 {top + ph / 2})">m</text>')
    out.append(f'<text x="{left + pw / 2}" y="18" font-size="13" text-anchor="middle">'
               f'{diag.family}, s={diag.s}, trials={diag.trials}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def check_flags(diag):
    """Raise :class:`NumericalFailure` when any cell is flagged."""
    bad = diag.flagged()
    if bad:
        cells = ", ".join(f"(n={c.n}, m={c.m})" for c in bad)
        raise NumericalFailure(f"cells with >10% max-iters solves: {cells}")
