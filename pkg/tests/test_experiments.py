import math

import numpy as np
import pytest

from tvcs.errors import InvalidParameters, NumericalFailure
from tvcs.experiments import (PhaseCell, PhaseConfig, PhaseDiagram, StabilityConfig,
                              WidthSweepConfig, check_flags, draw_signal, fit_noise_constant,
                              gaussian_matrix, m50_from_curve, phase_svg, phase_transition,
                              rows_to_csv, run_cell, stability_csv, stability_suite,
                              stability_terms, width_sweep, WIDTH_COLUMNS)
from tvcs.gradient import grad, restrict
from tvcs.signals import generate


def test_gaussian_matrix_moments_and_determinism():
    m, n = 200, 300
    A = gaussian_matrix(m, n, np.random.default_rng(1))
    assert abs(A.mean()) <= 4 / math.sqrt(m * n)
    assert abs(A.var() - 1) <= 5 / math.sqrt(m * n)
    np.testing.assert_array_equal(A, gaussian_matrix(m, n, np.random.default_rng(1)))
    with pytest.raises(InvalidParameters):
        gaussian_matrix(0, 3, np.random.default_rng(0))


def test_m50_interpolation():
    assert m50_from_curve([2, 4, 6], [0.0, 0.25, 0.75]) == 5.0
    assert m50_from_curve([2, 4], [0.5, 1.0]) == 2.0
    assert math.isnan(m50_from_curve([2, 4], [0.0, 0.4]))


def test_square_cell_always_succeeds():
    cfg = PhaseConfig(family="equidistant", seed=3, s=3, trials=5)
    cell = run_cell(cfg, 32, 32, draw_signal("equidistant", 32, 3, np.random.default_rng(0)).values)
    assert cell.successes == 5


def small_diagram(seed=1, family="equidistant"):
    cfg = PhaseConfig(family=family, seed=seed, s=2, n_grid=(16, 32), trials=8)
    return phase_transition(cfg)


def test_phase_diagram_counts_monotone_and_reproducible():
    d = small_diagram()
    for c in d.cells:
        assert 0 <= c.successes <= c.trials
    for n in d.n_grid:
        _, ps = d.curve(n)
        assert np.all(np.diff(np.maximum.accumulate(ps)) >= 0)
        assert np.all(ps >= np.maximum.accumulate(ps) - 3 / 8 - 1e-12)
        assert not math.isnan(d.m50(n))
    again = small_diagram()
    assert d.counts() == again.counts()
    assert d.to_csv() == again.to_csv()


def test_random_family_draws_per_trial():
    d = small_diagram(family="random-jump")
    assert len(d.cells) == 16 + 32


def test_saturation_stops_columns():
    cfg = PhaseConfig(family="equidistant", seed=2, s=2, n_grid=(32,), trials=4, saturation=2)
    d = phase_transition(cfg)
    ms, ps = d.curve(32)
    assert ms[-1] < 32
    assert ps[-1] == ps[-2] == 1.0


def test_outputs_and_flags():
    d = small_diagram()
    svg = phase_svg(d)
    assert svg.startswith("<svg") and svg.count("<rect") >= len(d.cells)
    assert d.m50_csv().splitlines()[0] == "family,n,m50"
    check_flags(d)
    d.cells.append(PhaseCell(64, 10, 10, 0, max_iters=2))
    with pytest.raises(NumericalFailure):
        check_flags(d)
    with pytest.raises(InvalidParameters):
        phase_svg(PhaseDiagram("x", 1, 0, 1e-4, 1))


def test_width_sweep_is_deterministic_and_skips_unseparated():
    cfg = WidthSweepConfig(seed=4, s=3, n_grid=(32, 64), trials=20)
    rows, skipped = width_sweep(cfg)
    rows2, _ = width_sweep(cfg)
    assert rows_to_csv(rows, WIDTH_COLUMNS) == rows_to_csv(rows2, WIDTH_COLUMNS)
    eq = [r for r in rows if r["family"] == "equidistant"]
    assert {r["method"] for r in eq} == {"empirical-polar", "mc-dual-upper", "analytic-417",
                                          "analytic-418"}
    # consecutive jumps cannot meet the separation precondition of the upper bounds
    assert all(fam == "dense-jump" for fam, _, _, _ in skipped)
    assert all(r["method"] == "empirical-polar" for r in rows if r["family"] == "dense-jump")


def test_stability_terms_for_exactly_sparse_signal():
    x = generate("equidistant", s=3, n=64, rng=np.random.default_rng(0)).values
    S = np.array([16, 32, 48])
    tau, t1, t2, sur = stability_terms(x, S)
    assert tau == 1.0
    assert t1 == 0.0
    assert abs(np.abs(grad(sur)).sum() - np.abs(grad(x)).sum()) <= 1e-10


def test_surrogate_is_scaled_projection(rng):
    x = generate("equidistant", s=3, n=64, rng=rng).values + 0.01 * rng.standard_normal(64)
    S = np.array([16, 32, 48])
    tau, _, _, sur = stability_terms(x, S)
    assert tau > 1
    np.testing.assert_allclose(grad(sur), tau * restrict(grad(x), S), atol=1e-12)
    assert abs(np.abs(grad(sur)).sum() - np.abs(grad(x)).sum()) <= 1e-10


def test_stability_exact_and_noisy():
    cfg = StabilityConfig(seed=5, n=64, s=2, eps=(0.0,), eta=(0.0, 0.05), instances=3, m=40)
    records, skipped, m = stability_suite(cfg)
    assert m == 40 and not skipped and len(records) == 6
    for r in records:
        assert r.status == "converged"
        assert r.surrogate_gap <= 1e-10
        if r.eta == 0:
            assert r.rel_error <= 1e-4
    c = fit_noise_constant(records)
    assert math.isfinite(c) and c > 0
    for r in records:
        if r.eta > 0:
            assert r.error <= c * r.noise_term + 1e-12
    assert stability_csv(records).count("\n") == 7


def test_stability_reports_skipped_instances():
    cfg = StabilityConfig(seed=6, n=64, s=2, eps=(5.0,), instances=4, m=30)
    records, skipped, _ = stability_suite(cfg)
    assert len(records) + len(skipped) == 4
    assert skipped
