"""Tests for the variance algebra, loss functions, bounds, and Monte Carlo."""

import numpy as np
import pytest

import pauli_tomo as pt
from pauli_tomo import experiment
from pauli_tomo.core import ChannelParams
from pauli_tomo.extraction import DegenerateSpectrumError

LAM1 = (0.8, 0.65, 0.5)
EYE = np.eye(3)


def _random_design(rng):
    return np.array([rng.uniform(0, np.pi), rng.uniform(0, np.pi),
                     rng.uniform(0, np.pi / 2)])


def _random_cp(rng, min_gap=0.0):
    while True:
        lam = np.sort(rng.uniform(-1, 1, 3))[::-1]
        if pt.cp_check(lam) and lam[0] - lam[1] > min_gap and lam[1] - lam[2] > min_gap:
            return lam


def test_coefficient_matrix_identity():
    assert np.array_equal(pt.coefficient_matrix(EYE, EYE), np.eye(9))


def test_coefficient_matrix_orthogonal_and_bistochastic():
    rng = np.random.default_rng(0)
    for _ in range(100):
        th = pt.build_frame(_random_design(rng))
        m = pt.build_frame(_random_design(rng))
        c = pt.coefficient_matrix(th, m)
        assert np.max(np.abs(c @ c.T - np.eye(9))) <= 1e-12
        c2 = c * c
        assert np.max(np.abs(c2.sum(axis=0) - 1.0)) <= 1e-12
        assert np.max(np.abs(c2.sum(axis=1) - 1.0)) <= 1e-12


def test_coefficient_matrix_reassembles_estimator():
    rng = np.random.default_rng(1)
    th = pt.build_frame(_random_design(rng))
    m = pt.build_frame(_random_design(rng))
    c = pt.coefficient_matrix(th, m)
    for _ in range(20):
        xhat = rng.uniform(-1, 1, (3, 3))
        direct = pt.estimate_channel_matrix(xhat, th, m)
        via_c = (c @ xhat.reshape(9)).reshape(3, 3)
        assert np.max(np.abs(direct - via_c)) <= 1e-13


def test_var_linear_combination_zero():
    c = pt.coefficient_matrix(EYE, EYE)
    assert pt.var_linear_combination(np.zeros(9), c, np.diag(LAM1), 100) == 0.0


def test_var_linear_combination_single_entry():
    c = pt.coefficient_matrix(EYE, EYE)
    d = np.zeros(9)
    d[0] = 1.0   # entry (1, 1)
    v = pt.var_linear_combination(d, c, np.diag(LAM1), 1000)
    assert v == pytest.approx((1.0 - 0.8 ** 2) / 1000, abs=1e-15)


def test_var_linear_combination_matches_monte_carlo():
    rng = np.random.default_rng(2)
    lam = np.asarray(LAM1)
    a = np.diag(lam)
    th = pt.build_frame(_random_design(rng))
    m = pt.build_frame(_random_design(rng))
    x = pt.forward_outcomes(a, th, m)
    c = pt.coefficient_matrix(th, m)
    d = rng.normal(size=9)
    formula = pt.var_linear_combination(d, c, x, 1000)

    trials, shots = 100_000, 1000
    counts = experiment.sample_count_block(x, shots, 22, 0, trials)
    xhat = 2.0 * counts / shots - 1.0
    ahat = np.einsum("ip,tpq,jq->tij", m, xhat, th)
    psi = ahat.reshape(trials, 9) @ d
    sample_var = psi.var(ddof=1)
    centered = (psi - psi.mean()) ** 2
    se_var = centered.std(ddof=1) / np.sqrt(trials)
    assert abs(sample_var - formula) <= 4 * se_var


def test_analytic_f_reference_value():
    assert pt.analytic_f(LAM1, EYE, EYE, 1000) == pytest.approx(0.0046875,
                                                                abs=1e-15)


def test_analytic_f_fully_depolarizing():
    rng = np.random.default_rng(3)
    for _ in range(10):
        th = pt.build_frame(_random_design(rng))
        m = pt.build_frame(_random_design(rng))
        assert pt.analytic_f((0, 0, 0), th, m, 500) == pytest.approx(6.0 / 500,
                                                                     rel=1e-12)


def test_analytic_f_respects_bound():
    rng = np.random.default_rng(4)
    for _ in range(100):
        lam = _random_cp(rng)
        th = pt.build_frame(_random_design(rng))
        m = pt.build_frame(_random_design(rng))
        assert pt.analytic_f(lam, th, m, 1000) >= pt.bound_f(lam, 1000) - 1e-12


def test_analytic_g_reference_value():
    assert pt.analytic_g_tilde(LAM1, EYE, EYE, 1000) == pytest.approx(0.0016875,
                                                                      abs=1e-15)


def test_analytic_g_identity_channel_is_noiseless_on_axes():
    assert pt.analytic_g_tilde((1, 1, 1), EYE, EYE, 1000) == 0.0


def test_analytic_g_respects_bound():
    rng = np.random.default_rng(5)
    for _ in range(100):
        lam = _random_cp(rng)
        th = pt.build_frame(_random_design(rng))
        m = pt.build_frame(_random_design(rng))
        assert pt.analytic_g_tilde(lam, th, m, 1000) >= pt.bound_g(lam, 1000) - 1e-12


def test_analytic_h_reference_values():
    assert abs(pt.analytic_h_tilde(LAM1, EYE, EYE, 1000) - 0.05) <= 1e-12
    for angles in ((np.pi / 4, np.pi / 4, 0.0), (np.pi / 4, 0.0, np.pi / 4)):
        f = pt.build_frame(angles)
        assert pt.analytic_h_tilde(LAM1, f, f, 1000) == pytest.approx(0.03676,
                                                                      abs=5e-5)


def test_analytic_h_symmetric_between_reference_designs():
    f1 = pt.build_frame((np.pi / 4, np.pi / 4, 0.0))
    f2 = pt.build_frame((np.pi / 4, 0.0, np.pi / 4))
    v1 = pt.analytic_h_tilde(LAM1, f1, f1, 1000)
    v2 = pt.analytic_h_tilde(LAM1, f2, f2, 1000)
    assert v1 == pytest.approx(v2, abs=1e-14)


def test_analytic_h_rejects_degenerate_spectrum():
    with pytest.raises(DegenerateSpectrumError):
        pt.analytic_h_tilde((0.8, 0.5, 0.5), EYE, EYE, 1000)


def test_transposed_pair_difference_variance_cap():
    # Var(a_hat_ij - a_hat_ji) never exceeds 2/N for any design.
    rng = np.random.default_rng(6)
    for _ in range(50):
        lam = _random_cp(rng)
        th = pt.build_frame(_random_design(rng))
        m = pt.build_frame(_random_design(rng))
        x = pt.forward_outcomes(np.diag(lam), th, m)
        c = pt.coefficient_matrix(th, m)
        for i, j in ((0, 1), (0, 2), (1, 2)):
            d = np.zeros(9)
            d[3 * i + j] = 1.0
            d[3 * j + i] = -1.0
            assert pt.var_linear_combination(d, c, x, 1000) <= 2.0 / 1000 + 1e-12


def test_bounds_closed_forms():
    assert pt.bound_f((0, 0, 0), 1) == 6.0
    assert pt.bound_g((0, 0, 0), 1) == 3.0
    assert pt.bound_f((1, 1, 1), 1000) == pytest.approx(0.003, abs=1e-15)
    assert pt.bound_g((1, 1, 1), 1000) == pytest.approx(0.0, abs=1e-15)
    assert pt.bound_f(LAM1, 1000) == pytest.approx(0.0046875, abs=1e-15)
    assert pt.bound_g(LAM1, 1000) == pytest.approx(0.0016875, abs=1e-15)


def test_bound_attained_at_zero_design():
    rng = np.random.default_rng(7)
    for _ in range(100):
        lam = _random_cp(rng)
        assert abs(pt.analytic_f(lam, EYE, EYE, 1000) - pt.bound_f(lam, 1000)) <= 1e-12
        assert abs(pt.analytic_g_tilde(lam, EYE, EYE, 1000) - pt.bound_g(lam, 1000)) <= 1e-12


def test_rotational_invariance_of_losses():
    rng = np.random.default_rng(8)
    for _ in range(50):
        lam = _random_cp(rng, min_gap=0.05)
        th = pt.build_frame(_random_design(rng))
        m = pt.build_frame(_random_design(rng))
        o = pt.rotation_product(rng.uniform(0, np.pi, 3))
        for fn in (pt.analytic_f, pt.analytic_g_tilde, pt.analytic_h_tilde):
            assert abs(fn(lam, th, m, 1000)
                       - fn(lam, o @ th, o @ m, 1000, channel_frame=o)) <= 1e-12


def test_analytic_h2_reference_value():
    v = pt.analytic_h2(0.8, 0.2, np.pi / 4, np.pi / 4, 1000)
    assert v == pytest.approx(1.0 / (4 * 0.36) / 2000 * 3.0, rel=1e-12)
    assert v == pytest.approx(0.00104166666, rel=1e-8)


def test_analytic_h2_grid_minima_locations():
    from pauli_tomo.design_opt import h2_batch
    grid = np.linspace(0, np.pi / 2, 2000, endpoint=False)
    t, v = np.meshgrid(grid, grid, indexing="ij")
    # Regime 1 example: the minimum sits at tau = vartheta = pi/4.
    vals = h2_batch(0.8, 0.2, t, v, 1000)
    k = np.unravel_index(np.argmin(vals), vals.shape)
    assert abs(t[k] - np.pi / 4) <= 2e-3 and abs(v[k] - np.pi / 4) <= 2e-3
    # Regime 2 example: minima at pi/6 and pi/3.
    vals = h2_batch(1.0, 0.0, t, v, 1000)
    k = np.unravel_index(np.argmin(vals), vals.shape)
    assert min(abs(t[k] - np.pi / 6), abs(t[k] - np.pi / 3)) <= 2e-3


def test_analytic_h2_agrees_with_batch_form():
    # Two independent evaluations: embedded 3x3 machinery vs direct trig.
    from pauli_tomo.design_opt import h2_batch
    rng = np.random.default_rng(9)
    for _ in range(100):
        l1, l2 = np.sort(rng.uniform(-1, 1, 2))[::-1]
        if l1 - l2 < 0.05 or abs(l1 + l2) < 1e-3:
            continue
        tau, vth = rng.uniform(0, np.pi / 2, 2)
        a = pt.analytic_h2(l1, l2, tau, vth, 1000)
        b = float(h2_batch(l1, l2, tau, vth, 1000))
        assert a == pytest.approx(b, rel=1e-12)


def test_analytic_h2_input_validation():
    with pytest.raises(ValueError):
        pt.analytic_h2(0.2, 0.8, 0.1, 0.1, 100)
    with pytest.raises(ValueError):
        pt.analytic_h2(0.5, -0.5, 0.1, 0.1, 100)


def test_h2_optimal_design_regimes():
    tau, vth, value, regime = pt.h2_optimal_design(0.8, 0.2, 1000)
    assert regime == 1 and tau == vth == pytest.approx(np.pi / 4, abs=1e-15)
    tau, vth, value, regime = pt.h2_optimal_design(1.0, 0.0, 1000)
    assert regime == 2
    assert tau == pytest.approx(np.pi / 6, abs=1e-12)
    assert value == pytest.approx(2.875 / 8000, rel=1e-12)


def test_h2_optimal_design_regime_boundary_continuity():
    l2 = 0.1
    l1 = (3 + 2 * np.sqrt(2)) * l2
    s2 = (l1 + l2) ** 2
    d2 = (l1 - l2) ** 2
    case1 = 1 / (4 * d2) / 2000 * (4 - s2)
    case2 = 1 / (4 * d2) / 2000 * (4 - (l1 ** 2 + l2 ** 2) - s2 * s2 / (8 * d2))
    assert abs(case1 - case2) <= 1e-12
    x = 0.25 * np.arccos(-s2 / (2 * d2))
    assert abs(x - np.pi / 4) <= 1e-7


def test_mc_loss_noise_free_is_exact():
    params = ChannelParams(LAM1)
    design = pt.ExperimentDesign((0, 0, 0), (0, 0, 0), 1000)
    rep = pt.mc_loss(params, design, trials=1, seed=0, noise_free=True)
    assert rep.f <= 1e-12 and rep.g <= 1e-12 and rep.h <= 1e-12


def test_mc_loss_matches_analytic_f():
    params = ChannelParams(LAM1)
    design = pt.ExperimentDesign((0, 0, 0), (0, 0, 0), 1000)
    rep = pt.mc_loss(params, design, trials=20_000, seed=33)
    ref = pt.analytic_f(LAM1, EYE, EYE, 1000)
    assert abs(rep.f - ref) <= 4 * rep.f_se
    assert rep.f_bound == pytest.approx(pt.bound_f(LAM1, 1000), abs=1e-15)


def test_mc_loss_matches_analytic_h_at_large_shots():
    params = ChannelParams(LAM1)
    design = pt.ExperimentDesign((0, 0, 0), (0, 0, 0), 100_000)
    rep = pt.mc_loss(params, design, trials=5000, seed=34)
    ref = pt.analytic_h_tilde(LAM1, EYE, EYE, 100_000)
    assert abs(rep.h - ref) <= 4 * rep.h_se


def test_mc_loss_deterministic_and_chunk_stable():
    params = ChannelParams(LAM1)
    design = pt.ExperimentDesign((0, 0, 0), (0, 0, 0), 200)
    r1 = pt.mc_loss(params, design, trials=5000, seed=55)
    r2 = pt.mc_loss(params, design, trials=5000, seed=55)
    assert (r1.f, r1.g, r1.h) == (r2.f, r2.g, r2.h)


def test_mc_loss_worker_count_invariance(monkeypatch):
    params = ChannelParams(LAM1)
    design = pt.ExperimentDesign((0, 0, 0), (0, 0, 0), 200)
    monkeypatch.setenv("PAULI_TOMO_THREADS", "1")
    r1 = pt.mc_loss(params, design, trials=10_000, seed=56)
    monkeypatch.setenv("PAULI_TOMO_THREADS", "4")
    r2 = pt.mc_loss(params, design, trials=10_000, seed=56)
    assert (r1.f, r1.g, r1.h) == (r2.f, r2.g, r2.h)


def test_mc_loss_validates_trials():
    with pytest.raises(ValueError):
        pt.mc_loss(ChannelParams(LAM1),
                   pt.ExperimentDesign((0, 0, 0), (0, 0, 0), 10), 0, 0)


def test_output_error_proportionality():
    # Mean squared output-state error over the ball is one tenth of the
    # squared matrix distance, for any matrix pair.
    rng = np.random.default_rng(10)
    for _ in range(5):
        d = rng.normal(size=(3, 3))
        pts = rng.uniform(-1, 1, size=(400_000, 3))
        pts = pts[np.einsum("ij,ij->i", pts, pts) <= 1.0]
        img = pts @ d.T
        ratio = 0.5 * np.einsum("ij,ij->i", img, img).mean() / np.sum(d * d)
        assert ratio == pytest.approx(0.1, abs=0.002)


def test_analytic_report_rotated_channel_matches_canonical():
    # The report for a rotated channel equals the canonical one.
    params = ChannelParams(LAM1, (0.4, 1.1, 0.2))
    design = pt.ExperimentDesign((0.3, 0.2, 0.1), (1.0, 0.5, 0.25), 1000)
    rep = pt.analytic_report(params, design)
    v = pt.rotation_product(params.phi)
    th = pt.build_frame(design.input_angles)
    m = pt.build_frame(design.meas_angles)
    assert rep.f == pytest.approx(
        pt.analytic_f(LAM1, v.T @ th, v.T @ m, 1000), rel=1e-12)
    assert rep.f >= rep.f_bound - 1e-12
    assert rep.g >= rep.g_bound - 1e-12
