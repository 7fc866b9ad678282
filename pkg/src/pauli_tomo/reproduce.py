"""Consolidated verification suite for the package's reference results.

Each criterion checks one published reference value, bound, or internal
consistency property at a fixed tolerance and with fixed seeds, and
reports pass/fail with a one-line detail. The CLI ``reproduce`` command
and the acceptance test module both run this list.

Criterion 4 is expected to fail: the quoted reference values 0.01659 and
0.01675 for the second reference channel (0.9, 0.67, 0.6) cannot be
reproduced from that channel's parameters. The same machinery reproduces
every value of reference channel 1 to four decimals, and an exhaustive
grid search puts the true optimum for channel 2 at 0.075903 with both
paired reference designs at 0.086828. The assertions are kept as quoted
rather than adjusted to the computed values; see the repository notes.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from . import design_opt, experiment, extraction, risk, rng
from .core import (ChannelParams, compose_channel_matrix, cp_check,
                   random_canonical_params)

LAM_REF1 = (0.8, 0.65, 0.5)
LAM_REF2 = (0.9, 0.67, 0.6)
N_REF = 1000


@dataclass(frozen=True)
class CriterionResult:
    cid: int
    title: str
    passed: bool
    detail: str
    seconds: float


def _random_cp_lambda(gen: np.random.Generator, min_gap: float = 0.0):
    while True:
        lam = np.sort(gen.uniform(-1.0, 1.0, size=3))[::-1]
        if cp_check(lam) and lam[0] - lam[1] > min_gap and lam[1] - lam[2] > min_gap:
            return lam


def _random_design_angles(gen: np.random.Generator):
    return np.array([gen.uniform(0.0, math.pi), gen.uniform(0.0, math.pi),
                     gen.uniform(0.0, math.pi / 2)])


def _random_rotation(gen: np.random.Generator) -> np.ndarray:
    q, r = np.linalg.qr(gen.normal(size=(3, 3)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 2] = -q[:, 2]
    return q


def criterion_1() -> CriterionResult:
    """Reference channel 1, zero design: angle risk equals 0.05 exactly."""
    eye = np.eye(3)
    value = risk.analytic_h_tilde(LAM_REF1, eye, eye, N_REF)
    err = abs(value - 0.05)
    return CriterionResult(1, "reference 1 zero-design angle risk = 0.05",
                           err <= 1e-12,
                           f"value={value!r} |err|={err:.2e} (tol 1e-12)", 0.0)


def criterion_2() -> CriterionResult:
    """Reference channel 1: both paired reference designs give 0.03676."""
    details = []
    ok = True
    for angles in design_opt.CONJECTURE_DESIGNS:
        frame = experiment.build_frame(angles)
        value = risk.analytic_h_tilde(LAM_REF1, frame, frame, N_REF)
        err = abs(value - 0.03676)
        ok &= err <= 5e-5
        details.append(f"{value:.6f} (|err|={err:.1e})")
    return CriterionResult(2, "reference 1 paired designs = 0.03676 +- 5e-5",
                           ok, ", ".join(details) + " tol 5e-5", 0.0)


def criterion_3() -> CriterionResult:
    """Reference channel 1 optimum: 0.03634, with input = measurement angles."""
    tau, theta, h_min = design_opt.optimize_angle_risk(LAM_REF1, N_REF)
    err = abs(h_min - 0.03634)
    residual = max(extraction.angle_distance(a, b) for a, b in zip(tau, theta))
    ok = err <= 5e-5 and residual <= 1e-3
    return CriterionResult(3, "reference 1 optimum = 0.03634 +- 5e-5, tau* = theta*",
                           ok, f"h_min={h_min:.6f} |err|={err:.1e} residual={residual:.1e}",
                           0.0)


def criterion_4() -> CriterionResult:
    """Reference channel 2: quoted optimum 0.01659 and paired value 0.01675.

    The zero-design value is checked against an independent arithmetic
    oracle instead of the quoted 0.02446 (a known misprint). The optimum
    and paired-design assertions are kept as quoted; they do not follow
    from the stated channel parameters and are expected to fail.
    """
    lam = np.asarray(LAM_REF2)
    # Independent oracle: at the zero design every off-diagonal pair has
    # variance 2/N, so the risk is (2/N) * sum of 1/(4 gap^2).
    gaps = (lam[0] - lam[1], lam[0] - lam[2], lam[1] - lam[2])
    oracle = (2.0 / N_REF) * sum(1.0 / (4.0 * g * g) for g in gaps)
    eye = np.eye(3)
    zero_val = risk.analytic_h_tilde(lam, eye, eye, N_REF)
    ok_zero = abs(zero_val - oracle) <= 1e-12

    report = design_opt.conjecture_report(lam, N_REF)
    err_opt = abs(report.h_min - 0.01659)
    err_conj = max(abs(v - 0.01675) for v in report.conjecture_values)
    ok = ok_zero and err_opt <= 5e-5 and err_conj <= 5e-5
    detail = (f"zero-design={zero_val:.6f} vs oracle (|err|={abs(zero_val - oracle):.1e}); "
              f"h_min={report.h_min:.6f} vs quoted 0.01659; "
              f"paired={report.conjecture_values[0]:.6f} vs quoted 0.01675")
    return CriterionResult(4, "reference 2 quoted values 0.01659 / 0.01675",
                           ok, detail, 0.0)


def _bound_criterion(cid: int, loss_fn, bound_fn, name: str) -> CriterionResult:
    gen = np.random.default_rng(1000 + cid)
    eye = np.eye(3)
    worst_violation = -math.inf
    worst_equality = 0.0
    for _ in range(100):
        lam = _random_cp_lambda(gen)
        th = experiment.build_frame(_random_design_angles(gen))
        m = experiment.build_frame(_random_design_angles(gen))
        bound = bound_fn(lam, N_REF)
        worst_violation = max(worst_violation, bound - loss_fn(lam, th, m, N_REF))
        worst_equality = max(worst_equality,
                             abs(loss_fn(lam, eye, eye, N_REF) - bound))
    ok = worst_violation <= 1e-12 and worst_equality <= 1e-12
    return CriterionResult(cid, name, ok,
                           f"max bound-violation={worst_violation:.2e}, "
                           f"max |zero-design - bound|={worst_equality:.2e} (tol 1e-12)",
                           0.0)


def criterion_5() -> CriterionResult:
    """Matrix-risk lower bound (6 - sum lam^2)/N, tight at the zero design."""
    return _bound_criterion(5, risk.analytic_f, risk.bound_f,
                            "matrix risk >= (6 - sum lam^2)/N, equality at 0")


def criterion_6() -> CriterionResult:
    """Contraction-risk lower bound (3 - sum lam^2)/N, tight at the zero design."""
    return _bound_criterion(6, risk.analytic_g_tilde, risk.bound_g,
                            "contraction risk >= (3 - sum lam^2)/N, equality at 0")


def _planar_grid_minimum(lam1, lam2, shots):
    # Hierarchical brute force, final step 1e-4 rad.
    coarse = np.arange(0.0, math.pi / 2, 1e-2)
    t, v = np.meshgrid(coarse, coarse, indexing="ij")
    vals = design_opt.h2_batch(lam1, lam2, t, v, shots)
    k = np.unravel_index(np.argmin(vals), vals.shape)
    t0, v0 = coarse[k[0]], coarse[k[1]]
    fine = np.arange(-1.5e-2, 1.5e-2, 1e-4)
    tf, vf = np.meshgrid(t0 + fine, v0 + fine, indexing="ij")
    vals = design_opt.h2_batch(lam1, lam2, tf, vf, shots)
    k = np.unravel_index(np.argmin(vals), vals.shape)
    return float(tf[k]), float(vf[k]), float(vals[k])


def _mod_distance(a: float, b: float, period: float) -> float:
    d = abs(a - b) % period
    return min(d, period - d)


def criterion_7() -> CriterionResult:
    """Planar closed-form optimum against brute-force grid minimization."""
    gen = np.random.default_rng(77)
    cases = [(0.8, 0.2), (1.0, 0.0)]
    expected_regime = {(0.8, 0.2): 1, (1.0, 0.0): 2}
    while sum(1 for c in cases if (c[0] + c[1]) ** 2 >= 2 * (c[0] - c[1]) ** 2) < 26:
        l1, l2 = sorted(gen.uniform(-1.0, 1.0, size=2))[::-1]
        if l1 - l2 > 0.05 and abs(l1 + l2) > 0.05 and cp_check((l1, l2, 0.0)):
            if (l1 + l2) ** 2 >= 2 * (l1 - l2) ** 2:
                cases.append((l1, l2))
    while len(cases) < 52:
        l1, l2 = sorted(gen.uniform(-1.0, 1.0, size=2))[::-1]
        if l1 - l2 > 0.05 and abs(l1 + l2) > 0.05 and cp_check((l1, l2, 0.0)):
            if (l1 + l2) ** 2 < 2 * (l1 - l2) ** 2:
                cases.append((l1, l2))
    worst_loc, worst_rel = 0.0, 0.0
    ok = True
    for l1, l2 in cases:
        tau_cf, _, val_cf, regime = risk.h2_optimal_design(l1, l2, N_REF)
        tg, vg, hg = _planar_grid_minimum(l1, l2, N_REF)
        # Both x and pi/2 - x minimize in regime 2.
        loc = min(_mod_distance(tg, tau_cf, math.pi / 2),
                  _mod_distance(tg, math.pi / 2 - tau_cf, math.pi / 2))
        rel = abs(hg - val_cf) / val_cf
        worst_loc, worst_rel = max(worst_loc, loc), max(worst_rel, rel)
        if (l1, l2) in expected_regime:
            ok &= regime == expected_regime[(l1, l2)]
            target = math.pi / 4 if regime == 1 else math.pi / 6
            ok &= abs(tau_cf - target) <= 1e-12
    ok &= worst_loc <= 2e-4 and worst_rel <= 1e-8
    return CriterionResult(7, "planar optimum closed form vs 1e-4 grid (52 cases)",
                           ok, f"max location err={worst_loc:.2e} (tol 2e-4), "
                               f"max value rel err={worst_rel:.2e} (tol 1e-8)", 0.0)


def criterion_8() -> CriterionResult:
    """Estimator unbiasedness: mean of A_hat within 4 s.e. of A."""
    gen = np.random.default_rng(88)
    trials, shots = 100_000, 1000
    worst = 0.0
    for case in range(3):
        lam = _random_cp_lambda(gen, min_gap=0.05)
        params = ChannelParams(tuple(lam), tuple(gen.uniform(0.0, math.pi, 3)))
        a = compose_channel_matrix(params)
        th = experiment.build_frame(_random_design_angles(gen))
        m = experiment.build_frame(_random_design_angles(gen))
        x = experiment.forward_outcomes(a, th, m)
        counts = experiment.sample_count_block(x, shots, rng.derive_seed(880, case),
                                               0, trials)
        xhat = 2.0 * counts.astype(float) / shots - 1.0
        ahat = np.einsum("ip,tpq,jq->tij", m, xhat, th)
        mean = ahat.mean(axis=0)
        se = ahat.std(axis=0, ddof=1) / math.sqrt(trials)
        worst = max(worst, float(np.max(np.abs(mean - a) / se)))
    return CriterionResult(8, "mean(A_hat) within 4 s.e. of A (3 channels, 1e5 trials)",
                           worst <= 4.0, f"max |mean-A|/se = {worst:.2f} (tol 4)", 0.0)


def criterion_9() -> CriterionResult:
    """Monte Carlo losses agree with the analytic values within 4 s.e."""
    eye = np.eye(3)
    params = ChannelParams(LAM_REF1)
    design_f = experiment.ExperimentDesign((0, 0, 0), (0, 0, 0), 1000)
    rep_f = risk.mc_loss(params, design_f, trials=100_000, seed=909)
    f_ref = risk.analytic_f(LAM_REF1, eye, eye, 1000)
    dev_f = abs(rep_f.f - f_ref) / rep_f.f_se

    design_h = experiment.ExperimentDesign((0, 0, 0), (0, 0, 0), 100_000)
    rep_h = risk.mc_loss(params, design_h, trials=20_000, seed=919)
    h_ref = risk.analytic_h_tilde(LAM_REF1, eye, eye, 100_000)
    dev_h = abs(rep_h.h - h_ref) / rep_h.h_se
    ok = dev_f <= 4.0 and dev_h <= 4.0
    return CriterionResult(9, "mc f and h within 4 s.e. of analytic values",
                           ok, f"f dev={dev_f:.2f} s.e., h dev={dev_h:.2f} s.e. (tol 4)",
                           0.0)


def criterion_10() -> CriterionResult:
    """Extraction inverts composition on 1e4 random canonical parameters."""
    gen = np.random.default_rng(1010)
    worst = 0.0
    for _ in range(10_000):
        p = random_canonical_params(gen)
        est = extraction.extract_params(compose_channel_matrix(p))
        worst = max(worst,
                    max(abs(e - t) for e, t in zip(est.lam_hat, p.lam)),
                    max(extraction.angle_distance(e, t)
                        for e, t in zip(est.phi_hat, p.phi)))
    return CriterionResult(10, "parameter round trip on 1e4 canonical channels",
                           worst <= 1e-9,
                           f"max component error = {worst:.2e} (tol 1e-9)", 0.0)


def criterion_11() -> CriterionResult:
    """Analytic risks invariant under joint rotation of channel and design."""
    gen = np.random.default_rng(1111)
    worst = 0.0
    for _ in range(50):
        lam = _random_cp_lambda(gen, min_gap=0.05)
        th = experiment.build_frame(_random_design_angles(gen))
        m = experiment.build_frame(_random_design_angles(gen))
        o = _random_rotation(gen)
        for fn in (risk.analytic_f, risk.analytic_g_tilde, risk.analytic_h_tilde):
            base = fn(lam, th, m, N_REF)
            rotated = fn(lam, o @ th, o @ m, N_REF, channel_frame=o)
            worst = max(worst, abs(base - rotated))
    return CriterionResult(11, "rotational invariance of f, g, h (50 rotations)",
                           worst <= 1e-12, f"max |difference| = {worst:.2e} (tol 1e-12)",
                           0.0)


def criterion_12() -> CriterionResult:
    """Average output-state error is ||A - A_hat||^2 / 10 over the ball."""
    gen = np.random.default_rng(1212)
    n_samples = 1_000_000
    ratios = []
    for _ in range(20):
        d = gen.normal(size=(3, 3)) - gen.normal(size=(3, 3))
        pts = gen.uniform(-1.0, 1.0, size=(2 * n_samples, 3))
        pts = pts[np.einsum("ij,ij->i", pts, pts) <= 1.0][:n_samples]
        out_err = 0.5 * np.einsum("ij,ij->i", pts @ d.T, pts @ d.T).mean()
        ratios.append(out_err / float(np.sum(d * d)))
    ratios = np.asarray(ratios)
    mean = float(ratios.mean())
    spread = float(np.max(np.abs(ratios - mean)) / mean)
    ok = spread <= 0.01 and abs(mean - 0.1) <= 0.005
    return CriterionResult(12, "output-error ratio constant at 0.1 (20 pairs)",
                           ok, f"mean ratio={mean:.5f} (tol 0.1 +- 0.005), "
                               f"spread={spread:.2%} (tol 1%)", 0.0)


_CRITERIA = (criterion_1, criterion_2, criterion_3, criterion_4, criterion_5,
             criterion_6, criterion_7, criterion_8, criterion_9, criterion_10,
             criterion_11, criterion_12)


def run_criterion(cid: int) -> CriterionResult:
    if not 1 <= cid <= len(_CRITERIA):
        raise ValueError(f"criterion id must be in 1..{len(_CRITERIA)}")
    start = time.perf_counter()
    result = _CRITERIA[cid - 1]()
    elapsed = time.perf_counter() - start
    return CriterionResult(result.cid, result.title, result.passed,
                           result.detail, elapsed)


def run_all(selected=None) -> list[CriterionResult]:
    ids = sorted(selected) if selected else range(1, len(_CRITERIA) + 1)
    return [run_criterion(cid) for cid in ids]
