"""Matplotlib figures rendered next to the delimited reports.

Every function takes explicit data and a target path, writes one PNG,
and closes the figure. Metadata is pinned so repeated runs produce
identical bytes.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

_META = {"Software": "pauli-tomo"}


def _save(fig, path) -> None:
    fig.savefig(path, dpi=150, metadata=_META)
    plt.close(fig)


def risk_figure(path, analytic, mc=None) -> None:
    """Bar chart of the three losses with bounds (and MC error bars)."""
    labels = ["matrix (f)", "contractions (g)", "angles (h)"]
    avals = [analytic.f, analytic.g,
             analytic.h if analytic.h is not None else np.nan]
    xs = np.arange(3)
    fig, ax = plt.subplots(figsize=(6.2, 4.0))
    width = 0.38 if mc is not None else 0.6
    ax.bar(xs - (width / 2 if mc is not None else 0), avals, width,
           label="analytic", color="#33658a")
    if mc is not None:
        mvals = [mc.f, mc.g, mc.h]
        merr = [4 * (mc.f_se or 0), 4 * (mc.g_se or 0), 4 * (mc.h_se or 0)]
        ax.bar(xs + width / 2, mvals, width, yerr=merr, capsize=3,
               label=f"monte carlo ({mc.trials} trials, 4 s.e.)",
               color="#f26419")
    ax.axhline(analytic.f_bound, ls="--", lw=1, color="#33658a", alpha=0.7)
    ax.axhline(analytic.g_bound, ls=":", lw=1, color="#555555", alpha=0.7)
    ax.text(2.45, analytic.f_bound, "f bound", fontsize=8, va="bottom")
    ax.text(2.45, analytic.g_bound, "g bound", fontsize=8, va="bottom")
    ax.set_xticks(xs, labels)
    ax.set_ylabel("mean squared error")
    ax.set_title(f"estimation risk, N = {analytic.shots}")
    ax.legend(frameon=False)
    fig.tight_layout()
    _save(fig, path)


def planar_surface_figure(path, tau_grid, theta_grid, values,
                          optimum=None) -> None:
    """Heatmap of the planar angle risk over (tau, theta)."""
    fig, ax = plt.subplots(figsize=(5.6, 4.6))
    pcm = ax.pcolormesh(theta_grid, tau_grid, values, shading="auto",
                        cmap="viridis")
    fig.colorbar(pcm, ax=ax, label="angle risk")
    if optimum is not None:
        ax.plot([optimum[1]], [optimum[0]], "r*", ms=12, label="optimum")
        ax.legend(frameon=False, loc="upper right")
    ax.set_xlabel("input angle")
    ax.set_ylabel("measurement angle")
    ax.set_title("planar angle risk")
    fig.tight_layout()
    _save(fig, path)


def surface_profile_figure(path, values, h_min=None,
                           conjecture_values=()) -> None:
    """Distribution of grid-node angle risks with optimum markers.

    The six-angle surface cannot be drawn directly; the sorted profile
    still shows how far the optimum sits below the bulk of designs.
    """
    values = np.sort(np.asarray(values, dtype=float))
    fig, ax = plt.subplots(figsize=(6.2, 4.0))
    ax.plot(np.linspace(0.0, 1.0, len(values)), values, lw=1.2,
            color="#33658a", label="grid nodes (sorted)")
    if h_min is not None:
        ax.axhline(h_min, color="#f26419", lw=1.2, label=f"optimum {h_min:.5g}")
    for k, v in enumerate(conjecture_values):
        ax.axhline(v, color="#2f9c5c", lw=1.0, ls="--",
                   label=f"reference design {k + 1}: {v:.5g}")
    ax.set_xlabel("fraction of grid nodes")
    ax.set_ylabel("angle risk")
    ax.set_title("design-grid risk profile")
    ax.legend(frameon=False, fontsize=8)
    fig.tight_layout()
    _save(fig, path)


def counts_figure(path, counts, expected, shots) -> None:
    """Observed success frequencies against their expected values."""
    freq = np.asarray(counts, dtype=float) / shots
    fig, ax = plt.subplots(figsize=(4.8, 4.2))
    img = ax.imshow(freq, cmap="coolwarm", vmin=0.0, vmax=1.0)
    fig.colorbar(img, ax=ax, label="success frequency")
    for i in range(3):
        for j in range(3):
            ax.text(j, i, f"{freq[i, j]:.3f}\n({expected[i, j] / shots:.3f})",
                    ha="center", va="center", fontsize=8)
    ax.set_xticks(range(3), [f"input {j + 1}" for j in range(3)])
    ax.set_yticks(range(3), [f"meas {i + 1}" for i in range(3)])
    ax.set_title(f"counts / N (expected), N = {shots}")
    fig.tight_layout()
    _save(fig, path)


def two_step_figure(path, result, true_params) -> None:
    """Per-parameter absolute errors of stage 1 versus the merged estimate."""
    from .extraction import angle_distance

    labels = ["lam1", "lam2", "lam3", "phi_z", "phi_y", "phi_x"]
    s1 = result.stage1_estimate
    stage1 = ([abs(e - t) for e, t in zip(s1.lam_hat, true_params.lam)]
              + [angle_distance(e, t) for e, t in zip(s1.phi_hat, true_params.phi)])
    final = ([abs(e - t) for e, t in zip(result.lam_hat, true_params.lam)]
             + [angle_distance(e, t) for e, t in zip(result.phi_hat, true_params.phi)])
    xs = np.arange(6)
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    ax.bar(xs - 0.19, stage1, 0.38, label=f"stage 1 (N={result.shots_stage1})",
           color="#86bbd8")
    ax.bar(xs + 0.19, final, 0.38, label=f"merged (N={result.shots_stage2})",
           color="#33658a")
    ax.set_yscale("log")
    ax.set_xticks(xs, labels)
    ax.set_ylabel("absolute error")
    ax.set_title("two-step estimation errors")
    ax.legend(frameon=False)
    fig.tight_layout()
    _save(fig, path)
