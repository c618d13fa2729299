"""Figure rendering for sweep summaries. Writes vector PDF files."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

_AXIS_LABELS = {
    "pilot_length": "pilot length L",
    "snr_db": "SNR (dB)",
    "antennas": "antennas M",
    "activity_prob": "activity probability",
    "num_devices": "devices N",
    "num_clusters": "clusters G",
    "sigma_phi_deg": "angular spread (deg)",
}

_METRICS = {
    "nmse": ("nmse_mean", "nmse_se", "NMSE"),
    "pmd": ("pmd_mean", "pmd_se", "missed-detection probability"),
    "pfa": ("pfa_mean", "pfa_se", "false-alarm probability"),
    "runtime": ("runtime_s_mean", "runtime_s_se", "runtime (s)"),
}

_STYLES = {
    "cb_somp": dict(color="tab:blue", marker="o"),
    "aem_admm": dict(color="tab:orange", marker="s"),
    "aem_sbl": dict(color="tab:green", marker="^"),
    "somp": dict(color="tab:blue", marker="o", linestyle="--"),
    "admm": dict(color="tab:orange", marker="s", linestyle="--"),
    "sbl": dict(color="tab:green", marker="^", linestyle="--"),
}


def _axis_label(sweep_name: str) -> str:
    return _AXIS_LABELS.get(sweep_name, sweep_name)


def plot_summary_metric(summary_rows, metric: str, path, log_y: bool = True) -> None:
    """One errorbar line per algorithm over the sweep axis."""
    if metric not in _METRICS:
        raise ValueError(f"unknown metric {metric!r}; expected one of {sorted(_METRICS)}")
    mean_key, se_key, ylabel = _METRICS[metric]
    by_alg: dict[str, list] = {}
    for row in summary_rows:
        by_alg.setdefault(row.algorithm, []).append(row)

    fig, ax = plt.subplots(figsize=(5.0, 3.6))
    drew = False
    for alg, rows in by_alg.items():
        xs, ys, es = [], [], []
        for row in rows:
            mean = getattr(row, mean_key)
            if mean is None:
                continue
            xs.append(row.sweep_value)
            ys.append(mean)
            es.append(getattr(row, se_key) or 0.0)
        if not xs:
            continue
        style = _STYLES.get(alg, {})
        ax.errorbar(xs, ys, yerr=es, label=alg, capsize=2, markersize=4, **style)
        drew = True
    if log_y and drew:
        positive = [
            getattr(r, mean_key)
            for rows in by_alg.values()
            for r in rows
            if getattr(r, mean_key) is not None and getattr(r, mean_key) > 0
        ]
        if positive:
            ax.set_yscale("log")
    sweep_name = summary_rows[0].sweep_name if summary_rows else ""
    ax.set_xlabel(_axis_label(sweep_name))
    ax.set_ylabel(ylabel)
    ax.grid(True, which="both", alpha=0.3)
    if drew:
        ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, format="pdf")
    plt.close(fig)


def render_metric_figures(table, output_dir) -> dict[str, Path]:
    """Render nmse/pmd/pfa/runtime figures next to the delimited output."""
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    summary = table.summary()
    paths = {}
    for metric in _METRICS:
        path = out / f"{metric}.pdf"
        plot_summary_metric(summary, metric, path)
        paths[f"plot_{metric}"] = path
    return paths


def plot_coherence(rows, path, xlabel: str = "sweep value") -> None:
    """Mean mutual coherence with a min/max band over pilot seeds."""
    values = sorted({v for v, _, _ in rows})
    means, lows, highs = [], [], []
    for v in values:
        cos = np.array([c for vv, _, c in rows if vv == v])
        means.append(cos.mean())
        lows.append(cos.min())
        highs.append(cos.max())
    fig, ax = plt.subplots(figsize=(5.0, 3.6))
    ax.plot(values, means, marker="o", color="tab:purple", label="mean")
    ax.fill_between(values, lows, highs, alpha=0.2, color="tab:purple", label="range")
    ax.set_xlabel(xlabel)
    ax.set_ylabel("mutual coherence")
    ax.grid(True, alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, format="pdf")
    plt.close(fig)
