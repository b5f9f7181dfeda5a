"""CSV reports, run manifests and the matching figures."""
from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

COLUMNS = {
    "mse_vs_snr": ["snr_db", "estimator", "nmse", "count", "stderr", "seed", "config_hash"],
    "mse_vs_T": ["T", "snr_db", "nmse", "count", "stderr", "seed", "config_hash"],
    "intermediate_mse": ["snr_db", "t", "t_hat", "nmse", "count", "stderr", "seed", "config_hash"],
    "matched_steps": ["snr_db", "t_hat", "T", "dm_snr_db", "seed", "config_hash"],
    "train_history": ["epoch", "train_loss", "val_loss", "seed", "config_hash"],
    "params_count": ["layer", "params", "seed", "config_hash"],
}

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "lines.linewidth": 1.2,
    "lines.markersize": 4,
    "figure.figsize": (4.2, 3.0),
    "savefig.dpi": 150,
}

MARKERS = {"LS": "x", "Scov": "s", "genie": "", "GMM": "^", "DM": "o"}


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path, kind: str, rows: list[dict], seed: int, config_hash: str) -> Path:
    """Write ``rows`` with the fixed column set of ``kind``; floats keep full precision."""
    cols = COLUMNS[kind]
    path = Path(path)
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(cols)
        for r in rows:
            full = {**r, "seed": seed, "config_hash": config_hash}
            w.writerow([_fmt(full[c]) for c in cols])
    return path


def read_csv(path) -> list[dict]:
    with open(path, newline="") as f:
        return list(csv.DictReader(f))


def write_manifest(path, command: str, config_json: str, seed: int, artifacts: dict) -> Path:
    manifest = {"command": command, "seed": seed, "config": json.loads(config_json), "artifacts": artifacts}
    Path(path).write_text(json.dumps(manifest, sort_keys=True, indent=2) + "\n")
    return Path(path)


def _figure():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams.update(STYLE)
    return plt


def _db(x):
    return 10 * np.log10(np.asarray(x, dtype=float))


def plot_mse_vs_snr(rows: list[dict], path) -> Path:
    plt = _figure()
    fig, ax = plt.subplots()
    for name in dict.fromkeys(r["estimator"] for r in rows):
        sel = [r for r in rows if r["estimator"] == name]
        ls = "--" if name == "genie" else "-"
        ax.plot([r["snr_db"] for r in sel], _db([r["nmse"] for r in sel]), ls, marker=MARKERS.get(name, "."),
                label=name)
    ax.set_xlabel("SNR [dB]")
    ax.set_ylabel("normalized MSE [dB]")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return Path(path)


def plot_mse_vs_T(rows: list[dict], path) -> Path:
    plt = _figure()
    fig, ax = plt.subplots()
    for snr in sorted({r["snr_db"] for r in rows}):
        sel = sorted((r for r in rows if r["snr_db"] == snr), key=lambda r: r["T"])
        ax.plot([r["T"] for r in sel], _db([r["nmse"] for r in sel]), marker="o", label=f"{snr:g} dB")
    ax.set_xscale("log")
    ax.set_xlabel("total diffusion steps T")
    ax.set_ylabel("normalized MSE [dB]")
    ax.legend(title="SNR")
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return Path(path)


def plot_intermediate(rows: list[dict], path) -> Path:
    plt = _figure()
    fig, ax = plt.subplots()
    for snr in sorted({r["snr_db"] for r in rows}):
        sel = sorted((r for r in rows if r["snr_db"] == snr), key=lambda r: r["t"])
        ax.plot([r["t"] for r in sel], _db([r["nmse"] for r in sel]), label=f"{snr:g} dB")
    ax.invert_xaxis()
    ax.set_xlabel("reverse step t")
    ax.set_ylabel("normalized MSE [dB]")
    ax.legend(title="SNR", ncol=2)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return Path(path)


def plot_matched_steps(rows: list[dict], path) -> Path:
    plt = _figure()
    fig, ax = plt.subplots()
    ax.step([r["snr_db"] for r in rows], [r["t_hat"] for r in rows], where="mid", marker="o")
    ax.set_xlabel("SNR [dB]")
    ax.set_ylabel("entry step")
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return Path(path)
