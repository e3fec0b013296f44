"""Report emission: versioned JSON, flat CSV tables and matplotlib figures."""
import csv
import json
from pathlib import Path

import numpy as np

FIG_PARAMS = {
    "font.size": 9,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "figure.figsize": (4.5, 3.2),
    "figure.dpi": 120,
    "savefig.bbox": "tight",
}


def _default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, tuple):
        return list(obj)
    raise TypeError(f"not JSON serializable: {type(obj)}")


def dumps(report):
    return json.dumps(report, indent=2, sort_keys=True, default=_default)


def write_json(report, path):
    Path(path).write_text(dumps(report) + "\n")


def write_csv(rows, path, columns=None):
    rows = list(rows)
    if columns is None:
        columns = []
        for r in rows:
            for k in r:
                if k not in columns:
                    columns.append(k)
    with open(path, "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=columns, extrasaction="ignore")
        w.writeheader()
        for r in rows:
            w.writerow({k: ("" if r.get(k) is None else r.get(k)) for k in columns})


RECORD_COLUMNS = ["method", "n_qubits", "ns", "repeat", "fc", "fc_exact", "epochs", "steps", "wall_time"]
SUMMARY_COLUMNS = ["method", "n_qubits", "ns", "mean_fc", "std_fc", "n_repeats"]
NS_STAR_COLUMNS = ["method", "n_qubits", "ns_star", "censored"]


def scaling_tables(report):
    """(records, curves, ns_star) row lists for a scaling report."""
    curves, stars = [], []
    for method in ("rnn", "baseline"):
        if method not in report:
            continue
        for s in report[method]["summary"]:
            stars.append({"method": s["method"], "n_qubits": s["n_qubits"], "ns_star": s["ns_star"], "censored": int(s["censored"])})
            for c in s["curve"]:
                curves.append({"method": s["method"], "n_qubits": s["n_qubits"], **c})
    return report["records"], curves, stars


def write_scaling(report, out_dir, figures=True):
    """Write report.json, CSV tables and (optionally) PNG figures into ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_json(report, out / "report.json")
    records, curves, stars = scaling_tables(report)
    write_csv(records, out / "records.csv", RECORD_COLUMNS)
    write_csv(curves, out / "curves.csv", SUMMARY_COLUMNS)
    write_csv(stars, out / "ns_star.csv", NS_STAR_COLUMNS)
    paths = [out / "report.json", out / "records.csv", out / "curves.csv", out / "ns_star.csv"]
    if figures:
        paths += plot_scaling(report, out)
    return paths


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams.update(FIG_PARAMS)
    return plt


def plot_scaling(report, out_dir):
    plt = _pyplot()
    out = Path(out_dir)
    threshold = report["spec"]["threshold"]
    paths = []

    fig, ax = plt.subplots()
    for s in report["rnn"]["summary"]:
        ns = [c["ns"] for c in s["curve"]]
        ax.errorbar(ns, [c["mean_fc"] for c in s["curve"]], yerr=[c["std_fc"] for c in s["curve"]], marker="o", ms=3, capsize=2, label=f"N={s['n_qubits']}")
    ax.axhline(threshold, color="k", ls="--", lw=0.8)
    ax.set_xscale("log")
    ax.set_xlabel("training shots $N_s$")
    ax.set_ylabel("classical fidelity")
    ax.legend()
    paths.append(out / "fc_vs_ns.png")
    fig.savefig(paths[-1])
    plt.close(fig)

    fig, ax = plt.subplots()
    pts = [(s["n_qubits"], s["ns_star"]) for s in report["rnn"]["summary"] if not s["censored"]]
    if pts:
        xs, ys = zip(*pts)
        ax.plot(xs, ys, "o", color="C1", label="RNN")
        fit = report["rnn"]["fit"]
        if fit:
            xx = np.linspace(fit["x_min"], fit["x_max"], 20)
            ax.plot(xx, fit["slope"] * xx + fit["intercept"], "--", color="C1", lw=1, label=f"linear fit, $R^2$={fit['r2']:.2f}")
    ax.set_xlabel("qubits N")
    ax.set_ylabel("$N_s^*$")
    if pts:
        ax.legend(loc="upper left")
    if "baseline" in report:
        inset = ax.inset_axes([0.6, 0.12, 0.35, 0.35])
        bpts = [(s["n_qubits"], s["ns_star"]) for s in report["baseline"]["summary"] if not s["censored"]]
        if bpts:
            bx, by = zip(*bpts)
            inset.semilogy(bx, by, "s-", color="C2", ms=3)
        inset.set_title("empirical", fontsize=7)
        inset.tick_params(labelsize=6)
    paths.append(out / "ns_star.png")
    fig.savefig(paths[-1])
    plt.close(fig)
    return paths


def plot_training(record, path):
    """Loss curve and (if recorded) classical fidelity of one tomography run."""
    plt = _pyplot()
    fig, ax = plt.subplots()
    ax.plot(record["loss_curve"], color="C0")
    ax.set_xlabel("epoch")
    ax.set_ylabel("mean NLL", color="C0")
    if record.get("fc_curve"):
        ax2 = ax.twinx()
        e, fc = zip(*record["fc_curve"])
        ax2.plot(e, fc, "o-", ms=2, color="C3")
        ax2.set_ylabel("classical fidelity", color="C3")
    fig.savefig(path)
    plt.close(fig)
    return Path(path)


def plot_density(rho, path, title=None):
    """Heat map of the real part of a density matrix."""
    plt = _pyplot()
    fig, ax = plt.subplots()
    im = ax.imshow(np.real(rho), cmap="RdBu_r", vmin=-0.5, vmax=0.5)
    fig.colorbar(im, ax=ax)
    if title:
        ax.set_title(title)
    fig.savefig(path)
    plt.close(fig)
    return Path(path)
