"""Static SVG charts rendered from JSON reports.

Output is byte-deterministic: the SVG id salt is fixed and the date
metadata is dropped.
"""

import io
import json
import os
import warnings

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .experiments import write_atomic  # noqa: E402

__all__ = ["ReportParseError", "load_report", "emit_plots"]

_RC = {"svg.hashsalt": "slgbm", "svg.fonttype": "none", "font.size": 9}


class ReportParseError(ValueError):
    """A report file or one of its records is malformed."""


def load_report(path):
    try:
        with open(path) as fh:
            obj = json.load(fh)
    except json.JSONDecodeError as e:
        raise ReportParseError(f"{path}: invalid JSON at line {e.lineno}: {e.msg}") from None
    if not isinstance(obj, dict) or "series" not in obj or "command" not in obj:
        raise ReportParseError(f"{path}: record <root> lacks 'command' or 'series'")
    return obj


def _need(rec, name, keys):
    if not isinstance(rec, dict):
        raise ReportParseError(f"record {name} is not an object")
    for k in keys:
        if k not in rec:
            raise ReportParseError(f"record {name} is missing '{k}'")
    try:
        return {k: rec[k] if np.isscalar(rec[k]) else np.asarray(rec[k], dtype=float) for k in keys}
    except (TypeError, ValueError):
        raise ReportParseError(f"record {name} has non-numeric entries") from None


def _save(fig, path):
    buf = io.StringIO()
    fig.savefig(buf, format="svg", metadata={"Date": None})
    plt.close(fig)
    return write_atomic(path, buf.getvalue())


def _moments_plot(rec, name, path):
    d = _need(rec, name, ["p", "tau", "log_trace_power", "log_power_trace", "log_lower", "log_upper"])
    if len(d["tau"]) != len(d["log_lower"]):
        raise ReportParseError(f"record {name} has series of unequal length")
    fig, ax = plt.subplots(figsize=(5, 3.5))
    p = int(d["p"])
    ax.plot(d["tau"], d["log_upper"], "k--", lw=1, label=r"$\ln n^p e^{r\tau}$")
    ax.plot(d["tau"], d["log_lower"], "k:", lw=1, label=r"$\ln n e^{r\tau}$")
    ax.plot(d["tau"], d["log_power_trace"], "C0", label=rf"$\ln E\,\mathrm{{tr}}^{p}G$")
    ax.plot(d["tau"], d["log_trace_power"], "C1", label=rf"$\ln E\,\mathrm{{tr}}G^{p}$")
    ax.set_xlabel(r"$\tau$")
    ax.set_title(f"moments of degree p = {p}")
    ax.legend(frameon=False)
    fig.tight_layout()
    return _save(fig, path)


def _nontight_plot(rec, path):
    d = _need(rec, "series.nontight", ["tau_star", "estimate", "stderr"])
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.errorbar(d["tau_star"], d["estimate"], yerr=3 * d["stderr"], fmt="o", capsize=3,
                label=r"$E\,\hat R\,I(\hat R\leq\hat R^*)$ ($\pm 3$ se)")
    ax.axhline(0.5, color="k", ls="--", lw=1, label="1/2")
    ax.set_xlabel(r"$\tau^*$")
    ax.legend(frameon=False)
    fig.tight_layout()
    return _save(fig, path)


def _histogram_plot(rec, path):
    d = _need(rec, "series.histogram", ["tau", "edges", "counts", "mu_ref", "var_ref"])
    edges, counts = d["edges"], d["counts"]
    if len(edges) != len(counts) + 1:
        raise ReportParseError("record series.histogram has inconsistent edges and counts")
    width = np.diff(edges)
    dens = counts / (counts.sum() * width)
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.stairs(dens, edges, fill=True, alpha=0.4, label="simulated")
    x = np.linspace(edges[0], edges[-1], 400)
    mu, var = float(d["mu_ref"]), float(d["var_ref"])
    ax.plot(x, np.exp(-(x - mu) ** 2 / (2 * var)) / np.sqrt(2 * np.pi * var), "k", lw=1,
            label="Gaussian reference")
    ax.set_xlabel(rf"$\ln|F|^2$ at $\tau$ = {float(d['tau']):g}")
    ax.legend(frameon=False)
    fig.tight_layout()
    return _save(fig, path)


def emit_plots(report, out_dir):
    """Write one SVG per plottable series of ``report`` (a dict or a path)."""
    if isinstance(report, (str, os.PathLike)):
        report = load_report(report)
    series = report.get("series") or {}
    if not isinstance(series, dict):
        raise ReportParseError("record series is not an object")
    files = []
    with plt.rc_context(_RC):
        for k, rec in enumerate(series.get("moments") or []):
            name = f"series.moments[{k}]"
            p = rec.get("p", k + 1) if isinstance(rec, dict) else k + 1
            files.append(_moments_plot(rec, name, os.path.join(out_dir, f"moments_p{p}.svg")))
        if series.get("nontight"):
            files.append(_nontight_plot(series["nontight"], os.path.join(out_dir, "nontightness.svg")))
        if series.get("histogram"):
            files.append(_histogram_plot(series["histogram"], os.path.join(out_dir, "log_norm_histogram.svg")))
    if not files:
        warnings.warn("report contains no plottable series; nothing written")
    return files
