"""Figure specifications and rendering over schema=1 CSV inputs.

Each figure kind declares the columns it needs; inputs failing the schema
line, the header, or a required column raise SchemaError.  All numbers are
plotted as-is: fits and error bars come precomputed in the CSV.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import pandas as pd

__all__ = ["FigureSpec", "SchemaError", "render", "REQUIRED_COLUMNS"]

SCHEMA_LINE = "# schema=1"

REQUIRED_COLUMNS = {
    "convergence": ["N", "s", "t", "error", "stderr"],
    "badset-exponent": ["eta", "theta", "value", "stderr",
                        "fit_eta_exponent", "fit_theta_exponent"],
    "dispersive": ["t", "ratio"],
    "partition": ["s", "value", "stderr"],
}

# byte-stable output: fixed style, no timestamps in metadata
_RC = {
    "figure.figsize": (6.0, 4.0),
    "figure.dpi": 100,
    "font.family": "DejaVu Sans",
    "font.size": 10,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "svg.hashsalt": "kc-plots",
}


class SchemaError(ValueError):
    """Input CSV does not conform to schema=1 or lacks a required column."""


@dataclass(frozen=True)
class FigureSpec:
    """What to draw: one input CSV, one figure kind, one output image."""

    kind: str
    input: str
    output: str
    logx: bool = False
    logy: bool = False
    title: str = ""

    def __post_init__(self):
        if self.kind not in REQUIRED_COLUMNS:
            raise ValueError(
                f"unknown figure kind {self.kind!r}; "
                f"expected one of {sorted(REQUIRED_COLUMNS)}")

    @classmethod
    def from_file(cls, path) -> "FigureSpec":
        path = Path(path)
        if not path.exists():
            raise ValueError(f"spec file not found: {path}")
        cp = configparser.ConfigParser()
        try:
            cp.read_string(path.read_text())
        except configparser.Error as exc:
            raise ValueError(f"cannot parse {path}: {exc}") from exc
        if not cp.has_section("figure"):
            raise ValueError(f"{path}: missing [figure] section")
        sec = cp["figure"]
        for key in ("kind", "input", "output"):
            if key not in sec:
                raise ValueError(f"{path}: [figure] needs '{key}'")
        return cls(kind=sec["kind"],
                   input=str(path.parent / sec["input"]),
                   output=str(path.parent / sec["output"]),
                   logx=sec.getboolean("logx", fallback=False),
                   logy=sec.getboolean("logy", fallback=False),
                   title=sec.get("title", ""))


def load_table(path, kind: str) -> pd.DataFrame:
    """Read a schema=1 CSV and check the columns the figure kind needs."""
    path = Path(path)
    if not path.exists():
        raise SchemaError(f"input CSV not found: {path}")
    with open(path) as fh:
        first = fh.readline().rstrip("\n")
        if first != SCHEMA_LINE:
            raise SchemaError(
                f"{path}: first line must be '{SCHEMA_LINE}', got {first!r}")
        try:
            frame = pd.read_csv(fh)
        except Exception as exc:
            raise SchemaError(f"{path}: cannot parse CSV body: {exc}") from exc
    for col in REQUIRED_COLUMNS[kind]:
        if col not in frame.columns:
            raise SchemaError(f"{path}: missing required column '{col}' "
                              f"for kind '{kind}'")
    if len(frame) == 0:
        raise SchemaError(f"{path}: empty CSV body")
    return frame


def _finish(fig, ax, spec: FigureSpec):
    if spec.logx:
        ax.set_xscale("log")
    if spec.logy:
        ax.set_yscale("log")
    if spec.title:
        ax.set_title(spec.title)
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    out = Path(spec.output)
    out.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out, metadata={"Software": "kc-plots"})
    plt.close(fig)


def _plot_convergence(frame: pd.DataFrame, spec: FigureSpec):
    fig, ax = plt.subplots()
    for (s, t), grp in frame.groupby(["s", "t"], sort=True):
        grp = grp.sort_values("N")
        ax.errorbar(grp["N"], grp["error"], yerr=grp["stderr"],
                    marker="o", capsize=3, label=f"s={s}, t={t}")
    ax.set_xlabel("N")
    ax.set_ylabel("sup marginal error")
    _finish(fig, ax, spec)


def _plot_badset(frame: pd.DataFrame, spec: FigureSpec):
    fig, ax = plt.subplots()
    ok = frame
    if "skipped" in frame.columns:
        ok = frame[frame["skipped"] == 0]
    if len(ok) == 0:
        raise SchemaError(f"{spec.input}: every row is marked skipped")
    for theta, grp in ok.groupby("theta", sort=True):
        grp = grp.sort_values("eta")
        ax.errorbar(grp["eta"], grp["value"], yerr=grp["stderr"],
                    marker="s", capsize=3, label=f"theta={theta}")
    fit_eta = float(ok["fit_eta_exponent"].iloc[0])
    fit_theta = float(ok["fit_theta_exponent"].iloc[0])
    ax.annotate(f"fitted exponents: eta {fit_eta:.3g}, theta {fit_theta:.3g}",
                xy=(0.05, 0.95), xycoords="axes fraction", va="top",
                fontsize=9)
    ax.set_xlabel("velocity-gap threshold eta")
    ax.set_ylabel("bad-set measure")
    _finish(fig, ax, spec)


def _plot_dispersive(frame: pd.DataFrame, spec: FigureSpec):
    fig, ax = plt.subplots()
    grp = frame.sort_values("t")
    ax.plot(grp["t"], grp["ratio"], marker="o", label="lhs / rhs")
    ax.axhline(1.0, color="k", linestyle="--", linewidth=1, label="bound")
    ax.set_xlabel("t")
    ax.set_ylabel("transport decay ratio")
    _finish(fig, ax, spec)


def _plot_partition(frame: pd.DataFrame, spec: FigureSpec):
    fig, ax = plt.subplots()
    grp = frame.sort_values("s")
    ax.errorbar(grp["s"], grp["value"], yerr=grp["stderr"], marker="o",
                capsize=3, label="acceptance estimate")
    for col, style in (("lower", ":"), ("upper", "--")):
        if col in grp.columns:
            ax.plot(grp["s"], grp[col], linestyle=style, color="gray",
                    label=f"{col} bound")
    ax.set_xlabel("s")
    ax.set_ylabel("exclusion probability")
    _finish(fig, ax, spec)


_PLOTTERS = {
    "convergence": _plot_convergence,
    "badset-exponent": _plot_badset,
    "dispersive": _plot_dispersive,
    "partition": _plot_partition,
}


def render(spec: FigureSpec) -> str:
    """Render the figure described by `spec`; returns the output path."""
    frame = load_table(spec.input, spec.kind)
    with plt.rc_context(_RC):
        _PLOTTERS[spec.kind](frame, spec)
    return spec.output
