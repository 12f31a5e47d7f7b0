"""Figure rendering: one function per figure kind, dispatched by a spec.

Output is deterministic for identical inputs: SVG text is kept as text, the
hash salt is pinned and no timestamps are embedded (style option
`timestamps`, off by default).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .schema import SchemaError, load_record, load_sweep_table, pick_input

FIGURE_KINDS = ("decay_loglog", "nu_vs_eps", "maximizer_trajectory", "profile_overlay")

matplotlib.rcParams["svg.hashsalt"] = "fracground-plots"
matplotlib.rcParams["svg.fonttype"] = "none"


@dataclass
class FigureSpec:
    kind: str
    input_paths: list
    output_path: str
    style: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in FIGURE_KINDS:
            raise SchemaError(f"unknown figure kind {self.kind!r}; expected {FIGURE_KINDS}")
        if not self.input_paths:
            raise SchemaError("figure spec needs at least one input path")
        if not self.output_path.endswith((".svg", ".png")):
            raise SchemaError("output_path must end in .svg or .png")


def load_figure_spec(path: str) -> FigureSpec:
    with open(path, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    unknown = set(data) - {"kind", "input_paths", "output_path", "style"}
    if unknown:
        raise SchemaError(f"{path}: unknown spec keys {sorted(unknown)}")
    try:
        return FigureSpec(**data)
    except TypeError as exc:
        raise SchemaError(f"{path}: {exc}") from exc


def _save(fig, spec: FigureSpec) -> None:
    metadata = None
    if spec.output_path.endswith(".svg") and not spec.style.get("timestamps", False):
        metadata = {"Date": None}
    fig.savefig(spec.output_path, metadata=metadata)
    plt.close(fig)


def _decay_loglog(spec: FigureSpec):
    record = load_record(
        pick_input(spec.input_paths, ".record.json"),
        require=("bins.log_r", "bins.log_u", "slope", "expected_slope"),
    )
    results = record["results"]
    r = np.exp(np.asarray(results["bins"]["log_r"]))
    u = np.exp(np.asarray(results["bins"]["log_u"]))
    slope = results["slope"]
    expected = results["expected_slope"]

    fig, ax = plt.subplots(figsize=(5, 4))
    ax.loglog(r, u, "o", ms=3, label=f"radial profile (fit {slope:.2f})")
    if spec.style.get("reference_slope", True):
        anchor = u[0] * (r / r[0]) ** expected
        ax.loglog(r, anchor, "k--", lw=1, label=f"reference slope {expected:.2f}")
    ax.set_xlabel("r")
    ax.set_ylabel("u(r)")
    ax.legend(frameon=False)
    ax.set_title("tail decay")
    fig.tight_layout()
    return fig


def _nu_vs_eps(spec: FigureSpec):
    table = load_sweep_table(pick_input(spec.input_paths, ".sweep.tsv"))
    record = load_record(
        pick_input(spec.input_paths, ".record.json"), require=("nu_limit",)
    )
    nu_limit = record["results"]["nu_limit"]

    fig, ax = plt.subplots(figsize=(5, 4))
    ax.plot(table["eps"], table["nu"], "o-", label="nu(eps)")
    ax.axhline(nu_limit, color="k", ls="--", lw=1, label=f"limit {nu_limit:.6f}")
    if spec.style.get("log_x", False):
        ax.set_xscale("log")
    if spec.style.get("log_y", False):
        ax.set_yscale("log")
    ax.set_xlabel("eps")
    ax.set_ylabel("nu")
    ax.legend(frameon=False)
    ax.set_title("quotient minimum vs eps")
    fig.tight_layout()
    return fig


def _maximizer_trajectory(spec: FigureSpec):
    table = load_sweep_table(pick_input(spec.input_paths, ".sweep.tsv"))
    fig, ax = plt.subplots(figsize=(5, 4))
    if "max_y" in table:
        ax.plot(table["max_x"], table["max_y"], "o-")
        for eps, x, y in zip(table["eps"], table["max_x"], table["max_y"]):
            ax.annotate(f"{eps:g}", (x, y), fontsize=8)
        ax.set_xlabel("max_x")
        ax.set_ylabel("max_y")
    else:
        ax.plot(table["eps"], table["max_x"], "o-")
        ax.set_xlabel("eps")
        ax.set_ylabel("maximizer")
    ax.set_title("maximizer trajectory")
    fig.tight_layout()
    return fig


def _profile_overlay(spec: FigureSpec):
    record = load_record(
        pick_input(spec.input_paths, ".record.json"),
        require=("profiles.x", "profiles.u_tilde"),
    )
    profiles = record["results"]["profiles"]
    x = np.asarray(profiles["x"])
    u_tilde = np.asarray(profiles["u_tilde"])
    eps_keys = sorted(
        (k for k in profiles if k.startswith("v_eps_")),
        key=lambda k: -float(k.split("_")[-1]),
    )
    if not eps_keys:
        raise SchemaError("profile_overlay needs at least one v_eps_* profile")

    fig, ax = plt.subplots(figsize=(5.5, 4.5))
    ax.plot(x, u_tilde, "k-", lw=2, label="limit profile")
    for key in eps_keys:
        ax.plot(x, np.asarray(profiles[key]), lw=1, label=key.replace("v_eps_", "eps="))
    ax.set_xlabel("x")
    ax.set_ylabel("u")
    ax.legend(frameon=False, fontsize=8)
    ax.set_title("minimizers vs limit profile")

    inset = ax.inset_axes([0.62, 0.45, 0.35, 0.3])
    finest = np.asarray(profiles[eps_keys[-1]])
    inset.plot(x, finest - u_tilde, lw=0.8)
    inset.set_title("residual", fontsize=8)
    inset.tick_params(labelsize=6)
    fig.tight_layout()
    return fig


_RENDERERS = {
    "decay_loglog": _decay_loglog,
    "nu_vs_eps": _nu_vs_eps,
    "maximizer_trajectory": _maximizer_trajectory,
    "profile_overlay": _profile_overlay,
}


def render(spec: FigureSpec) -> str:
    """Draw the configured figure and write it to spec.output_path."""
    fig = _RENDERERS[spec.kind](spec)
    _save(fig, spec)
    return spec.output_path
