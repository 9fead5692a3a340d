"""Render benchmark CSV outputs to PNG, autodetecting the table layout.

Recognized layouts (by required columns):

* timeseries   -- ``t`` with ``mx``, ``my``, ``mz``: averaged magnetization
                  components against time in nanoseconds.
* hysteresis   -- ``h_comp_over_ms`` with ``m_proj``: the projected loop,
                  one line per value of the ``branch`` column when present.
* profile      -- ``r_m`` with ``mz``: radial out-of-plane profile in nm.
* sweep        -- ``d_over_dc`` with ``r_s_m``: ring radius against the
                  coupling ratio.

Anything else raises ``PlotSchemaError`` naming the columns that were found.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)
import numpy as np  # noqa: E402

from .common import read_csv_columns  # noqa: E402


class PlotSchemaError(ValueError):
    pass


_SCHEMAS = (
    ("timeseries", {"t", "mx", "my", "mz"}),
    ("hysteresis", {"h_comp_over_ms", "m_proj"}),
    ("profile", {"r_m", "mz"}),
    ("sweep", {"d_over_dc", "r_s_m"}),
)


def detect_schema(cols: dict) -> str:
    names = set(cols)
    for schema, required in _SCHEMAS:
        if required <= names:
            return schema
    raise PlotSchemaError(
        "no known layout matches columns "
        f"[{', '.join(sorted(names))}]; expected one of: "
        + "; ".join(f"{s} needs [{', '.join(sorted(r))}]" for s, r in _SCHEMAS))


def _numeric(cols: dict, name: str) -> np.ndarray:
    arr = np.asarray(cols[name], dtype=np.float64)
    if not np.all(np.isfinite(arr) | np.isnan(arr)):
        raise PlotSchemaError(f"column {name!r} contains non-finite values")
    return arr


def _plot_timeseries(ax, cols):
    t = _numeric(cols, "t") * 1e9
    for c, style in (("mx", "-"), ("my", "--"), ("mz", ":")):
        ax.plot(t, _numeric(cols, c), style, label=f"<{c}>")
    ax.set_xlabel("t (ns)")
    ax.set_ylabel("average unit magnetization")
    ax.legend()


def _plot_hysteresis(ax, cols):
    h = _numeric(cols, "h_comp_over_ms")
    m = _numeric(cols, "m_proj")
    if "branch" in cols:
        branches = np.asarray(cols["branch"])
        for name in dict.fromkeys(branches.tolist()):  # keep file order
            sel = branches == name
            ax.plot(h[sel], m[sel], marker=".", label=str(name))
        ax.legend()
    else:
        ax.plot(h, m, marker=".")
    ax.set_xlabel("H component / Ms")
    ax.set_ylabel("m projected on the diagonal")
    ax.axhline(0.0, color="0.7", lw=0.8)
    ax.axvline(0.0, color="0.7", lw=0.8)


def _plot_profile(ax, cols):
    r = _numeric(cols, "r_m") * 1e9
    ax.plot(r, _numeric(cols, "mz"), marker=".")
    ax.set_xlabel("r (nm)")
    ax.set_ylabel("m_z")
    ax.axhline(0.0, color="0.7", lw=0.8)


def _plot_sweep(ax, cols):
    x = _numeric(cols, "d_over_dc")
    ax.plot(x, _numeric(cols, "r_s_m") * 1e9, marker="o")
    ax.set_xlabel("D / Dc")
    ax.set_ylabel("ring radius (nm)")


_RENDERERS = {"timeseries": _plot_timeseries, "hysteresis": _plot_hysteresis,
              "profile": _plot_profile, "sweep": _plot_sweep}


def render_csv(csv_path, out_path=None, *, title: str | None = None) -> Path:
    """Plot one CSV; returns the written PNG path."""
    csv_path = Path(csv_path)
    cols = read_csv_columns(csv_path)
    schema = detect_schema(cols)
    out = Path(out_path) if out_path is not None \
        else csv_path.with_suffix(".png")
    out.parent.mkdir(parents=True, exist_ok=True)

    fig, ax = plt.subplots(figsize=(6.4, 4.2), constrained_layout=True)
    try:
        _RENDERERS[schema](ax, cols)
        ax.grid(True, alpha=0.3)
        ax.set_title(title if title is not None else csv_path.stem)
        fig.savefig(out, dpi=130)
    finally:
        plt.close(fig)
    return out
