"""
asm2tv.plots – static plotly figures for ablation curves, gate matrices and
per-view DTW profiles.  `save_html` writes a standalone page.
"""

from __future__ import annotations
from pathlib import Path
from typing import Sequence

import pandas as pd
import plotly.express as px
import plotly.graph_objects as go


def ablation_figure(summary: pd.DataFrame, metric: str = "macro_f1") -> go.Figure:
    """Mean test metric per grid value, error bars at one std over seeds."""
    axis = summary["axis"].iloc[0] if len(summary) else ""
    fig = px.line(summary, x="value", y=f"{metric}_mean", error_y=f"{metric}_std",
                  markers=True, title=f"Ablation over {axis}")
    fig.update_layout(height=360, xaxis_title=axis, yaxis_title=f"test {metric}")
    fig.update_xaxes(type="category")
    return fig


def gate_heatmap(gates: pd.DataFrame, planted_groups: Sequence[int] | None = None) -> go.Figure:
    """Open-gate probabilities, units as rows and blocks as columns."""
    probs = gates.drop(columns="unit")
    units = list(gates["unit"])
    if planted_groups is not None and len(planted_groups) == len(units):
        units = [f"{u} (g{g})" for u, g in zip(units, planted_groups)]
    fig = go.Figure(
        data=[go.Heatmap(z=probs.to_numpy(), x=list(probs.columns), y=units,
                         zmin=0.0, zmax=1.0, colorscale="Blues")],
        layout=go.Layout(title="Gate probabilities", margin=dict(l=80, r=20, t=40, b=40)),
    )
    fig.update_layout(height=max(300, 18 * len(units)))
    fig.update_yaxes(autorange="reversed")
    return fig


def dtw_profile_figure(distances: Sequence[float], view_names: Sequence[str] | None = None,
                       title: str = "Per-view DTW distance") -> go.Figure:
    names = list(view_names) if view_names is not None else [f"v{v}" for v in range(len(distances))]
    fig = px.bar(x=names, y=list(distances), title=title)
    fig.update_layout(height=320, xaxis_title="view", yaxis_title="DTW")
    return fig


def save_html(fig: go.Figure, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.write_html(str(path), include_plotlyjs="cdn")
    return path
