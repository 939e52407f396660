"""Static SVG figures from a trial table."""
from __future__ import annotations

import io
import logging
import math
import os
from typing import Callable, Dict, List, Optional, Tuple

import matplotlib
import numpy as np
import pandas as pd
from matplotlib.axes import Axes
from matplotlib.figure import Figure

from app.core.errors import PlotError

logger = logging.getLogger(__name__)

PLOT_KINDS = ("success_vs_difficulty", "reward_vs_difficulty", "cost_box", "reward_success_bars")
SERIES_KEYS = ("algorithm", "K", "alpha")

# Fixed ids and no timestamp keep the SVG output byte-stable.
_SVG_RC = {"svg.hashsalt": "coprl", "svg.fonttype": "path"}


def _fmt(value: float) -> str:
    return "inf" if math.isinf(value) else f"{value:g}"


def _series(table: pd.DataFrame) -> List[Tuple[Tuple, str]]:
    """Distinct (algorithm, K, alpha) series, labelled by the keys that vary."""
    keys = sorted(set(map(tuple, table[list(SERIES_KEYS)].itertuples(index=False))), key=str)
    varying = [i for i, name in enumerate(SERIES_KEYS) if table[name].nunique(dropna=False) > 1]
    out = []
    for key in keys:
        parts = [str(key[0])] if 0 in varying or not varying else []
        if 1 in varying:
            parts.append(f"K={_fmt(key[1])}")
        if 2 in varying:
            parts.append(f"alpha={_fmt(key[2])}")
        out.append((key, " ".join(parts) or str(key[0])))
    return out


def _select(table: pd.DataFrame, key: Tuple) -> pd.DataFrame:
    mask = np.ones(len(table), dtype=bool)
    for name, value in zip(SERIES_KEYS, key):
        mask &= (table[name] == value).to_numpy()
    return table[mask]


def _levels(table: pd.DataFrame) -> List[float]:
    return sorted(table["difficulty"].dropna().unique().tolist())


def _level_rows(table: pd.DataFrame, level: float) -> pd.DataFrame:
    return table[np.isclose(table["difficulty"].to_numpy(dtype=float), level)]


def _grouped_bars(
    ax: Axes,
    table: pd.DataFrame,
    measure: Callable[[pd.DataFrame], Tuple[float, float]],
) -> None:
    levels = _levels(table)
    if not levels:
        raise PlotError("table has no difficulty levels (room protocol?)")
    series = _series(table)
    width = 0.8 / len(series)
    x = np.arange(len(levels))
    for i, (key, label) in enumerate(series):
        rows = _select(table, key)
        heights, errors = [], []
        for level in levels:
            h, e = measure(_level_rows(rows, level))
            heights.append(h)
            errors.append(e)
        err = np.asarray(errors, dtype=float)
        ax.bar(
            x + (i - (len(series) - 1) / 2) * width,
            np.nan_to_num(np.asarray(heights, dtype=float)),
            width,
            yerr=err if np.any(np.isfinite(err) & (err > 0)) else None,
            capsize=3,
            label=label,
        )
    ax.set_xticks(x)
    ax.set_xticklabels([f"{level:g}" for level in levels])
    ax.set_xlabel("difficulty")
    ax.legend()


def _success_measure(rows: pd.DataFrame) -> Tuple[float, float]:
    return (float(rows["success"].mean()) if len(rows) else 0.0), math.nan


def _reward_measure(rows: pd.DataFrame) -> Tuple[float, float]:
    won = rows.loc[rows["success"].astype(bool), "negated_reward"]
    if won.empty:
        return math.nan, math.nan
    return float(won.mean()), (float(won.std(ddof=1)) if len(won) > 1 else math.nan)


def _success_vs_difficulty(fig: Figure, table: pd.DataFrame) -> None:
    ax = fig.subplots()
    _grouped_bars(ax, table, _success_measure)
    ax.set_ylim(0.0, 1.05)
    ax.set_ylabel("success rate")


def _reward_vs_difficulty(fig: Figure, table: pd.DataFrame) -> None:
    ax = fig.subplots()
    _grouped_bars(ax, table, _reward_measure)
    ax.set_ylabel("negated reward (successful trials)")


def _cost_box(fig: Figure, table: pd.DataFrame) -> None:
    executed = table[table["planned"].astype(bool)]
    if executed.empty:
        raise PlotError("no executed trials to draw costs for")
    ax = fig.subplots()
    series = _series(executed)
    data = [_select(executed, key)["realized_cost"].to_numpy(dtype=float) for key, _ in series]
    # whiskers at the extremes: min, quartiles, median, max
    ax.boxplot(data, whis=(0, 100), showfliers=False)
    ax.set_xticks(np.arange(1, len(series) + 1))
    ax.set_xticklabels([label for _, label in series])
    ax.set_ylabel("realized cost")


def _reward_success_bars(fig: Figure, table: pd.DataFrame) -> None:
    left, right = fig.subplots(1, 2)
    series = _series(table)
    x = np.arange(len(series))
    success, reward, spread = [], [], []
    for key, _ in series:
        rows = _select(table, key)
        success.append(_success_measure(rows)[0])
        r, e = _reward_measure(rows)
        reward.append(r)
        spread.append(e)
    err = np.asarray(spread, dtype=float)
    left.bar(x, success, 0.6)
    left.set_ylim(0.0, 1.05)
    left.set_ylabel("success rate")
    right.bar(
        x,
        np.nan_to_num(np.asarray(reward, dtype=float)),
        0.6,
        yerr=err if np.any(np.isfinite(err) & (err > 0)) else None,
        capsize=3,
    )
    right.set_ylabel("negated reward (successful trials)")
    for ax in (left, right):
        ax.set_xticks(x)
        ax.set_xticklabels([label for _, label in series], rotation=30, ha="right")


_RENDERERS: Dict[str, Callable[[Figure, pd.DataFrame], None]] = {
    "success_vs_difficulty": _success_vs_difficulty,
    "reward_vs_difficulty": _reward_vs_difficulty,
    "cost_box": _cost_box,
    "reward_success_bars": _reward_success_bars,
}


def emit_plot(table: pd.DataFrame, kind: str, path: Optional[str] = None) -> str:
    """Render ``kind`` from a trial table and return the SVG document.

    Raises:
        PlotError: unknown kind, empty table or missing columns.
    """
    renderer = _RENDERERS.get(kind)
    if renderer is None:
        raise PlotError(f"unknown plot kind {kind!r}; expected one of {', '.join(PLOT_KINDS)}")
    if table.empty:
        raise PlotError("cannot plot an empty table")
    missing = [c for c in (*SERIES_KEYS, "difficulty", "success", "negated_reward", "realized_cost", "planned")
               if c not in table.columns]
    if missing:
        raise PlotError(f"table lacks columns {missing}")

    with matplotlib.rc_context(_SVG_RC):
        fig = Figure(figsize=(7.0, 4.5))
        renderer(fig, table)
        fig.suptitle(kind.replace("_", " "))
        fig.tight_layout()
        buffer = io.StringIO()
        fig.savefig(buffer, format="svg", metadata={"Date": None})
    svg = buffer.getvalue()
    if path:
        os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
        with open(path, "w") as f:
            f.write(svg)
        logger.info("Wrote %s plot to %s", kind, path)
    return svg
