import math

import numpy as np
import pandas as pd
import pytest

from app.core.errors import PlotError
from app.services.experiment_service import RESULT_COLUMNS
from app.services.plot_service import PLOT_KINDS, emit_plot


def _table():
    rows = []
    rng = np.random.default_rng(0)
    for algorithm, K in (("cop", 2.0), ("cop", math.inf), ("sorb", math.inf)):
        for difficulty in (0.3, 0.5):
            for trial in range(3):
                success = bool(rng.random() < 0.7)
                rows.append(
                    {
                        "schema_version": 1,
                        "trial": trial,
                        "seed": trial,
                        "algorithm": algorithm,
                        "K": K,
                        "alpha": 1.0,
                        "difficulty": difficulty,
                        "planned": True,
                        "success": success,
                        "steps": int(rng.integers(10, 40)),
                        "negated_reward": float(rng.integers(10, 40)),
                        "realized_cost": float(rng.integers(0, 5)),
                        "path_length": 20.0,
                        "certificate_cvar": 1.0,
                        "violated": False,
                        "stalled": False,
                    }
                )
    return pd.DataFrame(rows, columns=RESULT_COLUMNS)


@pytest.mark.parametrize("kind", PLOT_KINDS)
def test_every_kind_renders_svg(kind, tmp_path):
    out = tmp_path / "figs" / f"{kind}.svg"
    svg = emit_plot(_table(), kind, str(out))
    assert svg.lstrip().startswith("<?xml")
    assert "</svg>" in svg
    assert out.read_text() == svg


@pytest.mark.parametrize("kind", PLOT_KINDS)
def test_output_is_byte_stable(kind):
    assert emit_plot(_table(), kind) == emit_plot(_table(), kind)


@pytest.mark.parametrize("kind", PLOT_KINDS)
def test_single_row_table(kind):
    assert "</svg>" in emit_plot(_table().head(1), kind)


def test_empty_table_is_rejected():
    with pytest.raises(PlotError):
        emit_plot(pd.DataFrame(columns=RESULT_COLUMNS), "cost_box")


def test_unknown_kind_and_missing_columns():
    with pytest.raises(PlotError):
        emit_plot(_table(), "pie_chart")
    with pytest.raises(PlotError):
        emit_plot(_table().drop(columns=["realized_cost"]), "cost_box")


def test_difficulty_plots_need_difficulty_levels():
    table = _table()
    table["difficulty"] = np.nan
    with pytest.raises(PlotError):
        emit_plot(table, "success_vs_difficulty")
    assert "</svg>" in emit_plot(table, "reward_success_bars")


def test_cost_box_needs_executed_trials():
    table = _table()
    table["planned"] = False
    with pytest.raises(PlotError):
        emit_plot(table, "cost_box")
