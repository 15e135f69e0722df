"""CSV persistence, best-stepsize selection, and the emitted plot script."""

import pytest

from blockbfgs.config import CSV_HEADER
from blockbfgs.results import (
    ResultRow,
    read_rows,
    select_best,
    write_plot_script,
    write_rows,
    write_summary,
)


def _row(method="gauss_2_5", eta=0.1, seed=0, passes=0.0, f=1.0, err=0.5):
    return ResultRow(method, eta, seed, passes, 0.01, f, err)


def test_rows_read_back_exactly(tmp_path):
    rows = [_row(eta=1e-7, passes=1.0 / 3.0, f=0.1 + 0.2, err=2.0 ** -40),
            _row(seed=3, passes=30.000000000000004, err=0.0)]
    path = write_rows(tmp_path / "m.csv", rows)
    assert path.read_text().splitlines()[0] == ",".join(CSV_HEADER)
    assert read_rows(path) == rows


def test_read_rejects_foreign_header(tmp_path):
    path = tmp_path / "x.csv"
    path.write_text("a,b,c\n1,2,3\n")
    with pytest.raises(ValueError):
        read_rows(path)


def _run(method="gauss_2_5", eta=0.1, seed=0, outers=3, per_outer=9.6, final_err=1e-6):
    """Rows of one run: the start plus `outers` equally priced outer iterations."""
    rows = [_row(method, eta, seed, passes=k * per_outer, err=1.0) for k in range(outers)]
    rows.append(_row(method, eta, seed, passes=outers * per_outer, err=final_err))
    return rows


def test_select_best_takes_smallest_final_error():
    rows = (_run(eta=0.1, final_err=1e-6) + _run(eta=0.5, final_err=1e-9)
            + _run("svrg", eta=0.5, outers=4, per_outer=7.5, final_err=1e-3))
    best = select_best(rows, 30)
    assert best["gauss_2_5"].eta == 0.5
    assert best["gauss_2_5"].mean_final_error == 1e-9
    assert best["gauss_2_5"].final_datapasses == pytest.approx(28.8)
    assert best["svrg"].eta == 0.5


def test_select_best_skips_runs_that_stopped_early():
    rows = _run(eta=1.0, outers=1, final_err=0.0) + _run(eta=0.1, final_err=1e-4)   # eta 1.0 diverged
    assert select_best(rows, 30)["gauss_2_5"].eta == 0.1


def test_select_best_accepts_a_budget_filled_exactly():
    rows = _run(outers=3, per_outer=10.0)
    assert select_best(rows, 30)["gauss_2_5"].final_datapasses == 30.0


def test_select_best_ignores_row_order():
    rows = _run(eta=0.1, final_err=1e-4) + _run(eta=0.5, outers=2, final_err=0.0)
    assert select_best(list(reversed(rows)), 30)["gauss_2_5"].eta == 0.1


def test_select_best_averages_over_seeds():
    rows = (_run(eta=0.1, seed=0, final_err=1e-4) + _run(eta=0.1, seed=1, final_err=3e-4)
            + _run(eta=0.2, seed=0, final_err=1e-6) + _run(eta=0.2, seed=1, outers=1, final_err=0.0))
    best = select_best(rows, 30)["gauss_2_5"]
    assert best.eta == 0.1
    assert best.mean_final_error == pytest.approx(2e-4)
    assert best.runs == 2


def test_select_best_with_everything_diverged():
    assert select_best(_run(outers=2) + _run(eta=0.5, outers=0), 30) == {}


def test_summary_and_plot_script(tmp_path):
    best = select_best(_run(outers=3, per_outer=10.0, final_err=1e-8), 30)
    summary = write_summary(tmp_path / "summary.csv", best)
    lines = summary.read_text().splitlines()
    assert lines[0] == "method,eta,mean_final_error,final_datapasses,runs"
    assert lines[1].startswith("gauss_2_5,0.10000000000000001,")
    script = write_plot_script(tmp_path / "plot_traces.py", best, {"gauss_2_5": tmp_path / "gauss_2_5.csv"})
    text = script.read_text()
    compile(text, str(script), "exec")
    assert "gauss_2_5.csv" in text and "matplotlib" in text
