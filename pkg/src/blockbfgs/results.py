"""
Result persistence: per-method CSV traces, the best-stepsize summary and an optional plot script.

An experiment's output directory holds:
  {out}/
    <method>.csv     ← one row per recorded outer iteration of every (eta, seed) run
    summary.csv      ← per method, the stepsize with the smallest final error
    plot_traces.py   ← optional matplotlib script reading the CSVs (never run here)

The per-method CSV is the source of truth: `select_best` works from rows alone,
so the summary can be rebuilt from the CSVs at any time. A run never
starts an outer iteration its budget cannot cover, and every outer iteration
costs the same, so a diverged run is recognizable in the CSV: one more outer
iteration after its last row would still have fit.
"""

import csv
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path

from blockbfgs.config import BUDGET_SLACK, CSV_FLOAT_FORMAT, CSV_HEADER

SUMMARY_HEADER = ("method", "eta", "mean_final_error", "final_datapasses", "runs")


@dataclass(frozen=True)
class ResultRow:
    method: str
    eta: float
    seed: int
    datapasses: float
    seconds: float
    fvalue: float
    error: float


def _fmt(x: float) -> str:
    return CSV_FLOAT_FORMAT.format(x)


def method_csv_path(out_dir: Path, method: str) -> Path:
    return Path(out_dir) / f"{method}.csv"


def summary_path(out_dir: Path) -> Path:
    return Path(out_dir) / "summary.csv"


def plot_script_path(out_dir: Path) -> Path:
    return Path(out_dir) / "plot_traces.py"


def write_rows(path: Path, rows: list[ResultRow]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER)
        for r in rows:
            writer.writerow([r.method, _fmt(r.eta), r.seed, _fmt(r.datapasses),
                             _fmt(r.seconds), _fmt(r.fvalue), _fmt(r.error)])
    return path


def read_rows(path: Path) -> list[ResultRow]:
    """Parse a per-method CSV back into ResultRows. Raises ValueError on a bad header."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = tuple(next(reader, ()))
        if header != CSV_HEADER:
            raise ValueError(f"{path}: unexpected header {header}")
        return [
            ResultRow(method=m, eta=float(eta), seed=int(seed), datapasses=float(dp),
                      seconds=float(sec), fvalue=float(fv), error=float(err))
            for m, eta, seed, dp, sec, fv, err in reader
        ]


@dataclass(frozen=True)
class BestStep:
    method: str
    eta: float
    mean_final_error: float
    final_datapasses: float
    runs: int


def _completed(run_rows: list[ResultRow], passes: float) -> bool:
    # Every outer iteration costs the same number of passes, so a run used its
    # budget exactly when one more outer iteration would have overrun it.
    if len(run_rows) < 2:
        return False
    per_outer = run_rows[1].datapasses - run_rows[0].datapasses
    return run_rows[-1].datapasses + per_outer > passes + BUDGET_SLACK


def select_best(rows: list[ResultRow], passes: float) -> dict[str, BestStep]:
    """
    For each method, the eta whose runs all used the pass budget, with the
    smallest mean final error over seeds. A run that stopped before its budget
    allowed (diverged) makes its eta ineligible.
    """
    runs: dict[tuple[str, float, int], list[ResultRow]] = defaultdict(list)
    for r in rows:
        runs[(r.method, r.eta, r.seed)].append(r)

    by_step: dict[tuple[str, float], list[list[ResultRow]]] = defaultdict(list)
    for (method, eta, _), run_rows in runs.items():
        by_step[(method, eta)].append(sorted(run_rows, key=lambda r: r.datapasses))

    best: dict[str, BestStep] = {}
    for (method, eta), step_runs in sorted(by_step.items()):
        if not all(_completed(rr, passes) for rr in step_runs):
            continue
        finals = [rr[-1] for rr in step_runs]
        mean_err = sum(r.error for r in finals) / len(finals)
        cand = BestStep(method, eta, mean_err, max(r.datapasses for r in finals), len(finals))
        if method not in best or mean_err < best[method].mean_final_error:
            best[method] = cand
    return best


def write_summary(path: Path, best: dict[str, BestStep]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(SUMMARY_HEADER)
        for b in best.values():
            writer.writerow([b.method, _fmt(b.eta), _fmt(b.mean_final_error), _fmt(b.final_datapasses), b.runs])
    return path


_PLOT_TEMPLATE = '''\
"""Error vs datapasses and error vs time for the best stepsize of each method."""
import csv

import matplotlib.pyplot as plt

BEST = {best!r}
FILES = {files!r}

fig, (ax_pass, ax_time) = plt.subplots(1, 2, figsize=(11, 4))
for method, path in FILES.items():
    if method not in BEST:
        continue
    with open(path, newline="") as fh:
        rows = [r for r in csv.DictReader(fh) if float(r["eta"]) == BEST[method]]
    seed = rows[0]["seed"] if rows else None
    rows = [r for r in rows if r["seed"] == seed]
    err = [max(float(r["error"]), 1e-16) for r in rows]
    ax_pass.semilogy([float(r["datapasses"]) for r in rows], err, label=method)
    ax_time.semilogy([float(r["seconds"]) for r in rows], err, label=method)
ax_pass.set_xlabel("datapasses")
ax_time.set_xlabel("time (s)")
for ax in (ax_pass, ax_time):
    ax.set_ylabel("f(w) - f*")
    ax.legend()
fig.tight_layout()
fig.savefig("traces.pdf")
'''


def write_plot_script(path: Path, best: dict[str, BestStep], files: dict[str, Path]) -> Path:
    """Emit (not run) a matplotlib script that plots the best-eta trace of each method."""
    path = Path(path)
    text = _PLOT_TEMPLATE.format(
        best={m: b.eta for m, b in best.items()},
        files={m: Path(p).name for m, p in files.items()},
    )
    path.write_text(text, encoding="utf-8")
    return path
