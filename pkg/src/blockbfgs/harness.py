"""
Experiment protocol: stepsize sweeps over several methods, the empirical
optimum, and the CSV traces that come out of it.

A method label names the sketch and its parameters:

  svrg          plain SVRG (identity metric)
  gauss_q_M     Gaussian sketch of width q, memory M
  prev_L_M      last L search directions, memory M
  fact_q_M      self-conditioning sketch of width q, memory M

A bare `gauss`, `prev` or `fact` takes q, L and M from the experiment (or
their dimension-based defaults). Every (method, eta, seed) triple is one run
under the same pass budget and, unless an option preset is named, uses the
limited-memory metric (factored for `fact`) with the last inner iterate as the
next outer iterate. f* is the smallest objective value any run
recorded (a diverged run counts up to its abort), and each recorded value is
reported as its gap to f*.
"""

import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import jsonschema

from blockbfgs.config import DEFAULT_MEMORY, DEFAULT_OUT_DIR, DEFAULT_PASSES, METHODS, STEPSIZE_GRID_DECADES
from blockbfgs.dataset import add_bias, load_libsvm
from blockbfgs.errors import AllRunsDiverged, ConfigError
from blockbfgs.objective import LogisticModel, Objective
from blockbfgs.optimizer import (
    MetricMode,
    OptimizerConfig,
    RunTrace,
    apply_preset,
    outer_cost,
    run,
    svrg_baseline,
)
from blockbfgs.results import (
    BestStep,
    ResultRow,
    method_csv_path,
    plot_script_path,
    select_best,
    summary_path,
    write_plot_script,
    write_rows,
    write_summary,
)
from blockbfgs.sketch import SketchKind, SketchStrategy, default_L, default_q

logger = logging.getLogger(__name__)

_SCHEMAS_DIR = Path(__file__).parent / "schemas"

_KINDS = {
    "gauss": SketchKind.GAUSSIAN,
    "prev": SketchKind.PREV_DIRECTIONS,
    "fact": SketchKind.SELF_CONDITIONING,
}


def default_grid() -> list[float]:
    """1, 5e-1, 1e-1, 5e-2, ..., 1e-7, 5e-8, 1e-8."""
    grid = []
    for k in range(STEPSIZE_GRID_DECADES):
        grid += [float(f"1e-{k}"), float(f"5e-{k + 1}")]
    grid.append(float(f"1e-{STEPSIZE_GRID_DECADES}"))
    return grid


# ── methods ───────────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class MethodSpec:
    kind: str                         # one of METHODS
    size: int | None = None           # q for gauss/fact, L for prev
    memory: int | None = None

    @property
    def label(self) -> str:
        if self.kind == "svrg":
            return "svrg"
        return f"{self.kind}_{self.size}_{self.memory}"

    def resolved(self, d: int, *, q: int | None, L: int | None, memory: int | None) -> "MethodSpec":
        if self.kind == "svrg":
            return self
        size = self.size
        if size is None:
            size = (L or default_L(d)) if self.kind == "prev" else (q or default_q(d))
        mem = self.memory if self.memory is not None else (memory if memory is not None else DEFAULT_MEMORY)
        return MethodSpec(self.kind, size, mem)


def parse_method(label: str) -> MethodSpec:
    """'gauss_4_3' → MethodSpec('gauss', 4, 3); 'prev' → MethodSpec('prev')."""
    parts = label.strip().split("_")
    kind = parts[0]
    if kind not in METHODS:
        raise ConfigError(f"unknown method {label!r}; expected one of {', '.join(METHODS)}")
    if kind == "svrg":
        if len(parts) != 1:
            raise ConfigError(f"svrg takes no parameters, got {label!r}")
        return MethodSpec("svrg")
    if len(parts) == 1:
        return MethodSpec(kind)
    if len(parts) != 3:
        raise ConfigError(f"method {label!r} must look like {kind}_SIZE_MEMORY")
    try:
        size, memory = int(parts[1]), int(parts[2])
    except ValueError:
        raise ConfigError(f"method {label!r}: size and memory must be integers") from None
    if size < 1 or memory < 0:
        raise ConfigError(f"method {label!r}: need size >= 1 and memory >= 0")
    return MethodSpec(kind, size, memory)


# ── experiment spec ───────────────────────────────────────────────────────────

@dataclass(frozen=True)
class ExperimentSpec:
    data_path: Path | None
    methods: tuple[MethodSpec, ...]
    grid: tuple[float, ...] = field(default_factory=lambda: tuple(default_grid()))
    passes: float = DEFAULT_PASSES
    seeds: tuple[int, ...] = (0,)
    out_dir: Path = Path(DEFAULT_OUT_DIR)
    q: int | None = None
    L: int | None = None
    memory: int | None = None
    s_size: int | None = None
    t_size: int | None = None
    reg: float | None = None
    bias: bool = True
    option: str | None = None         # None: two-loop (factored for fact) + last iterate
    emit_plot_script: bool = False
    workers: int = 1
    n_features: int | None = None

    def validate(self) -> None:
        if not self.methods:
            raise ConfigError("no methods given")
        if not self.grid:
            raise ConfigError("stepsize grid is empty")
        if any(not (math.isfinite(eta) and eta >= 0.0) for eta in self.grid):
            raise ConfigError(f"stepsizes must be finite and >= 0, got {list(self.grid)}")
        if not self.passes > 0:
            raise ConfigError(f"passes budget must be > 0, got {self.passes}")
        if not self.seeds:
            raise ConfigError("no seeds given")
        if self.option not in (None, "i", "ii"):
            raise ConfigError(f"option must be 'i' or 'ii', got {self.option!r}")
        if self.workers < 1:
            raise ConfigError(f"workers must be >= 1, got {self.workers}")
        for name in ("q", "L", "memory", "s_size", "t_size", "n_features"):
            value = getattr(self, name)
            if value is not None and value < (0 if name == "memory" else 1):
                raise ConfigError(f"{name} out of range: {value}")
        if self.reg is not None and not self.reg > 0:
            raise ConfigError(f"reg must be > 0, got {self.reg}")


def load_config_file(path) -> dict:
    """Read an experiment config (JSON) and validate it against schemas/experiment.json."""
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: not valid JSON ({e})") from e
    schema = json.loads((_SCHEMAS_DIR / "experiment.json").read_text())
    try:
        jsonschema.validate(data, schema)
    except jsonschema.ValidationError as e:
        raise ConfigError(f"{path}: {e.message}") from e
    return data


def spec_from_mapping(values: dict) -> ExperimentSpec:
    """Build an ExperimentSpec from config-file keys (flag names, dashes as underscores)."""
    v = {k.replace("-", "_"): val for k, val in values.items() if val is not None}
    methods = v.get("methods", ["svrg", "gauss", "prev", "fact"])
    if isinstance(methods, str):
        methods = methods.split(",")
    spec = ExperimentSpec(
        data_path=Path(v["data"]) if "data" in v else None,
        methods=tuple(parse_method(m) for m in methods),
        grid=tuple(float(x) for x in v.get("grid", default_grid())),
        passes=float(v.get("passes", DEFAULT_PASSES)),
        seeds=tuple(int(s) for s in v.get("seeds", [0])),
        out_dir=Path(v.get("out", DEFAULT_OUT_DIR)),
        q=v.get("q"),
        L=v.get("L"),
        memory=v.get("memory"),
        s_size=v.get("s_size"),
        t_size=v.get("t_size"),
        reg=v.get("reg"),
        bias=bool(v.get("bias", True)),
        option=v.get("option"),
        emit_plot_script=bool(v.get("emit_plot_script", False)),
        workers=int(v.get("workers", 1)),
        n_features=v.get("n_features"),
    )
    spec.validate()
    return spec


# ── runs ──────────────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class RunOutcome:
    method: str
    eta: float
    seed: int
    trace: RunTrace


def build_config(model: Objective, spec: ExperimentSpec, method: MethodSpec, eta: float, seed: int) -> OptimizerConfig:
    """Per-run optimizer settings: |S| = |T| = ceil(sqrt(n)), m = n // |S|, stop at the pass budget."""
    n = model.n
    s_size = spec.s_size or math.ceil(math.sqrt(n))
    t_size = spec.t_size or math.ceil(math.sqrt(n))
    if method.kind == "svrg":
        strategy, memory = SketchStrategy(SketchKind.IDENTITY), 0
    else:
        strategy, memory = SketchStrategy(_KINDS[method.kind], method.size), method.memory
    config = OptimizerConfig(
        eta=eta,
        m=max(1, n // s_size),
        s_size=min(s_size, n),
        t_size=min(t_size, n),
        strategy=strategy,
        memory=memory,
        metric_mode=MetricMode.FACTORED if method.kind == "fact" else MetricMode.LIMITED_MEMORY,
        max_outer=math.ceil(spec.passes),      # every outer iteration costs at least one pass
        seed=seed,
        max_passes=spec.passes,
    )
    return config if spec.option is None else apply_preset(config, spec.option)


def _run_one(model: Objective, spec: ExperimentSpec, method: MethodSpec, eta: float, seed: int) -> RunOutcome:
    config = build_config(model, spec, method, eta, seed)
    trace = svrg_baseline(model, config) if method.kind == "svrg" else run(model, config)
    return RunOutcome(method.label, eta, seed, trace)


def sweep(model: Objective, spec: ExperimentSpec) -> list[RunOutcome]:
    """Every (method, eta, seed) run, in that nesting order, optionally on a thread pool."""
    spec.validate()
    methods = [m.resolved(model.d, q=spec.q, L=spec.L, memory=spec.memory) for m in spec.methods]
    jobs = [(m, eta, seed) for m in methods for eta in spec.grid for seed in spec.seeds]
    for m in methods:
        per_outer = outer_cost(model.n, build_config(model, spec, m, spec.grid[0], spec.seeds[0]))
        if per_outer > spec.passes:
            logger.warning("%s: one outer iteration costs %.2f passes, more than the budget of %g",
                           m.label, per_outer, spec.passes)
    logger.info("sweep: %d runs (%d methods x %d stepsizes x %d seeds)",
                len(jobs), len(methods), len(spec.grid), len(spec.seeds))
    if spec.workers == 1:
        return [_run_one(model, spec, m, eta, seed) for m, eta, seed in jobs]
    with ThreadPoolExecutor(max_workers=spec.workers) as pool:
        return list(pool.map(lambda job: _run_one(model, spec, *job), jobs))


def optimum_from(outcomes: list[RunOutcome]) -> float:
    # Recorded values are always finite; a diverged run contributes the part of
    # its trace before the abort, so no reported error is negative.
    if all(o.trace.diverged for o in outcomes):
        raise AllRunsDiverged(f"all {len(outcomes)} runs diverged")
    return min(r.fvalue for o in outcomes for r in o.trace.records)


def estimate_optimum(model: Objective, spec: ExperimentSpec) -> float:
    """f*: the smallest objective value recorded by any run within the budget."""
    return optimum_from(sweep(model, spec))


def rows_for(outcome: RunOutcome, f_star: float) -> list[ResultRow]:
    return [
        ResultRow(method=outcome.method, eta=outcome.eta, seed=outcome.seed, datapasses=r.datapasses,
                  seconds=r.seconds, fvalue=r.fvalue, error=r.fvalue - f_star)
        for r in outcome.trace.records
    ]


# ── experiment ────────────────────────────────────────────────────────────────

@dataclass
class ExperimentReport:
    f_star: float
    best: dict[str, BestStep]
    csv_paths: dict[str, Path]
    summary_path: Path
    plot_path: Path | None = None
    diverged: int = 0


def load_model(spec: ExperimentSpec) -> LogisticModel:
    if spec.data_path is None:
        raise ConfigError("no data file given")
    data = load_libsvm(spec.data_path, n_features=spec.n_features)
    if spec.bias:
        data = add_bias(data)
    logger.info("loaded %s: n=%d d=%d", spec.data_path, data.n, data.d)
    return LogisticModel(data, reg=spec.reg)


def run_experiment(spec: ExperimentSpec, model: Objective | None = None) -> ExperimentReport:
    """
    Run the sweep, write one CSV per method plus summary.csv (and the plot
    script when asked). `model` overrides loading spec.data_path.
    """
    spec.validate()
    if model is None:
        model = load_model(spec)
    outcomes = sweep(model, spec)
    f_star = optimum_from(outcomes)

    by_method: dict[str, list[ResultRow]] = {}
    for o in outcomes:
        by_method.setdefault(o.method, []).extend(rows_for(o, f_star))

    csv_paths = {label: write_rows(method_csv_path(spec.out_dir, label), rows) for label, rows in by_method.items()}
    best = select_best([r for rows in by_method.values() for r in rows], spec.passes)
    report = ExperimentReport(
        f_star=f_star,
        best=best,
        csv_paths=csv_paths,
        summary_path=write_summary(summary_path(spec.out_dir), best),
        diverged=sum(o.trace.diverged for o in outcomes),
    )
    if spec.emit_plot_script:
        report.plot_path = write_plot_script(plot_script_path(spec.out_dir), best, csv_paths)
    logger.info("experiment done: f*=%.17g, %d diverged runs", f_star, report.diverged)
    return report
