"""
Stochastic block BFGS with SVRG gradients.

Outer loop k: μ = ∇f(w_k), x_0 = w_k. Inner loop t = 0..m−1:
  sample S_t, T_t independently
  g_t = ∇f_S(x_t) − ∇f_S(x_0) + μ
  form D_t, Y_t = ∇²f_T(x_t)·D_t, refresh the metric
  x_{t+1} = x_t − η·H_t·g_t
then w_{k+1} = x_m (last iterate) or x_i for uniform i ∈ [m] (random iterate).

The metric persists across outer iterations and starts at H = I. With the
identity sketch kind the metric is never touched and the loop is plain SVRG.

Datapass accounting: μ costs one pass; every inner step costs (|S| + |T|)/n, the
same for every sketch kind and for plain SVRG, so one outer iteration always
costs 1 + m(|S| + |T|)/n. The q directional products share the T rows and count
once. A run with a pass budget never starts an outer iteration it cannot finish
within the budget.
"""

import logging
import time
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from blockbfgs.config import (
    BUDGET_SLACK,
    DEFAULT_MEMORY,
    DENSE_MAX_DIM,
    GAUSSIAN_REDRAWS,
    SELF_CONDITIONING_RESAMPLES,
)
from blockbfgs.dataset import IndexSample, make_streams, sample_indices
from blockbfgs.errors import ConfigError, NonFiniteIterate, RankDeficient, ZeroDirection
from blockbfgs.metric import BlockTriple, CurvatureBuffer, dense_update, make_triple, two_loop_apply
from blockbfgs.objective import Objective
from blockbfgs.sketch import (
    DirectionWindow,
    SketchKind,
    SketchStrategy,
    gaussian_sketch,
    self_conditioning_sketch,
)

logger = logging.getLogger(__name__)


class MetricMode(str, Enum):
    DENSE = "dense"
    LIMITED_MEMORY = "limited"
    FACTORED = "factored"


class UpdateOption(str, Enum):
    USE_DENSE = "dense"          # explicit block BFGS update of H
    USE_TWO_LOOP = "two-loop"    # implicit H from the stored triples


class OuterOption(str, Enum):
    LAST_ITERATE = "last"
    RANDOM_ITERATE = "random"


@dataclass(frozen=True)
class OptimizerConfig:
    eta: float
    m: int
    s_size: int
    t_size: int
    strategy: SketchStrategy
    memory: int = DEFAULT_MEMORY
    metric_mode: MetricMode = MetricMode.LIMITED_MEMORY
    update_option: UpdateOption | None = None     # None: follow metric_mode
    outer_option: OuterOption = OuterOption.LAST_ITERATE
    max_outer: int = 1
    seed: int = 0
    max_passes: float | None = None                # never start an outer iteration that would pass this

    @property
    def effective_update(self) -> UpdateOption:
        if self.update_option is not None:
            return self.update_option
        if self.metric_mode is MetricMode.DENSE:
            return UpdateOption.USE_DENSE
        return UpdateOption.USE_TWO_LOOP

    def validate(self, n: int, d: int) -> None:
        if not (self.eta >= 0.0 and np.isfinite(self.eta)):
            raise ConfigError(f"eta must be a finite number >= 0, got {self.eta}")
        if self.m < 1:
            raise ConfigError(f"inner loop length m must be >= 1, got {self.m}")
        if not 1 <= self.s_size <= n:
            raise ConfigError(f"s_size {self.s_size} outside [1, {n}]")
        if not 1 <= self.t_size <= n:
            raise ConfigError(f"t_size {self.t_size} outside [1, {n}]")
        if self.memory < 0:
            raise ConfigError(f"memory must be >= 0, got {self.memory}")
        if self.max_outer < 0:
            raise ConfigError(f"max_outer must be >= 0, got {self.max_outer}")
        try:
            self.strategy.validate(d)
        except ValueError as e:
            raise ConfigError(str(e)) from e

        if not self.strategy.uses_metric:
            return
        if self.metric_mode is MetricMode.DENSE and d > DENSE_MAX_DIM:
            raise ConfigError(f"dense metric refused for d={d} > {DENSE_MAX_DIM}")
        fact = self.strategy.kind is SketchKind.SELF_CONDITIONING
        if fact != (self.metric_mode is MetricMode.FACTORED):
            raise ConfigError("the self-conditioning sketch and the factored metric go together")
        dense_update_wanted = self.effective_update is UpdateOption.USE_DENSE
        if dense_update_wanted != (self.metric_mode is MetricMode.DENSE):
            raise ConfigError(
                f"update option {self.effective_update.value} does not fit metric mode {self.metric_mode.value}"
            )


def apply_preset(config: OptimizerConfig, option: str) -> OptimizerConfig:
    """
    option-i:  explicit update + last iterate
    option-ii: two-loop update + random iterate
    The self-conditioning sketch always keeps its factored metric.
    """
    fact = config.strategy.kind is SketchKind.SELF_CONDITIONING
    if option in ("i", "option-i"):
        mode = MetricMode.FACTORED if fact else MetricMode.DENSE
        return replace(config, metric_mode=mode, update_option=None, outer_option=OuterOption.LAST_ITERATE)
    if option in ("ii", "option-ii"):
        mode = MetricMode.FACTORED if fact else MetricMode.LIMITED_MEMORY
        return replace(config, metric_mode=mode, update_option=None, outer_option=OuterOption.RANDOM_ITERATE)
    raise ConfigError(f"unknown option preset {option!r}; expected 'i' or 'ii'")


@dataclass
class IterateState:
    w: np.ndarray                       # outer iterate w_k
    mu: np.ndarray                      # ∇f(w_k)
    x: np.ndarray                       # inner iterate x_t
    streams: dict[str, np.random.Generator]
    buffer: CurvatureBuffer
    H: np.ndarray | None = None         # dense mode only
    window: DirectionWindow | None = None
    pending_sketch: np.ndarray | None = None   # prev mode: block emitted at the last step
    t: int = 0
    k: int = 0
    datapasses: float = 0.0
    skipped_updates: int = 0

    @property
    def x0(self) -> np.ndarray:
        return self.w


@dataclass(frozen=True)
class TraceRecord:
    datapasses: float
    seconds: float
    fvalue: float


@dataclass
class RunTrace:
    records: list[TraceRecord] = field(default_factory=list)
    diverged: bool = False
    skipped_updates: int = 0
    w: np.ndarray | None = None

    def append(self, datapasses: float, seconds: float, fvalue: float) -> None:
        self.records.append(TraceRecord(datapasses, seconds, fvalue))

    @property
    def fvalues(self) -> np.ndarray:
        return np.array([r.fvalue for r in self.records])

    @property
    def datapasses(self) -> np.ndarray:
        return np.array([r.datapasses for r in self.records])

    def final_fvalue(self) -> float:
        return self.records[-1].fvalue


# ── gradient ──────────────────────────────────────────────────────────────────

def vr_gradient(model: Objective, x, x0, mu, S: IndexSample) -> np.ndarray:
    """∇f_S(x) − ∇f_S(x0) + μ, an unbiased estimate of ∇f(x)."""
    return model.subsampled_gradient(x, S) - model.subsampled_gradient(x0, S) + mu


# ── metric refresh (one per inner step) ─────────────────────────────────────────

def _gaussian_triple(model, state, config, T) -> BlockTriple | None:
    q = config.strategy.size
    for attempt in range(1 + GAUSSIAN_REDRAWS):
        D = gaussian_sketch(state.streams["sketch"], model.d, q)
        Y = model.hessian_action(state.x, T, D)
        try:
            return make_triple(D, Y)
        except RankDeficient:
            logger.debug("gaussian sketch rank deficient, redraw %d", attempt + 1)
    return None


def _prev_triple(model, state, T) -> BlockTriple | None:
    D = state.pending_sketch
    state.pending_sketch = None
    Y = model.hessian_action(state.x, T, D)
    while D.shape[1] > 0:
        try:
            return make_triple(D, Y)
        except RankDeficient:
            # Y = ∇²f_T·D is linear in the columns, so dropping a column of D
            # drops the same column of Y.
            D, Y = D[:, 1:], Y[:, 1:]
            logger.debug("direction block rank deficient, retrying with %d columns", D.shape[1])
    return None


def _fact_triple(model, state, config, T) -> BlockTriple | None:
    q = config.strategy.size
    for attempt in range(1 + SELF_CONDITIONING_RESAMPLES):
        C, D = self_conditioning_sketch(state.streams["sketch"], state.buffer, model.d, q)
        Y = model.hessian_action(state.x, T, D)
        try:
            return make_triple(D, Y, C)
        except RankDeficient:
            logger.debug("self-conditioning sketch rank deficient, resample %d", attempt + 1)
    return None


def _refresh_metric(model, state: IterateState, config: OptimizerConfig, T: IndexSample) -> None:
    """Build this step's triple and fold it into the metric."""
    kind = config.strategy.kind
    if kind is SketchKind.GAUSSIAN:
        triple = _gaussian_triple(model, state, config, T)
    elif kind is SketchKind.PREV_DIRECTIONS:
        if state.pending_sketch is None:
            return                       # between emissions: keep the current metric
        triple = _prev_triple(model, state, T)
    else:
        triple = _fact_triple(model, state, config, T)

    if triple is None:
        state.skipped_updates += 1
        logger.warning("rank repair exhausted at k=%d t=%d; metric left unchanged", state.k, state.t)
        return

    if config.metric_mode is MetricMode.DENSE:
        state.H = dense_update(state.H, triple)
    else:
        state.buffer.push(triple)


def _direction(state: IterateState, config: OptimizerConfig, g: np.ndarray) -> np.ndarray:
    if not config.strategy.uses_metric:
        return -g
    if config.effective_update is UpdateOption.USE_DENSE:
        return -(state.H @ g)
    return -two_loop_apply(state.buffer, g)


# ── accounting ────────────────────────────────────────────────────────────────

def step_cost(n: int, config: OptimizerConfig) -> float:
    """Passes charged for one inner step."""
    return (config.s_size + config.t_size) / n


def outer_cost(n: int, config: OptimizerConfig) -> float:
    """Passes charged for one outer iteration: the full gradient plus m inner steps."""
    return 1.0 + config.m * step_cost(n, config)


# ── inner step ────────────────────────────────────────────────────────────────

def inner_step(model: Objective, state: IterateState, config: OptimizerConfig) -> IterateState:
    """One inner iteration; mutates and returns `state`."""
    S = sample_indices(state.streams["s_sample"], model.n, config.s_size)
    T = sample_indices(state.streams["t_sample"], model.n, config.t_size)
    g = vr_gradient(model, state.x, state.x0, state.mu, S)

    if config.strategy.uses_metric:
        _refresh_metric(model, state, config, T)
    d_t = _direction(state, config, g)
    x_next = state.x + config.eta * d_t
    if not np.all(np.isfinite(x_next)):
        raise NonFiniteIterate(f"non-finite iterate at k={state.k} t={state.t}")
    state.x = x_next

    if state.window is not None:
        try:
            state.pending_sketch = state.window.push(d_t)
        except ZeroDirection:
            logger.debug("zero search direction not stored")

    state.datapasses += step_cost(model.n, config)
    state.t += 1
    return state


# ── driver ────────────────────────────────────────────────────────────────────

def _initial_state(model: Objective, config: OptimizerConfig, w0) -> IterateState:
    d = model.d
    w = np.zeros(d) if w0 is None else np.array(w0, dtype=np.float64)
    kind = config.strategy.kind
    return IterateState(
        w=w,
        mu=np.zeros(d),
        x=w.copy(),
        streams=make_streams(config.seed),
        buffer=CurvatureBuffer(d, config.memory, factored=config.metric_mode is MetricMode.FACTORED),
        H=np.eye(d) if config.strategy.uses_metric and config.metric_mode is MetricMode.DENSE else None,
        window=DirectionWindow(config.strategy.size) if kind is SketchKind.PREV_DIRECTIONS else None,
    )


def run(model: Objective, config: OptimizerConfig, w0=None) -> RunTrace:
    """
    Run K = config.max_outer outer iterations, fewer when the next one would take
    the pass count past config.max_passes.
    A non-finite iterate or objective value ends the run with `diverged` set and
    the trace recorded so far.
    """
    config.validate(model.n, model.d)
    state = _initial_state(model, config, w0)
    trace = RunTrace()
    start = time.perf_counter()
    trace.append(0.0, time.perf_counter() - start, model.value(state.w))
    logger.info("run: strategy=%s eta=%g m=%d K=%d seed=%d",
                config.strategy.kind.value, config.eta, config.m, config.max_outer, config.seed)

    try:
        per_outer = outer_cost(model.n, config)
        for k in range(config.max_outer):
            budget = config.max_passes
            if budget is not None and state.datapasses + per_outer > budget + BUDGET_SLACK:
                break
            state.k = k
            state.mu = model.full_gradient(state.w)
            state.datapasses += 1.0
            state.x = state.w.copy()
            state.t = 0
            pick = None
            if config.outer_option is OuterOption.RANDOM_ITERATE:
                pick = int(state.streams["pick"].integers(1, config.m + 1))
            chosen = None

            for _ in range(config.m):
                inner_step(model, state, config)
                if state.t == pick:
                    chosen = state.x.copy()

            state.w = state.x if chosen is None else chosen
            fvalue = model.value(state.w)
            if not np.isfinite(fvalue):
                raise NonFiniteIterate(f"objective not finite after outer iteration {k + 1}")
            trace.append(state.datapasses, time.perf_counter() - start, fvalue)
            logger.info("k=%d passes=%.2f f=%.12g", k + 1, state.datapasses, fvalue)
    except NonFiniteIterate as e:
        logger.warning("run diverged (eta=%g): %s", config.eta, e)
        trace.diverged = True

    trace.skipped_updates = state.skipped_updates
    trace.w = state.w
    return trace


def svrg_baseline(model: Objective, config: OptimizerConfig, w0=None) -> RunTrace:
    """`run` with the identity metric: plain SVRG under the same accounting."""
    plain = replace(
        config,
        strategy=SketchStrategy(SketchKind.IDENTITY),
        metric_mode=MetricMode.LIMITED_MEMORY,
        update_option=None,
    )
    return run(model, plain, w0)
