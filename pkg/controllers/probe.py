"""
Search probe: observation windows over the conflict stream and the
incremental Weighted Backtrack Estimator (WBE).

WBE over the multiset D of branch lengths:
    sum_d prob(d) * (2^(d+1) - 1) / sum_d prob(d),  prob(d) = 2^-d
kept as two natural-log accumulators so depths in the millions never overflow.
prob(d) * (2^(d+1) - 1) simplifies to 2 - 2^-d.
"""

import enum
import logging
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Literal, Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from controllers.cnf import CnfFormula, FormulaStats, formula_stats
from controllers.errors import EmptyBranchSetError, WindowNotClosedError
from controllers.settings import stable_fingerprint
from controllers.solver import (
    ConflictEvent,
    SolveResult,
    SolverConfig,
    SolverObserver,
    restart_schedule,
)

logger = logging.getLogger(__name__)

LN2 = math.log(2.0)
WBE_VARIANT = "wbe_plain"


# ============== WEIGHTED BACKTRACK ESTIMATOR ==============

@dataclass(frozen=True, slots=True)
class WbeState:
    log_numerator: float = -math.inf
    log_denominator: float = -math.inf
    branch_count: int = 0


def _log_numerator_term(d: int) -> float:
    # ln(2 - 2^-d)
    return LN2 + math.log1p(-math.ldexp(1.0, -(d + 1)))


def wbe_record_branch(state: WbeState, d: int) -> WbeState:
    if d < 0:
        raise ValueError(f"branch length must be >= 0, got {d}")
    return WbeState(
        log_numerator=float(np.logaddexp(state.log_numerator, _log_numerator_term(d))),
        log_denominator=float(np.logaddexp(state.log_denominator, -d * LN2)),
        branch_count=state.branch_count + 1,
    )


def wbe_estimate(state: WbeState) -> tuple[float, float]:
    """(estimate, natural log of estimate); estimate is inf when it exceeds float range."""
    if state.branch_count == 0:
        raise EmptyBranchSetError("WBE queried with no recorded branches")
    log_estimate = state.log_numerator - state.log_denominator
    try:
        return math.exp(log_estimate), log_estimate
    except OverflowError:
        return math.inf, log_estimate


# ============== WINDOW POLICY ==============

class WindowMode(str, enum.Enum):
    NO_RESTARTS = "no_restarts"
    WITH_RESTARTS = "with_restarts"


class WindowPolicy(BaseModel):
    model_config = ConfigDict(frozen=True)

    mode: WindowMode = WindowMode.NO_RESTARTS
    fixed_wait: int = Field(default=500, ge=0, description="Conflicts before the window (no-restart mode)")
    fixed_size: int = Field(default=1000, ge=1, description="Window length in conflicts (no-restart mode)")
    wait_floor: int = Field(default=500, ge=0)
    wait_frac: float = Field(default=0.02, gt=0)
    size_floor: int = Field(default=1000, ge=1)
    size_frac: float = Field(default=0.01, gt=0)

    @model_validator(mode="after")
    def _check_fractions(self):
        # otherwise no restart, however long, admits a window
        if self.wait_frac + self.size_frac > 1:
            raise ValueError("wait_frac + size_frac must not exceed 1")
        return self


@dataclass(frozen=True)
class WindowPlan:
    wait: int
    size: int


NOT_THIS_RESTART = None


def window_schedule(policy: WindowPolicy, restart_limit: int) -> Optional[WindowPlan]:
    """
    Restart mode: wait = max(wait_floor, wait_frac*s), size = max(size_floor, size_frac*s),
    or NOT_THIS_RESTART when wait + size does not fit in the restart.
    No-restart mode: the fixed (wait, size).
    """
    if policy.mode is WindowMode.NO_RESTARTS:
        return WindowPlan(policy.fixed_wait, policy.fixed_size)
    if restart_limit < 1:
        raise ValueError(f"restart limit must be >= 1, got {restart_limit}")
    wait = max(policy.wait_floor, math.floor(Fraction(repr(policy.wait_frac)) * restart_limit))
    size = max(policy.size_floor, math.floor(Fraction(repr(policy.size_frac)) * restart_limit))
    if wait + size > restart_limit:
        return NOT_THIS_RESTART
    return WindowPlan(wait, size)


class ProbeConfig(BaseModel):
    """Everything that shapes a feature vector; part of every dataset fingerprint."""
    model_config = ConfigDict(frozen=True)

    policy: WindowPolicy = WindowPolicy()
    query_points: tuple[int, ...] = Field(default=(), description="No-restart query points (backtracks)")
    wbe_variant: Literal["wbe_plain"] = WBE_VARIANT

    @model_validator(mode="after")
    def _check_points(self):
        if self.query_points and self.policy.mode is not WindowMode.NO_RESTARTS:
            raise ValueError("query points apply to no-restart mode only")
        minimum = self.policy.fixed_wait + self.policy.fixed_size
        for point in self.query_points:
            if point < minimum:
                raise ValueError(f"query point {point} is below wait+size ({minimum})")
        if len(set(self.query_points)) != len(self.query_points):
            raise ValueError("duplicate query points")
        return self

    def window_keys(self) -> tuple[int, ...]:
        """No-restart window keys: the query points, or wait+size when none are given."""
        if self.query_points:
            return tuple(sorted(self.query_points))
        return (self.policy.fixed_wait + self.policy.fixed_size,)


def probe_fingerprint(solver_config: SolverConfig, probe_config: ProbeConfig) -> str:
    return stable_fingerprint(solver_config.model_copy(update={"conflict_budget": 1}), probe_config)


def window_close(solver_config: SolverConfig, probe_config: ProbeConfig, key: int) -> int:
    """
    Conflict index at which the window with this key closes: the query point
    itself in no-restart mode, the key-th admitting restart's window otherwise.
    """
    policy = probe_config.policy
    if policy.mode is WindowMode.NO_RESTARTS:
        if key not in probe_config.window_keys():
            raise ValueError(f"no window at query point {key}")
        return key
    if not solver_config.restarts_enabled:
        raise ValueError("restart-mode windows need a solver with restarts enabled")
    if key < 1:
        raise ValueError(f"window ordinal must be >= 1, got {key}")
    before = 0
    seen = 0
    k = 1
    while True:
        limit = restart_schedule(solver_config, k)
        plan = window_schedule(policy, limit)
        if plan is not NOT_THIS_RESTART:
            seen += 1
            if seen == key:
                return before + plan.wait + plan.size
        before += limit
        k += 1


def first_window_close(solver_config: SolverConfig, probe_config: ProbeConfig) -> int:
    """Conflict index at which the first observation window closes."""
    if probe_config.policy.mode is WindowMode.NO_RESTARTS:
        return probe_config.window_keys()[0]
    return window_close(solver_config, probe_config, 1)


# ============== STREAMING STATISTICS ==============

class RunningStats:
    """Welford single-pass mean/variance with min, max and last; O(1) memory."""

    __slots__ = ("count", "mean", "m2", "min", "max", "last")

    def __init__(self):
        self.count = 0
        self.mean = 0.0
        self.m2 = 0.0
        self.min = math.inf
        self.max = -math.inf
        self.last = math.nan

    def push(self, value: float) -> None:
        self.count += 1
        delta = value - self.mean
        self.mean += delta / self.count
        self.m2 += delta * (value - self.mean)
        if value < self.min:
            self.min = value
        if value > self.max:
            self.max = value
        self.last = value

    @property
    def sd(self) -> float:
        # population convention (divide by n)
        if self.count == 0:
            return 0.0
        return math.sqrt(max(self.m2, 0.0) / self.count)


@dataclass(frozen=True)
class SeriesSummary:
    min: float
    max: float
    mean: float
    sd: float
    last: float
    count: int


# Window series, in feature order.
SERIES_NAMES = (
    "cls_per_var",
    "var_per_cls",
    "frac_binary",
    "frac_ternary",
    "avg_clause_size",
    "trail_depth",
    "decision_depth",
    "backjump_size",
    "learnt_size",
    "conflict_size",
    "abb",
    "aab",
    "aab_over_abb",
    "abb_over_aab",
    "log_wbe",
)


@dataclass(frozen=True)
class WindowSnapshot:
    key: int
    restart_index: int
    window_index: int
    start_conflict: int
    close_conflict: int
    event_count: int
    series: dict[str, SeriesSummary]
    initial: FormulaStats
    flags: tuple[str, ...] = ()
    wbe_variant: str = WBE_VARIANT


class ObservationWindow:
    """Collects window series for conflicts start_conflict .. start_conflict+size-1."""

    def __init__(self, key: int, start_conflict: int, size: int, restart_index: int,
                 window_index: int, initial: FormulaStats):
        self.key = key
        self.start_conflict = start_conflict
        self.size = size
        self.restart_index = restart_index
        self.window_index = window_index
        self.initial = initial
        self.event_count = 0
        self.close_conflict = 0
        self.series = {name: RunningStats() for name in SERIES_NAMES}
        self.flags: set[str] = set()
        self._abb_sum = 0.0
        self._aab_sum = 0.0

    @property
    def closed(self) -> bool:
        return self.event_count >= self.size

    def _ratio(self, numerator: float, denominator: float, flag: str) -> float:
        if denominator == 0:
            self.flags.add(f"zero_division:{flag}")
            return 0.0
        return numerator / denominator

    def feed(self, event: ConflictEvent, log_wbe: float) -> int:
        """Record one event; returns the number of primitive series updates made."""
        num_vars = self.initial.num_vars
        clauses = event.current_num_clauses
        s = self.series
        abb = self._ratio(event.trail_size_at_conflict, num_vars, "abb")
        aab = self._ratio(event.trail_size_after_backjump, num_vars, "aab")
        self.event_count += 1
        self._abb_sum += abb
        self._aab_sum += aab
        # running means share the event count, so their ratio is the ratio of sums
        s["cls_per_var"].push(self._ratio(clauses, num_vars, "cls_per_var"))
        s["var_per_cls"].push(self._ratio(num_vars, clauses, "var_per_cls"))
        s["frac_binary"].push(self._ratio(event.num_binary_clauses, clauses, "frac_binary"))
        s["frac_ternary"].push(self._ratio(event.num_ternary_clauses, clauses, "frac_ternary"))
        s["avg_clause_size"].push(self._ratio(event.num_literals, clauses, "avg_clause_size"))
        s["trail_depth"].push(event.trail_size_at_conflict)
        s["decision_depth"].push(event.decision_level_at_conflict)
        s["backjump_size"].push(event.backjump_size)
        s["learnt_size"].push(event.learnt_clause_size)
        s["conflict_size"].push(event.conflict_clause_size)
        s["abb"].push(abb)
        s["aab"].push(aab)
        s["aab_over_abb"].push(self._ratio(self._aab_sum, self._abb_sum, "aab_over_abb"))
        s["abb_over_aab"].push(self._ratio(self._abb_sum, self._aab_sum, "abb_over_aab"))
        s["log_wbe"].push(log_wbe)
        if self.closed:
            self.close_conflict = event.conflict_index
        return len(SERIES_NAMES)


def window_snapshot(window: ObservationWindow) -> WindowSnapshot:
    if not window.closed:
        raise WindowNotClosedError(
            f"window {window.key} has {window.event_count} of {window.size} events")
    return WindowSnapshot(
        key=window.key,
        restart_index=window.restart_index,
        window_index=window.window_index,
        start_conflict=window.start_conflict,
        close_conflict=window.close_conflict,
        event_count=window.event_count,
        series={
            # min <= mean <= max must hold under rounding
            name: SeriesSummary(st.min, st.max, min(max(st.mean, st.min), st.max), st.sd, st.last, st.count)
            for name, st in window.series.items()
        },
        initial=window.initial,
        flags=tuple(sorted(window.flags)),
    )


# ============== PROBE OBSERVER ==============

class SearchProbe(SolverObserver):
    """
    Observer bound to one solver run. Closed windows become snapshots:
    keyed by query point in no-restart mode, by window ordinal in restart mode.
    """

    def __init__(self, formula: CnfFormula, config: ProbeConfig):
        self.config = config
        self.initial = formula_stats(formula)
        self.snapshots: list[WindowSnapshot] = []
        self.operation_count = 0
        self._wbe = WbeState()
        self._last_conflict = 0
        self._open: list[ObservationWindow] = []
        self._pending: list[ObservationWindow] = []
        self._window_count = 0

        if config.policy.mode is WindowMode.NO_RESTARTS:
            size = config.policy.fixed_size
            for key in config.window_keys():
                self._window_count += 1
                self._pending.append(ObservationWindow(
                    key=key, start_conflict=key - size + 1, size=size, restart_index=1,
                    window_index=self._window_count, initial=self.initial))

    def on_restart(self, restart_index: int, limit: int) -> None:
        if self.config.policy.mode is not WindowMode.WITH_RESTARTS:
            return
        # each restart grows a fresh search tree
        self._wbe = WbeState()
        self._open.clear()
        plan = window_schedule(self.config.policy, limit)
        if plan is NOT_THIS_RESTART:
            return
        self._window_count += 1
        self._pending = [ObservationWindow(
            key=self._window_count,
            start_conflict=self._last_conflict + plan.wait + 1,
            size=plan.size,
            restart_index=restart_index,
            window_index=self._window_count,
            initial=self.initial,
        )]

    def on_conflict(self, event: ConflictEvent) -> None:
        self._last_conflict = event.conflict_index
        self._wbe = wbe_record_branch(self._wbe, event.decision_level_at_conflict)
        self.operation_count += 1

        while self._pending and self._pending[0].start_conflict <= event.conflict_index:
            self._open.append(self._pending.pop(0))
        if not self._open:
            return

        log_wbe = self._wbe.log_numerator - self._wbe.log_denominator
        still_open = []
        for window in self._open:
            self.operation_count += window.feed(event, log_wbe)
            if window.closed:
                self.snapshots.append(window_snapshot(window))
            else:
                still_open.append(window)
        self._open = still_open

    def on_finish(self, result: SolveResult) -> None:
        if self._open or self._pending:
            logger.debug("run ended with %d unfinished window(s)", len(self._open) + len(self._pending))
        self._open = []
        self._pending = []

    def snapshot_for(self, key: int) -> Optional[WindowSnapshot]:
        for snapshot in self.snapshots:
            if snapshot.key == key:
                return snapshot
        return None
