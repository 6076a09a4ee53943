"""
CDCL SAT solver with a per-conflict event stream.

MiniSat-style core: two watched literals, first-UIP learning with local
minimization, non-chronological backjumping, VSIDS with phase saving and
seeded tie-breaking, geometric restarts, activity-based learnt clause
reduction. Observers receive one ConflictEvent per analyzed conflict.

Literals are encoded internally as 2*var + sign (sign 1 = negated).
"""

import csv
import enum
import logging
import math
from dataclasses import dataclass, fields
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from controllers.cnf import CnfFormula
from controllers.errors import SolverError

logger = logging.getLogger(__name__)

TRUE = 1
FALSE = -1
UNDEF = 0

# MiniSat defaults for the learnt clause database schedule.
LEARNTSIZE_FACTOR = 1 / 3
LEARNTSIZE_INC = 1.1
LEARNTSIZE_ADJUST_START = 100
LEARNTSIZE_ADJUST_INC = 1.5

VAR_RESCALE_LIMIT = 1e100
CLAUSE_RESCALE_LIMIT = 1e20


class SolverConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    restart_base: int = Field(default=100, ge=1, description="Conflicts in the first restart")
    restart_factor: float = Field(default=1.5, gt=1, description="Geometric restart factor")
    restarts_enabled: bool = Field(default=True)
    conflict_budget: int = Field(default=1_000_000, ge=1, description="Give up after this many conflicts")
    var_decay: float = Field(default=0.95, gt=0, lt=1)
    clause_decay: float = Field(default=0.999, gt=0, lt=1)
    seed: int = Field(default=91648253, ge=0, description="Branching tie-break seed")


class Verdict(str, enum.Enum):
    SAT = "SAT"
    UNSAT = "UNSAT"
    BUDGET_EXHAUSTED = "BUDGET_EXHAUSTED"


@dataclass(frozen=True, slots=True)
class ConflictEvent:
    conflict_index: int
    decision_level_at_conflict: int
    trail_size_at_conflict: int
    backjump_target_level: int
    trail_size_after_backjump: int
    learnt_clause_size: int
    conflict_clause_size: int
    current_num_clauses: int
    restart_index: int
    # live clause database composition (original + live learnt)
    num_binary_clauses: int = 0
    num_ternary_clauses: int = 0
    num_literals: int = 0

    @property
    def backjump_size(self) -> int:
        return self.decision_level_at_conflict - self.backjump_target_level


TRACE_COLUMNS = tuple(f.name for f in fields(ConflictEvent))


@dataclass(frozen=True)
class SolveResult:
    verdict: Verdict
    model: Optional[tuple[bool, ...]]
    total_conflicts: int
    restarts_used: int
    decisions: int = 0
    propagations: int = 0

    def literal_model(self) -> list[int]:
        """Model as signed DIMACS literals (SAT only)."""
        if self.model is None:
            return []
        return [v if value else -v for v, value in enumerate(self.model, start=1)]


class SolverObserver:
    """No-op observer; subclasses override the hooks they need."""

    def on_restart(self, restart_index: int, limit: int) -> None:
        pass

    def on_conflict(self, event: ConflictEvent) -> None:
        pass

    def on_finish(self, result: SolveResult) -> None:
        pass


def restart_schedule(config: SolverConfig, k: int) -> int:
    """Conflict limit of restart k (1-based): floor(base * factor^(k-1)), exact."""
    if k < 1:
        raise ValueError(f"restart index must be >= 1, got {k}")
    factor = Fraction(repr(config.restart_factor))
    return math.floor(Fraction(config.restart_base) * factor ** (k - 1))


def trail_depth(event: ConflictEvent) -> int:
    """Search depth read from the assignment stack."""
    return event.trail_size_at_conflict


def decision_level_depth(event: ConflictEvent) -> int:
    """Search depth in the corresponding binary tree (decisions on the branch)."""
    return event.decision_level_at_conflict


class _Clause:
    __slots__ = ("lits", "learnt", "activity", "removed")

    def __init__(self, lits: list[int], learnt: bool):
        self.lits = lits
        self.learnt = learnt
        self.activity = 0.0
        self.removed = False


class _VarOrder:
    """Indexed binary max-heap on (activity, -tiebreak)."""

    def __init__(self, activity: list[float], tiebreak: list[int]):
        self._activity = activity
        self._tiebreak = tiebreak
        self._heap: list[int] = []
        self._index = [-1] * len(activity)

    def _before(self, a: int, b: int) -> bool:
        act = self._activity
        if act[a] != act[b]:
            return act[a] > act[b]
        return self._tiebreak[a] < self._tiebreak[b]

    def __len__(self) -> int:
        return len(self._heap)

    def __contains__(self, v: int) -> bool:
        return self._index[v] >= 0

    def _up(self, i: int) -> None:
        heap, index = self._heap, self._index
        v = heap[i]
        while i > 0:
            parent = (i - 1) >> 1
            if not self._before(v, heap[parent]):
                break
            heap[i] = heap[parent]
            index[heap[i]] = i
            i = parent
        heap[i] = v
        index[v] = i

    def _down(self, i: int) -> None:
        heap, index = self._heap, self._index
        n = len(heap)
        v = heap[i]
        while True:
            child = 2 * i + 1
            if child >= n:
                break
            right = child + 1
            if right < n and self._before(heap[right], heap[child]):
                child = right
            if not self._before(heap[child], v):
                break
            heap[i] = heap[child]
            index[heap[i]] = i
            i = child
        heap[i] = v
        index[v] = i

    def push(self, v: int) -> None:
        if self._index[v] >= 0:
            return
        self._heap.append(v)
        self._index[v] = len(self._heap) - 1
        self._up(len(self._heap) - 1)

    def increased(self, v: int) -> None:
        i = self._index[v]
        if i >= 0:
            self._up(i)

    def pop(self) -> int:
        heap, index = self._heap, self._index
        top = heap[0]
        last = heap.pop()
        index[top] = -1
        if heap:
            heap[0] = last
            index[last] = 0
            self._down(0)
        return top


class CdclSolver:
    def __init__(self, formula: CnfFormula, config: SolverConfig,
                 observers: Sequence[SolverObserver] = ()):
        self.formula = formula
        self.config = config
        self.observers = list(observers)

        n = formula.num_vars
        self._num_vars = n
        self._values = [UNDEF] * (2 * n + 2)
        self._level = [0] * (n + 1)
        self._reason: list[Optional[_Clause]] = [None] * (n + 1)
        self._phase = [1] * (n + 1)  # saved sign bit, negative first
        self._seen = [False] * (n + 1)
        self._activity = [0.0] * (n + 1)
        self._watches: list[list[_Clause]] = [[] for _ in range(2 * n + 2)]
        self._trail: list[int] = []
        self._trail_lim: list[int] = []
        self._qhead = 0

        rng = np.random.Generator(np.random.PCG64(config.seed))
        tiebreak = [0] + [int(x) for x in rng.permutation(n)]
        self._order = _VarOrder(self._activity, tiebreak)
        for v in range(1, n + 1):
            self._order.push(v)

        self._var_inc = 1.0
        self._clause_inc = 1.0
        self._learnts: list[_Clause] = []

        self._conflicts = 0
        self._decisions = 0
        self._propagations = 0

        # Live clause DB composition: original clauses plus live learnt clauses.
        sizes = [len(c) for c in formula.clauses]
        self._live_clauses = len(sizes)
        self._live_binary = sizes.count(2)
        self._live_ternary = sizes.count(3)
        self._live_literals = sum(sizes)

        self._max_learnts = max(formula.num_clauses * LEARNTSIZE_FACTOR, 1.0)
        self._adjust_confl = float(LEARNTSIZE_ADJUST_START)
        self._adjust_cnt = LEARNTSIZE_ADJUST_START

        self._ok = not formula.trivially_unsat
        if self._ok:
            self._load_clauses()

    # ---------- clause database ----------

    def _load_clauses(self) -> None:
        units = []
        for clause in self.formula.clauses:
            lits = [2 * abs(x) + (1 if x < 0 else 0) for x in clause]
            if len(lits) == 1:
                units.append(lits[0])
                continue
            self._attach(_Clause(lits, learnt=False))
        for lit in units:
            value = self._values[lit]
            if value == FALSE:
                self._ok = False
                return
            if value == UNDEF:
                self._enqueue(lit, None)
        if self._propagate() is not None:
            self._ok = False

    def _attach(self, clause: _Clause) -> None:
        self._watches[clause.lits[0] ^ 1].append(clause)
        self._watches[clause.lits[1] ^ 1].append(clause)

    def _account(self, size: int, sign: int) -> None:
        self._live_clauses += sign
        self._live_literals += sign * size
        if size == 2:
            self._live_binary += sign
        elif size == 3:
            self._live_ternary += sign

    def _locked(self, clause: _Clause) -> bool:
        first = clause.lits[0]
        return self._values[first] == TRUE and self._reason[first >> 1] is clause

    def _reduce_db(self) -> None:
        learnts = self._learnts
        extra_lim = self._clause_inc / len(learnts)
        learnts.sort(key=lambda c: (len(c.lits) == 2, c.activity))
        half = len(learnts) // 2
        kept = []
        for i, clause in enumerate(learnts):
            if len(clause.lits) > 2 and not self._locked(clause) and (i < half or clause.activity < extra_lim):
                clause.removed = True
                self._account(len(clause.lits), -1)
            else:
                kept.append(clause)
        logger.debug("reduce_db: %d -> %d learnt clauses", len(learnts), len(kept))
        self._learnts = kept

    # ---------- assignment ----------

    def _enqueue(self, lit: int, reason: Optional[_Clause]) -> None:
        self._values[lit] = TRUE
        self._values[lit ^ 1] = FALSE
        v = lit >> 1
        self._level[v] = len(self._trail_lim)
        self._reason[v] = reason
        self._trail.append(lit)

    def _cancel_until(self, level: int) -> None:
        if len(self._trail_lim) <= level:
            return
        values, phase, order, reason = self._values, self._phase, self._order, self._reason
        stop = self._trail_lim[level]
        trail = self._trail
        for i in range(len(trail) - 1, stop - 1, -1):
            lit = trail[i]
            v = lit >> 1
            values[lit] = UNDEF
            values[lit ^ 1] = UNDEF
            reason[v] = None
            phase[v] = lit & 1
            order.push(v)
        del trail[stop:]
        del self._trail_lim[level:]
        self._qhead = stop

    def _propagate(self) -> Optional[_Clause]:
        values = self._values
        watches = self._watches
        trail = self._trail
        level = self._level
        reason = self._reason
        current_level = len(self._trail_lim)
        qhead = self._qhead
        conflict = None

        while qhead < len(trail):
            p = trail[qhead]
            qhead += 1
            self._propagations += 1
            false_lit = p ^ 1
            ws = watches[p]
            i = j = 0
            n = len(ws)
            while i < n:
                clause = ws[i]
                i += 1
                if clause.removed:
                    continue
                lits = clause.lits
                if lits[0] == false_lit:
                    lits[0] = lits[1]
                    lits[1] = false_lit
                first = lits[0]
                if values[first] == TRUE:
                    ws[j] = clause
                    j += 1
                    continue
                moved = False
                for k in range(2, len(lits)):
                    other = lits[k]
                    if values[other] != FALSE:
                        lits[1] = other
                        lits[k] = false_lit
                        watches[other ^ 1].append(clause)
                        moved = True
                        break
                if moved:
                    continue
                ws[j] = clause
                j += 1
                if values[first] == FALSE:
                    conflict = clause
                    while i < n:
                        ws[j] = ws[i]
                        j += 1
                        i += 1
                else:
                    values[first] = TRUE
                    values[first ^ 1] = FALSE
                    v = first >> 1
                    level[v] = current_level
                    reason[v] = clause
                    trail.append(first)
            del ws[j:]
            if conflict is not None:
                qhead = len(trail)
                break

        self._qhead = qhead
        return conflict

    # ---------- heuristics ----------

    def _bump_var(self, v: int) -> None:
        activity = self._activity
        activity[v] += self._var_inc
        if activity[v] > VAR_RESCALE_LIMIT:
            for i in range(len(activity)):
                activity[i] *= 1e-100
            self._var_inc *= 1e-100
        self._order.increased(v)

    def _bump_clause(self, clause: _Clause) -> None:
        clause.activity += self._clause_inc
        if clause.activity > CLAUSE_RESCALE_LIMIT:
            for learnt in self._learnts:
                learnt.activity *= 1e-20
            self._clause_inc *= 1e-20

    def _pick_branch(self) -> Optional[int]:
        order, values = self._order, self._values
        while len(order):
            v = order.pop()
            if values[2 * v] == UNDEF:
                return 2 * v + self._phase[v]
        return None

    # ---------- conflict analysis ----------

    def _analyze(self, conflict: _Clause) -> tuple[list[int], int]:
        seen, level, reason, trail = self._seen, self._level, self._reason, self._trail
        current_level = len(self._trail_lim)
        learnt = [-1]
        path = 0
        p = -1
        index = len(trail) - 1
        clause = conflict

        while True:
            if clause.learnt:
                self._bump_clause(clause)
            lits = clause.lits
            for q in (lits if p == -1 else lits[1:]):
                v = q >> 1
                if not seen[v] and level[v] > 0:
                    self._bump_var(v)
                    seen[v] = True
                    if level[v] >= current_level:
                        path += 1
                    else:
                        learnt.append(q)
            while not seen[trail[index] >> 1]:
                index -= 1
            p = trail[index]
            index -= 1
            clause = reason[p >> 1]
            seen[p >> 1] = False
            path -= 1
            if path <= 0:
                break
        learnt[0] = p ^ 1

        # local minimization: drop literals implied by other learnt literals
        to_clear = learnt[1:]
        kept = [learnt[0]]
        for q in learnt[1:]:
            r = reason[q >> 1]
            if r is None:
                kept.append(q)
                continue
            for other in r.lits[1:]:
                ov = other >> 1
                if not seen[ov] and level[ov] > 0:
                    kept.append(q)
                    break
        for q in to_clear:
            seen[q >> 1] = False

        if len(kept) == 1:
            return kept, 0
        max_i = 1
        for i in range(2, len(kept)):
            if level[kept[i] >> 1] > level[kept[max_i] >> 1]:
                max_i = i
        kept[1], kept[max_i] = kept[max_i], kept[1]
        return kept, level[kept[1] >> 1]

    # ---------- search ----------

    def _notify_conflict(self, event: ConflictEvent) -> None:
        for observer in self.observers:
            observer.on_conflict(event)

    def _search(self, limit: int, restart_index: int) -> Optional[Verdict]:
        conflicts_here = 0
        budget = self.config.conflict_budget
        while True:
            conflict = self._propagate()
            if conflict is not None:
                decision_level = len(self._trail_lim)
                if decision_level == 0:
                    return Verdict.UNSAT
                self._conflicts += 1
                conflicts_here += 1
                trail_at_conflict = len(self._trail)

                learnt, backjump_level = self._analyze(conflict)
                self._cancel_until(backjump_level)
                trail_after = len(self._trail)

                if len(learnt) == 1:
                    self._enqueue(learnt[0], None)
                else:
                    clause = _Clause(learnt, learnt=True)
                    self._attach(clause)
                    self._learnts.append(clause)
                    self._account(len(learnt), +1)
                    self._bump_clause(clause)
                    self._enqueue(learnt[0], clause)

                self._var_inc /= self.config.var_decay
                self._clause_inc /= self.config.clause_decay

                self._adjust_cnt -= 1
                if self._adjust_cnt == 0:
                    self._adjust_confl *= LEARNTSIZE_ADJUST_INC
                    self._adjust_cnt = int(self._adjust_confl)
                    self._max_learnts *= LEARNTSIZE_INC

                self._notify_conflict(ConflictEvent(
                    conflict_index=self._conflicts,
                    decision_level_at_conflict=decision_level,
                    trail_size_at_conflict=trail_at_conflict,
                    backjump_target_level=backjump_level,
                    trail_size_after_backjump=trail_after,
                    learnt_clause_size=len(learnt),
                    conflict_clause_size=len(conflict.lits),
                    current_num_clauses=self._live_clauses,
                    restart_index=restart_index,
                    num_binary_clauses=self._live_binary,
                    num_ternary_clauses=self._live_ternary,
                    num_literals=self._live_literals,
                ))

                if self._conflicts >= budget:
                    return Verdict.BUDGET_EXHAUSTED
                if conflicts_here >= limit:
                    return None
                continue

            if len(self._learnts) - len(self._trail) >= self._max_learnts:
                self._reduce_db()

            lit = self._pick_branch()
            if lit is None:
                return Verdict.SAT
            self._decisions += 1
            self._trail_lim.append(len(self._trail))
            self._enqueue(lit, None)

    def _extract_model(self) -> tuple[bool, ...]:
        values = self._values
        model = tuple(values[2 * v] == TRUE for v in range(1, self._num_vars + 1))
        for clause in self.formula.clauses:
            if not any(model[abs(x) - 1] == (x > 0) for x in clause):
                raise SolverError(f"model falsifies clause {clause}")
        return model

    def solve(self) -> SolveResult:
        restart_index = 0
        verdict: Optional[Verdict] = None if self._ok else Verdict.UNSAT
        while verdict is None:
            restart_index += 1
            if self.config.restarts_enabled:
                limit = restart_schedule(self.config, restart_index)
            else:
                limit = self.config.conflict_budget
            for observer in self.observers:
                observer.on_restart(restart_index, limit)
            logger.debug("restart %d: limit %d, conflicts so far %d",
                         restart_index, limit, self._conflicts)
            verdict = self._search(limit, restart_index)
            if verdict is None:
                self._cancel_until(0)

        model = self._extract_model() if verdict is Verdict.SAT else None
        result = SolveResult(
            verdict=verdict,
            model=model,
            total_conflicts=self._conflicts,
            restarts_used=max(restart_index - 1, 0),
            decisions=self._decisions,
            propagations=self._propagations,
        )
        for observer in self.observers:
            observer.on_finish(result)
        return result


def solve(formula: CnfFormula, config: SolverConfig,
          observers: Sequence[SolverObserver] = ()) -> SolveResult:
    return CdclSolver(formula, config, observers).solve()


class EventTraceWriter(SolverObserver):
    """Writes one CSV row per ConflictEvent, columns in TRACE_COLUMNS order."""

    def __init__(self, stream):
        self._writer = csv.writer(stream, lineterminator="\n")
        self._writer.writerow(TRACE_COLUMNS)

    def on_conflict(self, event: ConflictEvent) -> None:
        self._writer.writerow([getattr(event, name) for name in TRACE_COLUMNS])
