"""
DIMACS CNF parsing/serialization and the uniform random 3-SAT generator.

Formulas are immutable; clauses are tuples of signed variable indices.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from controllers.errors import DimacsError

logger = logging.getLogger(__name__)

# Identity stamped into generated files so an ensemble can be regenerated.
RNG_NAME = "numpy.random.PCG64"
GENERATOR_NAME = "uniform-fixed-width"


@dataclass(frozen=True)
class CnfFormula:
    num_vars: int
    clauses: tuple[tuple[int, ...], ...]
    trivially_unsat: bool = False
    comments: tuple[str, ...] = field(default=(), compare=False)

    @property
    def num_clauses(self) -> int:
        return len(self.clauses)


@dataclass(frozen=True)
class FormulaStats:
    """Static statistics of the original instance (the init feature column)."""
    num_vars: int
    num_clauses: int
    frac_binary: float
    frac_ternary: float
    avg_clause_size: float

    @property
    def cls_per_var(self) -> float:
        return self.num_clauses / self.num_vars if self.num_vars else 0.0

    @property
    def var_per_cls(self) -> float:
        return self.num_vars / self.num_clauses if self.num_clauses else 0.0


class GeneratorSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    num_vars: int = Field(..., ge=3, description="Number of variables")
    ratio: float = Field(..., gt=0, description="Clauses per variable")
    seed: int = Field(..., ge=0, lt=2 ** 64, description="64-bit generator seed")
    clause_width: int = Field(default=3, ge=3, le=3)

    @property
    def num_clauses(self) -> int:
        # round half up
        return int(math.floor(self.ratio * self.num_vars + 0.5))


def _canonical_clause(literals: list[int]) -> Optional[tuple[int, ...]]:
    """Drop duplicate literals (first occurrence wins); None for a tautology."""
    seen = set()
    kept = []
    for lit in literals:
        if -lit in seen:
            return None
        if lit not in seen:
            seen.add(lit)
            kept.append(lit)
    return tuple(kept)


def parse_dimacs(text) -> CnfFormula:
    """
    Parse DIMACS CNF from a string or any iterable of lines.

    Clauses may span lines; a '%' line ends the clause section (SATLIB style).
    """
    lines: Iterable[str] = text.splitlines() if isinstance(text, str) else text

    num_vars = None
    declared_clauses = 0
    clauses = []
    comments = []
    pending: list[int] = []
    trivially_unsat = False
    tautologies = 0

    for line_no, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("c"):
            comments.append(line[1:].strip())
            continue
        if line.startswith("%"):
            break
        if line.startswith("p"):
            parts = line.split()
            if num_vars is not None:
                raise DimacsError(f"line {line_no}: duplicate problem line")
            if len(parts) != 4 or parts[1] != "cnf":
                raise DimacsError(f"line {line_no}: malformed header: {line!r}")
            try:
                num_vars = int(parts[2])
                declared_clauses = int(parts[3])
            except ValueError:
                raise DimacsError(f"line {line_no}: malformed header: {line!r}") from None
            if num_vars < 0 or declared_clauses < 0:
                raise DimacsError(f"line {line_no}: negative counts in header")
            continue
        if num_vars is None:
            raise DimacsError(f"line {line_no}: clause before problem line")

        for token in line.split():
            try:
                lit = int(token)
            except ValueError:
                raise DimacsError(f"line {line_no}: bad literal {token!r}") from None
            if lit == 0:
                if not pending:
                    trivially_unsat = True
                    continue
                clause = _canonical_clause(pending)
                pending = []
                if clause is None:
                    tautologies += 1
                    continue
                clauses.append(clause)
            elif abs(lit) > num_vars:
                raise DimacsError(f"line {line_no}: literal {lit} out of range 1..{num_vars}")
            else:
                pending.append(lit)

    if num_vars is None:
        raise DimacsError("missing problem line")
    if pending:
        raise DimacsError("unterminated final clause")

    if tautologies:
        logger.warning("dropped %d tautological clause(s)", tautologies)
    parsed = len(clauses) + tautologies + (1 if trivially_unsat else 0)
    if parsed != declared_clauses:
        logger.warning("header declares %d clauses, found %d", declared_clauses, parsed)
    if trivially_unsat:
        logger.warning("formula contains an empty clause (trivially UNSAT)")

    return CnfFormula(
        num_vars=num_vars,
        clauses=tuple(clauses),
        trivially_unsat=trivially_unsat,
        comments=tuple(comments),
    )


def serialize_dimacs(formula: CnfFormula) -> str:
    out = [f"c {comment}" if comment else "c" for comment in formula.comments]
    empty = 1 if formula.trivially_unsat else 0
    out.append(f"p cnf {formula.num_vars} {formula.num_clauses + empty}")
    for clause in formula.clauses:
        out.append(" ".join(str(lit) for lit in clause) + " 0")
    if formula.trivially_unsat:
        out.append("0")
    return "\n".join(out) + "\n"


def read_dimacs(path: str) -> CnfFormula:
    with open(path, "r", encoding="utf-8") as f:
        return parse_dimacs(f)


def write_dimacs(path: str, formula: CnfFormula) -> str:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(serialize_dimacs(formula))
    return path


def formula_stats(formula: CnfFormula) -> FormulaStats:
    sizes = [len(clause) for clause in formula.clauses]
    n = len(sizes)
    if n == 0:
        return FormulaStats(formula.num_vars, 0, 0.0, 0.0, 0.0)
    return FormulaStats(
        num_vars=formula.num_vars,
        num_clauses=n,
        frac_binary=sizes.count(2) / n,
        frac_ternary=sizes.count(3) / n,
        avg_clause_size=sum(sizes) / n,
    )


def generate_random_3sat(spec: GeneratorSpec) -> CnfFormula:
    """
    Fixed-clause-length random model: each clause picks 3 distinct variables
    uniformly without replacement and negates each with probability 1/2.
    Duplicate clauses are allowed.
    """
    rng = np.random.Generator(np.random.PCG64(spec.seed))
    clauses = []
    for _ in range(spec.num_clauses):
        variables = rng.choice(spec.num_vars, size=spec.clause_width, replace=False) + 1
        signs = rng.random(spec.clause_width) < 0.5
        clauses.append(tuple(int(-v if neg else v) for v, neg in zip(variables, signs)))

    comments = (
        f"generator: {GENERATOR_NAME} width={spec.clause_width}",
        f"spec: num_vars={spec.num_vars} ratio={spec.ratio!r} seed={spec.seed}",
        f"rng: {RNG_NAME} numpy={np.__version__}",
    )
    return CnfFormula(num_vars=spec.num_vars, clauses=tuple(clauses), comments=comments)
