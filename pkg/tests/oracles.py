"""
Independent reference implementations used as test oracles.
"""

import itertools
import math

import numpy as np
from scipy.special import logsumexp


def truth_table_sat(num_vars, clauses):
    """Exhaustive enumeration; only for small num_vars."""
    if not clauses:
        return True
    table = np.array(list(itertools.product((False, True), repeat=num_vars)), dtype=bool).reshape(-1, num_vars)
    alive = np.ones(len(table), dtype=bool)
    for clause in clauses:
        hit = np.zeros(len(table), dtype=bool)
        for lit in clause:
            column = table[:, abs(lit) - 1]
            hit |= column if lit > 0 else ~column
        alive &= hit
    return bool(alive.any())


def dpll_sat(num_vars, clauses):
    """Plain recursive DPLL with unit propagation; no learning, no heuristics beyond first-unassigned."""
    clauses = [list(c) for c in clauses]

    def simplify(cls, lit):
        out = []
        for c in cls:
            if lit in c:
                continue
            if -lit in c:
                c = [x for x in c if x != -lit]
                if not c:
                    return None
            out.append(c)
        return out

    def search(cls):
        while True:
            if cls is None:
                return False
            if not cls:
                return True
            unit = next((c[0] for c in cls if len(c) == 1), None)
            if unit is None:
                break
            cls = simplify(cls, unit)
        lit = cls[0][0]
        return search(simplify(cls, lit)) or search(simplify(cls, -lit))

    return search(clauses)


def satisfies(clauses, literal_model):
    true = set(literal_model)
    return all(any(l in true for l in c) for c in clauses)


def wbe_log_estimate_batch(depths):
    """log(WBE) recomputed from the whole multiset of branch depths at once."""
    d = np.asarray(depths, dtype=np.float64)
    if d.size == 0:
        raise ValueError("no branches")
    log_num = logsumexp(math.log(2.0) + np.log1p(-np.exp2(-(d + 1))))
    log_den = logsumexp(-d * math.log(2.0))
    return float(log_num - log_den)
