"""Exact SAT decision: a deterministic DPLL solver plus a brute-force
enumerator that serves as its test oracle.

Both return complete models (unassigned variables default to 0) so results
are directly usable as supervised labels.
"""

from __future__ import annotations

from dataclasses import dataclass

from .cnf import Clause, CnfFormula

CONFLICT = object()


class OracleError(Exception):
    pass


@dataclass(frozen=True)
class SolveResult:
    sat: bool
    model: dict[int, int] | None = None

    def __bool__(self) -> bool:
        return self.sat


UNSAT = SolveResult(False)


def unit_propagate(
    clauses: list[Clause], assignment: dict[int, int]
) -> tuple[list[Clause], dict[int, int]] | object:
    """Run unit propagation to fixpoint. Returns (remaining clauses,
    extended assignment) or CONFLICT if an empty clause is derived."""
    assignment = dict(assignment)
    clauses = list(clauses)
    while True:
        remaining: list[Clause] = []
        unit = None
        for clause in clauses:
            unassigned = []
            satisfied = False
            for lit in clause:
                val = assignment.get(abs(lit))
                if val is None:
                    unassigned.append(lit)
                elif val == (1 if lit > 0 else 0):
                    satisfied = True
                    break
            if satisfied:
                continue
            if not unassigned:
                return CONFLICT
            if len(unassigned) == 1 and unit is None:
                unit = unassigned[0]
            remaining.append(clause)
        if unit is None:
            return remaining, assignment
        assignment[abs(unit)] = 1 if unit > 0 else 0
        clauses = remaining


class _DpllState:
    """Counter-based DPLL search state (Crawford-style): per-clause counts
    of satisfied and unassigned literals, per-literal counts of active
    (unsatisfied) clauses for pure-literal detection, and an assignment
    trail for exact undo on backtracking. Iterative, so deep Tseitin
    formulas do not hit the recursion limit."""

    def __init__(self, formula: CnfFormula):
        self.clauses = [list(c) for c in formula.clauses]
        self.num_vars = n = formula.num_vars
        self.pos_occ: list[list[int]] = [[] for _ in range(n + 1)]
        self.neg_occ: list[list[int]] = [[] for _ in range(n + 1)]
        for ci, clause in enumerate(self.clauses):
            for lit in clause:
                (self.pos_occ if lit > 0 else self.neg_occ)[abs(lit)].append(ci)
        self.sat_count = [0] * len(self.clauses)
        self.open_count = [len(c) for c in self.clauses]
        self.n_unsat = len(self.clauses)
        self.value: list[int | None] = [None] * (n + 1)
        self.trail: list[int] = []
        self.pos_active = [len(self.pos_occ[v]) for v in range(n + 1)]
        self.neg_active = [len(self.neg_occ[v]) for v in range(n + 1)]
        self.pure_candidates = [
            v
            for v in range(1, n + 1)
            if self.pos_active[v] == 0 or self.neg_active[v] == 0
        ]

    def occ(self, lit: int) -> list[int]:
        return self.pos_occ[lit] if lit > 0 else self.neg_occ[-lit]

    def assign(self, var: int, val: int, unit_queue: list[int]) -> bool:
        """Apply one assignment; returns True on conflict. Counter updates
        always run to completion so undo stays exact."""
        self.value[var] = val
        self.trail.append(var)
        sat_lit = var if val else -var
        conflict = False
        for ci in self.occ(sat_lit):
            self.sat_count[ci] += 1
            if self.sat_count[ci] == 1:
                self.n_unsat -= 1
                for lit in self.clauses[ci]:
                    v = abs(lit)
                    if lit > 0:
                        self.pos_active[v] -= 1
                        if self.pos_active[v] == 0:
                            self.pure_candidates.append(v)
                    else:
                        self.neg_active[v] -= 1
                        if self.neg_active[v] == 0:
                            self.pure_candidates.append(v)
        for ci in self.occ(-sat_lit):
            self.open_count[ci] -= 1
            if self.sat_count[ci] == 0:
                if self.open_count[ci] == 0:
                    conflict = True
                elif self.open_count[ci] == 1:
                    unit_queue.append(ci)
        return conflict

    def undo_to(self, mark: int) -> None:
        while len(self.trail) > mark:
            var = self.trail.pop()
            val = self.value[var]
            self.value[var] = None
            sat_lit = var if val else -var
            for ci in self.occ(sat_lit):
                self.sat_count[ci] -= 1
                if self.sat_count[ci] == 0:
                    self.n_unsat += 1
                    for lit in self.clauses[ci]:
                        v = abs(lit)
                        if lit > 0:
                            self.pos_active[v] += 1
                        else:
                            self.neg_active[v] += 1
            for ci in self.occ(-sat_lit):
                self.open_count[ci] += 1

    def propagate(self, unit_queue: list[int]) -> bool:
        """Unit propagation to fixpoint; returns False on conflict."""
        while unit_queue:
            ci = unit_queue.pop()
            if self.sat_count[ci] > 0 or self.open_count[ci] != 1:
                continue
            lit = next(l for l in self.clauses[ci] if self.value[abs(l)] is None)
            if self.assign(abs(lit), 1 if lit > 0 else 0, unit_queue):
                return False
        return True

    def assign_pures(self) -> None:
        # A pure assignment only satisfies clauses, so it cannot conflict
        # or create units; it may cascade into new pure candidates.
        sink: list[int] = []
        while self.pure_candidates:
            v = self.pure_candidates.pop()
            if self.value[v] is not None:
                continue
            if self.pos_active[v] > 0 and self.neg_active[v] == 0:
                self.assign(v, 1, sink)
            elif self.neg_active[v] > 0 and self.pos_active[v] == 0:
                self.assign(v, 0, sink)

    def try_value(self, var: int, val: int) -> bool:
        queue: list[int] = []
        if self.assign(var, val, queue):
            return False
        if not self.propagate(queue):
            return False
        self.assign_pures()
        return True

    def pick_branch_variable(self) -> int:
        return next(
            v
            for v in range(1, self.num_vars + 1)
            if self.value[v] is None
            and (self.pos_active[v] > 0 or self.neg_active[v] > 0)
        )

    def model(self) -> dict[int, int]:
        return {
            v: self.value[v] if self.value[v] is not None else 0
            for v in range(1, self.num_vars + 1)
        }


def dpll_solve(formula: CnfFormula) -> SolveResult:
    """DPLL with unit propagation and pure-literal elimination.
    Deterministic: branches on the lowest unassigned variable, value 1
    first, so the returned model is a stable labeling target. Variables
    untouched after simplification default to 0 in the model."""
    state = _DpllState(formula)
    queue = [ci for ci, c in enumerate(state.clauses) if len(c) == 1]
    if not state.propagate(queue):
        return UNSAT
    state.assign_pures()
    stack: list[list] = []  # [var, trail mark, tried value 0]
    while True:
        if state.n_unsat == 0:
            return SolveResult(True, state.model())
        var = state.pick_branch_variable()
        stack.append([var, len(state.trail), False])
        ok = state.try_value(var, 1)
        while not ok:
            if not stack:
                return UNSAT
            var, mark, tried_zero = stack[-1]
            state.undo_to(mark)
            if tried_zero:
                stack.pop()
                continue
            stack[-1][2] = True
            ok = state.try_value(var, 0)


def brute_force_solve(formula: CnfFormula, var_limit: int = 16) -> SolveResult:
    """Exhaustive enumeration in ascending binary order of the assignment
    word (x1 x2 ... xn), x1 most significant; returns the first satisfying
    assignment."""
    n = formula.num_vars
    if n > var_limit:
        raise OracleError(f"{n} variables exceeds enumeration limit {var_limit}")
    for idx in range(1 << n):
        assignment = {v: (idx >> (n - v)) & 1 for v in range(1, n + 1)}
        if all(
            any(assignment[abs(lit)] == (1 if lit > 0 else 0) for lit in clause)
            for clause in formula.clauses
        ):
            return SolveResult(True, assignment)
    return UNSAT
