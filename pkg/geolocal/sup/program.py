"""
Geolocal - program
Small dense linear programs: feasibility search, verification and LP-format dump
"""

from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import linprog
from loguru import logger

from .util import GeoException

# ==============================================================================
# === EXCEPTION ===
# ==============================================================================

class InfeasibleException(GeoException):
    """No point satisfies the constraints."""

class SolverFailureException(GeoException):
    """The solver stopped without a verified answer."""

# ==============================================================================
# === GLOBAL ===
# ==============================================================================

# added to the noise level of every decoding program, and the verification tolerance
FEASIBILITY_TOL = 1e-9

HIGHS_OPTIONS = {
    "presolve": True,
    "primal_feasibility_tolerance": 1e-10,
    "dual_feasibility_tolerance": 1e-10,
}

# tried in order until one returns a verified point
LP_METHODS = ("highs-ds", "highs-ipm", "highs")

Bound = Tuple[Optional[float], Optional[float]]

# ==============================================================================
# === TYPE ===
# ==============================================================================

@dataclass(eq=False)
class LinearProgram:
    """min c.v  s.t.  A_ub v <= b_ub,  A_eq v = b_eq,  lo <= v <= hi.

    A zero objective is a pure feasibility problem.
    """
    A_ub: np.ndarray
    b_ub: np.ndarray
    A_eq: Optional[np.ndarray] = None
    b_eq: Optional[np.ndarray] = None
    bounds: Optional[List[Bound]] = None
    c: Optional[np.ndarray] = None
    names: Optional[List[str]] = None
    title: str = "feasibility"

    def __post_init__(self) -> None:
        self.A_ub = np.atleast_2d(np.asarray(self.A_ub, dtype=float))
        self.b_ub = np.asarray(self.b_ub, dtype=float).reshape(-1)
        if self.A_eq is not None:
            self.A_eq = np.atleast_2d(np.asarray(self.A_eq, dtype=float))
            self.b_eq = np.asarray(self.b_eq, dtype=float).reshape(-1)
        if self.c is None:
            self.c = np.zeros(self.size)
        if self.bounds is None:
            self.bounds = [(None, None)] * self.size
        if self.names is None:
            self.names = [f"v{i}" for i in range(self.size)]
        for arr in (self.A_ub, self.b_ub, self.c):
            if not np.all(np.isfinite(arr)):
                raise ValueError("linear program coefficients must be finite")

    @property
    def size(self) -> int:
        return self.A_ub.shape[1]

    def violation(self, v: np.ndarray) -> float:
        """Largest constraint violation of v (0 when feasible)."""
        worst = float(np.max(self.A_ub @ v - self.b_ub, initial=0.))
        if self.A_eq is not None:
            worst = max(worst, float(np.max(np.abs(self.A_eq @ v - self.b_eq), initial=0.)))
        for x, (lo, hi) in zip(v, self.bounds):
            if lo is not None:
                worst = max(worst, lo - x)
            if hi is not None:
                worst = max(worst, x - hi)
        return worst

# ==============================================================================
# === SUPPORT ===
# ==============================================================================

def equilibrate(program: LinearProgram) -> LinearProgram:
    """Every constraint row divided by its largest coefficient; same feasible set."""
    def scale(A: Optional[np.ndarray], b: Optional[np.ndarray]):
        if A is None:
            return A, b
        rho = np.max(np.abs(A), axis=1)
        rho[rho == 0] = 1.
        return A / rho[:, None], b / rho

    A_ub, b_ub = scale(program.A_ub, program.b_ub)
    A_eq, b_eq = scale(program.A_eq, program.b_eq)
    return LinearProgram(A_ub, b_ub, A_eq, b_eq, list(program.bounds), program.c.copy(),
                         list(program.names), program.title)

def solve_linear_feasibility(program: LinearProgram, tol: float=FEASIBILITY_TOL) -> np.ndarray:
    """A point of the program verified to within tol on its row-equilibrated form.

    Each HiGHS method in LP_METHODS is tried in turn until one returns a verified
    point. Raises InfeasibleException when a solver certifies infeasibility and
    SolverFailureException when every method fails.
    """
    scaled = equilibrate(program)
    logger.debug(f"{program.title}: {program.size} vars, {program.A_ub.shape[0]} rows")
    failures = []
    for method in LP_METHODS:
        try:
            res = linprog(scaled.c, A_ub=scaled.A_ub, b_ub=scaled.b_ub,
                          A_eq=scaled.A_eq, b_eq=scaled.b_eq, bounds=scaled.bounds,
                          method=method, options=HIGHS_OPTIONS)
        except ValueError as e:
            failures.append(f"{method}: {e}")
            continue

        if res.status == 2:
            raise InfeasibleException(f"{program.title}: {res.message}")
        if res.status != 0 or res.x is None:
            failures.append(f"{method}: status {res.status} {res.message}")
            continue

        v = np.asarray(res.x, dtype=float)
        if (worst := scaled.violation(v)) > tol:
            failures.append(f"{method}: point violates constraints by {worst:.3e}")
            continue
        if failures:
            logger.debug(f"{program.title}: solved by {method} after {failures}")
        return v
    raise SolverFailureException(f"{program.title}: {'; '.join(failures)}")

def _lp_term(coef: float, name: str, first: bool) -> str:
    sign = '-' if coef < 0 else ('' if first else '+')
    return f"{sign} {abs(coef):.17g} {name}".strip()

def _lp_row(row: np.ndarray, names: Sequence[str]) -> str:
    parts = []
    for coef, name in zip(row, names):
        if coef != 0:
            parts.append(_lp_term(coef, name, not parts))
    return ' '.join(parts) if parts else f"0 {names[0]}"

def write_lp(program: LinearProgram, fname: Path) -> Path:
    """CPLEX LP text, readable by HiGHS, glpsol and CBC."""
    names = program.names
    lines = [f"\\ {program.title}", "Minimize", f" obj: {_lp_row(program.c, names)}", "Subject To"]
    for i, (row, rhs) in enumerate(zip(program.A_ub, program.b_ub)):
        lines.append(f" u{i}: {_lp_row(row, names)} <= {rhs:.17g}")
    if program.A_eq is not None:
        for i, (row, rhs) in enumerate(zip(program.A_eq, program.b_eq)):
            lines.append(f" e{i}: {_lp_row(row, names)} = {rhs:.17g}")
    lines.append("Bounds")
    for name, (lo, hi) in zip(names, program.bounds):
        if lo is None and hi is None:
            lines.append(f" {name} free")
        else:
            lo = '-inf' if lo is None else f"{lo:.17g}"
            hi = '+inf' if hi is None else f"{hi:.17g}"
            lines.append(f" {lo} <= {name} <= {hi}")
    lines.append("End")

    fname = Path(fname)
    fname.parent.mkdir(parents=True, exist_ok=True)
    with open(fname, 'w', encoding='utf-8') as f:
        f.write('\n'.join(lines) + '\n')
    return fname
