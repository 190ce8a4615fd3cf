"""
Geolocal - hamiltonian
Dense evolution of H(g), the truncated Taylor surrogate and the worst-case Ising family
"""

import math
from dataclasses import dataclass
from typing import Any, Dict, Optional, Sequence, Tuple

import numpy as np
from scipy import linalg
from loguru import logger

from .util import DomainException, PreconditionException, bits_xor
from .lattice import TermTable, LatticeException, \
    check_dense, conjugation_signs, pauli_action, parity, parse_mask

# ==============================================================================
# === GLOBAL ===
# ==============================================================================

# |J|, |h| cap for the worst-case family
WORST_CASE_MAX = 10.

# float noise allowed on top of a probability error bound
PROBABILITY_ROUNDOFF = 1e-14

# ==============================================================================
# === TYPE ===
# ==============================================================================

@dataclass(frozen=True, eq=False)
class CoeffVector:
    table: TermTable
    values: np.ndarray

    def __post_init__(self) -> None:
        values = np.array(self.values, dtype=float).reshape(-1)
        if values.shape[0] != self.table.l:
            raise DomainException(f"coefficient vector has {values.shape[0]} entries, table has l={self.table.l}")
        if not np.all(np.isfinite(values)):
            raise DomainException("coefficients must be finite")
        values.setflags(write=False)
        object.__setattr__(self, 'values', values)

    @property
    def l(self) -> int:
        return self.table.l

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.values))

    def with_values(self, values: np.ndarray) -> "CoeffVector":
        return CoeffVector(self.table, values)

    def scaled(self, scale: float) -> "CoeffVector":
        return CoeffVector(self.table, self.values * scale)

    @classmethod
    def zeros(cls, table: TermTable) -> "CoeffVector":
        return cls(table, np.zeros(table.l))

    def to_json(self) -> Dict[str, Any]:
        return {"lattice": self.table.lattice.to_json(), "values": self.values.tolist()}

@dataclass(frozen=True)
class EvolutionSpec:
    coeffs: CoeffVector
    tau: float = 1.
    input_mask: Optional[Tuple[int, ...]] = None

    def __post_init__(self) -> None:
        if not self.tau > 0:
            raise DomainException(f"tau must be positive, got {self.tau}")
        n = self.coeffs.table.n
        mask = (0,) * n if self.input_mask is None else parse_mask(self.input_mask, n)
        object.__setattr__(self, 'input_mask', mask)

    def to_json(self) -> Dict[str, Any]:
        return {
            "coeffs": self.coeffs.values.tolist(),
            "tau": self.tau,
            "input_mask": ''.join(map(str, self.input_mask))
        }

@dataclass(frozen=True)
class WorstCaseSpec:
    subset: Tuple[int, ...]
    couplings: Tuple[float, ...]
    fields: Tuple[float, ...]
    tau: float = 1.

    def __post_init__(self) -> None:
        if not self.tau > 0:
            raise DomainException(f"tau must be positive, got {self.tau}")
        for name, vals in (("J", self.couplings), ("h", self.fields)):
            if any(abs(v) > WORST_CASE_MAX for v in vals):
                raise DomainException(f"|{name}| must be <= {WORST_CASE_MAX}")

    @classmethod
    def uniform(cls, table: TermTable, subset: Sequence[int], coupling: float=1.,
                field: float=1., tau: float=1.) -> "WorstCaseSpec":
        lattice = table.lattice
        return cls(parse_mask(subset, lattice.n), (float(coupling),) * len(lattice.edges),
                   (float(field),) * lattice.n, float(tau))

    def to_json(self) -> Dict[str, Any]:
        return {
            "subset": ''.join(map(str, self.subset)),
            "couplings": list(self.couplings),
            "fields": list(self.fields),
            "tau": self.tau
        }

# ==============================================================================
# === SUPPORT ===
# ==============================================================================

def build_hamiltonian(coeffs: CoeffVector) -> np.ndarray:
    n = coeffs.table.n
    check_dense(n)
    dim = 1 << n
    cols = np.arange(dim)
    H = np.zeros((dim, dim), dtype=complex)
    for g, term in zip(coeffs.values, coeffs.table.terms):
        if g == 0:
            continue
        xmask, zmask, phase = pauli_action(term, n)
        H[cols ^ xmask, cols] += g * phase * (1 - 2 * parity(cols, zmask))
    return H

def z_plus_state(mask: Sequence[int]) -> np.ndarray:
    """Z^y |+^n>."""
    n = len(mask)
    zmask = 0
    for site, bit in enumerate(mask):
        if bit:
            zmask |= 1 << (n - 1 - site)
    dim = 1 << n
    return (1 - 2 * parity(np.arange(dim), zmask)) / math.sqrt(dim) + 0j

def evolution_operator(H: np.ndarray, tau: float) -> np.ndarray:
    """e^{-iH tau} through the Hermitian eigendecomposition."""
    w, V = linalg.eigh(H)
    return (V * np.exp(-1j * w * tau)) @ V.conj().T

def transition_probability(coeffs: CoeffVector, tau: float, input_mask: Sequence[int],
                           output_mask: Optional[Sequence[int]]=None) -> float:
    """|<+^n| Z^x e^{-iH tau} Z^y |+^n>|^2."""
    n = coeffs.table.n
    input_mask = parse_mask(input_mask, n)
    output_mask = (0,) * n if output_mask is None else parse_mask(output_mask, n)
    H = build_hamiltonian(coeffs)
    w, V = linalg.eigh(H)
    a = V.conj().T @ z_plus_state(output_mask)
    b = V.conj().T @ z_plus_state(input_mask)
    amp = np.vdot(a, np.exp(-1j * w * tau) * b)
    return float(abs(amp) ** 2)

def output_probability(spec: EvolutionSpec) -> float:
    return transition_probability(spec.coeffs, spec.tau, spec.input_mask)

def taylor_probability(spec: EvolutionSpec, m: int) -> float:
    """Squared amplitude of the series truncated at order m, applied to the state."""
    if m < 0:
        raise DomainException(f"truncation order must be >= 0, got {m}")
    H = build_hamiltonian(spec.coeffs)
    term = z_plus_state(spec.input_mask)
    acc = term.copy()
    for k in range(1, m + 1):
        term = (-1j * spec.tau / k) * (H @ term)
        acc += term
    amp = np.vdot(z_plus_state((0,) * spec.coeffs.table.n), acc)
    return float(abs(amp) ** 2)

def taylor_error_bound(h_norm: float, t: float, m: int) -> float:
    """2 exp(h t) (e h t / m)^(m+1), valid only for m > e h t."""
    ht = h_norm * t
    if ht < 0:
        raise DomainException("norm and time must be non-negative")
    if ht == 0:
        if m < 1:
            raise PreconditionException("order must be >= 1")
        return 0.
    if not m > math.e * ht:
        raise PreconditionException(f"order {m} must exceed e*|H|*t = {math.e * ht:.4f}")
    log_bound = math.log(2.) + ht + (m + 1) * (1. + math.log(ht) - math.log(m))
    return math.exp(log_bound)

def spectral_norm_bound(coeffs: CoeffVector) -> float:
    g = coeffs.values
    return float(min(np.abs(g).sum(), math.sqrt(g.shape[0]) * np.linalg.norm(g)))

def trace_norm_bound(coeffs: CoeffVector) -> float:
    """2^(n/2) |g|_2, the Frobenius norm of H; distinct Pauli strings are trace-orthogonal."""
    return float(2. ** (coeffs.table.n / 2.) * np.linalg.norm(coeffs.values))

def spectral_norm(coeffs: CoeffVector) -> float:
    w = linalg.eigvalsh(build_hamiltonian(coeffs))
    return float(np.max(np.abs(w)))

def worst_case_coeffs(spec: WorstCaseSpec, table: TermTable) -> CoeffVector:
    """J on Z_iZ_j edges; -h_i + pi/(8 tau) [i in S] on Z_i."""
    lattice = table.lattice
    if len(spec.subset) != lattice.n or len(spec.fields) != lattice.n \
            or len(spec.couplings) != len(lattice.edges):
        raise LatticeException(f"worst-case spec does not match lattice {lattice}")

    values = np.zeros(table.l)
    for edge, J in zip(lattice.edges, spec.couplings):
        values[table.zz_index(edge)] = J
    shift = math.pi / (8. * spec.tau)
    for site, (h, s) in enumerate(zip(spec.fields, spec.subset)):
        values[table.z_index(site)] = -h + shift * s
    return CoeffVector(table, values)

def shift_coeffs(coeffs: CoeffVector, y: Sequence[int], tau: float) -> CoeffVector:
    """Adds pi/(2 tau) y_k to each single-site Z coefficient."""
    table = coeffs.table
    y = parse_mask(y, table.n)
    values = coeffs.values.copy()
    for site, bit in enumerate(y):
        if bit:
            values[table.z_index(site)] += math.pi / (2. * tau)
    return CoeffVector(table, values)

def hiding_identity_residual(coeffs: CoeffVector, x: Sequence[int], y: Sequence[int],
                             tau: float) -> float:
    n = coeffs.table.n
    x = parse_mask(x, n)
    y = parse_mask(y, n)
    direct = transition_probability(coeffs, tau, y, x)
    flipped = coeffs.with_values(coeffs.values * conjugation_signs(coeffs.table, x))
    moved = transition_probability(flipped, tau, bits_xor(x, y))
    residual = abs(direct - moved)
    logger.debug(f"hiding x={x} y={y} residual={residual:.3e}")
    return residual
