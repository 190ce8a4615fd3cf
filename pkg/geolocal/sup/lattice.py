"""
Geolocal - lattice
Geometrically 2-local Pauli terms on a rectangular lattice
"""

import re
from dataclasses import dataclass, field
from functools import cached_property
from typing import Any, Dict, List, Sequence, Tuple

import numpy as np
from loguru import logger

from .. import GEO_MAX_QUBITS
from .util import GeoException, DomainException

# ==============================================================================
# === EXCEPTION ===
# ==============================================================================

class LatticeException(GeoException, ValueError):
    """Malformed lattice, term or mask."""

class ResourceCapException(GeoException, MemoryError):
    """Dense operator above the configured qubit cap."""

# ==============================================================================
# === GLOBAL ===
# ==============================================================================

PAULI_LETTERS = ('X', 'Y', 'Z')

PAULI = {
    'I': np.eye(2, dtype=complex),
    'X': np.array([[0, 1], [1, 0]], dtype=complex),
    'Y': np.array([[0, -1j], [1j, 0]], dtype=complex),
    'Z': np.array([[1, 0], [0, -1]], dtype=complex),
}

RE_LATTICE = re.compile(r"^\s*(\d+)\s*[xX]\s*(\d+)\s*(p?)\s*$")

# ==============================================================================
# === TYPE ===
# ==============================================================================

@dataclass(frozen=True)
class Lattice:
    rows: int
    cols: int
    periodic: bool = False

    def __post_init__(self) -> None:
        if self.rows < 1 or self.cols < 1:
            raise LatticeException(f"lattice dimensions must be positive, got {self.rows}x{self.cols}")
        if self.periodic and (self.rows < 3 or self.cols < 3):
            raise LatticeException(f"periodic lattice needs both dimensions >= 3 to avoid doubled wrap edges, got {self.rows}x{self.cols}")

    @property
    def n(self) -> int:
        return self.rows * self.cols

    def site(self, row: int, col: int) -> int:
        return row * self.cols + col

    @cached_property
    def edges(self) -> Tuple[Tuple[int, int], ...]:
        """Unordered nearest-neighbour pairs (i < j), sorted lexicographically."""
        found = set()
        for r in range(self.rows):
            for c in range(self.cols):
                here = self.site(r, c)
                for dr, dc in ((0, 1), (1, 0)):
                    rr, cc = r + dr, c + dc
                    if self.periodic:
                        rr, cc = rr % self.rows, cc % self.cols
                    elif rr >= self.rows or cc >= self.cols:
                        continue
                    there = self.site(rr, cc)
                    if here != there:
                        found.add((min(here, there), max(here, there)))
        return tuple(sorted(found))

    def to_json(self) -> Dict[str, Any]:
        return {"rows": self.rows, "cols": self.cols, "periodic": self.periodic}

    def __str__(self) -> str:
        return f"{self.rows}x{self.cols}{'p' if self.periodic else ''}"

@dataclass(frozen=True)
class PauliTerm:
    sites: Tuple[int, ...]
    letters: Tuple[str, ...]

    def __post_init__(self) -> None:
        if len(self.sites) not in (1, 2) or len(self.sites) != len(self.letters):
            raise LatticeException(f"term must act on 1 or 2 sites: {self.sites} {self.letters}")
        if any(b not in PAULI_LETTERS for b in self.letters):
            raise LatticeException(f"letters must be X, Y or Z: {self.letters}")
        if len(self.sites) == 2 and not self.sites[0] < self.sites[1]:
            raise LatticeException(f"sites must be distinct and ascending: {self.sites}")

    @property
    def label(self) -> str:
        return ''.join(f"{b}{s}" for s, b in zip(self.sites, self.letters))

    def to_json(self) -> Dict[str, Any]:
        return {"sites": list(self.sites), "letters": ''.join(self.letters)}

@dataclass(frozen=True, eq=False)
class TermTable:
    lattice: Lattice
    terms: Tuple[PauliTerm, ...]
    index: Dict[PauliTerm, int] = field(repr=False)

    @property
    def l(self) -> int:
        return len(self.terms)

    @property
    def n(self) -> int:
        return self.lattice.n

    def __len__(self) -> int:
        return len(self.terms)

    def __getitem__(self, idx: int) -> PauliTerm:
        return self.terms[idx]

    def index_of(self, term: PauliTerm) -> int:
        try:
            return self.index[term]
        except KeyError:
            raise LatticeException(f"{term.label} is not a term of {self.lattice}")

    def z_index(self, site: int) -> int:
        return self.index_of(PauliTerm((site,), ('Z',)))

    def zz_index(self, edge: Tuple[int, int]) -> int:
        return self.index_of(PauliTerm(tuple(edge), ('Z', 'Z')))

    def to_json(self) -> Dict[str, Any]:
        return {
            "lattice": self.lattice.to_json(),
            "l": self.l,
            "terms": [t.to_json() for t in self.terms]
        }

    @classmethod
    def from_json(cls, data: Dict[str, Any]) -> "TermTable":
        lattice = Lattice(**data["lattice"])
        table = build_term_table(lattice)
        terms = tuple(PauliTerm(tuple(t["sites"]), tuple(t["letters"])) for t in data["terms"])
        if terms != table.terms:
            raise LatticeException("term order in document is not canonical for its lattice")
        return table

# ==============================================================================
# === SUPPORT ===
# ==============================================================================

def parse_lattice(text: str) -> Lattice:
    """`3x3`, `1x2`, `3x3p` (periodic)."""
    if (match := RE_LATTICE.match(str(text))) is None:
        raise LatticeException(f"bad lattice '{text}', expected ROWSxCOLS[p]")
    rows, cols, periodic = match.groups()
    return Lattice(int(rows), int(cols), periodic == 'p')

def parse_mask(mask: Any, n: int) -> Tuple[int, ...]:
    if isinstance(mask, str):
        mask = mask.strip()
    bits = tuple(int(b) for b in mask)
    if len(bits) != n or any(b not in (0, 1) for b in bits):
        raise LatticeException(f"mask must be {n} bits of 0/1, got {mask!r}")
    return bits

def edge_count(lattice: Lattice) -> int:
    if lattice.periodic:
        return 2 * lattice.n
    return lattice.rows * (lattice.cols - 1) + lattice.cols * (lattice.rows - 1)

def build_term_table(lattice: Lattice) -> TermTable:
    """Single-site terms (row-major, X<Y<Z) then edge terms (sorted pairs, 9 letter pairs each)."""
    terms: List[PauliTerm] = []
    for site in range(lattice.n):
        for letter in PAULI_LETTERS:
            terms.append(PauliTerm((site,), (letter,)))
    for edge in lattice.edges:
        for a in PAULI_LETTERS:
            for b in PAULI_LETTERS:
                terms.append(PauliTerm(edge, (a, b)))

    expected = 3 * lattice.n + 9 * edge_count(lattice)
    if len(terms) != expected:
        raise LatticeException(f"{lattice}: enumerated {len(terms)} terms, counting formula gives {expected}")
    terms = tuple(terms)
    logger.debug(f"{lattice} -> l={len(terms)}")
    return TermTable(lattice, terms, {t: i for i, t in enumerate(terms)})

def check_dense(n: int) -> None:
    if n > GEO_MAX_QUBITS:
        raise ResourceCapException(f"{n} qubits exceeds the dense cap of {GEO_MAX_QUBITS}")

def pauli_action(term: PauliTerm, n: int) -> Tuple[int, int, complex]:
    """(x-mask, z-mask, phase) with P|b> = phase * (-1)^popcount(b & z) |b ^ x>.

    Site 0 is the leftmost tensor factor (most significant bit).
    """
    xmask = zmask = 0
    ny = 0
    for site, letter in zip(term.sites, term.letters):
        if site >= n:
            raise LatticeException(f"site {site} outside {n} qubits")
        bit = 1 << (n - 1 - site)
        if letter in 'XY':
            xmask |= bit
        if letter in 'YZ':
            zmask |= bit
        ny += letter == 'Y'
    return xmask, zmask, 1j ** ny

def parity(values: np.ndarray, mask: int) -> np.ndarray:
    values = values & mask
    out = np.zeros_like(values)
    while mask:
        out ^= values & 1
        values = values >> 1
        mask >>= 1
    return out

def term_matrix(term: PauliTerm, n: int) -> np.ndarray:
    check_dense(n)
    xmask, zmask, phase = pauli_action(term, n)
    dim = 1 << n
    cols = np.arange(dim)
    matrix = np.zeros((dim, dim), dtype=complex)
    matrix[cols ^ xmask, cols] = phase * (1 - 2 * parity(cols, zmask))
    return matrix

def z_conjugation_sign(term: PauliTerm, mask: Sequence[int]) -> int:
    """epsilon with Z^y P Z^y = epsilon P."""
    flips = sum(1 for s, b in zip(term.sites, term.letters) if mask[s] and b in 'XY')
    return -1 if flips % 2 else 1

def conjugation_signs(table: TermTable, mask: Sequence[int]) -> np.ndarray:
    mask = parse_mask(mask, table.n)
    return np.array([z_conjugation_sign(t, mask) for t in table.terms], dtype=float)

def z_string_diagonal(mask: Sequence[int]) -> np.ndarray:
    """Diagonal of the explicit Z^y matrix."""
    n = len(mask)
    check_dense(n)
    zmask = 0
    for site, bit in enumerate(mask):
        if bit:
            zmask |= 1 << (n - 1 - site)
    return (1 - 2 * parity(np.arange(1 << n), zmask)).astype(float)
