"""
Geolocal - oracle
Simulated average-case solver: exact probabilities with bounded noise and
occasional corruption, plus the provenance trace the test harness audits
"""

import csv
import hashlib
import threading
from enum import Enum
from pathlib import Path
from dataclasses import dataclass
from typing import Any, Callable, Dict, List, Optional, Tuple

import numpy as np
from loguru import logger

from .util import DomainException, derive_stream
from .lattice import parse_mask
from .hamiltonian import CoeffVector, transition_probability
from .gaussian import wrap_angle

# ==============================================================================
# === ENUMERATION ===
# ==============================================================================

class EnumCorruption(Enum):
    OFFSET = 0
    UNIFORM = 1
    CALLBACK = 2

# ==============================================================================
# === TYPE ===
# ==============================================================================

# (point, exact value, stream) -> corrupted value
CorruptionCallback = Callable[[CoeffVector, float, np.random.Generator], float]

@dataclass(frozen=True)
class OracleConfig:
    epsilon_a: float = 0.
    delta_corrupt: float = 0.
    corruption: EnumCorruption = EnumCorruption.OFFSET
    offset: float = 1.
    callback: Optional[CorruptionCallback] = None
    seed: int = 0
    tau: float = 1.
    input_mask: Optional[Tuple[int, ...]] = None

    def __post_init__(self) -> None:
        if not 0. <= self.delta_corrupt < 1.:
            raise DomainException(f"corruption probability must be in [0, 1), got {self.delta_corrupt}")
        if self.epsilon_a < 0:
            raise DomainException(f"epsilon_a must be non-negative, got {self.epsilon_a}")
        if not self.tau > 0:
            raise DomainException(f"tau must be positive, got {self.tau}")
        if self.corruption == EnumCorruption.CALLBACK and self.callback is None:
            raise DomainException("CALLBACK corruption needs a callback")

    def to_json(self) -> Dict[str, Any]:
        return {
            "epsilon_a": self.epsilon_a,
            "delta_corrupt": self.delta_corrupt,
            "corruption": self.corruption.name,
            "offset": self.offset,
            "seed": self.seed,
            "tau": self.tau,
            "input_mask": None if self.input_mask is None else ''.join(map(str, self.input_mask))
        }

@dataclass(frozen=True, eq=False)
class EvalRecord:
    point: CoeffVector
    plane: Optional[Tuple[float, float]]
    value: float
    truth: float
    corrupted: bool
    stage: str

    def to_row(self) -> List[Any]:
        r, theta = self.plane if self.plane is not None else (float('nan'), float('nan'))
        return [self.stage, repr(r), repr(theta), repr(self.point.norm),
                repr(self.value), repr(self.truth), int(self.corrupted)]

# ==============================================================================
# === ORACLE ===
# ==============================================================================

def plane_key(plane: Optional[Tuple[float, float]]) -> Optional[Tuple[float, float]]:
    """(R, theta) with theta wrapped to (-pi, pi]."""
    if plane is None:
        return None
    r, theta = plane
    return float(r), wrap_angle(theta)


class AverageCaseOracle:
    """A(g) = D(g) + U[-eps_A, eps_A], replaced with probability delta by a corrupted value.

    The draw depends only on (seed, g), so repeated and concurrent queries agree.
    """
    def __init__(self, config: OracleConfig) -> None:
        self.__config = config
        self.__lock = threading.Lock()
        self.__records: List[EvalRecord] = []
        self.__index: Dict[Tuple[str, Tuple[float, float]], EvalRecord] = {}

    @property
    def config(self) -> OracleConfig:
        return self.__config

    def _stream(self, g: CoeffVector) -> np.random.Generator:
        digest = hashlib.blake2b(digest_size=16)
        digest.update(int(self.__config.seed).to_bytes(8, 'little', signed=True))
        # + 0.0 folds -0.0 onto 0.0
        digest.update(np.ascontiguousarray(g.values + 0.).tobytes())
        return derive_stream(self.__config.seed, "oracle", digest.hexdigest())

    def _corrupt(self, g: CoeffVector, truth: float, rng: np.random.Generator) -> float:
        cfg = self.__config
        match cfg.corruption:
            case EnumCorruption.OFFSET:
                return truth + cfg.offset
            case EnumCorruption.UNIFORM:
                return float(rng.uniform(0., 1.))
            case EnumCorruption.CALLBACK:
                return float(cfg.callback(g, truth, rng))

    def __call__(self, g: CoeffVector, stage: str="", plane: Optional[Tuple[float, float]]=None) -> float:
        cfg = self.__config
        n = g.table.n
        mask = (0,) * n if cfg.input_mask is None else parse_mask(cfg.input_mask, n)
        truth = transition_probability(g, cfg.tau, mask)
        rng = self._stream(g)
        corrupted = bool(rng.random() < cfg.delta_corrupt)
        noise = float(rng.uniform(-cfg.epsilon_a, cfg.epsilon_a)) if cfg.epsilon_a > 0 else 0.
        value = self._corrupt(g, truth, rng) if corrupted else truth + noise

        plane = plane_key(plane)
        record = EvalRecord(g, plane, value, truth, corrupted, stage)
        with self.__lock:
            self.__records.append(record)
            if plane is not None:
                self.__index[(stage, plane)] = record
        return value

    def records(self) -> List[EvalRecord]:
        """Evaluation trace; harness use only."""
        with self.__lock:
            return list(self.__records)

    def lookup(self, stage: str, plane: Tuple[float, float]) -> Optional[EvalRecord]:
        with self.__lock:
            return self.__index.get((stage, plane_key(plane)))

    def reset(self) -> None:
        with self.__lock:
            self.__records.clear()
            self.__index.clear()

def write_trace_csv(oracle: AverageCaseOracle, fname: Path) -> Path:
    fname = Path(fname)
    fname.parent.mkdir(parents=True, exist_ok=True)
    records = oracle.records()
    with open(fname, 'w', newline='', encoding='utf-8') as f:
        writer = csv.writer(f)
        writer.writerow(["stage", "r", "theta", "norm", "value", "truth", "corrupted"])
        for rec in records:
            writer.writerow(rec.to_row())
    logger.info(f"{len(records)} oracle calls -> {fname}")
    return fname
