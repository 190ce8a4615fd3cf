"""
Geolocal - util
Parameter conversion, random streams, hashing and report output
"""

import json
import hashlib
from enum import Enum
from pathlib import Path
from typing import Any, Optional

import numpy as np
from loguru import logger

# ==============================================================================
# === EXCEPTION ===
# ==============================================================================

class GeoException(Exception):
    """Root of every error raised by the package."""

class DomainException(GeoException, ValueError):
    """Argument outside the mathematical domain of the operation."""

class PreconditionException(GeoException, ValueError):
    """A documented precondition does not hold."""

# ==============================================================================
# === ENUMERATION ===
# ==============================================================================

class EnumConvertType(Enum):
    STRING = 0
    BOOLEAN = 1
    FLOAT = 10
    INT = 12
    LATTICE = 20
    MASK = 30
    PATH = 40

# ==============================================================================
# === SUPPORT ===
# ==============================================================================

def parse_value(val:Any, typ:EnumConvertType, default: Any,
                clip_min: Optional[float]=None, clip_max: Optional[float]=None) -> Any:
    """Convert target value into the new specified type."""
    if val is None or (isinstance(val, str) and val.strip() == '' and typ != EnumConvertType.STRING):
        val = default
    if val is None:
        return None

    match typ:
        case EnumConvertType.FLOAT | EnumConvertType.INT:
            if isinstance(val, str):
                val = val.strip()
            try:
                val = float(val) if typ == EnumConvertType.FLOAT else int(val)
            except (TypeError, ValueError) as e:
                logger.error(f"Error converting value: {val} -- {e}")
                raise
            if clip_min is not None:
                val = max(val, clip_min)
            if clip_max is not None:
                val = min(val, clip_max)
        case EnumConvertType.BOOLEAN:
            if isinstance(val, str):
                val = val.strip().lower() in ('true', '1', 't', 'yes')
            else:
                val = bool(val)
        case EnumConvertType.LATTICE:
            from .lattice import Lattice, parse_lattice
            if not isinstance(val, Lattice):
                val = parse_lattice(str(val))
        case EnumConvertType.MASK:
            if isinstance(val, str):
                val = tuple(int(c) for c in val.strip())
            else:
                val = tuple(int(c) for c in val)
        case EnumConvertType.PATH:
            val = Path(val) if str(val) != '' else None
        case EnumConvertType.STRING:
            val = str(val)
        case _:
            if issubclass(typ, Enum) and not isinstance(val, typ):
                val = typ[str(val).upper()]
    return val

def parse_param(data:dict, key:str, typ:EnumConvertType, default: Any,
                clip_min: Optional[float]=None, clip_max: Optional[float]=None) -> Any:
    """Convenience because of the dictionary parameters."""
    return parse_value(data.get(key, default), typ, default, clip_min, clip_max)

def derive_stream(seed: int, *keys: Any) -> np.random.Generator:
    """Counter-based stream for (seed, stage, index, ...).

    String keys are folded through blake2b so the derivation is stable across
    interpreter runs.
    """
    spawn = []
    for k in keys:
        if isinstance(k, (int, np.integer)):
            spawn.append(int(k))
        else:
            digest = hashlib.blake2b(str(k).encode('utf-8'), digest_size=8).digest()
            spawn.append(int.from_bytes(digest, 'little'))
    seq = np.random.SeedSequence(int(seed), spawn_key=tuple(spawn))
    return np.random.Generator(np.random.Philox(seq))

def canonical_json(data: Any) -> str:
    return json.dumps(data, sort_keys=True, separators=(',', ':'), default=_json_default)

def content_hash(data: Any) -> str:
    """git-style blob SHA-1 of the canonical JSON."""
    body = canonical_json(data).encode('utf-8')
    head = f"blob {len(body)}\0".encode('utf-8')
    return hashlib.sha1(head + body).hexdigest()

def _json_default(obj: Any) -> Any:
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, Enum):
        return obj.name
    if isinstance(obj, Path):
        return str(obj)
    if hasattr(obj, 'to_json'):
        return obj.to_json()
    raise TypeError(f"not serializable {type(obj)}")

def report_dump(report: dict, fname: Optional[Path]=None) -> str:
    """Write the report as indented JSON; stdout when no path is given."""
    text = json.dumps(report, indent=2, sort_keys=True, default=_json_default)
    if fname is None:
        print(text)
    else:
        fname = Path(fname)
        fname.parent.mkdir(parents=True, exist_ok=True)
        with open(fname, 'w', encoding='utf-8') as f:
            f.write(text + '\n')
        logger.info(f"report -> {fname}")
    return text

def bits_xor(a: tuple, b: tuple) -> tuple:
    if len(a) != len(b):
        raise DomainException(f"bit strings differ in length: {len(a)} vs {len(b)}")
    return tuple(int(x) ^ int(y) for x, y in zip(a, b))
