"""
  ██████  ███████  ██████  ██       ██████   ██████  █████  ██
 ██       ██      ██    ██ ██      ██    ██ ██      ██   ██ ██
 ██   ███ █████   ██    ██ ██      ██    ██ ██      ███████ ██
 ██    ██ ██      ██    ██ ██      ██    ██ ██      ██   ██ ██
  ██████  ███████  ██████  ███████  ██████   ██████ ██   ██ ███████

        Worst-to-average-case interpolation for random geolocal Hamiltonians

@title: Geolocal
@category: Numerical
@tags: hamiltonian, pauli, interpolation, berlekamp-welch, linear programming,
gaussian ensemble, monte-carlo
@description: Exact output probabilities for random geometrically-local
Hamiltonian evolutions, the Taylor surrogate with certified error bounds, a
linear-programming robust Berlekamp-Welch decoder, delta-separated sampling
and the two-level circumference/radial reduction with a full error ledger.
@command list:
    SimulateNode, TermTableNode, RBWTestNode, ReduceNode, HidingCheckNode,
    StatsNode

@version: 0.4.2
"""

__all__ = ["COMMAND_CLASS_MAPPINGS", "GEO_CONFIG"]
__version__ = "0.4.2"

import os
import sys
import json
import inspect
import importlib
from pathlib import Path
from typing import Any, Dict, Tuple

from loguru import logger

COMMAND_CLASS_MAPPINGS = {}

ROOT = Path(__file__).resolve().parent

GEO_CONFIG = {}
GEO_RES = ROOT / 'res'
GEO_DEFAULT = GEO_RES / 'default.json'

GEO_LOG_LEVEL = os.getenv("GEO_LOG_LEVEL", "INFO")
logger.configure(handlers=[{"sink": sys.stderr, "level": GEO_LOG_LEVEL}])

# default seed for every command when --seed is absent
GEO_SEED = 0
try: GEO_SEED = int(os.getenv("GEO_SEED", GEO_SEED))
except: logger.warning("GEO_SEED is not an integer; using 0")

# dense matrices only; 2^12 x 2^12 complex is the ceiling
GEO_MAX_QUBITS = 12
try: GEO_MAX_QUBITS = min(12, max(1, int(os.getenv("GEO_MAX_QUBITS", GEO_MAX_QUBITS))))
except: logger.warning("GEO_MAX_QUBITS is not an integer; using 12")

GEO_JOBS = 1
try: GEO_JOBS = max(1, int(os.getenv("GEO_JOBS", GEO_JOBS)))
except: logger.warning("GEO_JOBS is not an integer; using 1")

SCHEMA_VERSION = 3

# ==============================================================================
# === LEXICON ===
# ==============================================================================

class LexiconMeta(type):
    def __new__(cls, name, bases, dct) -> object:
        _tooltips = {}
        for attr_name, attr_value in dct.items():
            if isinstance(attr_value, tuple):
                attr_name = attr_value[1]
                attr_value = attr_value[0]
            _tooltips[attr_value] = attr_name
        dct['_tooltipsDB'] = _tooltips
        return super().__new__(cls, name, bases, dct)

    def __getattribute__(cls, name) -> Any:
        value = super().__getattribute__(name)
        return value[0] if type(value) == tuple else value

class Lexicon(metaclass=LexiconMeta):
    B_CIRC = 'b_circ', "Circumference bin count; 0 derives ceil(m/0.4)+1"
    B_RADIAL = 'b_radial', "Radial bin count; 0 derives 2m"
    COEFFS = 'coeffs', "JSON file with a flat coefficient array in canonical term order"
    CONFIG = 'config', "JSON configuration merged over the defaults"
    CORRUPT = 'corrupt', "Per-call corruption probability of the average-case oracle"
    CORRUPTION = 'corruption', "Corrupted value model: OFFSET, UNIFORM"
    DEGREE = 'degree', "Degree of the hidden polynomial; -1 uses n-2k-1"
    DELTA = 'delta', "Minimum node separation"
    EPSILON = 'epsilon', "Additive accuracy of good evaluations"
    EPSILON_A = 'epsilon_a', "Additive accuracy of the average-case oracle"
    BINS = 'bins', "Histogram cells for the goodness-of-fit tests"
    FIELD = 'field', "Uniform single-site field h"
    INPUT = 'input', "Input Z-string mask y; empty is all zeros"
    COUPLING = 'coupling', "Uniform edge coupling J"
    JOBS = 'jobs', "Worker cap for trial and circumference loops"
    K = 'k', "Corruption budget of the decoder"
    K_CIRC = 'k_circ', "Circumference corruption budget as a fraction of its bins"
    K_RADIAL = 'k_radial', "Radial corruption budget as a fraction of its bins"
    L = 'l', "Term count of the ensemble"
    LATTICE = 'lattice', "Lattice as ROWSxCOLS, suffix p for periodic (3x3p)"
    LAYOUT = 'layout', "Bin layout: WIDTH (fixed width) or MASS (equal mass)"
    M = 'm', "Interpolation degree; 0 derives ceil(e*sqrt(l)*tau)+ceil(log2(1/eps))"
    M_C = 'm_c', "Angle samples per circumference"
    M_R = 'm_r', "Radius samples"
    M_SWEEP = 'm_sweep', "Number of Taylor orders in the comparison table"
    NODES = 'nodes', "Number of interpolation nodes"
    NO_EXTRAPOLATION = 'no_extrapolation', "Rescale g_worst to unit norm so the target lies inside the sampled annulus"
    OUTPUT = 'output', "Report path; stdout when empty"
    SAMPLES = 'samples', "Monte-Carlo draw count"
    SEED = 'seed', "Random generator's initial value"
    SUBSET = 'subset', "Bit-string S over vertices for the pi/(8tau) shift"
    TAU = 'tau', "Evolution time"
    TRACE = 'trace', "CSV path for the oracle evaluation trace"
    TRIALS = 'trials', "Number of seeded trials"
    TRUTH = 'truth', "Compare the estimate against the exact simulator"
    VIOLATE_K = 'violate_k', "Plant k+1 corruptions (outside the decoding radius)"
    XMASK = 'xmask', "Output Z-string mask; empty draws a random mask per triple"

# ==============================================================================
# === THERE CAN BE ONLY ONE ===
# ==============================================================================

class Singleton(type):
    _instances = {}

    def __call__(cls, *arg, **kw) -> Any:
        if cls not in cls._instances:
            instance = super().__call__(*arg, **kw)
            cls._instances[cls] = instance
        return cls._instances[cls]

# ==============================================================================
# === CORE COMMANDS ===
# ==============================================================================

class GeoBaseNode:
    """Common shape of every command.

    `INPUT_TYPES` maps flag names to `(TYPE, {"default": ..., "tooltips": ...})`
    and `run` returns `(report, exit_code)`.
    """
    NAME = ""
    CATEGORY = "GEOLOCAL"
    DESCRIPTION = ""
    SORT = 0

    @classmethod
    def INPUT_TYPES(cls) -> dict:
        return {
            "optional": {
                Lexicon.SEED: ("INT", {"default": GEO_SEED}),
                Lexicon.OUTPUT: ("STRING", {"default": ""}),
                Lexicon.CONFIG: ("STRING", {"default": ""}),
                Lexicon.JOBS: ("INT", {"default": GEO_JOBS, "min": 1}),
            }
        }

    @classmethod
    def defaults(cls) -> Dict[str, Any]:
        """Flag defaults overlaid with the command's section of default.json."""
        data = {k: v[1].get("default") for k, v in cls.INPUT_TYPES()["optional"].items()}
        return deep_merge(data, GEO_CONFIG.get(cls.NAME, {}))

    def run(self, **kw) -> Tuple[dict, int]:
        raise NotImplementedError

def deep_merge(d1: dict, d2: dict) -> dict:
    """
    Deep merge d2 into d1 recursively.

    Args:
        d1 (dict): Target dictionary, updated in place.
        d2 (dict): Values that win on conflict.

    Returns:
        dict: The merged d1.
    """
    for key in d2:
        if key in d1:
            if isinstance(d1[key], dict) and isinstance(d2[key], dict):
                deep_merge(d1[key], d2[key])
            else:
                d1[key] = d2[key]
        else:
            d1[key] = d2[key]
    return d1

# ==============================================================================
# === SESSION ===
# ==============================================================================

def configLoad(fname:Path, as_json:bool=True) -> Any | list[str] | None:
    try:
        with open(fname, 'r', encoding='utf-8') as fn:
            if as_json:
                return json.load(fn)
            return fn.read().splitlines()
    except (IOError, FileNotFoundError) as e:
        pass
    except Exception as e:
        logger.error(e)
    return []

class Session(metaclass=Singleton):
    CLASS_MAPPINGS = {}

    def __init__(self, *arg, **kw) -> None:
        global GEO_CONFIG
        if GEO_DEFAULT.exists():
            GEO_CONFIG = configLoad(GEO_DEFAULT) or {}
        else:
            logger.warning("---> NO DEFAULT CONFIGURATION <---")

        node_count = 0
        for fname in sorted(ROOT.glob('core/**/*.py')):
            if fname.stem.startswith('_'):
                continue

            route = fname.relative_to(ROOT / 'core').with_suffix('')
            module = f"{__name__}.core.{'.'.join(route.parts)}"
            try:
                module = importlib.import_module(module)
            except Exception as e:
                logger.warning(f"module failed {module}")
                logger.warning(str(e))
                continue

            classes = inspect.getmembers(module, inspect.isclass)
            for class_name, class_object in classes:
                if class_name.endswith('BaseNode') or not getattr(class_object, 'NAME', None):
                    continue
                if not hasattr(class_object, 'CATEGORY'):
                    continue
                name = class_object.NAME
                Session.CLASS_MAPPINGS[name] = class_object
                node_count += 1

            logger.debug(f"✅ {module.__name__}")
        logger.debug(f"{node_count} commands loaded")

        for k, v in sorted(Session.CLASS_MAPPINGS.items(), key=lambda item: getattr(item[1], 'SORT', 0)):
            COMMAND_CLASS_MAPPINGS[k] = v
