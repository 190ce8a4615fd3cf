"""
Geolocal - simulate
Exact output probability, norm bounds and the Taylor comparison table
"""

import json
import math
from pathlib import Path
from typing import Any, Dict, List, Tuple

import numpy as np
from loguru import logger

from .. import Lexicon, GeoBaseNode, deep_merge

from ..sup.util import EnumConvertType, DomainException, PreconditionException, \
    derive_stream, parse_param
from ..sup.lattice import build_term_table, parse_mask
from ..sup.hamiltonian import PROBABILITY_ROUNDOFF, CoeffVector, EvolutionSpec, \
    output_probability, spectral_norm, spectral_norm_bound, taylor_error_bound, taylor_probability
from ..sup.gaussian import EnsembleParams, sample_coeffs

# ==============================================================================

GEO_CATEGORY = "SIMULATE"

def load_coeffs(fname: Path, table) -> CoeffVector:
    """Flat JSON array, or an object with a `values` array, in canonical term order."""
    with open(fname, 'r', encoding='utf-8') as f:
        data = json.load(f)
    if isinstance(data, dict):
        data = data.get("values", data.get("coeffs"))
    if not isinstance(data, list):
        raise DomainException(f"{fname}: expected a list of coefficients")
    return CoeffVector(table, np.array(data, dtype=float))

def taylor_table(spec: EvolutionSpec, d_exact: float, norm: float, start: int,
                 count: int) -> List[Dict[str, Any]]:
    rows = []
    for m in range(start, start + count):
        approx = taylor_probability(spec, m)
        try:
            bound = taylor_error_bound(norm, spec.tau, m)
        except PreconditionException:
            bound = None
        diff = abs(d_exact - approx)
        rows.append({
            "m": m,
            "taylor": approx,
            "diff": diff,
            "bound": bound,
            "within": None if bound is None else bool(diff <= bound + PROBABILITY_ROUNDOFF)
        })
    return rows

class SimulateNode(GeoBaseNode):
    NAME = "simulate"
    CATEGORY = f"GEOLOCAL/{GEO_CATEGORY}"
    SORT = 10
    DESCRIPTION = """
Exact probability of the all-plus outcome after evolving Z^y|+^n> under H(g). Samples g from the ensemble unless a coefficient file is given, and tabulates the truncated-series probability against its certified bound.
"""

    @classmethod
    def INPUT_TYPES(cls) -> dict:
        d = super().INPUT_TYPES()
        return deep_merge(d, {
            "optional": {
                Lexicon.LATTICE: ("STRING", {"default": "1x2"}),
                Lexicon.COEFFS: ("STRING", {"default": ""}),
                Lexicon.TAU: ("FLOAT", {"default": 1., "min": 0.}),
                Lexicon.INPUT: ("STRING", {"default": ""}),
                Lexicon.M: ("INT", {"default": 0, "min": 0}),
                Lexicon.M_SWEEP: ("INT", {"default": 10, "min": 1}),
            }
        })

    def run(self, **kw) -> Tuple[dict, int]:
        lattice = parse_param(kw, Lexicon.LATTICE, EnumConvertType.LATTICE, "1x2")
        fname = parse_param(kw, Lexicon.COEFFS, EnumConvertType.PATH, "")
        tau = parse_param(kw, Lexicon.TAU, EnumConvertType.FLOAT, 1.)
        y = parse_param(kw, Lexicon.INPUT, EnumConvertType.STRING, "")
        m = parse_param(kw, Lexicon.M, EnumConvertType.INT, 0, 0)
        sweep = parse_param(kw, Lexicon.M_SWEEP, EnumConvertType.INT, 10, 1)
        seed = parse_param(kw, Lexicon.SEED, EnumConvertType.INT, 0)

        table = build_term_table(lattice)
        if fname is not None:
            coeffs = load_coeffs(fname, table)
        else:
            coeffs = sample_coeffs(EnsembleParams.from_table(table), derive_stream(seed, "simulate"))
        mask = parse_mask(y, table.n) if y else None
        spec = EvolutionSpec(coeffs, tau, mask)

        d_exact = output_probability(spec)
        bound_norm = spectral_norm_bound(coeffs)
        exact_norm = spectral_norm(coeffs)
        start = m if m > 0 else int(math.ceil(math.e * bound_norm * tau)) + 1
        rows = taylor_table(spec, d_exact, bound_norm, start, sweep)
        bad = [r["m"] for r in rows if r["within"] is False]
        if bad:
            logger.error(f"taylor bound violated at m={bad}")

        report = {
            "lattice": str(lattice),
            "l": table.l,
            "n": table.n,
            "tau": tau,
            "input_mask": ''.join(map(str, spec.input_mask)),
            "coeff_norm": coeffs.norm,
            "d_exact": d_exact,
            "norm_bound": bound_norm,
            "spectral_norm": exact_norm,
            "taylor": rows,
            "all_within": not bad
        }
        logger.info(f"simulate {lattice}: D={d_exact:.6f} |H|<={bound_norm:.4f}")
        return report, 1 if bad else 0

class TermTableNode(GeoBaseNode):
    NAME = "term-table"
    CATEGORY = f"GEOLOCAL/{GEO_CATEGORY}"
    SORT = 5
    DESCRIPTION = """
Canonical geometrically 2-local Pauli terms of a lattice, as JSON.
"""

    @classmethod
    def INPUT_TYPES(cls) -> dict:
        d = super().INPUT_TYPES()
        return deep_merge(d, {
            "optional": {
                Lexicon.LATTICE: ("STRING", {"default": "3x3p"}),
            }
        })

    def run(self, **kw) -> Tuple[dict, int]:
        lattice = parse_param(kw, Lexicon.LATTICE, EnumConvertType.LATTICE, "3x3p")
        table = build_term_table(lattice)
        return table.to_json(), 0
