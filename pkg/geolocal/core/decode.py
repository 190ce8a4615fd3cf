"""
Geolocal - decode
Seeded trials of the robust decoder against planted corruptions
"""

import math
from concurrent.futures import ThreadPoolExecutor
from typing import Any, Dict, Tuple

import numpy as np
from loguru import logger

from .. import Lexicon, GeoBaseNode, deep_merge

from ..sup.util import EnumConvertType, GeoException, PreconditionException, \
    derive_stream, parse_param
from ..sup.interp import Polynomial, classic_berlekamp_welch, decode_robust, \
    random_separated_nodes, rebw_bound

# ==============================================================================

GEO_CATEGORY = "DECODE"

# coefficient agreement demanded in exact mode
EXACT_TOL = 1e-8

# observed residual ceiling in noisy mode
NOISY_TOL = 1e-3

def coeff_diff(a: Polynomial, b: Polynomial) -> float:
    size = max(a.degree, b.degree) + 1
    pa = np.pad(a.coeffs, (0, size - a.degree - 1))
    pb = np.pad(b.coeffs, (0, size - b.degree - 1))
    return float(np.max(np.abs(pa - pb)))

def plant_instance(rng: np.random.Generator, n: int, k: int, delta: float, epsilon: float,
                   degree: int, bad: int) -> Dict[str, Any]:
    """Random polynomial on separated nodes, `bad` values pushed away by 0.5..2."""
    x = random_separated_nodes(n, delta, rng)
    p = Polynomial(rng.standard_normal(degree + 1))
    y = p(x)
    corrupt = rng.choice(n, size=bad, replace=False)
    if epsilon > 0:
        y = y + rng.uniform(-epsilon, epsilon, n)
    y[corrupt] += rng.choice([-1., 1.], size=bad) * rng.uniform(0.5, 2., size=bad)
    return {"x": x, "y": y, "p": p, "corrupt": np.sort(corrupt)}

def rbw_trial(seed: int, index: int, n: int, k: int, delta: float, epsilon: float,
              degree: int, violate: bool) -> Dict[str, Any]:
    rng = derive_stream(seed, "rbw", index)
    inst = plant_instance(rng, n, k, delta, epsilon, degree, k + 1 if violate else k)
    x, y, p = inst["x"], inst["y"], inst["p"]
    out = {"trial": index, "passed": False, "error": None}
    try:
        fit = decode_robust(x, y, k, delta, epsilon, degree)
    except GeoException as e:
        out["error"] = str(e)
        return out

    q = fit.poly
    residual = np.abs(q(x) - p(x))
    bound = rebw_bound(delta, n, epsilon)
    coeff_err = coeff_diff(q, p)
    out.update({
        "max_residual": float(residual.max()),
        "coeff_error": coeff_err,
        "within_bound": int(np.sum(residual <= max(bound, EXACT_TOL))),
        "refined": fit.refined,
    })
    if epsilon == 0:
        out["passed"] = coeff_err < EXACT_TOL
        try:
            classic = classic_berlekamp_welch(list(zip(x, y)), k, degree)
            out["classic_error"] = coeff_diff(classic, q)
        except GeoException as e:
            out["classic_error"] = None
            logger.debug(f"classic decoder failed on trial {index}: {e}")
    else:
        out["passed"] = out["within_bound"] >= n - 2 * k and out["max_residual"] < NOISY_TOL
    return out

class RBWTestNode(GeoBaseNode):
    NAME = "rbw-test"
    CATEGORY = f"GEOLOCAL/{GEO_CATEGORY}"
    SORT = 20
    DESCRIPTION = """
Randomised acceptance trials for the robust decoder. With epsilon 0 the recovered polynomial must match exactly; otherwise enough nodes must land inside the certified bound. `violate_k` plants k+1 corruptions and reports the expected-failure regime.
"""

    @classmethod
    def INPUT_TYPES(cls) -> dict:
        d = super().INPUT_TYPES()
        return deep_merge(d, {
            "optional": {
                Lexicon.TRIALS: ("INT", {"default": 200, "min": 1}),
                Lexicon.NODES: ("INT", {"default": 12, "min": 2}),
                Lexicon.K: ("INT", {"default": 2, "min": 0}),
                Lexicon.DELTA: ("FLOAT", {"default": 0.12, "min": 0.}),
                Lexicon.EPSILON: ("FLOAT", {"default": 1e-12, "min": 0.}),
                Lexicon.DEGREE: ("INT", {"default": -1}),
                Lexicon.VIOLATE_K: ("BOOLEAN", {"default": False}),
            }
        })

    def run(self, **kw) -> Tuple[dict, int]:
        trials = parse_param(kw, Lexicon.TRIALS, EnumConvertType.INT, 200, 1)
        n = parse_param(kw, Lexicon.NODES, EnumConvertType.INT, 12, 2)
        k = parse_param(kw, Lexicon.K, EnumConvertType.INT, 2, 0)
        delta = parse_param(kw, Lexicon.DELTA, EnumConvertType.FLOAT, 0.12, 0.)
        epsilon = parse_param(kw, Lexicon.EPSILON, EnumConvertType.FLOAT, 1e-12, 0.)
        degree = parse_param(kw, Lexicon.DEGREE, EnumConvertType.INT, -1)
        violate = parse_param(kw, Lexicon.VIOLATE_K, EnumConvertType.BOOLEAN, False)
        seed = parse_param(kw, Lexicon.SEED, EnumConvertType.INT, 0)
        jobs = parse_param(kw, Lexicon.JOBS, EnumConvertType.INT, 1, 1)

        top = n - 2 * k - 1
        degree = top if degree < 0 else degree
        if not 0 <= degree <= top:
            raise PreconditionException(f"degree {degree} outside 0..n-2k-1={top}")
        if (n - 1) * delta > 2:
            raise PreconditionException(f"{n} nodes {delta}-apart do not fit in [-1, 1]")
        if violate and k + 1 > n:
            raise PreconditionException("no room for k+1 corruptions")

        args = (n, k, delta, epsilon, degree, violate)
        if jobs > 1:
            with ThreadPoolExecutor(max_workers=jobs) as pool:
                results = list(pool.map(lambda t: rbw_trial(seed, t, *args), range(trials)))
        else:
            results = [rbw_trial(seed, t, *args) for t in range(trials)]

        passes = sum(r["passed"] for r in results)
        solved = [r for r in results if r["error"] is None]
        worst = max((r["max_residual"] for r in solved), default=None)
        bound = rebw_bound(delta, n, epsilon)
        mode = "violate" if violate else ("exact" if epsilon == 0 else "noisy")
        report = {
            "mode": mode,
            "trials": trials,
            "nodes": n,
            "k": k,
            "degree": degree,
            "delta": delta,
            "epsilon": epsilon,
            "bound": bound,
            "log10_bound_margin": None if not worst or not bound else math.log10(bound) - math.log10(worst),
            "passes": passes,
            "pass_rate": passes / trials,
            "errors": trials - len(solved),
            "worst_residual": worst,
            "worst_coeff_error": max((r["coeff_error"] for r in solved), default=None),
            "expected_failure": violate,
        }
        if epsilon == 0:
            agree = [r.get("classic_error") for r in solved]
            report["classic_failures"] = sum(a is None for a in agree)
            report["classic_max_diff"] = max((a for a in agree if a is not None), default=None)

        logger.info(f"rbw-test {mode}: {passes}/{trials} passed, worst residual {worst}")
        if violate:
            return report, 0
        return report, 0 if passes == trials else 1
