"""
Geolocal - check
Exact hiding residuals and the sampler statistics report
"""

import math
from concurrent.futures import ThreadPoolExecutor
from typing import Any, Dict, Tuple

import numpy as np
from loguru import logger

from .. import Lexicon, GeoBaseNode, deep_merge

from ..sup.util import EnumConvertType, DomainException, derive_stream, parse_param
from ..sup.lattice import build_term_table, parse_mask
from ..sup.hamiltonian import hiding_identity_residual, transition_probability
from ..sup.gaussian import EnsembleParams, conjugate_coeffs, sample_coeffs, stats_report

# ==============================================================================

GEO_CATEGORY = "CHECK"

# exact identity, so only rounding is tolerated
HIDING_TOL = 1e-12

# tolerances on the sampler report
STATS_TOL = {"mean_r": 0.02, "mean_r2": 0.02, "var_r": 0.10}
STATS_PVALUE = 0.01

def hiding_triple(seed: int, index: int, table, tau: float, xmask: str) -> Dict[str, Any]:
    rng = derive_stream(seed, "hiding", index)
    n = table.n
    g = sample_coeffs(EnsembleParams.from_table(table), rng)
    x = parse_mask(xmask, n) if xmask else tuple(int(b) for b in rng.integers(0, 2, n))
    y = tuple(int(b) for b in rng.integers(0, 2, n))
    return {"residual": hiding_identity_residual(g, x, y, tau), "x_zero": not any(x)}

class HidingCheckNode(GeoBaseNode):
    NAME = "hiding-check"
    CATEGORY = f"GEOLOCAL/{GEO_CATEGORY}"
    SORT = 40
    DESCRIPTION = """
Max residual of the Z-string hiding identity over random (g, x, y), plus a sign-symmetry check of the ensemble under conjugation.
"""

    @classmethod
    def INPUT_TYPES(cls) -> dict:
        d = super().INPUT_TYPES()
        return deep_merge(d, {
            "optional": {
                Lexicon.LATTICE: ("STRING", {"default": "1x3"}),
                Lexicon.TRIALS: ("INT", {"default": 500, "min": 1}),
                Lexicon.TAU: ("FLOAT", {"default": 1., "min": 0.}),
                Lexicon.XMASK: ("STRING", {"default": ""}),
                Lexicon.SAMPLES: ("INT", {"default": 2000, "min": 2}),
            }
        })

    def run(self, **kw) -> Tuple[dict, int]:
        lattice = parse_param(kw, Lexicon.LATTICE, EnumConvertType.LATTICE, "1x3")
        trials = parse_param(kw, Lexicon.TRIALS, EnumConvertType.INT, 500, 1)
        tau = parse_param(kw, Lexicon.TAU, EnumConvertType.FLOAT, 1.)
        xmask = parse_param(kw, Lexicon.XMASK, EnumConvertType.STRING, "")
        samples = parse_param(kw, Lexicon.SAMPLES, EnumConvertType.INT, 2000, 2)
        seed = parse_param(kw, Lexicon.SEED, EnumConvertType.INT, 0)
        jobs = parse_param(kw, Lexicon.JOBS, EnumConvertType.INT, 1, 1)

        table = build_term_table(lattice)
        if xmask:
            parse_mask(xmask, table.n)
        if not tau > 0:
            raise DomainException(f"tau must be positive, got {tau}")

        if jobs > 1:
            with ThreadPoolExecutor(max_workers=jobs) as pool:
                rows = list(pool.map(lambda i: hiding_triple(seed, i, table, tau, xmask), range(trials)))
        else:
            rows = [hiding_triple(seed, i, table, tau, xmask) for i in range(trials)]
        residuals = np.array([r["residual"] for r in rows])
        zero = [r["residual"] for r in rows if r["x_zero"]]

        # D is an even statistic of the ensemble; its mean must not see the sign flips
        rng = derive_stream(seed, "hiding", "symmetry")
        ensemble = EnsembleParams.from_table(table)
        mask = tuple(int(b) for b in rng.integers(0, 2, table.n))
        zeros = (0,) * table.n
        raw, flipped = [], []
        for _ in range(samples):
            g = sample_coeffs(ensemble, rng)
            raw.append(transition_probability(g, tau, zeros))
            flipped.append(transition_probability(conjugate_coeffs(sample_coeffs(ensemble, rng), mask), tau, zeros))
        raw, flipped = np.array(raw), np.array(flipped)
        sigma = math.sqrt(raw.var(ddof=1) / samples + flipped.var(ddof=1) / samples)
        z = float((raw.mean() - flipped.mean()) / sigma) if sigma > 0 else 0.

        worst = float(residuals.max())
        report = {
            "lattice": str(lattice),
            "n": table.n,
            "trials": trials,
            "tau": tau,
            "max_residual": worst,
            "mean_residual": float(residuals.mean()),
            "tolerance": HIDING_TOL,
            "x_zero_trials": len(zero),
            "x_zero_max_residual": max(zero, default=None),
            "symmetry": {
                "mask": ''.join(map(str, mask)),
                "samples": samples,
                "mean_raw": float(raw.mean()),
                "mean_conjugated": float(flipped.mean()),
                "z": z,
                "within_3sigma": abs(z) <= 3.
            }
        }
        ok = worst <= HIDING_TOL
        logger.info(f"hiding-check {lattice}: max residual {worst:.3e}, symmetry z={z:.2f}")
        return report, 0 if ok else 1

class StatsNode(GeoBaseNode):
    NAME = "stats"
    CATEGORY = f"GEOLOCAL/{GEO_CATEGORY}"
    SORT = 50
    DESCRIPTION = """
Monte-Carlo moments of the radial sampler and goodness-of-fit of both marginals against their exact laws.
"""

    @classmethod
    def INPUT_TYPES(cls) -> dict:
        d = super().INPUT_TYPES()
        return deep_merge(d, {
            "optional": {
                Lexicon.L: ("INT", {"default": 100, "min": 4}),
                Lexicon.SAMPLES: ("INT", {"default": 100000, "min": 100}),
                Lexicon.BINS: ("INT", {"default": 50, "min": 2}),
            }
        })

    def run(self, **kw) -> Tuple[dict, int]:
        l = parse_param(kw, Lexicon.L, EnumConvertType.INT, 100, 4)
        samples = parse_param(kw, Lexicon.SAMPLES, EnumConvertType.INT, 100000, 100)
        bins = parse_param(kw, Lexicon.BINS, EnumConvertType.INT, 50, 2)
        seed = parse_param(kw, Lexicon.SEED, EnumConvertType.INT, 0)

        report = stats_report(EnsembleParams(l), derive_stream(seed, "stats"), samples, bins)
        expected = report["expected"]
        checks = {}
        for key, tol in STATS_TOL.items():
            rel = abs(report[key] - expected[key]) / expected[key]
            checks[key] = {"relative_error": rel, "tolerance": tol, "ok": rel <= tol}
        checks["chi2_angle"] = {"pvalue": report["chi2_pvalue"], "floor": STATS_PVALUE,
                                "ok": report["chi2_pvalue"] > STATS_PVALUE}
        report["checks"] = checks
        ok = all(c["ok"] for c in checks.values())
        return report, 0 if ok else 1
