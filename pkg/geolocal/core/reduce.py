"""
Geolocal - reduce
End-to-end reduction on a worst-case Ising instance
"""

from typing import Tuple

from loguru import logger

from .. import Lexicon, GeoBaseNode, deep_merge

from ..sup.util import EnumConvertType, parse_param
from ..sup.lattice import build_term_table
from ..sup.hamiltonian import WorstCaseSpec, worst_case_coeffs
from ..sup.interp import EnumLayout
from ..sup.oracle import AverageCaseOracle, EnumCorruption, OracleConfig, write_trace_csv
from ..sup.pipeline import ReductionParams, StageFailureException, audit_corruptions, \
    worst_to_average_reduce

# ==============================================================================

GEO_CATEGORY = "REDUCE"

class ReduceNode(GeoBaseNode):
    NAME = "reduce"
    CATEGORY = f"GEOLOCAL/{GEO_CATEGORY}"
    SORT = 30
    DESCRIPTION = """
Estimate the output probability of a worst-case Ising evolution using only oracle calls on ensemble-typical points. The report carries every stage and the certified error ledger; a failed stage still writes the report and exits with 3.
"""

    @classmethod
    def INPUT_TYPES(cls) -> dict:
        d = super().INPUT_TYPES()
        return deep_merge(d, {
            "optional": {
                Lexicon.LATTICE: ("STRING", {"default": "1x2"}),
                Lexicon.SUBSET: ("STRING", {"default": "10"}),
                Lexicon.COUPLING: ("FLOAT", {"default": 1.}),
                Lexicon.FIELD: ("FLOAT", {"default": 1.}),
                Lexicon.TAU: ("FLOAT", {"default": 1., "min": 0.}),
                Lexicon.M: ("INT", {"default": 16, "min": 0}),
                Lexicon.M_R: ("INT", {"default": 1000, "min": 1}),
                Lexicon.M_C: ("INT", {"default": 400, "min": 1}),
                Lexicon.B_RADIAL: ("INT", {"default": 0, "min": 0}),
                Lexicon.B_CIRC: ("INT", {"default": 0, "min": 0}),
                Lexicon.K_RADIAL: ("FLOAT", {"default": 0.11, "min": 0., "max": 0.5}),
                Lexicon.K_CIRC: ("FLOAT", {"default": 0.25, "min": 0., "max": 0.5}),
                Lexicon.LAYOUT: (EnumLayout._member_names_, {"default": EnumLayout.MASS.name}),
                Lexicon.EPSILON_A: ("FLOAT", {"default": 0., "min": 0.}),
                Lexicon.CORRUPT: ("FLOAT", {"default": 0., "min": 0., "max": 1.}),
                Lexicon.CORRUPTION: (EnumCorruption._member_names_[:2], {"default": EnumCorruption.OFFSET.name}),
                Lexicon.NO_EXTRAPOLATION: ("BOOLEAN", {"default": False}),
                Lexicon.TRUTH: ("BOOLEAN", {"default": False}),
                Lexicon.TRACE: ("STRING", {"default": ""}),
            }
        })

    def run(self, **kw) -> Tuple[dict, int]:
        lattice = parse_param(kw, Lexicon.LATTICE, EnumConvertType.LATTICE, "1x2")
        subset = parse_param(kw, Lexicon.SUBSET, EnumConvertType.MASK, "10")
        coupling = parse_param(kw, Lexicon.COUPLING, EnumConvertType.FLOAT, 1.)
        field = parse_param(kw, Lexicon.FIELD, EnumConvertType.FLOAT, 1.)
        tau = parse_param(kw, Lexicon.TAU, EnumConvertType.FLOAT, 1.)
        seed = parse_param(kw, Lexicon.SEED, EnumConvertType.INT, 0)
        truth = parse_param(kw, Lexicon.TRUTH, EnumConvertType.BOOLEAN, False)
        flat = parse_param(kw, Lexicon.NO_EXTRAPOLATION, EnumConvertType.BOOLEAN, False)
        trace = parse_param(kw, Lexicon.TRACE, EnumConvertType.PATH, "")

        table = build_term_table(lattice)
        g_worst = worst_case_coeffs(WorstCaseSpec.uniform(table, subset, coupling, field, tau), table)
        if flat and g_worst.norm > 0:
            g_worst = g_worst.scaled(1. / g_worst.norm)

        params = ReductionParams(
            m=parse_param(kw, Lexicon.M, EnumConvertType.INT, 16, 0),
            M_r=parse_param(kw, Lexicon.M_R, EnumConvertType.INT, 1000, 1),
            M_C=parse_param(kw, Lexicon.M_C, EnumConvertType.INT, 400, 1),
            B_radial=parse_param(kw, Lexicon.B_RADIAL, EnumConvertType.INT, 0, 0),
            B_circ=parse_param(kw, Lexicon.B_CIRC, EnumConvertType.INT, 0, 0),
            k_radial=parse_param(kw, Lexicon.K_RADIAL, EnumConvertType.FLOAT, 0.11, 0.),
            k_circ=parse_param(kw, Lexicon.K_CIRC, EnumConvertType.FLOAT, 0.25, 0.),
            layout=parse_param(kw, Lexicon.LAYOUT, EnumLayout, EnumLayout.MASS.name),
            tau=tau,
            jobs=parse_param(kw, Lexicon.JOBS, EnumConvertType.INT, 1, 1),
            seed=seed
        )
        oracle = AverageCaseOracle(OracleConfig(
            epsilon_a=parse_param(kw, Lexicon.EPSILON_A, EnumConvertType.FLOAT, 0., 0.),
            delta_corrupt=parse_param(kw, Lexicon.CORRUPT, EnumConvertType.FLOAT, 0., 0.),
            corruption=parse_param(kw, Lexicon.CORRUPTION, EnumCorruption, EnumCorruption.OFFSET.name),
            seed=seed,
            tau=tau
        ))

        code = 0
        try:
            report = worst_to_average_reduce(oracle, g_worst, params, truth)
        except StageFailureException as e:
            logger.error(f"{e} :: {e.stage}")
            report, code = e.report, 3

        body = report.to_json()
        body.update({"lattice": str(lattice), "subset": ''.join(map(str, subset)),
                     "no_extrapolation": flat, "oracle": oracle.config.to_json()})
        if truth and code == 0:
            audit = audit_corruptions(report, oracle)
            body["audit"] = audit
            body["within_certified"] = bool(report.error <= report.certified_bound)
            if not body["within_certified"]:
                logger.error(f"error {report.error:.3e} exceeds certified bound {report.certified_bound:.3e}")
                code = 1
        if trace is not None:
            write_trace_csv(oracle, trace)
        return body, code
