"""Single-pass estimation of the top eigenvector of A^T A from row streams."""

from .block_power import BlockPowerParams, make_params, plan_blocks, run_bounded_norm
from .errors import ContractViolation, NoCandidate, SinglePassError, StreamFormatError
from .heavy_light import HeavyLightParams, HeavyStore, classify_row, heavy_branch_vector, run_heavy_light
from .instances import InstanceSpec, gen_heavy_mixture, gen_lower_bound, gen_oja_hard, gen_planted_gap
from .linalg import SpectralSummary, correlation, exact_top_eigens, gaussian_matrix, gaussian_vector, gram_apply
from .oja import oja_pass, select_by_growth, subsample_then_oja
from .sampling import GaussianSketch, GuessLadder, SamplerConfig, ladder_for, sample_probability, sample_rows
from .stream import RowStream, StreamStats, open_stream, tee

__all__ = [
    "BlockPowerParams", "ContractViolation", "GaussianSketch", "GuessLadder", "HeavyLightParams",
    "HeavyStore", "InstanceSpec", "NoCandidate", "RowStream", "SamplerConfig", "SinglePassError",
    "SpectralSummary", "StreamFormatError", "StreamStats", "classify_row", "correlation",
    "exact_top_eigens", "gaussian_matrix", "gaussian_vector", "gen_heavy_mixture", "gen_lower_bound",
    "gen_oja_hard", "gen_planted_gap", "gram_apply", "heavy_branch_vector", "ladder_for",
    "make_params", "oja_pass", "open_stream", "plan_blocks", "run_bounded_norm", "run_heavy_light",
    "sample_probability", "sample_rows", "select_by_growth", "subsample_then_oja", "tee",
]
