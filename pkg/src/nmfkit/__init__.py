"""nmfkit: nonnegative matrix factorization, separable NMF, exact NMF and
the polytope geometry around them."""
__version__ = "0.1.0"

from .estimators import NMF, NonnegativeRank, SeparableNMF
from .exactnmf import RankPlusEstimate, exact_nmf, rank_plus_estimate, search_exact_nmf
from .geometry import (
    PolytopeH,
    hexagon_matrix,
    hexagon_matrix_inf,
    npp_extract,
    regular_polygon,
    slack_matrix,
    verify_lift,
)
from .hsi import generate_synthetic, score, unmix
from .matcore import numeric_rank, relative_residual, residual
from .nmf import NmfConfig, NmfModel, factorize
from .nnls import NnlsConfig, nnls_fast_gradient
from .separable import SelfDictConfig, SeparableResult, self_dictionary, spa, spa_mve

__all__ = [
    "NMF", "NonnegativeRank", "SeparableNMF", "RankPlusEstimate", "exact_nmf",
    "rank_plus_estimate", "search_exact_nmf", "PolytopeH", "hexagon_matrix",
    "hexagon_matrix_inf", "npp_extract", "regular_polygon", "slack_matrix", "verify_lift",
    "generate_synthetic", "score", "unmix", "numeric_rank", "relative_residual", "residual",
    "NmfConfig", "NmfModel", "factorize", "NnlsConfig", "nnls_fast_gradient",
    "SelfDictConfig", "SeparableResult", "self_dictionary", "spa", "spa_mve",
]
