"""Fixed-point and Krylov acceleration: extrapolation, Anderson, TGCR and friends."""

from .anderson import AAConfig, aa_solve, aa_tgs_solve
from .errors import AccelError
from .extrapolation import EpsilonTable, aitken_sequence, mmpe, mpe, restarted_rre_solve, rre
from .linear import cg_solve, chebyshev_solve, richardson_solve, stationary_chebyshev_solve, tgcr_solve
from .newton import broyden_solve, inexact_newton_solve
from .nltgcr import NLTGCRConfig, nltgcr_solve
from .trace import ConvergenceTrace, StoppingRule

__all__ = [
    "AAConfig",
    "AccelError",
    "ConvergenceTrace",
    "EpsilonTable",
    "NLTGCRConfig",
    "StoppingRule",
    "aa_solve",
    "aa_tgs_solve",
    "aitken_sequence",
    "broyden_solve",
    "cg_solve",
    "chebyshev_solve",
    "inexact_newton_solve",
    "mmpe",
    "mpe",
    "nltgcr_solve",
    "restarted_rre_solve",
    "richardson_solve",
    "rre",
    "stationary_chebyshev_solve",
    "tgcr_solve",
]
