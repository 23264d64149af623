"""Grid solver for one proximal step of the TV gradient flow in Wasserstein space."""

from .balls import BallParams, ball_energy, optimal_radius, w2_concentric_balls
from .diagnostics import (ELReport, assemble_el, beta_rof_crosscheck,
                          estimate_radius, levelset_check)
from .dither import floyd_steinberg
from .exact_ot import w2_exact_oracle
from .grid import Density, Grid, barycenter, make_grid, mass, rasterize_ball, second_moment
from .pgm import read_pgm, write_pgm
from .splitting import DRConfig, RunHistory, halpern_beta, solve_tvw
from .transport import (EntropicConfig, PotentialPair, extract_kantorovich,
                        prox_w2, w2_entropic)
from .tv import DualField, ProxCertificate, prox_tv_field, rof_nonneg, tv_value

__all__ = [
    "BallParams", "ball_energy", "optimal_radius", "w2_concentric_balls",
    "ELReport", "assemble_el", "beta_rof_crosscheck", "estimate_radius",
    "levelset_check", "floyd_steinberg", "w2_exact_oracle",
    "Density", "Grid", "barycenter", "make_grid", "mass", "rasterize_ball",
    "second_moment", "read_pgm", "write_pgm",
    "DRConfig", "RunHistory", "halpern_beta", "solve_tvw",
    "EntropicConfig", "PotentialPair", "extract_kantorovich", "prox_w2",
    "w2_entropic", "DualField", "ProxCertificate", "prox_tv_field",
    "rof_nonneg", "tv_value",
]

__version__ = "0.1.0"
