"""Entropic optimal transport on grids and the Wasserstein proximal step.

All solves run in the log domain with the separable structure of the
squared-Euclidean Gibbs kernel: a full kernel application is two 1-D
log-sum-exp passes, O(n^3) instead of O(n^4).  Potentials are annealed
from a large entropic level down to the target one with warm starts.

The quadratic-fidelity prox replaces the fixed second marginal by a
per-cell scalar solve: the optimality condition for cell j is

    eps * log(m / s) + 2 w (m - rho_bar_j) = 0,   w = tau / lambda,

whose unique positive root is found by a safeguarded Newton iteration in
log space.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .grid import Density, Grid

_NEG = -1.0e30  # stand-in for log(0) that stays finite in lse passes

try:
    from numba import njit, prange

    @njit(parallel=True, cache=True)
    def _lse_pass(M, D):
        # out[a, i] = logsumexp_j (M[a, j] - D[i, j])
        na, nj = M.shape
        ni = D.shape[0]
        out = np.empty((na, ni))
        for a in prange(na):
            for i in range(ni):
                mx = -np.inf
                for j in range(nj):
                    v = M[a, j] - D[i, j]
                    if v > mx:
                        mx = v
                s = 0.0
                for j in range(nj):
                    v = M[a, j] - D[i, j] - mx
                    # terms this far below the peak are lost to rounding
                    if v > -45.0:
                        s += np.exp(v)
                out[a, i] = mx + np.log(s)
        return out

except ImportError:  # pragma: no cover - exercised only without numba

    def _lse_pass(M, D):
        A = M[:, None, :] - D[None, :, :]
        mx = A.max(axis=2)
        return mx + np.log(np.exp(A - mx[:, :, None]).sum(axis=2))


@dataclass
class EntropicConfig:
    """Annealing schedule and tolerances for the scaling iterations.

    Entropic levels are in units of squared length.
    """

    eps_start: float
    eps_final: float
    anneal_factor: float = 0.5
    marginal_tol: float = 1e-9
    inner_max_iter: int = 5000
    # log-domain overrelaxation of the scaling updates; values toward 2
    # cut the iteration count severalfold at small entropic levels.  Any
    # level that fails to converge is retried without overrelaxation.
    overrelax: float = 1.7

    def __post_init__(self):
        if not (0.0 < self.anneal_factor < 1.0):
            raise ValueError(f"anneal_factor must be in (0,1), got {self.anneal_factor}")
        if self.eps_final > self.eps_start:
            raise ValueError("eps_final must not exceed eps_start")
        if self.marginal_tol <= 0.0 or self.inner_max_iter <= 0:
            raise ValueError("tolerances must be positive")
        if not (1.0 <= self.overrelax < 2.0):
            raise ValueError(f"overrelax must be in [1,2), got {self.overrelax}")

    @classmethod
    def for_grid(cls, grid, eps_start_scale=0.1, eps_final_scale=1e-4,
                 min_blur_cells=0.0, **kw):
        """Schedule scaled to the grid diameter.

        With ``min_blur_cells > 0`` the final level is floored at
        ``(min_blur_cells * h)^2``: blur below one cell buys no extra
        resolution but makes the scaling iterations dramatically slower
        and, on singular marginals, unreliable.  The floor also biases
        sharp densities by roughly that blur width, so it stays off by
        default and is meant for speed-critical runs on smooth data.
        """
        d2 = grid.diameter_sq()
        eps_final = max(eps_final_scale * d2, (min_blur_cells * grid.h) ** 2)
        eps_start = max(eps_start_scale * d2, eps_final)
        return cls(eps_start=eps_start, eps_final=eps_final, **kw)

    def levels(self):
        out = []
        e = self.eps_start
        while e > self.eps_final * (1.0 + 1e-12):
            out.append(e)
            e *= self.anneal_factor
        out.append(self.eps_final)
        return out


@dataclass
class PotentialPair:
    """Kantorovich potentials for the squared-distance cost.

    ``phi`` lives on the first marginal, ``psi`` on the second; both are
    in cost units (phi = eps * log a up to masked cells).  The scaling
    vectors are recovered on demand and clipped to stay representable.
    """

    grid: Grid
    phi: np.ndarray = field(repr=False)
    psi: np.ndarray = field(repr=False)
    eps: float = 0.0

    @property
    def a(self):
        return np.exp(np.clip(self.phi / self.eps, -700.0, 700.0))

    @property
    def b(self):
        return np.exp(np.clip(self.psi / self.eps, -700.0, 700.0))


@dataclass
class TransportResult:
    w2_squared: float
    potentials: PotentialPair
    marginal_residuals: tuple
    iterations: int


@dataclass
class ProxW2Result:
    rho: Density
    potentials: PotentialPair
    marginal_residuals: tuple
    iterations: int
    converged: bool


class _GridKernel:
    """Separable squared-distance cost on a grid, cached per instance.

    Each 1-D log-sum-exp pass runs as a shifted matmul against the Gibbs
    factors with a per-row shift.  An output entry can only lose accuracy
    when its whole shifted sum sinks below ~1e-280 (far-field cells); the
    few such entries are recomputed exactly in the log domain, so the
    result matches the plain scan to full precision at every entropic
    level.
    """

    # shifted sums at or below this are rebuilt exactly; above it the
    # clipped far-field terms contribute at most ~1e-27 relative error
    _REPAIR_FLOOR = 1e-280

    def __init__(self, grid):
        self.grid = grid
        xs = grid.xs()
        ys = grid.ys()
        self.dx2 = (xs[:, None] - xs[None, :]) ** 2
        self.dy2 = (ys[:, None] - ys[None, :]) ** 2
        self._gibbs_eps = None
        self._gibbs = None
        self._scaled_eps = None
        self._scaled = None

    def _gibbs_factors(self, eps):
        if self._gibbs_eps != eps:
            kx = np.exp(-self.dx2 / eps)
            ky = np.exp(-self.dy2 / eps)
            # flush anything below exp(-700) to an exact zero: subnormal
            # entries make the matmuls an order of magnitude slower and
            # contribute nothing above the repair floor
            kx[self.dx2 > 700.0 * eps] = 0.0
            ky[self.dy2 > 700.0 * eps] = 0.0
            self._gibbs = (kx, ky)
            self._gibbs_eps = eps
        return self._gibbs

    def _scaled_costs(self, eps):
        if self._scaled_eps != eps:
            self._scaled = (self.dx2 / eps, self.dy2 / eps)
            self._scaled_eps = eps
        return self._scaled

    def _pass(self, M, d2e, k):
        """out[a, i] = logsumexp_j (M[a, j] - d2e[i, j])."""
        rowmax = np.where(M > -1e20, M, -np.inf).max(axis=1)
        ok = np.isfinite(rowmax)
        shift = np.where(ok, rowmax, 0.0)
        V = M - shift[:, None]
        A = np.exp(np.maximum(V, -700.0))
        # flush to exact zeros: subnormals would slow the matmul ~10x and
        # sit far below the repair floor anyway
        A[V < -700.0] = 0.0
        if not ok.all():
            A[~ok, :] = 0.0
        T = A @ k.T
        out = np.log(np.maximum(T, 1e-300)) + shift[:, None]
        bad = T <= self._REPAIR_FLOOR
        if not ok.all():
            out[~ok, :] = _NEG
            bad &= ok[:, None]
        n_bad = int(bad.sum())
        if n_bad > T.size // 4:
            # mostly-underflowed output: the dense scan is cheaper than
            # batched repairs
            return _lse_pass(np.ascontiguousarray(M), d2e)
        if n_bad:
            ab = np.argwhere(bad)
            v = M[ab[:, 0]] - d2e[ab[:, 1]]
            m = v.max(axis=1)
            s = np.exp(np.maximum(v - m[:, None], -700.0)).sum(axis=1)
            out[bad] = m + np.log(s)
        return out

    def lse_apply(self, pot, eps):
        """logsumexp_j (pot_j - C_ij) / eps over the full grid, any i."""
        p = pot / eps
        kx, ky = self._gibbs_factors(eps)
        dx2e, dy2e = self._scaled_costs(eps)
        t = self._pass(p, dx2e, kx)
        out = self._pass(np.ascontiguousarray(t.T), dy2e, ky)
        return out.T


def _log_masses(m):
    out = np.full(m.shape, _NEG)
    pos = m > 0.0
    out[pos] = np.log(m[pos])
    return out


def _masked_dot(pot, m):
    return float(np.where(m > 0.0, pot * m, 0.0).sum())


def w2_entropic(mu, nu, cfg, warm=None):
    """Squared 2-Wasserstein distance between two grid densities.

    Sinkhorn scaling with annealed entropic level.  The dual objective
    ``<phi, mu> + <psi, nu>`` carries an O(eps) bias, so the reported
    value is its Richardson extrapolation from the final level and twice
    the final level, which cancels the leading bias term.  The returned
    potentials belong to ``cfg.eps_final``.
    """
    if mu.grid != nu.grid:
        raise ValueError("marginals must live on the same grid")
    grid = mu.grid
    h2 = grid.cell_area
    a = mu.values * h2
    b = nu.values * h2
    if abs(a.sum() - b.sum()) > 1e-9 * max(a.sum(), 1.0):
        raise ValueError(f"mass mismatch: {a.sum()} vs {b.sum()}")
    kern = _GridKernel(grid)
    log_a = _log_masses(a)
    log_b = _log_masses(b)
    if warm is not None:
        f, g = warm[0].copy(), warm[1].copy()
        schedule = [cfg.eps_final]
    else:
        f = np.zeros(grid.shape)
        g = np.zeros(grid.shape)
        schedule = cfg.levels()
    total = a.sum()
    state = {"iters": 0, "res": np.inf}

    def run_level(eps, tol):
        nonlocal f, g
        thetas = (cfg.overrelax, 1.0) if cfg.overrelax > 1.0 else (1.0,)
        for theta in thetas:
            f_in, g_in = f.copy(), g.copy()
            first = True
            for _ in range(cfg.inner_max_iter):
                state["iters"] += 1
                f_new = eps * (log_a - kern.lse_apply(g, eps))
                f = f_new if first else theta * f_new + (1.0 - theta) * f
                S = kern.lse_apply(f, eps)
                col = np.exp(np.clip(g / eps + S, -745.0, 700.0))
                state["res"] = float(np.abs(col - b).sum())
                if state["res"] <= tol:
                    return True
                g_new = eps * (log_b - S)
                g = g_new if first else theta * g_new + (1.0 - theta) * g
                first = False
            if theta == 1.0:
                break
            f, g = f_in, g_in
        return False

    final_tol = cfg.marginal_tol
    for eps in schedule:
        tol = final_tol if eps == schedule[-1] else max(final_tol, 1e-4 * total)
        done = run_level(eps, tol)
        if not done and eps == schedule[-1]:
            raise RuntimeError(
                f"sinkhorn did not reach marginal tol {tol:.2e} at eps={eps:.3e} "
                f"(residual {state['res']:.2e})"
            )
    v1 = _masked_dot(f, a) + _masked_dot(g, b)
    pot = PotentialPair(grid=grid, phi=f.copy(), psi=g.copy(),
                        eps=schedule[-1])
    res1 = state["res"]
    eps2 = 2.0 * schedule[-1]
    if not run_level(eps2, final_tol):
        raise RuntimeError(
            f"sinkhorn did not reach marginal tol {final_tol:.2e} at "
            f"eps={eps2:.3e} (residual {state['res']:.2e})"
        )
    v2 = _masked_dot(f, a) + _masked_dot(g, b)
    value = 2.0 * v1 - v2
    return TransportResult(w2_squared=value, potentials=pot,
                           marginal_residuals=(0.0, res1),
                           iterations=state["iters"])


def marginal_scalar_solve(s, rho_bar_j, w, eps):
    """Unique positive root of ``eps*log(m/s) + 2w*(m - rho_bar_j)``.

    Vectorized over numpy arrays; scalars in give scalars out.
    """
    s_arr = np.asarray(s, dtype=float)
    if np.any(s_arr <= 0.0):
        raise ValueError("s must be strictly positive")
    t = _scalar_solve_log(np.log(s_arr), np.asarray(rho_bar_j, dtype=float), w, eps)
    m = np.exp(t)
    if np.isscalar(s) or s_arr.ndim == 0:
        return float(m)
    return m


def _scalar_solve_log(log_s, rho_bar, w, eps):
    """Solve ``eps*(t - log_s) + 2w*(exp(t) - rho_bar) = 0`` for t = log m.

    The left-hand side is strictly increasing in t, so the root is
    bracketed first and then located by Newton steps that fall back to
    bisection whenever they leave the bracket.  Everything is vectorized;
    plain Newton would crawl through the exponential regime one unit of t
    per step when the starting point overshoots far to the right.
    """
    two_w = 2.0 * w
    ls, rb = np.broadcast_arrays(np.asarray(log_s, dtype=float),
                                 np.asarray(rho_bar, dtype=float))

    def phi_of(t):
        et = np.exp(np.minimum(t, 700.0))
        return eps * (t - ls) + two_w * (et - rb), et

    log_rb = np.log(np.maximum(rb, 1e-300))
    # phi(hi) >= 0: at max(log_s, log rb) either the linear part or the
    # exponential part is already nonnegative
    hi = np.minimum(np.maximum(ls, log_rb), 700.0)
    # sharper bound: with D = |ls| + 745 the point log(rb_+ + eps D / 2w)
    # satisfies phi >= eps (t - ls + D) >= 0, and it sits within a
    # logarithm of the root, keeping Newton out of the regime where each
    # step retreats by only one unit of t
    D = np.abs(ls) + 745.0
    hi = np.minimum(hi, np.log(np.maximum(rb, 0.0) + eps * D / two_w))
    # phi(lo) <= 0 near the smaller of the two single-regime roots; the
    # doubling expansion covers the slack the exponential term adds
    lo = np.minimum(np.where(rb > 0.0, log_rb, ls),
                    ls + two_w * np.minimum(rb, 0.0) / eps)
    lo = np.minimum(lo, hi)
    p_lo, _ = phi_of(lo)
    width = 64.0
    for _ in range(64):
        need = p_lo > 0.0
        if not need.any():
            break
        lo = np.where(need, np.minimum(lo, hi) - width, lo)
        width *= 2.0
        p_lo, _ = phi_of(lo)
    t0 = np.where(rb > 0.0, log_rb, ls + two_w * rb / eps)
    t = np.where((t0 >= lo) & (t0 <= hi), t0, 0.5 * (lo + hi))
    for _ in range(200):
        phi, et = phi_of(t)
        scale = eps * (1.0 + np.abs(t - ls)) + two_w * (np.abs(rb) + et)
        ok = (np.abs(phi) <= 1e-12 * scale) | (hi - lo <= 1e-12 * (1.0 + np.abs(t)))
        if ok.all():
            break
        lo = np.where(phi < 0.0, t, lo)
        hi = np.where(phi > 0.0, t, hi)
        t_new = t - phi / (eps + two_w * et)
        outside = (t_new <= lo) | (t_new >= hi)
        t = np.where(ok, t, np.where(outside, 0.5 * (lo + hi), t_new))
    return t


def prox_w2(rho_bar, lam, tau, rho0, cfg, warm=None, tol=None):
    """JKO-type proximal step with quadratic fidelity.

    Approximately minimizes ``W2^2(rho0, .) / (2 tau) + ||. - rho_bar||^2
    / (2 lam)`` over nonnegative fields.  The first marginal is enforced
    by scaling, the second by per-cell scalar solves.  ``rho_bar`` may be
    signed (it is a splitting iterate, not a density).

    Returns a :class:`ProxW2Result`; ``rho`` carries exactly the mass of
    ``rho0`` because it is read off as the column marginal of a plan with
    exact row marginals.
    """
    if lam <= 0.0 or tau <= 0.0:
        raise ValueError("lam and tau must be positive")
    grid = rho0.grid
    rho_bar = np.asarray(rho_bar, dtype=float)
    if rho_bar.shape != grid.shape:
        raise ValueError("rho_bar shape does not match the grid")
    h2 = grid.cell_area
    log_h2 = np.log(h2)
    a = rho0.values * h2
    log_a = _log_masses(a)
    w = tau / lam
    two_w = 2.0 * w
    kern = _GridKernel(grid)
    if tol is None:
        tol = cfg.marginal_tol
    if warm is not None:
        f, g = warm[0].copy(), warm[1].copy()
        schedule = [cfg.eps_final]
    else:
        f = np.zeros(grid.shape)
        g = np.zeros(grid.shape)
        schedule = cfg.levels()
    nu = None
    col = None
    res = np.inf
    iters = 0
    converged = False
    for eps in schedule:
        level_tol = tol if eps == schedule[-1] else max(tol, 1e-4 * a.sum())
        thetas = (cfg.overrelax, 1.0) if cfg.overrelax > 1.0 else (1.0,)
        level_done = False
        for theta in thetas:
            f_in, g_in = f.copy(), g.copy()
            nu_in = None if nu is None else nu.copy()
            first = True
            for _ in range(cfg.inner_max_iter):
                iters += 1
                f_new = eps * (log_a - kern.lse_apply(g, eps))
                f = f_new if first else theta * f_new + (1.0 - theta) * f
                S = kern.lse_apply(f, eps)
                col = np.exp(np.clip(g / eps + S, -745.0, 700.0))
                if nu is not None:
                    # marginal consistency plus the optimality condition
                    # g = -2w (rho - rho_bar), both in mass units: the
                    # marginal part alone goes blind when the iteration
                    # stalls, because each g update restores it exactly
                    opt = np.abs(g + two_w * (col / h2 - rho_bar))
                    res = float(np.abs(col - nu).sum()
                                + opt.sum() * h2 / two_w)
                    if res <= level_tol:
                        level_done = True
                        break
                # optimality of the quadratic marginal penalty, cell by cell
                t = _scalar_solve_log(S - log_h2, rho_bar, w, eps)
                nu = np.exp(np.clip(t + log_h2, -745.0, 700.0))
                g_new = eps * (t + log_h2 - S)
                g = g_new if first else theta * g_new + (1.0 - theta) * g
                first = False
            if level_done or theta == 1.0:
                break
            f, g, nu = f_in, g_in, nu_in
        if level_done and eps == schedule[-1]:
            converged = True
            break
    # one plain row-scaling step: overrelaxed f leaves the row marginals
    # slightly inexact, and the output mass is read off the columns of a
    # plan whose rows must match rho0 exactly
    eps = schedule[-1]
    f = eps * (log_a - kern.lse_apply(g, eps))
    S = kern.lse_apply(f, eps)
    col = np.exp(np.clip(g / eps + S, -745.0, 700.0))
    if nu is not None:
        res = float(np.abs(col - nu).sum())
    if np.any(~np.isfinite(col)):
        raise RuntimeError("prox_w2 produced non-finite marginals")
    # the column marginal of a plan with exact rows carries the exact mass
    rho = Density(grid, col / h2)
    pot = PotentialPair(grid=grid, phi=f, psi=g, eps=schedule[-1])
    return ProxW2Result(rho=rho, potentials=pot,
                        marginal_residuals=(0.0, res),
                        iterations=iters, converged=converged)


def extract_kantorovich(potentials, tau):
    """Second-marginal potential scaled as it enters the optimality system.

    The stored ``psi`` is the dual potential of the full squared-distance
    cost; the half-cost potential divided by ``tau`` is what multiplies
    the transport term's first variation.  The additive constant is left
    uncalibrated here.
    """
    return potentials.psi / (2.0 * tau)
