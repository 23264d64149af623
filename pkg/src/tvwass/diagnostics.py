"""Stationarity diagnostics for a computed proximal step.

With a solution density rho1, a TV dual field z (convention
``u = g + lam * div z``, so ``-div z`` is the subgradient direction) and
a transport potential, the multiplier field is

    beta = psi_cal / tau - div z,

where the additive constant of the potential is calibrated by least
squares so that beta vanishes on the high-density region.  The report
collects the residuals of every line of the stationarity system:
nonnegativity of beta, complementarity with rho1, the dual-field norm
bound and the pairing between -div z and rho1.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .grid import Density, barycenter, mass, second_moment
from .tv import forward_diff, l2_norm, prox_tv_field, tv_value


@dataclass
class ELReport:
    beta: np.ndarray = field(repr=False)
    psi_cal: np.ndarray = field(repr=False)
    calibration_constant: float = 0.0
    r_pde: float = 0.0
    r_compl: float = 0.0
    r_nonneg: float = 0.0
    r_zbound: float = 0.0
    r_pairing: float = 0.0
    rof_discrepancy: float | None = None

    def as_dict(self):
        out = {
            "calibration_constant": self.calibration_constant,
            "r_pde": self.r_pde,
            "r_compl": self.r_compl,
            "r_nonneg": self.r_nonneg,
            "r_zbound": self.r_zbound,
            "r_pairing": self.r_pairing,
            "beta_max": float(np.abs(self.beta).max()),
        }
        if self.rof_discrepancy is not None:
            out["rof_discrepancy"] = self.rof_discrepancy
        return out


def assemble_el(rho1, z, psi, tau, support_threshold=0.1):
    """Build the multiplier field and all stationarity residuals.

    ``psi`` is the raw half-cost transport potential (additive constant
    arbitrary); the calibration constant is chosen by least squares so
    the multiplier vanishes on ``{rho1 > support_threshold * max}``.
    """
    grid = rho1.grid
    h = grid.h
    divz = z.div()
    raw = psi / tau - divz
    support = rho1.values > support_threshold * rho1.values.max()
    if not support.any():
        raise ValueError("empty support set, cannot calibrate the potential")
    c_over_tau = -float(raw[support].mean())
    beta = raw + c_over_tau
    psi_cal = psi + c_over_tau * tau
    r_pde = l2_norm(psi_cal / tau - divz - beta, h)
    r_compl = abs(float((beta * rho1.values).sum() * grid.cell_area))
    r_nonneg = float(np.abs(np.minimum(beta, 0.0)).max())
    r_zbound = max(0.0, z.max_norm() - 1.0)
    r_pairing = abs(-(divz * rho1.values).sum() * grid.cell_area
                    - tv_value(rho1.values, h))
    return ELReport(beta=beta, psi_cal=psi_cal,
                    calibration_constant=c_over_tau * tau,
                    r_pde=r_pde, r_compl=r_compl, r_nonneg=r_nonneg,
                    r_zbound=r_zbound, r_pairing=r_pairing)


def beta_rof_crosscheck(psi_cal, grid, tau, beta, tol=1e-10, max_iter=40000):
    """Relative distance between the multiplier and a fresh ROF solve.

    The multiplier should solve the quadratic-fidelity TV problem with
    unit weight and data ``psi_cal / tau``; no nonnegativity is imposed.
    The distance is measured relative to the larger of the field norms,
    floored at the data norm so the ratio stays meaningful when both
    fields are near zero.
    """
    g = psi_cal / tau
    cert = prox_tv_field(g, grid, 1.0, tol=tol, max_iter=max_iter)
    h = grid.h
    num = l2_norm(cert.u - beta, h)
    den = max(l2_norm(beta, h), l2_norm(cert.u, h), l2_norm(g, h))
    if den == 0.0:
        return 0.0
    return num / den


def _l1_perimeter(mask, h):
    """Boundary edge count times h; exact for pixel sets."""
    gx, gy = forward_diff(mask.astype(float))
    return float((np.abs(gx) + np.abs(gy)).sum() * h)


def _set_energy(mask, psi_over_tau, h):
    return _l1_perimeter(mask, h) + float(psi_over_tau[mask].sum() * h * h)


@dataclass
class LevelSetReport:
    threshold: float
    energy: float
    n_trials: int
    fraction_stable: float


def levelset_check(rho1, psi_cal, tau, thresholds, trials=200, slack=None, seed=0):
    """Perturbation test of level-set optimality.

    For each threshold the super-level set of rho1 competes against
    single-cell flips near its boundary and one-cell morphological
    dilation/erosion, in perimeter plus potential energy.  Reports the
    fraction of perturbations that do not improve beyond ``slack``
    (default ``h * max|psi_cal / tau|``).
    """
    grid = rho1.grid
    h = grid.h
    pot = psi_cal / tau
    if slack is None:
        slack = h * float(np.abs(pot).max())
    rng = np.random.default_rng(seed)
    reports = []
    for s in thresholds:
        mask = rho1.values > s
        if not mask.any():
            raise ValueError(f"empty level set at threshold {s}")
        base = _set_energy(mask, pot, h)
        ring = ndimage.binary_dilation(mask) ^ ndimage.binary_erosion(mask)
        candidates = np.argwhere(ring)
        stable = 0
        total = 0
        for _ in range(trials):
            iy, ix = candidates[rng.integers(len(candidates))]
            pert = mask.copy()
            pert[iy, ix] = not pert[iy, ix]
            if pert.any():
                total += 1
                if _set_energy(pert, pot, h) >= base - slack:
                    stable += 1
        for pert in (ndimage.binary_dilation(mask), ndimage.binary_erosion(mask)):
            if pert.any():
                total += 1
                if _set_energy(pert, pot, h) >= base - slack:
                    stable += 1
        reports.append(LevelSetReport(threshold=float(s), energy=base,
                                      n_trials=total,
                                      fraction_stable=stable / total))
    return reports


def estimate_radius(rho):
    """Radius of a near-uniform disk from its second moment.

    Also returns the area-threshold estimate based on the half-maximum
    super-level set.
    """
    if mass(rho) <= 0.0:
        raise ValueError("radius estimate needs positive mass")
    c = barycenter(rho)
    r_moment = float(np.sqrt(2.0 * second_moment(rho, c)))
    area = float((rho.values > 0.5 * rho.values.max()).sum() * rho.grid.cell_area)
    r_area = float(np.sqrt(area / np.pi))
    return r_moment, r_area
