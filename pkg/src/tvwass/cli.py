"""Command line front end.

Three subcommands:

``denoise``
    Read a square grayscale image, normalize it to a probability
    density on the unit square, run one TV proximal step and write the
    result image, a JSON report with stationarity diagnostics, and a
    CSV iteration history.

``balls``
    Run the uniform-disk experiment on [-2, 2]^2 for a list of step
    sizes and tabulate measured against analytic radii.

``dither``
    Error-diffuse a grayscale image to a binary one, treat the on
    pixels as equal point masses, and reconstruct with both the
    Wasserstein proximal step and a plain nonnegative ROF baseline.

Parameters come from flags and an optional ``key=value`` config file
(flags win; unknown keys are rejected).  Exit codes: 0 success, 2 bad
configuration, 3 I/O failure, 4 solver non-convergence.
"""

from __future__ import annotations

import argparse
import csv
import datetime
import json
import sys
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .balls import BallParams, optimal_radius
from .diagnostics import assemble_el, estimate_radius
from .dither import floyd_steinberg
from .grid import Density, Grid, make_grid, mass, rasterize_ball
from .pgm import PGMError, from_unit_interval, read_pgm, to_unit_interval, write_pgm
from .splitting import DRConfig, solve_tvw
from .transport import EntropicConfig
from .tv import rof_nonneg

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_SOLVER = 4


class ConfigError(ValueError):
    pass


class SolverError(RuntimeError):
    pass


@dataclass
class RunConfig:
    """Resolved parameters of one command invocation."""

    grid: int = 128
    tau: tuple = (0.2,)
    lam: float = 1.0
    eps_final: float = 1e-4
    eps_start: float = 0.1
    fp_tol: float = 1e-5
    max_outer: int = 500
    r0: float = 1.0
    out: str = "out"

    def __post_init__(self):
        if self.grid < 2:
            raise ConfigError(f"grid must be at least 2, got {self.grid}")
        taus = tuple(float(t) for t in self.tau)
        if any(t < 0.0 for t in taus):
            raise ConfigError(f"tau values must be nonnegative, got {taus}")
        self.tau = taus
        for name in ("lam", "eps_final", "eps_start", "fp_tol", "r0"):
            if getattr(self, name) <= 0.0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        if self.eps_final > self.eps_start:
            raise ConfigError("eps_final must not exceed eps_start")
        if self.max_outer < 1:
            raise ConfigError(f"max_outer must be at least 1, got {self.max_outer}")

    @property
    def single_tau(self):
        if len(self.tau) != 1:
            raise ConfigError(f"this command takes a single tau, got {self.tau}")
        return self.tau[0]

    def entropic(self, grid):
        return EntropicConfig.for_grid(
            grid, eps_start_scale=self.eps_start, eps_final_scale=self.eps_final)

    def dr(self, grid, tau):
        return DRConfig(tau=tau, lam=self.lam, fp_tol=self.fp_tol,
                        max_outer=self.max_outer, entropic=self.entropic(grid))


_CONFIG_KEYS = set(RunConfig.__dataclass_fields__)


def parse_config_file(path):
    """Read ``key=value`` lines; '#' starts a comment."""
    out = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}")
    for ln, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{ln}: expected key=value, got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip().replace("-", "_")
        if key == "lambda":
            key = "lam"
        if key not in _CONFIG_KEYS:
            raise ConfigError(f"{path}:{ln}: unknown key {key!r}")
        out[key] = value.strip()
    return out


def _parse_taus(text):
    try:
        return tuple(float(t) for t in str(text).split(","))
    except ValueError:
        raise ConfigError(f"bad tau list {text!r}")


def resolve_config(args):
    """Merge defaults, config file and flags into a RunConfig."""
    values = {}
    if args.config:
        for key, raw in parse_config_file(args.config).items():
            if key == "tau":
                values[key] = _parse_taus(raw)
            elif key == "out":
                values[key] = raw
            else:
                caster = RunConfig.__dataclass_fields__[key].type
                try:
                    values[key] = int(raw) if caster == "int" else float(raw)
                except ValueError:
                    raise ConfigError(f"bad value for {key}: {raw!r}")
    for key in ("grid", "lam", "eps_final", "eps_start", "fp_tol", "max_outer",
                "r0", "out"):
        flag = getattr(args, key, None)
        if flag is not None:
            values[key] = flag
    if getattr(args, "tau", None) is not None:
        values["tau"] = _parse_taus(args.tau)
    return RunConfig(**values)


def _timestamp():
    return datetime.datetime.now(datetime.timezone.utc).isoformat()


def write_report(path, cfg, results):
    report = {"config": asdict(cfg), "results": results}
    body = json.dumps(report, indent=2, sort_keys=True)
    # timestamp kept out of the sorted body so reports diff cleanly
    text = body[:-2] + ',\n  "timestamp": "%s"\n}' % _timestamp()
    Path(path).write_text(text + "\n")


def write_history(path, history):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["n", "beta", "fp_residual", "objective_estimate",
                         "tv_iterations", "w2_iterations", "wall_time"])
        for rec in history.records:
            writer.writerow([rec.n, repr(rec.beta), repr(rec.fp_residual),
                             repr(rec.objective_estimate), rec.tv_iterations,
                             rec.w2_iterations, repr(rec.wall_time)])


def _image_to_density(pixels, maxval):
    ny, nx = pixels.shape
    if ny != nx:
        raise ConfigError(f"input image must be square, got {nx}x{ny}")
    grid = make_grid(nx, origin=(0.0, 0.0), side=1.0)
    u = to_unit_interval(pixels, maxval)
    total = u.sum() * grid.cell_area
    if total <= 0.0:
        raise ConfigError("input image is all black, no mass to transport")
    return Density(grid, u / total)


def _density_to_pixels(values):
    top = values.max()
    if top <= 0.0:
        return np.zeros(values.shape, dtype=np.uint16)
    return from_unit_interval(values / top)


def _run_solver(rho0, cfg, tau):
    rho1, z, potentials, history = solve_tvw(rho0, cfg.dr(rho0.grid, tau))
    if not history.converged:
        raise SolverError(
            f"no fixed point within {cfg.max_outer} outer iterations "
            f"(last residual {history.fp_residuals[-1]:.3e})")
    return rho1, z, potentials, history


def cmd_denoise(args):
    cfg = resolve_config(args)
    tau = cfg.single_tau
    pixels, maxval = read_pgm(args.input)
    rho0 = _image_to_density(pixels, maxval)
    rho1, z, potentials, history = _run_solver(rho0, cfg, tau)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    write_pgm(out / "denoised.pgm", _density_to_pixels(rho1.values))
    el = assemble_el(rho1, z, potentials.psi / 2.0, tau)
    results = {
        "input": str(args.input),
        "mass": mass(rho1),
        "outer_iterations": len(history.records),
        "fp_residual": history.fp_residuals[-1],
        "stationarity": el.as_dict(),
    }
    write_history(out / "history.csv", history)
    write_report(out / "report.json", cfg, results)
    return EXIT_OK


def cmd_balls(args):
    cfg = resolve_config(args)
    n = cfg.grid
    grid = Grid(nx=n, ny=n, origin=(-2.0, -2.0), h=4.0 / n)
    rows = []
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    for tau in cfg.tau:
        rho0 = rasterize_ball(grid, (0.0, 0.0), cfg.r0)
        analytic = optimal_radius(BallParams(r0=cfg.r0, tau=tau))
        if tau == 0.0:
            rho1, history = rho0, None
        else:
            rho1, _, _, history = _run_solver(rho0, cfg, tau)
            write_history(out / f"history_tau{tau:g}.csv", history)
        measured, _ = estimate_radius(rho1)
        rows.append({
            "tau": tau,
            "analytic_r1": analytic,
            "measured_r1": measured,
            "rel_error": abs(measured - analytic) / analytic,
        })
    with open(out / "balls.csv", "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
        writer.writeheader()
        for row in rows:
            writer.writerow({k: repr(v) if isinstance(v, float) else v
                             for k, v in row.items()})
    write_report(out / "report.json", cfg, {"table": rows})
    return EXIT_OK


def cmd_dither(args):
    cfg = resolve_config(args)
    tau = cfg.single_tau
    pixels, maxval = read_pgm(args.input)
    ny, nx = pixels.shape
    if ny != nx:
        raise ConfigError(f"input image must be square, got {nx}x{ny}")
    grid = make_grid(nx, origin=(0.0, 0.0), side=1.0)
    u = to_unit_interval(pixels, maxval)
    dith = floyd_steinberg(u)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    write_pgm(out / "dithered.pgm", dith.astype(np.uint16) * 255)
    n_on = int(dith.sum())
    results = {
        "input": str(args.input),
        "input_mass": float(u.sum()),
        "dithered_mass": float(n_on),
        "on_pixels": n_on,
    }
    if n_on == 0:
        # nothing to transport; the reconstructions are black too
        black = np.zeros(grid.shape, dtype=np.uint16)
        write_pgm(out / "tvw.pgm", black)
        write_pgm(out / "rof.pgm", black)
        write_report(out / "report.json", cfg, results)
        return EXIT_OK
    rho0 = Density(grid, dith / (n_on * grid.cell_area))
    dr = cfg.dr(grid, tau)
    # point-mass-like input: start the annealing from a coarse level and
    # keep the final blur at pixel scale, below which the scaling
    # iterations are unreliable on a comb of point masses
    dr.entropic = EntropicConfig.for_grid(
        grid, eps_start_scale=max(cfg.eps_start, 0.25),
        eps_final_scale=cfg.eps_final, min_blur_cells=1.0)
    rho1, z, potentials, history = solve_tvw(rho0, dr)
    if not history.converged:
        raise SolverError(
            f"no fixed point within {cfg.max_outer} outer iterations "
            f"(last residual {history.fp_residuals[-1]:.3e})")
    write_pgm(out / "tvw.pgm", _density_to_pixels(rho1.values))
    u_rof = rof_nonneg(dith.astype(float), grid, tau)
    write_pgm(out / "rof.pgm", _density_to_pixels(u_rof))
    results.update({
        "tvw_mass": mass(rho1),
        "rof_lambda": tau,
        "outer_iterations": len(history.records),
        "fp_residual": history.fp_residuals[-1],
    })
    write_history(out / "history.csv", history)
    write_report(out / "report.json", cfg, results)
    return EXIT_OK


def _add_common(p, with_input, default_tau=None):
    if with_input:
        p.add_argument("input", help="input PGM image (P2 or P5)")
    p.add_argument("--grid", type=int, default=None, help="cells per axis")
    p.add_argument("--tau", default=default_tau,
                   help="step size (comma-separated list for 'balls')")
    p.add_argument("--lambda", dest="lam", type=float, default=None,
                   help="TV prox weight inside the splitting")
    p.add_argument("--eps-final", dest="eps_final", type=float, default=None,
                   help="final entropic level as a fraction of diam^2")
    p.add_argument("--fp-tol", dest="fp_tol", type=float, default=None,
                   help="relative fixed-point tolerance")
    p.add_argument("--max-outer", dest="max_outer", type=int, default=None,
                   help="outer iteration cap")
    p.add_argument("--config", default=None, help="key=value config file")
    p.add_argument("--out", default=None, help="output directory")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="tvwass",
        description="One proximal step of the TV gradient flow in Wasserstein space.")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("denoise", help="TV-Wasserstein step on a grayscale image")
    _add_common(p, with_input=True, default_tau="0.2")
    p.set_defaults(func=cmd_denoise)
    p = sub.add_parser("balls", help="uniform-disk experiment against the radius law")
    _add_common(p, with_input=False, default_tau=None)
    p.add_argument("--r0", type=float, default=None, help="initial disk radius")
    p.set_defaults(func=cmd_balls)
    p = sub.add_parser("dither", help="dither an image and reconstruct it")
    _add_common(p, with_input=True, default_tau="0.2")
    p.set_defaults(func=cmd_dither)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, PGMError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (SolverError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
