"""Command-line front end: phantoms, reconstructions, convergence studies.

Subcommands:
    solve     one reconstruction at fixed (alpha, noise level)
    study     delta-ladder convergence study with Morozov-selected alpha
    phantom   render the true parameter and its exact data
    validate  run the oracle-backed self-check suite

Configuration comes from flags, optionally preloaded from a plain
key=value file (--config); flags win. Images are written as binary PGM
(P5), tables as CSV with %.6e floats and LF newlines. Exit codes:
0 success, 1 usage error, 2 runtime/solver failure.
"""

from __future__ import annotations

import argparse
import enum
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import oracle
from .penalty import AdmissibleSet
from .poisson import Grid, LinearSolveOptions, ScalarField, SolverFailure, poisson_solve
from .regpath import (
    DATA_SOLVE_TOL,
    DiscrepancyConfig,
    NoiseModel,
    StudyRow,
    errors_against_truth,
    make_noisy_data,
    run_noise_study,
)
from .ssn import SolverConfig, classify_p, solve_with_continuation

CSV_HEADER = (
    "delta_rel,delta_eff,delta_raw,alpha,e2,e2_raw,einf,"
    "singular_nodes,newton_total,flags"
)

# fixed geometry of the built-in phantoms: (center_x1, center_x2, radius^2)
BIG_DISK = (0.45, 0.55, 0.1)
SMALL_DISK = (0.4, 0.6, 0.02)


class PhantomKind(enum.Enum):
    TWO_DISKS = "two-disks"
    TWO_DISKS_LINEAR = "two-disks-linear"


@dataclass(frozen=True)
class PhantomSpec:
    kind: PhantomKind
    values: AdmissibleSet

    def __post_init__(self):
        if self.values.d != 3:
            raise ValueError("built-in phantoms use exactly three admissible values")


def build_phantom(spec: PhantomSpec, grid: Grid) -> ScalarField:
    """Two nested disks: u1 background, u2 on the big disk, u3 on the small.

    The linear variant ramps the small-disk increment with (1 - x1), which
    takes the parameter off the admissible values inside the small disk.
    """
    x1, x2 = grid.coords()
    u1, u2, u3 = spec.values.values
    big = ((x1 - BIG_DISK[0]) ** 2 + (x2 - BIG_DISK[1]) ** 2) < BIG_DISK[2]
    small = ((x1 - SMALL_DISK[0]) ** 2 + (x2 - SMALL_DISK[1]) ** 2) < SMALL_DISK[2]
    bump = (u3 - u2) * small
    if spec.kind is PhantomKind.TWO_DISKS_LINEAR:
        bump = bump * (1.0 - x1)
    return ScalarField(grid, u1 + u2 * big + bump)


def write_field_image(u: ScalarField, lo: float, hi: float, path):
    """8-bit binary PGM; row 0 is the x2 = 1 side of the square."""
    if not lo < hi:
        raise ValueError("need lo < hi for the grey scale")
    n = u.grid.n
    pix = np.clip((u.as_matrix() - lo) / (hi - lo), 0.0, 1.0)
    grey = np.rint(255.0 * pix).astype(np.uint8)[::-1, :]  # flip: top row = x2 max
    with open(path, "wb") as f:
        f.write(f"P5\n{n} {n}\n255\n".encode("ascii"))
        f.write(grey.tobytes())


def format_row(row: StudyRow) -> str:
    return (
        f"{row.delta_rel:.6e},{row.delta_eff:.6e},{row.delta_raw:.6e},"
        f"{row.alpha:.6e},{row.e2:.6e},{row.e2_raw:.6e},{row.einf:.6e},"
        f"{row.singular_nodes:d},{row.newton_total:d},{';'.join(row.flags)}"
    )


def write_study_csv(rows, path):
    with open(path, "w", newline="") as f:
        f.write(CSV_HEADER + "\n")
        for row in rows:
            f.write(format_row(row) + "\n")


def read_study_csv(path) -> list[StudyRow]:
    """Parse a CSV written by write_study_csv back into rows."""
    rows = []
    with open(path) as f:
        header = f.readline().strip()
        if header != CSV_HEADER:
            raise ValueError(f"unexpected CSV header: {header}")
        for line in f:
            parts = line.rstrip("\n").split(",")
            rows.append(
                StudyRow(
                    delta_rel=float(parts[0]),
                    delta_eff=float(parts[1]),
                    delta_raw=float(parts[2]),
                    alpha=float(parts[3]),
                    e2=float(parts[4]),
                    e2_raw=float(parts[5]),
                    einf=float(parts[6]),
                    singular_nodes=int(parts[7]),
                    newton_total=int(parts[8]),
                    residual=float("nan"),
                    flags=tuple(x for x in parts[9].split(";") if x),
                )
            )
    return rows


@dataclass
class RunConfig:
    grid_n: int = 64
    values: tuple = (0.0, 0.1, 0.15)
    phantom: PhantomKind = PhantomKind.TWO_DISKS
    alpha: float = 1e-3
    tau: float = 1.1
    noise_levels: tuple = tuple(2.0**-k for k in range(0, 21))
    seed: int = 0
    gamma0: float = 1.0
    gamma_factor: float = 0.1
    gamma_min: float = 1e-12
    max_newton: int = 100
    out_dir: Path = field(default_factory=lambda: Path("out"))

    def admissible(self) -> AdmissibleSet:
        return AdmissibleSet(self.values)

    def grid(self) -> Grid:
        return Grid(self.grid_n)

    def solver_config(self) -> SolverConfig:
        return SolverConfig(
            gamma0=self.gamma0,
            gamma_factor=self.gamma_factor,
            gamma_min=self.gamma_min,
            max_newton=self.max_newton,
        )

    def discrepancy_config(self) -> DiscrepancyConfig:
        return DiscrepancyConfig(tau=self.tau)


def _labels_image(p: ScalarField, alpha: float, U: AdmissibleSet, path):
    """Grey-coded label map: levels spread over 0..200, singular nodes 255."""
    cls = classify_p(p, alpha, U)
    scale = 200.0 / max(U.d - 1, 1)
    grey = np.rint(scale * np.maximum(cls.labels, 0)).astype(np.uint8)
    grey[cls.singular_mask] = 255
    img = grey.reshape(p.grid.n, p.grid.n)[::-1, :]
    with open(path, "wb") as f:
        f.write(f"P5\n{p.grid.n} {p.grid.n}\n255\n".encode("ascii"))
        f.write(img.tobytes())


def cmd_solve(cfg: RunConfig) -> int:
    U = cfg.admissible()
    grid = cfg.grid()
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    u_true = build_phantom(PhantomSpec(cfg.phantom, U), grid)
    y_true = poisson_solve(u_true, LinearSolveOptions(rel_tol=DATA_SOLVE_TOL))
    delta_rel = cfg.noise_levels[0]
    y_delta, delta_eff = make_noisy_data(y_true, delta_rel, cfg.seed)
    result = solve_with_continuation(y_delta, cfg.alpha, U, cfg.solver_config())
    e2, einf = errors_against_truth(result.u, u_true)
    ku = poisson_solve(result.u)
    residual = float(
        np.sqrt(grid.quad_weight) * np.linalg.norm(ku.data - y_delta.data)
    )
    row = StudyRow(
        delta_rel=delta_rel,
        delta_eff=delta_eff,
        delta_raw=float(np.linalg.norm(y_delta.data - y_true.data)),
        alpha=cfg.alpha,
        e2=e2,
        e2_raw=float(np.linalg.norm(result.u.data - u_true.data)),
        einf=einf,
        singular_nodes=result.report.singular_nodes,
        newton_total=result.report.newton_total,
        residual=residual,
        flags=(),
    )
    write_field_image(result.u, U.lo, U.hi, cfg.out_dir / "recon.pgm")
    pmin, pmax = float(np.min(result.state.p.data)), float(np.max(result.state.p.data))
    if pmin == pmax:
        pmax = pmin + 1.0
    write_field_image(result.state.p, pmin, pmax, cfg.out_dir / "dual.pgm")
    _labels_image(result.state.p, cfg.alpha, U, cfg.out_dir / "labels.pgm")
    write_study_csv([row], cfg.out_dir / "solve.csv")
    print(f"termination: {result.report.termination.value}")
    print(f"e2={e2:.6e} einf={einf:.6e} residual={residual:.6e}")
    print(f"outputs in {cfg.out_dir}")
    return 0


def cmd_study(cfg: RunConfig) -> int:
    U = cfg.admissible()
    grid = cfg.grid()
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    u_true = build_phantom(PhantomSpec(cfg.phantom, U), grid)
    write_field_image(u_true, U.lo, U.hi, cfg.out_dir / "truth.pgm")

    def on_row(i, row, result):
        write_field_image(result.u, U.lo, U.hi, cfg.out_dir / f"recon_{i:02d}.pgm")
        print(format_row(row))

    print(CSV_HEADER)
    rows = run_noise_study(
        u_true,
        U,
        NoiseModel(rel_levels=cfg.noise_levels, seed=cfg.seed),
        cfg.discrepancy_config(),
        cfg.solver_config(),
        on_row=on_row,
    )
    write_study_csv(rows, cfg.out_dir / "study.csv")
    print(f"study table: {cfg.out_dir / 'study.csv'}")
    return 0


def cmd_phantom(cfg: RunConfig) -> int:
    U = cfg.admissible()
    grid = cfg.grid()
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    u_true = build_phantom(PhantomSpec(cfg.phantom, U), grid)
    y_true = poisson_solve(u_true, LinearSolveOptions(rel_tol=DATA_SOLVE_TOL))
    write_field_image(u_true, U.lo, U.hi, cfg.out_dir / "truth.pgm")
    ylo, yhi = float(np.min(y_true.data)), float(np.max(y_true.data))
    if ylo == yhi:
        yhi = ylo + 1.0
    write_field_image(y_true, ylo, yhi, cfg.out_dir / "data.pgm")
    values, counts = np.unique(u_true.data, return_counts=True)
    print(f"phantom {cfg.phantom.value} on {grid.n}x{grid.n}:")
    for v, c in list(zip(values, counts))[:10]:
        print(f"  u={v:.6g}: {c} nodes")
    if values.size > 10:
        print(f"  ... {values.size - 10} further distinct values")
    print(f"images in {cfg.out_dir}")
    return 0


def cmd_validate() -> int:
    results = oracle.run_checks()
    failed = 0
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        print(f"[{status}] {r.name}: {r.detail}")
        failed += not r.passed
    print(f"{len(results) - failed}/{len(results)} checks passed")
    return 0 if failed == 0 else 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage errors exit 1, not argparse's 2
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _parse_values(text: str) -> tuple:
    try:
        vals = tuple(float(x) for x in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated float list: {text!r}")
    if len(vals) < 2 or any(b <= a for a, b in zip(vals, vals[1:])):
        raise argparse.ArgumentTypeError(
            "--values must list at least two strictly increasing numbers"
        )
    return vals


def _parse_levels(text: str) -> tuple:
    try:
        levels = tuple(float(x) for x in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated float list: {text!r}")
    if any(x <= 0 for x in levels) or any(
        b >= a for a, b in zip(levels, levels[1:])
    ):
        raise argparse.ArgumentTypeError(
            "--noise-levels must be positive and strictly decreasing"
        )
    return levels


def _read_config_file(path: str) -> dict:
    out = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        key, val = line.split("=", 1)
        out[key.strip().replace("-", "_")] = val.strip()
    return out


_CONFIG_PARSERS = {
    "grid": int,
    "values": _parse_values,
    "phantom": PhantomKind,
    "alpha": float,
    "tau": float,
    "noise_levels": _parse_levels,
    "seed": int,
    "gamma0": float,
    "gamma_factor": float,
    "gamma_min": float,
    "max_newton": int,
    "out": Path,
}


def _add_common_flags(sub):
    sub.add_argument("--config", help="key=value file with flag defaults")
    sub.add_argument("--grid", type=int, help="interior nodes per axis (default 64)")
    sub.add_argument(
        "--values", type=_parse_values, help="admissible values, e.g. 0,0.1,0.15"
    )
    sub.add_argument(
        "--phantom",
        type=PhantomKind,
        choices=list(PhantomKind),
        help="two-disks | two-disks-linear",
    )
    sub.add_argument("--alpha", type=float, help="regularization weight (solve)")
    sub.add_argument("--tau", type=float, help="discrepancy factor (default 1.1)")
    sub.add_argument(
        "--noise-levels",
        type=_parse_levels,
        help="relative noise ladder, e.g. 0.5,0.25,0.125",
    )
    sub.add_argument("--seed", type=int, help="noise seed (default 0)")
    sub.add_argument("--gamma0", type=float, help="initial continuation gamma")
    sub.add_argument("--gamma-factor", type=float, help="per-stage gamma factor")
    sub.add_argument("--gamma-min", type=float, help="continuation floor")
    sub.add_argument("--max-newton", type=int, help="Newton cap per stage")
    sub.add_argument("--out", type=Path, help="output directory (default ./out)")


def _build_config(args) -> RunConfig:
    file_vals = {}
    if args.config:
        raw = _read_config_file(args.config)
        for key, text in raw.items():
            if key not in _CONFIG_PARSERS:
                raise ValueError(f"unknown config key {key!r}")
            file_vals[key] = _CONFIG_PARSERS[key](text)
    cfg = RunConfig()

    def pick(flag, key, attr):
        val = getattr(args, flag, None)
        if val is None:
            val = file_vals.get(key)
        if val is not None:
            setattr(cfg, attr, val)

    pick("grid", "grid", "grid_n")
    pick("values", "values", "values")
    pick("phantom", "phantom", "phantom")
    pick("alpha", "alpha", "alpha")
    pick("tau", "tau", "tau")
    pick("noise_levels", "noise_levels", "noise_levels")
    pick("seed", "seed", "seed")
    pick("gamma0", "gamma0", "gamma0")
    pick("gamma_factor", "gamma_factor", "gamma_factor")
    pick("gamma_min", "gamma_min", "gamma_min")
    pick("max_newton", "max_newton", "max_newton")
    pick("out", "out", "out_dir")
    return cfg


def main(argv=None) -> int:
    parser = _Parser(prog="multibang", description=__doc__.splitlines()[0])
    subs = parser.add_subparsers(dest="command", required=True)
    for name in ("solve", "study", "phantom"):
        _add_common_flags(subs.add_parser(name))
    subs.add_parser("validate")
    args = parser.parse_args(argv)
    try:
        if args.command == "validate":
            return cmd_validate()
        cfg = _build_config(args)
        if args.command == "solve":
            return cmd_solve(cfg)
        if args.command == "study":
            return cmd_study(cfg)
        return cmd_phantom(cfg)
    except (ValueError, OSError) as exc:
        print(f"multibang: error: {exc}", file=sys.stderr)
        return 1
    except SolverFailure as exc:
        print(f"multibang: solver failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
