"""Command-line front end: config parsing, dispatch, CSV/JSON emission.

Run configurations are flat ``key = value`` text files; every physical
quantity carries an explicit unit suffix in its key (``D_cm2_per_s``,
``w0_mm``, ``f0_hz``, ...), converted to the internal cm/s/Hz system at
parse time.  Command-line flags mirror the config keys and override them.
A JSON run manifest written next to each output can be fed back with
``--config manifest.json`` to reproduce the run byte for byte (same seed).

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ConfigError, SpinGasError
from .modes import CellGeometry, Shape, WallGasSpec, boundary_residual, build_basis
from .overlaps import ProbeProfile, modes_per_class
from .dynamics import (
    FieldSpec,
    SpinStatistics,
    noise_content,
    spin_noise_spectrum,
    squeezing_decay,
    squeezing_decay_from_weights,
    uniform_radial_weights,
)
from .exchange import SpeciesSpec, fidelity_map
from .montecarlo import SimConfig, empirical_spectrum

__all__ = ["main"]

# unit suffix -> factor into the internal system (cm, s, Hz)
_LENGTH_UNITS = {"cm": 1.0, "mm": 0.1, "um": 1e-4, "nm": 1e-7}
_TIME_UNITS = {"s": 1.0, "ms": 1e-3, "us": 1e-6}
_FREQ_UNITS = {"hz": 1.0, "khz": 1e3, "mhz": 1e6}
_RATE_UNITS = {"per_s": 1.0}
_DIFF_UNITS = {"cm2_per_s": 1.0}

# canonical name -> (unit table or None for dimensionless/string/int, help)
_PARAMS = {
    "shape": (None, "cell shape: slab1d|rectangular|cylindrical|spherical"),
    "L": (_LENGTH_UNITS, "slab length / cylinder length"),
    "Lx": (_LENGTH_UNITS, "box x dimension"),
    "Ly": (_LENGTH_UNITS, "box y dimension"),
    "Lz": (_LENGTH_UNITS, "box z dimension"),
    "R": (_LENGTH_UNITS, "cylinder or sphere radius"),
    "D": (_DIFF_UNITS, "diffusion coefficient"),
    "lambda": (_LENGTH_UNITS, "mean free path"),
    "N": (None, "wall collisions survived; float, 'inf', or 'dirichlet'"),
    "w0": (_LENGTH_UNITS, "probe waist radius"),
    "f0": (_FREQ_UNITS, "Larmor frequency"),
    "count": (None, "roots per symmetry class (int)"),
    "n_axial": (None, "axial roots per class for cylindrical bases (int)"),
    "n_radial": (None, "radial roots for cylindrical bases (int)"),
    "eps": (None, "truncation rule: keep ~1/eps roots per class"),
    "gamma_homog": (_RATE_UNITS, "homogeneous decay rate added to all modes"),
    "polarized": (None, "true|false spin statistics"),
    "spin": (None, "single-particle spin magnitude (unpolarized case)"),
    "fmin": (_FREQ_UNITS, "spectrum grid start"),
    "fmax": (_FREQ_UNITS, "spectrum grid end"),
    "nf": (None, "spectrum grid points (int)"),
    "x2_0": (None, "initial beam-weighted variance"),
    "tmax": (_TIME_UNITS, "trace length"),
    "nt": (None, "trace points (int)"),
    "squeeze_init": (None, "probe|uniform_radial initialization of the squeezing"),
    "J_grid": (None, "grid spec lin:start:stop:num or log:start:stop:num"),
    "N_grid": (None, "grid spec for wall quality"),
    "D_a": (_DIFF_UNITS, "alkali diffusion coefficient"),
    "D_b": (_DIFF_UNITS, "noble-gas diffusion coefficient"),
    "lambda_a": (_LENGTH_UNITS, "alkali mean free path"),
    "lambda_b": (_LENGTH_UNITS, "noble-gas mean free path"),
    "Gamma_a": (_RATE_UNITS, "alkali homogeneous decay"),
    "n_modes": (None, "modes per species (int)"),
    "dt": (_TIME_UNITS, "Monte-Carlo time step"),
    "particles": (None, "Monte-Carlo particle count (int)"),
    "steps": (None, "Monte-Carlo recorded steps (int)"),
    "burnin_steps": (None, "Monte-Carlo burn-in steps (int)"),
    "batches": (None, "periodogram batches (int)"),
    "segment_len": (None, "Welch segment length (int)"),
    "seed": (None, "RNG seed (int)"),
    "w0_grid": (None, "waist grid spec (cm) for noise-content sweeps"),
}

_INT_KEYS = {
    "count", "n_axial", "n_radial", "nf", "nt", "n_modes", "particles",
    "steps", "burnin_steps", "batches", "segment_len", "seed",
}


def _known_keys() -> dict[str, tuple[str, float]]:
    """Accepted config keys (with unit suffixes) -> (canonical name, factor)."""
    table = {}
    for name, (units, _) in _PARAMS.items():
        if units is None:
            table[name] = (name, 1.0)
        else:
            for suffix, factor in units.items():
                table[f"{name}_{suffix}"] = (name, factor)
    return table


_KEY_TABLE = _known_keys()


def _parse_value(canonical: str, raw: str):
    raw = str(raw).strip()
    if canonical == "shape":
        try:
            return Shape(raw)
        except ValueError as exc:
            raise ConfigError(f"shape: unknown value {raw!r}") from exc
    if canonical == "N":
        if raw.lower() in ("inf", "infinity", "neumann"):
            return math.inf
        if raw.lower() == "dirichlet":
            return "dirichlet"
        try:
            val = float(raw)
        except ValueError as exc:
            raise ConfigError(f"N: expected float, 'inf', or 'dirichlet', got {raw!r}") from exc
        if val <= 0:
            raise ConfigError("N: must be positive")
        return val
    if canonical == "polarized":
        if raw.lower() in ("true", "1", "yes"):
            return True
        if raw.lower() in ("false", "0", "no"):
            return False
        raise ConfigError(f"polarized: expected true/false, got {raw!r}")
    if canonical == "squeeze_init":
        if raw not in ("probe", "uniform_radial"):
            raise ConfigError(f"squeeze_init: expected probe|uniform_radial, got {raw!r}")
        return raw
    if canonical in ("J_grid", "N_grid", "w0_grid"):
        return _parse_grid(canonical, raw)
    if canonical in _INT_KEYS:
        try:
            return int(raw)
        except ValueError as exc:
            raise ConfigError(f"{canonical}: expected int, got {raw!r}") from exc
    try:
        return float(raw)
    except ValueError as exc:
        raise ConfigError(f"{canonical}: expected float, got {raw!r}") from exc


def _parse_grid(key: str, raw: str) -> np.ndarray:
    parts = raw.split(":")
    if len(parts) != 4 or parts[0] not in ("lin", "log"):
        raise ConfigError(f"{key}: expected lin:start:stop:num or log:start:stop:num, got {raw!r}")
    try:
        start, stop, num = float(parts[1]), float(parts[2]), int(parts[3])
    except ValueError as exc:
        raise ConfigError(f"{key}: bad grid numbers in {raw!r}") from exc
    if num < 1:
        raise ConfigError(f"{key}: grid needs at least one point")
    if parts[0] == "lin":
        return np.linspace(start, stop, num)
    if start <= 0 or stop <= 0:
        raise ConfigError(f"{key}: log grid endpoints must be positive")
    return np.geomspace(start, stop, num)


def parse_config_text(text: str) -> dict:
    """Parse flat ``key = value`` lines; unknown keys are rejected by name."""
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {stripped!r}")
        key, raw = (s.strip() for s in stripped.split("=", 1))
        entry = _KEY_TABLE.get(key)
        if entry is None:
            raise ConfigError(f"unknown config key {key!r}")
        canonical, factor = entry
        val = _parse_value(canonical, raw)
        if isinstance(val, float) and factor != 1.0:
            val *= factor
        out[canonical] = val
    return out


def load_config(path: str) -> dict:
    """Load flat key=value text, or a JSON run manifest with a 'config' block."""
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file not found: {path}")
    text = p.read_text(encoding="utf-8")
    if text.lstrip().startswith("{"):
        doc = json.loads(text)
        block = doc.get("config")
        if not isinstance(block, dict):
            raise ConfigError("JSON manifest has no 'config' block")
        return parse_config_text("\n".join(f"{k} = {v}" for k, v in block.items()))
    return parse_config_text(text)


def _grid_echo(val: np.ndarray) -> str:
    if len(val) > 2 and not np.allclose(np.diff(val), val[1] - val[0]):
        return f"log:{val[0]:.17g}:{val[-1]:.17g}:{len(val)}"
    return f"lin:{val[0]:.17g}:{val[-1]:.17g}:{len(val)}"


def _internal_unit_key(canonical: str) -> str:
    units = _PARAMS[canonical][0]
    if units is None:
        return canonical
    suffix = next(s for s, factor in units.items() if factor == 1.0)
    return f"{canonical}_{suffix}"


def _config_echo(cfg: dict) -> dict:
    """Internal-unit echo of a config; reparses to the same values."""
    echo = {}
    for name, val in cfg.items():
        key = _internal_unit_key(name)
        if isinstance(val, Shape):
            echo[key] = val.value
        elif isinstance(val, np.ndarray):
            echo[key] = _grid_echo(val)
        elif isinstance(val, bool):
            echo[key] = "true" if val else "false"
        elif isinstance(val, float):
            echo[key] = "inf" if math.isinf(val) else f"{val:.17g}"
        else:
            echo[key] = val
    return echo


def _require(cfg: dict, *keys: str) -> None:
    missing = [k for k in keys if k not in cfg]
    if missing:
        raise ConfigError(f"missing required config key(s): {', '.join(missing)}")


def _geometry_from(cfg: dict) -> CellGeometry:
    _require(cfg, "shape")
    shape = cfg["shape"]
    if shape is Shape.SLAB1D:
        _require(cfg, "L")
        return CellGeometry.slab(cfg["L"])
    if shape is Shape.RECTANGULAR:
        _require(cfg, "Lx", "Ly", "Lz")
        return CellGeometry.rectangular(cfg["Lx"], cfg["Ly"], cfg["Lz"])
    if shape is Shape.CYLINDRICAL:
        _require(cfg, "R", "L")
        return CellGeometry.cylindrical(cfg["R"], cfg["L"])
    _require(cfg, "R")
    return CellGeometry.spherical(cfg["R"])


def _wall_from(cfg: dict) -> WallGasSpec:
    _require(cfg, "D", "lambda", "N")
    if cfg["N"] == "dirichlet":
        return WallGasSpec.dirichlet_limit(cfg["D"], cfg["lambda"])
    return WallGasSpec(D=cfg["D"], lam=cfg["lambda"], N=cfg["N"])


def _manifest(subcommand: str, cfg: dict, outputs: list[str], t0: float, extra: dict | None = None) -> dict:
    doc = {
        "tool": "spingas",
        "version": __version__,
        "subcommand": subcommand,
        "config": _config_echo(cfg),
        "outputs": outputs,
        "wallclock_s": round(time.time() - t0, 3),
    }
    if extra:
        doc["derived"] = extra
    return doc


def _write_manifest(outdir: Path, doc: dict) -> None:
    with open(outdir / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1)


def _basis_truncation(geometry, cfg, count):
    if geometry.shape is Shape.CYLINDRICAL:
        return (cfg.get("n_axial", count), cfg.get("n_radial", count))
    return count


def _max_residual(basis) -> float:
    """Worst normalized boundary-equation residual across the basis factors."""
    geometry, wall = basis.geometry, basis.wall
    worst = 0.0
    for m in basis.modes:
        for f in m.factors:
            if f.family == "slab":
                if geometry.shape is Shape.SLAB1D:
                    res = boundary_residual(geometry, wall, f.label[1], f.k)
                elif geometry.shape is Shape.CYLINDRICAL:
                    # axial factor obeys the box equation over the cylinder length
                    box = CellGeometry.rectangular(1.0, 1.0, geometry.dims[1])
                    res = boundary_residual(box, wall, ("z", f.label[1]), f.k)
                else:
                    res = boundary_residual(geometry, wall, (f.label[0], f.label[1]), f.k)
            elif f.family == "disk":
                res = boundary_residual(geometry, wall, f.label[0], f.k)
            else:
                res = boundary_residual(geometry, wall, f.label[1], f.k)
            worst = max(worst, res)
    return worst


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_modes(cfg: dict, outdir: Path) -> int:
    t0 = time.time()
    geometry = _geometry_from(cfg)
    wall = _wall_from(cfg)
    count = cfg.get("count", 5)
    basis = build_basis(geometry, wall, _basis_truncation(geometry, cfg, count), warn_validity=False)
    warnings_ = wall.validity_warnings(geometry)
    for msg in warnings_:
        print(f"warning: {msg}", file=sys.stderr)
    path = outdir / "modes.csv"
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("labels,k_per_cm,Gamma_per_s,A\n")
        for m in basis.modes:
            lab = str(m.labels).replace(",", ";").replace(" ", "")
            fh.write(f"{lab},{m.k:.12g},{m.Gamma:.12g},{m.A:.12g}\n")
    extra = {
        "n_modes": len(basis),
        "validity_warnings": warnings_,
        "max_boundary_residual": _max_residual(basis),
    }
    _write_manifest(outdir, _manifest("modes", cfg, [path.name], t0, extra))
    return 0


def _spectrum_inputs(cfg):
    geometry = _geometry_from(cfg)
    if geometry.shape is not Shape.CYLINDRICAL:
        raise ConfigError("shape: spectrum runs need a cylindrical cell")
    wall = _wall_from(cfg)
    field = FieldSpec(f0=cfg.get("f0", 0.0))
    stats = SpinStatistics(polarized=cfg.get("polarized", True), S=cfg.get("spin", 0.5))
    count = cfg.get("count", modes_per_class(cfg.get("eps", 1e-2)))
    basis = build_basis(geometry, wall, _basis_truncation(geometry, cfg, count), warn_validity=False)
    return geometry, wall, field, stats, basis


def cmd_spectrum(cfg: dict, outdir: Path) -> int:
    t0 = time.time()
    if "w0_grid" in cfg:
        return _cmd_spectrum_sweep(cfg, outdir, t0)
    geometry, wall, field, stats, basis = _spectrum_inputs(cfg)
    _require(cfg, "w0", "fmin", "fmax", "nf")
    probe = ProbeProfile(w0=cfg["w0"])
    fgrid = np.linspace(cfg["fmin"], cfg["fmax"], cfg["nf"])
    spec = spin_noise_spectrum(
        basis, probe, field, stats, fgrid, gamma_homog=cfg.get("gamma_homog", 0.0)
    )
    path = outdir / "spectrum.csv"
    spec.to_csv(path)
    sidecar = outdir / "spectrum_summary.json"
    spec.save_summary(sidecar)
    extra = {"zeta": spec.zeta, "fwhm_hz": spec.fwhm_hz, "sum_weights": spec.sum_weights,
             "n_modes_basis": len(basis), "n_modes_retained": int(len(spec.weights))}
    _write_manifest(outdir, _manifest("spectrum", cfg, [path.name, sidecar.name], t0, extra))
    return 0


def _cmd_spectrum_sweep(cfg: dict, outdir: Path, t0: float) -> int:
    geometry, wall, field, stats, basis = _spectrum_inputs(cfg)
    span = cfg.get("fmax", float(basis.gammas.max()))
    zetas = []
    for w0 in cfg["w0_grid"]:
        probe = ProbeProfile(w0=float(w0))
        fgrid = np.linspace(field.f0 - span, field.f0 + span, 101)
        spec = spin_noise_spectrum(
            basis, probe, field, stats, fgrid, gamma_homog=cfg.get("gamma_homog", 0.0)
        )
        zetas.append(noise_content(spec))
    path = outdir / "zeta_vs_w0.csv"
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("w0_cm,zeta\n")
        for w0, z in zip(cfg["w0_grid"], zetas):
            fh.write(f"{w0:.12g},{z:.12g}\n")
    _write_manifest(outdir, _manifest("spectrum", cfg, [path.name], t0))
    return 0


def cmd_squeezing(cfg: dict, outdir: Path) -> int:
    t0 = time.time()
    geometry = _geometry_from(cfg)
    if geometry.shape is not Shape.CYLINDRICAL:
        raise ConfigError("shape: squeezing runs need a cylindrical cell")
    wall = _wall_from(cfg)
    _require(cfg, "x2_0", "tmax", "nt")
    tgrid = np.linspace(0.0, cfg["tmax"], cfg["nt"])
    init = cfg.get("squeeze_init", "probe")
    if init == "uniform_radial":
        n_modes = cfg.get("n_modes", 1000)
        weights, gammas = uniform_radial_weights(geometry, wall, n_modes)
        gamma_ref = math.pi**2 * wall.D / geometry.dims[0] ** 2
        res = squeezing_decay_from_weights(
            weights, gammas + cfg.get("gamma_homog", 0.0), cfg["x2_0"], tgrid, gamma_ref=gamma_ref
        )
    else:
        _require(cfg, "w0")
        probe = ProbeProfile(w0=cfg["w0"])
        count = cfg.get("count", modes_per_class(cfg.get("eps", 1e-2)))
        basis = build_basis(geometry, wall, _basis_truncation(geometry, cfg, count), warn_validity=False)
        res = squeezing_decay(
            basis, probe, cfg["x2_0"], tgrid, gamma_homog=cfg.get("gamma_homog", 0.0)
        )
    path = outdir / "squeezing.csv"
    res.to_csv(path)
    sidecar = outdir / "squeezing_summary.json"
    with open(sidecar, "w", encoding="utf-8") as fh:
        json.dump(res.summary(), fh, indent=1)
    _write_manifest(outdir, _manifest("squeezing", cfg, [path.name, sidecar.name], t0, res.summary()))
    return 0


def cmd_exchange(cfg: dict, outdir: Path, threads: int = 1) -> int:
    t0 = time.time()
    geometry = _geometry_from(cfg)
    if geometry.shape is not Shape.SPHERICAL:
        raise ConfigError("shape: exchange runs need a spherical cell")
    _require(cfg, "D_a", "lambda_a", "D_b", "lambda_b", "J_grid", "N_grid")
    alkali_tpl = WallGasSpec(D=cfg["D_a"], lam=cfg["lambda_a"], N=1.0)
    noble = SpeciesSpec(WallGasSpec.neumann(cfg["D_b"], cfg["lambda_b"]))
    res = fidelity_map(
        geometry,
        alkali_tpl,
        cfg.get("Gamma_a", 0.0),
        noble,
        J_grid=cfg["J_grid"],
        N_grid=cfg["N_grid"],
        n_modes=cfg.get("n_modes", 70),
        threads=threads,
    )
    path = outdir / "fidelity.csv"
    res.to_csv(path)
    extra = {"monotonicity_violations": len(res.monotonicity_violations)}
    _write_manifest(outdir, _manifest("exchange", cfg, [path.name], t0, extra))
    return 0


def cmd_oracle(cfg: dict, outdir: Path) -> int:
    t0 = time.time()
    geometry = _geometry_from(cfg)
    if geometry.shape is not Shape.CYLINDRICAL:
        raise ConfigError("shape: oracle spectrum runs need a cylindrical cell")
    wall = _wall_from(cfg)
    _require(cfg, "dt", "particles", "steps", "w0")
    config = SimConfig(
        wall=wall,
        dt=cfg["dt"],
        n_particles=cfg["particles"],
        geometry=geometry,
        f0_hz=cfg.get("f0", 0.0),
        probe=ProbeProfile(w0=cfg["w0"]),
        seed=cfg.get("seed", 0),
    )
    out = empirical_spectrum(
        config,
        n_steps=cfg["steps"],
        burn_in_steps=cfg.get("burnin_steps", 0),
        n_batches=cfg.get("batches", 64),
        segment_len=cfg.get("segment_len"),
    )
    path = outdir / "psd.csv"
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("f_hz,psd\n")
        for f, p in zip(out["f_hz"], out["psd"]):
            fh.write(f"{f:.12g},{p:.12g}\n")
    extra = {"n_averages": out["n_averages"], "seed": config.seed}
    _write_manifest(outdir, _manifest("oracle", cfg, [path.name], t0, extra))
    return 0


def cmd_validate(cfg: dict, outdir: Path) -> int:
    geometry = _geometry_from(cfg)
    wall = _wall_from(cfg)
    msgs = wall.validity_warnings(geometry)
    one_d = geometry.shape is Shape.SLAB1D
    report = {
        "geometry": geometry.to_dict(),
        "wall": wall.to_dict(),
        "vbar_cm_per_s": wall.vbar,
        "varpi_cm": "inf" if math.isinf(wall.varpi) else wall.varpi,
        "robin_length_cm": (
            "inf" if math.isinf(wall.robin_length(one_d)) else wall.robin_length(one_d)
        ),
        "volume_cm3": geometry.volume,
        "warnings": msgs,
    }
    print(json.dumps(report, indent=1))
    for msg in msgs:
        print(f"warning: {msg}", file=sys.stderr)
    return 0


_SUBCOMMANDS = {
    "modes": cmd_modes,
    "spectrum": cmd_spectrum,
    "squeezing": cmd_squeezing,
    "exchange": cmd_exchange,
    "oracle": cmd_oracle,
    "validate": cmd_validate,
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spingas",
        description="Diffusion-relaxation eigenmodes and collective spin observables",
    )
    parser.add_argument("--version", action="version", version=f"spingas {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for name in _SUBCOMMANDS:
        p = sub.add_parser(name, help=f"run the {name} computation")
        p.add_argument("--config", help="config file (flat key=value text or JSON manifest)")
        p.add_argument("--outdir", default=".", help="output directory (created if missing)")
        p.add_argument("--threads", type=int, default=1, help="worker threads where supported")
        for key in sorted(_KEY_TABLE):
            p.add_argument(f"--{key}", dest=f"cfg_{key}", metavar="VAL", default=None,
                           help=argparse.SUPPRESS)
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        cfg: dict = {}
        if args.config:
            cfg.update(load_config(args.config))
        for key, (canonical, factor) in _KEY_TABLE.items():
            raw = getattr(args, f"cfg_{key}", None)
            if raw is None:
                continue
            val = _parse_value(canonical, str(raw))
            if isinstance(val, float) and factor != 1.0:
                val *= factor
            cfg[canonical] = val
        outdir = Path(args.outdir)
        outdir.mkdir(parents=True, exist_ok=True)
        handler = _SUBCOMMANDS[args.subcommand]
        if args.subcommand == "exchange":
            return handler(cfg, outdir, threads=args.threads)
        return handler(cfg, outdir)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except SpinGasError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except (ValueError, OverflowError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    raise SystemExit(main())
