"""Brownian-particle simulator used to cross-validate the mode predictions.

Each particle carries a position inside the cell and a classical transverse
spin phasor.  Per step the position takes an independent Gaussian kick
(variance ``2 D dt`` per axis), boundary crossings reflect specularly, and
each crossing destroys the phasor with probability ``1 - e^{-1/N}``; the
phasor meanwhile precesses at the Larmor frequency.  Projections of the
phasor field onto the analytic mode functions then decay at the analytic
rates, and the probe-weighted signal reproduces the Lorentzian-sum noise
spectrum, which is what the checks in this module measure.

The phasor proxy validates decay rates and spectral weights, not
operator-level commutators.  Random numbers come from one counter-based
Philox stream keyed by the run seed, so a fixed seed reproduces the run
bit for bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import FitFailure, InsufficientSamples
from .modes import CellGeometry, DiffusionMode, Shape, WallGasSpec, eval_mode
from .overlaps import ProbeProfile

__all__ = [
    "SimConfig",
    "ParticleEnsemble",
    "step",
    "mode_decay_check",
    "empirical_spectrum",
    "msd_trace",
]

_MAX_REFLECT_LOOPS = 10


@dataclass(frozen=True)
class SimConfig:
    """Monte-Carlo run parameters.

    ``geometry=None`` simulates an unbounded medium (no walls).  ``dt`` must
    resolve the finest tracked length: the rms step ``sqrt(2 D dt)`` has to
    stay below a tenth of ``min(w0, R/10)`` (cell dimension based when no
    probe is set).
    """

    wall: WallGasSpec
    dt: float
    n_particles: int
    geometry: CellGeometry | None = None
    f0_hz: float = 0.0
    probe: ProbeProfile | None = None
    seed: int = 0

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.n_particles < 1:
            raise ValueError("need at least one particle")
        sigma = math.sqrt(2.0 * self.wall.D * self.dt)
        if self.geometry is not None:
            lam_char = self.geometry.min_dimension / 10.0
            if self.probe is not None:
                lam_char = min(self.probe.w0, lam_char)
            if sigma >= lam_char / 10.0:
                raise ValueError(
                    f"dt too coarse: rms step {sigma:.3g} cm exceeds {lam_char / 10.0:.3g} cm"
                )

    @property
    def rms_step(self) -> float:
        return math.sqrt(2.0 * self.wall.D * self.dt)

    @property
    def omega0(self) -> float:
        return 2.0 * math.pi * self.f0_hz

    def to_dict(self) -> dict:
        d = {
            "wall": self.wall.to_dict(),
            "dt_s": self.dt,
            "n_particles": self.n_particles,
            "f0_hz": self.f0_hz,
            "seed": self.seed,
        }
        d["geometry"] = self.geometry.to_dict() if self.geometry is not None else None
        d["w0_cm"] = self.probe.w0 if self.probe is not None else None
        return d


@dataclass
class ParticleEnsemble:
    """Mutable simulation state: positions, phasors, and RNG stream."""

    config: SimConfig
    positions: np.ndarray
    phasor: np.ndarray
    rng: np.random.Generator
    depolarize: str = "destroy"  # or "rerandomize" for stationary runs
    n_clamped: int = 0

    @property
    def ndim(self) -> int:
        return self.positions.shape[1]

    @classmethod
    def start(cls, config: SimConfig, depolarize: str = "destroy") -> "ParticleEnsemble":
        """Uniform positions (stationary for reflected diffusion) and unit phasors."""
        if depolarize not in ("destroy", "rerandomize"):
            raise ValueError("depolarize must be 'destroy' or 'rerandomize'")
        rng = np.random.Generator(np.random.Philox(key=config.seed))
        pos = _sample_uniform(config.geometry, config.n_particles, rng)
        phasor = np.ones(config.n_particles, dtype=complex)
        return cls(config=config, positions=pos, phasor=phasor, rng=rng, depolarize=depolarize)

    def randomize_phases(self) -> None:
        """Independent uniform phases: the unpolarized-ensemble proxy."""
        theta = self.rng.uniform(0.0, 2.0 * math.pi, len(self.phasor))
        self.phasor = np.exp(1j * theta)

    def set_phasor_from_mode(self, mode: DiffusionMode) -> None:
        """Phasor amplitude proportional to a mode function at each position."""
        self.phasor = np.asarray(
            eval_mode(mode, self.config.geometry, self.native_coords()), dtype=complex
        )

    def native_coords(self):
        """Geometry-native coordinates of the current positions."""
        g = self.config.geometry
        p = self.positions
        if g is None or g.shape is Shape.RECTANGULAR:
            return tuple(p.T)
        if g.shape is Shape.SLAB1D:
            return p[:, 0]
        if g.shape is Shape.CYLINDRICAL:
            rho = np.hypot(p[:, 1], p[:, 2])
            phi = np.arctan2(p[:, 2], p[:, 1])
            return (p[:, 0], rho, phi)
        r = np.linalg.norm(p, axis=1)
        theta = np.arccos(np.clip(np.divide(p[:, 2], r, out=np.zeros_like(r), where=r > 0), -1, 1))
        phi = np.arctan2(p[:, 1], p[:, 0])
        return (r, theta, phi)


def _sample_uniform(geometry: CellGeometry | None, n: int, rng: np.random.Generator) -> np.ndarray:
    if geometry is None:
        return np.zeros((n, 3))
    shape = geometry.shape
    if shape is Shape.SLAB1D:
        L = geometry.dims[0]
        return rng.uniform(-L / 2.0, L / 2.0, (n, 1))
    if shape is Shape.RECTANGULAR:
        cols = [rng.uniform(-L / 2.0, L / 2.0, n) for L in geometry.dims]
        return np.column_stack(cols)
    if shape is Shape.CYLINDRICAL:
        R, L = geometry.dims
        x = rng.uniform(-L / 2.0, L / 2.0, n)
        rho = R * np.sqrt(rng.uniform(0.0, 1.0, n))
        phi = rng.uniform(0.0, 2.0 * math.pi, n)
        return np.column_stack([x, rho * np.cos(phi), rho * np.sin(phi)])
    R = geometry.dims[0]
    r = R * rng.uniform(0.0, 1.0, n) ** (1.0 / 3.0)
    vec = rng.normal(size=(n, 3))
    vec /= np.linalg.norm(vec, axis=1)[:, None]
    return vec * r[:, None]


def _fold_axis(x: np.ndarray, half: float, crossings: np.ndarray) -> int:
    """Reflect one coordinate into [-half, half]; count folds per particle."""
    clamped = 0
    for _ in range(_MAX_REFLECT_LOOPS):
        bad = np.flatnonzero(np.abs(x) > half)
        if len(bad) == 0:
            return clamped
        xb = x[bad]
        x[bad] = np.where(xb > half, 2.0 * half - xb, -2.0 * half - xb)
        crossings[bad] += 1
    bad = np.abs(x) > half
    clamped = int(bad.sum())
    np.clip(x, -half, half, out=x)
    return clamped


def _fold_radial(p: np.ndarray, cols, R: float, crossings: np.ndarray) -> int:
    """Reflect the radial coordinate of the given columns back below R.

    Works on squared radii so the square root is only taken for the small
    boundary-crossing subset.
    """
    clamped = 0
    sub = p[:, cols]
    R2 = R * R
    for _ in range(_MAX_REFLECT_LOOPS):
        r2 = np.einsum("ij,ij->i", sub, sub)
        over = r2 > R2
        idx = np.flatnonzero(over)
        if len(idx) == 0:
            p[:, cols] = sub
            return clamped
        r = np.sqrt(r2[idx])
        scale = (2.0 * R - r) / r
        # a kick larger than R itself would fold through the center; clamp
        np.maximum(scale, 0.0, out=scale)
        sub[idx] *= scale[:, None]
        crossings[idx] += 1
    r2 = np.einsum("ij,ij->i", sub, sub)
    bad = np.flatnonzero(r2 > R2)
    clamped = len(bad)
    if clamped:
        sub[bad] *= (R / np.sqrt(r2[bad]))[:, None]
    p[:, cols] = sub
    return clamped


def step(ensemble: ParticleEnsemble, dt: float | None = None) -> ParticleEnsemble:
    """Advance every particle by one time step (in place).

    Gaussian displacement, specular wall reflection with one depolarization
    trial per crossing, and phasor precession.  Reflection loops are capped;
    residual overshoots are clamped to the boundary and counted in
    ``n_clamped``.
    """
    cfg = ensemble.config
    if dt is None:
        dt = cfg.dt
    sigma = math.sqrt(2.0 * cfg.wall.D * dt)
    p = ensemble.positions
    n = len(p)
    # float32 deviates are cheaper and far below the boundary-layer error
    kick = ensemble.rng.standard_normal(p.shape, dtype=np.float32)
    kick *= np.float32(sigma)
    p += kick

    g = cfg.geometry
    crossings = np.zeros(n, dtype=np.int64)
    if g is not None:
        if g.shape is Shape.SLAB1D:
            ensemble.n_clamped += _fold_axis(p[:, 0], g.dims[0] / 2.0, crossings)
        elif g.shape is Shape.RECTANGULAR:
            for ax, L in enumerate(g.dims):
                ensemble.n_clamped += _fold_axis(p[:, ax], L / 2.0, crossings)
        elif g.shape is Shape.CYLINDRICAL:
            R, L = g.dims
            ensemble.n_clamped += _fold_axis(p[:, 0], L / 2.0, crossings)
            ensemble.n_clamped += _fold_radial(p, [1, 2], R, crossings)
        else:
            ensemble.n_clamped += _fold_radial(p, [0, 1, 2], g.dims[0], crossings)

        hit = crossings > 0
        if hit.any():
            wall = cfg.wall
            if wall.is_dirichlet:
                survive = np.zeros(int(hit.sum()))
            elif wall.is_neumann:
                survive = None
            else:
                survive = np.exp(-crossings[hit] / wall.N)
            if survive is not None:
                killed_local = ensemble.rng.random(int(hit.sum())) > survive
                if killed_local.any():
                    idx = np.flatnonzero(hit)[killed_local]
                    if ensemble.depolarize == "destroy":
                        ensemble.phasor[idx] = 0.0
                    else:
                        theta = ensemble.rng.uniform(0.0, 2.0 * math.pi, len(idx))
                        ensemble.phasor[idx] = np.exp(1j * theta)

    if cfg.omega0 != 0.0:
        ensemble.phasor *= np.exp(-1j * cfg.omega0 * dt)
    return ensemble


# ---------------------------------------------------------------------------
# Cross-validation measurements
# ---------------------------------------------------------------------------


def mode_decay_check(
    config: SimConfig,
    mode: DiffusionMode,
    n_steps: int | None = None,
    fit_start_frac: float = 1.0,
):
    """Fit the decay rate of one mode projection; returns ``(gamma_fit, r2)``.

    Phasors start proportional to the mode function; the projected amplitude
    ``(V/Np) sum_i phasor_i u_n(r_i)`` then decays at the analytic rate.
    The log-linear fit spans the drop from ``fit_start_frac`` to ~20% of the
    initial projection (lowering the start skips the early transient when
    the discretized wall mixes several effective modes) and raises when its
    R^2 falls below 0.99.
    """
    if config.geometry is None:
        raise ValueError("mode decay check requires a confined geometry")
    ens = ParticleEnsemble.start(config, depolarize="destroy")
    ens.set_phasor_from_mode(mode)
    V = config.geometry.volume
    if n_steps is None:
        if mode.Gamma <= 0:
            raise ValueError("mode has no decay; nothing to fit")
        n_steps = int(2.0 / (mode.Gamma * config.dt)) + 1
    proj = np.empty(n_steps + 1)
    norm = V / config.n_particles

    def project():
        u = eval_mode(mode, config.geometry, ens.native_coords())
        return norm * float(np.real(np.vdot(u, ens.phasor)))

    proj[0] = project()
    for i in range(n_steps):
        step(ens)
        proj[i + 1] = project()

    t = np.arange(n_steps + 1) * config.dt
    scale = proj[0]
    keep = proj > 0.2 * scale
    # use the contiguous head of the trace; later samples are noise-dominated
    last = int(np.argmin(keep)) if not keep.all() else len(proj)
    first = 0
    if fit_start_frac < 1.0:
        below = proj < fit_start_frac * scale
        first = int(np.argmax(below)) if below.any() else 0
    if last - first < 10:
        raise FitFailure("projection decayed too fast for the chosen dt")
    y = np.log(proj[first:last] / scale)
    x = t[first:last]
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_res = float(np.sum(resid**2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 0.0
    if r2 < 0.99:
        raise FitFailure(f"log-linear fit R^2 = {r2:.4f} < 0.99")
    return -slope, r2


def msd_trace(config: SimConfig, n_steps: int, stride: int = 1):
    """Mean-square displacement versus time in an unbounded medium."""
    if config.geometry is not None:
        raise ValueError("msd_trace expects an unbounded configuration (geometry=None)")
    ens = ParticleEnsemble.start(config)
    start = ens.positions.copy()
    times, msd = [], []
    for i in range(1, n_steps + 1):
        step(ens)
        if i % stride == 0:
            d = ens.positions - start
            times.append(i * config.dt)
            msd.append(float(np.mean(np.sum(d * d, axis=1))))
    return np.array(times), np.array(msd)


def empirical_spectrum(
    config: SimConfig,
    n_steps: int,
    burn_in_steps: int,
    *,
    burn_in_dt: float | None = None,
    n_batches: int = 64,
    segment_len: int | None = None,
    window: str = "hann",
):
    """Welch-averaged power spectral density of the probe-weighted spin signal.

    The stationary unpolarized ensemble is realized by uniform random
    phases, with a depolarizing wall collision re-randomizing the phase
    (thermalization) so the process stays stationary.  Particles are split
    into independent batches whose periodograms are averaged together with
    the 50%-overlapped Welch segments.  Returns a dict with the frequency
    grid (Hz, Larmor peak at +f0), the averaged PSD, and bookkeeping.

    ``burn_in_dt`` lets the burn-in phase run at a coarser step than the
    recorded signal; the initial state (uniform positions, uniform phases)
    is already stationary, so burn-in only has to cover mixing time.
    """
    if config.geometry is None or config.geometry.shape is not Shape.CYLINDRICAL:
        raise ValueError("empirical spectra are implemented for cylindrical cells")
    if config.probe is None:
        raise ValueError("a probe profile is required for the readout weighting")
    if segment_len is None:
        segment_len = n_steps
    if segment_len > n_steps:
        raise ValueError("segment_len cannot exceed n_steps")
    if burn_in_dt is None:
        burn_in_dt = config.dt
    elif math.sqrt(2.0 * config.wall.D * burn_in_dt) >= config.geometry.min_dimension / 10.0:
        raise ValueError("burn_in_dt too coarse for the cell")
    n_seg_per_batch = max(1, (n_steps - segment_len) // (segment_len // 2) + 1)
    n_averages = n_batches * n_seg_per_batch
    if n_averages < 32:
        raise InsufficientSamples(
            f"{n_averages} periodogram segments (< 32); lengthen the run or add batches"
        )
    n_batches = min(n_batches, config.n_particles)
    batch_size = config.n_particles // n_batches
    n_used = batch_size * n_batches

    ens = ParticleEnsemble.start(config, depolarize="rerandomize")
    ens.randomize_phases()
    for _ in range(burn_in_steps):
        step(ens, burn_in_dt)

    I0 = config.probe.normalization(config.geometry)
    inv_w2 = 2.0 / config.probe.w0**2
    signals = np.empty((n_batches, n_steps), dtype=np.complex64)
    edges = np.arange(0, n_used, batch_size)
    for i in range(n_steps):
        step(ens)
        p = ens.positions
        rho2 = p[:n_used, 1] ** 2 + p[:n_used, 2] ** 2
        v = (I0 * np.exp(-inv_w2 * rho2)) * ens.phasor[:n_used]
        signals[:, i] = np.add.reduceat(v, edges)

    if window == "hann":
        win = np.hanning(segment_len)
    elif window == "boxcar":
        win = np.ones(segment_len)
    else:
        raise ValueError(f"unknown window {window!r}")
    win_norm = float(np.sum(win**2))
    hop = max(1, segment_len // 2)
    psd = np.zeros(segment_len)
    count = 0
    for start in range(0, n_steps - segment_len + 1, hop):
        seg = signals[:, start : start + segment_len] * win[None, :]
        spec = np.fft.fft(seg, axis=1)
        psd += np.abs(spec).astype(float).__pow__(2).sum(axis=0)
        count += n_batches
    psd *= config.dt / (win_norm * count)
    freqs = np.fft.fftfreq(segment_len, d=config.dt)
    # the phasor rotates as e^{-i omega0 t}; flip so the peak reads +f0
    freqs = np.fft.fftshift(-freqs)
    psd = np.fft.fftshift(psd)
    order = np.argsort(freqs)
    return {
        "f_hz": freqs[order],
        "psd": psd[order],
        "n_averages": count,
        "segment_len": segment_len,
        "n_batches": n_batches,
        "config": config.to_dict(),
    }
