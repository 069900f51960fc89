"""Single-species observables built on the mode decomposition.

Each mode amplitude precesses at the Larmor frequency, decays at its mode
rate, and accretes vacuum noise with covariance ``1 - e^{-2 Gamma t}``
(fluctuation-dissipation closure).  From those ingredients this module
evaluates:

* the spin-noise spectral density seen by a Gaussian probe, a sum of
  Lorentzians weighted by the squared probe overlaps,
* the noise content ``zeta`` (fraction of total spin-noise power within the
  full width at half maximum around the Larmor peak), and
* the decay of an initially squeezed beam-weighted variance.

Quadrature convention: ``x = (a + a^dagger)/2``, vacuum variance 1/4.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize

from .errors import FlatSpectrum
from .modes import ModeBasis, Shape
from .overlaps import ProbeProfile, probe_overlap

__all__ = [
    "FieldSpec",
    "SpinStatistics",
    "SpectrumResult",
    "SqueezingResult",
    "mode_evolution",
    "noise_covariance",
    "spin_noise_spectrum",
    "spectrum_from_weights",
    "noise_content",
    "squeezing_decay",
    "squeezing_decay_from_weights",
    "uniform_radial_weights",
    "half_squeezing_time",
]


@dataclass(frozen=True)
class FieldSpec:
    """Static magnetic field along the polarization axis.

    ``f0`` is the Larmor frequency in Hz; ``omega0 = 2 pi f0``.  When the
    gyromagnetic ratio ``g`` (rad/s per G) is provided, the corresponding
    field amplitude is available as ``B``.
    """

    f0: float
    g: float | None = None

    def __post_init__(self):
        if self.f0 < 0:
            raise ValueError("Larmor frequency f0 must be >= 0")

    @property
    def omega0(self) -> float:
        return 2.0 * math.pi * self.f0

    @property
    def B(self) -> float:
        if self.g is None:
            raise ValueError("gyromagnetic ratio not set")
        return self.omega0 / self.g


@dataclass(frozen=True)
class SpinStatistics:
    """Polarization state entering the spectral weight.

    The Lorentzian weights carry a statistics factor: 1 for a highly
    polarized ensemble (any spin) and ``2 (S + 1)/3`` for an unpolarized
    ensemble of spin-S particles (which is again 1 for S = 1/2).
    """

    polarized: bool = True
    S: float = 0.5

    @property
    def p_factor(self) -> float:
        if self.polarized:
            return 1.0
        return 2.0 * (self.S + 1.0) / 3.0


def mode_evolution(a0: complex, gamma: float, omega0: float, t):
    """Mean mode amplitude ``a0 exp(-(i omega0 + Gamma) t)`` (vectorized in t)."""
    t = np.asarray(t)
    if np.any(t < 0):
        raise ValueError("t must be >= 0")
    return a0 * np.exp(-(1j * omega0 + gamma) * t)


def noise_covariance(gamma: float, t):
    """Accumulated vacuum-noise covariance ``1 - e^{-2 Gamma t}`` of one mode."""
    t = np.asarray(t)
    if np.any(t < 0):
        raise ValueError("t must be >= 0")
    return -np.expm1(-2.0 * gamma * t)


# ---------------------------------------------------------------------------
# Spin-noise spectrum
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SpectrumResult:
    """Spin-noise spectral density on a frequency grid.

    ``Sxx`` is the Lorentzian sum (1/Hz), ``Sxx_ref`` a single-Lorentzian
    reference of width ``gamma_ref = pi^2 D / w0^2`` carrying the same total
    power.  ``weights`` and ``gammas`` are the per-mode squared probe
    overlaps and total decay rates actually used; ``sum_weights`` tracks the
    basis completeness reached by the truncation.  ``fwhm_hz`` and ``zeta``
    are None when the half-maximum is not bracketed by the grid span.
    """

    fgrid: np.ndarray
    Sxx: np.ndarray
    Sxx_ref: np.ndarray
    f0: float
    p_factor: float
    weights: np.ndarray
    gammas: np.ndarray
    sum_weights: float
    gamma_ref: float
    fwhm_hz: float | None
    zeta: float | None
    total_power: float

    def to_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("f_hz,Sxx_per_hz,Sxx_ref_per_hz\n")
            for f, s, r in zip(self.fgrid, self.Sxx, self.Sxx_ref):
                fh.write(f"{f:.12g},{s:.12g},{r:.12g}\n")

    def summary(self) -> dict:
        return {
            "f0_hz": self.f0,
            "p_factor": self.p_factor,
            "zeta": self.zeta,
            "fwhm_hz": self.fwhm_hz,
            "gamma_ref_per_s": self.gamma_ref,
            "sum_weights": self.sum_weights,
            "total_power": self.total_power,
            "n_modes": int(len(self.weights)),
            "mode_weights": [float(w) for w in self.weights],
            "mode_gammas_per_s": [float(g) for g in self.gammas],
        }

    def save_summary(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.summary(), fh, indent=1)


def _lorentzian_sum(weights: np.ndarray, gammas: np.ndarray, p_factor: float, delta_f):
    """sum_n (w_n/4) * 2 P Gamma_n / (Gamma_n^2 + 4 pi^2 delta_f^2)."""
    delta = np.atleast_1d(np.asarray(delta_f, dtype=float))
    num = 2.0 * p_factor * weights * gammas / 4.0
    out = (num[None, :] / (gammas[None, :] ** 2 + 4.0 * math.pi**2 * delta[:, None] ** 2)).sum(axis=1)
    return out


def _fwhm_and_zeta(weights, gammas, p_factor, span_hz):
    """Half-maximum width and in-band power fraction, both from the analytic sum.

    Returns (None, None) when the half level is not crossed within the grid
    span; the total-power denominator of zeta is the closed-form integral,
    so zeta does not depend on the grid.
    """
    s0 = float(_lorentzian_sum(weights, gammas, p_factor, 0.0)[0])

    def g(delta):
        return float(_lorentzian_sum(weights, gammas, p_factor, delta)[0]) - 0.5 * s0

    if span_hz <= 0 or g(span_hz) > 0:
        return None, None
    half_width = optimize.brentq(g, 0.0, span_hz, rtol=1e-13)
    fwhm = 2.0 * half_width
    total = p_factor * weights.sum() / 4.0
    in_band = (p_factor / 4.0) * (
        weights * (2.0 / math.pi) * np.arctan(2.0 * math.pi * half_width / gammas)
    ).sum()
    return fwhm, in_band / total


def spectrum_from_weights(
    weights,
    gammas,
    field: FieldSpec,
    stats: SpinStatistics,
    fgrid,
    *,
    gamma_ref: float,
    sum_weights: float | None = None,
) -> SpectrumResult:
    """Lorentzian-sum spectrum from explicit mode weights and decay rates.

    Used directly for synthetic weight sets; ``spin_noise_spectrum`` wraps
    it with the probe-overlap weights of a mode basis.
    """
    fgrid = np.asarray(fgrid, dtype=float)
    if fgrid.ndim != 1 or len(fgrid) < 2 or np.any(np.diff(fgrid) <= 0):
        raise ValueError("fgrid must be strictly increasing with at least 2 points")
    weights = np.asarray(weights, dtype=float)
    gammas = np.asarray(gammas, dtype=float)
    if np.any(gammas <= 0.0):
        raise ValueError(
            "a retained mode has zero total decay rate (delta line); "
            "use a finite wall-survival number N or gamma_homog > 0"
        )
    p = stats.p_factor
    Sxx = _lorentzian_sum(weights, gammas, p, fgrid - field.f0)
    Sxx_ref = _lorentzian_sum(np.array([weights.sum()]), np.array([gamma_ref]), p, fgrid - field.f0)
    span = min(field.f0 - fgrid[0], fgrid[-1] - field.f0)
    fwhm, zeta = _fwhm_and_zeta(weights, gammas, p, span)
    return SpectrumResult(
        fgrid=fgrid,
        Sxx=Sxx,
        Sxx_ref=Sxx_ref,
        f0=field.f0,
        p_factor=p,
        weights=weights,
        gammas=gammas,
        sum_weights=float(weights.sum()) if sum_weights is None else sum_weights,
        gamma_ref=gamma_ref,
        fwhm_hz=fwhm,
        zeta=zeta,
        total_power=p * weights.sum() / 4.0,
    )


def spin_noise_spectrum(
    basis: ModeBasis,
    probe: ProbeProfile,
    field: FieldSpec,
    stats: SpinStatistics,
    fgrid,
    *,
    gamma_homog: float = 0.0,
    weight_floor: float = 1e-14,
) -> SpectrumResult:
    """Spin-noise spectral density of the probe-weighted transverse spin.

    Every mode contributes one Lorentzian of width ``Gamma_n + gamma_homog``
    centered at the Larmor frequency, weighted by its squared probe overlap.
    ``gamma_homog`` adds a homogeneous (wall-free) relaxation rate to every
    mode; it must be positive when the basis contains a non-decaying uniform
    mode, whose contribution would otherwise be a delta line.

    Modes with squared overlap below ``weight_floor`` times the largest are
    dropped from the grid evaluation (their weight is still reported via
    ``sum_weights``).
    """
    if gamma_homog < 0:
        raise ValueError("gamma_homog must be >= 0")
    overlaps = probe_overlap(basis, probe)
    weights_all = np.abs(overlaps) ** 2
    sum_weights = float(weights_all.sum())
    gammas_all = basis.gammas + gamma_homog
    keep = weights_all > weight_floor * weights_all.max()
    # reference single mode of the same total power, width pi^2 D / w0^2
    gamma_ref = math.pi**2 * basis.wall.D / probe.w0**2
    return spectrum_from_weights(
        weights_all[keep],
        gammas_all[keep],
        field,
        stats,
        fgrid,
        gamma_ref=gamma_ref,
        sum_weights=sum_weights,
    )


def noise_content(spectrum: SpectrumResult) -> float:
    """Fraction of total spin-noise power within the FWHM around the peak.

    A single Lorentzian gives exactly 1/2.  Raises when the half-maximum
    was not resolvable within the spectrum's grid span.
    """
    if spectrum.zeta is None:
        raise FlatSpectrum("half maximum not bracketed by the frequency grid")
    return spectrum.zeta


# ---------------------------------------------------------------------------
# Squeezing decay
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SqueezingResult:
    """Beam-weighted spin variance versus dark time.

    ``variance`` follows the mode sum; ``variance_ref`` is the
    single-exponential reference with rate ``gamma_ref``.
    """

    tgrid: np.ndarray
    variance: np.ndarray
    variance_ref: np.ndarray
    x2_0: float
    weights: np.ndarray
    gammas: np.ndarray
    gamma_ref: float

    def to_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("t_s,variance,variance_ref\n")
            for t, v, r in zip(self.tgrid, self.variance, self.variance_ref):
                fh.write(f"{t:.12g},{v:.12g},{r:.12g}\n")

    def summary(self) -> dict:
        return {
            "x2_0": self.x2_0,
            "gamma_ref_per_s": self.gamma_ref,
            "sum_weights": float(self.weights.sum()),
            "n_modes": int(len(self.weights)),
        }


def squeezing_decay_from_weights(
    weights, gammas, x2_0: float, tgrid, *, gamma_ref: float = 0.0
) -> SqueezingResult:
    """Variance trace ``(sum_n w_n e^{-Gamma_n t})^2 (x2_0 - 1/4) + 1/4``.

    The squared weighted sum is exact for a measurement-induced (rank-one)
    squeezed perturbation on vacuum; the single-exponential reference decays
    at ``2 gamma_ref``.
    """
    weights = np.asarray(weights, dtype=float)
    gammas = np.asarray(gammas, dtype=float)
    tgrid = np.asarray(tgrid, dtype=float)
    if x2_0 <= 0:
        raise ValueError("initial variance must be positive")
    if np.any(tgrid < 0):
        raise ValueError("tgrid must be nonnegative")
    decay = np.exp(-np.outer(tgrid, gammas)) @ weights
    variance = decay**2 * (x2_0 - 0.25) + 0.25
    ref_decay = np.exp(-2.0 * gamma_ref * tgrid)
    variance_ref = x2_0 * ref_decay + (1.0 - ref_decay) / 4.0
    return SqueezingResult(
        tgrid=tgrid,
        variance=variance,
        variance_ref=variance_ref,
        x2_0=x2_0,
        weights=weights,
        gammas=gammas,
        gamma_ref=gamma_ref,
    )


def squeezing_decay(
    basis: ModeBasis,
    probe: ProbeProfile,
    x2_0: float,
    tgrid,
    *,
    gamma_homog: float = 0.0,
    weight_floor: float = 1e-14,
) -> SqueezingResult:
    """Decay of the probe-weighted variance after a squeezing pulse.

    Squeezed input has ``0 < x2_0 <= 1/4`` (anti-squeezed above 1/4 is
    allowed); the variance relaxes to the vacuum value 1/4 once every
    contributing mode has decayed.
    """
    overlaps = probe_overlap(basis, probe)
    weights = np.abs(overlaps) ** 2
    keep = weights > weight_floor * weights.max()
    gamma_ref = math.pi**2 * basis.wall.D / probe.w0**2
    return squeezing_decay_from_weights(
        weights[keep], basis.gammas[keep] + gamma_homog, x2_0, tgrid, gamma_ref=gamma_ref
    )


def uniform_radial_weights(geometry, wall, n_modes: int):
    """Squared overlaps of a transversally uniform profile with the disk modes.

    Restricted to the angular-symmetric radial family of the cylinder cross
    section; used for squeezing initialized uniformly across the cell rather
    than by a finite probe.  Returns ``(weights, gammas)``.
    """
    from .modes import _disk_factor_modes  # radial factors only

    if geometry.shape is not Shape.CYLINDRICAL:
        raise ValueError("uniform radial weights are defined for cylindrical cells")
    R, _ = geometry.dims
    ell = wall.robin_length()
    factors = _disk_factor_modes(R, ell, n_modes, max_angular=0)
    weights = np.empty(len(factors))
    gammas = np.empty(len(factors))
    from scipy import special

    for i, f in enumerate(factors):
        if f.k == 0.0:
            radial = R * R / 2.0
        else:
            radial = R * special.jv(1, f.k * R) / f.k
        # overlap with 1/sqrt(pi R^2): 2 pi A * radial / sqrt(pi R^2)
        weights[i] = (2.0 * math.pi * f.A * radial) ** 2 / (math.pi * R * R)
        gammas[i] = wall.D * f.k**2
    order = np.argsort(gammas)
    return weights[order], gammas[order]


def squeezing_db(variance) -> np.ndarray:
    """Squeezing depth in dB relative to the vacuum variance 1/4."""
    return -10.0 * np.log10(np.asarray(variance) / 0.25)


def half_squeezing_time(weights, gammas, x2_0: float, t_upper: float | None = None) -> float:
    """Time at which half the initial squeezing depth (in dB) is lost."""
    weights = np.asarray(weights, dtype=float)
    gammas = np.asarray(gammas, dtype=float)
    if not 0 < x2_0 < 0.25:
        raise ValueError("half-squeezing time needs a squeezed input, 0 < x2_0 < 1/4")

    def var(t):
        q = float(np.dot(weights, np.exp(-gammas * t)))
        return q * q * (x2_0 - 0.25) + 0.25

    db0 = float(squeezing_db(var(0.0)))
    target = db0 / 2.0

    def g(t):
        return float(squeezing_db(var(t))) - target

    if t_upper is None:
        pos = gammas[gammas > 0]
        if len(pos) == 0:
            raise ValueError("no decaying mode; squeezing never halves")
        t_upper = 5.0 / pos.min()
    hi = t_upper
    for _ in range(200):
        if g(hi) < 0:
            break
        hi *= 2.0
    else:
        raise ValueError("squeezing does not halve within the search window")
    return optimize.brentq(g, 0.0, hi, rtol=1e-12)
