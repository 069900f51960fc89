"""Collective spin observables of diffusing thermal gases in confined cells.

The package solves the diffusion-relaxation eigenmode problem for gas cells
with partially depolarizing walls and uses the resulting mode bases to
predict spin-noise spectra, squeezed-state lifetimes, and excitation
exchange between two co-located spin species.  A Brownian-particle
Monte-Carlo simulator provides an independent cross-check of decay rates
and spectra.

Units: lengths in cm, diffusion coefficients in cm^2/s, rates in 1/s,
frequencies in Hz.  Quadrature convention: x = (a + a^dagger)/2, so the
vacuum variance is 1/4.
"""

from .errors import (
    AxisMismatch,
    ConfigError,
    FitFailure,
    FlatSpectrum,
    GeometryMismatch,
    InsufficientSamples,
    InvalidSymmetry,
    NonConvergence,
    OutOfDomain,
    SpinGasError,
    StiffnessFailure,
)
from .modes import (
    CellGeometry,
    DiffusionMode,
    ModeBasis,
    ModeFactor,
    Shape,
    WallGasSpec,
    asymptotic_gamma,
    build_basis,
    eval_mode,
    robin_roots,
)
from .overlaps import (
    OverlapMatrix,
    ProbeProfile,
    beam_atom_number,
    mode_overlap,
    modes_per_class,
    probe_overlap,
)
from .dynamics import (
    FieldSpec,
    SpectrumResult,
    SpinStatistics,
    SqueezingResult,
    mode_evolution,
    noise_content,
    noise_covariance,
    spin_noise_spectrum,
    squeezing_decay,
    uniform_radial_weights,
)
from .exchange import (
    ExchangeResult,
    ExchangeSystem,
    SpeciesSpec,
    exchange_fidelity,
    fidelity_map,
    transfer_amplitudes,
)
from .montecarlo import (
    ParticleEnsemble,
    SimConfig,
    empirical_spectrum,
    mode_decay_check,
    step,
)

__version__ = "0.1.0"
