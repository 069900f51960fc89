"""Diffusion-relaxation eigenmodes of a gas confined by partially depolarizing walls.

A spin excitation carried by atoms diffusing with coefficient ``D`` inside a
closed cell relaxes into a discrete set of spatial modes ``u_n(r)``.  Each
mode solves the homogeneous Helmholtz problem ``(D \\nabla^2 + Gamma) u = 0``
subject to a mixed (Robin) wall condition

    (1 - e^{-1/N}) u + c * lam * (1 + e^{-1/N}) (n . grad) u = 0,

where ``lam`` is the mean free path, ``N`` the average number of wall
collisions survived before depolarization, and ``c = 2/3`` in three
dimensions (``c = 2`` for the one-dimensional slab, where ``D = lam * vbar``
instead of ``lam * vbar / 3``).  The mode decays at ``Gamma = D k^2`` with
``k`` the root of a transcendental boundary equation that interpolates
between the depolarizing (Dirichlet) and spin-preserving (Neumann) limits.

Supported cells: 1D slab, rectangular box, cylinder, and sphere.  Modes of
the box and the cylinder are tensor products of 1D and transverse factors
and their decay rates add.  All lengths are in cm, rates in 1/s.
"""

from __future__ import annotations

import hashlib
import json
import math
import warnings
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy import optimize, special

from .errors import InvalidSymmetry, NonConvergence, OutOfDomain

__all__ = [
    "Shape",
    "CellGeometry",
    "WallGasSpec",
    "ModeFactor",
    "DiffusionMode",
    "ModeBasis",
    "robin_roots",
    "build_basis",
    "eval_mode",
    "asymptotic_gamma",
]

SERIALIZATION_FORMAT = 1

# Iteration budget for refining one bracketed root.
_MAX_REFINE_ITER = 200


class Shape(str, Enum):
    """Cell shapes with closed-form mode families."""

    SLAB1D = "slab1d"
    RECTANGULAR = "rectangular"
    CYLINDRICAL = "cylindrical"
    SPHERICAL = "spherical"


@dataclass(frozen=True)
class CellGeometry:
    """Cell shape plus dimensions in cm.

    ``dims`` holds ``(L,)`` for a slab, ``(Lx, Ly, Lz)`` for a box,
    ``(R, L)`` for a cylinder (axis along x), and ``(R,)`` for a sphere.
    """

    shape: Shape
    dims: tuple[float, ...]

    _NDIMS = {
        Shape.SLAB1D: 1,
        Shape.RECTANGULAR: 3,
        Shape.CYLINDRICAL: 2,
        Shape.SPHERICAL: 1,
    }

    def __post_init__(self):
        shape = Shape(self.shape)
        object.__setattr__(self, "shape", shape)
        dims = tuple(float(d) for d in self.dims)
        object.__setattr__(self, "dims", dims)
        if len(dims) != self._NDIMS[shape]:
            raise ValueError(
                f"{shape.value} cell needs {self._NDIMS[shape]} dimension(s), got {len(dims)}"
            )
        if any(d <= 0 for d in dims):
            raise ValueError("all cell dimensions must be positive")

    @classmethod
    def slab(cls, L: float) -> "CellGeometry":
        return cls(Shape.SLAB1D, (L,))

    @classmethod
    def rectangular(cls, Lx: float, Ly: float, Lz: float) -> "CellGeometry":
        return cls(Shape.RECTANGULAR, (Lx, Ly, Lz))

    @classmethod
    def cylindrical(cls, R: float, L: float) -> "CellGeometry":
        return cls(Shape.CYLINDRICAL, (R, L))

    @classmethod
    def spherical(cls, R: float) -> "CellGeometry":
        return cls(Shape.SPHERICAL, (R,))

    @property
    def volume(self) -> float:
        """Cell volume (length for the 1D slab)."""
        if self.shape is Shape.SLAB1D:
            return self.dims[0]
        if self.shape is Shape.RECTANGULAR:
            return self.dims[0] * self.dims[1] * self.dims[2]
        if self.shape is Shape.CYLINDRICAL:
            R, L = self.dims
            return math.pi * R * R * L
        R = self.dims[0]
        return 4.0 / 3.0 * math.pi * R**3

    @property
    def min_dimension(self) -> float:
        if self.shape is Shape.CYLINDRICAL:
            return min(self.dims)
        return min(self.dims)

    def to_dict(self) -> dict:
        return {"shape": self.shape.value, "dims": list(self.dims)}

    @classmethod
    def from_dict(cls, d: dict) -> "CellGeometry":
        return cls(Shape(d["shape"]), tuple(d["dims"]))


@dataclass(frozen=True)
class WallGasSpec:
    """Gas transport and wall-coating parameters.

    Parameters
    ----------
    D : diffusion coefficient, cm^2/s.
    lam : mean free path between velocity-changing collisions, cm.
    N : average number of wall collisions a spin survives before
        depolarizing.  ``math.inf`` selects the perfect spin-preserving
        (Neumann) limit exactly; intermediate values give a Robin wall.
    dirichlet : symbolic fully depolarizing limit.  This is distinct from
        small ``N``: for any finite ``N`` the boundary equation keeps a
        finite extrapolation length of order ``lam``.

    The mean thermal velocity follows the 3D kinetic relation
    ``vbar = 3 D / lam``.
    """

    D: float
    lam: float
    N: float = math.inf
    dirichlet: bool = False

    def __post_init__(self):
        for name in ("D", "lam", "N"):
            object.__setattr__(self, name, float(getattr(self, name)))
        if self.D <= 0:
            raise ValueError("diffusion coefficient D must be positive")
        if self.lam <= 0:
            raise ValueError("mean free path lam must be positive")
        if not self.dirichlet:
            if not self.N > 0:
                raise ValueError("wall-survival number N must be positive (or math.inf)")
        else:
            object.__setattr__(self, "N", 0.0)

    @classmethod
    def neumann(cls, D: float, lam: float) -> "WallGasSpec":
        """Perfect spin-preserving coating (no-flux wall)."""
        return cls(D=D, lam=lam, N=math.inf)

    @classmethod
    def dirichlet_limit(cls, D: float, lam: float) -> "WallGasSpec":
        """Fully depolarizing wall (mode functions vanish at the boundary)."""
        return cls(D=D, lam=lam, N=1.0, dirichlet=True)

    @property
    def is_neumann(self) -> bool:
        return not self.dirichlet and math.isinf(self.N)

    @property
    def is_dirichlet(self) -> bool:
        return self.dirichlet

    @property
    def vbar(self) -> float:
        """Mean thermal velocity, cm/s (3D relation D = lam*vbar/3)."""
        return 3.0 * self.D / self.lam

    @property
    def varpi(self) -> float:
        """Correlation distance of the wall-scattering noise, cm.

        ``varpi = (lam/3) / (e^{1/N} - 1)``; grows monotonically with N,
        approaching ``N*lam/3`` for a good coating and vanishing in the
        fully depolarizing limit.
        """
        if self.dirichlet:
            return 0.0
        if math.isinf(self.N):
            return math.inf
        return self.lam / (3.0 * math.expm1(1.0 / self.N))

    def robin_length(self, one_dimensional: bool = False) -> float:
        """Extrapolation length multiplying the normal derivative in the wall condition.

        Zero reproduces a Dirichlet wall, infinity a Neumann wall.  The
        kinetic prefactor is ``2*lam`` for the 1D slab and ``(2/3)*lam``
        for 3D cells.
        """
        if self.dirichlet:
            return 0.0
        if math.isinf(self.N):
            return math.inf
        c = 2.0 if one_dimensional else 2.0 / 3.0
        # 1 - e^{-1/N} via expm1 to survive N ~ 1e12 without cancellation
        num = 1.0 + math.exp(-1.0 / self.N)
        den = -math.expm1(-1.0 / self.N)
        return c * self.lam * num / den

    def validity_warnings(self, geometry: CellGeometry) -> list[str]:
        """Diffusive-regime sanity check: lam must be well below the cell size."""
        msgs = []
        dmin = geometry.min_dimension
        if self.lam > dmin / 10.0:
            msgs.append(
                f"mean free path lam={self.lam:g} cm exceeds min cell dimension/10 "
                f"({dmin / 10.0:g} cm); the diffusive wall condition is marginal"
            )
        return msgs

    def to_dict(self) -> dict:
        return {
            "D": self.D,
            "lam": self.lam,
            "N": "inf" if math.isinf(self.N) else self.N,
            "dirichlet": self.dirichlet,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "WallGasSpec":
        N = d["N"]
        N = math.inf if N == "inf" else float(N)
        if d.get("dirichlet", False):
            return cls.dirichlet_limit(d["D"], d["lam"])
        return cls(D=d["D"], lam=d["lam"], N=N)


# ---------------------------------------------------------------------------
# Root finding for the boundary equations
# ---------------------------------------------------------------------------


def _refine_root(f, lo: float, hi: float) -> float:
    try:
        return optimize.brentq(f, lo, hi, maxiter=_MAX_REFINE_ITER, xtol=1e-300, rtol=1e-15)
    except (RuntimeError, ValueError) as exc:
        raise NonConvergence(f"root refinement failed in [{lo:g}, {hi:g}]: {exc}") from exc


def _scan_roots(f, count: int, step: float, k_start: float) -> list[float]:
    """Collect the `count` smallest positive roots of f by sign-change scanning.

    The scan assumes f is continuous (pole-free forms are used throughout)
    and that consecutive roots are separated by more than `step`.
    """
    roots: list[float] = []
    k0 = k_start
    f0 = f(k0)
    # Walk until enough roots are collected; the asymptotic spacing of every
    # family is bounded below, so this terminates.
    guard = 0
    max_steps = int(200 * count / max(1e-12, 1.0)) + 100000
    while len(roots) < count:
        k1 = k0 + step
        f1 = f(k1)
        if f0 == 0.0:
            roots.append(k0)
        elif f0 * f1 < 0.0:
            roots.append(_refine_root(f, k0, k1))
        k0, f0 = k1, f1
        guard += 1
        if guard > max_steps:
            raise NonConvergence(
                f"found only {len(roots)} of {count} roots after scanning to k={k0:g}"
            )
    return roots[:count]


def _slab_roots(L: float, ell: float, parity: str, count: int) -> np.ndarray:
    """Roots of the slab boundary equation for one parity class.

    Symmetric modes ``cos(kx)`` satisfy ``cot(kL/2) = ell*k``; antisymmetric
    modes ``sin(kx)`` satisfy ``-tan(kL/2) = ell*k``.  The scan uses the
    pole-free forms ``cos - ell*k*sin`` and ``sin + ell*k*cos``.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    h = L / 2.0
    if math.isinf(ell):  # Neumann
        if parity == "+":
            # k = 2 n pi / L including the exact uniform root k = 0
            return np.array([2.0 * n * math.pi / L for n in range(count)])
        return np.array([(2.0 * n + 1.0) * math.pi / L for n in range(count)])
    if ell == 0.0:  # Dirichlet
        if parity == "+":
            return np.array([(2.0 * n + 1.0) * math.pi / L for n in range(count)])
        return np.array([2.0 * (n + 1.0) * math.pi / L for n in range(count)])
    if parity == "+":
        f = lambda k: math.cos(k * h) - ell * k * math.sin(k * h)
    elif parity == "-":
        f = lambda k: math.sin(k * h) + ell * k * math.cos(k * h)
    else:
        raise InvalidSymmetry(f"slab parity must be '+' or '-', got {parity!r}")
    step = min(math.pi / (100.0 * L), math.pi / L / 2.0)
    return np.array(_scan_roots(f, count, step, k_start=step * 1e-3))


def _disk_roots(R: float, ell: float, n_ang: int, count: int) -> np.ndarray:
    """Radial roots for the disk factor with angular order n_ang.

    Boundary equation ``J_n(kR) + ell*k*J_n'(kR) = 0``; the uniform mode
    ``k = 0`` exists only for the Neumann wall at ``n_ang = 0``.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    n = abs(int(n_ang))
    if math.isinf(ell):  # Neumann: roots of J_n'
        zeros = []
        extra = 0
        if n == 0:
            zeros.append(0.0)
            extra = 1
        if count - extra > 0:
            zeros.extend(special.jnp_zeros(n, count - extra))
        return np.array(zeros[:count]) / R
    if ell == 0.0:  # Dirichlet: roots of J_n
        return np.array(special.jn_zeros(n, count)) / R

    def f(k):
        x = k * R
        return special.jv(n, x) + ell * k * special.jvp(n, x)

    step = min(math.pi / (100.0 * R), math.pi / R / 2.0)
    return np.array(_scan_roots(f, count, step, k_start=step * 1e-3))


def _sphere_roots(R: float, ell: float, l_sph: int, count: int) -> np.ndarray:
    """Radial roots for the spherical cell with angular momentum l_sph.

    Boundary equation ``j_l(kR) + ell*k*j_l'(kR) = 0``; the uniform mode
    ``k = 0`` exists only for the Neumann wall at ``l_sph = 0``.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    l = int(l_sph)
    if l < 0:
        raise InvalidSymmetry("spherical index l must be >= 0")
    if math.isinf(ell):  # Neumann: roots of j_l'
        roots = []
        if l == 0:
            roots.append(0.0)
        f = lambda k: special.spherical_jn(l, k * R, derivative=True)
        step = min(math.pi / (100.0 * R), math.pi / R / 2.0)
        need = count - len(roots)
        if need > 0:
            roots.extend(_scan_roots(f, need, step, k_start=step))
        return np.array(roots[:count])
    if ell == 0.0:  # Dirichlet: roots of j_l; for l=0 these are n*pi/R
        if l == 0:
            return np.array([(n + 1.0) * math.pi / R for n in range(count)])
        f = lambda k: special.spherical_jn(l, k * R)
        step = min(math.pi / (100.0 * R), math.pi / R / 2.0)
        return np.array(_scan_roots(f, count, step, k_start=step))

    def f(k):
        x = k * R
        return special.spherical_jn(l, x) + ell * k * special.spherical_jn(l, x, derivative=True)

    step = min(math.pi / (100.0 * R), math.pi / R / 2.0)
    return np.array(_scan_roots(f, count, step, k_start=step * 1e-3))


def boundary_residual(geometry: CellGeometry, wall: WallGasSpec, symmetry, k: float) -> float:
    """Normalized residual of the boundary equation at wavenumber k.

    Evaluates ``|LHS - RHS| / (1 + |RHS|)`` on the form of the equation
    scaled through by the denominator of the trigonometric/Bessel ratio, so
    the measure stays finite at the ratio's poles.
    """
    ell = wall.robin_length(one_dimensional=geometry.shape is Shape.SLAB1D)
    shape = geometry.shape
    if shape in (Shape.SLAB1D, Shape.RECTANGULAR):
        if shape is Shape.SLAB1D:
            L = geometry.dims[0]
            parity = symmetry
        else:
            axis, parity = symmetry
            L = geometry.dims["xyz".index(axis)]
        h = L / 2.0
        if math.isinf(ell):
            lhs = math.sin(k * h) if parity == "+" else math.cos(k * h)
            return abs(lhs)
        if parity == "+":
            lhs, rhs = math.cos(k * h), ell * k * math.sin(k * h)
        else:
            lhs, rhs = math.sin(k * h), -ell * k * math.cos(k * h)
        return abs(lhs - rhs) / (1.0 + abs(rhs))
    if shape is Shape.CYLINDRICAL:
        R = geometry.dims[0]
        n = abs(int(symmetry))
        x = k * R
        if math.isinf(ell):
            return abs(special.jvp(n, x))
        lhs, rhs = special.jv(n, x), -ell * k * special.jvp(n, x)
        return abs(lhs - rhs) / (1.0 + abs(rhs))
    R = geometry.dims[0]
    l = int(symmetry)
    x = k * R
    if math.isinf(ell):
        return abs(special.spherical_jn(l, x, derivative=True))
    lhs = special.spherical_jn(l, x)
    rhs = -ell * k * special.spherical_jn(l, x, derivative=True)
    return abs(lhs - rhs) / (1.0 + abs(rhs))


def robin_roots(geometry: CellGeometry, wall: WallGasSpec, symmetry, count: int) -> np.ndarray:
    """Smallest `count` nonnegative wavenumbers of one symmetry class.

    Parameters
    ----------
    symmetry :
        Per-geometry class label.
        slab1d: ``"+"`` or ``"-"`` (parity).
        rectangular: ``(axis, parity)`` with axis in ``"xyz"``.
        cylindrical: ``("axial", parity)`` for the 1D factor along the
        cylinder axis, or ``("radial", n_ang)`` for the transverse factor.
        spherical: integer angular momentum ``l``.

    ``k = 0`` is returned when and only when it is an exact root, i.e. the
    spin-preserving Neumann wall in the uniform-capable class.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    shape = geometry.shape
    if shape is Shape.SLAB1D:
        if symmetry not in ("+", "-"):
            raise InvalidSymmetry(f"slab symmetry must be '+' or '-', got {symmetry!r}")
        ell = wall.robin_length(one_dimensional=True)
        return _slab_roots(geometry.dims[0], ell, symmetry, count)
    ell = wall.robin_length(one_dimensional=False)
    if shape is Shape.RECTANGULAR:
        try:
            axis, parity = symmetry
            L = geometry.dims["xyz".index(axis)]
        except (TypeError, ValueError) as exc:
            raise InvalidSymmetry(
                f"rectangular symmetry must be (axis, parity), got {symmetry!r}"
            ) from exc
        if parity not in ("+", "-"):
            raise InvalidSymmetry(f"parity must be '+' or '-', got {parity!r}")
        return _slab_roots(L, ell, parity, count)
    if shape is Shape.CYLINDRICAL:
        R, L = geometry.dims
        try:
            kind, label = symmetry
        except (TypeError, ValueError) as exc:
            raise InvalidSymmetry(
                f"cylindrical symmetry must be ('axial', parity) or ('radial', n), got {symmetry!r}"
            ) from exc
        if kind == "axial":
            if label not in ("+", "-"):
                raise InvalidSymmetry(f"parity must be '+' or '-', got {label!r}")
            return _slab_roots(L, ell, label, count)
        if kind == "radial":
            return _disk_roots(R, ell, int(label), count)
        raise InvalidSymmetry(f"unknown cylindrical class {kind!r}")
    if shape is Shape.SPHERICAL:
        try:
            l = int(symmetry)
        except (TypeError, ValueError) as exc:
            raise InvalidSymmetry(f"spherical symmetry must be an integer l, got {symmetry!r}") from exc
        return _sphere_roots(geometry.dims[0], ell, l, count)
    raise InvalidSymmetry(f"unsupported shape {shape}")


# ---------------------------------------------------------------------------
# Normalization constants
# ---------------------------------------------------------------------------


def _slab_norm(L: float, k: float, parity: str) -> float:
    """1/sqrt of the squared-mode integral over [-L/2, L/2]."""
    if k == 0.0:
        if parity == "-":
            raise ValueError("k = 0 is not a valid antisymmetric slab mode")
        return 1.0 / math.sqrt(L)
    s = math.sin(k * L) / (2.0 * k)
    i2 = L / 2.0 + s if parity == "+" else L / 2.0 - s
    return 1.0 / math.sqrt(i2)


def _disk_norm(R: float, k: float, n: int) -> float:
    """Normalization of J_n(k rho) e^{i n phi} over the disk (2D measure)."""
    if k == 0.0:
        if n != 0:
            raise ValueError("k = 0 is not a valid disk mode for n != 0")
        return 1.0 / math.sqrt(math.pi) / R
    x = k * R
    jp = special.jvp(n, x)
    j = special.jv(n, x)
    i2 = math.pi * R * R * (jp * jp + (1.0 - n * n / (x * x)) * j * j)
    return 1.0 / math.sqrt(i2)


def _sphere_norm(R: float, k: float, l: int) -> float:
    """Normalization of j_l(k r) Y_lp over the ball (the Y factor integrates to 1).

    Uses ``int_0^R j_l(kr)^2 r^2 dr = (R^3/2) [j_l^2 - j_{l-1} j_{l+1}]``
    at x = kR, with ``j_{-1}(x) = cos(x)/x``.
    """
    if k == 0.0:
        if l != 0:
            raise ValueError("k = 0 is not a valid spherical mode for l != 0")
        return math.sqrt(3.0 / R**3)
    x = k * R
    j = special.spherical_jn(l, x)
    jm = math.cos(x) / x if l == 0 else special.spherical_jn(l - 1, x)
    jp = special.spherical_jn(l + 1, x)
    i2 = (R**3 / 2.0) * (j * j - jm * jp)
    return 1.0 / math.sqrt(i2)


# ---------------------------------------------------------------------------
# Modes and bases
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ModeFactor:
    """One separable factor of a mode function.

    family: "slab" (cos/sin along one axis), "disk" (Bessel in the transverse
    plane), or "sphere" (spherical Bessel times spherical harmonic).
    """

    family: str
    label: tuple
    k: float
    A: float

    def to_dict(self) -> dict:
        return {"family": self.family, "label": list(self.label), "k": self.k, "A": self.A}

    @classmethod
    def from_dict(cls, d: dict) -> "ModeFactor":
        return cls(d["family"], tuple(d["label"]), d["k"], d["A"])


@dataclass(frozen=True)
class DiffusionMode:
    """A single diffusion-relaxation eigenmode.

    ``k`` is the total wavenumber (factor wavenumbers add in quadrature for
    tensor-product cells), ``Gamma = D k^2`` the decay rate, and ``A`` the
    overall normalization making the mode unit-norm over the cell.
    """

    labels: tuple
    k: float
    Gamma: float
    A: float
    factors: tuple[ModeFactor, ...]

    def to_dict(self) -> dict:
        return {
            "labels": _labels_to_json(self.labels),
            "k": self.k,
            "Gamma": self.Gamma,
            "A": self.A,
            "factors": [f.to_dict() for f in self.factors],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DiffusionMode":
        return cls(
            labels=_labels_from_json(d["labels"]),
            k=d["k"],
            Gamma=d["Gamma"],
            A=d["A"],
            factors=tuple(ModeFactor.from_dict(f) for f in d["factors"]),
        )


def _labels_to_json(labels):
    if isinstance(labels, tuple):
        return {"t": [_labels_to_json(x) for x in labels]}
    return labels


def _labels_from_json(obj):
    if isinstance(obj, dict) and "t" in obj:
        return tuple(_labels_from_json(x) for x in obj["t"])
    return obj


def _normalize_truncation(geometry: CellGeometry, truncation, max_angular: int, max_ell: int):
    shape = geometry.shape
    if shape is Shape.CYLINDRICAL:
        if isinstance(truncation, int):
            n_ax, n_rad = truncation, truncation
        else:
            n_ax, n_rad = truncation
        return (("axial", int(n_ax)), ("radial", int(n_rad)), ("max_angular", int(max_angular)))
    if not isinstance(truncation, int):
        raise ValueError(f"{shape.value} truncation must be an int (roots per class)")
    if shape is Shape.SPHERICAL:
        return (("radial", truncation), ("max_ell", int(max_ell)))
    return (("per_class", truncation),)


def _slab_factor_modes(L: float, ell: float, count: int, axis_name: str) -> list[ModeFactor]:
    out = []
    for parity in ("+", "-"):
        ks = _slab_roots(L, ell, parity, count)
        for n, k in enumerate(ks):
            if k == 0.0 and parity == "-":
                continue
            out.append(
                ModeFactor(
                    family="slab",
                    label=(axis_name, parity, n),
                    k=float(k),
                    A=_slab_norm(L, float(k), parity),
                )
            )
    return out


def _disk_factor_modes(R: float, ell: float, count: int, max_angular: int) -> list[ModeFactor]:
    out = []
    orders = range(-max_angular, max_angular + 1) if max_angular > 0 else (0,)
    for n_ang in orders:
        ks = _disk_roots(R, ell, abs(n_ang), count)
        for nu, k in enumerate(ks):
            out.append(
                ModeFactor(
                    family="disk",
                    label=(n_ang, nu),
                    k=float(k),
                    A=_disk_norm(R, float(k), abs(n_ang)),
                )
            )
    return out


@dataclass(frozen=True)
class ModeBasis:
    """Ordered, truncated set of eigenmodes for one cell and wall spec.

    Modes are sorted by ascending decay rate.  The basis is orthonormal:
    the mode functions integrate pairwise to the identity over the cell.
    """

    geometry: CellGeometry
    wall: WallGasSpec
    modes: tuple[DiffusionMode, ...]
    truncation: tuple

    @property
    def gammas(self) -> np.ndarray:
        return np.array([m.Gamma for m in self.modes])

    @property
    def ks(self) -> np.ndarray:
        return np.array([m.k for m in self.modes])

    def __len__(self) -> int:
        return len(self.modes)

    def to_json(self) -> str:
        doc = {
            "format": SERIALIZATION_FORMAT,
            "geometry": self.geometry.to_dict(),
            "wall": self.wall.to_dict(),
            "truncation": [list(t) for t in self.truncation],
            "modes": [m.to_dict() for m in self.modes],
        }
        return json.dumps(doc, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "ModeBasis":
        doc = json.loads(text)
        fmt = doc.get("format")
        if fmt != SERIALIZATION_FORMAT:
            raise ValueError(f"unsupported basis serialization format {fmt!r}")
        return cls(
            geometry=CellGeometry.from_dict(doc["geometry"]),
            wall=WallGasSpec.from_dict(doc["wall"]),
            modes=tuple(DiffusionMode.from_dict(m) for m in doc["modes"]),
            truncation=tuple(tuple(t) for t in doc["truncation"]),
        )

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_json())

    @classmethod
    def load(cls, path) -> "ModeBasis":
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(fh.read())

    def fingerprint(self) -> str:
        return hashlib.sha1(self.to_json().encode()).hexdigest()


def build_basis(
    geometry: CellGeometry,
    wall: WallGasSpec,
    truncation,
    *,
    max_angular: int = 0,
    max_ell: int = 0,
    warn_validity: bool = True,
) -> ModeBasis:
    """Construct the normalized eigenmode basis of a cell.

    ``truncation`` is the number of boundary-equation roots kept per
    symmetry class (a ``(n_axial, n_radial)`` pair may be given for the
    cylinder).  Angular orders above 0 (cylinder) and spherical harmonics
    above l = 0 (sphere) are off by default; every application here is
    angularly symmetric.
    """
    if warn_validity:
        for msg in wall.validity_warnings(geometry):
            warnings.warn(msg, UserWarning, stacklevel=2)
    D = wall.D
    shape = geometry.shape
    modes: list[DiffusionMode] = []
    if shape is Shape.SLAB1D:
        if not isinstance(truncation, int) or truncation < 1:
            raise ValueError("truncation must be an int >= 1")
        ell = wall.robin_length(one_dimensional=True)
        for f in _slab_factor_modes(geometry.dims[0], ell, truncation, axis_name="x"):
            _, parity, n = f.label
            modes.append(
                DiffusionMode(
                    labels=(parity, n), k=f.k, Gamma=D * f.k**2, A=f.A, factors=(f,)
                )
            )
    elif shape is Shape.RECTANGULAR:
        if not isinstance(truncation, int) or truncation < 1:
            raise ValueError("truncation must be an int >= 1")
        ell = wall.robin_length()
        per_axis = [
            _slab_factor_modes(geometry.dims[i], ell, truncation, axis_name="xyz"[i])
            for i in range(3)
        ]
        for fx in per_axis[0]:
            for fy in per_axis[1]:
                for fz in per_axis[2]:
                    k2 = fx.k**2 + fy.k**2 + fz.k**2
                    modes.append(
                        DiffusionMode(
                            labels=(fx.label[1:], fy.label[1:], fz.label[1:]),
                            k=math.sqrt(k2),
                            Gamma=D * k2,
                            A=fx.A * fy.A * fz.A,
                            factors=(fx, fy, fz),
                        )
                    )
    elif shape is Shape.CYLINDRICAL:
        trunc = _normalize_truncation(geometry, truncation, max_angular, max_ell)
        n_ax = dict(trunc)["axial"]
        n_rad = dict(trunc)["radial"]
        if n_ax < 1 or n_rad < 1:
            raise ValueError("truncation must be >= 1 per class")
        R, L = geometry.dims
        ell = wall.robin_length()
        axial = _slab_factor_modes(L, ell, n_ax, axis_name="x")
        radial = _disk_factor_modes(R, ell, n_rad, max_angular)
        for fa in axial:
            for fr in radial:
                k2 = fa.k**2 + fr.k**2
                modes.append(
                    DiffusionMode(
                        labels=(fa.label[1:], fr.label),
                        k=math.sqrt(k2),
                        Gamma=D * k2,
                        A=fa.A * fr.A,
                        factors=(fa, fr),
                    )
                )
        return _finish_basis(geometry, wall, modes, trunc)
    elif shape is Shape.SPHERICAL:
        if not isinstance(truncation, int) or truncation < 1:
            raise ValueError("truncation must be an int >= 1")
        R = geometry.dims[0]
        ell_rob = wall.robin_length()
        for l in range(max_ell + 1):
            ks = _sphere_roots(R, ell_rob, l, truncation)
            for p in range(-l, l + 1):
                for n, k in enumerate(ks):
                    f = ModeFactor(
                        family="sphere",
                        label=(n, l, p),
                        k=float(k),
                        A=_sphere_norm(R, float(k), l),
                    )
                    modes.append(
                        DiffusionMode(
                            labels=(n, l, p), k=f.k, Gamma=D * f.k**2, A=f.A, factors=(f,)
                        )
                    )
    else:  # pragma: no cover
        raise InvalidSymmetry(f"unsupported shape {shape}")
    trunc = _normalize_truncation(geometry, truncation, max_angular, max_ell)
    return _finish_basis(geometry, wall, modes, trunc)


def _finish_basis(geometry, wall, modes, trunc) -> ModeBasis:
    modes.sort(key=lambda m: (m.Gamma, repr(m.labels)))
    return ModeBasis(geometry=geometry, wall=wall, modes=tuple(modes), truncation=trunc)


# ---------------------------------------------------------------------------
# Mode evaluation
# ---------------------------------------------------------------------------


def _eval_slab_factor(f: ModeFactor, x):
    if f.label[1] == "+":
        return f.A * np.cos(f.k * np.asarray(x))
    return f.A * np.sin(f.k * np.asarray(x))


def _eval_disk_factor(f: ModeFactor, rho, phi):
    n_ang, _ = f.label
    radial = f.A * special.jv(abs(n_ang), f.k * np.asarray(rho))
    if n_ang == 0:
        return radial
    return radial * np.exp(1j * n_ang * np.asarray(phi))


def _sph_harm(l: int, p: int, theta, phi):
    # scipy >= 1.15 renamed sph_harm; keep both spellings working
    if hasattr(special, "sph_harm_y"):
        return special.sph_harm_y(l, p, np.asarray(theta), np.asarray(phi))
    return special.sph_harm(p, l, np.asarray(phi), np.asarray(theta))


def _eval_sphere_factor(f: ModeFactor, r, theta, phi):
    _, l, p = f.label
    radial = f.A * special.spherical_jn(l, f.k * np.asarray(r))
    if l == 0:
        return radial / math.sqrt(4.0 * math.pi)
    return radial * _sph_harm(l, p, theta, phi)


def eval_mode(mode: DiffusionMode, geometry: CellGeometry, point):
    """Evaluate a mode function at one point (or arrays of points).

    Coordinates are geometry-native: ``x`` for the slab, ``(x, y, z)`` for
    the box, ``(x, rho, phi)`` for the cylinder (axis along x), and
    ``(r, theta, phi)`` for the sphere.  Angular (cylinder ``n != 0``) and
    spherical-harmonic (``p != 0`` or ``l > 0``) modes return complex values.
    """
    shape = geometry.shape
    tol = 1e-12
    if shape is Shape.SLAB1D:
        x = np.asarray(point[0] if isinstance(point, (tuple, list)) else point)
        L = geometry.dims[0]
        if np.any(np.abs(x) > L / 2.0 + tol):
            raise OutOfDomain("x outside the slab")
        return _eval_slab_factor(mode.factors[0], x)
    if shape is Shape.RECTANGULAR:
        x, y, z = (np.asarray(c) for c in point)
        for c, L in zip((x, y, z), geometry.dims):
            if np.any(np.abs(c) > L / 2.0 + tol):
                raise OutOfDomain("point outside the box")
        fx, fy, fz = mode.factors
        return _eval_slab_factor(fx, x) * _eval_slab_factor(fy, y) * _eval_slab_factor(fz, z)
    if shape is Shape.CYLINDRICAL:
        x, rho, phi = (np.asarray(c) for c in point)
        R, L = geometry.dims
        if np.any(np.abs(x) > L / 2.0 + tol) or np.any(rho > R + tol) or np.any(rho < 0):
            raise OutOfDomain("point outside the cylinder")
        fa, fr = mode.factors
        return _eval_slab_factor(fa, x) * _eval_disk_factor(fr, rho, phi)
    if shape is Shape.SPHERICAL:
        r, theta, phi = (np.asarray(c) for c in point)
        R = geometry.dims[0]
        if np.any(r > R + tol) or np.any(r < 0):
            raise OutOfDomain("point outside the sphere")
        return _eval_sphere_factor(mode.factors[0], r, theta, phi)
    raise InvalidSymmetry(f"unsupported shape {shape}")  # pragma: no cover


def asymptotic_gamma(geometry: CellGeometry, D: float, n: int) -> float:
    """Large-n estimate of the n-th decay rate, ``D (pi n V^{-1/3})^2``.

    Shape-independent; useful only for truncation-error bookkeeping, not as
    a substitute for the boundary-equation roots.
    """
    V = geometry.volume
    return D * (math.pi * n * V ** (-1.0 / 3.0)) ** 2
