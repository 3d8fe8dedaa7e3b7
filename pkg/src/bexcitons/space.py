"""Truncated bexciton space: index bookkeeping, metrics and DVR grids."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .bath import FeatureSet, ParameterError

__all__ = [
    "HierarchySpace",
    "MetricSpec",
    "DvrBasis",
    "enumerate_indices",
    "flat_offset",
    "metric_values",
    "dvr_build",
    "METRIC_PRESETS",
]

# hard cap on stored amplitudes of one extended state (complex128 => 16 B each)
MAX_AMPLITUDES = 2**28


@dataclass(frozen=True)
class HierarchySpace:
    """Depths ``N_k`` per feature and the representation of the ladder.

    ``representation`` is ``"number"`` or ``"position"``; in position mode
    ``dvr_kind`` is ``"sinc"`` or ``"sine"`` and ``lengths`` gives the box
    length L_k per feature.
    """

    depths: tuple[int, ...]
    representation: str = "number"
    dvr_kind: str = "sinc"
    lengths: tuple[float, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "depths", tuple(int(n) for n in self.depths))
        if len(self.depths) < 1:
            raise ParameterError("need at least one feature (K >= 1)")
        if min(self.depths) < 2:
            raise ParameterError(f"every depth must be >= 2, got {self.depths}")
        if self.representation not in ("number", "position"):
            raise ParameterError(f"unknown representation {self.representation!r}")
        if self.representation == "position":
            if self.dvr_kind not in ("sinc", "sine"):
                raise ParameterError(f"unknown DVR kind {self.dvr_kind!r}")
            lengths = tuple(float(x) for x in self.lengths)
            if len(lengths) == 1:
                lengths = lengths * len(self.depths)
            if len(lengths) != len(self.depths) or min(lengths) <= 0:
                raise ParameterError("position representation needs a positive box length per feature")
            object.__setattr__(self, "lengths", lengths)
        if self.size > MAX_AMPLITUDES:
            raise ParameterError(f"hierarchy of {self.size} blocks exceeds the memory guard")

    @property
    def K(self) -> int:
        return len(self.depths)

    @property
    def size(self) -> int:
        return int(np.prod(self.depths, dtype=np.int64))

    @classmethod
    def number(cls, depths) -> "HierarchySpace":
        return cls(tuple(depths), "number")

    @classmethod
    def position(cls, depths, lengths, kind: str = "sinc") -> "HierarchySpace":
        return cls(tuple(depths), "position", kind, tuple(np.atleast_1d(lengths)))


def enumerate_indices(space: HierarchySpace) -> list[tuple[int, ...]]:
    """All multi-indices in row-major order (first feature slowest)."""
    return list(itertools.product(*(range(n) for n in space.depths)))


def flat_offset(space: HierarchySpace, n) -> int:
    return int(np.ravel_multi_index(tuple(n), space.depths))


# -- metric ------------------------------------------------------------------

METRIC_PRESETS = (
    "Unit",
    "ScaledConst",
    "ScaledAbs",
    "PaperDL",
    "PaperBrownian",
    "SignedPair",
    "HeomStandard",
    "Explicit",
)


def _pair_root(fs: FeatureSet, k: int) -> complex:
    # i sqrt|Re(c_k + cbar_k)/2|; negative arguments (Bose features of a
    # Brownian bath) use the magnitude so that z stays imaginary
    val = float(np.real(fs.c[k] + fs.c_bar[k]) / 2)
    if val == 0 or not np.isfinite(val):
        raise ParameterError(f"metric undefined for feature {k}: Re(c+cbar)/2 = {val}")
    return 1j * np.sqrt(abs(val))


@dataclass(frozen=True)
class MetricSpec:
    """Metric z_{k,n} attached to each ladder level.

    Presets: ``Unit`` (i), ``ScaledConst`` (i sqrt|c_k|), ``ScaledAbs``
    (i sqrt((|c_k|+|cbar_k|)/2)), ``PaperDL`` (i sqrt(Re c_k)),
    ``PaperBrownian`` (i sqrt|Re(c_k+cbar_k)/2|), ``SignedPair`` (as
    PaperBrownian, with the sign flipped on the second member of each
    conjugate pair), ``HeomStandard`` (i / sqrt(n)), and ``Explicit``
    (per-feature constants in ``constants``).
    """

    preset: str = "Unit"
    constants: tuple[complex, ...] = ()

    def __post_init__(self) -> None:
        if self.preset not in METRIC_PRESETS:
            raise ParameterError(f"unknown metric preset {self.preset!r}")
        if self.preset == "Explicit" and not self.constants:
            raise ParameterError("Explicit metric needs per-feature constants")

    @property
    def is_constant(self) -> bool:
        return self.preset != "HeomStandard"

    def constant(self, fs: FeatureSet, k: int) -> complex:
        """Level-independent value for feature ``k`` (constant presets only)."""
        p = self.preset
        c, cb = fs.c[k], fs.c_bar[k]
        if p == "Unit":
            z = 1j
        elif p == "ScaledConst":
            z = 1j * np.sqrt(abs(c))
        elif p == "ScaledAbs":
            z = 1j * np.sqrt((abs(c) + abs(cb)) / 2)
        elif p == "PaperDL":
            if not c.real > 0:
                raise ParameterError(f"PaperDL metric needs Re c_k > 0; feature {k} has Re c = {c.real:.6g}")
            z = 1j * np.sqrt(c.real)
        elif p == "PaperBrownian":
            z = _pair_root(fs, k)
        elif p == "SignedPair":
            z = _pair_root(fs, k)
            if fs.kappa[k] < k:
                z = -z
        elif p == "Explicit":
            z = complex(self.constants[k])
        else:
            raise ParameterError(f"metric {p} is level dependent")
        if z == 0 or not np.isfinite(z):
            raise ParameterError(f"metric value for feature {k} is zero or undefined")
        return complex(z)

    def levels(self, fs: FeatureSet, k: int, depth: int) -> np.ndarray:
        """Array ``z`` of length ``depth`` with ``z[n] = z_{k,n}`` for n >= 1.

        ``z[0]`` is never used by the equations of motion and is set to 1.
        """
        n = np.arange(depth)
        if self.preset == "HeomStandard":
            z = np.ones(depth, dtype=complex)
            z[1:] = 1j / np.sqrt(n[1:])
            return z
        z = np.full(depth, self.constant(fs, k), dtype=complex)
        z[0] = 1.0
        return z


def metric_values(spec: MetricSpec, fs: FeatureSet, k: int, n: int) -> complex:
    """Single value z_{k,n} with n >= 1."""
    if n < 1:
        raise ValueError("metric levels start at n = 1")
    return complex(spec.levels(fs, k, n + 1)[n])


# -- DVR ---------------------------------------------------------------------


@dataclass(frozen=True)
class DvrBasis:
    kind: str
    points: np.ndarray
    D1: np.ndarray = field(repr=False)
    D2: np.ndarray = field(repr=False)
    vacuum: np.ndarray = field(repr=False)
    spacing: float = 1.0

    @property
    def n(self) -> int:
        return len(self.points)

    @property
    def X(self) -> np.ndarray:
        return np.diag(self.points)

    def number_operator(self) -> np.ndarray:
        """(x^2 - d^2/dx^2 - 1)/2 on the grid."""
        return 0.5 * (np.diag(self.points**2) - self.D2 - np.eye(self.n))

    def annihilation(self) -> np.ndarray:
        return (self.X + self.D1) / np.sqrt(2)

    def creation(self) -> np.ndarray:
        return (self.X - self.D1) / np.sqrt(2)

    def savetxt(self, prefix: str) -> None:
        for name in ("points", "D1", "D2", "vacuum"):
            np.savetxt(f"{prefix}_{name}.txt", np.atleast_2d(getattr(self, name)))


def dvr_build(kind: str, N: int, L: float) -> DvrBasis:
    """Sinc (Colbert-Miller) or Sine (particle in a box) DVR on (-L/2, L/2)."""
    if N < 2 or L <= 0:
        raise ParameterError("DVR needs N >= 2 and L > 0")
    kind = kind.lower()
    if kind == "sinc":
        dx = L / N
        m = np.arange(N)
        x = (m - (N - 1) / 2) * dx
        diff = m[:, None] - m[None, :]
        off = diff != 0
        sign = np.where(diff % 2 == 0, 1.0, -1.0)
        D1 = np.zeros((N, N))
        D1[off] = sign[off] / (dx * diff[off])
        D2 = np.full((N, N), -np.pi**2 / (3 * dx**2))
        D2[off] = -2 * sign[off] / (dx**2 * diff[off] ** 2)
    elif kind == "sine":
        dx = L / (N + 1)
        j = np.arange(1, N + 1)
        x = -L / 2 + j * dx
        U = np.sqrt(2 / (N + 1)) * np.sin(np.outer(j, j) * np.pi / (N + 1))
        jj, kk = np.meshgrid(j, j, indexing="ij")
        odd = (jj - kk) % 2 == 1
        fbr1 = np.zeros((N, N))
        fbr1[odd] = 4.0 * jj[odd] * kk[odd] / ((jj[odd] ** 2 - kk[odd] ** 2) * L)
        D1 = U.T @ fbr1 @ U
        D1 = 0.5 * (D1 - D1.T)
        D2 = U.T @ np.diag(-((j * np.pi / L) ** 2)) @ U
        D2 = 0.5 * (D2 + D2.T)
    else:
        raise ParameterError(f"unknown DVR kind {kind!r}")
    vac = np.sqrt(dx) * np.pi**-0.25 * np.exp(-(x**2) / 2)
    # the sampled Gaussian is short of unit norm on coarse grids
    vac /= np.linalg.norm(vac)
    return DvrBasis(kind, x, D1, D2, vac, dx)
