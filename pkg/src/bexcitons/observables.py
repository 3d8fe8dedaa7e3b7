"""Physical and bexcitonic observables of an extended state."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .bath import FeatureSet
from .eom import ExtendedState, StructureError, UnsupportedConfiguration, dvr_for
from .space import MetricSpec

__all__ = [
    "Sample",
    "Trajectory",
    "inner",
    "edo_norm",
    "purity",
    "bexciton_population",
    "extract_rho_S",
    "bexciton_density_map",
    "export_density_map",
    "sample_state",
    "pairing_factors",
    "hermiticity_defect",
]


def inner(e1: ExtendedState, e2: ExtendedState) -> complex:
    """Sum over blocks (or grid points) of Tr(rho1^dagger rho2)."""
    if e1.space != e2.space or e1.data.shape != e2.data.shape:
        raise StructureError("inner product needs states on the same space")
    return complex(np.vdot(e1.data, e2.data))


def edo_norm(state: ExtendedState) -> float:
    return math.sqrt(max(inner(state, state).real, 0.0))


def extract_rho_S(state: ExtendedState) -> np.ndarray:
    """Physical density matrix: the zero block, or the vacuum projection on the grid."""
    if state.space.representation == "number":
        return state.data[(slice(None), slice(None)) + (0,) * state.space.K].copy()
    y = state.data
    for d in reversed(dvr_for(state.space)):
        y = y @ d.vacuum
    return y


def purity(state: ExtendedState) -> float:
    rho = extract_rho_S(state)
    return float(np.vdot(rho, rho).real)


def bexciton_population(state: ExtendedState, k: int) -> float:
    """<n_k> = <<rho| n_k |rho>> with the ladder or grid number operator."""
    sp = state.space
    if not 0 <= k < sp.K:
        raise StructureError(f"feature index {k} out of range for K={sp.K}")
    ax = k + 2
    if sp.representation == "number":
        w = np.sum(np.abs(state.data) ** 2, axis=tuple(i for i in range(state.data.ndim) if i != ax))
        return float(np.arange(sp.depths[k]) @ w)
    nop = dvr_for(sp)[k].number_operator()
    y = np.moveaxis(state.data, ax, -1)
    return float(np.vdot(y, y @ nop.T).real)


def pairing_factors(fs: FeatureSet, metric: MetricSpec, depths: tuple[int, ...]) -> list[np.ndarray]:
    """Per-feature factors f_k(n) with rho_n^dagger = prod_k f_k(n_k) rho_kappa(n).

    Rescaling to the unit metric, rho_n = prod_k w_k(n_k) u_n with
    w_k(n) = prod_{m<=n} i/z_{k,m}, and u obeys u_n^dagger = u_kappa(n).
    """
    out = []
    for k, N in enumerate(depths):
        kk = fs.kappa[k]
        wk = np.cumprod(np.concatenate(([1.0], 1j / metric.levels(fs, k, N)[1:])))
        wkk = np.cumprod(np.concatenate(([1.0], 1j / metric.levels(fs, kk, depths[kk])[1:])))
        out.append(np.conj(wk) / wkk[:N])
    return out


def hermiticity_defect(state: ExtendedState, fs: FeatureSet, metric: MetricSpec) -> float:
    """max |rho_n^dagger - f(n) rho_kappa(n)| over all blocks (or grid points).

    On a grid the factor per feature must be +1 or -1 (imaginary constant
    metric); -1 becomes the reflection x_k -> -x_k of the symmetric grid.
    """
    sp = state.space
    kappa = list(fs.kappa)
    if any(sp.depths[k] != sp.depths[kappa[k]] for k in range(sp.K)):
        raise StructureError("paired features need equal depths")
    # bexciton axes of rho_kappa(n): axis k of the result takes axis kappa(k) of the data
    perm = (1, 0) + tuple(kappa[k] + 2 for k in range(sp.K))
    paired = np.transpose(state.data, perm)
    adj = state.data.conj()
    f = pairing_factors(fs, metric, sp.depths)
    if sp.representation == "number":
        for k, fk in enumerate(f):
            shape = [1] * adj.ndim
            shape[k + 2] = len(fk)
            paired = paired * fk.reshape(shape)
        return float(np.max(np.abs(adj - paired)))
    for k, fk in enumerate(f):
        sign = fk[1] if len(fk) > 1 else 1.0
        if abs(abs(sign) - 1) > 1e-12 or abs(sign.imag) > 1e-12:
            raise UnsupportedConfiguration("grid pairing needs an imaginary constant metric")
        if sign.real < 0:
            paired = np.flip(paired, axis=k + 2)
    return float(np.max(np.abs(adj - paired)))


def bexciton_density_map(state: ExtendedState) -> np.ndarray:
    """Tr(rho(x1, x2)^dagger rho(x1, x2)) on the grid of a two-feature state."""
    sp = state.space
    if sp.representation != "position" or sp.K != 2:
        raise UnsupportedConfiguration("density maps need a position-representation state with K=2")
    return np.sum(np.abs(state.data) ** 2, axis=(0, 1))


def export_density_map(state: ExtendedState, path: str, scale: float = 1.0) -> None:
    """Write the map as a text matrix (rows x1, columns x2) with a JSON sidecar."""
    m = bexciton_density_map(state)
    np.savetxt(path, m, fmt="%.17g")
    d1, d2 = dvr_for(state.space)
    meta = {"t": state.t, "x1": d1.points.tolist(), "x2": d2.points.tolist(), "scale": scale}
    with open(_sidecar(path), "w") as fh:
        json.dump(meta, fh, indent=1)


def _sidecar(path: str) -> str:
    stem = path[: -len(".txt")] if path.endswith(".txt") else path
    return stem + ".json"


@dataclass
class Sample:
    t: float
    pop: np.ndarray
    purity: float
    n_bex: np.ndarray
    norm: float
    trace: complex = 1.0


def sample_state(state: ExtendedState, baseline: float | None = None, norm: float | None = None) -> Sample:
    rho = extract_rho_S(state)
    return Sample(
        t=state.t,
        pop=np.real(np.diag(rho)).copy(),
        purity=float(np.vdot(rho, rho).real),
        n_bex=np.array([bexciton_population(state, k) for k in range(state.space.K)]),
        norm=edo_norm(state) if norm is None else norm,
        trace=complex(np.trace(rho)),
    )


@dataclass
class Trajectory:
    """Time series of sampled observables and a completion status."""

    samples: list[Sample] = field(default_factory=list)
    status: str = "completed"
    t_last: float | None = None
    t_detect: float | None = None
    meta: dict = field(default_factory=dict)

    def append(self, s: Sample) -> None:
        if self.samples and not s.t > self.samples[-1].t:
            raise ValueError("sample times must be strictly increasing")
        self.samples.append(s)

    def mark_diverged(self, t_last: float, t_detect: float | None = None) -> None:
        self.status = "diverged"
        self.t_last = t_last
        self.t_detect = t_last if t_detect is None else t_detect

    @property
    def diverged(self) -> bool:
        return self.status == "diverged"

    @property
    def t(self) -> np.ndarray:
        return np.array([s.t for s in self.samples])

    @property
    def pop(self) -> np.ndarray:
        return np.array([s.pop for s in self.samples])

    @property
    def purity(self) -> np.ndarray:
        return np.array([s.purity for s in self.samples])

    @property
    def n_bex(self) -> np.ndarray:
        return np.array([s.n_bex for s in self.samples])

    @property
    def norm(self) -> np.ndarray:
        return np.array([s.norm for s in self.samples])

    @property
    def trace(self) -> np.ndarray:
        return np.array([s.trace for s in self.samples])
