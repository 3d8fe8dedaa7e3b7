"""Equations of motion for the extended density operator.

The extended state holds every auxiliary density matrix in one complex
array of shape ``(M, M, N_1, ..., N_K)``.  In number representation entry
``[..., n_1, ..., n_K]`` is the block rho_n; in position representation the
trailing axes index DVR grid points and hold grid coefficients.
"""

from __future__ import annotations

import functools
import logging
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
from scipy import integrate

from .bath import FeatureSet, ParameterError
from .space import DvrBasis, HierarchySpace, MetricSpec, dvr_build

__all__ = [
    "StructureError",
    "UnsupportedConfiguration",
    "DivergenceError",
    "SystemSpec",
    "ExtendedState",
    "PositionCoupling",
    "KronTerm",
    "Dynamics",
    "PropagationConfig",
    "init_state",
    "rhs_number",
    "rhs_position",
    "apply_terms",
    "step",
    "stability_monitor",
    "propagate",
    "dvr_for",
]

log = logging.getLogger(__name__)

DIVERGENCE_FACTOR = 1e6


class StructureError(ValueError):
    """Shapes or spaces of the inputs do not fit together."""


class UnsupportedConfiguration(ValueError):
    """The requested combination of options is not implemented."""


class DivergenceError(ArithmeticError):
    """The extended state became non-finite during a step."""


def _hermitian(a: np.ndarray, name: str, tol: float = 1e-12) -> np.ndarray:
    a = np.asarray(a, dtype=complex)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise StructureError(f"{name} must be a square matrix, got shape {a.shape}")
    if np.max(np.abs(a - a.conj().T), initial=0.0) > tol:
        raise ParameterError(f"{name} is not Hermitian")
    return a


@dataclass
class SystemSpec:
    """System Hamiltonian, coupling operator and initial density matrix.

    ``H_t``, if given, is a callable returning H_S(t) and replaces ``H``
    inside the equations of motion.
    """

    H: np.ndarray
    Q: np.ndarray
    rho0: np.ndarray
    H_t: Callable[[float], np.ndarray] | None = None

    def __post_init__(self) -> None:
        self.H = _hermitian(self.H, "H_S")
        self.Q = _hermitian(self.Q, "Q_S")
        self.rho0 = _hermitian(self.rho0, "rho_S(0)")
        M = self.H.shape[0]
        if self.Q.shape != (M, M) or self.rho0.shape != (M, M):
            raise StructureError("H_S, Q_S and rho_S(0) must share one dimension")
        if abs(np.trace(self.rho0) - 1) > 1e-12:
            raise ParameterError("rho_S(0) must have unit trace")
        if np.linalg.eigvalsh(self.rho0).min() < -1e-12:
            raise ParameterError("rho_S(0) must be positive semidefinite")

    @property
    def M(self) -> int:
        return self.H.shape[0]

    def hamiltonian(self, t: float) -> np.ndarray:
        return self.H if self.H_t is None else np.asarray(self.H_t(t), dtype=complex)

    @classmethod
    def qubit(cls, delta: float, v: float, rho0: np.ndarray | None = None) -> "SystemSpec":
        """H = (delta/2) sigma_z + v sigma_x coupled through sigma_z.

        Basis order is (g, e), so sigma_z = diag(-1, 1).  The default initial
        state is (|g> + |e>)/sqrt(2).
        """
        sz = np.diag([-1.0, 1.0])
        sx = np.array([[0.0, 1.0], [1.0, 0.0]])
        if rho0 is None:
            rho0 = np.full((2, 2), 0.5)
        return cls(delta / 2 * sz + v * sx, sz, rho0)


@dataclass
class ExtendedState:
    space: HierarchySpace
    data: np.ndarray
    t: float = 0.0
    diverged: bool = False

    @property
    def M(self) -> int:
        return self.data.shape[0]

    def copy(self) -> "ExtendedState":
        return replace(self, data=self.data.copy())


@functools.lru_cache(maxsize=32)
def _dvr_cached(kind: str, n: int, length: float) -> DvrBasis:
    return dvr_build(kind, n, length)


def dvr_for(space: HierarchySpace) -> list[DvrBasis]:
    if space.representation != "position":
        raise UnsupportedConfiguration("DVR grids exist only in position representation")
    return [_dvr_cached(space.dvr_kind, n, L) for n, L in zip(space.depths, space.lengths)]


def init_state(system: SystemSpec, space: HierarchySpace) -> ExtendedState:
    M = system.M
    data = np.zeros((M, M) + space.depths, dtype=complex)
    if space.representation == "number":
        data[(slice(None), slice(None)) + (0,) * space.K] = system.rho0
    else:
        prof = np.ones(())
        for d in dvr_for(space):
            prof = np.multiply.outer(prof, d.vacuum)
        data[...] = np.multiply.outer(system.rho0, prof)
    return ExtendedState(space, data, 0.0)


# -- small helpers on (M, M, ...) arrays -------------------------------------


def _left(A: np.ndarray, x: np.ndarray) -> np.ndarray:
    """A @ rho for every block."""
    M = A.shape[0]
    return (A @ x.reshape(M, -1)).reshape(x.shape)


def _right(x: np.ndarray, A: np.ndarray) -> np.ndarray:
    """rho @ A for every block."""
    return _axis_apply(A.T, x, 1)


def _axis_apply(A: np.ndarray, x: np.ndarray, axis: int) -> np.ndarray:
    """Apply matrix ``A`` along ``axis`` of ``x``."""
    shp = x.shape
    pre = int(np.prod(shp[:axis]))
    post = int(np.prod(shp[axis + 1 :]))
    new = shp[:axis] + (A.shape[0],) + shp[axis + 1 :]
    if post == 1:
        # a stack of matrix-vector products is slow; one GEMM is not
        return (x.reshape(pre, shp[axis]) @ A.T).reshape(new)
    return np.matmul(A, x.reshape(pre, shp[axis], post)).reshape(new)


def _sl(ndim: int, axis: int, s: slice) -> tuple:
    idx = [slice(None)] * ndim
    idx[axis] = s
    return tuple(idx)


# -- number representation ---------------------------------------------------


def _ladder_coeffs(z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # down[n] = z_{n+1} sqrt(n+1) for n = 0..N-2 ; up[n] = sqrt(n)/z_n for n = 1..N-1
    n = np.arange(len(z))
    return z[1:] * np.sqrt(n[1:]), np.sqrt(n[1:]) / z[1:]


def _rhs_number(rho, H, Q, c, cb, gamma, down, up):
    ndim = rho.ndim
    out = -1j * (_left(H, rho) - _right(rho, H))
    Qr, rQ = _left(Q, rho), _right(rho, Q)
    comm = Qr - rQ
    for k in range(ndim - 2):
        ax = k + 2
        N = rho.shape[ax]
        shape = [1] * ndim
        shape[ax] = N - 1
        if gamma[k] != 0:
            nk = np.arange(N, dtype=float).reshape(shape[:ax] + [N] + shape[ax + 1 :])
            out += (gamma[k] * nk) * rho
        hi, lo = _sl(ndim, ax, slice(1, None)), _sl(ndim, ax, slice(None, -1))
        out[lo] -= down[k].reshape(shape) * comm[hi]
        out[hi] += up[k].reshape(shape) * (c[k] * Qr[lo] - cb[k] * rQ[lo])
    return out


def _metric_levels(metric: MetricSpec, fs: FeatureSet, space: HierarchySpace) -> list[np.ndarray]:
    if fs.K != space.K:
        raise StructureError(f"feature count {fs.K} does not match hierarchy K={space.K}")
    return [metric.levels(fs, k, n) for k, n in enumerate(space.depths)]


def rhs_number(state: ExtendedState, t: float, system: SystemSpec, fs: FeatureSet, metric: MetricSpec) -> np.ndarray:
    """Time derivative of every auxiliary block in number representation."""
    if state.space.representation != "number":
        raise StructureError("rhs_number needs a number-representation state")
    if state.data.shape != (system.M, system.M) + state.space.depths:
        raise StructureError(f"state shape {state.data.shape} does not match system and space")
    zs = _metric_levels(metric, fs, state.space)
    lad = [_ladder_coeffs(z) for z in zs]
    return _rhs_number(
        state.data, system.hamiltonian(t), system.Q, fs.c, fs.c_bar, fs.gamma,
        [d for d, _ in lad], [u for _, u in lad],
    )


# -- position representation -------------------------------------------------


@dataclass(frozen=True)
class PositionCoupling:
    """g^{+-}_k = i (c_k / z_k +- z_k)/sqrt 2 and the c_bar analogues."""

    g_plus: np.ndarray
    g_minus: np.ndarray
    gbar_plus: np.ndarray
    gbar_minus: np.ndarray

    @classmethod
    def build(cls, fs: FeatureSet, z: np.ndarray) -> "PositionCoupling":
        z = np.asarray(z, dtype=complex)
        s2 = np.sqrt(2)
        return cls(
            1j * (fs.c / z + z) / s2,
            1j * (fs.c / z - z) / s2,
            1j * (fs.c_bar / z + z) / s2,
            1j * (fs.c_bar / z - z) / s2,
        )


def _position_ops(fs: FeatureSet, metric: MetricSpec, dvrs: list[DvrBasis]):
    if not metric.is_constant:
        raise UnsupportedConfiguration("position representation needs a level-independent metric")
    z = np.array([metric.constant(fs, k) for k in range(fs.K)])
    g = PositionCoupling.build(fs, z)
    ops = []
    for k, d in enumerate(dvrs):
        X = np.diag(d.points)
        A0 = fs.gamma[k] * d.number_operator()
        A1 = -1j * (g.g_minus[k] * X - g.g_plus[k] * d.D1)
        A2 = 1j * (g.gbar_minus[k] * X - g.gbar_plus[k] * d.D1)
        ops.append((A0, A1, A2))
    return ops


def _rhs_position(rho, H, Q, ops):
    out = -1j * (_left(H, rho) - _right(rho, H))
    left = np.zeros_like(rho)
    right = np.zeros_like(rho)
    for k, (A0, A1, A2) in enumerate(ops):
        out += _axis_apply(A0, rho, k + 2)
        left += _axis_apply(A1, rho, k + 2)
        right += _axis_apply(A2, rho, k + 2)
    return out + _left(Q, left) + _right(right, Q)


def rhs_position(
    state: ExtendedState, t: float, system: SystemSpec, fs: FeatureSet, metric: MetricSpec, dvr: list[DvrBasis] | None = None
) -> np.ndarray:
    """Time derivative of the grid coefficients in position representation."""
    if state.space.representation != "position":
        raise StructureError("rhs_position needs a position-representation state")
    if fs.K != state.space.K:
        raise StructureError(f"feature count {fs.K} does not match hierarchy K={state.space.K}")
    dvr = dvr_for(state.space) if dvr is None else dvr
    return _rhs_position(state.data, system.hamiltonian(t), system.Q, _position_ops(fs, metric, dvr))


# -- generator as a sum of Kronecker products --------------------------------


@dataclass
class KronTerm:
    """One product term: ``sys`` acts on row-major vec(rho) (None = identity),
    ``modes[k]`` acts on the k-th bexciton axis."""

    sys: np.ndarray | None
    modes: dict[int, np.ndarray] = field(default_factory=dict)


def _superop_left(A):
    return np.kron(A, np.eye(A.shape[0]))


def _superop_right(A):
    return np.kron(np.eye(A.shape[0]), A.T)


def apply_terms(terms: list[KronTerm], data: np.ndarray) -> np.ndarray:
    """Dense application of a term list (independent of the rhs_* kernels)."""
    M = data.shape[0]
    out = np.zeros_like(data)
    for term in terms:
        y = data
        for k, A in term.modes.items():
            y = _axis_apply(A, y, k + 2)
        if term.sys is not None:
            y = (term.sys @ y.reshape(M * M, -1)).reshape(data.shape)
        out += y
    return out


class Dynamics:
    """Bound equations of motion for one system, bath and hierarchy space.

    Calling the object returns d(data)/dt; coefficients are computed once.
    """

    def __init__(self, system: SystemSpec, fs: FeatureSet, metric: MetricSpec, space: HierarchySpace):
        if fs.K != space.K:
            raise StructureError(f"feature count {fs.K} does not match hierarchy K={space.K}")
        self.system, self.fs, self.metric, self.space = system, fs, metric, space
        self.shape = (system.M, system.M) + space.depths
        if space.representation == "number":
            self.z = _metric_levels(metric, fs, space)
            lad = [_ladder_coeffs(z) for z in self.z]
            self._down = [d for d, _ in lad]
            self._up = [u for _, u in lad]
        else:
            self.dvr = dvr_for(space)
            self._ops = _position_ops(fs, metric, self.dvr)

    def __call__(self, t: float, data: np.ndarray) -> np.ndarray:
        H = self.system.hamiltonian(t)
        if self.space.representation == "number":
            fs = self.fs
            return _rhs_number(data, H, self.system.Q, fs.c, fs.c_bar, fs.gamma, self._down, self._up)
        return _rhs_position(data, H, self.system.Q, self._ops)

    def kron_terms(self, t: float = 0.0) -> list[KronTerm]:
        """The generator as a list of Kronecker-product terms."""
        H, Q = self.system.hamiltonian(t), self.system.Q
        terms = [KronTerm(-1j * (_superop_left(H) - _superop_right(H)))]
        QL, QR = _superop_left(Q), _superop_right(Q)
        fs = self.fs
        for k, N in enumerate(self.space.depths):
            if self.space.representation == "number":
                terms.append(KronTerm(None, {k: np.diag(fs.gamma[k] * np.arange(N))}))
                down = np.diag(self._down[k], 1)
                up = np.diag(self._up[k], -1)
                terms.append(KronTerm(-(QL - QR), {k: down}))
                terms.append(KronTerm(fs.c[k] * QL - fs.c_bar[k] * QR, {k: up}))
            else:
                A0, A1, A2 = self._ops[k]
                terms.append(KronTerm(None, {k: A0}))
                terms.append(KronTerm(QL, {k: A1}))
                terms.append(KronTerm(QR, {k: A2}))
        return terms


# -- integration -------------------------------------------------------------


def _rk4(f, t, y, dt):
    k1 = f(t, y)
    k2 = f(t + dt / 2, y + (dt / 2) * k1)
    k3 = f(t + dt / 2, y + (dt / 2) * k2)
    k4 = f(t + dt, y + dt * k3)
    return y + (dt / 6) * (k1 + 2 * k2 + 2 * k3 + k4)


def step(
    state: ExtendedState,
    dt: float,
    rhs: Callable[[float, np.ndarray], np.ndarray],
    method: str = "RK4",
    tol: float = 1e-8,
    dt_min: float = 1e-10,
    dt_max: float | None = None,
) -> ExtendedState:
    """Advance ``state`` by ``dt``; ``rhs(t, data)`` gives the derivative.

    ``RK45`` subdivides the interval adaptively (Dormand-Prince) with
    relative and absolute tolerance ``tol``.
    """
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt!r}")
    if method == "RK4":
        new = _rk4(rhs, state.t, state.data, dt)
    elif method == "RK45":
        shape = state.data.shape
        sol = integrate.solve_ivp(
            lambda t, y: rhs(t, y.reshape(shape)).ravel(),
            (state.t, state.t + dt),
            state.data.ravel(),
            method="RK45",
            rtol=tol,
            atol=tol,
            first_step=None,
            max_step=dt_max or np.inf,
        )
        if not sol.success:
            raise DivergenceError(f"RK45 failed: {sol.message}")
        new = sol.y[:, -1].reshape(shape)
    else:
        raise UnsupportedConfiguration(f"unknown integrator {method!r}")
    out = ExtendedState(state.space, new, state.t + dt)
    if not np.all(np.isfinite(new)):
        out.diverged = True
        raise DivergenceError(f"non-finite amplitudes at t={out.t:.6g}")
    return out


def stability_monitor(state: ExtendedState, baseline_norm: float) -> tuple[float, bool]:
    """EDO norm and whether it left the stable regime."""
    norm = float(np.sqrt(np.vdot(state.data, state.data).real))
    diverged = (not np.isfinite(norm)) or norm > DIVERGENCE_FACTOR * baseline_norm
    return norm, diverged


@dataclass
class PropagationConfig:
    system: SystemSpec
    features: FeatureSet
    space: HierarchySpace
    metric: MetricSpec = field(default_factory=MetricSpec)
    method: str = "RK4"
    dt: float = 1e-3
    tol: float = 1e-8
    t_final: float = 10.0
    sample_dt: float = 0.05
    map_times: tuple[float, ...] = ()


def _sample_schedule(cfg: PropagationConfig) -> tuple[int, int]:
    if cfg.dt <= 0 or cfg.sample_dt <= 0 or cfg.t_final < 0:
        raise ParameterError("dt and sample_dt must be positive and t_final non-negative")
    n_steps = int(round(cfg.t_final / cfg.dt))
    every = max(1, int(round(cfg.sample_dt / cfg.dt)))
    if abs(n_steps * cfg.dt - cfg.t_final) > 1e-9 * max(1.0, cfg.t_final):
        raise ParameterError("t_final must be a multiple of dt")
    return n_steps, every


def propagate(cfg: PropagationConfig, on_sample: Callable | None = None):
    """Integrate from t = 0 to ``t_final`` and record observables.

    Stops early with status ``diverged`` once the stability monitor fires;
    samples up to that point are kept.  ``on_sample(state)`` is called at
    every sample (used for streaming output and density maps).
    """
    from .observables import Trajectory, sample_state

    dyn = Dynamics(cfg.system, cfg.features, cfg.metric, cfg.space)
    state = init_state(cfg.system, cfg.space)
    n_steps, every = _sample_schedule(cfg)
    traj = Trajectory()
    base, _ = stability_monitor(state, 1.0)
    traj.append(sample_state(state, base))
    if on_sample:
        on_sample(state)
    maps = {int(round(t / cfg.dt)) for t in cfg.map_times}
    for i in range(1, n_steps + 1):
        try:
            state = step(state, cfg.dt, dyn, cfg.method, cfg.tol)
        except DivergenceError:
            traj.mark_diverged(state.t)
            log.warning("integration produced non-finite values after t=%.4g", state.t)
            return traj
        if i % every == 0 or i == n_steps or i in maps:
            norm, bad = stability_monitor(state, base)
            if bad:
                traj.mark_diverged(traj.samples[-1].t, t_detect=state.t)
                log.info("divergence monitor fired at t=%.4g", state.t)
                return traj
            if i % every == 0 or i == n_steps:
                traj.append(sample_state(state, base, norm=norm))
            if on_sample:
                on_sample(state)
    return traj
