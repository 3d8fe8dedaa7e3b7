"""Low-rank two-layer factorisation of the extended state.

The extended state is written as a sum over r single-particle bexciton
functions (SPFs),

    rho = sum_sigma R[sigma] (x) chi_sigma,

with M x M system blocks R[sigma] and orthonormal SPFs chi_sigma.  The SPFs
are either stored as dense tensors over all bexciton indices or as a
Tucker format: a core of shape (r, s_1, ..., s_K) and one orthonormal basis
of shape (N_k, s_k) per feature.

Propagation uses the basis-update-and-Galerkin (BUG) integrator for Tucker
tensors: each basis is updated by a small linear ODE with the other factors
frozen, then the core is evolved by a Galerkin projection onto the new
bases.  All sub-problems are linear and are advanced with one RK4 step.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np

from .eom import (
    DivergenceError,
    Dynamics,
    ExtendedState,
    PropagationConfig,
    StructureError,
    UnsupportedConfiguration,
    _axis_apply,
    _sample_schedule,
    dvr_for,
)
from .space import HierarchySpace

__all__ = [
    "FactoredState",
    "compress",
    "reconstruct",
    "step_factored",
    "memory_footprint",
    "dense_footprint",
    "factored_observables",
    "propagate_factored",
]

log = logging.getLogger(__name__)


@dataclass
class FactoredState:
    """``R``: (r, M, M) system blocks; ``core``: (r, s_1..s_K) SPF coefficients
    with orthonormal rows; ``factors``: per-feature (N_k, s_k) orthonormal
    bases, or None for dense SPFs (core then has shape (r, N_1..N_K))."""

    space: HierarchySpace
    R: np.ndarray
    core: np.ndarray
    factors: list[np.ndarray] | None = None
    t: float = 0.0

    @property
    def r(self) -> int:
        return self.R.shape[0]

    @property
    def M(self) -> int:
        return self.R.shape[1]

    @property
    def ranks(self) -> tuple[int, ...]:
        return self.core.shape[1:]

    def bases(self) -> list[np.ndarray]:
        if self.factors is None:
            return [np.eye(n, dtype=complex) for n in self.space.depths]
        return self.factors

    def spf_tensor(self) -> np.ndarray:
        """Dense SPFs chi_sigma, shape (r, N_1..N_K)."""
        x = self.core
        if self.factors is not None:
            for k, U in enumerate(self.factors):
                x = _axis_apply(U, x, k + 1)
        return x

    def gram(self) -> np.ndarray:
        b = self.core.reshape(self.r, -1)
        # factors are orthonormal, so the core rows carry the Gram matrix
        return b.conj() @ b.T


def dense_footprint(space: HierarchySpace, M: int) -> int:
    return M * M * space.size


def memory_footprint(fs: FactoredState) -> int:
    """Stored complex amplitudes over all factors."""
    n = fs.R.size + fs.core.size
    if fs.factors is not None:
        n += sum(U.size for U in fs.factors)
    return int(n)


def _lq_rows(core: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """core_(0) = L @ Q with orthonormal rows of Q."""
    r = core.shape[0]
    q, rr = np.linalg.qr(core.reshape(r, -1).conj().T)
    return rr.conj().T, q.conj().T.reshape(core.shape)


def compress(dense: ExtendedState, r: int, s: tuple[int, ...] | None = None) -> FactoredState:
    """Rank-r SVD across the system/bexciton split, optionally Tucker-truncated.

    ``r`` larger than the bipartition rank min(M^2, prod N_k) is clamped
    with a warning.
    """
    if r < 1:
        raise ValueError("rank r must be >= 1")
    M = dense.M
    sp = dense.space
    X = dense.data.reshape(M * M, -1)
    rmax = min(M * M, X.shape[1])
    if r > rmax:
        warnings.warn(f"rank {r} exceeds the bipartition rank {rmax}; using {rmax}", stacklevel=2)
        r = rmax
    U, S, Vh = np.linalg.svd(X, full_matrices=False)
    R = (U[:, :r] * S[:r]).T.reshape(r, M, M)
    chi = Vh[:r].reshape((r,) + sp.depths)
    if s is None:
        return FactoredState(sp, R, chi, None, dense.t)
    s = tuple(int(x) for x in s)
    if len(s) != sp.K or any(not 1 <= sk <= nk for sk, nk in zip(s, sp.depths)):
        raise StructureError(f"inner ranks {s} do not fit depths {sp.depths}")
    factors = []
    core = chi
    for k, sk in enumerate(s):
        unf = np.moveaxis(chi, k + 1, 0).reshape(sp.depths[k], -1)
        Uk = np.linalg.svd(unf, full_matrices=False)[0][:, :sk]
        factors.append(Uk)
        core = _axis_apply(Uk.conj().T, core, k + 1)
    L, core = _lq_rows(core)
    if core.shape[0] < r:
        raise StructureError(f"inner ranks {s} cannot hold {r} orthonormal SPFs")
    R = np.einsum("sij,sa->aij", R, L)
    return FactoredState(sp, R, core, factors, dense.t)


def reconstruct(fs: FactoredState) -> ExtendedState:
    chi = fs.spf_tensor()
    data = np.tensordot(fs.R, chi, axes=(0, 0))
    return ExtendedState(fs.space, data, fs.t)


# -- observables without the full tensor -------------------------------------


def factored_observables(fs: FactoredState) -> dict:
    """rho_S, purity, <n_k> and EDO norm computed from the factors."""
    sp = fs.space
    bases = fs.bases()
    if sp.representation == "number":
        probes = [U[0].copy() for U in bases]
        nops = [np.diag(np.arange(n, dtype=float)) for n in sp.depths]
    else:
        dvrs = dvr_for(sp)
        probes = [d.vacuum @ U for d, U in zip(dvrs, bases)]
        nops = [d.number_operator() for d in dvrs]
    x = fs.core
    for k in reversed(range(sp.K)):
        x = x @ probes[k]
    rho = np.tensordot(x, fs.R, axes=(0, 0))
    # weights W[s, s'] = Tr(R_s^dagger R_s')
    Rf = fs.R.reshape(fs.r, -1)
    W = Rf.conj() @ Rf.T
    nb = []
    for k in range(sp.K):
        Ak = bases[k].conj().T @ nops[k] @ bases[k]
        y = _axis_apply(Ak, fs.core, k + 1)
        G = fs.core.reshape(fs.r, -1).conj() @ y.reshape(fs.r, -1).T
        nb.append(float(np.sum(W * G).real))
    return {
        "rho": rho,
        "purity": float(np.vdot(rho, rho).real),
        "n_bex": np.array(nb),
        "norm": float(np.sqrt(np.trace(W).real)),
    }


# -- BUG integrator ----------------------------------------------------------


@dataclass
class _Term:
    mats: dict[int, np.ndarray]  # mode (0 = system superspace) -> matrix


def _terms(dyn: Dynamics) -> list[_Term]:
    out = []
    for t in dyn.kron_terms():
        m = {k + 1: A for k, A in t.modes.items()}
        if t.sys is not None:
            m[0] = t.sys
        out.append(_Term(m))
    return out


def _apply(terms: list[_Term], proj: list[dict[int, np.ndarray]], G: np.ndarray) -> np.ndarray:
    out = np.zeros_like(G)
    for p in proj:
        y = G
        for j, A in p.items():
            y = _axis_apply(A, y, j)
        out += y
    return out


def _rk4_linear(f, y, dt):
    k1 = f(y)
    k2 = f(y + (dt / 2) * k1)
    k3 = f(y + (dt / 2) * k2)
    k4 = f(y + dt * k3)
    return y + (dt / 6) * (k1 + 2 * k2 + 2 * k3 + k4)


@dataclass
class _Tucker:
    bases: list[np.ndarray]  # mode 0 = system superspace
    core: np.ndarray
    full: list[bool] = field(default_factory=list)


def _to_tucker(fs: FactoredState) -> _Tucker:
    M2 = fs.M * fs.M
    Rm = fs.R.reshape(fs.r, M2).T  # columns vec(R_sigma)
    U0, T = np.linalg.qr(Rm)
    core = _axis_apply(T, fs.core, 0)
    bases = [U0] + [U.astype(complex) for U in fs.bases()]
    full = [U0.shape[1] == M2] + [U.shape[1] == U.shape[0] for U in bases[1:]]
    return _Tucker(bases, core, full)


def _from_tucker(tk: _Tucker, like: FactoredState, t: float) -> FactoredState:
    L, core = _lq_rows(tk.core)
    Rm = tk.bases[0] @ L
    R = Rm.T.reshape(like.r, like.M, like.M)
    factors = None if like.factors is None else tk.bases[1:]
    return FactoredState(like.space, R, core, factors, t)


def _project(terms: list[_Term], bases: list[np.ndarray]) -> list[dict[int, np.ndarray]]:
    return [{j: bases[j].conj().T @ A @ bases[j] for j, A in t.mats.items()} for t in terms]


def _k_step(i: int, tk: _Tucker, terms: list[_Term], proj, dt: float) -> np.ndarray:
    """Updated orthonormal basis for mode ``i``."""
    G = tk.core
    si = G.shape[i]
    Gi = np.moveaxis(G, i, 0)
    Q, Rq = np.linalg.qr(Gi.reshape(si, -1).T)
    Qt = Q.T.reshape(Gi.shape)
    K0 = tk.bases[i] @ Rq.T
    Qc = Q.conj().T  # (si, P)

    def axis_in_moved(j):
        return j + 1 if j < i else j

    pure_i = np.zeros((K0.shape[0], K0.shape[0]), dtype=complex)
    right_only = np.zeros((si, si), dtype=complex)
    mixed: list[tuple[np.ndarray, np.ndarray]] = []
    for t, p in zip(terms, proj):
        others = {j: A for j, A in p.items() if j != i}
        if others:
            y = Qt
            for j, A in others.items():
                y = _axis_apply(A, y, axis_in_moved(j))
            Mt = Qc @ y.reshape(si, -1).T
            Mt = Mt.T  # right factor in K' = A K M^T
            if i in t.mats:
                mixed.append((t.mats[i], Mt))
            else:
                right_only += Mt
        elif i in t.mats:
            pure_i += t.mats[i]

    def f(K):
        out = pure_i @ K + K @ right_only
        for A, Mt in mixed:
            out += A @ (K @ Mt)
        return out

    K1 = _rk4_linear(f, K0, dt)
    Unew, _ = np.linalg.qr(K1)
    return Unew


def step_factored(fs: FactoredState, dt: float, dyn: Dynamics, terms: list[_Term] | None = None) -> FactoredState:
    """One rank-preserving BUG step of length ``dt``."""
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt!r}")
    if dyn.system.H_t is not None:
        raise UnsupportedConfiguration("factored propagation needs a static Hamiltonian")
    if dyn.space != fs.space:
        raise StructureError("dynamics and factored state live on different spaces")
    terms = _terms(dyn) if terms is None else terms
    tk = _to_tucker(fs)
    proj = _project(terms, tk.bases)
    new_bases = list(tk.bases)
    core = tk.core
    for i, full in enumerate(tk.full):
        if full:
            continue
        Unew = _k_step(i, tk, terms, proj, dt)
        core = _axis_apply(Unew.conj().T @ tk.bases[i], core, i)
        new_bases[i] = Unew
    proj_new = _project(terms, new_bases)
    core = _rk4_linear(lambda G: _apply(terms, proj_new, G), core, dt)
    if not np.all(np.isfinite(core)):
        raise DivergenceError(f"non-finite factored state at t={fs.t + dt:.6g}")
    return _from_tucker(_Tucker(new_bases, core, tk.full), fs, fs.t + dt)


def propagate_factored(cfg: PropagationConfig, r: int, s: tuple[int, ...] | None = None):
    """Factored analogue of ``propagate``; footprints go into ``traj.meta``."""
    from .eom import DIVERGENCE_FACTOR, init_state
    from .observables import Sample, Trajectory

    dyn = Dynamics(cfg.system, cfg.features, cfg.metric, cfg.space)
    terms = _terms(dyn)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        fs = compress(init_state(cfg.system, cfg.space), r, s)
    n_steps, every = _sample_schedule(cfg)
    traj = Trajectory()
    traj.meta.update(
        rank=fs.r,
        requested_rank=r,
        inner_ranks=list(fs.ranks),
        footprint=memory_footprint(fs),
        dense_footprint=dense_footprint(cfg.space, fs.M),
        warnings=[str(w.message) for w in caught],
    )

    def sample(f: FactoredState, norm_base: float | None = None) -> tuple[Sample, float]:
        ob = factored_observables(f)
        rho = ob["rho"]
        smp = Sample(f.t, np.real(np.diag(rho)).copy(), ob["purity"], ob["n_bex"], ob["norm"], complex(np.trace(rho)))
        return smp, ob["norm"]

    s0, base = sample(fs)
    traj.append(s0)
    for i in range(1, n_steps + 1):
        try:
            fs = step_factored(fs, cfg.dt, dyn, terms)
        except DivergenceError:
            traj.mark_diverged(traj.samples[-1].t)
            return traj
        if i % every == 0 or i == n_steps:
            smp, norm = sample(fs)
            if not np.isfinite(norm) or norm > DIVERGENCE_FACTOR * base:
                traj.mark_diverged(traj.samples[-1].t, t_detect=fs.t)
                return traj
            traj.append(smp)
    traj.meta["max_gram_defect"] = float(np.max(np.abs(fs.gram() - np.eye(fs.r))))
    return traj
