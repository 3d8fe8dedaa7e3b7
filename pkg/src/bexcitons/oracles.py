"""Independent reference solutions used to check the engine.

Pure dephasing
--------------
With H = (delta/2) sigma_z and coupling sigma_z the bath only dresses the
coherence.  Second-order cumulants are exact for a Gaussian bath, giving

    rho_ge(t) = rho_ge(0) exp(+i delta t) exp(-Gamma(t)),
    Gamma(t)  = 4 int_0^t (t - tau) Re C(tau) dtau,

where the factor 4 comes from the eigenvalue difference (+1) - (-1) = 2
squared.  For C(t) = sum_k c_k exp(gamma_k t) the integral is elementary:

    Gamma(t) = 4 sum_k Re[c_k (exp(gamma_k t) - 1 - gamma_k t) / gamma_k^2].
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy import integrate

from .bath import BathSpec, FeatureSet, ParameterError, bcf_quadrature
from .eom import PropagationConfig, UnsupportedConfiguration, propagate
from .observables import Trajectory

__all__ = [
    "DephasingOracle",
    "decoherence_function",
    "decoherence_quadrature",
    "pure_dephasing_rho",
    "rabi_populations",
    "dephasing_purity",
    "dense_reference_propagate",
    "gibbs_state",
    "REFERENCE_MAX_BLOCKS",
]

REFERENCE_MAX_BLOCKS = 10**6


@dataclass(frozen=True)
class DephasingOracle:
    delta: float
    features: FeatureSet | None = None
    bath: BathSpec | None = None

    def __post_init__(self) -> None:
        if self.features is None and self.bath is None:
            raise ParameterError("dephasing oracle needs a feature set or a bath")

    def gamma(self, t):
        if self.features is not None:
            return decoherence_function(self.features, t)
        return decoherence_quadrature(self.bath, t)


def decoherence_function(fs: FeatureSet, t) -> np.ndarray:
    """Closed-form Gamma(t) for an exponential decomposition."""
    t = np.asarray(t, dtype=float)
    g = fs.gamma[:, None]
    c = fs.c[:, None]
    tt = np.atleast_1d(t)[None, :]
    # (e^{gt} - 1 - gt)/g^2, with the series for |gt| small
    x = g * tt
    small = np.abs(x) < 1e-4
    ratio = np.where(small, tt**2 * (0.5 + x / 6 + x**2 / 24), (np.expm1(x) - x) / np.where(g == 0, 1, g) ** 2)
    out = 4 * np.sum(np.real(c * ratio), axis=0)
    return out.reshape(t.shape)


def decoherence_quadrature(source: FeatureSet | BathSpec, t, rtol: float = 1e-12) -> np.ndarray:
    """Gamma(t) = 4 int_0^t (t - tau) Re C(tau) dtau by adaptive quadrature.

    With a FeatureSet, C is the exponential sum; with a BathSpec, C(tau) is
    itself evaluated by quadrature over the spectral density.
    """
    if isinstance(source, FeatureSet):
        def rec(tau):
            return float(np.real(np.sum(source.c * np.exp(source.gamma * tau))))
    else:
        def rec(tau):
            return float(np.real(bcf_quadrature(source, tau)))
    ts = np.atleast_1d(np.asarray(t, dtype=float))
    out = np.empty_like(ts)
    for i, ti in enumerate(ts):
        if ti == 0:
            out[i] = 0.0
            continue
        # split so that oscillatory integrands stay well resolved
        edges = np.linspace(0, ti, int(np.ceil(ti / 2.0)) + 1)
        tot = 0.0
        for a, b in zip(edges[:-1], edges[1:]):
            tot += integrate.quad(lambda s: (ti - s) * rec(s), a, b, epsabs=1e-14, epsrel=rtol, limit=200)[0]
        out[i] = 4 * tot
    return out.reshape(np.shape(t))


def _check_dephasing(rho0: np.ndarray) -> None:
    if rho0.shape != (2, 2):
        raise UnsupportedConfiguration("the dephasing oracle is defined for a qubit")


def pure_dephasing_rho(oracle: DephasingOracle, rho0: np.ndarray, t) -> np.ndarray:
    """rho_S(t) for H = (delta/2) sigma_z, Q = sigma_z; shape (..., 2, 2)."""
    rho0 = np.asarray(rho0, dtype=complex)
    _check_dephasing(rho0)
    t = np.asarray(t, dtype=float)
    gam = oracle.gamma(t)
    # basis (g, e): rho_ge picks up exp(+i delta t) for energies (-delta/2, +delta/2)
    phase = np.exp(1j * oracle.delta * t - gam)
    out = np.empty(t.shape + (2, 2), dtype=complex)
    out[..., 0, 0] = rho0[0, 0]
    out[..., 1, 1] = rho0[1, 1]
    out[..., 0, 1] = rho0[0, 1] * phase
    out[..., 1, 0] = rho0[1, 0] * np.conj(phase)
    return out


def dephasing_purity(oracle: DephasingOracle, rho0: np.ndarray, t) -> np.ndarray:
    r = pure_dephasing_rho(oracle, rho0, t)
    return np.real(np.einsum("...ij,...ij->...", r.conj(), r))


def rabi_populations(delta: float, v: float, rho0: np.ndarray, t) -> np.ndarray:
    """Isolated qubit populations (g, e) at times ``t`` by exact diagonalisation."""
    H = np.array([[-delta / 2, v], [v, delta / 2]], dtype=complex)
    w, U = np.linalg.eigh(H)
    t = np.atleast_1d(np.asarray(t, dtype=float))
    r0 = U.conj().T @ np.asarray(rho0, dtype=complex) @ U
    ph = np.exp(-1j * np.subtract.outer(w, w)[None] * t[:, None, None])
    rt = U[None] @ (r0[None] * ph) @ U.conj().T[None]
    return np.real(np.diagonal(rt, axis1=1, axis2=2))


def dense_reference_propagate(cfg: PropagationConfig, refine: int = 10) -> Trajectory:
    """Fixed-step RK4 at dt/refine on the full hierarchy, same sampling grid."""
    if cfg.space.size > REFERENCE_MAX_BLOCKS:
        raise ParameterError(f"reference run refused: {cfg.space.size} blocks exceed {REFERENCE_MAX_BLOCKS}")
    return propagate(replace(cfg, method="RK4", dt=cfg.dt / refine))


def gibbs_state(H: np.ndarray, beta: float) -> np.ndarray:
    H = np.asarray(H, dtype=complex)
    if np.max(np.abs(H - H.conj().T), initial=0.0) > 1e-12:
        raise ParameterError("H_S must be Hermitian")
    w, U = np.linalg.eigh(H)
    p = np.exp(-beta * (w - w.min()))
    p /= p.sum()
    return (U * p) @ U.conj().T
