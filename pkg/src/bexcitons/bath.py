"""Bath spectral densities and their decomposition into exponential features.

The bath correlation function is written as ``C(t) = sum_k c_k exp(gamma_k t)``
and its conjugate as ``C*(t) = sum_k cbar_k exp(gamma_k t)``.  Features come
from the first-order poles of the odd-extended spectral density (one for
Drude-Lorentz, a conjugate pair for a Brownian oscillator) followed by
poles of the Bose-Einstein function (Matsubara or [N-1/N] Pade).

All energies are in units of the system energy scale E, times in 1/E.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import integrate, linalg

__all__ = [
    "ParameterError",
    "QuadratureError",
    "DrudeLorentz",
    "Brownian",
    "BathSpec",
    "BathFeature",
    "FeatureSet",
    "FeatureReport",
    "bose_poles",
    "drude_lorentz_features",
    "brownian_features",
    "features_for",
    "bcf_eval",
    "bcf_quadrature",
    "validate_features",
]


class ParameterError(ValueError):
    """A physical parameter is outside its allowed domain."""


class QuadratureError(ArithmeticError):
    """Numerical quadrature of the correlation function failed to converge."""


def _require_positive(**kwargs: float) -> None:
    for name, value in kwargs.items():
        if not np.isfinite(value) or value <= 0:
            raise ParameterError(f"{name} must be positive and finite, got {value!r}")


# -- spectral densities ------------------------------------------------------


@dataclass(frozen=True)
class DrudeLorentz:
    """Ohmic spectral density with a Lorentzian cutoff."""

    lam: float
    omega_c: float

    kind = "DrudeLorentz"

    def __post_init__(self) -> None:
        if not np.isfinite(self.lam) or self.lam < 0:
            raise ParameterError(f"lam must be non-negative, got {self.lam!r}")
        _require_positive(omega_c=self.omega_c)

    def J(self, w):
        """Odd extension of J(w); valid for real or complex ``w``."""
        return 2 * self.lam / np.pi * self.omega_c * w / (w**2 + self.omega_c**2)

    def slope(self) -> float:
        """Limit of J(w)/w as w -> 0."""
        return 2 * self.lam / (np.pi * self.omega_c)

    @property
    def scales(self) -> tuple[float, ...]:
        return (self.omega_c,)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "lam": self.lam, "omega_c": self.omega_c}


@dataclass(frozen=True)
class Brownian:
    """Underdamped Brownian oscillator spectral density.

    Give either the natural frequency ``omega_0`` or the damped frequency
    ``omega_1 = sqrt(omega_0**2 - eta**2)``; the other is derived.
    """

    lam: float
    eta: float
    omega_0: float | None = None
    omega_1: float | None = None

    kind = "Brownian"

    def __post_init__(self) -> None:
        if not np.isfinite(self.lam) or self.lam < 0:
            raise ParameterError(f"lam must be non-negative, got {self.lam!r}")
        _require_positive(eta=self.eta)
        if (self.omega_0 is None) == (self.omega_1 is None):
            raise ParameterError("give exactly one of omega_0 or omega_1")
        if self.omega_1 is None:
            _require_positive(omega_0=self.omega_0)
            if self.omega_0 <= self.eta:
                raise ParameterError(
                    f"omega_0={self.omega_0} must exceed eta={self.eta}; the overdamped "
                    "oscillator has no real damped frequency and cannot be entered via omega_1 either"
                )
            object.__setattr__(self, "omega_1", math.sqrt(self.omega_0**2 - self.eta**2))
        else:
            _require_positive(omega_1=self.omega_1)
            object.__setattr__(self, "omega_0", math.sqrt(self.omega_1**2 + self.eta**2))

    def J(self, w):
        w0sq = self.omega_0**2
        return 4 * self.lam / np.pi * self.eta * w0sq * w / ((w**2 - w0sq) ** 2 + 4 * self.eta**2 * w**2)

    def slope(self) -> float:
        return 4 * self.lam * self.eta / (np.pi * self.omega_0**2)

    @property
    def scales(self) -> tuple[float, ...]:
        return (self.omega_1,)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "lam": self.lam, "eta": self.eta, "omega_1": self.omega_1}


SpectralDensity = DrudeLorentz | Brownian


@dataclass(frozen=True)
class BathSpec:
    sd: SpectralDensity
    beta: float
    n_ltc: int = 0
    scheme: str = "Pade"

    def __post_init__(self) -> None:
        _require_positive(beta=self.beta)
        if int(self.n_ltc) != self.n_ltc or self.n_ltc < 0:
            raise ParameterError(f"n_ltc must be a non-negative integer, got {self.n_ltc!r}")
        if self.scheme not in ("Pade", "Matsubara"):
            raise ParameterError(f"scheme must be 'Pade' or 'Matsubara', got {self.scheme!r}")


# -- features ----------------------------------------------------------------


@dataclass(frozen=True)
class BathFeature:
    c: complex
    c_bar: complex
    gamma: complex


@dataclass
class FeatureSet:
    """Ordered features with the conjugation pairing ``kappa``.

    ``kappa[k]`` is the index whose (c_bar, gamma) equal (conj(c_k), conj(gamma_k)).
    """

    features: list[BathFeature]
    kappa: tuple[int, ...]
    provenance: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        self.kappa = tuple(int(k) for k in self.kappa)
        if not self.provenance:
            self.provenance = ("spectral-pole",) * len(self.features)
        if len(self.kappa) != len(self.features) or sorted(self.kappa) != list(range(len(self.features))):
            raise ParameterError("kappa must be a permutation of the feature indices")

    def __len__(self) -> int:
        return len(self.features)

    @property
    def K(self) -> int:
        return len(self.features)

    @property
    def c(self) -> np.ndarray:
        return np.array([f.c for f in self.features], dtype=complex)

    @property
    def c_bar(self) -> np.ndarray:
        return np.array([f.c_bar for f in self.features], dtype=complex)

    @property
    def gamma(self) -> np.ndarray:
        return np.array([f.gamma for f in self.features], dtype=complex)

    def pairing_ok(self, atol: float = 1e-14) -> bool:
        c, cb, g = self.c, self.c_bar, self.gamma
        kap = list(self.kappa)
        return bool(
            np.allclose(cb[kap], np.conj(c), rtol=0, atol=atol)
            and np.allclose(g[kap], np.conj(g), rtol=0, atol=atol)
        )

    def to_json(self) -> str:
        pair = lambda z: [float(np.real(z)), float(np.imag(z))]  # noqa: E731
        return json.dumps(
            {
                "features": [{"c": pair(f.c), "c_bar": pair(f.c_bar), "gamma": pair(f.gamma)} for f in self.features],
                "kappa": list(self.kappa),
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "FeatureSet":
        obj = json.loads(text)
        z = lambda p: complex(p[0], p[1])  # noqa: E731
        feats = [BathFeature(z(f["c"]), z(f["c_bar"]), z(f["gamma"])) for f in obj["features"]]
        return cls(feats, tuple(obj["kappa"]))


def _pade_poles(n: int) -> tuple[np.ndarray, np.ndarray]:
    # [N-1/N] Pade spectrum decomposition of 1/(1-exp(-x)):
    #   f(x) ~ 1/x + 1/2 + sum_j 2 k_j x / (x^2 + e_j^2)
    # pole positions from a symmetric tridiagonal eigenproblem.
    if n == 0:
        return np.empty(0), np.empty(0)
    a = 1.0 / np.sqrt((2 * np.arange(2 * n - 1) + 3) * (2 * np.arange(2 * n - 1) + 5))
    ev = linalg.eigvalsh_tridiagonal(np.zeros(2 * n), a)
    eps = np.sort(-2.0 / ev[:n])  # ascending eigenvalues: the n negative ones come first
    if n > 1:
        b = 1.0 / np.sqrt((2 * np.arange(2 * n - 2) + 5) * (2 * np.arange(2 * n - 2) + 7))
        evb = linalg.eigvalsh_tridiagonal(np.zeros(2 * n - 1), b)
        # odd order has a zero eigenvalue whose sign is rounding noise
        chi = np.sort(-2.0 / evb[: n - 1])
    else:
        chi = np.empty(0)
    kappa = np.empty(n)
    for j in range(n):
        term = 0.5 * n * (2 * n + 3)
        others = np.delete(eps, j)
        term *= np.prod(chi**2 - eps[j] ** 2) / np.prod(others**2 - eps[j] ** 2)
        kappa[j] = term
    return eps, kappa


def bose_poles(beta: float, n: int, scheme: str = "Pade") -> list[tuple[complex, complex]]:
    """Lower-half-plane poles ``xi_j`` of f_BE(z) = 1/(1 - exp(-z)) and residues.

    ``z`` is the dimensionless variable beta*omega.  Poles are sorted by
    ``|Im xi_j|`` ascending.  Each yields a feature decaying at rate
    ``|Im xi_j| / beta``.
    """
    _require_positive(beta=beta)
    if int(n) != n or n < 0:
        raise ParameterError(f"number of poles must be a non-negative integer, got {n!r}")
    n = int(n)
    if scheme == "Matsubara":
        eps = 2 * np.pi * np.arange(1, n + 1)
        res = np.ones(n)
    elif scheme == "Pade":
        eps, res = _pade_poles(n)
    else:
        raise ParameterError(f"unknown scheme {scheme!r}")
    return [(complex(0.0, -e), complex(r)) for e, r in zip(eps, res)]


def bose_approx(x, beta_poles: Sequence[tuple[complex, complex]]):
    """Rebuild f_BE(x) on real ``x`` from the pole list (for checking a scheme)."""
    x = np.asarray(x, dtype=float)
    f = 1.0 / x + 0.5
    for xi, r in beta_poles:
        e = -xi.imag
        f = f + 2 * r.real * x / (x**2 + e**2)
    return f


def _bose_features(sd: SpectralDensity, beta: float, n: int, scheme: str) -> list[BathFeature]:
    feats = []
    for xi, r in bose_poles(beta, n, scheme):
        w = xi / beta
        for s in sd.scales:
            if abs(abs(w.imag) - s) < 1e-12 * s and isinstance(sd, DrudeLorentz):
                raise ParameterError("Bose pole coincides with the spectral pole; shift omega_c or beta")
        # residue in omega is r / beta
        c = -2j * np.pi * (r / beta) * sd.J(w)
        c = complex(c.real, 0.0) if abs(c.imag) <= 1e-14 * max(abs(c), 1e-300) else complex(c)
        feats.append(BathFeature(c, np.conj(c), complex(-1j * w)))
    return feats


def drude_lorentz_features(lam: float, omega_c: float, beta: float, n_ltc: int = 0, scheme: str = "Pade") -> FeatureSet:
    """Features of a Drude-Lorentz bath: the cutoff pole then ``n_ltc`` Bose poles."""
    sd = DrudeLorentz(lam, omega_c)
    _require_positive(beta=beta)
    c1 = lam * omega_c * (1.0 / math.tan(beta * omega_c / 2) - 1j)
    feats = [BathFeature(complex(c1), complex(np.conj(c1)), complex(-omega_c))]
    feats += _bose_features(sd, beta, n_ltc, scheme)
    K = len(feats)
    return FeatureSet(feats, tuple(range(K)), ("spectral-pole",) + ("bose-pole",) * n_ltc)


def brownian_features(
    lam: float,
    eta: float,
    beta: float,
    n_ltc: int = 0,
    scheme: str = "Pade",
    *,
    omega_0: float | None = None,
    omega_1: float | None = None,
) -> FeatureSet:
    """Features of a Brownian bath: the (+, -) oscillator pair then Bose poles."""
    sd = Brownian(lam, eta, omega_0=omega_0, omega_1=omega_1)
    _require_positive(beta=beta)
    w1 = sd.omega_1
    pref = lam * w1 * (1 + eta**2 / w1**2) / 2
    c_plus = pref * (1 / np.tanh(beta * (w1 + 1j * eta) / 2) - 1)
    c_minus = pref * (1 / np.tanh(beta * (w1 - 1j * eta) / 2) + 1)
    g_plus, g_minus = complex(-eta, w1), complex(-eta, -w1)
    feats = [
        BathFeature(complex(c_plus), complex(np.conj(c_minus)), g_plus),
        BathFeature(complex(c_minus), complex(np.conj(c_plus)), g_minus),
    ]
    feats += _bose_features(sd, beta, n_ltc, scheme)
    kappa = (1, 0) + tuple(range(2, 2 + n_ltc))
    return FeatureSet(feats, kappa, ("spectral-pole",) * 2 + ("bose-pole",) * n_ltc)


def features_for(spec: BathSpec) -> FeatureSet:
    sd = spec.sd
    if isinstance(sd, DrudeLorentz):
        return drude_lorentz_features(sd.lam, sd.omega_c, spec.beta, spec.n_ltc, spec.scheme)
    return brownian_features(sd.lam, sd.eta, spec.beta, spec.n_ltc, spec.scheme, omega_1=sd.omega_1)


# -- correlation function ----------------------------------------------------


def bcf_eval(fs: FeatureSet, t):
    """sum_k c_k exp(gamma_k t); ``t`` may be a scalar or an array."""
    t = np.asarray(t, dtype=float)
    out = np.exp(np.multiply.outer(t, fs.gamma)) @ fs.c if fs.K else np.zeros(t.shape, dtype=complex)
    return complex(out) if out.ndim == 0 else out


def _jcoth(sd: SpectralDensity, beta: float):
    # J(w) coth(beta w / 2) with the finite w -> 0 limit 2 J'(0) / beta
    def f(w):
        x = beta * w / 2
        if x < 1e-6:
            return sd.slope() * (2 / beta) * (1 + x * x / 3)
        return sd.J(w) / math.tanh(x)

    return f


def bcf_quadrature(spec: BathSpec, t: float, *, rtol: float = 1e-10) -> complex:
    """Reference C(t) by adaptive quadrature of the fluctuation-dissipation integral.

    ``C(t) = int_0^inf J(w) [coth(beta w/2) cos(w t) - i sin(w t)] dw``.
    The finite part [0, W] uses QUADPACK's adaptive Gauss-Kronrod rule with the
    spectral peak as a breakpoint; the tail uses the Fourier-weighted QAWF rule.
    """
    sd = spec.sd
    if t < 0:
        raise ValueError("t must be non-negative")
    if sd.lam == 0:
        return 0j
    if t == 0 and isinstance(sd, DrudeLorentz):
        # J ~ 1/w at large w: the real part diverges logarithmically
        raise QuadratureError("C(0) diverges for a Drude-Lorentz bath (J(w) ~ 1/w tail)")
    f_re = _jcoth(sd, spec.beta)
    f_im = sd.J
    peak = max(sd.scales)
    W = 40.0 * max(peak, 1.0 / spec.beta)
    brk = [s for s in (peak, 2 * peak, 4.0 / spec.beta) if s < W]
    if isinstance(sd, Brownian):
        brk += [sd.omega_1 - 5 * sd.eta, sd.omega_1 + 5 * sd.eta]
        brk = [b for b in brk if 0 < b < W]
    errs = []
    atol = 1e-12

    def run(fun, a, b, **kw):
        val, err, *rest = integrate.quad(fun, a, b, full_output=1, **kw)
        # rest = [infodict] on success, [infodict, message, ...] otherwise;
        # roundoff warnings are accepted when the error estimate is still tiny
        if len(rest) > 1 and not (np.isfinite(err) and err < atol):
            raise QuadratureError(f"quad did not converge on [{a}, {b}] (err={err:.3g}): {rest[1]}")
        errs.append(err)
        return val

    opts = dict(points=sorted(brk), limit=2000, epsabs=atol / 10, epsrel=rtol)
    if t == 0:
        re = run(f_re, 0, W, **opts) + run(f_re, W, np.inf, limit=2000, epsabs=atol / 10, epsrel=rtol)
        im = 0.0
    else:
        re = run(lambda w: f_re(w) * math.cos(w * t), 0, W, **opts)
        re += run(f_re, W, np.inf, weight="cos", wvar=t, limlst=200)
        im = -run(lambda w: f_im(w) * math.sin(w * t), 0, W, **opts)
        im -= run(f_im, W, np.inf, weight="sin", wvar=t, limlst=200)
    return complex(re, im)


@dataclass
class FeatureReport:
    max_rel_err: float
    imag_defect: float
    pairing_ok: bool
    c0_finite: bool = True
    abs_err: np.ndarray = field(default_factory=lambda: np.empty(0), repr=False)


def validate_features(fs: FeatureSet, spec: BathSpec, t_grid, tol: float = 1e-3) -> FeatureReport:
    """Compare the feature expansion against quadrature on ``t_grid``.

    ``max_rel_err`` is normalised by |C(0)| from quadrature.  When C(0)
    diverges (Drude-Lorentz), it is reported as ``inf`` and ``c0_finite`` is
    False; ``abs_err`` still holds the pointwise errors at t > 0.
    """
    t_grid = np.atleast_1d(np.asarray(t_grid, dtype=float))
    if t_grid.size == 0 or tol <= 0:
        raise ValueError("t_grid must be non-empty and tol positive")
    csum = fs.c.sum() if fs.K else 0j
    imag_defect = abs(csum.imag) / abs(csum.real) if csum.real != 0 else (0.0 if csum.imag == 0 else math.inf)
    try:
        scale = abs(bcf_quadrature(spec, 0.0))
        c0_finite = True
    except QuadratureError:
        scale, c0_finite = math.inf, False
    errs = np.array(
        [np.nan if (t == 0 and not c0_finite) else abs(bcf_eval(fs, t) - bcf_quadrature(spec, t)) for t in t_grid]
    )
    if not c0_finite:
        max_rel = math.inf
    elif scale == 0:
        max_rel = 0.0 if np.nanmax(errs) == 0 else math.inf
    else:
        max_rel = float(np.nanmax(errs) / scale)
    return FeatureReport(max_rel, float(imag_defect), fs.pairing_ok(), c0_finite, errs)
