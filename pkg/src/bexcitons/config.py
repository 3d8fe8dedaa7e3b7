"""Run configurations: strict JSON schema, validation and figure presets.

Energies are in units of the system energy E and times in 1/E.
"""

from __future__ import annotations

import copy
import json
import os
from dataclasses import dataclass
from typing import Any

import jsonschema
import numpy as np

from .bath import BathSpec, Brownian, DrudeLorentz, FeatureSet, ParameterError, features_for
from .eom import PropagationConfig, SystemSpec
from .space import METRIC_PRESETS, HierarchySpace, MetricSpec

__all__ = ["ConfigError", "RunConfig", "PRESETS", "load_config", "list_presets", "preset"]

KT_DEFAULT = 0.209

_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_matrix = {"type": "array", "items": {"type": "array", "items": _num}}

SCHEMA: dict[str, Any] = {
    "type": "object",
    "additionalProperties": False,
    "required": ["system", "bath", "space", "run"],
    "properties": {
        "name": {"type": "string"},
        "description": {"type": "string"},
        "system": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "delta": _num,
                "v": _num,
                "H": _matrix,
                "Q": _matrix,
                "rho0": _matrix,
                "rho0_imag": _matrix,
            },
        },
        "bath": {
            "type": "object",
            "additionalProperties": False,
            "required": ["kind", "lambda", "kT"],
            "properties": {
                "kind": {"enum": ["drude_lorentz", "brownian"]},
                "lambda": {"type": "number", "minimum": 0},
                "omega_c": _pos,
                "omega_0": _pos,
                "omega_1": _pos,
                "eta": _pos,
                "kT": _pos,
                "n_ltc": {"type": "integer", "minimum": 0},
                "scheme": {"enum": ["Pade", "Matsubara"]},
            },
        },
        "space": {
            "type": "object",
            "additionalProperties": False,
            "required": ["depths"],
            "properties": {
                "representation": {"enum": ["number", "position"]},
                "depths": {
                    "oneOf": [
                        {"type": "integer", "minimum": 2},
                        {"type": "array", "items": {"type": "integer", "minimum": 2}, "minItems": 1},
                    ]
                },
                "L": {"oneOf": [_pos, {"type": "array", "items": _pos}]},
                "dvr_kind": {"enum": ["sinc", "sine"]},
            },
        },
        "metric": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "preset": {"enum": list(METRIC_PRESETS)},
                "constants": {"type": "array", "items": {"type": "array", "items": _num, "minItems": 2, "maxItems": 2}},
            },
        },
        "integrator": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "method": {"enum": ["RK4", "RK45"]},
                "dt": _pos,
                "tol": _pos,
            },
        },
        "run": {
            "type": "object",
            "additionalProperties": False,
            "required": ["t_final"],
            "properties": {
                "t_final": {"type": "number", "minimum": 0},
                "sample_dt": _pos,
                "outputs": {"type": "array", "items": {"enum": ["trajectory", "maps", "features"]}},
                "map_times": {"type": "array", "items": {"type": "number", "minimum": 0}},
                "validate_points": {"type": "integer", "minimum": 0},
                "compression": {
                    "type": "object",
                    "additionalProperties": False,
                    "properties": {
                        "enabled": {"type": "boolean"},
                        "r": {"type": "integer", "minimum": 1},
                        "s": {"type": "array", "items": {"type": "integer", "minimum": 1}},
                    },
                },
            },
        },
    },
}


class ConfigError(ValueError):
    """Invalid configuration; ``errors`` lists every violation found."""

    def __init__(self, errors: list[str]):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


@dataclass
class RunConfig:
    """Validated configuration plus the objects it describes."""

    raw: dict
    system: SystemSpec
    bath: BathSpec
    features: FeatureSet
    space: HierarchySpace
    metric: MetricSpec
    method: str
    dt: float
    tol: float
    t_final: float
    sample_dt: float
    outputs: tuple[str, ...]
    map_times: tuple[float, ...]
    compression: dict | None
    validate_points: int

    @property
    def name(self) -> str:
        return self.raw.get("name", "run")

    def propagation(self) -> PropagationConfig:
        return PropagationConfig(
            self.system, self.features, self.space, self.metric,
            self.method, self.dt, self.tol, self.t_final, self.sample_dt, self.map_times,
        )


def _field(path) -> str:
    return ".".join(str(p) for p in path) or "<root>"


def _build(raw: dict) -> RunConfig:
    errors: list[str] = []

    def guard(name, fn):
        try:
            return fn()
        except (ParameterError, ValueError) as exc:
            errors.append(f"{name}: {exc}")
            return None

    s = raw["system"]

    def make_system():
        M = None
        if "H" in s:
            H = np.array(s["H"], dtype=float)
            Q = np.array(s.get("Q", np.diag(np.arange(H.shape[0], dtype=float))), dtype=float)
            M = H.shape[0]
        else:
            if "delta" not in s or "v" not in s:
                raise ParameterError("give either delta and v or an explicit H")
            M = 2
        rho0 = np.array(s.get("rho0", np.full((M, M), 1.0 / M)), dtype=complex)
        if "rho0_imag" in s:
            rho0 = rho0 + 1j * np.array(s["rho0_imag"], dtype=float)
        if "H" in s:
            return SystemSpec(H, Q, rho0)
        return SystemSpec.qubit(float(s["delta"]), float(s["v"]), rho0)

    system = guard("system", make_system)

    b = raw["bath"]

    def make_bath():
        if b["kind"] == "drude_lorentz":
            if "omega_c" not in b:
                raise ParameterError("omega_c is required for a Drude-Lorentz bath")
            sd = DrudeLorentz(b["lambda"], b["omega_c"])
        else:
            if "eta" not in b:
                raise ParameterError("eta is required for a Brownian bath")
            sd = Brownian(b["lambda"], b["eta"], omega_0=b.get("omega_0"), omega_1=b.get("omega_1"))
        return BathSpec(sd, 1.0 / b["kT"], b.get("n_ltc", 0), b.get("scheme", "Pade"))

    bath = guard("bath", make_bath)
    features = guard("bath", lambda: features_for(bath)) if bath is not None else None

    sp = raw["space"]

    def make_space():
        K = features.K
        d = sp["depths"]
        depths = (d,) * K if isinstance(d, int) else tuple(d)
        if len(depths) != K:
            errors.append(f"space.depths: {len(depths)} entries but the bath has K={K} features")
            return None
        rep = sp.get("representation", "number")
        if rep == "position":
            if "L" not in sp:
                errors.append("space.L: required in position representation")
                return None
            return HierarchySpace.position(depths, sp["L"], sp.get("dvr_kind", "sinc"))
        return HierarchySpace.number(depths)

    space = guard("space", make_space) if features is not None else None

    m = raw.get("metric", {})

    def make_metric():
        consts = tuple(complex(a, b_) for a, b_ in m.get("constants", []))
        spec = MetricSpec(m.get("preset", "Unit"), consts)
        for k in range(features.K):
            spec.levels(features, k, 2)
        if space is not None and space.representation == "position" and not spec.is_constant:
            raise ParameterError("position representation needs a level-independent metric")
        return spec

    metric = guard("metric", make_metric) if features is not None else None

    integ = raw.get("integrator", {})
    run = raw["run"]
    dt = integ.get("dt", 1e-3)
    t_final = run["t_final"]
    sample_dt = run.get("sample_dt", 0.05)
    n = t_final / dt
    if abs(n - round(n)) > 1e-9 * max(1.0, n):
        errors.append("run.t_final: must be a multiple of integrator.dt")
    comp = run.get("compression")
    if comp and comp.get("enabled", False):
        if space is not None and "s" in comp and len(comp["s"]) != space.K:
            errors.append(f"run.compression.s: needs {space.K} entries")
        if raw.get("integrator", {}).get("method", "RK4") != "RK4":
            errors.append("run.compression: only RK4 stepping is available for factored states")
    if "maps" in run.get("outputs", []) and space is not None:
        if space.representation != "position" or space.K != 2:
            errors.append("run.outputs: density maps need position representation with K=2")
    if errors:
        raise ConfigError(errors)
    return RunConfig(
        raw=raw,
        system=system,
        bath=bath,
        features=features,
        space=space,
        metric=metric,
        method=integ.get("method", "RK4"),
        dt=float(dt),
        tol=float(integ.get("tol", 1e-8)),
        t_final=float(t_final),
        sample_dt=float(sample_dt),
        outputs=tuple(run.get("outputs", ["trajectory"])),
        map_times=tuple(float(x) for x in run.get("map_times", [])),
        compression=comp if comp and comp.get("enabled", False) else None,
        validate_points=int(run.get("validate_points", 21)),
    )


def validate_dict(raw: dict) -> RunConfig:
    """Schema check then semantic checks; raises ConfigError with all problems."""
    v = jsonschema.Draft202012Validator(SCHEMA)
    errs = sorted(v.iter_errors(raw), key=lambda e: list(e.absolute_path))
    if errs:
        raise ConfigError([f"{_field(e.absolute_path)}: {e.message}" for e in errs])
    return _build(raw)


def load_config(source: str) -> RunConfig:
    """Load a preset name, a config file, or a run manifest (its echoed config)."""
    if source in PRESETS and not os.path.exists(source):
        return validate_dict(preset(source))
    try:
        with open(source) as fh:
            raw = json.load(fh)
    except FileNotFoundError:
        raise ConfigError([f"{source}: no such preset or file"]) from None
    except json.JSONDecodeError as exc:
        raise ConfigError([f"{source}: invalid JSON ({exc})"]) from None
    if isinstance(raw, dict) and "config" in raw and "status" in raw:
        raw = raw["config"]
    if not isinstance(raw, dict):
        raise ConfigError(["<root>: config must be a JSON object"])
    return validate_dict(raw)


# -- presets -----------------------------------------------------------------

_DL = {"kind": "drude_lorentz", "lambda": 0.2, "omega_c": 0.1, "kT": KT_DEFAULT, "n_ltc": 2, "scheme": "Pade"}
_BR = {"kind": "brownian", "lambda": 0.2, "omega_1": 1.0, "eta": 0.05, "kT": KT_DEFAULT, "n_ltc": 1, "scheme": "Pade"}
_NUM10 = {"representation": "number", "depths": 10}


def _p(name, desc, system, bath, space, metric, t_final, dt=0.01, **run):
    return {
        "name": name,
        "description": desc,
        "system": system,
        "bath": dict(bath),
        "space": dict(space),
        "metric": {"preset": metric},
        "integrator": {"method": "RK4", "dt": dt},
        "run": {"t_final": t_final, "sample_dt": 0.05, **run},
    }


def _presets() -> dict[str, dict]:
    P: dict[str, dict] = {}
    dephase = {"delta": 1.0, "v": 0.0}
    biased = {"delta": 1.0, "v": 1.0}
    unbiased = {"delta": 0.0, "v": 1.0}
    P["fig2-dl"] = _p("fig2-dl", "pure dephasing, Drude-Lorentz bath", dephase, _DL, _NUM10, "PaperDL", 10.0)
    P["fig2-br"] = _p("fig2-br", "pure dephasing, Brownian bath", dephase, _BR, _NUM10, "PaperBrownian", 25.0)
    P["fig3-dl"] = _p("fig3-dl", "biased relaxation, Drude-Lorentz bath", biased, _DL, _NUM10, "PaperDL", 25.0)
    P["fig3-br"] = _p("fig3-br", "biased relaxation, Brownian bath", biased, _BR, _NUM10, "PaperBrownian", 25.0)
    # grid steps sit below the RK4 stability limit set by the largest |gamma| x^2 term
    for bname, bath, met, dt in (("dl", _DL, "PaperDL", 2.5e-3), ("br", _BR, "PaperBrownian", 5e-3)):
        for kind in ("sinc", "sine"):
            nm = f"fig3-{bname}-{kind}"
            sp = {"representation": "position", "depths": 40, "L": 40.0, "dvr_kind": kind}
            P[nm] = _p(nm, f"biased relaxation on a {kind} grid", biased, bath, sp, met, 25.0, dt=dt)
    P["fig-unbiased"] = _p("fig-unbiased", "unbiased qubit, Drude-Lorentz bath", unbiased, _DL, _NUM10, "PaperDL", 25.0)
    P["fig-unbiased-br"] = _p("fig-unbiased-br", "unbiased qubit, Brownian bath", unbiased, _BR, _NUM10, "PaperBrownian", 25.0)
    br0 = dict(_BR, n_ltc=0)
    for tag, met in (("unit", "Unit"), ("signed", "SignedPair"), ("abs", "ScaledAbs")):
        nm = f"fig5-metric-{tag}"
        P[nm] = _p(nm, f"metric {met}, number basis", biased, br0, _NUM10, met, 25.0)
        nm = f"fig5-metric-{tag}-sinc"
        sp = {"representation": "position", "depths": 40, "L": 40.0, "dvr_kind": "sinc"}
        P[nm] = _p(nm, f"metric {met}, sinc grid", biased, br0, sp, met, 25.0, dt=5e-3)
    strong = {"delta": 5.0, "v": 1.0}
    n40 = {"representation": "number", "depths": 40}
    for nm, lam, eta, desc in (
        ("fig4-weak", 0.2, 0.01, "weak coupling, long correlation time"),
        ("fig4-strong-damped", 1.0, 0.05, "strong coupling, short correlation time"),
        ("fig4-unstable", 1.0, 0.01, "strong coupling, long correlation time"),
    ):
        bath = dict(_BR, **{"lambda": lam, "eta": eta, "n_ltc": 0})
        P[nm] = _p(nm, desc, strong, bath, n40, "PaperBrownian", 75.0)
    unstable = dict(_BR, **{"lambda": 1.0, "eta": 0.01, "n_ltc": 0})
    for n in (40, 60):
        nm = f"fig6-depth-{n}"
        P[nm] = _p(nm, f"unstable case at depth {n}", strong, unstable, {"representation": "number", "depths": n},
                   "PaperBrownian", 100.0)
    grid = {"representation": "position", "depths": 40, "L": 40.0, "dvr_kind": "sinc"}
    for nm, src in (("fig7-maps-weak", "fig4-weak"), ("fig7-maps-damped", "fig4-strong-damped"), ("fig7-maps", "fig4-unstable")):
        P[nm] = _p(nm, "bexciton density maps, " + P[src]["description"], strong, P[src]["bath"], grid,
                   "PaperBrownian", 7.5, dt=5e-3, outputs=["trajectory", "maps"], map_times=[3.8, 7.5])
    br4 = dict(_BR, n_ltc=2)
    P["fig8-mc-dense"] = _p("fig8-mc-dense", "four features, dense number basis", biased, br4, _NUM10, "PaperBrownian", 25.0)
    P["fig8-mc-r10"] = _p("fig8-mc-r10", "four features, combined modes (number basis)", biased, br4, _NUM10,
                          "PaperBrownian", 25.0, compression={"enabled": True, "r": 10, "s": [6, 6, 6, 6]})
    sp40 = {"representation": "position", "depths": 40, "L": 40.0, "dvr_kind": "sinc"}
    P["fig8-mc-dvr-r10"] = _p("fig8-mc-dvr-r10", "four features, combined modes (sinc grid)", biased, br4, sp40,
                              "PaperBrownian", 25.0, dt=2.5e-3,
                              compression={"enabled": True, "r": 10, "s": [12, 12, 12, 12]})
    return P


PRESETS = _presets()


def preset(name: str) -> dict:
    if name not in PRESETS:
        raise ConfigError([f"unknown preset {name!r}"])
    return copy.deepcopy(PRESETS[name])


def list_presets() -> list[tuple[str, str]]:
    return [(k, v["description"]) for k, v in PRESETS.items()]
