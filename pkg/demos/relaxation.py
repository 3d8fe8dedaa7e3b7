"""Biased qubit relaxation: the same run with different metrics gives the same populations."""

import numpy as np

from bexcitons.config import preset, validate_dict
from bexcitons.eom import propagate
from bexcitons.oracles import gibbs_state


def main() -> None:
    runs = {}
    for tag in ("unit", "signed", "abs"):
        cfg = validate_dict(preset(f"fig5-metric-{tag}"))
        runs[tag] = propagate(cfg.propagation())
    ref = runs["unit"]
    for tag, tr in runs.items():
        print(f"{tag:7s} pop_g(25)={tr.pop[-1, 0]:.6f}  max diff to unit={np.max(np.abs(tr.pop - ref.pop)):.1e}")
    g = gibbs_state(cfg.system.H, cfg.bath.beta)
    print(f"Gibbs population of |g> for H_S: {g[0, 0].real:.6f}")


if __name__ == "__main__":
    main()
