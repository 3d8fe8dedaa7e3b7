"""Pure dephasing of a qubit: hierarchy propagation against the closed-form result."""

import numpy as np

from bexcitons.config import load_config
from bexcitons.eom import propagate
from bexcitons.oracles import DephasingOracle, dephasing_purity


def main() -> None:
    for name in ("fig2-dl", "fig2-br"):
        cfg = load_config(name)
        tr = propagate(cfg.propagation())
        exact = dephasing_purity(DephasingOracle(1.0, cfg.features), cfg.system.rho0, tr.t)
        print(f"{name}: K={cfg.features.K}, {len(tr.t)} samples")
        for i in range(0, len(tr.t), len(tr.t) // 5):
            print(f"  t={tr.t[i]:6.2f}  purity={tr.purity[i]:.6f}  exact={exact[i]:.6f}")
        print(f"  max |difference| = {np.max(np.abs(tr.purity - exact)):.2e}")


if __name__ == "__main__":
    main()
