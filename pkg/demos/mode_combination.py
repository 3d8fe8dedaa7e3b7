"""Low-rank mode combination against dense propagation for a four-feature bath."""

import time

import numpy as np

from bexcitons.config import load_config
from bexcitons.eom import propagate
from bexcitons.mode_combination import propagate_factored


def main() -> None:
    dense_cfg = load_config("fig8-mc-dense")
    t0 = time.perf_counter()
    dense = propagate(dense_cfg.propagation())
    t_dense = time.perf_counter() - t0
    cfg = load_config("fig8-mc-r10")
    c = cfg.compression
    t0 = time.perf_counter()
    fac = propagate_factored(cfg.propagation(), c["r"], tuple(c["s"]))
    t_fac = time.perf_counter() - t0
    ratio = fac.meta["footprint"] / fac.meta["dense_footprint"]
    print(f"dense: {t_dense:.1f}s, factored r={fac.meta['rank']} s={fac.meta['inner_ranks']}: {t_fac:.1f}s")
    print(f"footprint ratio {ratio:.3f}")
    print(f"max population difference {np.max(np.abs(fac.pop - dense.pop)):.2e}")
    print(f"max purity difference     {np.max(np.abs(fac.purity - dense.purity)):.2e}")


if __name__ == "__main__":
    main()
