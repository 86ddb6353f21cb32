"""Walk one passage-time instance end to end.

Generates a Bernoulli slab, runs the layered shortest-path solver, and prints
the optimal path next to the greedy upper bound and the jump histogram.
"""

import numpy as np

from polymerlab import (
    ModelParams,
    fpp_half_width,
    generate_slab,
    greedy_upper_bound,
    jump_histogram,
    passage_time,
    scale_factor,
)


def main() -> None:
    params = ModelParams(d=1, alpha=2.0, c2=1.0, p=0.6)
    n = 24
    L = fpp_half_width(params, n)
    slab = generate_slab(params, n, L, master_seed=20240817)
    print(f"slab: n={n} window=[-{L},{L}] p={params.p} alpha={params.alpha}")
    density = slab.bits.mean()
    print(f"obstacle density {density:.3f} (target {params.p})")

    res = passage_time(slab, n, params)
    greedy, _ = greedy_upper_bound(slab, n, params)
    print(f"\npassage time T_n = {res.value:.6f}")
    print(f"greedy upper bound = {greedy:.6f} (slack {greedy - res.value:.6f})")
    print(f"scaled value s_p^alpha T_n = {res.scaled_value:.6f}  (s_p = {scale_factor(params.p, params.d):.4f})")

    print("\nlayer  x      jump")
    for k, pos in enumerate(res.path.positions):
        jump = 0 if k == 0 else int(res.path.jumps[k - 1])
        print(f"{k:5d}  {int(pos[0]):5d}  {jump:4d}")

    hist = jump_histogram(res.path)
    print("\njump histogram:", dict(sorted(hist.items())))
    print(f"max jump {res.path.max_jump}, hamiltonian {res.path.hamiltonian} (0 = obstacle-free)")
    assert res.path.hamiltonian == 0


if __name__ == "__main__":
    main()
