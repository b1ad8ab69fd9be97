"""Certified condition-number ratios.

Part one samples ratios on a random table instance and compares them with
``n sqrt(r)/2 + 1``.  Part two evaluates the ratio on a unit path split into
two matchings, where it grows linearly in ``n``.  Part three shows a
three-node path on which ``||x - y||`` exceeds ``sqrt(n)/2 ||Ay - s*||_1``
while staying below ``sqrt((n-1)/2) ||Ay - s*||_1``.
"""

import math

import numpy as np

from dsfm import BlockVector, DecomposableInstance, EdgeCutPotential, TablePotential
from dsfm.diagnostics import (
    DiagnosticsContext,
    certified_ratio,
    decompose_transport,
    estimate_kappa,
    mincut_path_family,
    path_lowest_mode,
)


def random_instance(rng, n=8, r=4):
    pots = []
    for _ in range(r):
        support = rng.choice(n, 4, replace=False)
        cut = rng.random((4, 4))
        vals = []
        for m in range(16):
            inside = [(m >> j) & 1 for j in range(4)]
            vals.append(sum(cut[a, b] for a in range(4) for b in range(4) if inside[a] and not inside[b]))
        pots.append(TablePotential(support, np.array(vals) + rng.normal(size=1) * np.array(
            [bin(m).count("1") for m in range(16)])))
    return DecomposableInstance(n, pots)


def main():
    rng = np.random.default_rng(0)
    inst = random_instance(rng)
    ctx = DiagnosticsContext.build(inst)
    stats = estimate_kappa(ctx, samples=100, seed=1)
    q = np.quantile(stats.ratios, [0.5, 0.9, 1.0])
    print(f"random instance n={inst.n} r={inst.r}: ratios median {q[0]:.3f}, 90% {q[1]:.3f}, "
          f"max {q[2]:.3f}; bound {ctx.kappa_bound:.3f}")

    print("\npath family, r = 2")
    for n in (8, 16, 32, 64):
        path = mincut_path_family(n)
        ctx = DiagnosticsContext.build(path, y0=BlockVector(path))
        ratio = certified_ratio(ctx, path_lowest_mode(path))
        print(f"  n={n:3d}  ratio {ratio:8.3f}  ratio/n {ratio / n:.4f}  2/pi {2 / math.pi:.4f}")

    print("\nthree-node path, t = 1")
    inst = DecomposableInstance(3, [EdgeCutPotential(0, 1, 1.0), EdgeCutPotential(1, 2, 1.0)])
    y = BlockVector(inst, [np.array([-1.0, 1.0]), np.array([-1.0, 1.0])])
    _, st = decompose_transport(inst, y, np.zeros(3))
    print(f"  ||x - y|| = {st.dist_l2:.4f}, sqrt(n)/2 bound {st.sqrt_n_bound:.4f}, "
          f"sqrt((n-1)/2) bound {st.path_bound:.4f}")


if __name__ == "__main__":
    main()
