#!/usr/bin/env python3
"""RMM-DIIS from eigenvectors of a leading block, padded with zeros.

Shows how the quality of the padded start depends on the block size m,
and that single-vector refinement stalls on a near-degenerate cluster.
"""

import numpy as np

from hybrideig import (
    gen_near_degenerate,
    gen_prescribed_spectrum,
    nested_guesses,
    principal_submatrix,
    rmm_diis_refine,
)
from hybrideig.problems import separated_spectrum

A = gen_prescribed_spectrum(separated_spectrum(1000), 4000, 0)
w = np.linalg.eigvalsh(A.to_dense())[:5]
for m in (12, 50, 200):
    G = nested_guesses(principal_submatrix(A, m), A.n, 5)
    outcomes, st = rmm_diis_refine(A, G, maxiter=3000, stagnation=False)
    theta = np.sort([o.theta for o in outcomes])
    print(
        f"m={m:<4} spmv={st.spmv_actual:<6} converged={sum(o.converged for o in outcomes)}/5 "
        f"max rel err={np.max(np.abs(theta - w) / w):.1e}"
    )

# eigenvalues 7..9 of this matrix sit 0.6% and 0.03% apart
B = gen_near_degenerate(500)
wb, V = np.linalg.eigh(B.to_dense())
rng = np.random.default_rng(0)
X0 = V[:, 6:9] + 1e-2 * rng.standard_normal((500, 3))
outcomes, _ = rmm_diis_refine(B, X0, maxiter=200)
for j, o in zip(range(6, 9), outcomes):
    print(f"target {j}: converged={o.converged} failure={o.failure} theta={o.theta:.8f} exact={wb[j]:.8f}")
