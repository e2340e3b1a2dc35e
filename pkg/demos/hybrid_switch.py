#!/usr/bin/env python3
"""Watch the tau metric drive the switch from a block method to RMM-DIIS."""

import numpy as np

from hybrideig import HybridConfig, gen_prescribed_spectrum, hybrid_solve, initial_block
from hybrideig.problems import separated_spectrum

A = gen_prescribed_spectrum(separated_spectrum(1000), 4000, 0)
X0 = initial_block(A.n, 8, None, 0)

for first in ("block-lanczos", "lobpcg"):
    for tau_switch in (1e-4, 1e-7):
        cfg = HybridConfig(first_phase=first, tau_switch=tau_switch, max_first_iters=3000, stagnation=False, maxiter=5000)
        rep, st = hybrid_solve(A, X0, cfg)
        e = st.extra
        taus = np.array(st.tau_history)
        print(
            f"{first:<14} tau_switch={tau_switch:.0e}: switched after {e['phase1_iterations']} iterations "
            f"({e['switch_reason']}), spmv {e['phase1_spmv']} + {e['phase2_spmv']} = {st.spmv_actual}, "
            f"converged {int(rep.converged.sum())}/{rep.n_ev}"
        )
        if taus.size:
            print("    last tau values:", " ".join(f"{t:.1e}" for t in taus[-4:]))
