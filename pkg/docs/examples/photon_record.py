"""Temporal-mode purity and fidelity from the sampled photon record."""

from photon_src import (LinearPulse, SystemParams, build_record, p_si_total_rre,
                        purity_fidelity, purity_fidelity_numeric, temporal_state)

for omega2 in (0.5, 3.2, 10.0):
    p = SystemParams.fig2_baseline(omega2)
    rec = build_record(p, "four", LinearPulse(0.07))
    d_num, f_num = purity_fidelity_numeric(temporal_state(rec))
    d, f = purity_fidelity(p_si_total_rre(p, "four")[2])
    print(f"Omega_2 = {omega2:5.1f}: D_S {d_num:.6f} (closed {d:.6f})  F_S {f_num:.6f} (closed {f:.6f})")
