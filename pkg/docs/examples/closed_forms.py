"""Closed-form figures of merit for the baseline and the Omega_2 threshold."""

from photon_src import LinearPulse, SystemParams, emission_time, p_si_total_rre, purity_fidelity
from photon_src.closedform import r_re_three_level

p = SystemParams.fig2_baseline(3.2)
p_si, p_total, r_re = p_si_total_rre(p, "four")
print(f"kappa_ex = {p.kappa_ex:.6f}")
print(f"P_si = {p_si:.6f}  P_total = {p_total:.6f}  R_re = {r_re:.6f}")
print("D_S, F_S =", purity_fidelity(r_re))
print(f"t_em(Omega_0 = 0.07) = {emission_time(p, 'four', LinearPulse(0.07)):.3f} / g")

threshold = p.g ** 2 / p.kappa + p.gamma_o
three = SystemParams.fig2_baseline(scheme="three")
print(f"Omega_2 threshold = {threshold:.4f}; R_re there = "
      f"{p_si_total_rre(p.replace(omega2=threshold), 'four')[2]:.6f}, "
      f"three-level R_re = {r_re_three_level(three):.6f}")
