"""Full master equation against the closed forms at weak drive."""

from photon_src import LinearPulse, SystemParams, evolve, p_si_total_rre

p = SystemParams.fig2_baseline(3.2)
pulse = LinearPulse(0.01)
full = evolve(p, "four", pulse)
single = evolve(p, "four", pulse, suppressed_recycling={"u"})
p_si, p_total, _ = p_si_total_rre(p, "four")
print(f"run stopped at t = {full.t_stop:.1f} (threshold stop: {full.stopped_by_threshold})")
print(f"P_total: numeric {full.final_emission('ex'):.6f}  closed {p_total:.6f}")
print(f"P_si:    numeric {single.final_emission('ex'):.6f}  closed {p_si:.6f}")
print(f"max trace error {abs(full.trace() - 1).max():.1e}")
