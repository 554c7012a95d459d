"""Plot the output of ``photon-src fig2 --out DIR``: python3 docs/plot_fig2.py DIR.

Needs matplotlib, which is not a package dependency.
"""

import sys
from pathlib import Path

import matplotlib.pyplot as plt
import numpy as np

out = Path(sys.argv[1] if len(sys.argv) > 1 else "fig2")
const = dict(np.genfromtxt(out / "fig2_constants.csv", delimiter=",", names=True, dtype=None,
                           encoding="utf-8"))
panels = [("fig2a.csv", "P_re", "P_re_three_level"), ("fig2b.csv", "P_total", "P_total_three_level"),
          ("fig2c.csv", "t_em", "t_em_three_level")]
fig, axes = plt.subplots(1, 3, figsize=(13, 3.8))
for ax, (name, q, ref) in zip(axes, panels):
    d = np.genfromtxt(out / name, delimiter=",", names=True)
    if q == "t_em":
        first = d["omega0"] == d["omega0"].max()
        ax.plot(d["omega2"][first], d["t_em_analytic"][first], "k-",
                label=f"closed form, Omega_0 = {d['omega0'].max():g}")
        ax.legend(fontsize=7)
    for om0 in np.unique(d["omega0"]):
        sel = d["omega0"] == om0
        ax.plot(d["omega2"][sel], d[f"{q}_numeric"][sel], "o", ms=3, label=f"Omega_0 = {om0:g}")
        if q != "t_em":
            ax.plot(d["omega2"][sel], d[f"{q}_analytic"][sel], "k-", lw=1)
    ax.axhline(const[ref], ls="--", color="gray", label="three-level")
    ax.set_xlabel("Omega_2 / g")
    ax.set_ylabel(q)
axes[0].legend(fontsize=7)
fig.tight_layout()
fig.savefig(out / "fig2.png", dpi=150)
print(f"wrote {out / 'fig2.png'}")
