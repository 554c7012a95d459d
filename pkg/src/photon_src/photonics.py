"""Emitted-photon record built from the effective model.

A photon emitted after the last re-excitation at time ``s`` has the
wavepacket ``psi_s(t) = k_ex Omega(t) Phi_s(t)`` for ``t >= s``. The
one-photon state is the mixture of ``psi_0`` and all ``psi_s`` weighted by the
re-excitation rate ``r(s)``.

Quadrature
----------
Time integrals use the composite midpoint rule on a uniform node grid; the
wavepacket samples live on the cell midpoints and every reset time ``s_j``
sits on a node. The jump of ``psi_s`` at ``t = s`` therefore always falls on a
cell boundary, and all inner products are second-order accurate with a single
positive weight vector. Integrals over ``s`` use the trapezoid rule on the
nodes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .effective import EffectiveModel, build_effective, cumulative_intensity, effective_evolve
from .qmodel import LevelScheme, PulseShape, SystemParams, TabulatedPulse


def wavepacket(params: SystemParams, scheme: LevelScheme, pulse: PulseShape, s: float,
               t_grid, model: EffectiveModel | None = None, tail_tol: float = 1e-6) -> np.ndarray:
    """Sampled ``psi_s(t)``; zero for ``t < s``.

    Raises ``ValueError`` if the grid does not start by ``s`` or ends before
    the emission after ``s`` has decayed below ``tail_tol``.
    """
    model = model or build_effective(params, scheme, pulse)
    t_grid = np.asarray(t_grid, dtype=float)
    if t_grid.ndim != 1 or t_grid.size < 2 or np.any(np.diff(t_grid) <= 0):
        raise ValueError("t_grid must be strictly ascending with >= 2 points")
    if t_grid[0] > s:
        raise ValueError(f"t_grid starts at {t_grid[0]:g}, after s={s:g}")
    remaining = math.exp(-model.lambda_si * float(pulse.cumulative(t_grid[-1]) - pulse.cumulative(s)))
    if remaining > tail_tol:
        raise ValueError(f"t_grid ends at {t_grid[-1]:g} with {remaining:.2e} of the emission "
                         "after s still to come; extend the grid")
    traj = effective_evolve(model, t_grid, s)
    return model.jump_coeffs["ex"] * pulse.amplitude(t_grid) * traj.phi


_GL_X, _GL_W = np.polynomial.legendre.leggauss(8)


def single_excitation_curve(model: EffectiveModel, t, n_seg: int = 2000) -> np.ndarray:
    """``P_si(t) = int_0^t |psi_0|^2`` by composite Gauss-Legendre quadrature of the integrand.

    The integration grid has ``n_seg`` uniform cells up to ``max(t)`` plus every
    requested time and every pulse breakpoint, so the integrand is smooth on
    each cell.
    """
    t = np.atleast_1d(np.asarray(t, dtype=float))
    out = np.zeros_like(t)
    t_max = float(t.max(initial=0.0))
    if t_max <= 0:
        return out
    pulse = model.pulse
    pts = [np.linspace(0.0, t_max, n_seg + 1), np.clip(t, 0.0, t_max)]
    if isinstance(pulse, TabulatedPulse):
        pts.append(pulse.times[(pulse.times > 0) & (pulse.times < t_max)])
    if 0 < pulse.t_end < t_max:
        pts.append(np.array([pulse.t_end]))
    nodes = np.unique(np.concatenate(pts))
    half = 0.5 * np.diff(nodes)
    x = (0.5 * (nodes[1:] + nodes[:-1]))[:, None] + half[:, None] * _GL_X[None, :]
    f = 2.0 * model.rate_coeffs["ex"] * pulse.intensity(x) * np.exp(-model.lambda_si * pulse.cumulative(x))
    cum = np.concatenate(([0.0], np.cumsum(half * (f @ _GL_W))))
    pos = t > 0
    out[pos] = cum[np.searchsorted(nodes, t[pos])]
    return out


@dataclass
class PhotonRecord:
    """Wavepackets and re-excitation rates sampled on a grid.

    ``t``/``weights``: midpoint samples and their quadrature weights.
    ``s``/``s_weights``: reset times (grid nodes) and trapezoid weights.
    ``psi[:, j]`` samples ``psi_{s_j}``; ``psi0`` is the no-reset wavepacket.
    """

    t: np.ndarray
    weights: np.ndarray
    s: np.ndarray
    s_weights: np.ndarray
    psi0: np.ndarray
    psi: np.ndarray
    r: np.ndarray
    P_si: float
    P_re: float
    model: EffectiveModel = field(repr=False)
    warnings: list = field(default_factory=list)

    @property
    def P_total(self) -> float:
        return self.P_si + self.P_re

    @property
    def R_re(self) -> float:
        return self.P_re / self.P_total

    def mode_norms(self) -> np.ndarray:
        return self.weights @ (np.abs(self.psi) ** 2)


def record_grids(model: EffectiveModel, n_t: int = 3000, tail_tol: float = 1e-6):
    """Node grid for :func:`build_record` and the index of the last reset time kept."""
    pulse = model.pulse
    lam_tot = 2.0 * model.loss_coeff
    if not lam_tot > 0:
        raise ValueError("no loss channel: the emission never ends")
    log_tol = math.log(1.0 / tail_tol)
    h_s = log_tol / lam_tot
    h_end = h_s + log_tol / model.lambda_si
    s_max = pulse.time_for_h(h_s)
    t_max = pulse.time_for_h(h_end)
    if not math.isfinite(t_max):
        raise ValueError("pulse ends before the emission has decayed")
    nodes = np.linspace(0.0, t_max, n_t + 1)
    last = min(int(np.searchsorted(nodes, s_max)) + 1, n_t)
    return nodes, last


def build_record(params: SystemParams, scheme: LevelScheme, pulse: PulseShape, *,
                 n_t: int = 3000, n_s: int = 800, tail_tol: float = 1e-6,
                 nodes=None, accuracy: float = 1e-3) -> PhotonRecord:
    """Sample the photon record and integrate ``P_si`` and ``P_re``.

    Parameters
    ----------
    n_t : int
        Number of time cells (ignored when ``nodes`` is given).
    n_s : int
        Upper bound on the number of reset times; nodes are strided to fit.
    tail_tol : float
        Truncation of the reset-time range and of each wavepacket.
    nodes : array, optional
        Explicit uniform node grid starting at 0.
    accuracy : float
        Relative mismatch against the effective-rate asymptotics above which a
        warning is attached to the record.
    """
    model = build_effective(params, scheme, pulse)
    if nodes is None:
        nodes, last = record_grids(model, n_t, tail_tol)
    else:
        nodes = np.asarray(nodes, dtype=float)
        last = len(nodes) - 1
    stride = max(1, int(math.ceil((last + 1) / n_s)))
    s_idx = np.arange(0, last + 1, stride)
    s = nodes[s_idx]
    mids = 0.5 * (nodes[1:] + nodes[:-1])
    weights = np.diff(nodes)

    h_nodes = cumulative_intensity(pulse, nodes)
    h_mid = cumulative_intensity(pulse, mids)
    c = model.no_jump_coeff
    k_amp = model.jump_coeffs["ex"] * pulse.amplitude(mids)
    psi0 = k_amp * np.exp(-c * h_mid)

    dh = h_mid[:, None] - h_nodes[s_idx][None, :]
    started = mids[:, None] > s[None, :]
    psi = np.where(started, k_amp[:, None] * np.exp(-c * np.maximum(dh, 0.0)), 0.0)

    traj = effective_evolve(model, s)
    r = 2.0 * model.gamma_u_eff(s) * traj.rho_u
    s_weights = np.zeros_like(s)
    if s.size > 1:
        ds = np.diff(s)
        s_weights[:-1] += 0.5 * ds
        s_weights[1:] += 0.5 * ds

    p_si = float(weights @ np.abs(psi0) ** 2)
    norms = weights @ (np.abs(psi) ** 2)
    p_re = float((r * s_weights) @ norms)
    rec = PhotonRecord(t=mids, weights=weights, s=s, s_weights=s_weights, psi0=psi0, psi=psi,
                       r=r, P_si=p_si, P_re=p_re, model=model)

    ref_si, ref_total = model.asymptotic()
    for name, got, ref in (("P_si", p_si, ref_si), ("P_total", rec.P_total, ref_total)):
        if ref > 0 and abs(got - ref) > accuracy * ref:
            rec.warnings.append(f"{name} quadrature {got:.6g} differs from {ref:.6g} "
                                f"by more than {accuracy:g} relative; refine the grid")
    return rec


@dataclass
class TemporalModeState:
    """Discretised one-photon state ``rho_S(t, t') = F F^dag / P`` on the record grid.

    ``factors[:, 0]`` is ``psi_0`` and ``factors[:, j]`` is
    ``sqrt(r_j w_j) psi_{s_j}``; ``norm`` is the quadrature ``P_total``.
    """

    t: np.ndarray
    weights: np.ndarray
    factors: np.ndarray
    norm: float

    @property
    def vacuum_weight(self) -> float:
        return 1.0 - self.norm

    def gram(self) -> np.ndarray:
        """``F^dag W F / P``: shares its nonzero spectrum with the weighted kernel."""
        G = (self.factors.conj().T * self.weights) @ self.factors
        return G / self.norm

    def kernel(self, stride: int = 1) -> np.ndarray:
        F = self.factors[::stride]
        return (F @ F.conj().T) / self.norm

    def weighted_trace(self) -> float:
        return float(np.trace(self.gram()).real)

    def eigenvalues(self) -> np.ndarray:
        G = self.gram()
        return np.linalg.eigvalsh(0.5 * (G + G.conj().T))


def temporal_state(record: PhotonRecord) -> TemporalModeState:
    """Normalised temporal-mode state of the emitted photon."""
    if not record.P_total > 0:
        raise ValueError("record carries no photon")
    amp = np.sqrt(np.maximum(record.r * record.s_weights, 0.0))
    keep = amp > 0
    factors = np.concatenate([record.psi0[:, None], record.psi[:, keep] * amp[keep]], axis=1)
    return TemporalModeState(t=record.t, weights=record.weights, factors=factors,
                             norm=record.P_total)


def purity_fidelity_numeric(state: TemporalModeState) -> tuple[float, float]:
    """``(D_S, F_S)``: weighted ``Tr[rho_S^2]`` and overlap with the normalised ``psi_0``."""
    M = (state.factors.conj().T * state.weights) @ state.factors
    P = float(np.trace(M).real)
    purity = float(np.sum(np.abs(M) ** 2)) / P ** 2
    fidelity = float(np.sum(np.abs(M[0]) ** 2)) / (float(M[0, 0].real) * P)
    return purity, fidelity
