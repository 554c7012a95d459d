"""Effective-operator reduction of the driven atom-cavity system.

The excited manifold is eliminated through the inverse of the non-Hermitian
Hamiltonian ``H_NH``. Because the drive enters only through
``V_+(t) = Omega(t) |top><u,0|``, every effective quantity is a fixed
prefactor times ``Omega(t)`` or ``|Omega(t)|^2``; the prefactors are stored so
that integrals over the pulse reduce to ``h(t1, t2)``.

Two codings of the prefactors exist: :func:`build_effective` transcribes the
closed forms, :func:`effective_operators_numeric` applies the generic matrix
recipe. Tests hold them together.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .qmodel import (
    CHANNEL_LABELS,
    LevelScheme,
    PulseShape,
    SystemParams,
    TabulatedPulse,
    build_lindblads,
    drive_coupling,
    excited_labels,
    index,
    static_hamiltonian,
)


class SingularityError(ArithmeticError):
    """``H_NH`` (or an effective-formula denominator) is numerically singular."""


_COND_LIMIT = 1e12

def _excited_block(scheme: LevelScheme, op: np.ndarray) -> np.ndarray:
    idx = [index(scheme, lab) for lab in excited_labels(scheme)]
    return op[np.ix_(idx, idx)]


def build_nonhermitian(params: SystemParams, scheme: LevelScheme) -> np.ndarray:
    """``H_NH = H_excited - (i/2) sum_k L_k^dag L_k`` on the excited subspace.

    The rows/columns follow :func:`photon_src.qmodel.excited_labels`.
    """
    scheme = LevelScheme.parse(scheme)
    H = static_hamiltonian(params, scheme)
    for _, L in build_lindblads(params, scheme):
        H = H - 0.5j * (L.conj().T @ L)
    H_nh = _excited_block(scheme, H)
    if np.linalg.cond(H_nh) > _COND_LIMIT:
        raise SingularityError("non-Hermitian Hamiltonian is numerically singular")
    return H_nh


@dataclass(frozen=True)
class GenericEffective:
    """Unit-drive effective operators from the matrix recipe.

    ``jump[c]`` is the amplitude of ``L_c H_NH^-1 V_+`` (per unit ``Omega``)
    on its target state, ``rates[c] = |jump[c]|^2 / 2`` and ``delta`` is the
    effective detuning prefactor. ``response`` is ``H_NH^-1 V_+ |u,0>``.
    """

    rates: dict
    jump: dict
    delta: float
    response: np.ndarray


def effective_operators_numeric(params: SystemParams, scheme: LevelScheme) -> GenericEffective:
    scheme = LevelScheme.parse(scheme)
    H_inv = np.linalg.inv(build_nonhermitian(params, scheme))
    exc = [index(scheme, lab) for lab in excited_labels(scheme)]
    u = index(scheme, "u0")
    v_plus = drive_coupling(scheme)[exc, u]
    response = H_inv @ v_plus
    # H_eff = -1/2 V_- (H^-1 + H^-1^dag) V_+ restricted to |u,0>
    delta = float(-0.5 * (v_plus.conj() @ (H_inv + H_inv.conj().T) @ v_plus).real)
    rates, jump = {}, {}
    for label, L in build_lindblads(params, scheme):
        out = L[:, exc] @ response
        k = int(np.argmax(np.abs(out))) if np.any(out) else 0
        jump[label] = complex(out[k])
        rates[label] = float(0.5 * np.vdot(out, out).real)
    for label in CHANNEL_LABELS[scheme]:
        rates.setdefault(label, 0.0)
        jump.setdefault(label, 0j)
    return GenericEffective(rates=rates, jump=jump, delta=delta, response=response)


def _denominator(params: SystemParams, scheme: LevelScheme) -> complex:
    p = params
    k = p.kappa
    if scheme is LevelScheme.FOUR_LEVEL:
        B = p.g ** 2 + k * p.gamma_o
        den = complex(B * p.Gamma + k * (p.omega2 ** 2 - p.delta_e * p.delta_e2),
                      B * p.delta_e2 + k * p.Gamma * p.delta_e)
    else:
        den = complex(p.g ** 2 + k * p.gamma, k * p.delta_e)
    if abs(den) < 1e-300:
        raise SingularityError("effective-operator denominator vanishes")
    return den


def a_coefficient(params: SystemParams, scheme: LevelScheme) -> complex:
    """``A(t) / Omega(t)`` for the given scheme.

    Four-level: ``kappa / [B Gamma + kappa (Omega_2^2 - De De2) + i (B De2 + kappa Gamma De)]``
    with ``B = g^2 + kappa gamma_o``; three-level: ``kappa / [g^2 + kappa (gamma + i De)]``.
    ``Gamma`` reduces to ``gamma_u`` when the extended decays vanish.
    """
    scheme = LevelScheme.parse(scheme)
    return params.kappa / _denominator(params, scheme)


@dataclass(frozen=True)
class EffectiveModel:
    """Time-dependent effective detuning and decay rates for one pulse.

    Every rate is ``rate_coeffs[c] * |Omega(t)|^2``; the effective jump
    operator of channel ``c`` is ``jump_coeffs[c] * Omega(t)`` times its dyad.
    ``diagnostic`` is ``max_t |Omega(t)| / s_min(H_NH)`` over the emission
    window; the reduction is only trustworthy when it is small. No cutoff is
    applied; callers judge the value.
    """

    params: SystemParams
    scheme: LevelScheme
    pulse: PulseShape
    a_coeff: complex
    delta_coeff: float
    rate_coeffs: dict
    jump_coeffs: dict
    diagnostic: float = math.nan
    notes: tuple = field(default=())

    def A(self, t):
        return self.a_coeff * self.pulse.amplitude(t)

    def rate(self, label: str, t):
        return self.rate_coeffs[label] * self.pulse.intensity(t)

    def delta_eff(self, t):
        return self.delta_coeff * self.pulse.intensity(t)

    def kappa_ex_eff(self, t):
        return self.rate("ex", t)

    def kappa_in_eff(self, t):
        return self.rate("in", t)

    def gamma_u_eff(self, t):
        return self.rate("u", t)

    def gamma_o_eff(self, t):
        return self.rate("o", t)

    def kappa_eff(self, t):
        return self.kappa_coeff * self.pulse.intensity(t)

    def gamma_eff(self, t):
        return (self.rate_coeffs["u"] + self.rate_coeffs["o"]) * self.pulse.intensity(t)

    @property
    def kappa_coeff(self) -> float:
        return self.rate_coeffs["ex"] + self.rate_coeffs["in"]

    @property
    def decay_coeff(self) -> float:
        """Sum of all rate prefactors: decay of the no-jump amplitude."""
        return float(sum(self.rate_coeffs.values()))

    @property
    def loss_coeff(self) -> float:
        """Prefactor of the ``|u,0>`` depletion once ``u``-jumps recycle the population."""
        return self.decay_coeff - self.rate_coeffs["u"]

    @property
    def no_jump_coeff(self) -> complex:
        """Complex exponent prefactor ``kappa_eff + gamma_eff + i Delta_eff`` per unit intensity."""
        return complex(self.decay_coeff, self.delta_coeff)

    @property
    def lambda_si(self) -> float:
        return 2.0 * self.decay_coeff

    def asymptotic(self) -> tuple[float, float]:
        """``(P_si, P_total)`` as ratios of effective rates."""
        ex = self.rate_coeffs["ex"]
        return ex / self.decay_coeff, ex / self.loss_coeff


def _rate_coeffs_closed(params: SystemParams, scheme: LevelScheme) -> tuple[dict, float, dict]:
    # Written with r = A/(kappa Omega) = 1/den so that kappa -> 0 stays finite.
    p = params
    k = p.kappa
    r = 1.0 / _denominator(params, scheme)
    r2 = abs(r) ** 2
    if scheme is LevelScheme.FOUR_LEVEL:
        B = p.g ** 2 + k * p.gamma_o
        C = B ** 2 + k ** 2 * p.delta_e ** 2
        rates = {
            "ex": p.kappa_ex * p.g ** 2 * p.omega2 ** 2 * r2,
            "in": p.kappa_in * p.g ** 2 * p.omega2 ** 2 * r2,
            "u": p.gamma_u * C * r2,
            "o": p.gamma_o * p.omega2 ** 2 * k ** 2 * r2,
            "o2": p.gamma_o2 * C * r2,
            "e": p.gamma_e * C * r2,
        }
        delta = -(B ** 2 * p.delta_e2 + k ** 2 * (p.delta_e * p.delta_e2 - p.omega2 ** 2) * p.delta_e) * r2
        w = complex(B, k * p.delta_e)
        jump = {
            "ex": -1j * math.sqrt(2 * p.kappa_ex) * p.g * p.omega2 * r,
            "in": -1j * math.sqrt(2 * p.kappa_in) * p.g * p.omega2 * r,
            "u": 1j * math.sqrt(2 * p.gamma_u) * w * r,
            "o": math.sqrt(2 * p.gamma_o) * p.omega2 * k * r,
            "o2": 1j * math.sqrt(2 * p.gamma_o2) * w * r,
            "e": 1j * math.sqrt(2 * p.gamma_e) * w * r,
        }
    else:
        rates = {
            "ex": p.kappa_ex * p.g ** 2 * r2,
            "in": p.kappa_in * p.g ** 2 * r2,
            "u": p.gamma_u * k ** 2 * r2,
            "o": p.gamma_o * k ** 2 * r2,
        }
        delta = -p.delta_e * k ** 2 * r2
        jump = {
            "ex": math.sqrt(2 * p.kappa_ex) * p.g * r,
            "in": math.sqrt(2 * p.kappa_in) * p.g * r,
            "u": 1j * math.sqrt(2 * p.gamma_u) * k * r,
            "o": 1j * math.sqrt(2 * p.gamma_o) * k * r,
        }
    return rates, float(delta), jump


def _emission_horizon(pulse: PulseShape, loss_coeff: float, eps: float = 1e-6) -> float:
    if math.isfinite(pulse.t_end):
        return pulse.t_end
    if loss_coeff <= 0:
        return math.inf
    return pulse.time_for_h(math.log(1.0 / eps) / (2.0 * loss_coeff))


def build_effective(params: SystemParams, scheme: LevelScheme, pulse: PulseShape) -> EffectiveModel:
    """Effective model of ``scheme`` driven by ``pulse``."""
    scheme = LevelScheme.parse(scheme)
    params.check(scheme)
    a = a_coefficient(params, scheme)
    rates, delta, jump = _rate_coeffs_closed(params, scheme)
    notes = []
    try:
        s_min = float(np.linalg.svd(build_nonhermitian(params, scheme), compute_uv=False)[-1])
    except SingularityError:
        s_min = 0.0
    loss = sum(rates.values()) - rates["u"]
    horizon = _emission_horizon(pulse, loss)
    if math.isfinite(horizon) and s_min > 0:
        ts = np.linspace(0.0, horizon, 2001)
        if isinstance(pulse, TabulatedPulse):
            ts = np.union1d(ts, pulse.times[pulse.times <= horizon])
        diag = float(np.max(np.abs(pulse.amplitude(ts)))) / s_min
    else:
        diag = math.inf
    if scheme is LevelScheme.FOUR_LEVEL and params.gamma_e > 0:
        notes.append("gamma_e jumps land in |e,0>; they are counted as losses here")
    return EffectiveModel(params=params, scheme=scheme, pulse=pulse, a_coeff=a,
                          delta_coeff=delta, rate_coeffs=rates, jump_coeffs=jump,
                          diagnostic=diag, notes=tuple(notes))


@dataclass(frozen=True)
class ExcitedState:
    """Unnormalised excited-manifold amplitudes (labels as in ``labels``)."""

    labels: tuple
    amplitudes: np.ndarray

    @property
    def populations(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    def __getitem__(self, label: str) -> complex:
        return complex(self.amplitudes[self.labels.index(label)])


def excited_state(params: SystemParams, scheme: LevelScheme, omega_t: complex,
                  u_population: float) -> ExcitedState:
    """Adiabatically eliminated excited-state amplitudes.

    Four-level: ``i Omega sqrt(p) / D * ([g^2 + kappa(gamma_o + i De)], -i kappa Omega_2, -g Omega_2)``
    on ``(|e2,0>, |e,0>, |g,1>)``. ``gamma_u`` in ``D`` is replaced by the
    total ``|e2>`` decay ``Gamma``, which is what ``H_NH`` contains once the
    extended decays are switched on.
    """
    scheme = LevelScheme.parse(scheme)
    params.check(scheme)
    if not 0.0 <= u_population <= 1.0:
        raise ValueError("u_population must lie in [0, 1]")
    p = params
    k = p.kappa
    amp = omega_t * math.sqrt(u_population)
    if scheme is LevelScheme.FOUR_LEVEL:
        G = p.Gamma
        den = p.g ** 2 * complex(G, p.delta_e2) + k * (complex(p.gamma_o, p.delta_e) * complex(G, p.delta_e2)
                                                      + p.omega2 ** 2)
        if den == 0:
            raise SingularityError("excited-state denominator vanishes")
        vec = np.array([p.g ** 2 + k * complex(p.gamma_o, p.delta_e), -1j * k * p.omega2, -p.g * p.omega2])
        amps = 1j * amp / den * vec
    else:
        den = p.g ** 2 + k * complex(p.gamma, p.delta_e)
        if den == 0:
            raise SingularityError("excited-state denominator vanishes")
        amps = amp / den * np.array([1j * k, p.g])
    return ExcitedState(labels=excited_labels(scheme), amplitudes=np.asarray(amps, dtype=complex))


# ---------------------------------------------------------------------------
# No-jump evolution
# ---------------------------------------------------------------------------

_GL_X, _GL_W = np.polynomial.legendre.leggauss(4)


def cumulative_intensity(pulse: PulseShape, t_grid, s: float = 0.0) -> np.ndarray:
    """``int_s^t |Omega|^2`` at each grid time (0 for ``t <= s``) by Gauss-Legendre.

    Breakpoints of tabulated pulses are honoured so the piecewise polynomial
    intensity is integrated exactly.
    """
    t_grid = np.asarray(t_grid, dtype=float)
    out = np.zeros_like(t_grid)
    mask = t_grid > s
    if not np.any(mask):
        return out
    pts = [np.array([s]), t_grid[mask]]
    if isinstance(pulse, TabulatedPulse):
        pts.append(pulse.times[(pulse.times > s) & (pulse.times < t_grid[mask].max())])
    if math.isfinite(pulse.t_end) and s < pulse.t_end < t_grid.max():
        pts.append(np.array([pulse.t_end]))
    nodes = np.unique(np.concatenate(pts))
    a, b = nodes[:-1], nodes[1:]
    half = 0.5 * (b - a)
    mid = 0.5 * (b + a)
    x = mid[:, None] + half[:, None] * _GL_X[None, :]
    seg = half * (pulse.intensity(x) @ _GL_W)
    cum = np.concatenate(([0.0], np.cumsum(seg)))
    out[mask] = cum[np.searchsorted(nodes, t_grid[mask])]
    return out


@dataclass(frozen=True)
class EffectiveTrajectory:
    """Effective dynamics started in ``|u,0>`` at time ``s``.

    ``phi`` is the no-jump amplitude on ``|u,0>``; ``rho_u``, ``rho_g0`` and
    ``rho_o`` are the ground populations of the full effective master
    equation, in which ``u``-jumps return the population to ``|u,0>``.
    """

    times: np.ndarray
    s: float
    phi: np.ndarray
    exponent: np.ndarray
    rho_u: np.ndarray
    rho_g0: np.ndarray
    rho_o: np.ndarray


def effective_evolve(model: EffectiveModel, t_grid, s: float = 0.0) -> EffectiveTrajectory:
    """Integrate the effective no-jump equation and the ground populations on ``t_grid``."""
    t_grid = np.asarray(t_grid, dtype=float)
    if t_grid.ndim != 1 or np.any(np.diff(t_grid) < 0):
        raise ValueError("t_grid must be a 1-D ascending array")
    h = cumulative_intensity(model.pulse, t_grid, s)
    exponent = model.no_jump_coeff * h
    started = t_grid >= s
    phi = np.where(started, np.exp(-exponent), 0.0)
    rho_u = np.where(started, np.exp(-2.0 * model.loss_coeff * h), 0.0)
    drained = np.where(started, 1.0 - rho_u, 0.0)
    loss = model.loss_coeff
    frac_g0 = model.kappa_coeff / loss if loss > 0 else 0.0
    rho_g0 = frac_g0 * drained
    rho_o = drained - rho_g0
    return EffectiveTrajectory(times=t_grid, s=float(s), phi=phi, exponent=exponent,
                               rho_u=rho_u, rho_g0=rho_g0, rho_o=rho_o)
