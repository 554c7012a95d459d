"""Analytic performance formulas of the three- and four-level sources.

All functions are pure and evaluate the closed forms directly from
:class:`~photon_src.qmodel.SystemParams`; none of them goes through the
effective-operator matrices, which keeps them usable as oracles for the
numerical modules.

Notation: ``B = g^2 + kappa*gamma_o`` and ``C = B^2 + kappa^2 Delta_e^2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .qmodel import LevelScheme, LinearPulse, ParameterError, PulseShape, SystemParams


class EmissionNotReachedError(RuntimeError):
    """The pulse ends before the emission threshold is reached."""


@dataclass(frozen=True)
class PerformanceSummary:
    P_si: float
    P_total: float
    R_re: float
    D_S: float
    F_S: float
    lambda_si: float
    lambda_si_bound: float
    t_em: float

    @property
    def P_re(self) -> float:
        return self.P_total - self.P_si


def _B(p: SystemParams) -> float:
    return p.g ** 2 + p.kappa * p.gamma_o


def _C(p: SystemParams, B: float | None = None) -> float:
    B = _B(p) if B is None else B
    return B ** 2 + p.kappa ** 2 * p.delta_e ** 2


def _require_base_decays(p: SystemParams, what: str) -> None:
    if p.gamma_e > 0:
        raise ParameterError(f"{what} is not defined for gamma_e > 0; use extended_decay()")


def gamma_o_prime(params: SystemParams) -> float:
    """Effective ``gamma_o`` absorbing the ``|e2> -> |o>`` decay."""
    p = params
    if p.gamma_o2 == 0:
        return p.gamma_o
    if p.omega2 == 0:
        return math.inf
    return p.gamma_o + _C(p) / (p.kappa ** 2 * p.omega2 ** 2) * p.gamma_o2


def p_si_total_rre(params: SystemParams, scheme: LevelScheme) -> tuple[float, float, float]:
    """``(P_si, P_total, R_re)`` for a drive applied until ``|u,0>`` is empty.

    A nonzero four-level ``gamma_o2`` enters as the extra loss
    ``gamma_o2 * C / (kappa^2 Omega_2^2)`` of the effective rates; ``P_total``
    then equals the ``gamma_o -> gamma_o'`` form of :func:`extended_decay`.
    ``R_re`` here keeps the ``gamma_u`` prefactor ``C`` of the unshifted
    ``gamma_o``, whereas :func:`extended_decay` shifts it as well.
    """
    scheme = LevelScheme.parse(scheme)
    params.check(scheme)
    p = params
    if p.kappa == 0:
        return 0.0, 0.0, 0.0
    if scheme is LevelScheme.THREE_LEVEL:
        p_si = p.kappa_ex / p.kappa * p.g ** 2 / (p.g ** 2 + p.kappa * p.gamma)
        p_total = p.kappa_ex / p.kappa * p.g ** 2 / (p.g ** 2 + p.kappa * p.gamma_o)
        r_re = p.kappa * p.gamma_u / (p.g ** 2 + p.kappa * p.gamma)
        return p_si, p_total, r_re
    _require_base_decays(p, "p_si_total_rre")
    B = _B(p)
    C = _C(p, B)
    k = p.kappa
    drive = k * B * p.omega2 ** 2
    denom = drive + (p.gamma_u + p.gamma_o2) * C
    if denom == 0:
        return 0.0, p.kappa_ex / k * p.g ** 2 / B, 0.0
    p_si = p.kappa_ex * p.g ** 2 * p.omega2 ** 2 / denom
    if p.gamma_o2 == 0:
        p_total = p.kappa_ex / k * p.g ** 2 / B
    else:
        p_total = p.kappa_ex * p.g ** 2 * p.omega2 ** 2 / (drive + p.gamma_o2 * C)
    r_re = p.gamma_u * C / denom
    return p_si, p_total, r_re


def r_re_three_level(params: SystemParams) -> float:
    """Re-excitation ratio of the three-level source with the same ``g, kappa, gamma``."""
    p = params
    return p.kappa * p.gamma_u / (p.g ** 2 + p.kappa * p.gamma)


def purity_fidelity(R_re: float) -> tuple[float, float]:
    """Single-photon purity and fidelity from the re-excitation ratio."""
    if not 0.0 <= R_re <= 1.0:
        raise ValueError(f"R_re must lie in [0, 1], got {R_re!r}")
    return 1.0 - R_re, 1.0 - R_re / (2.0 - R_re)


def lambda_si(params: SystemParams, scheme: LevelScheme) -> float:
    """Exponent rate of ``P_si(t) = P_si (1 - exp(-lambda_si h(0, t)))``."""
    scheme = LevelScheme.parse(scheme)
    params.check(scheme)
    p = params
    k = p.kappa
    if scheme is LevelScheme.THREE_LEVEL:
        D = p.g ** 2 + k * p.gamma
        return 2.0 * k * D / (D ** 2 + k ** 2 * p.delta_e ** 2)
    B = _B(p)
    C = _C(p, B)
    G = p.Gamma
    re = B * G + k * (p.omega2 ** 2 - p.delta_e * p.delta_e2)
    im = B * p.delta_e2 + k * G * p.delta_e
    return 2.0 * (G * C + B * k * p.omega2 ** 2) / (re ** 2 + im ** 2)


def lambda_total(params: SystemParams, scheme: LevelScheme) -> float:
    """Exponent rate of the ``|u,0>`` depletion when ``u``-jumps recycle population."""
    scheme = LevelScheme.parse(scheme)
    params.check(scheme)
    p = params
    k = p.kappa
    if scheme is LevelScheme.THREE_LEVEL:
        D = p.g ** 2 + k * p.gamma
        return 2.0 * k * (p.g ** 2 + k * p.gamma_o) / (D ** 2 + k ** 2 * p.delta_e ** 2)
    B = _B(p)
    C = _C(p, B)
    G = p.Gamma
    re = B * G + k * (p.omega2 ** 2 - p.delta_e * p.delta_e2)
    im = B * p.delta_e2 + k * G * p.delta_e
    return 2.0 * ((G - p.gamma_u) * C + B * k * p.omega2 ** 2) / (re ** 2 + im ** 2)


def lambda_si_bound(params: SystemParams, scheme: LevelScheme) -> float:
    """Upper bound ``2 R_re / gamma_u`` of :func:`lambda_si`."""
    if params.gamma_u <= 0:
        raise ParameterError("the lambda_si bound needs gamma_u > 0")
    return 2.0 * p_si_total_rre(params, scheme)[2] / params.gamma_u


def optimal_delta_e2(params: SystemParams) -> float:
    """``Delta_e2`` maximising ``lambda_si`` (four-level)."""
    p = params
    return p.kappa ** 2 * p.omega2 ** 2 * p.delta_e / _C(p)


def p_si_of_t(params: SystemParams, scheme: LevelScheme, pulse: PulseShape, t):
    """Single-excitation emission probability up to ``t`` (closed exponential form)."""
    p_si = p_si_total_rre(params, scheme)[0]
    lam = lambda_si(params, scheme)
    h = pulse.cumulative(np.maximum(np.asarray(t, dtype=float), 0.0))
    out = p_si * -np.expm1(-lam * h)
    return float(out) if np.ndim(out) == 0 else out


def p_re_of_t(params: SystemParams, scheme: LevelScheme, pulse: PulseShape, t):
    """Re-excitation emission probability up to ``t``."""
    _require_base_decays(params, "p_re_of_t")
    p_total = p_si_total_rre(params, scheme)[1]
    lam_tot = lambda_total(params, scheme)
    h = pulse.cumulative(np.maximum(np.asarray(t, dtype=float), 0.0))
    out = p_total * -np.expm1(-lam_tot * h) - p_si_of_t(params, scheme, pulse, t)
    return float(out) if np.ndim(out) == 0 else out


def gamma_u_eff_coeff(params: SystemParams, scheme: LevelScheme) -> float:
    """``gamma_u^eff(t) / |Omega(t)|^2``."""
    scheme = LevelScheme.parse(scheme)
    p = params
    k = p.kappa
    if scheme is LevelScheme.THREE_LEVEL:
        D = p.g ** 2 + k * p.gamma
        return p.gamma_u * k ** 2 / (D ** 2 + k ** 2 * p.delta_e ** 2)
    B = _B(p)
    G = p.Gamma
    re = B * G + k * (p.omega2 ** 2 - p.delta_e * p.delta_e2)
    im = B * p.delta_e2 + k * G * p.delta_e
    return p.gamma_u * _C(p, B) / (re ** 2 + im ** 2)


def rate_r(params: SystemParams, scheme: LevelScheme, pulse: PulseShape, s):
    """Rate of re-excitation jumps at time ``s``: ``2 gamma_u^eff(s) rho_u(s)``."""
    s = np.asarray(s, dtype=float)
    lam_tot = lambda_total(params, scheme)
    out = (2.0 * gamma_u_eff_coeff(params, scheme) * pulse.intensity(s)
           * np.exp(-lam_tot * pulse.cumulative(np.maximum(s, 0.0))))
    out = np.where(s < 0, 0.0, out)
    return float(out) if out.ndim == 0 else out


def emission_time(params: SystemParams, scheme: LevelScheme, pulse: PulseShape,
                  threshold: float = 0.99, method: str | None = None) -> float:
    """Time at which ``P_si(t)`` reaches ``threshold`` of its final value.

    ``method="closed"`` inverts ``1 - exp(-lambda_si h)`` (linear pulses);
    ``method="bisect"`` bisects the quadrature-evaluated ``P_si(t)`` from the
    effective model. The default is ``"closed"`` for linear pulses and
    ``"bisect"`` otherwise.
    """
    if not 0.0 < threshold < 1.0:
        raise ValueError("threshold must lie in (0, 1)")
    lam = lambda_si(params, scheme)
    if not lam > 0:
        raise EmissionNotReachedError("lambda_si is zero; no emission")
    h_target = -math.log1p(-threshold) / lam
    if method is None:
        method = "closed" if isinstance(pulse, LinearPulse) else "bisect"
    if method == "closed":
        if not isinstance(pulse, LinearPulse):
            raise ValueError("closed-form emission time needs a LinearPulse")
        t = (3.0 * h_target / pulse.omega0 ** 2) ** (1.0 / 3.0)
        if t > pulse.t_end:
            raise EmissionNotReachedError(f"threshold reached at t={t:.6g} > t_end={pulse.t_end:.6g}")
        return t
    if method != "bisect":
        raise ValueError(f"unknown method {method!r}")
    return _bisect_emission_time(params, scheme, pulse, threshold, h_target)


def _bisect_emission_time(params, scheme, pulse, threshold, h_target) -> float:
    from .effective import build_effective
    from .photonics import single_excitation_curve

    model = build_effective(params, scheme, pulse)
    # Bracket: the end of the pulse, or a time well past the target for open-ended pulses.
    t_hi = pulse.t_end
    if not math.isfinite(t_hi):
        t_hi = 2.0 * max(pulse.time_for_h(2.0 * h_target), 1e-9)
    p_final = model.asymptotic()[0]
    target = threshold * p_final

    def f(t):
        return float(single_excitation_curve(model, np.array([t]))[0]) - target

    if f(t_hi) < 0:
        raise EmissionNotReachedError("P_si threshold not reached before the end of the pulse")
    return float(brentq(f, 0.0, t_hi, xtol=1e-12, rtol=1e-14))


def overlap(params: SystemParams, scheme: LevelScheme, pulse: PulseShape, s: float,
            s_prime: float) -> complex:
    """Inner product ``<psi_{s'}|psi_s>`` of the wavepackets emitted after a reset at ``s``/``s'``.

    For ``s >= s'``:
    ``exp[int_0^{s'} (k+g-iD)] exp[int_0^s (k+g+iD)] (P_si - P_si(s))``; the
    exponentials are combined before evaluation to avoid overflow.
    """
    if s < 0 or s_prime < 0:
        raise ValueError("s and s' must be >= 0")
    if s < s_prime:
        return complex(np.conj(overlap(params, scheme, pulse, s_prime, s)))
    from .effective import build_effective

    model = build_effective(params, scheme, pulse)
    p_si = model.asymptotic()[0]
    c = model.no_jump_coeff
    h = pulse.cumulative(s) - pulse.cumulative(s_prime)
    return complex(p_si * np.exp(-np.conj(c) * h))


@dataclass(frozen=True)
class ExtendedDecay:
    gamma_o_prime: float
    P_total: float
    R_re: float
    P_pure: float
    decay_trace_bound: float


def extended_decay(params: SystemParams) -> ExtendedDecay:
    """Four-level figures of merit with the ``|e2>`` decays ``gamma_o2``, ``gamma_e`` switched on."""
    p = params
    p.check(LevelScheme.FOUR_LEVEL)
    k = p.kappa
    B = _B(p)
    C = _C(p, B)
    go = gamma_o_prime(p)
    Bp = p.g ** 2 + k * go
    Cp = Bp ** 2 + k ** 2 * p.delta_e ** 2
    p_total = p.kappa_ex / k * p.g ** 2 / Bp
    r_re = p.gamma_u * Cp / (k * Bp * p.omega2 ** 2 + p.gamma_u * Cp)
    pure_den = k * B * p.omega2 ** 2 + p.Gamma * C
    p_pure = p.kappa_ex * p.g ** 2 * p.omega2 ** 2 / pure_den
    bound = p.kappa_ex / k * (p.gamma_u + p.gamma_e) * C / pure_den
    return ExtendedDecay(gamma_o_prime=go, P_total=p_total, R_re=r_re, P_pure=p_pure,
                         decay_trace_bound=bound)


@dataclass(frozen=True)
class RatioMap:
    """``R_re / R_re^(3)`` on a ``(g/gamma, Omega_2/gamma)`` grid (rows follow ``g``)."""

    g_over_gamma: np.ndarray
    omega2_over_gamma: np.ndarray
    ratio: np.ndarray
    r_re_four: np.ndarray
    r_re_three: np.ndarray


def ratio_map(g_over_gamma, omega2_over_gamma, kappa_ex_over_gamma: float = 0.99,
              kappa_in_over_gamma: float = 0.01) -> RatioMap:
    """Four- to three-level re-excitation ratio with ``Delta_e = 0`` and ``gamma_u = gamma_o``.

    Rates are in units of the total atomic decay ``gamma``; both schemes share
    ``g, gamma_u, gamma_o, kappa_in, kappa_ex``.
    """
    g = np.atleast_1d(np.asarray(g_over_gamma, dtype=float))
    om = np.atleast_1d(np.asarray(omega2_over_gamma, dtype=float))
    if np.any(g <= 0) or np.any(om <= 0) or kappa_ex_over_gamma <= 0 or kappa_in_over_gamma < 0:
        raise ValueError("ratio_map inputs must be positive")
    gu = go = 0.5
    k = kappa_ex_over_gamma + kappa_in_over_gamma
    G, OM = np.meshgrid(g, om, indexing="ij")
    B = G ** 2 + k * go
    r4 = gu * B ** 2 / (k * B * OM ** 2 + gu * B ** 2)
    r3 = k * gu / (G ** 2 + k * (gu + go))
    return RatioMap(g_over_gamma=g, omega2_over_gamma=om, ratio=r4 / r3, r_re_four=r4,
                    r_re_three=np.broadcast_to(r3, r4.shape).copy())


def ratio_threshold(g_over_gamma, kappa_ex_over_gamma: float = 0.99,
                    kappa_in_over_gamma: float = 0.01):
    """``Omega_2 = g^2/kappa + gamma_o`` in units of ``gamma`` (where the ratio equals 1)."""
    k = kappa_ex_over_gamma + kappa_in_over_gamma
    return np.asarray(g_over_gamma, dtype=float) ** 2 / k + 0.5


def summarize(params: SystemParams, scheme: LevelScheme, pulse: PulseShape | None = None,
              threshold: float = 0.99) -> PerformanceSummary:
    """All closed-form figures of merit; ``t_em`` is ``nan`` without a pulse."""
    scheme = LevelScheme.parse(scheme)
    p_si, p_total, r_re = p_si_total_rre(params, scheme)
    d_s, f_s = purity_fidelity(min(max(r_re, 0.0), 1.0))
    lam = lambda_si(params, scheme)
    bound = lambda_si_bound(params, scheme) if params.gamma_u > 0 else math.inf
    t_em = math.nan
    if pulse is not None and lam > 0:
        try:
            t_em = emission_time(params, scheme, pulse, threshold)
        except EmissionNotReachedError:
            t_em = math.inf
    return PerformanceSummary(P_si=p_si, P_total=p_total, R_re=r_re, D_S=d_s, F_S=f_s,
                              lambda_si=lam, lambda_si_bound=bound, t_em=t_em)
