"""Full master-equation dynamics with jump-channel bookkeeping.

The density matrix is integrated together with the cumulative emission
``E_c(t) = int_0^t Tr[L_c rho L_c^dag] dt'`` of every jump channel, so the
probability carried by each channel is obtained without post-hoc quadrature.
Suppressing the feeding term ``L_c rho L_c^dag`` of a channel (its
anticommutator is kept) leaves the no-jump branch of that channel; with the
``u`` channel suppressed, ``E_ex`` is the single-excitation emission
probability.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from .qmodel import (
    CHANNEL_LABELS,
    LevelScheme,
    PulseShape,
    SystemParams,
    basis_labels,
    build_lindblads,
    drive_coupling,
    index,
    ket,
    manifold_labels,
    static_hamiltonian,
)


class IntegrationError(RuntimeError):
    """The ODE solver failed (step-size underflow or non-finite state)."""


@dataclass(frozen=True)
class FixedTime:
    t: float

    def __post_init__(self) -> None:
        if not self.t > 0:
            raise ValueError("FixedTime needs t > 0")


@dataclass(frozen=True)
class PopulationThreshold:
    """Stop once the generation-manifold population drops below ``epsilon``.

    ``t_cap`` bounds the run; ``None`` means ten times the closed-form
    emission-time estimate.
    """

    epsilon: float = 1e-6
    t_cap: float | None = None

    def __post_init__(self) -> None:
        if not self.epsilon > 0:
            raise ValueError("epsilon must be > 0")


@dataclass(frozen=True)
class IntegratorConfig:
    rtol: float = 1e-8
    atol: float = 1e-10
    dt_init: float | None = None
    dt_max: float = math.inf
    t_end_policy: FixedTime | PopulationThreshold = field(default_factory=PopulationThreshold)
    n_snapshots: int = 2001
    method: str = "DOP853"

    def __post_init__(self) -> None:
        if not (self.rtol > 0 and self.atol > 0):
            raise ValueError("tolerances must be > 0")
        if self.dt_init is not None and not self.dt_init > 0:
            raise ValueError("dt_init must be > 0")
        if not self.dt_max > 0:
            raise ValueError("dt_max must be > 0")
        if self.n_snapshots < 2:
            raise ValueError("n_snapshots must be >= 2")


@dataclass
class SimResult:
    """Sampled trajectory of a master-equation run.

    ``rho`` has shape ``(n_t, d, d)``; ``emissions[c]`` is the cumulative
    probability emitted through channel ``c`` on the same grid.
    """

    times: np.ndarray
    rho: np.ndarray
    labels: tuple[str, ...]
    emissions: dict[str, np.ndarray]
    suppressed: frozenset[str] = frozenset()
    stopped_by_threshold: bool = False
    nfev: int = 0
    params: SystemParams | None = None
    scheme: LevelScheme | None = None
    dense: object = field(default=None, repr=False)
    channel_order: tuple[str, ...] = ()

    @property
    def t_stop(self) -> float:
        return float(self.times[-1])

    def population(self, label: str) -> np.ndarray:
        i = self.labels.index(label)
        return self.rho[:, i, i].real.copy()

    @property
    def populations(self) -> dict[str, np.ndarray]:
        return {lab: self.population(lab) for lab in self.labels}

    def trace(self) -> np.ndarray:
        return np.einsum("tii->t", self.rho).real

    def min_eigenvalues(self) -> np.ndarray:
        herm = 0.5 * (self.rho + np.conj(np.swapaxes(self.rho, 1, 2)))
        return np.linalg.eigvalsh(herm)[:, 0]

    def hermiticity_error(self) -> float:
        return float(np.max(np.abs(self.rho - np.conj(np.swapaxes(self.rho, 1, 2)))))

    def emission(self, label: str) -> np.ndarray:
        """Cumulative emission of ``label`` (zeros for a channel with zero rate)."""
        if label in self.emissions:
            return self.emissions[label]
        return np.zeros_like(self.times)

    def final_emission(self, label: str) -> float:
        return float(self.emission(label)[-1])

    def emission_at(self, label: str, t) -> np.ndarray | float:
        """Cumulative emission of ``label`` at arbitrary ``t`` from the dense solution."""
        if label not in self.channel_order:
            return np.zeros_like(np.asarray(t, dtype=float)) if np.ndim(t) else 0.0
        if self.dense is None:
            return np.interp(t, self.times, self.emission(label))
        d = len(self.labels)
        k = self.channel_order.index(label)
        val = np.real(self.dense(np.clip(t, self.times[0], self.times[-1]))[d * d + k])
        return float(val) if np.ndim(val) == 0 else val


def _superoperators(H0, V, lindblads, suppressed):
    """Row-major vectorised generator pieces: ``A0 + Om*Ap + conj(Om)*Am``."""
    d = H0.shape[0]
    eye = np.eye(d)

    def comm(H):
        return -1j * (np.kron(H, eye) - np.kron(eye, H.T))

    A0 = comm(H0)
    rows = []
    for label, L in lindblads:
        K = L.conj().T @ L
        if label not in suppressed:
            A0 = A0 + np.kron(L, L.conj())
        A0 = A0 - 0.5 * (np.kron(K, eye) + np.kron(eye, K.T))
        rows.append(K.T.reshape(-1))
    n = d * d
    m = len(lindblads)
    full0 = np.zeros((n + m, n + m), dtype=complex)
    full0[:n, :n] = A0
    if m:
        full0[n:, :n] = np.array(rows)
    fullp = np.zeros_like(full0)
    fullm = np.zeros_like(full0)
    if V is not None:
        fullp[:n, :n] = comm(V)
        fullm[:n, :n] = comm(V.conj().T)
    return full0, fullp, fullm


def integrate_master_equation(hamiltonian, lindblads, rho0, t_final, *, drive=None,
                              config: IntegratorConfig | None = None,
                              suppressed=frozenset(), stop_indices=None,
                              stop_epsilon=None, labels=None) -> SimResult:
    """Integrate a Lindblad equation on a small dense Hilbert space.

    Parameters
    ----------
    hamiltonian : (d, d) array
        Time-independent part of the Hamiltonian.
    lindblads : list of (label, (d, d) array)
        Jump operators; each label gets a cumulative emission trace.
    rho0 : (d, d) array
        Initial density matrix.
    t_final : float
        End of the integration window.
    drive : (V_plus, amplitude), optional
        Adds ``Omega(t) V_plus + conj(Omega(t)) V_plus^dag`` with ``Omega = amplitude(t)``.
    suppressed : set of str
        Channels whose feeding term is dropped.
    stop_indices, stop_epsilon
        Terminate when the summed populations at ``stop_indices`` fall below
        ``stop_epsilon``.
    """
    config = config or IntegratorConfig()
    H0 = np.asarray(hamiltonian, dtype=complex)
    d = H0.shape[0]
    labels = tuple(labels) if labels is not None else tuple(str(i) for i in range(d))
    order = tuple(lab for lab, _ in lindblads)
    V, amp = (None, None) if drive is None else drive
    A0, Ap, Am = _superoperators(H0, V, lindblads, frozenset(suppressed))
    n = d * d

    if V is None:
        def rhs(t, y):
            return A0 @ y
    else:
        def rhs(t, y):
            om = complex(amp(t))
            return A0 @ y + om * (Ap @ y) + om.conjugate() * (Am @ y)

    events = None
    if stop_indices is not None:
        diag = [i * d + i for i in stop_indices]

        def below_threshold(t, y):
            return float(np.sum(y[diag]).real) - stop_epsilon

        below_threshold.terminal = True
        below_threshold.direction = -1
        events = [below_threshold]

    y0 = np.concatenate([np.asarray(rho0, dtype=complex).reshape(-1), np.zeros(len(order), complex)])
    kwargs = dict(method=config.method, rtol=config.rtol, atol=config.atol,
                  dense_output=True, events=events, max_step=config.dt_max)
    if config.dt_init is not None:
        kwargs["first_step"] = config.dt_init
    sol = solve_ivp(rhs, (0.0, float(t_final)), y0, **kwargs)
    if sol.status < 0:
        raise IntegrationError(f"integration failed at t={sol.t[-1]:.6g}: {sol.message}")
    if not np.all(np.isfinite(sol.y[:, -1])):
        raise IntegrationError(f"non-finite state at t={sol.t[-1]:.6g}")

    t_stop = float(sol.t[-1])
    times = np.linspace(0.0, t_stop, config.n_snapshots)
    Y = sol.sol(times)
    if not np.all(np.isfinite(Y)):
        raise IntegrationError("non-finite values in dense output")
    Y[:, 0] = y0
    Y[:, -1] = sol.y[:, -1]
    rho = Y[:n].T.reshape(-1, d, d)
    emissions = {lab: Y[n + k].real.copy() for k, lab in enumerate(order)}
    return SimResult(times=times, rho=rho, labels=labels, emissions=emissions,
                     suppressed=frozenset(suppressed), stopped_by_threshold=sol.status == 1,
                     nfev=int(sol.nfev), dense=sol.sol, channel_order=order)


def default_time_cap(params: SystemParams, scheme: LevelScheme, pulse: PulseShape) -> float:
    """Ten times the closed-form emission-time estimate (pulse ``t_end`` as fallback)."""
    from .closedform import EmissionNotReachedError, emission_time

    try:
        return 10.0 * emission_time(params, scheme, pulse)
    except (EmissionNotReachedError, ValueError, ZeroDivisionError):
        if math.isfinite(pulse.t_end):
            return 10.0 * pulse.t_end
        raise ValueError("cannot estimate a run length; use FixedTime") from None


def evolve(params: SystemParams, scheme: LevelScheme, pulse: PulseShape,
           config: IntegratorConfig | None = None, suppressed_recycling=frozenset(),
           rho0=None) -> SimResult:
    """Evolve the atom-cavity system from ``|u,0>`` (or ``rho0``) under ``pulse``."""
    scheme = LevelScheme.parse(scheme)
    params.check(scheme)
    config = config or IntegratorConfig()
    suppressed = frozenset(suppressed_recycling)
    unknown = suppressed - set(CHANNEL_LABELS[scheme])
    if unknown:
        raise ValueError(f"unknown channel label(s) {sorted(unknown)} for {scheme.name}")
    if rho0 is None:
        u = ket(scheme, "u0")
        rho0 = np.outer(u, u.conj())

    policy = config.t_end_policy
    if isinstance(policy, FixedTime):
        t_final, stop_idx, eps = policy.t, None, None
    else:
        t_final = policy.t_cap if policy.t_cap is not None else default_time_cap(params, scheme, pulse)
        stop_idx = [index(scheme, lab) for lab in manifold_labels(scheme)]
        eps = policy.epsilon

    res = integrate_master_equation(
        static_hamiltonian(params, scheme), build_lindblads(params, scheme), rho0, t_final,
        drive=(drive_coupling(scheme), pulse.amplitude), config=config, suppressed=suppressed,
        stop_indices=stop_idx, stop_epsilon=eps, labels=basis_labels(scheme),
    )
    res.params = params
    res.scheme = scheme
    return res


def photon_flux(result: SimResult) -> tuple[np.ndarray, np.ndarray]:
    """Output flux ``2 kappa_ex rho_{g,1}(t)`` on the result's time grid."""
    if result.params is None:
        raise ValueError("result carries no parameters; run it through evolve()")
    flux = 2.0 * result.params.kappa_ex * np.maximum(result.population("g1"), 0.0)
    return result.times, flux


def emission_time_numeric(result: SimResult, threshold: float = 0.99, label: str = "ex") -> float:
    """First time the cumulative emission of ``label`` reaches ``threshold`` of its final value."""
    from scipy.optimize import brentq

    final = result.final_emission(label)
    if final <= 0:
        raise ValueError(f"channel {label!r} emitted nothing")
    target = threshold * final
    e = result.emission(label)
    k = int(np.searchsorted(e, target))
    k = min(max(k, 1), len(e) - 1)
    lo, hi = result.times[k - 1], result.times[k]
    return float(brentq(lambda t: result.emission_at(label, t) - target, lo, hi, xtol=1e-12))
