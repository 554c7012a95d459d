"""Basis, parameters, operators and drive pulses for the atom-cavity manifolds.

Everything is expressed in units of the atom-cavity coupling ``g``. Two level
schemes are supported:

* ``FOUR_LEVEL``: basis ``|u,0>, |e2,0>, |e,0>, |g,1>, |g,0>, |o,0>``
* ``THREE_LEVEL``: basis ``|u,0>, |e,0>, |g,1>, |g,0>, |o,0>``

``|o,0>`` is a single sink collecting every decay that leaves the
generation manifold, so the full master equation stays trace preserving.
"""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass

import numpy as np


class ParameterError(ValueError):
    """Raised for invalid or scheme-incompatible physical parameters."""


class PulseClampWarning(UserWarning):
    """Emitted when a pulse is evaluated outside its declared time range."""


class LevelScheme(enum.Enum):
    THREE_LEVEL = "three"
    FOUR_LEVEL = "four"

    @classmethod
    def parse(cls, value: "LevelScheme | str") -> "LevelScheme":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("-", "_")
        aliases = {
            "three": cls.THREE_LEVEL, "3": cls.THREE_LEVEL, "three_level": cls.THREE_LEVEL,
            "threelevel": cls.THREE_LEVEL,
            "four": cls.FOUR_LEVEL, "4": cls.FOUR_LEVEL, "four_level": cls.FOUR_LEVEL,
            "fourlevel": cls.FOUR_LEVEL,
        }
        try:
            return aliases[key]
        except KeyError:
            raise ParameterError(f"unknown level scheme {value!r}") from None


_BASIS = {
    LevelScheme.FOUR_LEVEL: ("u0", "e2_0", "e0", "g1", "g0", "o0"),
    LevelScheme.THREE_LEVEL: ("u0", "e0", "g1", "g0", "o0"),
}

# Generation manifold (populations summed by the termination criterion).
_MANIFOLD = {
    LevelScheme.FOUR_LEVEL: ("u0", "e2_0", "e0", "g1"),
    LevelScheme.THREE_LEVEL: ("u0", "e0", "g1"),
}

_EXCITED = {
    LevelScheme.FOUR_LEVEL: ("e2_0", "e0", "g1"),
    LevelScheme.THREE_LEVEL: ("e0", "g1"),
}

CHANNEL_LABELS = {
    LevelScheme.FOUR_LEVEL: ("ex", "in", "u", "o", "o2", "e"),
    LevelScheme.THREE_LEVEL: ("ex", "in", "u", "o"),
}


def basis_labels(scheme: LevelScheme) -> tuple[str, ...]:
    """Ordered basis labels of ``scheme``."""
    return _BASIS[LevelScheme.parse(scheme)]


def manifold_labels(scheme: LevelScheme) -> tuple[str, ...]:
    return _MANIFOLD[LevelScheme.parse(scheme)]


def excited_labels(scheme: LevelScheme) -> tuple[str, ...]:
    return _EXCITED[LevelScheme.parse(scheme)]


def index(scheme: LevelScheme, label: str) -> int:
    """Position of ``label`` in the basis of ``scheme``."""
    labels = basis_labels(scheme)
    try:
        return labels.index(label)
    except ValueError:
        raise KeyError(f"{label!r} is not a basis state of {scheme}") from None


def dimension(scheme: LevelScheme) -> int:
    return len(basis_labels(scheme))


def ket(scheme: LevelScheme, label: str) -> np.ndarray:
    v = np.zeros(dimension(scheme), dtype=complex)
    v[index(scheme, label)] = 1.0
    return v


def dyad(scheme: LevelScheme, bra_row: str, ket_col: str) -> np.ndarray:
    """The operator ``|bra_row><ket_col|``."""
    d = dimension(scheme)
    op = np.zeros((d, d), dtype=complex)
    op[index(scheme, bra_row), index(scheme, ket_col)] = 1.0
    return op


def projector(scheme: LevelScheme, label: str) -> np.ndarray:
    return dyad(scheme, label, label)


@dataclass(frozen=True)
class SystemParams:
    """Rates and detunings of either level scheme, in units of ``g``.

    ``gamma_u`` is the decay back to ``|u>`` (from ``|e2>`` in the four-level
    scheme, from ``|e>`` in the three-level one) and ``gamma_o`` the decay of
    ``|e>`` out of the manifold. ``gamma_o2`` and ``gamma_e`` are the extra
    ``|e2>`` decays (to ``|o>`` and to ``|e>``) of the four-level scheme.
    """

    kappa_ex: float
    kappa_in: float
    gamma_u: float
    gamma_o: float
    g: float = 1.0
    gamma_o2: float = 0.0
    gamma_e: float = 0.0
    delta_e: float = 0.0
    delta_e2: float = 0.0
    omega2: float = 0.0

    def __post_init__(self) -> None:
        for name in ("kappa_ex", "kappa_in", "gamma_u", "gamma_o", "g",
                     "gamma_o2", "gamma_e", "delta_e", "delta_e2", "omega2"):
            value = getattr(self, name)
            if not math.isfinite(value):
                raise ParameterError(f"{name} must be finite, got {value!r}")
        for name in ("kappa_ex", "kappa_in", "gamma_u", "gamma_o", "gamma_o2", "gamma_e"):
            if getattr(self, name) < 0:
                raise ParameterError(f"rate {name} must be >= 0, got {getattr(self, name)!r}")
        if self.g <= 0:
            raise ParameterError(f"g must be > 0, got {self.g!r}")

    @property
    def kappa(self) -> float:
        return self.kappa_ex + self.kappa_in

    @property
    def gamma(self) -> float:
        return self.gamma_u + self.gamma_o

    @property
    def Gamma(self) -> float:
        """Total decay rate of ``|e2>``."""
        return self.gamma_u + self.gamma_o2 + self.gamma_e

    def check(self, scheme: LevelScheme) -> None:
        """Raise :class:`ParameterError` unless the parameters fit ``scheme``."""
        scheme = LevelScheme.parse(scheme)
        if scheme is LevelScheme.THREE_LEVEL:
            bad = [n for n in ("omega2", "delta_e2", "gamma_o2", "gamma_e") if getattr(self, n) != 0]
            if bad:
                raise ParameterError(
                    "three-level scheme requires " + ", ".join(f"{n}=0" for n in bad)
                )

    def replace(self, **changes) -> "SystemParams":
        from dataclasses import replace

        return replace(self, **changes)

    @classmethod
    def fig2_baseline(cls, omega2: float = 3.2, scheme: LevelScheme = LevelScheme.FOUR_LEVEL,
                      **overrides) -> "SystemParams":
        """Baseline parameters of the Omega_2 study (all detunings zero).

        ``kappa_ex`` is set to the value maximising the single-excitation
        probability, ``kappa_in * sqrt(1 + g**2 / (kappa_in * gamma))``.
        """
        scheme = LevelScheme.parse(scheme)
        base = dict(g=1.0, kappa_in=0.01, gamma_u=0.1, gamma_o=0.01)
        base.update(overrides)
        if "kappa_ex" not in base:
            base["kappa_ex"] = optimal_kappa_ex(base["g"], base["kappa_in"],
                                                base["gamma_u"] + base["gamma_o"])
        if scheme is LevelScheme.FOUR_LEVEL:
            base.setdefault("omega2", omega2)
        return cls(**base)


def optimal_kappa_ex(g: float, kappa_in: float, gamma: float) -> float:
    """External cavity decay maximising P_si: ``kappa_in*sqrt(1+g^2/(kappa_in*gamma))``."""
    if kappa_in <= 0 or gamma <= 0:
        raise ParameterError("optimal kappa_ex needs kappa_in > 0 and gamma > 0")
    return kappa_in * math.sqrt(1.0 + g * g / (kappa_in * gamma))


# ---------------------------------------------------------------------------
# Pulses
# ---------------------------------------------------------------------------

class PulseShape:
    """Drive envelope ``Omega(t)`` on the ``|u>``-``|e2>`` (or ``|u>``-``|e>``) line.

    Subclasses provide the complex amplitude, the intensity ``|Omega|^2`` and
    its running integral ``H(t) = h(0, t)``.
    """

    t_end: float

    def amplitude(self, t):
        raise NotImplementedError

    def intensity(self, t):
        raise NotImplementedError

    def cumulative(self, t):
        """``h(0, t)`` for scalar or array ``t``."""
        raise NotImplementedError

    def time_for_h(self, h: float) -> float:
        """Smallest ``t`` with ``h(0, t) >= h``; ``inf`` if never reached."""
        raise NotImplementedError

    def __call__(self, t):
        return self.amplitude(t)


@dataclass(frozen=True)
class LinearPulse(PulseShape):
    """``Omega(t) = omega0 * t``, held at its ``t_end`` value afterwards."""

    omega0: float
    t_end: float = math.inf

    def __post_init__(self) -> None:
        if not (self.omega0 > 0 and math.isfinite(self.omega0)):
            raise ParameterError(f"linear pulse slope must be > 0, got {self.omega0!r}")
        if not self.t_end > 0:
            raise ParameterError("t_end must be > 0")

    def amplitude(self, t):
        t = np.clip(np.asarray(t, dtype=float), 0.0, self.t_end)
        return (self.omega0 * t).astype(complex)

    def intensity(self, t):
        t = np.clip(np.asarray(t, dtype=float), 0.0, self.t_end)
        return (self.omega0 * t) ** 2

    def cumulative(self, t):
        t = np.maximum(np.asarray(t, dtype=float), 0.0)
        inside = np.minimum(t, self.t_end)
        h = self.omega0 ** 2 * inside ** 3 / 3.0
        if math.isfinite(self.t_end):
            h = h + (self.omega0 * self.t_end) ** 2 * np.maximum(t - self.t_end, 0.0)
        return h

    def time_for_h(self, h: float) -> float:
        if h <= 0:
            return 0.0
        h_end = self.omega0 ** 2 * self.t_end ** 3 / 3.0
        if h <= h_end:
            return (3.0 * h / self.omega0 ** 2) ** (1.0 / 3.0)
        return self.t_end + (h - h_end) / (self.omega0 * self.t_end) ** 2


class TabulatedPulse(PulseShape):
    """Pulse sampled on an ascending grid.

    The amplitude is linearly interpolated and the intensity is the piecewise
    linear interpolant of ``|Omega_i|^2``, so ``h`` is the trapezoid sum of
    the samples. Outside the grid both are clamped to the end values.
    """

    def __init__(self, times, values, t_end: float | None = None):
        times = np.asarray(times, dtype=float)
        values = np.asarray(values, dtype=complex)
        if times.ndim != 1 or times.shape != values.shape or times.size < 2:
            raise ParameterError("tabulated pulse needs matching 1-D times/values with >= 2 samples")
        if not np.all(np.diff(times) > 0):
            raise ParameterError("tabulated pulse grid must be strictly ascending")
        if not np.all(np.isfinite(values)):
            raise ParameterError("tabulated pulse values must be finite")
        self.times = times
        self.values = values
        self.t_end = float(times[-1] if t_end is None else t_end)
        self._power = np.abs(values) ** 2
        steps = 0.5 * (self._power[1:] + self._power[:-1]) * np.diff(times)
        self._cum = np.concatenate(([0.0], np.cumsum(steps)))

    def __repr__(self) -> str:
        return (f"TabulatedPulse(n={self.times.size}, t=[{self.times[0]:g}, "
                f"{self.times[-1]:g}], t_end={self.t_end:g})")

    def amplitude(self, t):
        t = np.asarray(t, dtype=float)
        re = np.interp(t, self.times, self.values.real)
        im = np.interp(t, self.times, self.values.imag)
        return re + 1j * im

    def intensity(self, t):
        return np.interp(np.asarray(t, dtype=float), self.times, self._power)

    def _primitive(self, t):
        # Exact integral of the piecewise-linear intensity from times[0] to t.
        t = np.asarray(t, dtype=float)
        tt = np.clip(t, self.times[0], self.times[-1])
        k = np.clip(np.searchsorted(self.times, tt, side="right") - 1, 0, self.times.size - 2)
        t0 = self.times[k]
        p0 = self._power[k]
        p_at = np.interp(tt, self.times, self._power)
        inner = self._cum[k] + 0.5 * (p0 + p_at) * (tt - t0)
        before = self._power[0] * np.minimum(t - self.times[0], 0.0)
        after = self._power[-1] * np.maximum(t - self.times[-1], 0.0)
        return inner + before + after

    def cumulative(self, t):
        t = np.maximum(np.asarray(t, dtype=float), 0.0)
        return self._primitive(t) - self._primitive(0.0)

    def time_for_h(self, h: float) -> float:
        if h <= 0:
            return 0.0
        total = float(self.cumulative(self.times[-1]))
        if h > total:
            if self._power[-1] == 0:
                return math.inf
            return float(self.times[-1] + (h - total) / self._power[-1])
        lo, hi = 0.0, float(self.times[-1])
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if self.cumulative(mid) >= h:
                hi = mid
            else:
                lo = mid
            if hi - lo <= 1e-13 * max(1.0, hi):
                break
        return hi


def eval_pulse(pulse: PulseShape, t: float) -> complex:
    """Drive amplitude at ``t``; warns with :class:`PulseClampWarning` outside ``[0, t_end]``."""
    if t < 0 or t > pulse.t_end:
        warnings.warn(f"pulse evaluated at t={t:g} outside [0, {pulse.t_end:g}]; clamped",
                      PulseClampWarning, stacklevel=2)
    return complex(pulse.amplitude(t))


def h_integral(pulse: PulseShape, t1, t2):
    """``h(t1, t2)``, the drive intensity integrated over ``[t1, t2]``."""
    t1 = np.asarray(t1, dtype=float)
    t2 = np.asarray(t2, dtype=float)
    if np.any(t1 > t2):
        raise ValueError("h_integral requires t1 <= t2")
    out = pulse.cumulative(t2) - pulse.cumulative(t1)
    out = np.maximum(out, 0.0)
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# Operators
# ---------------------------------------------------------------------------

def drive_coupling(scheme: LevelScheme) -> np.ndarray:
    """Unit-amplitude raising part ``V_+`` of the drive (``|e2,0><u,0|`` or ``|e,0><u,0|``)."""
    scheme = LevelScheme.parse(scheme)
    target = "e2_0" if scheme is LevelScheme.FOUR_LEVEL else "e0"
    return dyad(scheme, target, "u0")


def static_hamiltonian(params: SystemParams, scheme: LevelScheme) -> np.ndarray:
    """Drive-independent part of the Hamiltonian (detunings, Omega_2 and g couplings)."""
    scheme = LevelScheme.parse(scheme)
    params.check(scheme)
    p = params
    H = p.delta_e * projector(scheme, "e0")
    H = H + p.g * (dyad(scheme, "g1", "e0") + dyad(scheme, "e0", "g1"))
    if scheme is LevelScheme.FOUR_LEVEL:
        H = H + p.delta_e2 * projector(scheme, "e2_0")
        H = H + p.omega2 * (dyad(scheme, "e0", "e2_0") + dyad(scheme, "e2_0", "e0"))
    return H


def build_hamiltonian(params: SystemParams, scheme: LevelScheme, omega_t: complex) -> np.ndarray:
    """Rotating-frame Hamiltonian for drive amplitude ``omega_t``."""
    V = drive_coupling(scheme)
    return static_hamiltonian(params, scheme) + omega_t * V + np.conj(omega_t) * V.T


def build_lindblads(params: SystemParams, scheme: LevelScheme) -> list[tuple[str, np.ndarray]]:
    """Labelled jump operators with nonzero rate, in the order ex, in, u, o, o2, e."""
    scheme = LevelScheme.parse(scheme)
    params.check(scheme)
    p = params
    top = "e2_0" if scheme is LevelScheme.FOUR_LEVEL else "e0"
    spec = [
        ("ex", p.kappa_ex, "g0", "g1"),
        ("in", p.kappa_in, "g0", "g1"),
        ("u", p.gamma_u, "u0", top),
        ("o", p.gamma_o, "o0", "e0"),
    ]
    if scheme is LevelScheme.FOUR_LEVEL:
        spec += [("o2", p.gamma_o2, "o0", "e2_0"), ("e", p.gamma_e, "e0", "e2_0")]
    return [
        (label, math.sqrt(2.0 * rate) * dyad(scheme, dst, src))
        for label, rate, dst, src in spec
        if rate > 0
    ]
