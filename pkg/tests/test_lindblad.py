import math

import numpy as np
import pytest
from scipy.integrate import simpson

from photon_src.closedform import p_si_total_rre
from photon_src.lindblad import (
    FixedTime,
    IntegrationError,
    IntegratorConfig,
    PopulationThreshold,
    emission_time_numeric,
    evolve,
    integrate_master_equation,
    photon_flux,
)
from photon_src.qmodel import (
    LinearPulse,
    SystemParams,
    TabulatedPulse,
    build_lindblads,
    ket,
    manifold_labels,
    static_hamiltonian,
)

from conftest import FOUR, THREE, random_params


def _pure(scheme, label):
    v = ket(scheme, label)
    return np.outer(v, v.conj())


@pytest.fixture(scope="module")
def baseline_run():
    p = SystemParams.fig2_baseline(3.2)
    return evolve(p, FOUR, LinearPulse(0.07))


class TestConfig:
    @pytest.mark.parametrize("kw", [dict(rtol=0), dict(atol=-1), dict(dt_init=0), dict(dt_max=0),
                                    dict(n_snapshots=1)])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            IntegratorConfig(**kw)

    def test_policies(self):
        with pytest.raises(ValueError):
            FixedTime(0)
        with pytest.raises(ValueError):
            PopulationThreshold(0)


class TestDecayOracle:
    # g > 0 is enforced by SystemParams, so the H = 0 oracle goes through the generic integrator.

    @pytest.mark.parametrize("kappa", [0.05, 0.5, 1.7])
    def test_cavity_decay(self, kappa):
        p = SystemParams(kappa_ex=kappa, kappa_in=0.0, gamma_u=0.0, gamma_o=0.0)
        res = integrate_master_equation(np.zeros((6, 6)), build_lindblads(p, FOUR), _pure(FOUR, "g1"),
                                        1.0, config=IntegratorConfig(t_end_policy=FixedTime(1.0)))
        np.testing.assert_allclose(res.population("3"), np.exp(-2 * kappa * res.times), atol=1e-6)
        assert res.final_emission("ex") == pytest.approx(1 - math.exp(-2 * kappa), abs=1e-6)

    def test_unit_rate_value(self):
        p = SystemParams(kappa_ex=0.5, kappa_in=0.0, gamma_u=0.0, gamma_o=0.0)
        res = integrate_master_equation(np.zeros((6, 6)), build_lindblads(p, FOUR), _pure(FOUR, "g1"),
                                        1.0, labels=("u0", "e2_0", "e0", "g1", "g0", "o0"))
        assert res.population("g1")[-1] == pytest.approx(0.367879, abs=1e-6)

    def test_atomic_decay_to_u(self):
        p = SystemParams(kappa_ex=0.0, kappa_in=0.0, gamma_u=0.25, gamma_o=0.0, omega2=0.0)
        res = evolve(p, FOUR, LinearPulse(1e-12), IntegratorConfig(t_end_policy=FixedTime(2.0)),
                     rho0=_pure(FOUR, "e2_0"))
        assert res.population("e2_0")[-1] == pytest.approx(math.exp(-1.0), abs=1e-6)
        assert res.final_emission("u") == pytest.approx(1 - math.exp(-1.0), abs=1e-6)


class TestPhysicalInvariants:
    def test_trace(self, baseline_run):
        assert np.max(np.abs(baseline_run.trace() - 1)) < 1e-7

    def test_positivity(self, baseline_run):
        assert baseline_run.min_eigenvalues().min() >= -1e-7

    def test_hermiticity(self, baseline_run):
        assert baseline_run.hermiticity_error() < 1e-10

    @pytest.mark.parametrize("scheme,extended", [(FOUR, False), (FOUR, True), (THREE, False)])
    def test_random_params(self, rng, scheme, extended):
        for _ in range(4):
            p = random_params(rng, scheme, extended=extended)
            res = evolve(p, scheme, LinearPulse(rng.uniform(0.02, 0.2)),
                         IntegratorConfig(t_end_policy=FixedTime(30.0), n_snapshots=301))
            assert np.max(np.abs(res.trace() - 1)) < 1e-7
            assert res.min_eigenvalues().min() >= -1e-7

    def test_channel_accounting(self, baseline_run):
        r = baseline_run
        emitted = sum(r.final_emission(c) for c in ("ex", "in", "o"))
        left = sum(r.population(lab)[-1] for lab in manifold_labels(FOUR))
        assert emitted + left == pytest.approx(1.0, abs=1e-6)

    def test_channel_accounting_extended(self):
        p = SystemParams.fig2_baseline(3.2, gamma_o2=0.02, gamma_e=0.01)
        r = evolve(p, FOUR, LinearPulse(0.05))
        emitted = sum(r.final_emission(c) for c in ("ex", "in", "o", "o2"))
        left = sum(r.population(lab)[-1] for lab in manifold_labels(FOUR))
        assert emitted + left == pytest.approx(1.0, abs=1e-6)
        # |o,0> is fed only by the o and o2 channels
        assert r.population("o0")[-1] == pytest.approx(r.final_emission("o") + r.final_emission("o2"), abs=1e-8)

    def test_cavity_channel_swap(self):
        p = SystemParams.fig2_baseline(3.2, kappa_ex=0.2, kappa_in=0.05)
        q = p.replace(kappa_ex=0.05, kappa_in=0.2)
        a = evolve(p, FOUR, LinearPulse(0.05))
        b = evolve(q, FOUR, LinearPulse(0.05))
        assert a.final_emission("ex") + a.final_emission("in") == pytest.approx(
            b.final_emission("ex") + b.final_emission("in"), abs=1e-8)
        assert a.final_emission("ex") == pytest.approx(b.final_emission("in"), abs=1e-8)

    def test_tolerance_halving(self):
        p = SystemParams.fig2_baseline(3.2)
        runs = [evolve(p, FOUR, LinearPulse(0.07), IntegratorConfig(rtol=r, atol=a))
                for r, a in ((1e-8, 1e-10), (5e-9, 5e-11))]
        assert abs(runs[0].final_emission("ex") - runs[1].final_emission("ex")) < 10 * 1e-10


class TestSuppression:
    def test_no_jump_weight(self):
        p = SystemParams.fig2_baseline(3.2)
        res = evolve(p, FOUR, LinearPulse(0.04), suppressed_recycling={"u"})
        # the missing trace is exactly the probability of a u-jump
        np.testing.assert_allclose(1 - res.trace(), res.emission("u"), atol=1e-8)
        # non-increasing up to the dense-output interpolation error (below atol)
        assert np.all(np.diff(res.trace()) <= 1e-10)

    def test_single_excitation_probability(self):
        p = SystemParams.fig2_baseline(3.2)
        p_si, p_total, _ = p_si_total_rre(p, FOUR)
        pulse = LinearPulse(0.01)
        full = evolve(p, FOUR, pulse)
        single = evolve(p, FOUR, pulse, suppressed_recycling={"u"})
        assert full.final_emission("ex") == pytest.approx(p_total, abs=5e-3)
        assert single.final_emission("ex") == pytest.approx(p_si, abs=5e-3)
        assert full.stopped_by_threshold

    def test_unknown_label(self, baseline):
        with pytest.raises(ValueError, match="unknown channel"):
            evolve(baseline, FOUR, LinearPulse(0.07), suppressed_recycling={"bogus"})


class TestFlux:
    def test_integral_matches_emission(self, baseline_run):
        t, flux = photon_flux(baseline_run)
        assert np.all(flux >= 0)
        assert simpson(flux, x=t) == pytest.approx(baseline_run.final_emission("ex"), abs=1e-6)

    def test_zero_drive(self, baseline):
        res = evolve(baseline, FOUR, TabulatedPulse([0.0, 10.0], [0.0, 0.0]),
                     IntegratorConfig(t_end_policy=FixedTime(10.0)))
        assert np.all(photon_flux(res)[1] == 0)

    def test_no_external_coupling(self, baseline):
        res = evolve(baseline.replace(kappa_ex=0.0), FOUR, LinearPulse(0.07),
                     IntegratorConfig(t_end_policy=FixedTime(20.0)))
        assert np.all(photon_flux(res)[1] == 0)
        assert res.final_emission("ex") == 0.0

    def test_emission_time_numeric(self, baseline_run):
        t = emission_time_numeric(baseline_run)
        assert baseline_run.emission_at("ex", t) == pytest.approx(0.99 * baseline_run.final_emission("ex"),
                                                                  rel=1e-9)


class TestFailures:
    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_non_finite_drive(self, baseline):
        H = static_hamiltonian(baseline, FOUR)
        V = np.zeros_like(H)
        V[1, 0] = 1.0
        with pytest.raises(IntegrationError):
            integrate_master_equation(H, build_lindblads(baseline, FOUR), _pure(FOUR, "u0"), 5.0,
                                      drive=(V, lambda t: np.nan if t > 1 else 0.0))

    def test_cap_required_without_emission(self):
        p = SystemParams(kappa_ex=0.0, kappa_in=0.0, gamma_u=0.0, gamma_o=0.0, omega2=1.0)
        with pytest.raises(ValueError):
            evolve(p, FOUR, LinearPulse(0.1))
