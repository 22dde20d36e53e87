import math
import warnings

import pytest
from hypothesis import given, strategies as st

from beamlaser.params import (BadCavityWarning, PhysicalParams, derive_rates, from_dimensionless,
                              from_natural_units, natural_units)


def make(**kw):
    base = dict(g=1.0, kappa=100.0, delta=0.0, gamma=0.0, tau=1.0, phi=500.0,
                delta_d=0.1, waist=1e-3, wavelength=1e-6, omega_a=1e15)
    base.update(kw)
    return PhysicalParams(**base)


# Sr reference row values in SI
SR = make(g=2 * math.pi * 3e4, kappa=2 * math.pi * 120e6, delta=2 * math.pi * 1e5,
          gamma=2 * math.pi * 7.5e3, tau=1.3198e-6, phi=1.2e13, delta_d=2.38e6,
          waist=0.31e-3, wavelength=689.45e-9, omega_a=2.73e15)


class TestDeriveRates:
    def test_resonant(self):
        r = derive_rates(make(), warn=False)
        assert (r.gamma_c, r.gamma_delta, r.gamma_0) == pytest.approx((0.01, 0.0, 0.01), rel=1e-15)
        assert r.gamma_delta == 0

    def test_detuned(self):
        r = derive_rates(make(delta=50.0), warn=False)
        assert r.gamma_c == pytest.approx(0.005, rel=1e-14)
        assert r.gamma_delta == pytest.approx(0.005, rel=1e-14)

    def test_groups(self):
        p = make(g=math.sqrt(0.04 * 100), phi=500.0)
        r = derive_rates(p, warn=False)
        assert r.gamma_c == pytest.approx(0.04)
        assert r.flux_param == pytest.approx(20.0)
        assert r.n_atoms == 500
        assert r.doppler_param == pytest.approx(0.1)
        assert r.kappa_tau == 100.0

    def test_n_atoms_rounds(self):
        assert derive_rates(make(phi=199.6), warn=False).n_atoms == 200
        assert derive_rates(make(phi=0.2), warn=False).n_atoms == 1

    @given(g=st.floats(1e-3, 1e3), kappa=st.floats(1e-2, 1e6), delta=st.floats(-1e6, 1e6))
    def test_rate_identities(self, g, kappa, delta):
        r = derive_rates(make(g=g, kappa=kappa, delta=delta), warn=False)
        assert r.gamma_c <= r.gamma_0 * (1 + 1e-15)
        assert r.gamma_delta == pytest.approx(r.gamma_c * 2 * delta / kappa, rel=1e-12, abs=1e-300)
        assert (r.gamma_c ** 2 + r.gamma_delta ** 2) / r.gamma_0 == pytest.approx(r.gamma_c, rel=1e-12)

    @given(d1=st.floats(0, 1e3), d2=st.floats(0, 1e3))
    def test_gamma_c_decreases_with_detuning(self, d1, d2):
        if d1 == d2:
            return
        a = derive_rates(make(delta=d1), warn=False).gamma_c
        b = derive_rates(make(delta=-d2), warn=False).gamma_c
        assert (a > b) == (d1 < d2)

    @pytest.mark.parametrize("field", ["g", "kappa", "tau", "phi", "waist", "wavelength", "omega_a"])
    def test_rejects_non_positive(self, field):
        with pytest.raises(ValueError):
            make(**{field: 0.0})
        with pytest.raises(ValueError):
            make(**{field: -1.0})

    def test_rejects_negative_gamma_and_nan(self):
        with pytest.raises(ValueError):
            make(gamma=-1.0)
        with pytest.raises(ValueError):
            make(delta=float("nan"))
        make(delta=-5.0, gamma=0.0)

    def test_bad_cavity_warning(self):
        with pytest.warns(BadCavityWarning):
            derive_rates(make(kappa=5.0))
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            derive_rates(make(kappa=1e6))
        assert make(kappa=1e6).bad_cavity and not make(kappa=5.0).bad_cavity


class TestUnits:
    def test_table_example(self):
        gc = 2 * math.pi * 8e-3
        p = make(g=math.sqrt(gc * 2 * math.pi * 197e6), kappa=2 * math.pi * 197e6, tau=0.81e-6)
        nat = natural_units(p)
        assert nat.tau == 1.0
        assert derive_rates(nat, warn=False).gamma_c == pytest.approx(4.07e-8, rel=1e-3)

    def test_identity_at_unit_tau(self):
        p = make()
        assert natural_units(p) == p

    def test_round_trip(self):
        back = from_natural_units(natural_units(SR), SR.tau)
        for k, v in SR.to_dict().items():
            assert getattr(back, k) == pytest.approx(v, rel=1e-12)

    def test_inverse_requires_natural(self):
        with pytest.raises(ValueError):
            from_natural_units(SR, 1e-6)

    @given(tau=st.floats(1e-9, 1e3), delta=st.floats(-1e3, 1e3))
    def test_groups_invariant(self, tau, delta):
        p = make(tau=tau, delta=delta)
        a = derive_rates(p, warn=False)
        b = derive_rates(natural_units(p), warn=False)
        assert b.flux_param == pytest.approx(a.flux_param, rel=1e-12)
        assert b.doppler_param == pytest.approx(a.doppler_param, rel=1e-12)
        assert b.kappa_tau == pytest.approx(a.kappa_tau, rel=1e-12)


class TestFromDimensionless:
    @given(f=st.floats(0.1, 100), d=st.floats(0, 10), n=st.integers(1, 2000),
           kt=st.floats(10, 1e6), dt=st.floats(-1e3, 1e3))
    def test_reproduces_groups(self, f, d, n, kt, dt):
        r = derive_rates(from_dimensionless(f, d, n, kappa_tau=kt, delta_tau=dt), warn=False)
        assert r.flux_param == pytest.approx(f, rel=1e-12)
        assert r.doppler_param == d and r.n_atoms == n and r.kappa_tau == kt

    def test_rejects(self):
        with pytest.raises(ValueError):
            from_dimensionless(20, 0.1, 0)
        with pytest.raises(ValueError):
            from_dimensionless(0, 0.1, 10)
