import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, optimize, special

from beamlaser import meanfield as mf

PI = math.pi


def j0_series(x, terms=80):
    """Exact-rational power series of J0, rounded once at the end."""
    q = Fraction(x) ** 2 / 4
    term, total = Fraction(1), Fraction(1)
    for k in range(1, terms):
        term *= -q / (k * k)
        total += term
    return float(total)


def transit_integral(d):
    """int_0^1 (1 - u) exp(-d^2 u^2 / 2) du by adaptive quadrature."""
    return integrate.quad(lambda u: (1 - u) * math.exp(-0.5 * d * d * u * u), 0, 1,
                          epsabs=1e-14, epsrel=1e-14)[0]


def threshold_oracle(d):
    # the dominant root is real at threshold, so D(0) = 0 there
    return 4.0 / transit_integral(d)


@pytest.mark.parametrize("x", np.linspace(-12, 12, 49))
def test_bessel_j0_matches_power_series(x):
    assert special.j0(x) == pytest.approx(j0_series(x), abs=1e-12)


def test_sinc_small_argument_series():
    for x in (0.0, 1e-9, 5e-5, 2e-4):
        exact = 1.0 if x == 0 else math.sin(x) / x
        assert mf.sinc(x) == pytest.approx(exact, rel=1e-15)


class TestDispersion:
    def test_zero_flux_is_one(self):
        for nu in (0.0, 1.5, -2.0 + 1j, 0.3 + 0.4j):
            assert mf.dispersion_erf(nu, 0.0, 0.2 * PI) == 1.0
            assert mf.dispersion_quadrature(nu, 0.0, 0.2 * PI) == 1.0

    def test_origin_small_doppler(self):
        for F in (2.0, 8.0, 20.0):
            assert mf.dispersion_erf(0.0, F, 1e-4).real == pytest.approx(1 - F / 8, abs=1e-8)

    def test_zero_doppler_branch_is_continuous(self):
        for nu in (0.0, 0.3, 2.0 + 1j, -3.0):
            a = mf.dispersion_erf(nu, 10.0, 0.0)
            b = mf.dispersion_erf(nu, 10.0, 1e-5)
            assert abs(a - b) < 1e-8

    def test_fig_reference_point_matches_oracle(self):
        a = mf.dispersion_erf(0.0, 20.0, 0.2 * PI)
        b = mf.dispersion_quadrature(0.0, 20.0, 0.2 * PI)
        assert abs(a - b) < 1e-8

    @pytest.mark.parametrize("F", [0.01, 1.0, 20.0, 50.0])
    def test_large_real_nu_bound(self, F):
        # |D - 1| <= (F/4) int_0^1 exp(-nu u) du <= F / (4 nu)
        nu = 50.0
        d = mf.dispersion_erf(nu, F, 0.2 * PI)
        assert abs(d - 1) <= F / (4 * nu)
        assert abs(d - 1) >= F / (4 * nu) * (1 - 2 / nu) * math.exp(-0.5 * (0.2 * PI / nu) ** 2) * 0.9

    @settings(max_examples=60, deadline=None)
    @given(F=st.floats(0.01, 60), d=st.floats(1e-3, 3 * PI),
           re=st.floats(-10, 10), im=st.floats(-10, 10))
    def test_erf_form_matches_direct_integral(self, F, d, re, im):
        nu = complex(re, im)
        direct = integrate.quad(lambda u: (1 - u) * math.exp(-re * u - 0.5 * d * d * u * u)
                                * math.cos(im * u), 0, 1, epsabs=1e-14, epsrel=1e-13, limit=200)[0]
        direct -= 1j * integrate.quad(lambda u: (1 - u) * math.exp(-re * u - 0.5 * d * d * u * u)
                                      * math.sin(im * u), 0, 1, epsabs=1e-14, epsrel=1e-13, limit=200)[0]
        expected = 1 - F / 4 * direct
        assert abs(mf.dispersion_erf(nu, F, d) - expected) < 1e-10 * max(1.0, F * math.exp(max(-re, 0)))

    def test_conjugate_symmetry(self):
        z = 0.7 - 2.3j
        assert mf.dispersion_erf(z.conjugate(), 12, 0.5) == pytest.approx(
            mf.dispersion_erf(z, 12, 0.5).conjugate(), abs=1e-14)


class TestRoots:
    @pytest.mark.parametrize("F,d", [(0.1, 0.2 * PI), (2, 0.2 * PI), (4, 0.01 * PI),
                                     (20, 0.2 * PI), (20, 2 * PI), (40, 2 * PI), (8, 1.0)])
    def test_residual_and_dominance(self, F, d):
        nu0 = mf.dominant_root(F, d)
        assert abs(mf.dispersion_erf(nu0, F, d)) < 1e-9
        assert nu0.imag >= 0
        # no root to the right: D has no zero on a dense contour scan right of nu0
        re = np.linspace(nu0.real + 1e-3, nu0.real + 15, 300)
        im = np.linspace(-3 * max(d, 1), 3 * max(d, 1), 121)
        grid = re[:, None] + 1j * im[None, :]
        vals = mf.dispersion_erf(grid, F, d)
        assert np.min(np.abs(vals)) > 1e-6

    def test_threshold_root_on_axis(self):
        nu0 = mf.dominant_root(8.0, 1e-6)
        assert abs(nu0.real) < 1e-6

    def test_stable_and_unstable_regions(self):
        assert mf.dominant_root(4.0, 0.01 * PI).real < 0
        assert mf.dominant_root(20.0, 0.2 * PI).real > 0

    def test_real_root_oracle(self):
        # independent route: brentq on the real axis of the direct integral
        F, d = 2.0, 0.2 * PI

        def D(nu):
            return 1 - F / 4 * integrate.quad(
                lambda u: (1 - u) * math.exp(-nu * u - 0.5 * d * d * u * u), 0, 1)[0]

        root = optimize.brentq(D, -20, 0)
        assert mf.dominant_root(F, d).real == pytest.approx(root, abs=1e-8)

    def test_rejects_nonpositive_flux(self):
        with pytest.raises(ValueError):
            mf.dominant_root(0.0, 1.0)


class TestLinewidthThreshold:
    def test_linewidth_values(self):
        assert mf.mf_linewidth(20, 0.2 * PI) == 0.0
        lw = mf.mf_linewidth(0.1, 0.2 * PI)
        assert 1 < lw < 30
        assert mf.mf_linewidth(mf.threshold_flux(0.2 * PI) * (1 - 1e-5), 0.2 * PI) < 1e-3

    @pytest.mark.parametrize("d", [1e-6, 0.01 * PI, 0.2 * PI, PI, 2 * PI, 2.5 * PI])
    def test_threshold_matches_closed_form(self, d):
        assert mf.threshold_flux(d) == pytest.approx(threshold_oracle(d), rel=1e-4)

    def test_threshold_monotone_in_doppler(self):
        vals = [mf.threshold_flux(d) for d in np.linspace(0.05, 2.5 * PI, 8)]
        assert all(b > a for a, b in zip(vals, vals[1:]))
        assert mf.threshold_flux(2 * PI) > mf.threshold_flux(0.2 * PI)


def dipole_oracle(F, d):
    """Self-consistent dipole by bisection with adaptive velocity quadrature."""

    def rhs(j):
        y = 0.5 * F * j

        def integrand(x):
            return (math.exp(-0.5 * x * x) / math.sqrt(2 * PI)
                    * (1 - special.j0(y * np.sinc(0.5 * d * x / PI))))

        return integrate.quad(integrand, -12, 12, epsabs=1e-14, limit=200)[0] / y

    lo, hi = 1e-6, 1.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if rhs(mid) - mid > 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


class TestSteadyState:
    @pytest.mark.parametrize("F,d", [(20, 1e-8), (20, 0.2 * PI), (12, 0.5), (40, PI)])
    def test_dipole_against_oracle(self, F, d):
        assert mf.steady_dipole(F, d) == pytest.approx(dipole_oracle(F, d), abs=1e-9)

    def test_zero_doppler_reference(self):
        # j = (1 - J0(10 j)) / (10 j) at F = 20
        j = optimize.brentq(lambda j: (1 - special.j0(10 * j)) / (10 * j) - j, 1e-3, 1)
        assert j == pytest.approx(0.3743, abs=5e-4)
        assert mf.steady_dipole(20, 1e-9) == pytest.approx(j, abs=1e-9)

    def test_below_threshold_returns_zero(self):
        assert mf.steady_dipole(5.0, 0.2 * PI) == 0.0
        assert mf.steady_dipole(0.5, 0.0) == 0.0

    def test_continuous_at_threshold(self):
        th = mf.threshold_flux(0.2 * PI)
        js = [mf.steady_dipole(th * (1 + eps), 0.2 * PI) for eps in (1e-1, 1e-2, 1e-3)]
        assert js[0] > js[1] > js[2] > 0
        assert js[2] < 0.05

    def test_power(self):
        assert mf.mf_power(0.0, 20) == 0.0
        assert mf.mf_power(0.373, 20) == pytest.approx(0.696, abs=1e-3)
        with pytest.raises(ValueError):
            mf.mf_power(1.5, 20)

    def test_partition_of_parameter_space(self):
        fluxes = np.linspace(1, 50, 20)
        dopplers = np.linspace(0.05, 2.5 * PI, 20)
        for d in dopplers:
            th = mf.threshold_flux(d, rtol=1e-8)
            for F in fluxes:
                if abs(F - th) < 0.01 * th:
                    continue
                lw = mf.mf_linewidth(F, d)
                j = mf.steady_dipole(F, d)
                assert (lw > 0) != (j > 0), (F, d)


class TestPulling:
    def test_reference_value(self):
        assert mf.mf_pulling(20, 0.2 * PI, 1000) == pytest.approx(0.004, abs=1e-3)

    def test_inverse_kappa_tau_scaling(self):
        a = mf.mf_pulling(20, 0.2 * PI, 100)
        b = mf.mf_pulling(20, 0.2 * PI, 1000)
        c = mf.mf_pulling(20, 0.2 * PI, 10000)
        assert b / a == pytest.approx(0.1, rel=1e-3)
        assert c / b == pytest.approx(0.1, rel=1e-3)

    def test_quadrature_converged(self):
        base = mf.mf_pulling(20, 0.2 * PI, 1000)
        fine = mf.mf_pulling(20, 0.2 * PI, 1000, n_x=128, n_z=256, n_v=128)
        assert fine == pytest.approx(base, rel=1e-3)

    def test_zero_doppler_limit_is_continuous(self):
        assert mf.mf_pulling(20, 1e-7, 1000) == pytest.approx(mf.mf_pulling(20, 1e-3, 1000), rel=1e-4)

    def test_positive_across_superradiant_axis(self):
        for F in (10, 15, 20, 30, 40, 50):
            p = mf.mf_pulling(F, 0.2 * PI, 1000)
            assert 0 < p < 1 and math.isfinite(p)

    def test_self_consistency_with_pulling_angle(self):
        # the mean of sin K over the mode reproduces j_st, tying K to the dipole equation
        F, d = 20.0, 0.2 * PI
        j = mf.steady_dipole(F, d)
        xs, wx = special.roots_legendre(96)
        s = 0.5 * (xs + 1)
        th = np.linspace(0, 2 * PI, 256, endpoint=False)
        xv, wv = special.roots_hermitenorm(96)
        wv = wv / wv.sum()
        S, TH, U = np.meshgrid(s, th, d * xv, indexing="ij")
        K = 0.5 * F * j * S * mf.sinc(0.5 * U * S) * np.cos(TH - 0.5 * U * S)
        w = 0.5 * wx[:, None, None] / len(th) * wv[None, None, :]
        # J_st / N = < cos(theta) sin K >, theta the current cavity-axis phase
        assert np.sum(w * np.cos(TH) * np.sin(K)) == pytest.approx(j, rel=1e-6)

    def test_subthreshold_rejected(self):
        with pytest.raises(ValueError):
            mf.mf_pulling(4, 0.2 * PI, 1000)


class TestSweeps:
    def test_phase_diagram_single_point(self):
        rows = mf.phase_diagram([20.0], [0.2 * PI], kappa_tau=1000)
        assert len(rows) == 1
        r = rows[0]
        assert r["linewidth_mf"] == 0 and r["j_st"] > 0 and r["pulling"] > 0
        assert r["power_norm"] == pytest.approx(mf.mf_power(r["j_st"], 20))

    def test_phase_diagram_zero_flux_row(self):
        r = mf.phase_diagram([0.0], [1.0])[0]
        assert r["j_st"] == 0 and math.isnan(r["re_nu0"])

    def test_threshold_trace_endpoint(self):
        rows = mf.threshold_trace([1e-6, PI])
        assert rows[0]["threshold_flux"] == pytest.approx(8.0, abs=1e-4)
        assert rows[1]["threshold_flux"] > 8
