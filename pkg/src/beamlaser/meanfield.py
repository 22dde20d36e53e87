"""Analytic mean-field theory of the beam laser.

Everything here is in natural units (transit time = 1) and depends only on
the two dimensionless groups ``flux_param = Phi tau^2 Gamma_c`` and
``doppler_param = delta_D tau`` (plus ``kappa tau`` for pulling).

The non-superradiant state is stable while the dispersion function

    D(nu) = 1 - (F/4) * int_0^1 (1 - u) exp(-nu u - d^2 u^2 / 2) du

has no zero with positive real part.  :func:`dispersion_erf` evaluates the
closed form in terms of error functions, :func:`dispersion_quadrature` the
phase-space integral it came from.
"""

import logging
import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import integrate, optimize, special

__all__ = [
    "MeanFieldSolution",
    "RootNotFoundError",
    "QuadratureError",
    "dispersion_erf",
    "dispersion_quadrature",
    "dominant_root",
    "mf_linewidth",
    "threshold_flux",
    "steady_dipole",
    "mf_power",
    "mf_pulling",
    "solve",
    "phase_diagram",
    "threshold_trace",
    "sinc",
]

log = logging.getLogger(__name__)

_SQRT2 = math.sqrt(2.0)


class RootNotFoundError(RuntimeError):
    pass


class QuadratureError(RuntimeError):
    pass


@dataclass(frozen=True)
class MeanFieldSolution:
    flux_param: float
    doppler_param: float
    nu0: complex
    linewidth_mf: float
    j_st: float
    power_mf: float
    pulling_mf: float = math.nan


def sinc(x):
    """sin(x)/x with the series used below |x| = 1e-4."""
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < 1e-4
    xs = np.where(small, 1.0, x)
    return np.where(small, 1.0 - x * x / 6.0 + x ** 4 / 120.0, np.sin(xs) / xs)


# --- dispersion function -------------------------------------------------

_GL_X, _GL_W = special.roots_legendre(96)
_GL_U = 0.5 * (_GL_X + 1.0)
_GL_W = 0.5 * _GL_W


def _transit_integral_gl(nu, d):
    """int_0^1 (1-u) exp(-nu u - d^2 u^2/2) du by fixed Gauss-Legendre.

    The integrand is entire, so 96 nodes reach rounding level for |nu| < 60.
    """
    nu = np.asarray(nu, dtype=complex)[..., None]
    return np.sum(_GL_W * (1.0 - _GL_U) * np.exp(-nu * _GL_U - 0.5 * d * d * _GL_U ** 2), axis=-1)


def _transit_integral_zero_doppler(nu):
    """(nu - 1 + e^-nu) / nu^2, the d -> 0 limit of the transit integral."""
    nu = np.asarray(nu, dtype=complex)
    small = np.abs(nu) < 0.5
    nus = np.where(small, 1.0, nu)
    with np.errstate(over="ignore", invalid="ignore"):
        closed = (nus - 1.0 + np.exp(-nus)) / nus ** 2
    series = np.zeros_like(nu)
    term = np.full_like(nu, 0.5)  # (-nu)^n / (n+2)!
    for n in range(30):
        series = series + term
        term = term * (-nu) / (n + 3)
    return np.where(small, series, closed)


def dispersion_erf(nu, flux_param, doppler_param):
    """Dispersion function D(nu) from its error-function closed form.

    The Gaussian prefactor ``exp(nu^2 / 2 d^2)`` is folded into scaled
    complementary error functions so nothing overflows at small Doppler
    width.  Where the two closed-form terms cancel catastrophically (small
    ``d`` relative to ``|nu|``) the single time integral is summed by
    Gauss-Legendre instead; ``d == 0`` uses the exact limit.

    Parameters
    ----------
    nu : complex or array_like
        Laplace variable in units of 1/tau.
    flux_param : float
        ``Phi tau^2 Gamma_c``.
    doppler_param : float
        ``delta_D tau``; must be >= 0.

    Returns
    -------
    complex or ndarray
    """
    F = float(flux_param)
    d = float(doppler_param)
    if d < 0:
        raise ValueError("doppler_param must be >= 0")
    nu_arr = np.asarray(nu, dtype=complex)
    if F == 0.0:
        out = np.ones_like(nu_arr)
        return out if out.ndim else complex(out)
    if d == 0.0:
        out = 1.0 - 0.25 * F * _transit_integral_zero_doppler(nu_arr)
        return out if out.ndim else complex(out)

    d2 = d * d
    a = nu_arr / (_SQRT2 * d)
    b = (nu_arr + d2) / (_SQRT2 * d)
    with np.errstate(over="ignore", invalid="ignore"):
        growth = np.exp(a * a - b * b)
        diff = np.where(
            a.real >= 0,
            special.erfcx(a) - special.erfcx(b) * growth,
            special.erfcx(-b) * growth - special.erfcx(-a),
        )
        # e^{a^2} (erf b - erf a) == diff
        t1 = -np.expm1(-(d2 + 2.0 * nu_arr) / 2.0) / d2
        t2 = math.sqrt(math.pi / (2.0 * d2)) * (1.0 + nu_arr / d2) * diff
        transit = t2 - t1
        scale = np.maximum(np.abs(t1), np.abs(t2))
    bad = ~np.isfinite(transit) | (scale > 1e3 * np.maximum(1.0, np.abs(0.25 * F * transit)))
    if np.any(bad):
        transit = np.where(bad, _transit_integral_gl(nu_arr, d), transit)
    out = 1.0 - 0.25 * F * transit
    if not np.all(np.isfinite(out)):
        raise FloatingPointError(f"non-finite dispersion value at nu={nu!r}")
    return out if out.ndim else complex(out)


_GH_X, _GH_W = special.roots_hermitenorm(64)
_GH_W = _GH_W / _GH_W.sum()


def dispersion_quadrature(nu, flux_param, doppler_param, n_theta=8, tol=1e-10):
    """Dispersion function by direct phase-space quadrature.

    Integrates ``exp(-nu t) eta(x + v t) eta(x)`` over entry position ``x``
    and elapsed time ``t`` with adaptive quadrature, over the cavity-axis
    position by a periodic trapezoid rule and over the axial velocity by
    Gauss-Hermite, for the uniform-density beam.  Independent of the
    closed form in :func:`dispersion_erf`.
    """
    F = float(flux_param)
    d = float(doppler_param)
    nu = complex(nu)
    if F == 0.0:
        return 1.0 + 0j
    w_half = 1.0
    v_x = 2.0 * w_half  # tau = 1
    theta = 2.0 * math.pi * np.arange(n_theta) / n_theta
    ku = d * _GH_X

    def eta_product(t):
        # <cos(theta + k v_z t) cos(theta)> over theta and v_z
        phase = theta[:, None] + ku[None, :] * t
        vals = np.cos(phase) * np.cos(theta)[:, None]
        return float(np.mean(vals, axis=0) @ _GH_W)

    def part(fn):
        def inner(t, x):
            return fn(np.exp(-nu * t)) * eta_product(t)

        def outer(x):
            t_exit = (w_half - x) / v_x
            return integrate.quad(inner, 0.0, t_exit, args=(x,),
                                  epsabs=tol * 1e-2, epsrel=tol, limit=200)[0]

        # x-density is uniform over [-w, w]
        return integrate.quad(outer, -w_half, w_half, epsabs=tol * 1e-2,
                              epsrel=tol, limit=200)[0] / (2.0 * w_half)

    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            re = part(np.real)
            im = part(np.imag)
        except integrate.IntegrationWarning as exc:
            raise QuadratureError(f"quadrature failed at nu={nu}: {exc}") from exc
    # Gamma_c N / 2 == F / 2 in natural units
    return 1.0 - 0.5 * F * complex(re, im)


# --- roots ---------------------------------------------------------------

def _newton(z, F, d, iters=80, tol=1e-12):
    z = np.array(z, dtype=complex)
    for _ in range(iters):
        h = 1e-6 * (1.0 + np.abs(z))
        f = dispersion_erf(z, F, d)
        df = (dispersion_erf(z + h, F, d) - dispersion_erf(z - h, F, d)) / (2.0 * h)
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            step = f / df
            step = np.where(np.isfinite(step), step, 0.0)
            mag = np.abs(step)
            step = np.where(mag > 2.0, 2.0 * step / np.where(mag > 0, mag, 1.0), step)
        z = z - step
        # runaways are parked; they cannot satisfy the residual test
        z = np.where(np.abs(z) > 60.0, 60.0 + 0j, z)
        if np.all(np.abs(step) < tol * (1.0 + np.abs(z))):
            break
    return z


def dominant_root(flux_param, doppler_param):
    """Zero of D with the largest real part.

    Newton iteration from a grid of seeds with Re(nu) in [-10, 5] and
    Im(nu) in [0, max(2 d, 1)]; converged roots are clustered at 1e-6 and
    the rightmost is returned.  Roots come in conjugate pairs, and the
    representative with Im >= 0 is reported.
    """
    F = float(flux_param)
    d = float(doppler_param)
    if F <= 0:
        raise ValueError("flux_param must be > 0")
    re = np.linspace(-10.0, 5.0, 16)
    im = np.linspace(0.0, max(2.0 * d, 1.0), 5)
    seeds = (re[:, None] + 1j * im[None, :]).ravel()
    z = _newton(seeds, F, d)
    resid = np.abs(dispersion_erf(z, F, d))
    ok = (resid < 1e-10) & (np.abs(z) < 60.0)
    if not np.any(ok):
        raise RootNotFoundError(
            f"no root converged for flux_param={F}, doppler_param={d} "
            f"from {seeds.size} seeds; best residual {np.nanmin(resid):.3g}")
    roots = z[ok]
    roots = np.where(roots.imag < 0, roots.conj(), roots)
    # cluster, keep the rightmost
    best = roots[np.argmax(roots.real)]
    cluster = roots[np.abs(roots - best) < 1e-6]
    nu0 = complex(np.mean(cluster))
    if abs(nu0.imag) < 1e-9:
        nu0 = complex(nu0.real, 0.0)
    return nu0


def mf_linewidth(flux_param, doppler_param):
    """Mean-field linewidth ``max(-2 Re nu0, 0)`` in units of 1/tau."""
    return max(-2.0 * dominant_root(flux_param, doppler_param).real, 0.0)


def threshold_flux(doppler_param, rtol=1e-6):
    """``flux_param`` at which the dominant root crosses Re(nu) = 0."""
    d = float(doppler_param)

    def growth(F):
        return dominant_root(F, d).real

    lo, hi = 1.0, 8.0
    while growth(lo) >= 0:
        lo /= 2.0
        if lo < 1e-6:
            raise RootNotFoundError("threshold bracket failed below")
    while growth(hi) <= 0:
        lo, hi = hi, hi * 2.0
        if hi > 1e7:
            raise RootNotFoundError(f"threshold bracket failed for doppler_param={d}")
    while (hi - lo) > rtol * hi:
        mid = 0.5 * (lo + hi)
        if growth(mid) > 0:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


# --- superradiant branch -------------------------------------------------

_GH96_X, _GH96_W = special.roots_hermitenorm(96)
_GH96_W = _GH96_W / _GH96_W.sum()


def _dipole_rhs(j, F, d):
    y = 0.5 * F * j
    s = sinc(0.5 * d * _GH96_X)
    return float(np.sum(_GH96_W * (1.0 - special.j0(y * s)))) / y


def steady_dipole(flux_param, doppler_param):
    """Self-consistent steady collective dipole per atom, ``J_st / N``.

    Solves ``j = < (1 - J0(F j sinc(u/2) / 2)) / (F j / 2) >`` over the
    Gaussian axial-velocity distribution.  Returns 0 when only the trivial
    solution exists (at or below threshold).
    """
    F = float(flux_param)
    d = float(doppler_param)

    def f(j):
        return _dipole_rhs(j, F, d) - j

    lo = 1e-6
    if f(lo) <= 0:
        return 0.0
    j = optimize.brentq(f, lo, 1.0, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)
    if abs(f(j)) >= 1e-10:
        raise RootNotFoundError(f"self-consistency residual {abs(f(j)):.3g} at F={F}, d={d}")
    return j


def mf_power(j_st, flux_param):
    """Output power in units of hbar*omega*Phi: ``flux_param * j_st^2 / 4``.

    The raw power ``hbar omega Gamma_c N^2 j_st^2 / 4`` scales as N^2 at
    fixed j_st; dividing by ``hbar omega Phi`` leaves this N-free form.
    """
    if not 0.0 <= j_st <= 1.0:
        raise ValueError("j_st must lie in [0, 1]")
    return 0.25 * flux_param * j_st ** 2


def mf_pulling(flux_param, doppler_param, kappa_tau, n_x=64, n_z=128, n_v=64):
    """Cavity-pulling coefficient of the steady superradiant state.

    ``2 j_st / (kappa tau) / < sin K(x, z, v) T(x, z, v) >`` where the
    average runs over entry-normalised position, cavity-axis phase and
    axial velocity, ``K`` is the Bloch angle accumulated since entry and
    ``T`` the remaining mode-weighted transit time.
    """
    F = float(flux_param)
    d = float(doppler_param)
    j = steady_dipole(F, d)
    if j <= 0:
        raise ValueError(f"not superradiant at flux_param={F}, doppler_param={d}")

    xs, wx = special.roots_legendre(n_x)
    s = 0.5 * (xs + 1.0)   # fraction of the transit already done
    wx = 0.5 * wx
    theta = 2.0 * math.pi * np.arange(n_z) / n_z
    wz = np.full(n_z, 1.0 / n_z)
    xv, wv = special.roots_hermitenorm(n_v)
    u = d * xv             # k v_z
    wv = wv / wv.sum()

    S, TH, U = np.meshgrid(s, theta, u, indexing="ij")
    W = wx[:, None, None] * wz[None, :, None] * wv[None, None, :]
    half = 0.5 * U * S
    # K = (F j / u) sin(u s / 2) cos(theta - u s / 2)
    K = 0.5 * F * j * S * sinc(half) * np.cos(TH - half)
    # T = [sin(theta + u (1 - s)) - sin(theta)] / u, written as a sinc product
    rest = 0.5 * U * (1.0 - S)
    T = (1.0 - S) * sinc(rest) * np.cos(TH + rest)
    denom = float(np.sum(W * np.sin(K) * T))
    if not (math.isfinite(denom) and denom > 0):
        raise QuadratureError(f"pulling denominator {denom!r} at F={F}, d={d}")
    return 2.0 * j / float(kappa_tau) / denom


def solve(flux_param, doppler_param, kappa_tau=None):
    """Bundle every mean-field observable at one parameter point."""
    nu0 = dominant_root(flux_param, doppler_param)
    j = steady_dipole(flux_param, doppler_param)
    pulling = math.nan
    if kappa_tau is not None and j > 0:
        pulling = mf_pulling(flux_param, doppler_param, kappa_tau)
    return MeanFieldSolution(
        flux_param=float(flux_param),
        doppler_param=float(doppler_param),
        nu0=nu0,
        linewidth_mf=max(-2.0 * nu0.real, 0.0),
        j_st=j,
        power_mf=mf_power(j, flux_param),
        pulling_mf=pulling,
    )


def phase_diagram(flux_values, doppler_values, kappa_tau=None):
    """Evaluate :func:`solve` on a grid; failed points come back as NaN rows."""
    rows = []
    for d in doppler_values:
        for F in flux_values:
            row = {"flux_param": float(F), "doppler_param": float(d)}
            try:
                if F <= 0:
                    # no flux: D == 1 has no zeros, nothing is emitted
                    row.update(re_nu0=math.nan, im_nu0=math.nan, linewidth_mf=math.nan,
                               j_st=0.0, power_norm=0.0, pulling=math.nan)
                else:
                    sol = solve(F, d, kappa_tau)
                    row.update(re_nu0=sol.nu0.real, im_nu0=sol.nu0.imag,
                               linewidth_mf=sol.linewidth_mf, j_st=sol.j_st,
                               power_norm=sol.power_mf, pulling=sol.pulling_mf)
            except (RootNotFoundError, QuadratureError, FloatingPointError, ValueError) as exc:
                log.warning("grid point F=%g d=%g failed: %s", F, d, exc)
                row.update(re_nu0=math.nan, im_nu0=math.nan, linewidth_mf=math.nan,
                           j_st=math.nan, power_norm=math.nan, pulling=math.nan)
            rows.append(row)
    return rows


def threshold_trace(doppler_values):
    rows = []
    for d in doppler_values:
        try:
            F = threshold_flux(d)
        except RootNotFoundError as exc:
            log.warning("threshold at d=%g failed: %s", d, exc)
            F = math.nan
        rows.append({"doppler_param": float(d), "threshold_flux": F})
    return rows
