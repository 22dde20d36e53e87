"""Observables from collective-dipole time series.

The field correlation is estimated as the trajectory- and time-averaged
``<J(t + t') J*(t')>`` with ``J = Jx + i Jy``.  Its real part is the usual
``<Jx Jx> + <Jy Jy>`` average; the imaginary part carries the rotation
direction of the dipole, which the real part alone cannot resolve.
"""

import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import optimize

__all__ = [
    "CorrelationSeries",
    "FitResult",
    "FitError",
    "g1_correlation",
    "fit_window",
    "fit_decay_cosine",
    "linewidth",
    "pulling_from_fit",
    "power",
    "g2_zero",
    "analyze",
]

log = logging.getLogger(__name__)

_DIRECT_LIMIT = 512


class FitError(ValueError):
    """Fit did not converge or cannot be used for the requested quantity."""


@dataclass(frozen=True)
class CorrelationSeries:
    lags: np.ndarray
    values: np.ndarray
    n_pairs: np.ndarray
    imag: Optional[np.ndarray] = None

    def __post_init__(self):
        if len(self.lags) == 0 or self.lags[0] != 0:
            raise ValueError("lags must start at 0")
        if not self.values[0] > 0:
            raise ValueError("values[0] must be > 0")

    def truncated(self, n):
        im = None if self.imag is None else self.imag[:n]
        return CorrelationSeries(self.lags[:n], self.values[:n], self.n_pairs[:n], im)


@dataclass(frozen=True)
class FitResult:
    """Parameters of ``c1 exp(-c2 t) cos(c3 t)``.

    ``c3`` is signed by the rotation direction of ``Jx + i Jy`` when the
    correlation carries an imaginary part, and is >= 0 otherwise.
    """

    c1: float
    c2: float
    c3: float
    rms_residual: float
    converged: bool
    n_lags: int = 0

    def to_dict(self):
        return {"c1": self.c1, "c2": self.c2, "c3": self.c3,
                "rms_residual": self.rms_residual, "converged": self.converged}


def _window(rec, t0):
    mask = rec.sample_times >= t0 - 1e-9 * max(1.0, abs(t0))
    return rec.jx_series[mask] + 1j * rec.jy_series[mask]


def _autocorr_sum(z, n_lags):
    """``sum_t z[t + l] conj(z[t])`` for l = 0..n_lags-1."""
    m = len(z)
    if m < _DIRECT_LIMIT:
        return np.array([np.vdot(z[:m - l], z[l:]) for l in range(n_lags)])
    nfft = 1 << (2 * m - 1).bit_length()
    f = np.fft.fft(z, nfft)
    return np.fft.ifft(f * np.conj(f))[:n_lags]


def g1_correlation(records, t0, max_lag=None):
    """Average field correlation over ``t' >= t0`` and all trajectories.

    Parameters
    ----------
    records : sequence of TrajectoryRecord
        Must share one sampling grid.
    t0 : float
        Start of the steady-state window.
    max_lag : float, optional
        Largest lag; defaults to half the window length.

    Returns
    -------
    CorrelationSeries
    """
    records = list(records)
    if not records:
        raise ValueError("no records")
    ref = records[0].sample_times
    for r in records[1:]:
        if len(r.sample_times) != len(ref) or not np.allclose(r.sample_times, ref):
            raise ValueError("records do not share a sampling grid")
    dt = records[0].sample_dt if len(ref) > 1 else 1.0
    windows = [_window(r, t0) for r in records]
    m = len(windows[0])
    if m == 0:
        raise ValueError(f"empty averaging window (t0={t0} beyond T={ref[-1]})")
    if max_lag is None:
        n_lags = max(1, m // 2)
    else:
        n_lags = int(math.floor(max_lag / dt + 1e-9)) + 1
        if n_lags > m:
            raise ValueError(f"t0 + max_lag exceeds the record length ({t0} + {max_lag} > {ref[-1]})")
    sums = np.array([_autocorr_sum(z, n_lags) for z in windows])
    # exactly rounded sum over trajectories: the result does not depend on their order
    total = np.array([complex(math.fsum(col.real), math.fsum(col.imag)) for col in sums.T])
    pairs = len(windows) * (m - np.arange(n_lags))
    mean = total / pairs
    return CorrelationSeries(np.arange(n_lags) * dt, mean.real.copy(), pairs, mean.imag.copy())


def fit_window(series, factor=3.0, tail_fraction=0.25, min_lags=20):
    """Drop lags past the first point where the correlation meets the noise floor.

    The floor is the RMS of the correlation over the last ``tail_fraction``
    of lags.  The modulus (including the imaginary part, when present) is
    compared, so oscillation nodes do not trigger the cut.
    """
    mag = np.abs(series.values if series.imag is None else series.values + 1j * series.imag)
    n = len(mag)
    tail = mag[int(n * (1.0 - tail_fraction)):]
    floor = math.sqrt(np.mean(tail ** 2)) if len(tail) else 0.0
    below = np.flatnonzero(mag < factor * floor)
    cut = int(below[0]) if len(below) else n
    return series.truncated(min(n, max(cut, min_lags)))


def _model(c, t):
    return c[0] * np.exp(-c[1] * t) * np.cos(c[2] * t)


def _envelope_rate(t, v):
    a = np.abs(v)
    peaks = [0] + [i for i in range(1, len(a) - 1) if a[i] >= a[i - 1] and a[i] >= a[i + 1]]
    peaks = [i for i in peaks if a[i] > 0.05 * a[0]]
    if len(peaks) < 2:
        keep = np.flatnonzero(a > 0.05 * a[0])
        keep = keep[keep == np.arange(len(keep))]  # leading run only
        peaks = list(keep)
    if len(peaks) < 2:
        return 1.0 / max(t[-1], 1e-12)
    slope = np.polyfit(t[peaks], np.log(a[peaks]), 1)[0]
    return max(-slope, 0.0)


def _spectral_peak(t, v):
    dt = t[1] - t[0]
    spectrum = np.abs(np.fft.rfft(v, n=8 * len(v)))
    freqs = 2.0 * math.pi * np.fft.rfftfreq(8 * len(v), dt)
    return float(freqs[int(np.argmax(spectrum))])


def fit_decay_cosine(series):
    """Least-squares fit of ``c1 exp(-c2 t) cos(c3 t)`` to ``series.values``.

    Trust-region reflective solver with bounds ``c2 >= 0`` and
    ``0 <= c3 <= pi / dt`` (higher frequencies alias onto the grid); the data are
    normalized by ``values[0]`` internally so the result scales exactly.
    Three starts are tried (spectral-peak ``c3``, ``c3 = 0``, and an undamped
    start on the ``c2 = 0`` bound) and the lowest cost is kept; a parameter
    that ends next to its bound is then pinned there and the rest refitted.
    Non-convergence returns the best parameters with ``converged = False``.
    """
    t = np.asarray(series.lags, dtype=float)
    v = np.asarray(series.values, dtype=float)
    if len(t) < 20:
        raise ValueError(f"need >= 20 lags, got {len(t)}")
    scale = v[0]
    y = v / scale
    c2 = _envelope_rate(t, y)
    nyquist = math.pi / (t[1] - t[0])
    peak = min(_spectral_peak(t, y), 0.99 * nyquist)
    starts = [np.array([1.0, c2, peak]), np.array([1.0, c2, 0.0]), np.array([1.0, 0.0, peak])]

    def resid(c):
        return _model(c, t) - y

    def solve(fun, x0, lower, upper):
        try:
            return optimize.least_squares(fun, x0, bounds=(lower, upper), method="trf",
                                          x_scale="jac", xtol=1e-12, ftol=1e-12, gtol=1e-12,
                                          max_nfev=500)
        except ValueError as exc:
            log.debug("fit start %s failed: %s", x0, exc)
            return None

    best, best_x = None, None
    for x0 in starts:
        sol = solve(resid, x0, [-np.inf, 0.0, 0.0], [np.inf, np.inf, nyquist])
        if sol is not None and (best is None or sol.cost < best.cost):
            best, best_x = sol, sol.x
    if best is None:
        return FitResult(float(v[0]), float(c2), 0.0, float("nan"), False, len(t))
    # trf stalls just inside a bound; refit with the near-bound parameter pinned at zero
    for i in (1, 2):
        if best_x[i] < 1e-6 * max(1.0, abs(best_x[3 - i])):
            free = [j for j in range(3) if j != i]

            def pinned(c, free=free):
                full = np.zeros(3)
                full[free] = c
                return resid(full)

            upper = [np.inf, np.inf if i == 2 else nyquist]
            sol = solve(pinned, best_x[free], [-np.inf, 0.0], upper)
            if sol is not None and sol.status > 0 and sol.cost <= best.cost:
                best_x = np.zeros(3)
                best_x[free] = sol.x
                best = sol
    c1, c2, c3 = best_x
    c3 = abs(c3)
    if series.imag is not None and c3 > 0:
        w = np.exp(-c2 * t) * np.sin(c3 * t)
        if np.dot(w, series.imag) < 0:
            c3 = -c3
    rms = float(np.sqrt(np.mean(best.fun ** 2)))
    converged = bool(best.status > 0 and c1 > 0)
    return FitResult(float(c1 * scale), float(c2), float(c3), rms, converged, len(t))


def linewidth(fit):
    """Full width ``2 c2`` of the emitted line."""
    if not fit.converged:
        raise FitError("fit did not converge; linewidth undefined")
    return 2.0 * fit.c2


def pulling_from_fit(fit, delta):
    """``c3 / delta``; ``delta`` in the same time units as the fit."""
    if delta == 0:
        raise FitError("pulling is undefined at zero detuning")
    if not fit.converged:
        raise FitError("fit did not converge; pulling undefined")
    return fit.c3 / delta


def _intensities(records, t0):
    out = []
    for r in records:
        z = _window(r, t0)
        if len(z) == 0:
            raise ValueError(f"empty averaging window (t0={t0})")
        out.append(z.real ** 2 + z.imag ** 2)
    return out


def power(records, t0, flux_param):
    """Output power in units of ``hbar omega Phi``: ``F <|J|^2> / (4 N^2)``."""
    records = list(records)
    if not records:
        raise ValueError("no records")
    n = records[0].n_atoms
    mean_sq = float(np.mean(np.concatenate(_intensities(records, t0))))
    return flux_param * mean_sq / (4.0 * n * n)


def g2_zero(records, t0):
    """Equal-time intensity correlation with intensity ``|J|^2 / 4``."""
    records = list(records)
    if len(records) < 10:
        raise ValueError(f"g2_zero needs >= 10 records, got {len(records)}")
    inten = np.concatenate(_intensities(records, t0)) / 4.0
    mean = float(np.mean(inten))
    if mean <= 0:
        raise ValueError("zero mean intensity")
    return float(np.mean(inten ** 2)) / mean ** 2


def analyze(records, t0, flux_param, delta=None, max_lag=None):
    """Full estimator report as a JSON-ready dict.

    ``delta`` is the cavity-atom detuning in units of 1/tau; pulling is
    reported only when it is nonzero.
    """
    records = list(records)
    series = g1_correlation(records, t0, max_lag)
    win = fit_window(series)
    fit = fit_decay_cosine(win)
    diagnostics = []
    if not fit.converged:
        diagnostics.append("fit did not converge")
    if not delta and abs(fit.c3) > 2.0 * fit.c2 and fit.converged:
        diagnostics.append("oscillating correlation at zero detuning")
    pulling = None
    if delta and fit.converged:
        pulling = pulling_from_fit(fit, delta)
    g2 = g2_zero(records, t0) if len(records) >= 10 else None
    return {
        "linewidth": linewidth(fit) if fit.converged else None,
        "linewidth_units": "1/tau",
        "power_norm": power(records, t0, flux_param),
        "pulling": pulling,
        "g2_zero": g2,
        "fit": fit.to_dict(),
        "window": {"t0": t0, "T": float(records[0].sample_times[-1]), "n_traj": len(records),
                   "fit_lags": int(fit.n_lags)},
        "diagnostics": diagnostics,
    }
