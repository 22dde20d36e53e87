"""Design calculator for a beam laser built from a given species and cavity.

All inputs and outputs are SI with angular rates in rad/s.  The text
rendering quotes rates as ``2pi x <Hz>`` alongside the angular value.
"""

import dataclasses
import math
from dataclasses import dataclass
from typing import Optional

from scipy import constants

from . import meanfield

__all__ = [
    "DesignInput",
    "DesignReport",
    "design_report",
    "effective_noise",
    "format_report",
    "PULLING_ANCHOR",
]

# pulling at kappa tau = 1000 and the reference operating point; scaled as 1/(kappa tau)
PULLING_ANCHOR = (0.004, 1000.0)


@dataclass(frozen=True)
class DesignInput:
    """Species, beam and cavity inputs.

    ``doppler_width`` (rad/s) is optional; when absent the beam is assumed
    to sit exactly at the transverse velocity threshold, ``delta_D tau = pi``.
    """

    gamma: float
    wavelength: float
    flux: float
    v_longitudinal: float
    waist: float
    cavity_length: float
    finesse: float
    cooperativity: float
    accel_sensitivity: float
    cte: float
    doppler_width: Optional[float] = None
    label: str = ""

    def __post_init__(self):
        for f in dataclasses.fields(self):
            if f.name in ("label", "doppler_width"):
                continue
            v = getattr(self, f.name)
            if not (math.isfinite(v) and v > 0):
                raise ValueError(f"{f.name} must be finite and > 0, got {v!r}")
        if self.doppler_width is not None and not self.doppler_width >= 0:
            raise ValueError("doppler_width must be >= 0")


@dataclass(frozen=True)
class DesignReport:
    inputs: DesignInput
    tau: float
    n_atoms: float
    dv_threshold: float
    gamma_c: float
    p_max_watts: float
    pulling: float
    pulling_source: str
    kappa: float
    kappa_tau: float
    flux_param: float
    doppler_param: float
    k_eff: float
    l_eff: float
    alpha_eff: float
    flux_ok: bool
    doppler_ok: bool

    def to_dict(self):
        d = dataclasses.asdict(self)
        d["inputs"] = dataclasses.asdict(self.inputs)
        return d


def effective_noise(pulling, k, l, alpha):
    """Environmental sensitivities seen by the laser output.

    Returns ``(pulling K, L / pulling, pulling alpha)``.
    """
    if not pulling > 0:
        raise ValueError(f"pulling must be > 0, got {pulling!r}")
    return pulling * k, l / pulling, pulling * alpha


def design_report(d, pulling=None, full_meanfield=False):
    """Derived parameters for one design.

    Parameters
    ----------
    d : DesignInput
    pulling : float, optional
        Override for the pulling coefficient.
    full_meanfield : bool
        Evaluate the pulling from the mean-field integral instead of the
        ``1/(kappa tau)`` scaling law.

    Returns
    -------
    DesignReport
    """
    tau = 2.0 * d.waist / d.v_longitudinal
    n_atoms = d.flux * tau
    dv = d.wavelength / (2.0 * tau)
    gamma_c = d.gamma * d.cooperativity
    omega = 2.0 * math.pi * constants.c / d.wavelength
    p_max = 0.7 * d.flux * constants.hbar * omega
    kappa = 2.0 * math.pi * (constants.c / (2.0 * d.cavity_length)) / d.finesse
    kappa_tau = kappa * tau
    flux_param = d.flux * tau ** 2 * gamma_c
    k = 2.0 * math.pi / d.wavelength
    delta_d = k * dv if d.doppler_width is None else d.doppler_width
    doppler_param = delta_d * tau

    if pulling is not None:
        source = "override"
    elif full_meanfield:
        pulling = meanfield.mf_pulling(flux_param, doppler_param, kappa_tau)
        source = "mean-field"
    else:
        anchor, kt = PULLING_ANCHOR
        pulling = anchor * kt / kappa_tau
        source = "scaling"
    k_eff, l_eff, alpha_eff = effective_noise(pulling, d.accel_sensitivity,
                                              d.cavity_length, d.cte)
    return DesignReport(
        inputs=d, tau=tau, n_atoms=n_atoms, dv_threshold=dv, gamma_c=gamma_c,
        p_max_watts=p_max, pulling=pulling, pulling_source=source, kappa=kappa,
        kappa_tau=kappa_tau, flux_param=flux_param, doppler_param=doppler_param,
        k_eff=k_eff, l_eff=l_eff, alpha_eff=alpha_eff,
        flux_ok=flux_param > 8.0,
        # at the threshold itself delta_D tau equals pi up to rounding
        doppler_ok=doppler_param <= math.pi * (1.0 + 1e-9),
    )


def _hz(rate):
    """Angular rate as '2pi x <value> <unit>'."""
    f = rate / (2.0 * math.pi)
    for unit, scale in (("GHz", 1e9), ("MHz", 1e6), ("kHz", 1e3), ("Hz", 1.0), ("mHz", 1e-3)):
        if abs(f) >= scale or unit == "mHz":
            return f"2pi x {f / scale:.3g} {unit} ({rate:.4g} rad/s)"


def _si(value, unit, prefixes):
    for name, scale in prefixes:
        if abs(value) >= scale:
            return f"{value / scale:.3g} {name}{unit}"
    name, scale = prefixes[-1]
    return f"{value / scale:.3g} {name}{unit}"


_TIME = (("", 1.0), ("m", 1e-3), ("u", 1e-6), ("n", 1e-9))
_POWER = (("", 1.0), ("m", 1e-3), ("u", 1e-6), ("n", 1e-9))


def format_report(r):
    """Two-column aligned text table; first rows follow the reference table order."""
    d = r.inputs
    dv = f"{r.dv_threshold:.3g} m/s" if r.dv_threshold >= 1 else f"{r.dv_threshold * 100:.3g} cm/s"
    rows = [
        ("Transition Rate (gamma)", _hz(d.gamma)),
        ("Effective Beam Rate (Phi)", f"{d.flux:.3g} /s"),
        ("Transit Time (tau = 2w/v_L)", _si(r.tau, "s", _TIME)),
        ("Intracavity Atom Number (N = Phi tau)", f"{r.n_atoms:.3g}"),
        ("Transverse Velocity Threshold (dv = lambda/2tau)", dv),
        ("Minimum Linewidth (Gamma_c = gamma C)", _hz(r.gamma_c)),
        ("Peak Power (P_max = 0.7 Phi hbar omega)", _si(r.p_max_watts, "W", _POWER)),
        (f"Cavity Pulling ({r.pulling_source})", f"{r.pulling:.3g}"),
        ("Cavity Decay (kappa = 2pi FSR/F)", _hz(r.kappa)),
        ("kappa tau", f"{r.kappa_tau:.4g}"),
        ("Phi tau^2 Gamma_c", f"{r.flux_param:.4g}"),
        ("delta_D tau", f"{r.doppler_param / math.pi:.4g} pi"),
        ("Effective Accel. Sensitivity (K_eff)", f"{r.k_eff:.3g} /(m/s^2)"),
        ("Effective Length (L_eff)", f"{r.l_eff:.3g} m"),
        ("Effective CTE (alpha_eff)", f"{r.alpha_eff:.3g} /K"),
        ("Flux constraint Phi tau^2 Gamma_c > 8", "satisfied" if r.flux_ok else "VIOLATED"),
        ("Doppler constraint delta_D tau <= pi", "satisfied" if r.doppler_ok else "VIOLATED"),
    ]
    width = max(len(a) for a, _ in rows)
    lines = [f"{a:<{width}}  {b}" for a, b in rows]
    if d.label:
        lines.insert(0, d.label)
    return "\n".join(lines) + "\n"
