"""Configuration data model and derived rates.

All rates are angular (rad/s) and all internal computation runs in natural
units where the transit time is 1; see :func:`natural_units`.
"""

import dataclasses
import math
import warnings
from dataclasses import dataclass

__all__ = [
    "BadCavityWarning",
    "PhysicalParams",
    "DerivedRates",
    "derive_rates",
    "natural_units",
    "from_natural_units",
    "from_dimensionless",
]


class BadCavityWarning(UserWarning):
    """kappa is not an order of magnitude above the atomic rates."""


@dataclass(frozen=True)
class PhysicalParams:
    """One beam-laser configuration.

    Attributes
    ----------
    g : float
        Vacuum Rabi frequency at a cavity antinode (rad/s).
    kappa : float
        Cavity photon loss rate (rad/s).
    delta : float
        Cavity-atom detuning ``omega_c - omega_a`` (rad/s), any sign.
    gamma : float
        Free-space spontaneous emission rate (rad/s); 0 disables it.
    tau : float
        Transit time through the mode (s).
    phi : float
        Beam flux (atoms/s).
    delta_d : float
        Doppler width ``k * dv_z`` (rad/s).
    waist : float
        Half-width of the top-hat mode along the beam (m).
    wavelength : float
        Cavity-mode wavelength (m).
    omega_a : float
        Atomic transition frequency (rad/s), only used for watts.
    """

    g: float
    kappa: float
    delta: float
    gamma: float
    tau: float
    phi: float
    delta_d: float
    waist: float
    wavelength: float
    omega_a: float

    def __post_init__(self):
        for name in ("g", "kappa", "tau", "phi", "waist", "wavelength", "omega_a"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be finite and > 0, got {v!r}")
        if not math.isfinite(self.delta):
            raise ValueError(f"delta must be finite, got {self.delta!r}")
        if not (math.isfinite(self.gamma) and self.gamma >= 0):
            raise ValueError(f"gamma must be >= 0, got {self.gamma!r}")
        if not (math.isfinite(self.delta_d) and self.delta_d >= 0):
            raise ValueError(f"delta_d must be >= 0, got {self.delta_d!r}")

    @property
    def k(self):
        return 2.0 * math.pi / self.wavelength

    @property
    def n_atoms(self):
        return max(1, round(self.phi * self.tau))

    def bad_cavity_margin(self):
        """Ratio of kappa to the largest atomic rate (1/tau, sqrt(N) g, delta_d)."""
        atomic = max(1.0 / self.tau, math.sqrt(self.phi * self.tau) * self.g, self.delta_d)
        return self.kappa / atomic

    @property
    def bad_cavity(self):
        return self.bad_cavity_margin() > 10.0

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    def to_dict(self):
        return dataclasses.asdict(self)


@dataclass(frozen=True)
class DerivedRates:
    gamma_c: float
    gamma_delta: float
    gamma_0: float
    n_atoms: int
    flux_param: float
    doppler_param: float
    kappa_tau: float


def derive_rates(p, warn=True):
    """Collective emission rates after eliminating the cavity field.

    ``gamma_c = (g^2 kappa/4) / (kappa^2/4 + delta^2)``,
    ``gamma_delta = (g^2 delta/2) / (kappa^2/4 + delta^2)`` and
    ``gamma_0 = g^2/kappa``.  The dimensionless groups ``Phi tau^2 Gamma_c``,
    ``delta_D tau`` and ``kappa tau`` are filled in as well.
    """
    denom = p.kappa ** 2 / 4.0 + p.delta ** 2
    gamma_c = p.g ** 2 * p.kappa / 4.0 / denom
    gamma_delta = p.g ** 2 * p.delta / 2.0 / denom
    gamma_0 = p.g ** 2 / p.kappa
    if warn and not p.bad_cavity:
        warnings.warn(
            f"kappa is only {p.bad_cavity_margin():.3g}x the largest atomic rate; "
            "the adiabatic elimination behind the model may not hold",
            BadCavityWarning, stacklevel=2)
    return DerivedRates(
        gamma_c=gamma_c,
        gamma_delta=gamma_delta,
        gamma_0=gamma_0,
        n_atoms=p.n_atoms,
        flux_param=p.phi * p.tau ** 2 * gamma_c,
        doppler_param=p.delta_d * p.tau,
        kappa_tau=p.kappa * p.tau,
    )


_RATES = ("g", "kappa", "delta", "gamma", "phi", "delta_d", "omega_a")


def natural_units(p):
    """Rescale ``p`` so that ``tau == 1``; lengths are left unchanged."""
    scaled = {name: getattr(p, name) * p.tau for name in _RATES}
    return dataclasses.replace(p, tau=1.0, **scaled)


def from_natural_units(p, tau):
    """Inverse of :func:`natural_units` for a transit time ``tau`` in seconds."""
    if p.tau != 1.0:
        raise ValueError("expected parameters in natural units (tau == 1)")
    scaled = {name: getattr(p, name) / tau for name in _RATES}
    return dataclasses.replace(p, tau=tau, **scaled)


def from_dimensionless(flux_param, doppler_param, n_atoms, kappa_tau=1e6,
                       delta_tau=0.0, gamma_tau=0.0, waist=1.0, wavelength=1.0,
                       omega_a=1.0):
    """Build natural-unit parameters from the dimensionless groups.

    ``g`` is chosen so that ``Phi tau^2 Gamma_c == flux_param`` at the given
    detuning.  Geometry and ``omega_a`` do not enter the dynamics and default
    to 1.
    """
    if n_atoms < 1:
        raise ValueError("n_atoms must be >= 1")
    if flux_param <= 0:
        raise ValueError("flux_param must be > 0")
    gamma_c = flux_param / n_atoms
    g2 = gamma_c * (kappa_tau ** 2 / 4.0 + delta_tau ** 2) / (kappa_tau / 4.0)
    return PhysicalParams(
        g=math.sqrt(g2),
        kappa=float(kappa_tau),
        delta=float(delta_tau),
        gamma=float(gamma_tau),
        tau=1.0,
        phi=float(n_atoms),
        delta_d=float(doppler_param),
        waist=float(waist),
        wavelength=float(wavelength),
        omega_a=float(omega_a),
    )
