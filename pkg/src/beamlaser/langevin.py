"""Stochastic c-number simulation of atoms transiting the cavity.

Atoms enter one per ``tau / N`` at ``x = -w`` with ``s = (+-1, +-1, 1)``,
fly ballistically, and leave after exactly one transit time.  Their
classical Bloch vectors follow Ito/Euler-Maruyama integration of the
c-number Langevin equations with a single pair of cavity noise processes
shared by every atom and, optionally, independent spontaneous-emission
noise per atom.

Simulation runs in natural units (tau = 1); :func:`run_trajectory`
converts its input with :func:`beamlaser.params.natural_units`.  Recorded
times are therefore in units of tau.
"""

import concurrent.futures
import dataclasses
import hashlib
import json
import math
import os
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np

from .params import derive_rates, natural_units

__all__ = [
    "AtomState",
    "EnsembleState",
    "SimOptions",
    "TrajectoryRecord",
    "EnsembleError",
    "mode_function",
    "inject_atom",
    "drift",
    "cavity_noise_increment",
    "spont_noise_increment",
    "new_ensemble",
    "step",
    "run_trajectory",
    "run_ensemble",
    "trajectory_seed",
    "config_hash",
]

# injections drawn per RNG call in batch mode; part of the stream layout, so
# changing it changes every seeded result
_CHUNK = 256


@dataclass(frozen=True)
class AtomState:
    x: float
    z: float
    vx: float
    vz: float
    sx: float
    sy: float
    sz: float
    entry_time: float


@dataclass(frozen=True)
class SimOptions:
    """Integration settings, times in units of tau.

    ``inject_dipole`` is a test hook: when set to ``(sx, sy)`` every atom
    enters with those transverse components instead of random +-1.
    """

    t_total: float = 200.0
    sample_dt: float = 0.05
    n_sub: int = 1
    cavity_noise: bool = True
    spontaneous: bool = True
    inject_dipole: Optional[Tuple[float, float]] = None

    def __post_init__(self):
        if self.n_sub < 1:
            raise ValueError("n_sub must be >= 1")
        if not (self.t_total > 0 and self.sample_dt > 0):
            raise ValueError("t_total and sample_dt must be > 0")

    def to_dict(self):
        return dataclasses.asdict(self)


@dataclass(frozen=True)
class TrajectoryRecord:
    sample_times: np.ndarray
    jx_series: np.ndarray
    jy_series: np.ndarray
    seed: int
    config_hash: str
    n_atoms: int
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        n = len(self.sample_times)
        if len(self.jx_series) != n or len(self.jy_series) != n:
            raise ValueError("series lengths differ")
        if n > 1:
            dt = np.diff(self.sample_times)
            if np.any(dt <= 0) or not np.allclose(dt, dt[0], rtol=1e-9, atol=0):
                raise ValueError("sample_times must be strictly increasing and uniform")

    @property
    def sample_dt(self):
        return float(self.sample_times[1] - self.sample_times[0])

    def to_csv(self, path):
        data = np.column_stack([self.sample_times, self.jx_series, self.jy_series])
        np.savetxt(path, data, fmt="%.12e", delimiter=",", header="t,jx,jy", comments="")
        sidecar = {"seed": int(self.seed), "config_hash": self.config_hash,
                   "n_atoms": int(self.n_atoms), **self.meta}
        with open(os.fspath(path) + ".json", "w") as fh:
            json.dump(sidecar, fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def from_csv(cls, path):
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        with open(os.fspath(path) + ".json") as fh:
            side = json.load(fh)
        seed = side.pop("seed")
        chash = side.pop("config_hash")
        n_atoms = side.pop("n_atoms")
        return cls(data[:, 0], data[:, 1], data[:, 2], seed, chash, n_atoms, side)


class EnsembleError(RuntimeError):
    """One or more trajectories failed; ``failures`` maps index -> message."""

    def __init__(self, failures):
        self.failures = dict(failures)
        lines = ", ".join(f"#{i}: {m}" for i, m in sorted(self.failures.items()))
        super().__init__(f"{len(self.failures)} trajectories failed ({lines})")


# --- single-atom pieces --------------------------------------------------

def mode_function(x, z, w, k):
    """Top-hat standing-wave mode ``cos(k z) [Theta(x + w) - Theta(x - w)]``.

    Theta(0) = 1, so the mode is nonzero on the closed interval [-w, w].
    """
    x = np.asarray(x, dtype=float)
    inside = (x >= -w) & ~(x > w)
    out = np.cos(k * np.asarray(z, dtype=float)) * inside
    return out if out.ndim else float(out)


def inject_atom(rng, p, entry_time=0.0):
    """Draw a freshly injected atom at the mode entrance."""
    z = rng.uniform(0.0, p.wavelength)
    vz = rng.normal(0.0, p.delta_d / p.k)
    sx, sy = 2.0 * rng.integers(0, 2, size=2) - 1.0
    return AtomState(x=-p.waist, z=float(z), vx=2.0 * p.waist / p.tau, vz=float(vz),
                     sx=float(sx), sy=float(sy), sz=1.0, entry_time=float(entry_time))


def drift(s, eta, jx, jy, rates, gamma=0.0):
    """Deterministic part of ``d(sx, sy, sz)/dt``.

    ``s`` is a triple of scalars or arrays, ``jx, jy`` the collective dipole
    (including the atom itself).  ``gamma`` adds free-space decay.
    """
    sx, sy, sz = s
    gc, gd = rates.gamma_c, rates.gamma_delta
    ax = jx * sz - eta * sx * (sz + 1.0)
    ay = jy * sz - eta * sy * (sz + 1.0)
    dsx = 0.5 * gc * eta * ax - 0.5 * gd * eta * ay
    dsy = 0.5 * gc * eta * ay + 0.5 * gd * eta * ax
    dsz = (-(gc * eta * eta + gamma) * (sz + 1.0)
           - 0.5 * gc * eta * (jx * sx + jy * sy - eta * (sx * sx + sy * sy))
           + 0.5 * gd * eta * (jy * sx - jx * sy))
    if gamma:
        dsx = dsx - 0.5 * gamma * sx
        dsy = dsy - 0.5 * gamma * sy
    return dsx, dsy, dsz


def cavity_noise_increment(s, eta, xi_q, xi_p, rates, dt):
    """Cavity shot-noise increment for one Euler-Maruyama step.

    ``xi_q`` and ``xi_p`` are standard normal draws shared by all atoms in
    the step; the sqrt(dt) factor turns them into Wiener increments.
    """
    sx, sy, sz = s
    root = math.sqrt(rates.gamma_0)
    cq = rates.gamma_c / root * math.sqrt(dt)
    cd = rates.gamma_delta / root * math.sqrt(dt)
    nsx = -eta * sz * (cq * xi_p + cd * xi_q)
    nsy = eta * sz * (cq * xi_q - cd * xi_p)
    nsz = eta * (cq * (sx * xi_p - sy * xi_q) + cd * (sx * xi_q + sy * xi_p))
    return nsx, nsy, nsz


def _spont_from_normals(s, zeta, gamma, dt):
    # lower-triangular factor of 2 D dt; negative Schur complement clamped to 0
    sx, sy, sz = s
    root = math.sqrt(gamma * dt)
    schur = np.sqrt(np.maximum(2.0 * (1.0 + sz) - sx * sx - sy * sy, 0.0))
    z1, z2, z3 = zeta[..., 0], zeta[..., 1], zeta[..., 2]
    return root * z1, root * z2, root * (sx * z1 + sy * z2 + schur * z3)


def spont_noise_increment(s, rng, gamma, dt):
    """Spontaneous-emission noise with covariance ``2 D dt``, independent per atom."""
    shape = np.shape(s[0])
    zeta = rng.standard_normal(shape + (3,))
    return _spont_from_normals(s, zeta, gamma, dt)


# --- ensemble ------------------------------------------------------------

@dataclass
class EnsembleState:
    """Atoms currently in the mode, stored as a ring buffer of N slots.

    Slot ``c % N`` receives injection ``c``; the atom it displaces has been
    inside for exactly one transit time.
    """

    params: object            # natural-unit PhysicalParams
    n_sub: int
    theta: np.ndarray         # k z in [0, 2 pi)
    ku: np.ndarray            # k v_z
    sx: np.ndarray
    sy: np.ndarray
    sz: np.ndarray
    entry_step: np.ndarray
    active: np.ndarray
    step_index: int = 0
    jx: float = 0.0
    jy: float = 0.0

    @property
    def n_slots(self):
        return self.theta.shape[-1]

    @property
    def dt(self):
        return self.params.tau / (self.n_slots * self.n_sub)

    @property
    def time(self):
        return self.step_index * self.dt

    @property
    def count(self):
        return int(np.count_nonzero(self.active))

    def positions(self):
        """Beam-axis positions from integer ages, so no drift accumulates."""
        p = self.params
        age = (self.step_index - self.entry_step) * self.dt
        return -p.waist + 2.0 * p.waist / p.tau * age

    def eta(self):
        p = self.params
        z = self.theta / p.k
        return mode_function(self.positions(), z, p.waist, p.k) * self.active

    def recompute_dipole(self):
        eta = self.eta()
        return float(np.sum(eta * self.sx)), float(np.sum(eta * self.sy))

    @property
    def atoms(self):
        """Active atoms in FIFO (entry) order."""
        p = self.params
        idx = np.flatnonzero(self.active)
        idx = idx[np.argsort(self.entry_step[idx], kind="stable")]
        x = self.positions()
        return [AtomState(x=float(x[i]), z=float(self.theta[i] / p.k),
                          vx=2.0 * p.waist / p.tau, vz=float(self.ku[i] / p.k),
                          sx=float(self.sx[i]), sy=float(self.sy[i]), sz=float(self.sz[i]),
                          entry_time=float(self.entry_step[i] * self.dt))
                for i in idx]


def new_ensemble(p, n_sub=1):
    """Empty cavity at t = 0 for natural-unit parameters ``p``."""
    n = p.n_atoms
    zeros = np.zeros(n)
    return EnsembleState(params=p, n_sub=int(n_sub), theta=zeros.copy(), ku=zeros.copy(),
                         sx=zeros.copy(), sy=zeros.copy(), sz=zeros.copy(),
                         entry_step=np.zeros(n, dtype=np.int64),
                         active=np.zeros(n, dtype=bool))


def _advance(theta, ku, sx, sy, sz, active, rates, gamma, dt, xi, zeta, cavity_noise):
    """One Euler-Maruyama step on arrays with a trailing atom axis.

    Every active atom is inside [-w, w) because removal is age based, so the
    top-hat factor of the mode function reduces to the ``active`` mask.
    """
    eta = np.cos(theta) * active
    jx = np.sum(eta * sx, axis=-1, keepdims=True)
    jy = np.sum(eta * sy, axis=-1, keepdims=True)
    s = (sx, sy, sz)
    dsx, dsy, dsz = drift(s, eta, jx, jy, rates, gamma)
    nx = sx + dsx * dt
    ny = sy + dsy * dt
    nz = sz + dsz * dt
    if cavity_noise:
        cx, cy, cz = cavity_noise_increment(s, eta, xi[..., 0:1], xi[..., 1:2], rates, dt)
        nx, ny, nz = nx + cx, ny + cy, nz + cz
    if zeta is not None:
        fx, fy, fz = _spont_from_normals(s, zeta, gamma, dt)
        nx, ny, nz = nx + fx * active, ny + fy * active, nz + fz * active
    theta = np.mod(theta + ku * dt, 2.0 * math.pi)
    return theta, nx, ny, nz


def step(state, dt, rng, rates, opts):
    """Advance ``state`` by one sub-step ``dt = tau / (N n_sub)``.

    At the start of every injection interval the expired atom is removed and
    a new one injected; the update then uses the collective dipole at the
    start of the step for all atoms.  Returns the same (mutated) state.
    """
    p = state.params
    n = state.n_slots
    if not math.isclose(dt, state.dt, rel_tol=1e-12):
        raise ValueError(f"dt must be tau/(N n_sub) = {state.dt!r}")
    gamma = p.gamma if opts.spontaneous else 0.0
    per_transit = n * state.n_sub
    if state.step_index % state.n_sub == 0:
        age = state.step_index - state.entry_step
        state.active &= age < per_transit
        slot = (state.step_index // state.n_sub) % n
        if state.active[slot]:
            # the slot's atom has not yet spent tau inside: injecting would make N + 1
            raise RuntimeError("injection bookkeeping error: ensemble would exceed N atoms")
        atom = inject_atom(rng, p, entry_time=state.time)
        if opts.inject_dipole is not None:
            atom = dataclasses.replace(atom, sx=float(opts.inject_dipole[0]),
                                       sy=float(opts.inject_dipole[1]))
        state.theta[slot] = p.k * atom.z
        state.ku[slot] = p.k * atom.vz
        state.sx[slot], state.sy[slot], state.sz[slot] = atom.sx, atom.sy, atom.sz
        state.entry_step[slot] = state.step_index
        state.active[slot] = True
    normals = rng.standard_normal(2 + (3 * n if gamma > 0 else 0))
    xi = normals[:2]
    zeta = normals[2:].reshape(n, 3) if gamma > 0 else None
    state.theta, state.sx, state.sy, state.sz = _advance(
        state.theta, state.ku, state.sx, state.sy, state.sz, state.active,
        rates, gamma, dt, xi, zeta, opts.cavity_noise)
    state.step_index += 1
    state.jx, state.jy = state.recompute_dipole()
    return state


# --- trajectories --------------------------------------------------------

def trajectory_seed(base_seed, index):
    """Seed of trajectory ``index`` in an ensemble started from ``base_seed``."""
    ss = np.random.SeedSequence([int(base_seed), int(index)])
    return int(ss.generate_state(1, np.uint64)[0])


def config_hash(p, opts):
    blob = json.dumps({"params": p.to_dict(), "opts": opts.to_dict()},
                      sort_keys=True, default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _sample_stride(opts, dt):
    stride = opts.sample_dt / dt
    k = max(1, int(round(stride)))
    if abs(stride - k) > 1e-6 * k:
        raise ValueError(f"sample_dt={opts.sample_dt} is not a multiple of dt={dt}")
    return k


def _run_batch(p, opts, seeds):
    """Integrate several trajectories side by side; one RNG stream each."""
    p_nat = natural_units(p)
    rates = derive_rates(p_nat, warn=False)
    n = p_nat.n_atoms
    n_sub = opts.n_sub
    dt = 1.0 / (n * n_sub)
    stride = _sample_stride(opts, dt)
    n_steps = int(round(opts.t_total / dt))
    n_inject = -(-n_steps // n_sub)
    gamma = p_nat.gamma if opts.spontaneous else 0.0
    spont = gamma > 0
    width = 2 + (3 * n if spont else 0)
    sigma_u = p_nat.delta_d  # k * std(v_z)

    b = len(seeds)
    rngs = [np.random.default_rng(s) for s in seeds]
    theta = np.zeros((b, n))
    ku = np.zeros((b, n))
    sx = np.zeros((b, n))
    sy = np.zeros((b, n))
    sz = np.zeros((b, n))
    active = np.zeros((b, n), dtype=bool)
    entry = np.zeros((b, n), dtype=np.int64)
    samples = []

    step_index = 0
    for c0 in range(0, n_inject, _CHUNK):
        m = min(_CHUNK, n_inject - c0)
        inj_theta = np.empty((b, m))
        inj_ku = np.empty((b, m))
        inj_s = np.empty((b, m, 2))
        noise = np.empty((b, m, n_sub, width))
        for i, rng in enumerate(rngs):
            inj_theta[i] = 2.0 * math.pi * rng.uniform(0.0, 1.0, size=m)
            inj_ku[i] = rng.normal(0.0, sigma_u, size=m)
            inj_s[i] = 2.0 * rng.integers(0, 2, size=(m, 2)) - 1.0
            noise[i] = rng.standard_normal((m, n_sub, width))
        if opts.inject_dipole is not None:
            inj_s[:] = opts.inject_dipole
        for c in range(m):
            slot = (c0 + c) % n
            active &= (step_index - entry) < n * n_sub
            theta[:, slot] = inj_theta[:, c]
            ku[:, slot] = inj_ku[:, c]
            sx[:, slot] = inj_s[:, c, 0]
            sy[:, slot] = inj_s[:, c, 1]
            sz[:, slot] = 1.0
            entry[:, slot] = step_index
            active[:, slot] = True
            for k in range(n_sub):
                if step_index >= n_steps:
                    break
                draw = noise[:, c, k]
                zeta = draw[:, 2:].reshape(b, n, 3) if spont else None
                theta, sx, sy, sz = _advance(theta, ku, sx, sy, sz, active, rates, gamma,
                                             dt, draw[:, :2], zeta, opts.cavity_noise)
                step_index += 1
                if step_index % stride == 0:
                    eta = np.cos(theta) * active
                    samples.append((np.sum(eta * sx, axis=-1), np.sum(eta * sy, axis=-1)))

    times = np.arange(1, len(samples) + 1) * stride * dt
    jx = np.array([s[0] for s in samples]).T.reshape(b, -1)
    jy = np.array([s[1] for s in samples]).T.reshape(b, -1)
    chash = config_hash(p, opts)
    out = []
    for i, seed in enumerate(seeds):
        out.append(TrajectoryRecord(times, jx[i].copy(), jy[i].copy(), int(seed), chash, n,
                                    {"opts": opts.to_dict()}))
    return out


def run_trajectory(p, opts, seed):
    """Integrate one trajectory from an empty cavity to ``opts.t_total``.

    Identical ``(seed, p, opts)`` give bit-identical records.
    """
    rec = _run_batch(p, opts, [seed])[0]
    if not (np.all(np.isfinite(rec.jx_series)) and np.all(np.isfinite(rec.jy_series))):
        raise FloatingPointError("trajectory diverged (non-finite collective dipole)")
    return rec


def _batch_job(args):
    p, opts, idx, seeds = args
    recs = _run_batch(p, opts, seeds)
    return idx, recs


def run_ensemble(p, opts, n_traj, base_seed, workers=1, batch_size=32):
    """Run ``n_traj`` independent trajectories; output ordered by index.

    Trajectory ``i`` uses :func:`trajectory_seed(base_seed, i)`, so results
    do not depend on ``workers`` or ``batch_size``.
    """
    if n_traj < 1:
        raise ValueError("n_traj must be >= 1")
    seeds = [trajectory_seed(base_seed, i) for i in range(n_traj)]
    jobs = []
    for start in range(0, n_traj, batch_size):
        idx = list(range(start, min(n_traj, start + batch_size)))
        jobs.append((p, opts, idx, [seeds[i] for i in idx]))

    records = [None] * n_traj
    failures = {}

    def collect(idx, recs):
        for i, rec in zip(idx, recs):
            if np.all(np.isfinite(rec.jx_series)) and np.all(np.isfinite(rec.jy_series)):
                records[i] = rec
            else:
                failures[i] = "non-finite collective dipole"

    if workers <= 1 or len(jobs) == 1:
        for job in jobs:
            try:
                collect(*_batch_job(job))
            except Exception as exc:  # noqa: BLE001 - reported per index
                failures.update({i: repr(exc) for i in job[2]})
    else:
        with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool:
            futures = {pool.submit(_batch_job, job): job for job in jobs}
            for fut in concurrent.futures.as_completed(futures):
                try:
                    collect(*fut.result())
                except Exception as exc:  # noqa: BLE001
                    failures.update({i: repr(exc) for i in futures[fut][2]})
    if failures:
        raise EnsembleError(failures)
    return records
