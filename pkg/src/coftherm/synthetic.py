"""Synthetic structures, profiles and trajectories with known answers.

These generators back the test suite and the demo scripts. The harmonic
chain integrator exists only to produce a trajectory with an analytic
dispersion relation; it is not a simulation engine.
"""
from __future__ import annotations

import math

import numpy as np

from .constants import ANGSTROM_TO_M, KCAL_MOL_FS_TO_W
from .structio import BinProfile, Structure, Trajectory

CC = 1.42  # aromatic C-C bond, A


def honeycomb(reps=(1, 1), bond: float = CC, vacuum: float = 10.0, name: str = "honeycomb") -> Structure:
    """Rectangular graphene-like sheet, 4 atoms per repeat, in the xy plane."""
    a = bond * math.sqrt(3)
    b = 3 * bond
    z = vacuum / 2
    cart = np.array([[0, 0, z], [a / 2, bond / 2, z], [a / 2, 1.5 * bond, z], [0, 2 * bond, z]])
    cell = np.array([a, b, vacuum])
    s = Structure(name, tuple(cell), ("C",) * 4, cart / cell)
    return s.replicate(reps[0], reps[1], 1) if reps != (1, 1) else s


def graft_no2(s: Structure, host: int, name: str | None = None) -> Structure:
    """Attach an out-of-plane nitro group above atom ``host``."""
    h = s.cart[host]
    n = h + np.array([0.0, 0.0, 1.47])
    o1 = n + np.array([1.08, 0.0, 0.62])
    o2 = n + np.array([-1.08, 0.0, 0.62])
    cart = np.vstack([s.cart, n, o1, o2])
    return Structure(
        name or f"{s.name}_no2",
        s.cell_lengths,
        s.elements + ("N", "O", "O"),
        cart / np.asarray(s.cell_lengths),
    )


def honeycomb_no2() -> Structure:
    """2x2 honeycomb repeat (16 C) with one nitro group on an interior ring atom."""
    return graft_no2(honeycomb((2, 2)), host=5, name="honeycomb_no2")


def ch_chain(spacing: float = 1.4, ch: float = 1.09, box: float = 10.0) -> Structure:
    """Infinite carbon chain along x, one C and one H per cell."""
    cell = np.array([spacing, box, box])
    cart = np.array([[0.0, box / 2, box / 2], [0.0, box / 2 + ch, box / 2]])
    return Structure("chainH", tuple(cell), ("C", "H"), cart / cell)


def benzene(box: float = 20.0, cc: float = 1.39, chb: float = 1.09) -> Structure:
    """Isolated benzene molecule centred in a cubic box."""
    ang = np.arange(6) * np.pi / 3
    ring = np.column_stack([cc * np.cos(ang), cc * np.sin(ang), np.zeros(6)])
    hyd = np.column_stack([(cc + chb) * np.cos(ang), (cc + chb) * np.sin(ang), np.zeros(6)])
    cart = np.vstack([ring, hyd]) + box / 2
    return Structure("benzene", (box, box, box), ("C",) * 6 + ("H",) * 6, cart / box)


def para_phenylene(no2: bool = False, cc: float = 1.39, link: float = 1.48, chb: float = 1.09) -> Structure:
    """Poly(para-phenylene): one benzene ring per cell, linked along x.

    With ``no2`` the hydrogen on ring atom 1 is replaced by a nitro group.
    """
    ang = np.arange(6) * np.pi / 3
    ring = np.column_stack([cc * np.cos(ang), cc * np.sin(ang), np.zeros(6)])
    a = 2 * cc + link
    box = 12.0
    origin = np.array([a / 2, box / 2, box / 2])
    atoms = [("C", p) for p in ring]
    for k in (1, 2, 4, 5):
        direction = np.array([math.cos(ang[k]), math.sin(ang[k]), 0.0])
        if no2 and k == 1:
            npos = ring[k] + 1.47 * direction
            perp = np.array([0.0, 0.0, 1.0])  # nitro plane normal to the ring
            atoms.append(("N", npos))
            atoms.append(("O", npos + 0.62 * direction + 1.08 * perp))
            atoms.append(("O", npos + 0.62 * direction - 1.08 * perp))
        else:
            atoms.append(("H", ring[k] + chb * direction))
    cell = np.array([a, box, box])
    cart = np.array([p for _, p in atoms]) + origin
    return Structure("ppp_no2" if no2 else "ppp", tuple(cell), tuple(e for e, _ in atoms), cart / cell)


def synthetic_profile(
    kappa: float = 1.0,
    n_bins: int = 100,
    length: float = 70.0,
    width: float = 20.0,
    thickness: float = 3.4,
    gradient: float = 0.5,
    t_sink: float = 280.0,
    sources=(49, 50),
    sinks=(0, 99),
    left_gradient: float | None = None,
    name: str = "synthetic",
) -> BinProfile:
    """Exactly piecewise-linear profile whose Fourier-law conductivity is ``kappa``.

    ``gradient`` (K/A) is the mean absolute slope of the two halves; the heat
    rate is obtained by inverting Fourier's law. Temperatures rise linearly
    from the sink side toward the sources on both halves.
    """
    w = length / n_bins
    gl = gradient if left_gradient is None else left_gradient
    gr = 2 * gradient - gl
    centers = (np.arange(n_bins) + 0.5) * w
    mid = 0.5 * length
    temps = np.where(centers < mid, t_sink + gl * (centers - centers[0]), t_sink + gr * (centers[-1] - centers))
    area_m2 = width * thickness * ANGSTROM_TO_M**2
    watts = kappa * area_m2 * gradient / ANGSTROM_TO_M
    dE_dt = watts / KCAL_MOL_FS_TO_W
    return BinProfile(temps, sources, sinks, dE_dt, w, width * thickness, name=name)


def velocity_trajectory(velocities, dt: float = 5.0, positions=None, elements=None) -> Trajectory:
    v = np.asarray(velocities, dtype=float)
    return Trajectory(
        dt_sample=dt,
        velocities=v,
        positions=positions,
        timesteps=np.arange(v.shape[0]) * int(round(dt)) if float(dt).is_integer() else None,
        elements=elements,
    )


def cosine_velocities(n_frames: int, f0: float, dt: float, phase: float = 0.0) -> np.ndarray:
    """One atom with v = (cos 2 pi f0 t, sin 2 pi f0 t, 0); f0 in 1/fs."""
    t = np.arange(n_frames) * dt
    arg = 2 * np.pi * f0 * t + phase
    v = np.zeros((n_frames, 1, 3))
    v[:, 0, 0] = np.cos(arg)
    v[:, 0, 1] = np.sin(arg)
    return v


def harmonic_chain(
    n_atoms: int = 64,
    n_frames: int = 2**14,
    spacing: float = 1.5,
    spring: float | None = None,
    mass: float = 12.011,
    dt: float = 1.0,
    omega_max: float = 0.1,
    seed: int = 0,
) -> tuple[Structure, Trajectory, float]:
    """Periodic monatomic chain along x integrated with velocity Verlet.

    Returns the one-atom unit cell, the supercell trajectory (one frame per
    step) and the spring constant. By default the spring is chosen so the
    band top ``2 sqrt(k/m)`` equals ``omega_max`` rad/fs.
    """
    if spring is None:
        spring = mass * (omega_max / 2) ** 2
    box = 10.0
    unit = Structure("chain", (spacing, box, box), ("C",), np.array([[0.0, 0.5, 0.5]]))
    rng = np.random.default_rng(seed)
    u = np.zeros(n_atoms)
    v = rng.standard_normal(n_atoms) * 1e-3
    v -= v.mean()

    def force(disp):
        return spring * (np.roll(disp, -1) - 2 * disp + np.roll(disp, 1))

    vel = np.empty((n_frames, n_atoms))
    disp = np.empty((n_frames, n_atoms))
    f = force(u)
    for step in range(n_frames):
        vel[step] = v
        disp[step] = u
        v_half = v + 0.5 * dt * f / mass
        u = u + dt * v_half
        f = force(u)
        v = v_half + 0.5 * dt * f / mass

    velocities = np.zeros((n_frames, n_atoms, 3))
    velocities[:, :, 0] = vel
    positions = np.empty((n_frames, n_atoms, 3))
    positions[:, :, 0] = np.arange(n_atoms) * spacing + disp
    positions[:, :, 1] = box / 2
    positions[:, :, 2] = box / 2
    traj = Trajectory(
        dt_sample=dt,
        velocities=velocities,
        positions=positions,
        box=(n_atoms * spacing, box, box),
        elements=("C",) * n_atoms,
    )
    return unit, traj, spring


def chain_dispersion(q, spring: float, mass: float, spacing: float) -> np.ndarray:
    """Angular frequency 2 sqrt(k/m) |sin(q a / 2)|."""
    return 2 * np.sqrt(spring / mass) * np.abs(np.sin(np.asarray(q) * spacing / 2))


def random_attention(n_layers, n_heads, n_tokens, rng, concentration: float = 1.0) -> np.ndarray:
    w = rng.gamma(concentration, size=(n_layers, n_heads, n_tokens, n_tokens))
    return (w / w.sum(axis=-1, keepdims=True)).astype(np.float32)


def linear_feature_data(n_rows: int = 1000, n_noise: int = 3, sigma: float = 0.1, seed: int = 0):
    """Rows of y = 2 x1 - x2 + noise with ``n_noise`` irrelevant columns."""
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n_rows, 2 + n_noise))
    y = 2 * X[:, 0] - X[:, 1] + sigma * rng.standard_normal(n_rows)
    return X, y
