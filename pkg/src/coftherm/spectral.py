"""Velocity autocorrelation, vibrational density of states, VDOS overlap and pSED.

Frequencies are ordinary (not angular) and reported in THz when the sampling
interval is given in fs.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .constants import PER_FS_TO_THZ
from .structio import Structure, Trajectory


class SpectralError(ValueError):
    pass


def _fft_len(n: int) -> int:
    m = 1
    while m < n:
        m *= 2
    return m


def autocorrelation(v: np.ndarray, max_lag: int) -> np.ndarray:
    """Sum over trailing axes of <v(t0+tau) v(t0)>, averaged over all valid origins.

    ``v`` has time on axis 0. Returns lags ``0..max_lag-1``.
    """
    n = v.shape[0]
    flat = v.reshape(n, -1)
    nfft = _fft_len(2 * n)
    spec = np.fft.rfft(flat, n=nfft, axis=0)
    raw = np.fft.irfft((spec * spec.conj()).sum(axis=1).real, n=nfft)[:max_lag]
    return raw / (n - np.arange(max_lag))


def vacf(
    t: Trajectory,
    group: Sequence[int],
    max_lag: int | None = None,
    normalize: bool = True,
) -> np.ndarray:
    """Velocity autocorrelation of an atom group, averaged over time origins.

    Normalized so that the lag-0 value is 1. With ``normalize=False`` the
    result is the per-atom mean of the unnormalized correlation (A^2/fs^2).
    """
    idx = np.asarray(sorted(set(int(i) for i in group)), dtype=int)
    if idx.size == 0:
        raise SpectralError("empty atom group")
    if idx.min() < 0 or idx.max() >= t.n_atoms:
        raise SpectralError("atom index outside the trajectory")
    if max_lag is None:
        max_lag = t.n_frames // 2
    if not 1 <= max_lag or 2 * max_lag > t.n_frames:
        raise SpectralError(f"max_lag={max_lag} needs at least {2 * max_lag} frames, have {t.n_frames}")
    v = t.velocities[:, idx, :]
    c = autocorrelation(v, max_lag)
    if normalize:
        # lag 0 uses every origin, matching the denominator's average
        norm = float(np.einsum("tak,tak->", v, v)) / t.n_frames
        if norm == 0:
            raise SpectralError("all velocities in the group are zero")
        c = c / norm
        c[0] = 1.0
        return c
    return c / idx.size


def _window(kind: str | None, n: int) -> np.ndarray | None:
    if kind in (None, "none"):
        return None
    if kind == "hann":
        # one-sided decay: the right half of a symmetric Hann window
        return np.cos(0.5 * np.pi * np.arange(n) / n) ** 2
    raise ValueError(f"unknown window {kind!r}")


def vdos(
    vacf_values: np.ndarray,
    dt: float,
    window: str | None = None,
    pad: int = 1,
    part: str = "abs",
) -> tuple[np.ndarray, np.ndarray]:
    """One-sided Fourier transform of a VACF.

    Returns ``(freq_THz, values)`` with ``len(vacf) * pad // 2 + 1`` points and
    spacing ``1 / (len(vacf) * pad * dt)``. ``part`` selects the magnitude
    (default) or the real part, which is linear in the input.
    """
    c = np.asarray(vacf_values, dtype=float)
    if c.ndim != 1 or c.size < 2:
        raise SpectralError("VACF must be a 1-D series of at least 2 lags")
    if not np.all(np.isfinite(c)):
        raise SpectralError("VACF has non-finite values")
    if pad < 1:
        raise ValueError("pad must be >= 1")
    w = _window(window, c.size)
    if w is not None:
        c = c * w
    n = c.size * pad
    spec = np.fft.rfft(c, n=n) * dt
    freq = np.fft.rfftfreq(n, d=dt) * PER_FS_TO_THZ
    if part == "abs":
        return freq, np.abs(spec)
    if part == "real":
        return freq, spec.real
    raise ValueError(f"part must be 'abs' or 'real', got {part!r}")


@dataclass(frozen=True, eq=False)
class SpectralProfile:
    """VDOS of several atom groups on one frequency grid (THz)."""

    freq: np.ndarray
    groups: Mapping[str, np.ndarray]
    vacfs: Mapping[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        f = np.asarray(self.freq, dtype=float)
        if f.ndim != 1 or f.size < 2 or np.any(np.diff(f) <= 0):
            raise SpectralError("frequency grid must be strictly increasing")
        groups = {}
        for key, vals in self.groups.items():
            vals = np.asarray(vals, dtype=float)
            if vals.shape != f.shape:
                raise SpectralError(f"group {key!r} has {vals.shape} values for {f.size} frequencies")
            if not np.all(np.isfinite(vals)):
                raise SpectralError(f"group {key!r} has non-finite values")
            groups[key] = vals
        object.__setattr__(self, "freq", f)
        object.__setattr__(self, "groups", groups)

    def to_csv(self) -> str:
        keys = list(self.groups)
        rows = [",".join(["freq_THz"] + keys)]
        for k, f in enumerate(self.freq.tolist()):
            rows.append(",".join([repr(f)] + [repr(float(self.groups[g][k])) for g in keys]))
        return "\n".join(rows) + "\n"


def group_key(element: str, branch: str) -> str:
    return f"{element}" if branch == "main" else f"{element}(d)"


def element_branch_groups(elements: Sequence[str], branches: Sequence[str] | None = None) -> dict[str, list[int]]:
    """Atom indices per (element, branch) combination that actually occurs."""
    groups: dict[str, list[int]] = {}
    for i, el in enumerate(elements):
        br = "main" if branches is None else branches[i]
        groups.setdefault(group_key(el, br), []).append(i)
    return groups


def spectral_profile(
    t: Trajectory,
    groups: Mapping[str, Sequence[int]],
    max_lag: int | None = None,
    window: str | None = None,
    pad: int = 1,
    renorm: str | None = None,
) -> SpectralProfile:
    """VDOS per group; ``renorm='area'`` scales each curve to unit area."""
    out, vacfs = {}, {}
    freq = None
    for key, idx in groups.items():
        c = vacf(t, idx, max_lag)
        freq, vals = vdos(c, t.dt_sample, window=window, pad=pad)
        if renorm == "area":
            area = _trapz(vals, freq)
            if area > 0:
                vals = vals / area
        elif renorm not in (None, "none"):
            raise ValueError(f"unknown renorm {renorm!r}")
        out[key] = vals
        vacfs[key] = c
    if freq is None:
        raise SpectralError("no atom groups")
    return SpectralProfile(freq, out, vacfs)


def _trapz(y, x) -> float:
    y = np.asarray(y, dtype=float)
    x = np.asarray(x, dtype=float)
    return float(np.sum(0.5 * (y[1:] + y[:-1]) * np.diff(x)))


def overlap_s(profile: SpectralProfile) -> float:
    """Area under the pointwise minimum over the area under the pointwise maximum."""
    if len(profile.groups) < 2:
        raise SpectralError("the overlap metric needs at least two groups")
    stack = np.stack(list(profile.groups.values()))
    top = _trapz(stack.max(axis=0), profile.freq)
    if top <= 0:
        raise SpectralError("maximum envelope has zero area")
    return _trapz(stack.min(axis=0), profile.freq) / top


# --------------------------------------------------------------------------
# phonon spectral energy density

_AXES = {"x": 0, "y": 1, "z": 2}


@dataclass(frozen=True, eq=False)
class PsedMap:
    """Phi(q, omega) on ``q`` (1/A, along ``axis``) by ``freq`` (THz)."""

    q: np.ndarray
    freq: np.ndarray
    phi: np.ndarray
    axis: str = "x"

    def __post_init__(self):
        phi = np.asarray(self.phi, dtype=float)
        if phi.shape != (len(self.q), len(self.freq)):
            raise SpectralError(f"map shape {phi.shape} != ({len(self.q)}, {len(self.freq)})")
        if np.any(phi < 0):
            raise SpectralError("negative spectral energy density")
        object.__setattr__(self, "phi", phi)

    def ridge(self) -> np.ndarray:
        """Frequency of the maximum at each q (THz)."""
        return self.freq[np.argmax(self.phi, axis=1)]


def assign_unit_cells(
    positions: np.ndarray, s: Structure, n_cells: int, axis: str
) -> tuple[np.ndarray, np.ndarray]:
    """Map supercell atoms to ``(cell n, basis atom b)``.

    Each atom is matched to the nearest basis site (minimum image inside the
    unit cell); its cell index follows from the offset along ``axis``.
    """
    ax = _AXES[axis]
    L = np.array(s.cell_lengths, dtype=float)
    a = L[ax]
    sites = s.cart
    pos = np.asarray(positions, dtype=float)
    d = pos[:, None, :] - sites[None, :, :]
    period = L.copy()
    period[ax] = a
    wrapped = d - period * np.round(d / period)
    dist = np.sqrt(np.einsum("ijk,ijk->ij", wrapped, wrapped))
    b = np.argmin(dist, axis=1)
    best = dist[np.arange(len(pos)), b]
    bad = np.nonzero(best > 0.5 * L.min())[0]
    if bad.size:
        raise SpectralError(
            f"atom {bad[0]} is {best[bad[0]]:.3f} A from the nearest lattice site (more than half a cell)"
        )
    offset = d[np.arange(len(pos)), b, ax]
    n = np.mod(np.round(offset / a).astype(int), n_cells)
    slots = n * s.n_atoms + b
    if np.unique(slots).size != slots.size or slots.size != n_cells * s.n_atoms:
        raise SpectralError("atoms do not fill each (cell, basis) slot exactly once")
    return n, b


def psed(
    t: Trajectory,
    s: Structure,
    n_cells: int,
    axis: str = "x",
    window: str | None = None,
) -> PsedMap:
    """Spectral energy density along one supercell axis.

    ``t`` covers a supercell made of ``n_cells`` copies of ``s`` along
    ``axis``; equilibrium cell positions are taken from the first frame.
    q runs over ``2 pi k / (n_cells a)`` for ``k = 0..n_cells-1``.
    """
    if n_cells < 2:
        raise SpectralError("need at least 2 unit cells along the axis")
    if axis not in _AXES:
        raise ValueError(f"axis must be one of x, y, z, got {axis!r}")
    if t.positions is None:
        raise SpectralError("trajectory carries no positions")
    if t.n_atoms != n_cells * s.n_atoms:
        raise SpectralError(f"trajectory has {t.n_atoms} atoms, expected {n_cells} x {s.n_atoms}")
    ax = _AXES[axis]
    a = s.cell_lengths[ax]
    cell_idx, basis = assign_unit_cells(t.positions[0], s, n_cells, axis)
    masses = s.masses

    nt = t.n_frames
    dt = t.dt_sample
    q = 2 * np.pi * np.arange(n_cells) / (n_cells * a)
    phase = np.exp(1j * np.outer(q, cell_idx * a))  # (q, atom)
    vel = t.velocities
    w = _window(window, nt)
    nf = nt // 2 + 1
    phi = np.zeros((n_cells, nf))
    for b in range(s.n_atoms):
        sel = np.nonzero(basis == b)[0]
        # sum over cells n of v(n, b; t) exp(i q r_n): (t, q, xyz)
        summed = np.einsum("qa,tak->tqk", phase[:, sel], vel[:, sel, :])
        if w is not None:
            summed = summed * w[:, None, None]
        # exp(-i w t) convention matches numpy's forward transform
        amp = np.fft.fft(summed, axis=0)[:nf] * dt
        phi += masses[b] * np.sum(np.abs(amp) ** 2, axis=2).T
    tau0 = nt * dt
    phi /= 4 * np.pi * tau0 * n_cells
    freq = np.arange(nf) / (nt * dt) * PER_FS_TO_THZ
    return PsedMap(q=q, freq=freq, phi=phi, axis=axis)


@dataclass(frozen=True)
class PlotBounds:
    lower: float
    upper: float


def emit_psed_plotdata(m: PsedMap, pair: PsedMap | None = None, percentile: float = 99.0):
    """log10 maps plus shared colour bounds.

    The lower bound is the minimum over both log maps; the upper bound is the
    ``percentile`` of the pooled log values. Zero entries are excluded from
    the log scale.
    """
    maps = [m] if pair is None else [m, pair]
    logs = []
    for mp in maps:
        if mp.phi.size == 0:
            raise SpectralError("empty map")
        pos = mp.phi > 0
        if not pos.any():
            raise SpectralError("map is identically zero; log scale undefined")
        lg = np.full(mp.phi.shape, -np.inf)
        lg[pos] = np.log10(mp.phi[pos])
        logs.append(lg)
    pooled = np.concatenate([lg[np.isfinite(lg)] for lg in logs])
    bounds = PlotBounds(lower=float(pooled.min()), upper=float(np.percentile(pooled, percentile)))
    return logs, bounds


def psed_csv(m: PsedMap, logvals: np.ndarray | None = None) -> str:
    vals = m.phi if logvals is None else logvals
    rows = [",".join(["q_inv_A"] + [repr(float(f)) for f in m.freq])]
    for qi, row in zip(m.q.tolist(), vals.tolist()):
        rows.append(",".join([repr(qi)] + [repr(x) for x in row]))
    return "\n".join(rows) + "\n"
