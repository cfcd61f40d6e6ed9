"""Periodic covalent bond graph built with cell lists."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .constants import COVALENT_RADII
from .structio import Structure

DEFAULT_SCALE = 1.15
MIN_DISTANCE = 0.5  # A; anything closer is treated as overlapping atoms


class OverlapError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class BondGraph:
    """Directed edge arrays holding both directions of every bond.

    Edge ``k`` runs from ``src[k]`` to the image of ``dst[k]`` translated by
    ``shift[k]`` cells, at distance ``length[k]``.
    """

    n_atoms: int
    src: np.ndarray
    dst: np.ndarray
    shift: np.ndarray
    length: np.ndarray

    def __post_init__(self):
        order = np.lexsort((self.shift[:, 2], self.shift[:, 1], self.shift[:, 0], self.dst, self.src))
        for name in ("src", "dst", "shift", "length"):
            a = np.array(getattr(self, name))[order]
            a.setflags(write=False)
            object.__setattr__(self, name, a)
        offsets = np.searchsorted(self.src, np.arange(self.n_atoms + 1))
        offsets.setflags(write=False)
        object.__setattr__(self, "_offsets", offsets)

    @property
    def n_edges(self) -> int:
        """Number of undirected bonds."""
        return len(self.src) // 2

    def edges(self, i: int):
        """Outgoing edges of atom ``i`` as ``(dst, shift, length)`` rows."""
        lo, hi = self._offsets[i], self._offsets[i + 1]
        return zip(self.dst[lo:hi].tolist(), map(tuple, self.shift[lo:hi].tolist()), self.length[lo:hi].tolist())

    def neighbors(self, i: int) -> list[int]:
        lo, hi = self._offsets[i], self._offsets[i + 1]
        return self.dst[lo:hi].tolist()

    def degree(self, i: int) -> int:
        return int(self._offsets[i + 1] - self._offsets[i])

    def undirected(self) -> list[tuple[int, int, tuple[int, int, int], float]]:
        """One row per bond, with ``i < j`` or ``i == j`` and a positive shift."""
        out = []
        for i, j, s, d in zip(self.src.tolist(), self.dst.tolist(), self.shift.tolist(), self.length.tolist()):
            if i < j or (i == j and tuple(s) > (0, 0, 0)):
                out.append((i, j, tuple(s), d))
        return out

    def is_symmetric(self) -> bool:
        fwd = set(zip(self.src.tolist(), self.dst.tolist(), map(tuple, self.shift.tolist())))
        return all((j, i, (-s[0], -s[1], -s[2])) in fwd for i, j, s in fwd)

    def to_csv(self) -> str:
        rows = ["i,j,sx,sy,sz,length"]
        for i, j, s, d in self.undirected():
            rows.append(f"{i},{j},{s[0]},{s[1]},{s[2]},{d!r}")
        return "\n".join(rows) + "\n"

    def to_dot(self, elements=None) -> str:
        lines = ["graph bonds {"]
        for i in range(self.n_atoms):
            label = f"{elements[i]}{i}" if elements is not None else str(i)
            lines.append(f'  {i} [label="{label}"];')
        for i, j, s, d in self.undirected():
            attr = f'label="{s[0]},{s[1]},{s[2]}", style=dashed' if any(s) else ""
            lines.append(f"  {i} -- {j} [{attr}];" if attr else f"  {i} -- {j};")
        lines.append("}")
        return "\n".join(lines) + "\n"


def _cutoffs(elements) -> tuple[np.ndarray, float]:
    try:
        radii = np.array([COVALENT_RADII[e] for e in elements], dtype=float)
    except KeyError as exc:
        raise ValueError(f"no covalent radius for element {exc.args[0]!r}") from None
    return radii, 2.0 * float(radii.max()) if len(radii) else 0.0


def build_bond_graph(s: Structure, scale: float = DEFAULT_SCALE) -> BondGraph:
    """Bond atoms closer than ``scale * (r_i + r_j)`` under periodic images.

    Every periodic image within the cutoff produces an edge, so cells shorter
    than the cutoff (e.g. a one-atom chain) bond atoms to their own images.
    """
    if not 1.0 <= scale <= 1.5:
        raise ValueError(f"scale must lie in [1.0, 1.5], got {scale}")
    n = s.n_atoms
    radii, rmax = _cutoffs(s.elements)
    empty = BondGraph(n, np.zeros(0, int), np.zeros(0, int), np.zeros((0, 3), int), np.zeros(0))
    if n == 0:
        return empty
    rc = scale * rmax
    L = np.asarray(s.cell_lengths)
    cart = s.cart

    nbins = np.maximum(1, np.floor(L / rc).astype(int))
    width = L / nbins
    reach = np.ceil(rc / width).astype(int)
    bin_of = np.minimum(np.floor(cart / width).astype(int), nbins - 1)
    flat = np.ravel_multi_index(bin_of.T, nbins)
    order = np.argsort(flat, kind="stable")
    starts = np.searchsorted(flat[order], np.arange(np.prod(nbins) + 1))

    srcs, dsts, shifts, lengths = [], [], [], []
    offsets = list(itertools.product(*(range(-r, r + 1) for r in reach)))
    for b in map(np.array, itertools.product(*(range(k) for k in nbins))):
        fb = np.ravel_multi_index(b, nbins)
        members = order[starts[fb] : starts[fb + 1]]
        if members.size == 0:
            continue
        for off in offsets:
            nb = b + np.array(off)
            shift = np.floor_divide(nb, nbins)
            nb = nb - shift * nbins
            fnb = np.ravel_multi_index(nb, nbins)
            others = order[starts[fnb] : starts[fnb + 1]]
            if others.size == 0:
                continue
            d = cart[others][None, :, :] + shift * L - cart[members][:, None, :]
            dist = np.sqrt(np.einsum("ijk,ijk->ij", d, d))
            cut = scale * (radii[members][:, None] + radii[others][None, :])
            self_pair = (members[:, None] == others[None, :]) & (not shift.any())
            hit = (dist <= cut) & ~self_pair
            if not hit.any():
                continue
            close = (dist < MIN_DISTANCE) & ~self_pair
            if close.any():
                a, c = np.argwhere(close)[0]
                raise OverlapError(
                    f"atoms {members[a]} and {others[c]} (image {tuple(shift.tolist())}) are "
                    f"{dist[a, c]:.3f} A apart (< {MIN_DISTANCE} A)"
                )
            ia, ic = np.nonzero(hit)
            srcs.append(members[ia])
            dsts.append(others[ic])
            shifts.append(np.broadcast_to(shift, (ia.size, 3)))
            lengths.append(dist[ia, ic])
    if not srcs:
        return empty
    return BondGraph(
        n_atoms=n,
        src=np.concatenate(srcs).astype(int),
        dst=np.concatenate(dsts).astype(int),
        shift=np.concatenate(shifts).astype(int),
        length=np.concatenate(lengths),
    )


def boundary_atoms(g: BondGraph) -> set[int]:
    """Atoms with at least one bond into a neighbouring cell."""
    crossing = np.any(g.shift != 0, axis=1)
    return set(np.unique(g.src[crossing]).tolist())


def minimum_image_distance(s: Structure, i: int, j: int) -> float:
    L = np.asarray(s.cell_lengths)
    d = s.cart[j] - s.cart[i]
    d -= L * np.round(d / L)
    return math.sqrt(float(d @ d))
