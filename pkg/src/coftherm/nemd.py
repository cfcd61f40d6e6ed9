"""Thermal conductivity from NEMD bin-temperature profiles."""
from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass

import numpy as np

from .constants import ANGSTROM_TO_M, KCAL_MOL_FS_TO_W
from .structio import BinProfile

log = logging.getLogger(__name__)

HEAT_RATE_K = 1e-7  # kcal/mol/fs per atom
STABILITY_THRESHOLD = 0.10
MIN_FIT_POINTS = 3


class FitError(ValueError):
    pass


@dataclass(frozen=True)
class LinearFit:
    slope: float
    intercept: float
    r2: float
    n: int


@dataclass(frozen=True)
class KappaResult:
    kappa: float  # W/m/K
    slope_left: float  # K/A
    slope_right: float
    fit_r2_left: float
    fit_r2_right: float
    dE_dt_watts: float

    def to_dict(self) -> dict:
        return asdict(self)


def heat_rate(n_atoms: int, k: float = HEAT_RATE_K) -> float:
    """Heat exchanged per unit time, proportional to the atom count (kcal/mol/fs)."""
    if n_atoms <= 0:
        raise ValueError(f"n_atoms must be positive, got {n_atoms}")
    if k < 0:
        raise ValueError(f"k must be non-negative, got {k}")
    if k == 0:
        log.warning("heat rate constant is zero; no temperature gradient will develop")
    return k * n_atoms


def linear_fit(x, y) -> LinearFit:
    """Ordinary least squares through the normal equations."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = x.size
    if n < 2:
        raise FitError("need at least two points")
    xm, ym = x.mean(), y.mean()
    dx, dy = x - xm, y - ym
    sxx = float(dx @ dx)
    if sxx == 0:
        raise FitError("all x values coincide")
    slope = float(dx @ dy) / sxx
    intercept = ym - slope * xm
    ss_tot = float(dy @ dy)
    resid = dy - slope * dx
    ss_res = float(resid @ resid)
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return LinearFit(slope, intercept, r2, n)


def _circular_runs(mask: np.ndarray) -> list[list[int]]:
    """Maximal runs of True in a circular boolean array, in index order."""
    n = mask.size
    if mask.all():
        return [list(range(n))]
    start = int(np.argmin(mask))  # a False entry; runs begin after it
    runs, cur = [], []
    for k in range(1, n + 1):
        i = (start + k) % n
        if mask[i]:
            cur.append(i)
        elif cur:
            runs.append(cur)
            cur = []
    if cur:
        runs.append(cur)
    return runs


def fit_halves(p: BinProfile, trim: int = 0) -> tuple[LinearFit, LinearFit]:
    """Fit T against bin-centre position on the two regions between sources and sinks.

    Regions are the circular runs of bins that are neither sources nor sinks;
    exactly two are expected. ``trim`` drops that many extra bins from each end
    of each run. Runs that wrap through the periodic boundary are unwrapped.
    """
    if trim < 0:
        raise ValueError("trim must be non-negative")
    n = p.n_bins
    mask = np.ones(n, dtype=bool)
    mask[list(p.source_bins)] = False
    mask[list(p.sink_bins)] = False
    runs = _circular_runs(mask)
    if len(runs) != 2:
        raise FitError(f"expected two regions between sources and sinks, found {len(runs)}")
    runs.sort(key=lambda r: r[0] if r[0] <= r[-1] else r[0] - n)
    fits = []
    centers = p.centers
    length = n * p.bin_width
    for run in runs:
        if trim:
            run = run[trim:-trim] if len(run) > 2 * trim else []
        if len(run) < MIN_FIT_POINTS:
            raise FitError(f"only {len(run)} bins left to fit in one half (need {MIN_FIT_POINTS})")
        idx = np.array(run)
        x = centers[idx].copy()
        # unwrap runs crossing the periodic boundary
        x[1:][np.cumsum(np.diff(idx) < 0) > 0] += length
        fits.append(linear_fit(x, p.temperatures[idx]))
    return fits[0], fits[1]


def extract_kappa(p: BinProfile, trim: int = 0) -> KappaResult:
    """Fourier's law with the mean absolute slope of the two half fits."""
    left, right = fit_halves(p, trim)
    grad = 0.5 * (abs(left.slope) + abs(right.slope))  # K/A
    if grad == 0 or not math.isfinite(grad):
        raise FitError(
            f"temperature gradient is {grad} K/A (slopes {left.slope}, {right.slope}); kappa would be infinite"
        )
    watts = p.dE_dt * KCAL_MOL_FS_TO_W
    area = p.cross_section * ANGSTROM_TO_M**2
    kappa = watts / area / (grad / ANGSTROM_TO_M)
    return KappaResult(
        kappa=kappa,
        slope_left=left.slope,
        slope_right=right.slope,
        fit_r2_left=left.r2,
        fit_r2_right=right.r2,
        dE_dt_watts=watts,
    )


def average_kappa(kx: float, ky: float) -> tuple[float, float]:
    """Mean of the two in-plane conductivities and their ratio kx/ky."""
    if not (kx > 0 and ky > 0):
        raise ValueError(f"conductivities must be positive, got {kx}, {ky}")
    return 0.5 * (kx + ky), kx / ky


def parity_r2(kx, ky) -> float:
    """Coefficient of determination of ky against the identity line y = kx."""
    kx = np.asarray(kx, dtype=float)
    ky = np.asarray(ky, dtype=float)
    ss_res = float(np.sum((ky - kx) ** 2))
    ss_tot = float(np.sum((ky - ky.mean()) ** 2))
    if ss_tot == 0:
        raise ValueError("ky has zero variance")
    return 1.0 - ss_res / ss_tot


def stability_filter(l0: float, l1: float, threshold: float = STABILITY_THRESHOLD) -> bool:
    """True if the relative change of a supercell dimension stays under ``threshold``."""
    if not l0 > 0:
        raise ValueError(f"reference length must be positive, got {l0}")
    return abs(l1 - l0) / l0 < threshold
