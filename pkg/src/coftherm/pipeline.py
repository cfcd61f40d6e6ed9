"""Dataset assembly: per-COF descriptors, conductivities and VDOS overlap."""
from __future__ import annotations

import csv
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .bondgraph import DEFAULT_SCALE, build_bond_graph
from .dangling import Branch, classify_branches
from .mlkit.features import FeatureTable
from .nemd import average_kappa, extract_kappa
from .spectral import element_branch_groups, overlap_s, spectral_profile
from .structio import Structure, parse_bin_profile, parse_structure, parse_trajectory

log = logging.getLogger(__name__)

DATASET_COLUMNS = ("name", "density", "dmr", "kx", "ky", "kappa_mean", "ratio", "S", "error")


def worker_count() -> int:
    try:
        n = int(os.environ.get("COFTHERM_THREADS", "1"))
    except ValueError:
        n = 1
    return max(1, n)


def read_manifest(path) -> list[dict[str, str]]:
    """CSV manifest with a ``name`` column; relative paths resolve against its directory."""
    path = Path(path)
    base = path.parent
    try:
        with path.open(newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None:
                return []
            if "name" not in reader.fieldnames:
                raise ValueError(f"{path}: manifest needs a 'name' column")
            rows = []
            for row in reader:
                clean = {}
                for k, v in row.items():
                    if k is None:
                        raise ValueError(f"{path}: row {row.get('name')!r} has extra fields")
                    v = (v or "").strip()
                    if v and k not in ("name", "fs_per_step") and not os.path.isabs(v):
                        v = str(base / v)
                    clean[k] = v
                rows.append(clean)
            return rows
    except csv.Error as exc:
        raise ValueError(f"{path}: {exc}") from None


def branch_tags(labels) -> list[str]:
    return ["main" if lab is Branch.MAIN else "dangling" for lab in labels]


def vdos_overlap(structure: Structure, traj, scale: float = DEFAULT_SCALE, labels=None, **vdos_opts):
    """VDOS per element x branch group and the overlap metric.

    A trajectory holding a whole number of copies of the structure is assumed
    to list atoms copy by copy; labels are tiled accordingly.
    """
    if labels is None:
        g = build_bond_graph(structure, scale)
        labels = classify_branches(g, structure).labels
    tags = branch_tags(labels)
    n_unit = structure.n_atoms
    if traj.n_atoms % n_unit:
        raise ValueError(f"trajectory has {traj.n_atoms} atoms, not a multiple of {n_unit}")
    reps = traj.n_atoms // n_unit
    groups = element_branch_groups(structure.elements * reps, tags * reps)
    profile = spectral_profile(traj, groups, **vdos_opts)
    return profile, overlap_s(profile)


@dataclass
class DatasetRow:
    name: str
    density: float = math.nan
    dmr: float = math.nan
    kx: float = math.nan
    ky: float = math.nan
    kappa_mean: float = math.nan
    ratio: float = math.nan
    S: float = math.nan
    error: str = ""
    extra: dict = field(default_factory=dict)


def process_entry(entry: dict[str, str], scale: float = DEFAULT_SCALE, trim: int = 0, fs_per_step: float | None = None) -> DatasetRow:
    row = DatasetRow(entry.get("name", ""))
    try:
        s = parse_structure(entry["structure"]) if entry.get("structure") else None
        labels = None
        if s is not None:
            row.density = s.density
            lab = classify_branches(build_bond_graph(s, scale), s)
            labels = lab.labels
            row.dmr = lab.dmr
        if entry.get("profile_x"):
            row.kx = extract_kappa(parse_bin_profile(entry["profile_x"]), trim).kappa
        if entry.get("profile_y"):
            row.ky = extract_kappa(parse_bin_profile(entry["profile_y"]), trim).kappa
        if math.isfinite(row.kx) and math.isfinite(row.ky):
            row.kappa_mean, row.ratio = average_kappa(row.kx, row.ky)
        elif math.isfinite(row.kx) or math.isfinite(row.ky):
            row.kappa_mean = row.kx if math.isfinite(row.kx) else row.ky
        if entry.get("trajectory"):
            if s is None:
                raise ValueError("a trajectory needs a structure for atom groups")
            fs = float(entry.get("fs_per_step") or fs_per_step or math.nan)
            if not fs > 0:
                raise ValueError("fs_per_step missing for trajectory (manifest column or --fs-per-step)")
            traj = parse_trajectory(entry["trajectory"], fs)
            row.S = vdos_overlap(s, traj, scale, labels=labels)[1]
    except Exception as exc:  # one bad COF must not stop the batch
        log.warning("%s: %s", row.name, exc)
        row.error = f"{type(exc).__name__}: {exc}"
    return row


def run_pipeline(entries, scale: float = DEFAULT_SCALE, trim: int = 0, fs_per_step: float | None = None, workers: int | None = None):
    workers = workers or worker_count()
    if workers == 1:
        return [process_entry(e, scale, trim, fs_per_step) for e in entries]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda e: process_entry(e, scale, trim, fs_per_step), entries))


def format_number(x: float) -> str:
    return "" if x is None or (isinstance(x, float) and math.isnan(x)) else f"{x:.6g}"


def dataset_csv(rows, columns=DATASET_COLUMNS) -> str:
    lines = [",".join(columns)]
    for r in rows:
        vals = []
        for c in columns:
            v = getattr(r, c)
            if isinstance(v, str):
                v = v.replace(",", ";").replace("\n", " ")
                vals.append(v)
            else:
                vals.append(format_number(v))
        lines.append(",".join(vals))
    return "\n".join(lines) + "\n"


def build_feature_table(directory, scale: float = DEFAULT_SCALE) -> FeatureTable:
    """Descriptor table from every structure in ``directory``.

    Density and DMR come from the structures. ``kappa.csv`` (``name,kappa``
    or ``name,kx,ky``) supplies the target; an optional ``descriptors.csv``
    adds pore descriptors (``lpd``, ``void_fraction``, ``gsa``) computed by
    external tools.
    """
    directory = Path(directory)
    paths = sorted(p for p in directory.iterdir() if p.suffix.lower() in (".cif", ".xyz", ".extxyz"))
    kappa = _read_keyed(directory / "kappa.csv") if (directory / "kappa.csv").exists() else {}
    desc = _read_keyed(directory / "descriptors.csv") if (directory / "descriptors.csv").exists() else {}
    names, cols = [], {"density": [], "lpd": [], "void_fraction": [], "gsa": [], "dmr": [], "kappa": []}
    for p in paths:
        s = parse_structure(p)
        name = p.stem
        names.append(name)
        cols["density"].append(s.density)
        cols["dmr"].append(classify_branches(build_bond_graph(s, scale), s).dmr)
        d = desc.get(name, {})
        for c in ("lpd", "void_fraction", "gsa"):
            cols[c].append(float(d[c]) if d.get(c) else math.nan)
        k = kappa.get(name, {})
        if k.get("kappa"):
            cols["kappa"].append(float(k["kappa"]))
        elif k.get("kx") and k.get("ky"):
            cols["kappa"].append(average_kappa(float(k["kx"]), float(k["ky"]))[0])
        else:
            cols["kappa"].append(math.nan)
    if not any(np.isfinite(cols[c]).any() for c in ("lpd", "void_fraction", "gsa")):
        for c in ("lpd", "void_fraction", "gsa"):
            cols.pop(c)
    return FeatureTable(tuple(names), {k: np.array(v, dtype=float) for k, v in cols.items()})


def _read_keyed(path: Path) -> dict[str, dict[str, str]]:
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        if not reader.fieldnames or "name" not in reader.fieldnames:
            raise ValueError(f"{path}: needs a 'name' column")
        return {row["name"].strip(): {k.strip().lower(): (v or "").strip() for k, v in row.items()} for row in reader}
