"""Readers and writers for crystal structures, MD dumps and NEMD bin profiles.

Supported inputs
----------------
* a strict CIF subset: one data block, P1, ``_cell_*`` parameters and an
  ``_atom_site_`` loop with fractional coordinates;
* extended XYZ with an orthogonal ``Lattice=`` and ``Properties=`` header;
* LAMMPS-style text dumps (``ITEM:`` sections) carrying velocities;
* NEMD bin profiles: a ``bin_index,temperature_K`` CSV plus a JSON sidecar.
"""
from __future__ import annotations

import csv
import json
import math
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, NamedTuple, Sequence

import numpy as np

from .constants import AMU_TO_G, ANGSTROM3_TO_CM3, ATOMIC_MASSES

ORTHO_TOL_DEG = 1e-6


class ParseError(ValueError):
    """Input file could not be parsed; carries the offending location."""

    def __init__(self, message: str, path=None, line: int | None = None, column: int | None = None):
        self.path = str(path) if path is not None else None
        self.line = line
        self.column = column
        loc = ""
        if self.path:
            loc += self.path + ":"
        if line is not None:
            loc += f"{line}:"
            if column is not None:
                loc += f"{column}:"
        super().__init__(f"{loc} {message}" if loc else message)


class Atom(NamedTuple):
    element: str
    mass: float
    frac: tuple[float, float, float]


def wrap_fractional(frac) -> np.ndarray:
    """Map fractional coordinates into [0, 1)."""
    f = np.asarray(frac, dtype=float)
    w = f - np.floor(f)
    # x - floor(x) rounds up to 1.0 for tiny negative x
    w[w >= 1.0] = 0.0
    return w


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


def element_mass(symbol: str) -> float:
    try:
        return ATOMIC_MASSES[symbol]
    except KeyError:
        raise ValueError(f"unknown element symbol {symbol!r}") from None


@dataclass(frozen=True, eq=False)
class Structure:
    """Atoms in an orthogonal periodic cell.

    Fractional coordinates are always stored wrapped into [0, 1).
    """

    name: str
    cell_lengths: tuple[float, float, float]
    elements: tuple[str, ...]
    frac: np.ndarray
    cell_angles: tuple[float, float, float] = (90.0, 90.0, 90.0)

    def __post_init__(self):
        lengths = tuple(float(x) for x in self.cell_lengths)
        angles = tuple(float(x) for x in self.cell_angles)
        if len(lengths) != 3 or not all(math.isfinite(x) and x > 0 for x in lengths):
            raise ValueError(f"cell lengths must be three positive numbers, got {self.cell_lengths}")
        if any(abs(a - 90.0) > ORTHO_TOL_DEG for a in angles):
            raise ValueError(f"non-orthogonal cell {angles} is not supported; orthogonalize upstream")
        elements = tuple(self.elements)
        for el in elements:
            element_mass(el)
        frac = np.asarray(self.frac, dtype=float).reshape(-1, 3)
        if frac.shape[0] != len(elements):
            raise ValueError(f"{len(elements)} elements but {frac.shape[0]} coordinates")
        if not np.all(np.isfinite(frac)):
            raise ValueError("non-finite fractional coordinate")
        object.__setattr__(self, "cell_lengths", lengths)
        object.__setattr__(self, "cell_angles", angles)
        object.__setattr__(self, "elements", elements)
        object.__setattr__(self, "frac", _frozen(wrap_fractional(frac)))

    def __len__(self):
        return len(self.elements)

    def __eq__(self, other):
        if not isinstance(other, Structure):
            return NotImplemented
        return (
            self.name == other.name
            and self.cell_lengths == other.cell_lengths
            and self.cell_angles == other.cell_angles
            and self.elements == other.elements
            and np.array_equal(self.frac, other.frac)
        )

    __hash__ = None

    @property
    def n_atoms(self) -> int:
        return len(self.elements)

    @property
    def masses(self) -> np.ndarray:
        return np.array([ATOMIC_MASSES[e] for e in self.elements], dtype=float)

    @property
    def cart(self) -> np.ndarray:
        return self.frac * np.asarray(self.cell_lengths)

    @property
    def volume(self) -> float:
        a, b, c = self.cell_lengths
        return a * b * c

    @property
    def total_mass(self) -> float:
        return math.fsum(ATOMIC_MASSES[e] for e in self.elements)

    @property
    def density(self) -> float:
        """Mass density in g/cm^3."""
        return self.total_mass * AMU_TO_G / (self.volume * ANGSTROM3_TO_CM3)

    @property
    def atoms(self) -> list[Atom]:
        return [Atom(e, ATOMIC_MASSES[e], tuple(f)) for e, f in zip(self.elements, self.frac.tolist())]

    def replicate(self, nx: int = 1, ny: int = 1, nz: int = 1) -> "Structure":
        """Supercell; atoms ordered image-major (all atoms of image 0 first)."""
        reps = np.array([nx, ny, nz])
        if np.any(reps < 1):
            raise ValueError("replication counts must be >= 1")
        shifts = np.array([(i, j, k) for i in range(nx) for j in range(ny) for k in range(nz)], dtype=float)
        frac = ((self.frac[None, :, :] + shifts[:, None, :]) / reps).reshape(-1, 3)
        lengths = tuple(float(x) for x in np.asarray(self.cell_lengths) * reps)
        return Structure(
            name=f"{self.name}_{nx}x{ny}x{nz}",
            cell_lengths=lengths,
            elements=self.elements * len(shifts),
            frac=frac,
            cell_angles=self.cell_angles,
        )


# --------------------------------------------------------------------------
# CIF subset

_TOKEN = re.compile(r"'[^']*'|\"[^\"]*\"|\S+")
_NUMBER = re.compile(r"^([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)(?:\(\d+\))?$")
_ELEMENT = re.compile(r"^([A-Za-z][a-z]?)")


class _Tok(NamedTuple):
    text: str
    line: int
    col: int


def _tokens(text: str) -> Iterator[_Tok]:
    for lineno, raw in enumerate(text.splitlines(), start=1):
        if raw.startswith(";"):
            raise ParseError("multi-line text fields are not supported", line=lineno, column=1)
        for m in _TOKEN.finditer(raw):
            tok = m.group(0)
            if tok.startswith("#"):
                break
            if tok[0] in "'\"":
                tok = tok[1:-1]
            yield _Tok(tok, lineno, m.start() + 1)


def _cif_number(tok: _Tok, path) -> float:
    m = _NUMBER.match(tok.text)
    if not m:
        raise ParseError(f"expected a number, got {tok.text!r}", path, tok.line, tok.col)
    return float(m.group(1))


def _element_from(text: str) -> str | None:
    m = _ELEMENT.match(text)
    if not m:
        return None
    sym = m.group(1)
    sym = sym[0].upper() + sym[1:].lower()
    if sym in ATOMIC_MASSES:
        return sym
    if sym[0] in ATOMIC_MASSES:
        return sym[0]
    return None


_CELL_KEYS = {
    "_cell_length_a": 0,
    "_cell_length_b": 1,
    "_cell_length_c": 2,
    "_cell_angle_alpha": 3,
    "_cell_angle_beta": 4,
    "_cell_angle_gamma": 5,
}
_SYMOP_KEYS = {"_symmetry_equiv_pos_as_xyz", "_space_group_symop_operation_xyz"}
_IDENTITY_OPS = {"x,y,z", "+x,+y,+z"}


def _parse_cif(text: str, path=None, name: str | None = None) -> Structure:
    toks = list(_tokens(text))
    cell: list[float | None] = [None] * 6
    block = None
    sites = None  # (headers, rows)
    pos = 0
    while pos < len(toks):
        tok = toks[pos]
        low = tok.text.lower()
        if low.startswith("data_"):
            if block is not None:
                raise ParseError("multiple data blocks are not supported", path, tok.line, tok.col)
            block = tok.text[5:]
            pos += 1
        elif low == "loop_":
            pos += 1
            headers = []
            while pos < len(toks) and toks[pos].text.startswith("_"):
                headers.append(toks[pos])
                pos += 1
            if not headers:
                raise ParseError("loop_ without column names", path, tok.line, tok.col)
            values = []
            while pos < len(toks):
                t = toks[pos]
                tl = t.text.lower()
                if t.text.startswith("_") or tl == "loop_" or tl.startswith("data_"):
                    break
                values.append(t)
                pos += 1
            if len(values) % len(headers):
                t = values[-1] if values else tok
                raise ParseError(
                    f"loop has {len(values)} values for {len(headers)} columns", path, t.line, t.col
                )
            names = [h.text.lower() for h in headers]
            rows = [values[i : i + len(headers)] for i in range(0, len(values), len(headers))]
            if any(n.startswith("_atom_site_fract") for n in names):
                sites = (names, rows, tok)
            elif any(n in _SYMOP_KEYS for n in names):
                col = next(i for i, n in enumerate(names) if n in _SYMOP_KEYS)
                for row in rows:
                    op = row[col].text.replace(" ", "").lower()
                    if op not in _IDENTITY_OPS:
                        raise ParseError(
                            f"symmetry operation {row[col].text!r}: only P1 cells are supported",
                            path, row[col].line, row[col].col,
                        )
        elif tok.text.startswith("_"):
            if pos + 1 >= len(toks):
                raise ParseError(f"missing value for {tok.text}", path, tok.line, tok.col)
            val = toks[pos + 1]
            if low in _CELL_KEYS:
                cell[_CELL_KEYS[low]] = _cif_number(val, path)
            elif low in _SYMOP_KEYS and val.text.replace(" ", "").lower() not in _IDENTITY_OPS:
                raise ParseError("only P1 cells are supported", path, val.line, val.col)
            pos += 2
        else:
            raise ParseError(f"unexpected token {tok.text!r}", path, tok.line, tok.col)

    for key, idx in _CELL_KEYS.items():
        if cell[idx] is None:
            if idx >= 3:
                cell[idx] = 90.0
            else:
                raise ParseError(f"missing {key}", path)
    lengths = cell[:3]
    for key, v in zip(list(_CELL_KEYS)[:3], lengths):
        if not v > 0:
            raise ParseError(f"non-positive cell length {key} = {v}", path)
    angles = cell[3:]
    if any(abs(a - 90.0) > ORTHO_TOL_DEG for a in angles):
        raise ParseError(f"non-orthogonal cell angles {angles}; orthogonalize the cell first", path)
    if sites is None:
        raise ParseError("no _atom_site_ loop with fractional coordinates", path)

    names, rows, loop_tok = sites
    try:
        ix, iy, iz = (names.index(f"_atom_site_fract_{c}") for c in "xyz")
    except ValueError:
        raise ParseError("atom site loop lacks _atom_site_fract_x/y/z", path, loop_tok.line, loop_tok.col) from None
    if "_atom_site_type_symbol" in names:
        isym = names.index("_atom_site_type_symbol")
    elif "_atom_site_label" in names:
        isym = names.index("_atom_site_label")
    else:
        raise ParseError("atom site loop lacks a type symbol or label", path, loop_tok.line, loop_tok.col)

    elements, frac = [], []
    for row in rows:
        el = _element_from(row[isym].text)
        if el is None:
            t = row[isym]
            raise ParseError(f"unknown element symbol {t.text!r}", path, t.line, t.col)
        elements.append(el)
        frac.append([_cif_number(row[i], path) for i in (ix, iy, iz)])

    return Structure(
        name=name or block or (Path(path).stem if path else "structure"),
        cell_lengths=tuple(lengths),
        cell_angles=tuple(angles),
        elements=tuple(elements),
        frac=np.array(frac, dtype=float).reshape(-1, 3),
    )


def format_cif(s: Structure) -> str:
    a, b, c = s.cell_lengths
    al, be, ga = s.cell_angles
    lines = [
        f"data_{s.name}",
        f"_cell_length_a {a!r}",
        f"_cell_length_b {b!r}",
        f"_cell_length_c {c!r}",
        f"_cell_angle_alpha {al!r}",
        f"_cell_angle_beta {be!r}",
        f"_cell_angle_gamma {ga!r}",
        "_symmetry_space_group_name_H-M 'P 1'",
        "loop_",
        "_atom_site_label",
        "_atom_site_type_symbol",
        "_atom_site_fract_x",
        "_atom_site_fract_y",
        "_atom_site_fract_z",
    ]
    for i, (el, f) in enumerate(zip(s.elements, s.frac.tolist())):
        lines.append(f"{el}{i + 1} {el} {f[0]!r} {f[1]!r} {f[2]!r}")
    return "\n".join(lines) + "\n"


# --------------------------------------------------------------------------
# extended XYZ

_KV = re.compile(r'(\w+)=("[^"]*"|\S+)')


def _cart_for_frac(f: float, length: float) -> float:
    """Cartesian value that divides back to exactly ``f``."""
    c = f * length
    if c / length == f:
        return c
    up = down = c
    for _ in range(8):
        up = math.nextafter(up, math.inf)
        if up / length == f:
            return up
        down = math.nextafter(down, -math.inf)
        if down / length == f:
            return down
    return c


def _parse_xyz(text: str, path=None, name: str | None = None) -> Structure:
    lines = text.splitlines()
    if len(lines) < 2:
        raise ParseError("extended XYZ needs a count line and a comment line", path, 1)
    try:
        n = int(lines[0].split()[0])
    except (ValueError, IndexError):
        raise ParseError(f"bad atom count {lines[0]!r}", path, 1, 1) from None
    header = {k: v.strip('"') for k, v in _KV.findall(lines[1])}
    if "Lattice" not in header:
        raise ParseError("comment line lacks Lattice=", path, 2, 1)
    try:
        lat = np.array([float(x) for x in header["Lattice"].split()], dtype=float).reshape(3, 3)
    except ValueError:
        raise ParseError("Lattice must hold 9 numbers", path, 2, lines[1].find("Lattice") + 1) from None
    diag = np.diag(lat).copy()
    off = lat - np.diag(diag)
    if np.any(np.abs(off) > 1e-8 * np.abs(diag).max()):
        raise ParseError("non-orthogonal or rotated lattice is not supported", path, 2, lines[1].find("Lattice") + 1)
    if np.any(diag <= 0):
        raise ParseError(f"non-positive cell length in Lattice {diag.tolist()}", path, 2)

    props = header.get("Properties", "species:S:1:pos:R:3").split(":")
    if len(props) % 3:
        raise ParseError("malformed Properties", path, 2)
    col = 0
    isp = ipos = None
    for i in range(0, len(props), 3):
        pname, _, count = props[i : i + 3]
        if pname == "species":
            isp = col
        elif pname == "pos":
            ipos = col
        col += int(count)
    if isp is None or ipos is None:
        raise ParseError("Properties must include species and pos", path, 2)

    if len(lines) < 2 + n:
        raise ParseError(f"expected {n} atom lines, found {len(lines) - 2}", path, len(lines))
    elements, cart = [], []
    for lineno in range(3, 3 + n):
        raw = lines[lineno - 1]
        cols = [(m.group(0), m.start() + 1) for m in re.finditer(r"\S+", raw)]
        if len(cols) < col:
            raise ParseError(f"expected {col} columns, found {len(cols)}", path, lineno)
        sym, c0 = cols[isp]
        if sym not in ATOMIC_MASSES:
            raise ParseError(f"unknown element symbol {sym!r}", path, lineno, c0)
        xyz = []
        for text_, cpos in cols[ipos : ipos + 3]:
            try:
                xyz.append(float(text_))
            except ValueError:
                raise ParseError(f"expected a number, got {text_!r}", path, lineno, cpos) from None
        elements.append(sym)
        cart.append(xyz)
    cart = np.array(cart, dtype=float).reshape(-1, 3)
    return Structure(
        name=name or header.get("name") or (Path(path).stem if path else "structure"),
        cell_lengths=tuple(diag.tolist()),
        elements=tuple(elements),
        frac=cart / diag,
    )


def format_xyz(s: Structure, extra: dict[str, Sequence] | None = None) -> str:
    """Extended XYZ text; ``extra`` maps column name -> per-atom values."""
    extra = extra or {}
    a, b, c = s.cell_lengths
    props = ["species:S:1", "pos:R:3"]
    for key, vals in extra.items():
        if len(vals) != s.n_atoms:
            raise ValueError(f"column {key!r} has {len(vals)} values for {s.n_atoms} atoms")
        kind = "S" if isinstance(vals[0], str) else ("I" if isinstance(vals[0], (int, np.integer)) else "R")
        props.append(f"{key}:{kind}:1")
    lines = [
        str(s.n_atoms),
        f'Lattice="{a!r} 0.0 0.0 0.0 {b!r} 0.0 0.0 0.0 {c!r}" Properties={":".join(props)} name={s.name}',
    ]
    for i, (el, f) in enumerate(zip(s.elements, s.frac.tolist())):
        xyz = [_cart_for_frac(fi, li) for fi, li in zip(f, s.cell_lengths)]
        cols = [el] + [repr(x) for x in xyz]
        for vals in extra.values():
            v = vals[i]
            cols.append(v if isinstance(v, str) else repr(float(v)) if not isinstance(v, (int, np.integer)) else str(v))
        lines.append(" ".join(cols))
    return "\n".join(lines) + "\n"


def _detect_format(path: Path, fmt: str | None) -> str:
    if fmt:
        fmt = fmt.lower()
        if fmt in ("cif", "cif-subset"):
            return "cif"
        if fmt in ("xyz", "extxyz", "xyz-extended"):
            return "xyz"
        raise ValueError(f"unsupported structure format {fmt!r}")
    if path.suffix.lower() == ".cif":
        return "cif"
    if path.suffix.lower() in (".xyz", ".extxyz"):
        return "xyz"
    raise ValueError(f"cannot infer structure format from {path.name!r}; pass format=")


def parse_structure(path, format: str | None = None) -> Structure:
    """Read a CIF-subset or extended-XYZ file into a :class:`Structure`."""
    path = Path(path)
    text = path.read_text()
    kind = _detect_format(path, format)
    try:
        if kind == "cif":
            return _parse_cif(text, path)
        return _parse_xyz(text, path)
    except ParseError:
        raise
    except ValueError as exc:
        raise ParseError(str(exc), path) from exc


def parse_structure_text(text: str, format: str, name: str | None = None) -> Structure:
    kind = _detect_format(Path("x"), format)
    return _parse_cif(text, name=name) if kind == "cif" else _parse_xyz(text, name=name)


def write_structure(s: Structure, path, format: str | None = None, extra=None) -> None:
    path = Path(path)
    kind = _detect_format(path, format)
    text = format_cif(s) if kind == "cif" else format_xyz(s, extra)
    path.write_text(text)


# --------------------------------------------------------------------------
# trajectories


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Per-frame per-atom velocities (A/fs), optionally positions (A).

    Arrays have shape ``(n_frames, n_atoms, 3)``; atoms are ordered by id.
    """

    dt_sample: float
    velocities: np.ndarray
    positions: np.ndarray | None = None
    timesteps: np.ndarray | None = None
    ids: np.ndarray | None = None
    box: tuple[float, float, float] | None = None
    elements: tuple[str, ...] | None = None

    def __post_init__(self):
        v = np.asarray(self.velocities, dtype=float)
        if v.ndim != 3 or v.shape[2] != 3:
            raise ValueError(f"velocities must have shape (frames, atoms, 3), got {v.shape}")
        if not self.dt_sample > 0:
            raise ValueError(f"dt_sample must be positive, got {self.dt_sample}")
        if v.shape[0] < 2:
            raise ValueError("a trajectory needs at least 2 frames")
        object.__setattr__(self, "dt_sample", float(self.dt_sample))
        object.__setattr__(self, "velocities", _frozen(v))
        if self.positions is not None:
            p = np.asarray(self.positions, dtype=float)
            if p.shape != v.shape:
                raise ValueError(f"positions shape {p.shape} != velocities shape {v.shape}")
            object.__setattr__(self, "positions", _frozen(p))
        n_frames, n_atoms = v.shape[:2]
        ts = np.arange(n_frames) if self.timesteps is None else np.asarray(self.timesteps, dtype=np.int64)
        object.__setattr__(self, "timesteps", _frozen(ts))
        ids = np.arange(1, n_atoms + 1) if self.ids is None else np.asarray(self.ids, dtype=np.int64)
        object.__setattr__(self, "ids", _frozen(ids))
        if self.box is not None:
            object.__setattr__(self, "box", tuple(float(x) for x in self.box))
        if self.elements is not None:
            if len(self.elements) != n_atoms:
                raise ValueError("elements length does not match atom count")
            object.__setattr__(self, "elements", tuple(self.elements))

    @property
    def n_frames(self) -> int:
        return self.velocities.shape[0]

    @property
    def n_atoms(self) -> int:
        return self.velocities.shape[1]

    def __eq__(self, other):
        if not isinstance(other, Trajectory):
            return NotImplemented

        def same(a, b):
            if a is None or b is None:
                return a is b
            return np.array_equal(a, b)

        return (
            self.dt_sample == other.dt_sample
            and np.array_equal(self.velocities, other.velocities)
            and same(self.positions, other.positions)
            and np.array_equal(self.timesteps, other.timesteps)
            and np.array_equal(self.ids, other.ids)
            and self.box == other.box
            and self.elements == other.elements
        )

    __hash__ = None


def _dump_frames(lines: list[str], path) -> Iterator[tuple[int, dict]]:
    i = 0
    n = len(lines)
    while i < n:
        if not lines[i].strip():
            i += 1
            continue
        if not lines[i].startswith("ITEM: TIMESTEP"):
            raise ParseError(f"expected 'ITEM: TIMESTEP', got {lines[i]!r}", path, i + 1, 1)
        start = i + 1
        try:
            step = int(lines[i + 1].split()[0])
        except (IndexError, ValueError):
            raise ParseError("bad timestep value", path, i + 2, 1) from None
        i += 2
        frame = {"step": step, "box": None}
        while i < n and not lines[i].startswith("ITEM: TIMESTEP"):
            line = lines[i]
            if line.startswith("ITEM: NUMBER OF ATOMS"):
                try:
                    frame["natoms"] = int(lines[i + 1].split()[0])
                except (IndexError, ValueError):
                    raise ParseError("bad atom count", path, i + 2, 1) from None
                i += 2
            elif line.startswith("ITEM: BOX BOUNDS"):
                box = []
                for k in range(3):
                    parts = lines[i + 1 + k].split()
                    try:
                        lo, hi = float(parts[0]), float(parts[1])
                    except (IndexError, ValueError):
                        raise ParseError("bad box bounds", path, i + 2 + k, 1) from None
                    box.append((lo, hi))
                frame["box"] = box
                i += 4
            elif line.startswith("ITEM: ATOMS"):
                cols = line.split()[2:]
                natoms = frame.get("natoms")
                if natoms is None:
                    raise ParseError("ATOMS section before NUMBER OF ATOMS", path, i + 1, 1)
                rows = lines[i + 1 : i + 1 + natoms]
                if len(rows) < natoms or any(r.startswith("ITEM:") for r in rows):
                    raise ParseError(f"frame at step {step} has fewer than {natoms} atom rows", path, i + 1, 1)
                frame["cols"] = cols
                frame["rows"] = rows
                frame["row0"] = i + 2
                i += 1 + natoms
            else:
                raise ParseError(f"unexpected line {line!r}", path, i + 1, 1)
        if "rows" not in frame:
            raise ParseError(f"frame at step {step} has no ATOMS section", path, start, 1)
        yield frame


def _parse_dump(text: str, fs_per_step: float, path=None) -> Trajectory:
    if not fs_per_step > 0:
        raise ValueError("fs_per_step must be positive")
    lines = text.splitlines()
    steps, vel, pos = [], [], []
    ids0 = elements = box0 = None
    natoms0 = None
    for frame in _dump_frames(lines, path):
        cols = frame["cols"]
        if natoms0 is None:
            natoms0 = frame["natoms"]
        elif frame["natoms"] != natoms0:
            raise ParseError(
                f"inconsistent atom count: step {frame['step']} has {frame['natoms']}, expected {natoms0}",
                path, frame["row0"] - 1,
            )
        if steps and frame["step"] <= steps[-1]:
            raise ParseError(f"non-monotonic timestep {frame['step']} after {steps[-1]}", path, frame["row0"] - 2)
        for c in ("id", "vx", "vy", "vz"):
            if c not in cols:
                raise ParseError(f"dump lacks required column {c!r}", path, frame["row0"] - 1)
        try:
            data = [r.split() for r in frame["rows"]]
            arr_cols = {c: k for k, c in enumerate(cols)}
            ids = np.array([int(d[arr_cols["id"]]) for d in data])
            v = np.array([[float(d[arr_cols[c]]) for c in ("vx", "vy", "vz")] for d in data])
        except (ValueError, IndexError) as exc:
            raise ParseError(f"bad atom row in step {frame['step']}: {exc}", path, frame["row0"]) from None
        order = np.argsort(ids, kind="stable")
        ids = ids[order]
        if ids0 is None:
            ids0 = ids
            if "element" in arr_cols:
                elements = tuple(data[k][arr_cols["element"]] for k in order)
        elif not np.array_equal(ids, ids0):
            raise ParseError(f"atom ids change at step {frame['step']}", path, frame["row0"])
        vel.append(v[order])
        p = None
        for trio, scaled in ((("x", "y", "z"), False), (("xu", "yu", "zu"), False), (("xs", "ys", "zs"), True)):
            if all(c in arr_cols for c in trio):
                p = np.array([[float(d[arr_cols[c]]) for c in trio] for d in data])[order]
                if scaled:
                    if frame["box"] is None:
                        raise ParseError("scaled coordinates need BOX BOUNDS", path, frame["row0"])
                    lo = np.array([b[0] for b in frame["box"]])
                    hi = np.array([b[1] for b in frame["box"]])
                    p = lo + p * (hi - lo)
                break
        pos.append(p)
        steps.append(frame["step"])
        if box0 is None and frame["box"] is not None:
            box0 = tuple(hi - lo for lo, hi in frame["box"])
    if len(steps) < 2:
        raise ParseError("trajectory needs at least 2 frames", path)
    d = np.diff(steps)
    if np.any(d != d[0]):
        raise ParseError("timesteps are not evenly spaced", path)
    have_pos = all(p is not None for p in pos)
    return Trajectory(
        dt_sample=float(d[0]) * fs_per_step,
        velocities=np.stack(vel),
        positions=np.stack(pos) if have_pos else None,
        timesteps=np.array(steps),
        ids=ids0,
        box=box0,
        elements=elements,
    )


def parse_trajectory(path, fs_per_step: float) -> Trajectory:
    """Read a LAMMPS-style text dump.

    ``fs_per_step`` is the MD integration step in fs; the sampling interval
    is the (uniform) timestep spacing times this value.
    """
    path = Path(path)
    return _parse_dump(path.read_text(), fs_per_step, path)


def format_dump(traj: Trajectory) -> str:
    out = []
    has_pos = traj.positions is not None
    cols = ["id"]
    if traj.elements is not None:
        cols.append("element")
    if has_pos:
        cols += ["x", "y", "z"]
    cols += ["vx", "vy", "vz"]
    box = traj.box
    for f in range(traj.n_frames):
        out.append("ITEM: TIMESTEP")
        out.append(str(int(traj.timesteps[f])))
        out.append("ITEM: NUMBER OF ATOMS")
        out.append(str(traj.n_atoms))
        if box is not None:
            out.append("ITEM: BOX BOUNDS pp pp pp")
            out.extend(f"0.0 {L!r}" for L in box)
        out.append("ITEM: ATOMS " + " ".join(cols))
        v = traj.velocities[f].tolist()
        p = traj.positions[f].tolist() if has_pos else None
        for a in range(traj.n_atoms):
            row = [str(int(traj.ids[a]))]
            if traj.elements is not None:
                row.append(traj.elements[a])
            if has_pos:
                row += [repr(x) for x in p[a]]
            row += [repr(x) for x in v[a]]
            out.append(" ".join(row))
    return "\n".join(out) + "\n"


def write_trajectory(traj: Trajectory, path) -> None:
    Path(path).write_text(format_dump(traj))


# --------------------------------------------------------------------------
# NEMD bin profiles


@dataclass(frozen=True, eq=False)
class BinProfile:
    """Steady-state NEMD temperature profile.

    Temperatures of source/sink bins may be NaN (they are not recorded).
    ``dE_dt`` is the heat rate in kcal/mol/fs; ``bin_width`` in A;
    ``cross_section`` in A^2.
    """

    temperatures: np.ndarray
    source_bins: tuple[int, ...]
    sink_bins: tuple[int, ...]
    dE_dt: float
    bin_width: float
    cross_section: float
    name: str = "profile"

    def __post_init__(self):
        t = np.asarray(self.temperatures, dtype=float).ravel()
        n = t.size
        src = tuple(sorted(int(i) for i in self.source_bins))
        snk = tuple(sorted(int(i) for i in self.sink_bins))
        if not src or not snk:
            raise ValueError("source and sink bin sets must be nonempty")
        if len(set(src)) != len(src) or len(set(snk)) != len(snk):
            raise ValueError("duplicate bin index in source/sink set")
        for i in src + snk:
            if not 0 <= i < n:
                raise ValueError(f"bin index {i} outside [0, {n})")
        both = set(src) & set(snk)
        if both:
            raise ValueError(f"source and sink sets overlap at bins {sorted(both)}")
        special = set(src) | set(snk)
        for i in range(n):
            if i in special and np.isnan(t[i]):
                continue
            if not (math.isfinite(t[i]) and t[i] > 0):
                raise ValueError(f"bin {i} has non-positive or missing temperature {t[i]}")
        if not self.bin_width > 0:
            raise ValueError("bin width must be positive")
        if not self.cross_section > 0:
            raise ValueError("cross-section must be positive")
        if not math.isfinite(self.dE_dt):
            raise ValueError("heat rate must be finite")
        object.__setattr__(self, "temperatures", _frozen(t))
        object.__setattr__(self, "source_bins", src)
        object.__setattr__(self, "sink_bins", snk)
        object.__setattr__(self, "dE_dt", float(self.dE_dt))
        object.__setattr__(self, "bin_width", float(self.bin_width))
        object.__setattr__(self, "cross_section", float(self.cross_section))

    @property
    def n_bins(self) -> int:
        return self.temperatures.size

    @property
    def centers(self) -> np.ndarray:
        return (np.arange(self.n_bins) + 0.5) * self.bin_width

    def __eq__(self, other):
        if not isinstance(other, BinProfile):
            return NotImplemented
        return (
            np.array_equal(self.temperatures, other.temperatures, equal_nan=True)
            and self.source_bins == other.source_bins
            and self.sink_bins == other.sink_bins
            and self.dE_dt == other.dE_dt
            and self.bin_width == other.bin_width
            and self.cross_section == other.cross_section
        )

    __hash__ = None


def sidecar_path(csv_path) -> Path:
    return Path(csv_path).with_suffix(".json")


def parse_bin_profile(path, sidecar=None) -> BinProfile:
    """Read ``bin_index,temperature_K`` CSV plus its JSON sidecar.

    Sidecar keys: ``n_bins``, ``source_bins``, ``sink_bins``, either
    ``dE_dt`` (kcal/mol/fs) or ``n_atoms`` (+ optional ``k``), either
    ``bin_width`` or ``length`` (A), and either ``cross_section`` (A^2) or
    ``width`` and ``thickness`` (A).
    """
    from .nemd import HEAT_RATE_K, heat_rate

    path = Path(path)
    side = Path(sidecar) if sidecar is not None else sidecar_path(path)
    if not side.exists():
        raise ParseError(f"missing JSON sidecar {side.name}", path)
    try:
        meta = json.loads(side.read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"bad JSON: {exc.msg}", side, exc.lineno, exc.colno) from None

    def need(key):
        if key not in meta:
            raise ParseError(f"sidecar lacks {key!r}", side)
        return meta[key]

    n_bins = int(need("n_bins"))
    temps = np.full(n_bins, np.nan)
    seen = set()
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header[:2]] != ["bin_index", "temperature_K"]:
            raise ParseError("header must be 'bin_index,temperature_K'", path, 1, 1)
        for lineno, row in enumerate(reader, start=2):
            if not row or not "".join(row).strip():
                continue
            try:
                i = int(row[0])
                t = float(row[1])
            except (ValueError, IndexError):
                raise ParseError(f"bad row {row!r}", path, lineno, 1) from None
            if not 0 <= i < n_bins:
                raise ParseError(f"bin index {i} outside [0, {n_bins})", path, lineno, 1)
            if i in seen:
                raise ParseError(f"duplicate bin index {i}", path, lineno, 1)
            if not t > 0:
                raise ParseError(f"non-positive temperature {t} in bin {i}", path, lineno, len(row[0]) + 2)
            seen.add(i)
            temps[i] = t

    src = [int(i) for i in need("source_bins")]
    snk = [int(i) for i in need("sink_bins")]
    missing = sorted(set(range(n_bins)) - seen - set(src) - set(snk))
    if missing:
        raise ParseError(f"missing bins {missing[:10]}{'...' if len(missing) > 10 else ''}", path)

    if "dE_dt" in meta:
        dE_dt = float(meta["dE_dt"])
    elif "n_atoms" in meta:
        dE_dt = heat_rate(int(meta["n_atoms"]), float(meta.get("k", HEAT_RATE_K)))
    else:
        raise ParseError("sidecar needs dE_dt or n_atoms", side)
    if "bin_width" in meta:
        width = float(meta["bin_width"])
    elif "length" in meta:
        width = float(meta["length"]) / n_bins
    else:
        raise ParseError("sidecar needs bin_width or length", side)
    if "cross_section" in meta:
        area = float(meta["cross_section"])
    elif "width" in meta and "thickness" in meta:
        area = float(meta["width"]) * float(meta["thickness"])
    else:
        raise ParseError("sidecar needs cross_section or width+thickness", side)
    try:
        return BinProfile(temps, src, snk, dE_dt, width, area, name=meta.get("name", path.stem))
    except ValueError as exc:
        raise ParseError(str(exc), path) from None


def write_bin_profile(p: BinProfile, path) -> None:
    path = Path(path)
    rows = ["bin_index,temperature_K"]
    for i, t in enumerate(p.temperatures.tolist()):
        if math.isnan(t):
            continue
        rows.append(f"{i},{t!r}")
    path.write_text("\n".join(rows) + "\n")
    meta = {
        "name": p.name,
        "n_bins": p.n_bins,
        "source_bins": list(p.source_bins),
        "sink_bins": list(p.sink_bins),
        "dE_dt": p.dE_dt,
        "bin_width": p.bin_width,
        "cross_section": p.cross_section,
    }
    sidecar_path(path).write_text(json.dumps(meta, indent=2) + "\n")
