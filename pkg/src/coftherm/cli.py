"""``coftherm`` command-line entry point.

Every subcommand validates its inputs before computing, writes its
artifacts plus ``run.json`` (the resolved options) into ``--out``, and
prints its primary result to stdout. Failures print a JSON object with
``error`` and ``message`` to stderr and exit nonzero.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .bondgraph import DEFAULT_SCALE

log = logging.getLogger("coftherm")

EXIT_RUNTIME = 1
EXIT_USAGE = 2


class UsageError(Exception):
    """Bad flags or inputs detected before any computation."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# ---------------------------------------------------------------- helpers


def _g6(x) -> str:
    x = float(x)
    return "" if math.isnan(x) else f"{x:.6g}"


def _csv(header, rows) -> str:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(v if isinstance(v, str) else _g6(v) for v in row))
    return "\n".join(lines) + "\n"


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, Path):
        return str(o)
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def _dumps(obj) -> str:
    return json.dumps(_clean(obj), indent=2, default=_json_default, allow_nan=False) + "\n"


def _clean(obj):
    """NaN/inf become null so the JSON stays standard."""
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    return obj


def _existing_file(p: str) -> Path:
    path = Path(p)
    if not path.is_file():
        raise UsageError(f"input file not found: {p}")
    return path.resolve()


def _existing_dir(p: str) -> Path:
    path = Path(p)
    if not path.is_dir():
        raise UsageError(f"input directory not found: {p}")
    return path.resolve()


def _prepare_out(p: str) -> Path:
    out = Path(p)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise UsageError(f"cannot create output directory {p}: {exc.strerror or exc}") from None
    if not out.is_dir() or not os.access(out, os.W_OK | os.X_OK):
        raise UsageError(f"output directory is not writable: {p}")
    return out


class Run:
    """Collects artifacts for one invocation and writes the run manifest."""

    def __init__(self, command: str, out: Path, options: dict):
        self.command = command
        self.out = out
        self.options = options
        self.artifacts: list[str] = []

    def write(self, name: str, text: str) -> Path:
        path = self.out / name
        path.write_text(text)
        self.artifacts.append(name)
        return path

    def finish(self):
        manifest = {
            "tool": "coftherm",
            "version": __version__,
            "command": self.command,
            "options": self.options,
            "artifacts": sorted(self.artifacts),
        }
        (self.out / "run.json").write_text(_dumps(manifest))


# ---------------------------------------------------------------- commands


def cmd_dmr(a, run: Run):
    from .bondgraph import build_bond_graph
    from .dangling import classify_branches
    from .structio import format_xyz, parse_structure

    s = parse_structure(a.structure, a.format)
    g = build_bond_graph(s, a.scale)
    lab = classify_branches(g, s, max_ring=a.max_ring, exclude_h=a.exclude_h)
    result = {"name": s.name, **lab.to_dict(), "exclude_h": a.exclude_h}
    if a.emit_graph == "dot":
        run.write("bonds.dot", g.to_dot(s.elements))
    elif a.emit_graph == "csv":
        run.write("bonds.csv", g.to_csv())
    if a.xyz:
        run.write("labels.xyz", format_xyz(s, {"branch": [x.tag for x in lab.labels]}))
    text = _dumps(result)
    run.write("dmr.json", text)
    return text


def cmd_kappa(a, run: Run):
    from .nemd import extract_kappa
    from .structio import parse_bin_profile

    p = parse_bin_profile(a.profile, a.sidecar)
    res = extract_kappa(p, a.trim)
    text = _dumps({"name": p.name, **res.to_dict()})
    run.write("kappa.json", text)
    return text


def cmd_kappa_batch(a, run: Run):
    from .nemd import average_kappa, extract_kappa
    from .pipeline import read_manifest
    from .structio import parse_bin_profile

    rows = []
    for e in read_manifest(a.manifest):
        kx = ky = mean = ratio = math.nan
        err = ""
        try:
            kx = extract_kappa(parse_bin_profile(e["profile_x"]), a.trim).kappa
            ky = extract_kappa(parse_bin_profile(e["profile_y"]), a.trim).kappa
            mean, ratio = average_kappa(kx, ky)
        except Exception as exc:
            err = f"{type(exc).__name__}: {exc}".replace(",", ";").replace("\n", " ")
            log.warning("%s: %s", e.get("name"), err)
        rows.append((e.get("name", ""), kx, ky, mean, ratio, err))
    text = _csv(("name", "kx", "ky", "mean", "ratio", "error"), rows)
    run.write("kappa_batch.csv", text)
    return text


def cmd_vdos(a, run: Run):
    from .bondgraph import build_bond_graph
    from .dangling import classify_branches
    from .pipeline import branch_tags
    from .spectral import element_branch_groups, overlap_s, spectral_profile
    from .structio import parse_structure, parse_trajectory

    s = parse_structure(a.structure)
    t = parse_trajectory(a.trajectory, a.fs_per_step)
    if t.n_atoms % s.n_atoms:
        raise ValueError(f"trajectory has {t.n_atoms} atoms, not a multiple of the structure's {s.n_atoms}")
    reps = t.n_atoms // s.n_atoms
    tags = None
    if a.labels == "from-dmr":
        tags = branch_tags(classify_branches(build_bond_graph(s, a.scale), s).labels) * reps
    groups = element_branch_groups(s.elements * reps, tags)
    window = None if a.window == "none" else a.window
    renorm = None if a.renorm == "none" else a.renorm
    prof = spectral_profile(t, groups, max_lag=a.max_lag, window=window, pad=a.pad, renorm=renorm)
    keys = list(prof.groups)
    rows = [(f, *(prof.groups[k][i] for k in keys)) for i, f in enumerate(prof.freq)]
    run.write("vdos.csv", _csv(["freq_THz"] + keys, rows))
    s_val = overlap_s(prof) if len(keys) >= 2 else None
    text = _dumps({"S": s_val, "groups": {k: len(v) for k, v in groups.items()}, "n_frames": t.n_frames})
    run.write("vdos.json", text)
    return text


def _psed_rows(m, vals):
    return [(q, *row) for q, row in zip(m.q.tolist(), vals.tolist())]


def cmd_psed(a, run: Run):
    from .spectral import emit_psed_plotdata, psed
    from .structio import parse_structure, parse_trajectory

    window = None if a.window == "none" else a.window
    s = parse_structure(a.structure)
    m = psed(parse_trajectory(a.trajectory, a.fs_per_step), s, a.cells, a.axis, window)
    pair = None
    if a.pair_traj:
        ps = parse_structure(a.pair_structure) if a.pair_structure else s
        pair = psed(parse_trajectory(a.pair_traj, a.fs_per_step), ps, a.cells, a.axis, window)
    logs, bounds = emit_psed_plotdata(m, pair, a.percentile)
    header = ["q_inv_A"] + [_g6(f) for f in m.freq]
    run.write("psed.csv", _csv(header, _psed_rows(m, m.phi)))
    run.write("psed_log10.csv", _csv(header, _psed_rows(m, np.where(np.isfinite(logs[0]), logs[0], np.nan))))
    if pair is not None:
        ph = ["q_inv_A"] + [_g6(f) for f in pair.freq]
        run.write("psed_pair.csv", _csv(ph, _psed_rows(pair, pair.phi)))
        run.write("psed_pair_log10.csv", _csv(ph, _psed_rows(pair, np.where(np.isfinite(logs[1]), logs[1], np.nan))))
    info = {
        "lower": bounds.lower,
        "upper": bounds.upper,
        "percentile": a.percentile,
        "scale": "log10",
        "ridge_THz": m.ridge().tolist(),
        "q_inv_A": m.q.tolist(),
    }
    text = _dumps(info)
    run.write("psed_bounds.json", text)
    return text


def cmd_attn(a, run: Run):
    from .attention import load_attention, rollout
    from .structio import format_xyz, parse_structure

    s = parse_structure(a.structure)
    stack = load_attention(a.stack, n_atoms=s.n_atoms)
    scores = rollout(stack, a.residual, a.reduction)
    run.write("attention.xyz", format_xyz(s, {"attention": [float(x) for x in scores]}))
    text = _dumps({"name": s.name, "scores": scores.tolist(), "sum": float(scores.sum())})
    run.write("attention.json", text)
    return text


def cmd_features(a, run: Run):
    from .pipeline import build_feature_table

    table = build_feature_table(a.directory, a.scale)
    keys = list(table.columns)
    rows = [(n, *(table.columns[k][i] for k in keys)) for i, n in enumerate(table.names)]
    text = _csv(["name"] + keys, rows)
    run.write("features.csv", text)
    return text


def cmd_rf_cv(a, run: Run):
    from .mlkit import DESCRIPTORS, ForestConfig, kfold_cv, read_feature_table

    table = read_feature_table(a.table)
    if a.features:
        feats = [f.strip() for f in a.features.split(",") if f.strip()]
    else:
        feats = [c for c in DESCRIPTORS if table.has(c)]
    feats = [f for f in feats if f not in set(a.exclude)]
    if not feats:
        raise UsageError("no features left to model")
    X, y, names = table.matrix(feats, a.target)
    cfg = ForestConfig(n_trees=a.n_trees, mtry=a.mtry, min_leaf=a.min_leaf, seed=a.seed)
    res = kfold_cv(X, y, a.k, cfg, n_repeats=a.repeats)
    out = res.to_dict(names)
    out.update({"k": a.k, "seed": a.seed, "n_rows": int(len(y)), "features": list(names)})
    run.write("importance_gini.csv", _csv(("feature", "importance"), zip(names, res.gini.tolist())))
    run.write("importance_permutation.csv", _csv(("feature", "importance"), zip(names, res.pfi.tolist())))
    text = _dumps(out)
    run.write("rf_cv.json", text)
    return text


def cmd_pipeline(a, run: Run):
    from .pipeline import dataset_csv, read_manifest, run_pipeline

    entries = read_manifest(a.manifest)
    rows = run_pipeline(entries, a.scale, a.trim, a.fs_per_step, a.workers)
    failed = [r for r in rows if r.error]
    if failed:
        log.warning("%d of %d entries failed; see the error column", len(failed), len(rows))
    text = dataset_csv(rows)
    run.write("dataset.csv", text)
    return text


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--out", default="coftherm-out", help="output directory (created if missing)")
    common.add_argument("-q", "--quiet", action="store_true", help="do not echo the result to stdout")

    p = _Parser(prog="coftherm", description="COF thermal-transport analysis toolkit")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)

    d = sub.add_parser("dmr", parents=[common], help="dangling-mass ratio of a unit cell")
    d.add_argument("structure")
    d.add_argument("--format", choices=("cif", "xyz"), help="override format detection")
    d.add_argument("--scale", type=float, default=DEFAULT_SCALE, help="bond cutoff = scale x (r_i + r_j)")
    d.add_argument("--max-ring", type=int, default=8)
    d.add_argument("--exclude-h", action="store_true", help="leave dangling H out of the DMR numerator")
    d.add_argument("--emit-graph", choices=("dot", "csv"))
    d.add_argument("--xyz", action="store_true", help="write extended XYZ with a per-atom branch column")

    k = sub.add_parser("kappa", parents=[common], help="conductivity from a binned NEMD profile")
    k.add_argument("profile")
    k.add_argument("--sidecar", help="metadata JSON (default: <profile stem>.json)")
    k.add_argument("--trim", type=int, default=0, help="bins dropped next to each source/sink")

    kb = sub.add_parser("kappa-batch", parents=[common], help="kx, ky, mean and ratio for many COFs")
    kb.add_argument("manifest", help="CSV with name, profile_x, profile_y")
    kb.add_argument("--trim", type=int, default=0)

    v = sub.add_parser("vdos", parents=[common], help="per-group VDOS and overlap metric S")
    v.add_argument("trajectory")
    v.add_argument("structure")
    v.add_argument("--fs-per-step", type=float, required=True, help="MD timestep in fs")
    v.add_argument("--labels", choices=("from-dmr", "element"), default="from-dmr")
    v.add_argument("--scale", type=float, default=DEFAULT_SCALE)
    v.add_argument("--max-lag", type=int)
    v.add_argument("--window", choices=("none", "hann"), default="none")
    v.add_argument("--pad", type=int, default=1, help="zero-padding factor")
    v.add_argument("--renorm", choices=("none", "area"), default="none")

    ps = sub.add_parser("psed", parents=[common], help="phonon spectral energy density map")
    ps.add_argument("trajectory")
    ps.add_argument("structure", help="unit cell")
    ps.add_argument("--fs-per-step", type=float, required=True)
    ps.add_argument("--axis", choices=("x", "y", "z"), default="x")
    ps.add_argument("--cells", type=int, required=True, help="unit cells along the axis")
    ps.add_argument("--window", choices=("none", "hann"), default="none")
    ps.add_argument("--percentile", type=float, default=99.0, help="upper colour bound percentile")
    ps.add_argument("--pair-traj", help="second trajectory sharing the colour scale")
    ps.add_argument("--pair-structure", help="unit cell for --pair-traj (default: same)")

    at = sub.add_parser("attn", parents=[common], help="attention rollout per atom")
    at.add_argument("stack")
    at.add_argument("--structure", required=True)
    at.add_argument("--residual", type=float, default=0.5, help="identity mixing weight in [0, 1)")
    at.add_argument("--reduction", choices=("row", "column"), default="row")

    f = sub.add_parser("features", parents=[common], help="descriptor table from a directory of structures")
    f.add_argument("directory")
    f.add_argument("--scale", type=float, default=DEFAULT_SCALE)

    r = sub.add_parser("rf-cv", parents=[common], help="random-forest k-fold CV and importances")
    r.add_argument("table")
    r.add_argument("--k", type=int, default=10)
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--n-trees", type=int, default=100)
    r.add_argument("--mtry", type=int)
    r.add_argument("--min-leaf", type=int, default=1)
    r.add_argument("--repeats", type=int, default=5, help="permutation repeats per feature")
    r.add_argument("--features", help="comma-separated feature columns")
    r.add_argument("--exclude", action="append", default=[], help="drop a feature (repeatable)")
    r.add_argument("--target", default="kappa")

    pl = sub.add_parser("pipeline", parents=[common], help="assemble the per-COF dataset")
    pl.add_argument("manifest", help="CSV: name, structure, profile_x, profile_y[, trajectory, fs_per_step]")
    pl.add_argument("--scale", type=float, default=DEFAULT_SCALE)
    pl.add_argument("--trim", type=int, default=0)
    pl.add_argument("--fs-per-step", type=float, help="default when the manifest has no fs_per_step")
    pl.add_argument("--workers", type=int, help="worker threads (default: COFTHERM_THREADS or 1)")
    return p


COMMANDS = {
    "dmr": (cmd_dmr, ("structure",), ()),
    "kappa": (cmd_kappa, ("profile",), ()),
    "kappa-batch": (cmd_kappa_batch, ("manifest",), ()),
    "vdos": (cmd_vdos, ("trajectory", "structure"), ()),
    "psed": (cmd_psed, ("trajectory", "structure"), ("pair_traj", "pair_structure")),
    "attn": (cmd_attn, ("stack", "structure"), ()),
    "features": (cmd_features, (), ()),
    "rf-cv": (cmd_rf_cv, ("table",), ()),
    "pipeline": (cmd_pipeline, ("manifest",), ()),
}


def _validate(a) -> None:
    _, required, optional = COMMANDS[a.command]
    for key in required + optional:
        val = getattr(a, key, None)
        if val is not None:
            setattr(a, key, _existing_file(val))
    if a.command == "features":
        a.directory = _existing_dir(a.directory)
    if a.command == "kappa" and a.sidecar:
        a.sidecar = _existing_file(a.sidecar)
    for key in ("scale",):
        if hasattr(a, key) and not getattr(a, key) > 0:
            raise UsageError(f"--{key} must be positive")
    if getattr(a, "trim", 0) < 0:
        raise UsageError("--trim must be non-negative")
    if a.command in ("vdos", "psed", "pipeline") and a.fs_per_step is not None and not a.fs_per_step > 0:
        raise UsageError("--fs-per-step must be positive")
    if a.command == "psed" and a.pair_structure and not a.pair_traj:
        raise UsageError("--pair-structure given without --pair-traj")
    if a.command == "attn" and not 0 <= a.residual < 1:
        raise UsageError("--residual must lie in [0, 1)")
    if a.command == "rf-cv":
        if a.features:
            listed = {f.strip() for f in a.features.split(",")}
            clash = sorted(listed & set(a.exclude))
            if clash:
                raise UsageError(f"conflicting flags: {clash} both in --features and --exclude")
        if a.k < 2:
            raise UsageError("--k must be at least 2")
        if a.n_trees < 1:
            raise UsageError("--n-trees must be at least 1")
    if a.command == "pipeline" and a.workers is not None and a.workers < 1:
        raise UsageError("--workers must be at least 1")


def _options(a) -> dict:
    skip = {"out", "quiet"}
    return {k: (str(v) if isinstance(v, Path) else v) for k, v in sorted(vars(a).items()) if k not in skip}


def _fail(exc: BaseException, code: int) -> int:
    sys.stderr.write(json.dumps({"error": type(exc).__name__, "message": str(exc), "exit_code": code}) + "\n")
    return code


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="coftherm: %(levelname)s: %(message)s", stream=sys.stderr)
    parser = build_parser()
    try:
        a = parser.parse_args(argv)
        if a.command is None:
            raise UsageError("no subcommand given; see coftherm --help")
        _validate(a)
        out = _prepare_out(a.out)
    except UsageError as exc:
        return _fail(exc, EXIT_USAGE)

    run = Run(a.command, out, _options(a))
    func = COMMANDS[a.command][0]
    try:
        text = func(a, run)
    except UsageError as exc:
        return _fail(exc, EXIT_USAGE)
    except Exception as exc:
        return _fail(exc, EXIT_RUNTIME)
    finally:
        run.finish()
    if not a.quiet:
        sys.stdout.write(text)
    return 0


if __name__ == "__main__":
    sys.exit(main())
