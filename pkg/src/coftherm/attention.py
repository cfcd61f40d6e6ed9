"""Per-atom attention scores from exported transformer attention tensors.

Container layout (little endian)::

    bytes 0-3    magic b"ATNS"
    bytes 4-7    uint32 format version (1)
    bytes 8-11   uint32 header length H in bytes
    bytes 12..   H bytes of UTF-8 JSON:
                 {"layers": L, "heads": NH, "tokens": T, "token_map": [...]}
    then         L*NH*T*T float32 values, row-major [layer, head, query, key]

``token_map`` has one entry per token: a non-negative integer is an atom
index, ``"patch"`` marks a global-feature patch and ``"agg"`` the single
aggregate (class) token.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

MAGIC = b"ATNS"
VERSION = 1
_PREFIX = struct.Struct("<4sII")
AGG = "agg"
PATCH = "patch"
LOAD_ROW_TOL = 1e-3


class AttentionError(ValueError):
    pass


def _check_token_map(token_map, n_tokens: int) -> tuple:
    if len(token_map) != n_tokens:
        raise AttentionError(f"token map has {len(token_map)} entries for {n_tokens} tokens")
    tm = []
    atoms = []
    n_agg = 0
    for entry in token_map:
        if isinstance(entry, (int, np.integer)) and not isinstance(entry, bool):
            if entry < 0:
                raise AttentionError(f"negative atom index {entry} in token map")
            atoms.append(int(entry))
            tm.append(int(entry))
        elif entry == AGG:
            n_agg += 1
            tm.append(AGG)
        elif entry == PATCH:
            tm.append(PATCH)
        else:
            raise AttentionError(f"unrecognised token map entry {entry!r}")
    if n_agg != 1:
        raise AttentionError(f"token map needs exactly one aggregate token, found {n_agg}")
    if len(set(atoms)) != len(atoms):
        raise AttentionError("an atom index appears more than once in the token map")
    if atoms and sorted(atoms) != list(range(len(atoms))):
        raise AttentionError("atom tokens must cover atom indices 0..n-1")
    return tuple(tm)


@dataclass(frozen=True, eq=False)
class AttentionStack:
    """Row-stochastic attention matrices with shape (layers, heads, tokens, tokens)."""

    weights: np.ndarray
    token_map: tuple
    row_tol: float = LOAD_ROW_TOL

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float32)
        if w.ndim != 4 or w.shape[2] != w.shape[3]:
            raise AttentionError(f"weights must be (layers, heads, T, T), got {w.shape}")
        if not np.all(np.isfinite(w)) or np.any(w < 0):
            raise AttentionError("attention weights must be finite and non-negative")
        sums = w.astype(np.float64).sum(axis=-1)
        dev = np.abs(sums - 1.0)
        if dev.size and dev.max() > self.row_tol:
            l, h, r = np.unravel_index(np.argmax(dev), dev.shape)
            raise AttentionError(
                f"row {r} of layer {l}, head {h} sums to {sums[l, h, r]:.6f} (tolerance {self.row_tol})"
            )
        w = w.copy()
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "token_map", _check_token_map(self.token_map, w.shape[2]))

    @property
    def n_layers(self) -> int:
        return self.weights.shape[0]

    @property
    def n_heads(self) -> int:
        return self.weights.shape[1]

    @property
    def n_tokens(self) -> int:
        return self.weights.shape[2]

    @property
    def atom_tokens(self) -> list[int]:
        """Token positions ordered by atom index."""
        pairs = sorted((e, k) for k, e in enumerate(self.token_map) if isinstance(e, int))
        return [k for _, k in pairs]

    @property
    def n_atoms(self) -> int:
        return len(self.atom_tokens)

    @property
    def agg_token(self) -> int:
        return self.token_map.index(AGG)

    def __eq__(self, other):
        if not isinstance(other, AttentionStack):
            return NotImplemented
        return self.token_map == other.token_map and np.array_equal(self.weights, other.weights)

    __hash__ = None


def dumps_attention(a: AttentionStack) -> bytes:
    header = json.dumps(
        {"layers": a.n_layers, "heads": a.n_heads, "tokens": a.n_tokens, "token_map": list(a.token_map)},
        separators=(",", ":"),
    ).encode()
    body = np.ascontiguousarray(a.weights, dtype="<f4").tobytes()
    return _PREFIX.pack(MAGIC, VERSION, len(header)) + header + body


def loads_attention(buf: bytes, n_atoms: int | None = None) -> AttentionStack:
    if len(buf) < _PREFIX.size:
        raise AttentionError("file too short for an attention container")
    magic, version, hlen = _PREFIX.unpack_from(buf)
    if magic != MAGIC:
        raise AttentionError(f"bad magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise AttentionError(f"unsupported container version {version}")
    start = _PREFIX.size
    try:
        header = json.loads(buf[start : start + hlen].decode())
        L, H, T = int(header["layers"]), int(header["heads"]), int(header["tokens"])
        token_map = header["token_map"]
    except (UnicodeDecodeError, json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise AttentionError(f"bad container header: {exc}") from None
    count = L * H * T * T
    body = buf[start + hlen :]
    if len(body) != 4 * count:
        raise AttentionError(f"expected {4 * count} bytes of weights, found {len(body)}")
    w = np.frombuffer(body, dtype="<f4").reshape(L, H, T, T)
    stack = AttentionStack(w, tuple(token_map))
    if n_atoms is not None and stack.n_atoms != n_atoms:
        raise AttentionError(f"token map holds {stack.n_atoms} atoms, structure has {n_atoms}")
    return stack


def load_attention(path, n_atoms: int | None = None) -> AttentionStack:
    return loads_attention(Path(path).read_bytes(), n_atoms)


def write_attention(a: AttentionStack, path) -> None:
    Path(path).write_bytes(dumps_attention(a))


def layer_matrices(a: AttentionStack, residual_weight: float = 0.5) -> list[np.ndarray]:
    """Head-averaged, residual-mixed, row-renormalized matrix per layer (float64)."""
    if not 0.0 <= residual_weight < 1.0:
        raise ValueError(f"residual_weight must lie in [0, 1), got {residual_weight}")
    eye = np.eye(a.n_tokens)
    out = []
    for layer in a.weights.astype(np.float64):
        m = (1.0 - residual_weight) * layer.mean(axis=0) + residual_weight * eye
        out.append(m / m.sum(axis=1, keepdims=True))
    return out


def rollout(a: AttentionStack, residual_weight: float = 0.5, reduction: str = "row") -> np.ndarray:
    """Per-atom relevance from the joint attention across all layers.

    The joint matrix is the product of the per-layer matrices, last layer on
    the left. ``reduction='row'`` reads the aggregate token's row;
    ``'column'`` sums each atom's column over all query tokens. Scores are
    restricted to atom tokens and normalized to sum to one, indexed by atom.
    """
    if AGG not in a.token_map:
        raise AttentionError("no aggregate token in the token map")
    if a.n_atoms == 0:
        raise AttentionError("token map has no atom tokens")
    joint = np.eye(a.n_tokens)
    for m in layer_matrices(a, residual_weight):
        joint = m @ joint
    atoms = a.atom_tokens
    if reduction == "row":
        raw = joint[a.agg_token, atoms]
    elif reduction == "column":
        raw = joint[:, atoms].sum(axis=0)
    else:
        raise ValueError(f"reduction must be 'row' or 'column', got {reduction!r}")
    total = raw.sum()
    if not total > 0:
        raise AttentionError("aggregate token assigns no attention to atoms; scores undefined")
    return raw / total
