"""Binary field snapshots.

Layout (little-endian): magic ``HBL1``; u32 version, n, N, r, p, q,
component_count; then each component in lexicographic multi-index order as
``N^(2n) * r^2`` pairs ``(f64 re, f64 im)``, row-major over the grid and then
the matrix entries. Metrics are (0,0) snapshots with a JSON sidecar recording
the background level(s) and conventions.
"""

from __future__ import annotations

import json
import os
import struct

import numpy as np

from .errors import SnapshotError
from .geometry import Background, EndForm

MAGIC = b"HBL1"
VERSION = 1
_HEADER = struct.Struct("<4s7I")
CONVENTION = "h = H0^-1 H; i F_H0 = pi m sum_a i dz^a ^ dzbar^a; i dz ^ dzbar = 2 dx ^ dy; unit lattice"


def save_form(path, bg: Background, form: EndForm):
    keys = sorted(form.comps)
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, bg.n, bg.N, form.rank, form.p, form.q, len(keys)))
        for key in keys:
            v = np.broadcast_to(form.comps[key], bg.grid_shape + (form.rank, form.rank))
            fh.write(np.ascontiguousarray(v, dtype="<c16").tobytes())


def load_form(path):
    """Return ``(n, N, form)``; raises :class:`SnapshotError` on any inconsistency."""
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise SnapshotError(f"cannot read snapshot {path}: {exc}") from exc
    if len(raw) < _HEADER.size:
        raise SnapshotError(f"{path}: truncated header")
    magic, version, n, N, r, p, q, count = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise SnapshotError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise SnapshotError(f"{path}: unsupported version {version}")
    if not (1 <= n <= 3 and N >= 2 and r >= 1 and 0 <= p <= n and 0 <= q <= n):
        raise SnapshotError(f"{path}: implausible header n={n} N={N} r={r} p={p} q={q}")
    from itertools import combinations
    from math import comb

    if count != comb(n, p) * comb(n, q):
        raise SnapshotError(f"{path}: component count {count} does not match bidegree ({p},{q})")
    per = N ** (2 * n) * r * r
    expected = _HEADER.size + count * per * 16
    if len(raw) != expected:
        raise SnapshotError(f"{path}: size {len(raw)} != expected {expected}")
    data = np.frombuffer(raw, dtype="<c16", offset=_HEADER.size).reshape((count,) + (N,) * (2 * n) + (r, r))
    if not np.all(np.isfinite(data)):
        raise SnapshotError(f"{path}: non-finite values")
    keys = sorted((I, J) for I in combinations(range(n), p) for J in combinations(range(n), q))
    comps = {key: data[i].astype(complex) for i, key in enumerate(keys)}
    return n, N, EndForm(n, p, q, comps)


def save_metric(path, H):
    bg = H.bg
    save_form(path, bg, EndForm.scalar(bg.n, H.h))
    with open(str(path) + ".json", "w") as fh:
        json.dump({"levels": list(bg.levels), "m": bg.m, "kaehler": _kaehler_json(bg), "convention": CONVENTION}, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _kaehler_json(bg):
    g = np.asarray(bg.kaehler)
    return [[[float(x.real), float(x.imag)] for x in row] for row in g]


def load_metric(path, bg: Background | None = None):
    """Load a metric; the background comes from the sidecar unless given."""
    from .bundle import Metric

    n, N, form = load_form(path)
    if (form.p, form.q) != (0, 0):
        raise SnapshotError(f"{path}: metric snapshots must be (0,0) forms")
    side = str(path) + ".json"
    meta = None
    if os.path.exists(side):
        try:
            with open(side) as fh:
                meta = json.load(fh)
        except (OSError, ValueError) as exc:
            raise SnapshotError(f"{side}: unreadable sidecar: {exc}") from exc
    if bg is None:
        if meta is None:
            raise SnapshotError(f"{path}: missing sidecar and no background given")
        levels = meta.get("levels", [meta.get("m", 0)])
        m = levels[0] if len(set(levels)) == 1 else tuple(levels)
        g = np.array([[complex(*x) for x in row] for row in meta["kaehler"]])
        bg = Background(n, N, form.rank, m, g)
    elif (bg.n, bg.N, bg.r) != (n, N, form.rank):
        raise SnapshotError(f"{path}: snapshot grid (n={n}, N={N}, r={form.rank}) does not match the background")
    return Metric(bg, form.comps[((), ())])
