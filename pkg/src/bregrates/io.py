"""Plain-text CSV matrices and 16-bit binary PGM images.

CSV: one matrix row per line, comma separated, values written with
``repr`` so they round-trip exactly.  PGM: binary ``P5`` with maxval 65535,
big-endian samples, linearly mapped from ``[min, max]`` of the array (a
constant array maps to zero).  PGM is for looking at, not for reloading
exact values; the scaling is lost.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np


def write_csv_matrix(path, a):
    a = np.atleast_2d(np.asarray(a, dtype=np.float64))
    with open(path, "w") as fh:
        for row in a:
            fh.write(",".join(repr(float(v)) for v in row))
            fh.write("\n")


def read_csv_matrix(path) -> np.ndarray:
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line:
                rows.append([float(v) for v in line.split(",")])
    if not rows:
        raise ValueError(f"{path}: empty matrix file")
    if len({len(r) for r in rows}) != 1:
        raise ValueError(f"{path}: ragged rows")
    return np.asarray(rows, dtype=np.float64)


def write_pgm(path, a):
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2:
        raise ValueError("PGM needs a 2-D array")
    lo, hi = float(a.min()), float(a.max())
    scaled = np.zeros_like(a) if hi <= lo else (a - lo) / (hi - lo)
    data = np.round(scaled * 65535).astype(">u2")
    with open(path, "wb") as fh:
        fh.write(f"P5\n{a.shape[1]} {a.shape[0]}\n65535\n".encode("ascii"))
        fh.write(data.tobytes())


def read_pgm(path) -> np.ndarray:
    """Read an 8- or 16-bit binary PGM into floats in ``[0, 1]``."""
    raw = Path(path).read_bytes()
    tokens, pos = [], 0
    while len(tokens) < 4:
        while raw[pos : pos + 1].isspace():
            pos += 1
        if raw[pos : pos + 1] == b"#":
            while raw[pos : pos + 1] not in (b"\n", b""):
                pos += 1
            continue
        start = pos
        while not raw[pos : pos + 1].isspace():
            pos += 1
        tokens.append(raw[start:pos].decode("ascii"))
    pos += 1
    magic, width, height, maxval = tokens[0], int(tokens[1]), int(tokens[2]), int(tokens[3])
    if magic != "P5":
        raise ValueError(f"{path}: only binary P5 PGM is supported")
    dtype = ">u2" if maxval > 255 else "u1"
    data = np.frombuffer(raw, dtype=dtype, count=width * height, offset=pos)
    return data.reshape(height, width).astype(np.float64) / maxval


def read_image(path) -> np.ndarray:
    """Load a CSV matrix or PGM file, dispatching on the extension."""
    path = Path(path)
    if path.suffix.lower() == ".pgm":
        return read_pgm(path)
    return read_csv_matrix(path)
