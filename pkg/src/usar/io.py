"""On-disk formats.

All binary formats are little-endian with a 4-byte magic:

* forward model ``USAR``: ``u32 version, u64 N, u64 M, f64 kappa`` then
  ``N*M`` complex entries as interleaved ``f64`` (re, im), row-major;
* network checkpoint: a forward-model block for F, a block of the same
  layout for Q (``kappa = 0``), then ``f64 tau, f64 alpha, f64 lambda,
  u8 penalty (1 = l1, 0 = l0), u32 layers``;
* measurement ``UMEA``: ``u64 N, f64 snr_db, u64 seed`` then ``N`` complex
  ``f64`` pairs. Noise-free data store ``snr_db = +inf``; a missing seed is
  stored as ``2**64 - 1``.

Scenes are plain text: ``rows cols`` on the first line, then one image row
per line.
"""

import csv
import struct

import numpy as np

from .encoder import EncoderParams, Penalty
from .geometry import ForwardModel
from .scenes import Measurement, Scene

__all__ = [
    "FORMAT_VERSION",
    "write_forward_model",
    "read_forward_model",
    "write_checkpoint",
    "read_checkpoint",
    "write_measurement",
    "read_measurement",
    "write_scene",
    "read_scene",
    "export_image",
    "read_image_csv",
    "write_csv",
]

FORMAT_VERSION = 1
_MATRIX_HEADER = struct.Struct("<4sIQQd")
_SCALARS = struct.Struct("<dddBI")
_MEAS_HEADER = struct.Struct("<4sQdQ")
_NO_SEED = 2**64 - 1
_CDT = np.dtype("<c16")


def _write_matrix(fh, A, kappa):
    A = np.ascontiguousarray(A, dtype=np.complex128)
    fh.write(_MATRIX_HEADER.pack(b"USAR", FORMAT_VERSION, A.shape[0], A.shape[1], float(kappa)))
    fh.write(A.astype(_CDT, copy=False).tobytes(order="C"))


def _read_exact(fh, n):
    buf = fh.read(n)
    if len(buf) != n:
        raise ValueError(f"truncated file: wanted {n} bytes, got {len(buf)}")
    return buf


def _read_matrix(fh):
    magic, version, N, M, kappa = _MATRIX_HEADER.unpack(_read_exact(fh, _MATRIX_HEADER.size))
    if magic != b"USAR":
        raise ValueError(f"bad magic {magic!r}, expected b'USAR'")
    if version != FORMAT_VERSION:
        raise ValueError(f"unsupported format version {version}")
    raw = _read_exact(fh, N * M * 16)
    A = np.frombuffer(raw, dtype=_CDT).astype(np.complex128).reshape(N, M)
    return A, kappa


def write_forward_model(path, F):
    with open(path, "wb") as fh:
        _write_matrix(fh, F.entries, F.kappa)


def read_forward_model(path):
    with open(path, "rb") as fh:
        A, kappa = _read_matrix(fh)
    return ForwardModel(A, kappa)


def write_checkpoint(path, params):
    with open(path, "wb") as fh:
        _write_matrix(fh, params.F.entries, params.F.kappa)
        _write_matrix(fh, params.Q, 0.0)
        fh.write(_SCALARS.pack(params.tau, params.alpha, params.lam,
                               1 if params.penalty is Penalty.L1 else 0, params.layers))


def read_checkpoint(path, c=1e-5):
    with open(path, "rb") as fh:
        F, kappa = _read_matrix(fh)
        Q, _ = _read_matrix(fh)
        tau, alpha, lam, pen, layers = _SCALARS.unpack(_read_exact(fh, _SCALARS.size))
    if pen not in (0, 1):
        raise ValueError(f"bad penalty code {pen}")
    penalty = Penalty.L1 if pen == 1 else Penalty.L0
    return EncoderParams(ForwardModel(F, kappa), Q, tau, alpha, penalty, layers, c, lam)


def write_measurement(path, m):
    snr = np.inf if m.snr_db is None else float(m.snr_db)
    seed = _NO_SEED if m.seed is None else int(m.seed)
    with open(path, "wb") as fh:
        fh.write(_MEAS_HEADER.pack(b"UMEA", m.N, snr, seed))
        fh.write(m.data.astype(_CDT, copy=False).tobytes())


def read_measurement(path):
    with open(path, "rb") as fh:
        magic, N, snr, seed = _MEAS_HEADER.unpack(_read_exact(fh, _MEAS_HEADER.size))
        if magic != b"UMEA":
            raise ValueError(f"bad magic {magic!r}, expected b'UMEA'")
        data = np.frombuffer(_read_exact(fh, N * 16), dtype=_CDT).astype(np.complex128)
    return Measurement(data, None if np.isposinf(snr) else snr,
                       None if seed == _NO_SEED else seed)


def write_scene(path, scene):
    rows, cols = scene.grid
    img = scene.image
    with open(path, "w") as fh:
        fh.write(f"{rows} {cols}\n")
        for r in range(rows):
            fh.write(" ".join(repr(float(v)) for v in img[r]) + "\n")


def read_scene(path):
    with open(path) as fh:
        head = fh.readline().split()
        if len(head) != 2:
            raise ValueError(f"{path}: first line must be 'rows cols'")
        rows, cols = int(head[0]), int(head[1])
        vals = np.array([float(t) for line in fh for t in line.split()])
    if vals.size != rows * cols:
        raise ValueError(f"{path}: expected {rows * cols} values, found {vals.size}")
    return Scene(vals, (rows, cols))


def export_image(image, grid, path):
    """Write ``<path>.pgm`` (16-bit, [0, 1] -> [0, 65535]) and ``<path>.csv``.

    ``path`` is a stem; any ``.pgm``/``.csv`` suffix is dropped. Returns the
    two paths written.
    """
    path = str(path)
    for ext in (".pgm", ".csv"):
        if path.endswith(ext):
            path = path[: -len(ext)]
    rows, cols = grid
    img = np.asarray(image, dtype=np.float64).reshape(rows, cols)
    levels = np.round(np.clip(img, 0.0, 1.0) * 65535).astype(">u2")
    pgm, csv_path = path + ".pgm", path + ".csv"
    with open(pgm, "wb") as fh:
        fh.write(f"P5\n{cols} {rows}\n65535\n".encode("ascii"))
        fh.write(levels.tobytes())
    with open(csv_path, "w", newline="") as fh:
        w = csv.writer(fh)
        for r in range(rows):
            w.writerow([repr(float(v)) for v in img[r]])
    return pgm, csv_path


def read_image_csv(path):
    with open(path, newline="") as fh:
        return np.array([[float(v) for v in row] for row in csv.reader(fh)])


def read_pgm(path):
    with open(path, "rb") as fh:
        data = fh.read()
    parts = data.split(b"\n", 3)
    if parts[0] != b"P5":
        raise ValueError("not a binary PGM")
    cols, rows = (int(v) for v in parts[1].split())
    return np.frombuffer(parts[3], dtype=">u2").reshape(rows, cols)


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)
