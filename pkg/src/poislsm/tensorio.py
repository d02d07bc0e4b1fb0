"""CSV and manifest serialization.

Matrices are written row-major at full precision (`%.17g`, lossless for
float64). A count tensor is stored as one integer CSV per slice plus a JSON
manifest ``{"n": ..., "T": ..., "slice_paths": [...]}`` with paths relative
to the manifest file.
"""

from __future__ import annotations

import json
import os

import numpy as np

from .errors import ShapeError
from .types import CountTensor


def write_matrix_csv(path, M):
    m = np.atleast_2d(np.asarray(M, dtype=np.float64))
    with open(path, "w") as fh:
        for row in m:
            fh.write(",".join(f"{v:.17g}" for v in row) + "\n")


def read_matrix_csv(path) -> np.ndarray:
    m = np.loadtxt(path, delimiter=",", dtype=np.float64, ndmin=2)
    return m


def write_vector_csv(path, v):
    write_matrix_csv(path, np.asarray(v, dtype=np.float64).reshape(-1, 1))


def write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_json(path):
    with open(path) as fh:
        return json.load(fh)


def write_count_tensor(ct: CountTensor, out_dir, prefix="slice") -> str:
    """Write slices and manifest into ``out_dir``; returns the manifest path."""
    os.makedirs(out_dir, exist_ok=True)
    names = []
    width = len(str(ct.T - 1))
    for t in range(ct.T):
        name = f"{prefix}_{t:0{width}d}.csv"
        with open(os.path.join(out_dir, name), "w") as fh:
            for row in ct.counts[t]:
                fh.write(",".join(str(int(v)) for v in row) + "\n")
        names.append(name)
    manifest = os.path.join(out_dir, "tensor_manifest.json")
    write_json(manifest, {"n": ct.n, "T": ct.T, "slice_paths": names})
    return manifest


def read_count_tensor(manifest_path) -> CountTensor:
    meta = read_json(manifest_path)
    base = os.path.dirname(os.path.abspath(manifest_path))
    n, T = int(meta["n"]), int(meta["T"])
    paths = meta["slice_paths"]
    if len(paths) != T:
        raise ShapeError(f"manifest lists {len(paths)} slices but T={T}")
    slices = []
    for name in paths:
        m = np.loadtxt(os.path.join(base, name), delimiter=",", dtype=np.int64, ndmin=2)
        if m.shape != (n, n):
            raise ShapeError(f"slice {name} has shape {m.shape}, expected ({n}, {n})")
        slices.append(m)
    return CountTensor.from_slices(slices)
