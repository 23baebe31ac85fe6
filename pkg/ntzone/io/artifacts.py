"""Flat-file outputs: CSV tables, JSON run manifests and HDF5 path dumps."""
from __future__ import annotations

import hashlib
import json
import os
from typing import List, Optional, Sequence

import h5py
import numpy as np
import pandas as pd
from pydantic import BaseModel, Field

from ..types import DictStrAny

# 17 significant digits round-trip every float64
FLOAT_FORMAT = "%.17g"


def write_csv(path: str, header: Sequence[str], rows: Sequence[Sequence]) -> str:
    """Write a comma separated table with LF line endings."""
    for row in rows:
        if len(row) != len(header):
            raise ValueError(f"row has {len(row)} cells, header has {len(header)}")
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    table = pd.DataFrame([list(row) for row in rows], columns=list(header))
    table.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    return path


def read_csv(path: str) -> tuple[List[str], np.ndarray]:
    """Read a table written by ``write_csv`` back into (header, float array)."""
    table = pd.read_csv(path, float_precision="round_trip")
    return list(table.columns), table.to_numpy(dtype=np.float64)


def write_json(path: str, data: DictStrAny) -> str:
    """Write sorted, indented JSON with LF line endings."""
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(json.dumps(data, indent=2, sort_keys=True))
        f.write("\n")
    return path


def build_id() -> str:
    """Short content hash of the installed ntzone sources."""
    sha = hashlib.sha1()
    root = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
    for directory, dirs, files in sorted(os.walk(root)):
        dirs.sort()
        for name in sorted(files):
            if name.endswith(".py"):
                with open(os.path.join(directory, name), "rb") as f:
                    sha.update(f.read())
    return sha.hexdigest()[:12]


class RunManifest(BaseModel):
    """Metadata of one command run; references every file the run wrote."""

    command: str
    config_digest: str
    config_path: Optional[str] = None
    seed: Optional[int] = None
    outputs: List[str] = Field(default_factory=list)
    version: str
    build_id: str = Field(default_factory=build_id)
    rng: Optional[str] = None
    dt: Optional[float] = None
    horizon: Optional[float] = None
    extra: DictStrAny = Field(default_factory=dict)

    def write(self, path: str) -> str:
        """Dump the manifest as sorted, indented JSON."""
        return write_json(path, json.loads(self.json()))


def dump_paths_hdf5(path: str, result, group: str = "paths") -> str:
    """Store the per-path arrays of a SimResult in an HDF5 group."""
    with h5py.File(path, mode="a") as hdf5_file:
        if group in hdf5_file:
            del hdf5_file[group]
        g = hdf5_file.create_group(group)
        g.create_dataset("utility", data=result.path_utilities)
        g.create_dataset("frictionless_utility", data=result.path_frictionless)
        g.create_dataset("accrued_loss", data=result.path_accrued)
        g.create_dataset("trades", data=result.path_trades)
        g.create_dataset("liquidated", data=result.path_liquidated.astype(np.uint8))
        g.create_dataset("z_T", data=result.path_z_T)
        g.attrs["dt"] = result.dt
        g.attrs["horizon"] = result.horizon
    return path
