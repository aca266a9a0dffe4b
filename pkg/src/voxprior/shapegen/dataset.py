"""Dataset generation and on-disk formats.

A dataset is a directory holding:

* ``shapes.tsdf`` — magic ``TSDF``, u32 version=1, u32 D, f32 tau, u32 count,
  then ``count`` blocks of D^3 little-endian float32 values.
* ``shapes.meta.jsonl`` — one JSON object per shape:
  {index, family, label, params, attributes}.
* ``silhouettes/NNNNN_{x,y,z}.pgm`` — binary (P5) orthographic occupancy.

Generation is deterministic: a fixed (count, seed, D, tau) reproduces every
file byte for byte. The train/val/test split is 80/10/10 by index.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import DataError, ParameterError
from .families import ShapeSpec, random_spec, build_scene
from .grid import Silhouette, TsdfGrid, rasterize_tsdf, silhouette_project

TSDF_MAGIC = b"TSDF"
TSDF_VERSION = 1


def write_tsdf_file(path: Path, grids: np.ndarray, tau: float) -> None:
    """``grids``: [count, D, D, D] float32."""
    count, d = grids.shape[0], grids.shape[1]
    header = struct.pack("<4sIIfI", TSDF_MAGIC, TSDF_VERSION, d, float(tau), count)
    try:
        with open(path, "wb") as f:
            f.write(header)
            f.write(np.ascontiguousarray(grids, dtype="<f4").tobytes())
    except OSError as e:
        raise DataError(f"cannot write TSDF file {path}: {e}") from e


def read_tsdf_file(path: Path) -> tuple[np.ndarray, float]:
    """Return ([count, D, D, D] float32 grids, tau)."""
    try:
        with open(path, "rb") as f:
            header = f.read(struct.calcsize("<4sIIfI"))
            magic, version, d, tau, count = struct.unpack("<4sIIfI", header)
            if magic != TSDF_MAGIC:
                raise DataError(f"{path}: bad magic {magic!r}")
            if version != TSDF_VERSION:
                raise DataError(f"{path}: unsupported version {version}")
            raw = f.read(count * d * d * d * 4)
    except OSError as e:
        raise DataError(f"cannot read TSDF file {path}: {e}") from e
    grids = np.frombuffer(raw, dtype="<f4").reshape(count, d, d, d)
    return grids.astype(np.float32), float(tau)


def write_pgm(path: Path, pixels: np.ndarray) -> None:
    """Write a binary PGM (P5) image; boolean input maps to {0, 255}."""
    img = np.where(pixels, 255, 0).astype(np.uint8) if pixels.dtype == bool \
        else pixels.astype(np.uint8)
    h, w = img.shape
    try:
        with open(path, "wb") as f:
            f.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
            f.write(img.tobytes())
    except OSError as e:
        raise DataError(f"cannot write PGM file {path}: {e}") from e


def read_pgm(path: Path) -> np.ndarray:
    try:
        data = Path(path).read_bytes()
    except OSError as e:
        raise DataError(f"cannot read PGM file {path}: {e}") from e
    if not data.startswith(b"P5"):
        raise DataError(f"{path}: not a binary PGM (P5) file")
    fields: list[bytes] = []
    pos = 2
    while len(fields) < 3:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        fields.append(data[start:pos])
    w, h, maxval = (int(v) for v in fields)
    pos += 1
    img = np.frombuffer(data[pos : pos + w * h], dtype=np.uint8).reshape(h, w)
    return img.copy()


def split_indices(count: int) -> tuple[range, range, range]:
    """80/10/10 train/val/test split by index."""
    n_train = int(count * 0.8)
    n_val = int(count * 0.1)
    return (
        range(0, n_train),
        range(n_train, n_train + n_val),
        range(n_train + n_val, count),
    )


@dataclass(frozen=True)
class Dataset:
    """In-memory view of one generated dataset directory."""

    root: Path
    resolution: int
    tau: float
    grids: np.ndarray  # [count, D, D, D] float32
    records: list[dict]

    @property
    def count(self) -> int:
        return self.grids.shape[0]

    def grid(self, index: int) -> TsdfGrid:
        return TsdfGrid(self.resolution, self.tau, self.grids[index])

    def silhouette(self, index: int, axis: str) -> Silhouette:
        return silhouette_project(self.grid(index), axis)

    def labels(self) -> np.ndarray:
        return np.array([r["label"] for r in self.records], dtype=np.int64)

    def attributes(self) -> np.ndarray:
        return np.array([r["attributes"] for r in self.records], dtype=np.float32)

    def splits(self) -> tuple[range, range, range]:
        return split_indices(self.count)


def _spec_record(index: int, spec: ShapeSpec) -> dict:
    return {
        "index": index,
        "family": spec.family,
        "label": spec.label,
        "params": {k: float(v) for k, v in sorted(spec.params.items())},
        "attributes": [float(a) for a in spec.attributes],
    }


def make_dataset(
    out_dir: Path, count: int, seed: int, resolution: int = 32, tau: float = 0.2
) -> Dataset:
    """Generate ``count`` procedural shapes into ``out_dir``."""
    if count < 1:
        raise ParameterError(f"make_dataset: count must be >= 1, got {count}")
    out_dir = Path(out_dir)
    sil_dir = out_dir / "silhouettes"
    try:
        sil_dir.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise DataError(f"cannot create dataset directory {out_dir}: {e}") from e

    rng = np.random.default_rng(seed)
    grids = np.empty((count, resolution, resolution, resolution), dtype=np.float32)
    records = []
    for index in range(count):
        spec = random_spec(rng)
        scene = build_scene(spec)
        grid = rasterize_tsdf(scene.sdf, resolution, tau)
        grids[index] = grid.values
        records.append(_spec_record(index, spec))
        for axis in ("x", "y", "z"):
            sil = silhouette_project(grid, axis)
            write_pgm(sil_dir / f"{index:05d}_{axis}.pgm", sil.pixels)

    write_tsdf_file(out_dir / "shapes.tsdf", grids, tau)
    meta_path = out_dir / "shapes.meta.jsonl"
    try:
        with open(meta_path, "w", encoding="utf-8") as f:
            for record in records:
                f.write(json.dumps(record, sort_keys=True) + "\n")
    except OSError as e:
        raise DataError(f"cannot write metadata {meta_path}: {e}") from e
    return Dataset(out_dir, resolution, tau, grids, records)


def load_dataset(root: Path) -> Dataset:
    root = Path(root)
    grids, tau = read_tsdf_file(root / "shapes.tsdf")
    meta_path = root / "shapes.meta.jsonl"
    try:
        lines = meta_path.read_text(encoding="utf-8").splitlines()
    except OSError as e:
        raise DataError(f"cannot read metadata {meta_path}: {e}") from e
    records = [json.loads(line) for line in lines if line.strip()]
    if len(records) != grids.shape[0]:
        raise DataError(
            f"{root}: metadata has {len(records)} records for {grids.shape[0]} grids"
        )
    return Dataset(root, grids.shape[1], tau, grids, records)
