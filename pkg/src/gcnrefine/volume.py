"""Dense 3D volumes, their on-disk format, and binary morphology.

A volume is stored in memory as an array of shape ``(nx, ny, nz)`` indexed
``v[x, y, z]``. On disk the samples are laid out x-fastest (Fortran order),
little-endian, with a JSON sidecar next to the data file::

    volume.f32        raw samples
    volume.f32.json   {"dims": [nx, ny, nz], "dtype": "f32", "kind": "intensity"}
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

KINDS = ("intensity", "probability", "binary")

_DTYPES = {"f32": np.dtype("<f4"), "u8": np.dtype("u1")}
_KIND_DTYPE = {"intensity": "f32", "probability": "f32", "binary": "u8"}

CUBE = np.ones((3, 3, 3), dtype=bool)


class VolumeFormatError(ValueError):
    """Raised when a volume file or its header is malformed."""


@dataclass(frozen=True, eq=False)
class Volume:
    data: np.ndarray
    kind: str = "intensity"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown volume kind {self.kind!r}")
        arr = np.asarray(self.data)
        if arr.ndim != 3 or min(arr.shape) < 1:
            raise ValueError(f"volume data must be a non-empty 3D array, got shape {arr.shape}")
        dtype = _DTYPES[_KIND_DTYPE[self.kind]]
        if self.kind == "binary":
            if arr.dtype == bool:
                arr = arr.astype(dtype)
            elif not np.isin(arr, (0, 1)).all():
                raise ValueError("binary volume values must be 0 or 1")
        arr = np.array(arr, dtype=dtype, copy=True)
        if self.kind == "probability":
            if not np.all((arr >= 0) & (arr <= 1)):
                raise ValueError("probability volume values must lie in [0, 1]")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @property
    def dims(self) -> tuple[int, int, int]:
        return tuple(int(d) for d in self.data.shape)

    @property
    def size(self) -> int:
        return int(self.data.size)

    def mask(self) -> np.ndarray:
        """Boolean view of a binary volume."""
        return self.data.astype(bool)

    def linear(self) -> np.ndarray:
        """Samples flattened in x-fastest order."""
        return self.data.ravel(order="F")

    def __eq__(self, other):
        if not isinstance(other, Volume):
            return NotImplemented
        return (
            self.kind == other.kind
            and self.dims == other.dims
            and self.data.tobytes() == other.data.tobytes()
        )

    __hash__ = None


def binary_volume(mask) -> Volume:
    return Volume(np.asarray(mask, dtype=bool), kind="binary")


def linear_index(coords, dims) -> np.ndarray:
    """x-fastest linear index of ``(N, 3)`` integer coordinates."""
    coords = np.asarray(coords, dtype=np.int64)
    nx, ny, _ = dims
    return coords[:, 0] + nx * (coords[:, 1] + ny * coords[:, 2])


# ---------------------------------------------------------------- file I/O


def _header_path(path: Path) -> Path:
    return path.with_name(path.name + ".json")


def save_volume(v: Volume, path) -> None:
    path = Path(path)
    dtype = _KIND_DTYPE[v.kind]
    header = {"dims": list(v.dims), "dtype": dtype, "kind": v.kind}
    with open(path, "wb") as fh:
        fh.write(v.data.astype(_DTYPES[dtype]).ravel(order="F").tobytes())
    with open(_header_path(path), "w") as fh:
        json.dump(header, fh)
        fh.write("\n")


def _read_header(path: Path) -> dict:
    hpath = _header_path(path)
    if not hpath.is_file():
        raise FileNotFoundError(f"missing volume header {hpath}")
    try:
        header = json.loads(hpath.read_text())
        dims = [int(d) for d in header["dims"]]
        dtype = header["dtype"]
        kind = header.get("kind", "binary" if dtype == "u8" else "intensity")
    except (KeyError, TypeError, ValueError) as exc:
        raise VolumeFormatError(f"malformed header {hpath}: {exc}") from exc
    if dtype not in _DTYPES:
        raise VolumeFormatError(f"unknown dtype {dtype!r} in {hpath}")
    if len(dims) != 3 or min(dims) < 1:
        raise VolumeFormatError(f"dims must be three positive integers, got {dims}")
    if kind not in KINDS:
        raise VolumeFormatError(f"unknown kind {kind!r} in {hpath}")
    return {"dims": tuple(dims), "dtype": dtype, "kind": kind}


def _load_file(path: Path) -> Volume:
    header = _read_header(path)
    raw = np.fromfile(path, dtype=_DTYPES[header["dtype"]])
    expected = int(np.prod(header["dims"]))
    if raw.size != expected:
        raise VolumeFormatError(
            f"{path}: header claims {header['dims']} ({expected} values) but file holds {raw.size}"
        )
    data = raw.reshape(header["dims"], order="F")
    return Volume(data, kind=header["kind"])


def _load_slices(path: Path) -> Volume:
    files = sorted(
        p for p in path.iterdir() if p.is_file() and _header_path(p).is_file()
    )
    if not files:
        raise FileNotFoundError(f"no volume slices found in {path}")
    slices = [_load_file(p) for p in files]
    kinds = {s.kind for s in slices}
    shapes = {s.dims[:2] for s in slices}
    if len(kinds) != 1 or len(shapes) != 1:
        raise VolumeFormatError(f"{path}: slices disagree on kind or in-plane dims")
    return Volume(np.concatenate([s.data for s in slices], axis=2), kind=kinds.pop())


def load_volume(path) -> Volume:
    """Load a volume file, or a directory of per-slice files stacked along z.

    Slice files are ordered by name, so zero-padded indices
    (``slice_0000.f32``, ``slice_0001.f32``, ...) stack in index order.
    """
    path = Path(path)
    if path.is_dir():
        return _load_slices(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such volume file: {path}")
    return _load_file(path)


def save_slices(v: Volume, directory, stem: str = "slice") -> None:
    """Write one file per z-slice, the layout :func:`load_volume` stacks back."""
    directory = Path(directory)
    os.makedirs(directory, exist_ok=True)
    ext = _KIND_DTYPE[v.kind]
    width = max(4, len(str(v.dims[2] - 1)))
    for z in range(v.dims[2]):
        sl = Volume(v.data[:, :, z : z + 1], kind=v.kind)
        save_volume(sl, directory / f"{stem}_{z:0{width}d}.{ext}")


# ------------------------------------------------------------- morphology


def binarize(v: Volume, threshold: float = 0.5) -> Volume:
    # strict: a voxel exactly at the threshold is background
    return binary_volume(v.data > threshold)


def dilate(mask: Volume, iterations: int = 1) -> Volume:
    if iterations < 1:
        raise ValueError("iterations must be a positive integer")
    out = ndimage.binary_dilation(
        mask.mask(), structure=CUBE, iterations=iterations, border_value=0
    )
    return binary_volume(out)


def largest_component(mask: Volume) -> Volume:
    """Keep the largest 26-connected foreground component.

    Ties go to the component whose first voxel (x-fastest order) comes first.
    """
    m = mask.mask()
    labels, n = ndimage.label(m, structure=CUBE)
    if n <= 1:
        return binary_volume(m)
    lab = labels.ravel(order="F")
    fg = np.flatnonzero(lab)
    sizes = np.bincount(lab[fg], minlength=n + 1)
    first = np.full(n + 1, np.iinfo(np.int64).max)
    np.minimum.at(first, lab[fg], fg)
    ids = np.arange(1, n + 1)
    # sort by size descending, then by first voxel ascending
    best = ids[np.lexsort((first[1:], -sizes[1:]))[0]]
    return binary_volume(labels == best)


def mask_union(a: Volume, b: Volume) -> Volume:
    if a.dims != b.dims:
        raise ValueError(f"dims mismatch: {a.dims} vs {b.dims}")
    return binary_volume(a.mask() | b.mask())
