"""Binary occupancy grids: storage, city-world generation, components, file I/O.

Public voxel indices are 1-based ``(i1, i2, i3)`` with ``1 <= ik <= Nk``.
Voxel ``(i1, i2, i3)`` occupies the box ``[(ik - 1) * res, ik * res]`` per
axis, with the grid origin at ``(0, 0, 0)`` meters.
"""
from __future__ import annotations

import io
import os
import struct
from dataclasses import dataclass, field
from typing import BinaryIO, Sequence, Tuple, Union

import numpy as np
from scipy import ndimage

Index3 = Tuple[int, int, int]
PathLike = Union[str, "os.PathLike[str]"]

MAGIC = b"OG3D"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sH3Qd")
# refuse to allocate absurd grids from corrupted headers
MAX_VOXELS = 1 << 36


class GridFormatError(ValueError):
    """Raised when a grid file cannot be decoded."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


class OccupancyGrid:
    """Dense binary voxel lattice; ``True`` marks an obstacle voxel."""

    __slots__ = ("occupancy", "resolution")

    def __init__(self, occupancy: np.ndarray, resolution: float = 1.0):
        occ = np.asarray(occupancy, dtype=bool)
        if occ.ndim != 3 or min(occ.shape) < 1:
            raise ValueError(f"occupancy must be a non-empty 3D array, got shape {occ.shape}")
        if not resolution > 0:
            raise ValueError(f"resolution must be positive, got {resolution}")
        self.occupancy = np.ascontiguousarray(occ)
        self.resolution = float(resolution)

    @property
    def dims(self) -> Index3:
        nx, ny, nz = self.occupancy.shape
        return int(nx), int(ny), int(nz)

    @property
    def extent(self) -> np.ndarray:
        """World size in meters along x, y, z."""
        return np.array(self.dims, dtype=float) * self.resolution

    @property
    def n_voxels(self) -> int:
        return int(self.occupancy.size)

    def _check(self, idx: Sequence[int]) -> Index3:
        i, j, k = (int(v) for v in idx)
        nx, ny, nz = self.dims
        if not (1 <= i <= nx and 1 <= j <= ny and 1 <= k <= nz):
            raise IndexError(f"voxel index {(i, j, k)} outside 1..{self.dims}")
        return i - 1, j - 1, k - 1

    def __getitem__(self, idx: Sequence[int]) -> int:
        return int(self.occupancy[self._check(idx)])

    def __setitem__(self, idx: Sequence[int], value: int) -> None:
        self.occupancy[self._check(idx)] = bool(value)

    def fill_box(self, lo: Sequence[int], hi: Sequence[int], value: int = 1) -> None:
        """Set every voxel in the inclusive 1-based box ``lo..hi``."""
        a = self._check(lo)
        b = self._check(hi)
        self.occupancy[a[0]:b[0] + 1, a[1]:b[1] + 1, a[2]:b[2] + 1] = bool(value)

    def voxel_box(self, idx: Sequence[int]) -> Tuple[np.ndarray, np.ndarray]:
        """Continuous-space box (meters) of a 1-based voxel index."""
        i = np.asarray(idx, dtype=float)
        return (i - 1.0) * self.resolution, i * self.resolution

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, OccupancyGrid):
            return NotImplemented
        return (self.resolution == other.resolution
                and self.dims == other.dims
                and bool(np.array_equal(self.occupancy, other.occupancy)))

    def __repr__(self) -> str:
        return (f"OccupancyGrid(dims={self.dims}, resolution={self.resolution}, "
                f"occupied={int(self.occupancy.sum())})")


def new_grid(dims: Sequence[int], resolution: float = 1.0) -> OccupancyGrid:
    """All-free grid of the given voxel counts."""
    dims = tuple(int(d) for d in dims)
    if len(dims) != 3 or any(d < 1 for d in dims):
        raise ValueError(f"grid dims must be three positive integers, got {dims}")
    return OccupancyGrid(np.zeros(dims, dtype=bool), resolution)


@dataclass(frozen=True)
class WorldSpec:
    """Parameters of a random city-like world.

    ``max_boxes`` bounds the number of stacked boxes per building and
    ``setback`` is the minimum street clearance (voxels) between a building
    and its tile border.
    """

    L: int
    H: int
    block: int = 50
    seed: int = 0
    max_boxes: int = 5
    setback: int = 2
    resolution: float = field(default=1.0)

    def validate(self) -> None:
        if self.L < 1 or self.block < 1 or self.L % self.block:
            raise ValueError(f"L={self.L} must be a positive multiple of block={self.block}")
        if self.H < 2:
            raise ValueError(f"H={self.H} must be at least 2")
        if self.block < 2 * self.setback + 1:
            raise ValueError(f"block={self.block} too small for setback={self.setback}")
        if self.max_boxes < 1:
            raise ValueError("max_boxes must be >= 1")


def _building(rng: np.random.Generator, x0: int, y0: int, spec: WorldSpec):
    """Yield 0-based half-open boxes of one stacked building inside a tile."""
    b, s = spec.block, spec.setback
    slack = max(s, b // 4)
    lo = [x0 + int(rng.integers(s, slack + 1)), y0 + int(rng.integers(s, slack + 1))]
    hi = [x0 + b - int(rng.integers(s, slack + 1)), y0 + b - int(rng.integers(s, slack + 1))]
    for a in range(2):
        if hi[a] <= lo[a]:
            hi[a] = lo[a] + 1

    n_boxes = min(int(rng.integers(1, spec.max_boxes + 1)), spec.H - 1)
    total = int(rng.integers(n_boxes, spec.H))  # total height <= H - 1
    cuts = np.sort(rng.choice(np.arange(1, total), size=n_boxes - 1, replace=False)) if n_boxes > 1 else []
    heights = np.diff(np.concatenate([[0], cuts, [total]])).astype(int)

    z = 0
    for level, h in enumerate(heights):
        if level > 0:
            # upper box footprint stays inside the box below
            for a in range(2):
                room = (hi[a] - lo[a] - 1) // 4
                if room > 0:
                    lo[a] += int(rng.integers(0, room + 1))
                    hi[a] -= int(rng.integers(0, room + 1))
        yield (lo[0], lo[1], z), (hi[0], hi[1], z + int(h))
        z += int(h)


def generate_city_world(spec: WorldSpec) -> OccupancyGrid:
    """Random city: one stacked-box building per ``block x block`` tile."""
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    occ = np.zeros((spec.L, spec.L, spec.H), dtype=bool)
    tiles = spec.L // spec.block
    for ty in range(tiles):
        for tx in range(tiles):
            for (ax, ay, az), (bx, by, bz) in _building(rng, tx * spec.block, ty * spec.block, spec):
                occ[ax:bx, ay:by, az:bz] = True
    return OccupancyGrid(occ, spec.resolution)


_STRUCTURES = {
    6: ndimage.generate_binary_structure(3, 1),
    26: ndimage.generate_binary_structure(3, 3),
}


def free_components(grid: OccupancyGrid, connectivity: int = 6) -> Tuple[np.ndarray, int]:
    """Label free voxels into connected components.

    Returns ``(labels, count)``; ``labels`` is 0 on obstacles and 1..count on
    free voxels.
    """
    if connectivity not in _STRUCTURES:
        raise ValueError("connectivity must be 6 or 26")
    labels, count = ndimage.label(~grid.occupancy, structure=_STRUCTURES[connectivity])
    return labels, int(count)


def encode_grid(grid: OccupancyGrid) -> bytes:
    nx, ny, nz = grid.dims
    header = _HEADER.pack(MAGIC, FORMAT_VERSION, nx, ny, nz, grid.resolution)
    bits = np.packbits(grid.occupancy.ravel(order="F"), bitorder="little")
    return header + bits.tobytes()


def decode_grid(data: bytes) -> OccupancyGrid:
    if len(data) < 4:
        raise GridFormatError("truncated magic", len(data))
    if data[:4] != MAGIC:
        raise GridFormatError(f"bad magic {data[:4]!r}", 0)
    if len(data) < _HEADER.size:
        raise GridFormatError("truncated header", len(data))
    _, version, nx, ny, nz, res = _HEADER.unpack_from(data, 0)
    if version != FORMAT_VERSION:
        raise GridFormatError(f"unsupported version {version}", 4)
    if min(nx, ny, nz) < 1:
        raise GridFormatError(f"zero dimension in {(nx, ny, nz)}", 6)
    if nx * ny * nz > MAX_VOXELS:
        raise GridFormatError(f"dimension overflow {(nx, ny, nz)}", 6)
    if not res > 0:
        raise GridFormatError(f"non-positive resolution {res}", 30)
    n = nx * ny * nz
    nbytes = (n + 7) // 8
    payload = data[_HEADER.size:]
    if len(payload) < nbytes:
        raise GridFormatError(f"truncated payload: need {nbytes} bytes, have {len(payload)}", len(data))
    if len(payload) > nbytes:
        raise GridFormatError("trailing bytes after payload", _HEADER.size + nbytes)
    bits = np.unpackbits(np.frombuffer(payload, dtype=np.uint8), count=n, bitorder="little")
    occ = bits.astype(bool).reshape((nx, ny, nz), order="F")
    return OccupancyGrid(occ, res)


def save_grid(grid: OccupancyGrid, destination: Union[PathLike, BinaryIO]) -> None:
    blob = encode_grid(grid)
    if isinstance(destination, (str, os.PathLike)):
        with open(destination, "wb") as fh:
            fh.write(blob)
    else:
        destination.write(blob)


def load_grid(source: Union[PathLike, BinaryIO, bytes]) -> OccupancyGrid:
    if isinstance(source, (bytes, bytearray)):
        return decode_grid(bytes(source))
    if isinstance(source, (str, os.PathLike)):
        with open(source, "rb") as fh:
            return decode_grid(fh.read())
    if isinstance(source, io.IOBase) or hasattr(source, "read"):
        return decode_grid(source.read())
    raise TypeError(f"cannot load grid from {type(source).__name__}")
