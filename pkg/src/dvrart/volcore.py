"""Voxel storage, raw file I/O, synthetic phantoms and mipmap pyramids.

Layout conventions used throughout the package:

* ``data`` is a flat array with x varying fastest, i.e. it reshapes to a
  C-ordered ``(nz, ny, nx)`` grid (see :attr:`ScalarVolume.grid`).
* Voxel centers sit at integer voxel coordinates. World position of voxel
  ``(i, j, k)`` is ``(i*sx, j*sy, k*sz)``; the world bounding box spans
  half a voxel past the outer centers on every side.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
import numpy as np

from .errors import DimensionError, ParameterError

DTYPES = {"u8": np.dtype("<u1"), "u16le": np.dtype("<u2"), "f32le": np.dtype("<f4")}
# full-scale range used when quantizing normalized scalars on save
_QUANT_RANGE = {"u8": (0.0, 255.0), "u16le": (0.0, 65535.0), "f32le": (0.0, 1.0)}


def _triple(x, name, kind=float):
    if np.isscalar(x):
        x = (x, x, x)
    t = tuple(kind(v) for v in x)
    if len(t) != 3:
        raise ParameterError(f"{name} needs three components, got {len(t)}")
    return t


@dataclass(frozen=True)
class ScalarVolume:
    dims: tuple[int, int, int]
    spacing: tuple[float, float, float]
    data: np.ndarray = field(repr=False)

    def __post_init__(self):
        dims = _triple(self.dims, "dims", int)
        spacing = _triple(self.spacing, "spacing", float)
        if min(dims) < 1:
            raise ParameterError(f"dims must be >= 1 on every axis, got {dims}")
        if min(spacing) <= 0:
            raise ParameterError(f"spacing must be > 0 on every axis, got {spacing}")
        data = np.ascontiguousarray(self.data, dtype=np.float64).reshape(-1)
        if data.size != dims[0] * dims[1] * dims[2]:
            raise DimensionError(
                f"data length {data.size} != {dims[0]}*{dims[1]}*{dims[2]}"
            )
        if data.size and (data.min() < 0.0 or data.max() > 1.0):
            raise ParameterError("scalars must lie in [0, 1]")
        data.setflags(write=False)
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "spacing", spacing)
        object.__setattr__(self, "data", data)

    @classmethod
    def from_grid(cls, grid: np.ndarray, spacing=(1.0, 1.0, 1.0)) -> "ScalarVolume":
        """Build from a ``(nz, ny, nx)`` array."""
        grid = np.asarray(grid)
        if grid.ndim != 3:
            raise DimensionError("grid must be 3D (nz, ny, nx)")
        nz, ny, nx = grid.shape
        return cls((nx, ny, nz), spacing, grid.reshape(-1))

    @property
    def grid(self) -> np.ndarray:
        nx, ny, nz = self.dims
        return self.data.reshape(nz, ny, nx)

    @property
    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        """World-space axis-aligned bounding box ``(lo, hi)``."""
        s = np.asarray(self.spacing)
        n = np.asarray(self.dims, dtype=np.float64)
        return -0.5 * s, (n - 0.5) * s

    @property
    def center(self) -> np.ndarray:
        lo, hi = self.bounds
        return 0.5 * (lo + hi)


@dataclass(frozen=True)
class VolumeMeta:
    dims: tuple[int, int, int]
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)
    dtype: str = "u8"
    vmin: float = 0.0
    vmax: float = 255.0
    kind: str = "volume"

    def __post_init__(self):
        object.__setattr__(self, "dims", _triple(self.dims, "dims", int))
        object.__setattr__(self, "spacing", _triple(self.spacing, "spacing", float))
        if self.dtype not in DTYPES:
            raise ParameterError(f"unknown dtype {self.dtype!r}; use one of {list(DTYPES)}")
        if not self.vmax > self.vmin:
            raise ParameterError(f"vmax ({self.vmax}) must exceed vmin ({self.vmin})")

    def to_text(self, extra: dict | None = None) -> str:
        lines = [
            f"dims={','.join(map(str, self.dims))}",
            f"spacing={','.join(repr(s) for s in self.spacing)}",
            f"dtype={self.dtype}",
            f"vmin={self.vmin!r}",
            f"vmax={self.vmax!r}",
            f"kind={self.kind}",
        ]
        for k, v in (extra or {}).items():
            lines.append(f"{k}={v}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "VolumeMeta":
        kv = parse_key_values(text)
        try:
            return cls(
                dims=tuple(int(v) for v in kv["dims"].split(",")),
                spacing=tuple(float(v) for v in kv.get("spacing", "1,1,1").split(",")),
                dtype=kv.get("dtype", "u8"),
                vmin=float(kv.get("vmin", 0.0)),
                vmax=float(kv.get("vmax", 255.0)),
                kind=kv.get("kind", "volume"),
            )
        except KeyError as exc:
            raise ParameterError(f"metadata is missing key {exc}") from None


def parse_key_values(text: str) -> dict[str, str]:
    """Parse ``key=value`` lines; blank lines and ``#`` comments are skipped."""
    out = {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ParameterError(f"line {n}: expected key=value, got {line!r}")
        k, v = line.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def meta_path(path) -> Path:
    return Path(path).with_suffix(".meta")


def read_meta(path) -> VolumeMeta:
    return VolumeMeta.from_text(meta_path(path).read_text())


def read_raw_array(path, meta: VolumeMeta) -> np.ndarray:
    """Read the flat raw values of ``path`` as float64, without normalizing."""
    path = Path(path)
    dt = DTYPES[meta.dtype]
    nx, ny, nz = meta.dims
    count = nx * ny * nz
    size = path.stat().st_size
    if size != count * dt.itemsize:
        raise DimensionError(
            f"{path}: file has {size} bytes, expected {count}*{dt.itemsize}={count * dt.itemsize}"
        )
    return np.fromfile(path, dtype=dt, count=count).astype(np.float64)


def load_raw_volume(path, meta: VolumeMeta | None = None) -> ScalarVolume:
    """Load a headerless little-endian voxel dump and normalize it to [0, 1].

    ``meta`` defaults to the ``.meta`` sidecar next to ``path``.
    """
    if meta is None:
        meta = read_meta(path)
    raw = read_raw_array(path, meta)
    norm = np.clip((raw - meta.vmin) / (meta.vmax - meta.vmin), 0.0, 1.0)
    return ScalarVolume(meta.dims, meta.spacing, norm)


def write_raw_array(values: np.ndarray, path, meta: VolumeMeta, extra: dict | None = None):
    if not str(path):
        raise OSError("empty output path")
    path = Path(path)
    np.ascontiguousarray(values, dtype=DTYPES[meta.dtype]).tofile(path)
    meta_path(path).write_text(meta.to_text(extra))


def save_raw_volume(vol: ScalarVolume, path, dtype: str = "f32le", extra: dict | None = None) -> Path:
    """Write ``vol`` as a flat raw file plus ``.meta`` sidecar.

    Integer dtypes quantize with round-half-up onto the full code range, so
    0.5 stored as u8 becomes 128.
    """
    if not str(path):
        raise OSError("empty output path")
    if dtype not in DTYPES:
        raise ParameterError(f"unknown dtype {dtype!r}")
    lo, hi = _QUANT_RANGE[dtype]
    if dtype == "f32le":
        values = vol.data
    else:
        values = np.floor(vol.data * (hi - lo) + lo + 0.5)
    meta = VolumeMeta(vol.dims, vol.spacing, dtype, lo, hi)
    write_raw_array(values, path, meta, extra)
    return Path(path)


def voxel_fetch(vol: ScalarVolume, i: int, j: int, k: int) -> float:
    """Stored scalar at ``(i, j, k)`` with indices clamped to the grid."""
    nx, ny, nz = vol.dims
    i = min(max(int(i), 0), nx - 1)
    j = min(max(int(j), 0), ny - 1)
    k = min(max(int(k), 0), nz - 1)
    return float(vol.data[(k * ny + j) * nx + i])


# -- phantoms -----------------------------------------------------------------

PHANTOM_KINDS = ("sphere_shell", "tube", "slab", "constant", "linear_ramp")
_AXES = {"x": 0, "y": 1, "z": 2}


@dataclass(frozen=True)
class PhantomSpec:
    """Parameters of a synthetic test object, in voxel units.

    ``center`` defaults to ``n // 2`` per axis so that odd-radius objects
    (like a half-voxel tube) land on voxel centers. ``edge_width`` is the
    width of the smoothstep transition at every boundary; 0 gives hard edges.
    ``slab_extent`` is the ``(lo, hi)`` voxel-coordinate interval along
    ``axis`` for slabs.
    """

    kind: str
    center: tuple[float, float, float] | None = None
    inner_radius: float = 0.0
    outer_radius: float = 0.0
    radius: float = 0.5
    axis: str = "z"
    slab_extent: tuple[float, float] = (0.0, 0.0)
    interior_value: float = 1.0
    shell_value: float = 1.0
    edge_width: float = 0.0

    def validate(self):
        if self.kind not in PHANTOM_KINDS:
            raise ParameterError(f"unknown phantom kind {self.kind!r}")
        if self.edge_width < 0:
            raise ParameterError("edge_width must be >= 0")
        for name in ("interior_value", "shell_value"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ParameterError(f"{name} must be in [0, 1], got {v}")
        if self.kind == "sphere_shell" and not self.outer_radius > self.inner_radius:
            raise ParameterError("sphere_shell needs outer_radius > inner_radius")
        if self.kind == "tube" and not self.radius > 0:
            raise ParameterError("tube radius must be > 0")
        if self.kind in ("tube", "slab", "linear_ramp") and self.axis not in _AXES:
            raise ParameterError(f"axis must be one of x, y, z; got {self.axis!r}")
        if self.kind == "slab" and not self.slab_extent[1] > self.slab_extent[0]:
            raise ParameterError("slab_extent must satisfy lo < hi")


def _inside(dist, edge, width):
    """1 where ``dist < edge`` fading through a smoothstep of ``width``."""
    if width < 1e-9:  # narrower than any voxel test resolves
        return (dist <= edge).astype(np.float64)
    t = np.clip((dist - (edge - 0.5 * width)) / width, 0.0, 1.0)
    return 1.0 - t * t * (3.0 - 2.0 * t)


def make_phantom(spec: PhantomSpec, dims, spacing=(1.0, 1.0, 1.0)) -> ScalarVolume:
    spec.validate()
    nx, ny, nz = _triple(dims, "dims", int)
    if min(nx, ny, nz) < 1:
        raise ParameterError("dims must be >= 1")
    center = spec.center if spec.center is not None else (nx // 2, ny // 2, nz // 2)
    cx, cy, cz = _triple(center, "center", float)
    z, y, x = np.meshgrid(
        np.arange(nz, dtype=np.float64),
        np.arange(ny, dtype=np.float64),
        np.arange(nx, dtype=np.float64),
        indexing="ij",
    )
    coords = (x, y, z)
    w = spec.edge_width

    if spec.kind == "constant":
        grid = np.full((nz, ny, nx), spec.interior_value)
    elif spec.kind == "linear_ramp":
        a = _AXES[spec.axis]
        n = (nx, ny, nz)[a]
        grid = coords[a] / max(n - 1, 1) * spec.interior_value
    elif spec.kind == "sphere_shell":
        r = np.sqrt((x - cx) ** 2 + (y - cy) ** 2 + (z - cz) ** 2)
        inner = _inside(r, spec.inner_radius, w)
        outer = _inside(r, spec.outer_radius, w)
        grid = spec.interior_value * inner + spec.shell_value * (outer - inner)
    elif spec.kind == "tube":
        a = _AXES[spec.axis]
        c = (cx, cy, cz)
        u, v = [coords[b] - c[b] for b in range(3) if b != a]
        grid = spec.interior_value * _inside(np.hypot(u, v), spec.radius, w)
    else:  # slab
        a = _AXES[spec.axis]
        lo, hi = spec.slab_extent
        mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
        grid = spec.interior_value * _inside(np.abs(coords[a] - mid), half, w)

    return ScalarVolume.from_grid(np.clip(grid, 0.0, 1.0), spacing)


# -- mipmaps ------------------------------------------------------------------


@dataclass(frozen=True)
class MipPyramid:
    levels: tuple[ScalarVolume, ...]

    def __len__(self):
        return len(self.levels)

    def __getitem__(self, i) -> ScalarVolume:
        return self.levels[i]


def _halve_axis(a: np.ndarray, axis: int) -> np.ndarray:
    n = a.shape[axis]
    even = np.take(a, np.arange(0, n - n % 2), axis=axis)
    shape = list(even.shape)
    shape[axis : axis + 1] = [shape[axis] // 2, 2]
    out = even.reshape(shape).mean(axis=axis + 1)
    if n % 2:
        # trailing odd cell has only one voxel available
        out = np.concatenate([out, np.take(a, [n - 1], axis=axis)], axis=axis)
    return out


def downsample(vol: ScalarVolume) -> ScalarVolume:
    """One 2x2x2 box-filter level; edge cells average the voxels present."""
    g = vol.grid
    for axis in range(3):
        g = _halve_axis(g, axis)
    spacing = tuple(2.0 * s for s in vol.spacing)
    return ScalarVolume.from_grid(np.clip(g, 0.0, 1.0), spacing)


def build_mip_pyramid(vol: ScalarVolume, levels: int) -> MipPyramid:
    if levels < 1:
        raise ParameterError(f"levels must be >= 1, got {levels}")
    out = [vol]
    for _ in range(levels - 1):
        out.append(downsample(out[-1]))
    return MipPyramid(tuple(out))
