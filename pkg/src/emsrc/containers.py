"""On-disk containers: JSON metadata plus flat CSV or little-endian binary arrays.

Every container is a small schema-versioned JSON metadata file next to one
payload file per array. Payloads are either CSV (17 significant digits, so
doubles round-trip exactly) or raw little-endian binary, selected per write.
Writers are deterministic: identical inputs produce identical bytes.
Grayscale slices are plain binary PGM (P5).
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .forward import BoundaryData
from .geometry import FrequencySet, SurfaceMesh, VectorField, VoxelGrid
from .imaging import ImageStack
from .inverse import FistaTrace

__all__ = [
    "write_json", "read_json",
    "save_boundary_data", "load_boundary_data",
    "save_field", "load_field",
    "save_image_stack", "load_image_stack",
    "save_trace_csv", "load_trace_csv",
    "save_pgm", "load_pgm", "magnitude_slice",
]

_FLOAT_FMT = "%.17g"

TRACE_COLUMNS = ("k", "L", "M", "R", "gamma", "s", "i_k", "rel_change")


def write_json(path, obj: dict):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def read_json(path) -> dict:
    return json.loads(Path(path).read_text())


def _check_format(fmt: str):
    if fmt not in ("csv", "bin"):
        raise ValueError("format must be 'csv' or 'bin'")


def _payload_name(stem: str, fmt: str) -> str:
    return f"{stem}.{fmt}"


def _save_array(path: Path, arr: np.ndarray, fmt: str, header: str):
    """Flatten to 2D columns and write; complex arrays as re/im column pairs."""
    if fmt == "bin":
        dtype = "<c16" if np.iscomplexobj(arr) else "<f8"
        path.write_bytes(np.ascontiguousarray(arr).astype(dtype).tobytes())
        return
    flat = arr.reshape(arr.shape[0], -1) if arr.ndim > 1 else arr.reshape(-1, 1)
    if np.iscomplexobj(flat):
        cols = np.empty((flat.shape[0], 2 * flat.shape[1]))
        cols[:, 0::2] = flat.real
        cols[:, 1::2] = flat.imag
        flat = cols
    np.savetxt(path, flat, fmt=_FLOAT_FMT, delimiter=",", header=header)


def _load_array(path: Path, fmt: str, shape: tuple, complex_valued: bool) -> np.ndarray:
    if fmt == "bin":
        dtype = "<c16" if complex_valued else "<f8"
        arr = np.frombuffer(path.read_bytes(), dtype=dtype)
        return arr.astype(np.complex128 if complex_valued else np.float64).reshape(shape)
    flat = np.loadtxt(path, delimiter=",", ndmin=2)
    if complex_valued:
        flat = flat[:, 0::2] + 1j * flat[:, 1::2]
    return flat.reshape(shape)


def _grid_meta(grid: VoxelGrid) -> dict:
    return {"origin": list(grid.origin), "spacing": grid.spacing,
            "dims": list(grid.dims)}


def _grid_from_meta(meta: dict) -> VoxelGrid:
    return VoxelGrid(tuple(meta["origin"]), meta["spacing"], tuple(meta["dims"]))


# -- boundary data ---------------------------------------------------------------


def save_boundary_data(out_dir, data: BoundaryData, fmt: str = "csv",
                       name: str = "boundary_data") -> Path:
    """Write mesh + frequencies + values; returns the metadata path."""
    _check_format(fmt)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    values_file = _payload_name(f"{name}.values", fmt)
    mesh_file = _payload_name(f"{name}.mesh", fmt)
    mesh_cols = np.hstack([data.mesh.points, data.mesh.weights[:, None],
                           data.mesh.normals])
    _save_array(out / mesh_file, mesh_cols, fmt, "x,y,z,weight,nx,ny,nz")
    _save_array(out / values_file, data.values.reshape(data.n_points, -1), fmt,
                "per point: re/im of (x,y,z) for each frequency")
    meta = {
        "schema": "boundary_data/1",
        "format": fmt,
        "n_points": data.n_points,
        "n_freqs": data.n_freqs,
        "omegas": data.freqs.omegas.tolist(),
        "mesh": {"file": mesh_file, "columns": ["x", "y", "z", "weight",
                                                "nx", "ny", "nz"]},
        "values": {"file": values_file, "dtype": "complex128",
                   "shape": [data.n_points, data.n_freqs, 3]},
    }
    meta_path = out / f"{name}.json"
    write_json(meta_path, meta)
    return meta_path


def load_boundary_data(out_dir, name: str = "boundary_data") -> BoundaryData:
    out = Path(out_dir)
    meta = read_json(out / f"{name}.json")
    if meta.get("schema") != "boundary_data/1":
        raise ValueError("not a boundary data container")
    fmt = meta["format"]
    n_points, n_freqs = meta["n_points"], meta["n_freqs"]
    mesh_cols = _load_array(out / meta["mesh"]["file"], fmt, (n_points, 7), False)
    mesh = SurfaceMesh(mesh_cols[:, 0:3], mesh_cols[:, 3], mesh_cols[:, 4:7])
    values = _load_array(out / meta["values"]["file"], fmt,
                         (n_points, n_freqs, 3), True)
    return BoundaryData(mesh, FrequencySet(np.asarray(meta["omegas"])), values)


# -- vector fields ----------------------------------------------------------------


def save_field(out_dir, field: VectorField, name: str, fmt: str = "csv") -> Path:
    _check_format(fmt)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    values_file = _payload_name(f"{name}.values", fmt)
    header = ("voxel rows (x fastest): re_vx,im_vx,re_vy,im_vy,re_vz,im_vz"
              if field.is_complex else "voxel rows (x fastest): vx,vy,vz")
    _save_array(out / values_file, field.values, fmt, header)
    meta = {
        "schema": "vector_field/1",
        "format": fmt,
        "grid": _grid_meta(field.grid),
        "complex": field.is_complex,
        "values": {"file": values_file,
                   "shape": [field.grid.n_voxels, 3]},
    }
    meta_path = out / f"{name}.json"
    write_json(meta_path, meta)
    return meta_path


def load_field(out_dir, name: str) -> VectorField:
    out = Path(out_dir)
    meta = read_json(out / f"{name}.json")
    if meta.get("schema") != "vector_field/1":
        raise ValueError("not a vector field container")
    grid = _grid_from_meta(meta["grid"])
    values = _load_array(out / meta["values"]["file"], meta["format"],
                         (grid.n_voxels, 3), meta["complex"])
    return VectorField(grid, values)


# -- image stacks ------------------------------------------------------------------


def save_image_stack(out_dir, stack: ImageStack, fmt: str = "csv",
                     name: str = "images") -> Path:
    _check_format(fmt)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    values = np.stack([f.values for f in stack.per_freq])
    values_file = _payload_name(f"{name}.values", fmt)
    _save_array(out / values_file, values.reshape(stack.n_freqs, -1), fmt,
                "one row per frequency: re/im of voxel vectors, x fastest")
    broadband_file = None
    if stack.broadband is not None:
        broadband_file = _payload_name(f"{name}.broadband", fmt)
        _save_array(out / broadband_file, stack.broadband.values, fmt,
                    "voxel rows (x fastest): vx,vy,vz")
    meta = {
        "schema": "image_stack/1",
        "format": fmt,
        "grid": _grid_meta(stack.grid),
        "omegas": stack.freqs.omegas.tolist(),
        "values": {"file": values_file,
                   "shape": [stack.n_freqs, stack.grid.n_voxels, 3],
                   "dtype": "complex128"},
        "broadband": broadband_file,
    }
    meta_path = out / f"{name}.json"
    write_json(meta_path, meta)
    return meta_path


def load_image_stack(out_dir, name: str = "images") -> ImageStack:
    out = Path(out_dir)
    meta = read_json(out / f"{name}.json")
    if meta.get("schema") != "image_stack/1":
        raise ValueError("not an image stack container")
    fmt = meta["format"]
    grid = _grid_from_meta(meta["grid"])
    freqs = FrequencySet(np.asarray(meta["omegas"]))
    values = _load_array(out / meta["values"]["file"], fmt,
                         (len(freqs), grid.n_voxels, 3), True)
    per_freq = tuple(VectorField(grid, values[n]) for n in range(len(freqs)))
    broadband = None
    if meta.get("broadband"):
        bb = _load_array(out / meta["broadband"], fmt, (grid.n_voxels, 3), False)
        broadband = VectorField(grid, bb)
    return ImageStack(grid, freqs, per_freq, broadband)


# -- optimizer traces ---------------------------------------------------------------


def save_trace_csv(path, trace: FistaTrace):
    rows = trace.rows()
    lines = [",".join(TRACE_COLUMNS)]
    for row in rows:
        k, L, M, R, gamma, s, i_k, rel = row
        lines.append(",".join([str(int(k))]
                              + [_FLOAT_FMT % v for v in (L, M, R, gamma, s)]
                              + [str(int(i_k)), _FLOAT_FMT % rel]))
    Path(path).write_text("\n".join(lines) + "\n")


def load_trace_csv(path) -> np.ndarray:
    """Trace rows as a float array with columns ``TRACE_COLUMNS``."""
    return np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)


# -- grayscale slices ---------------------------------------------------------------


_AXIS_INDEX = {"x": 2, "y": 1, "z": 0}        # volume is (nz, ny, nx)


def magnitude_slice(magnitudes: np.ndarray, grid: VoxelGrid, axis: str,
                    index: int) -> np.ndarray:
    """2D uint8 slice of a per-voxel magnitude volume, global-max normalized."""
    if axis not in _AXIS_INDEX:
        raise ValueError("axis must be one of 'x', 'y', 'z'")
    nx, ny, nz = grid.dims
    vol = np.asarray(magnitudes, dtype=float).reshape(nz, ny, nx)
    ax = _AXIS_INDEX[axis]
    if not 0 <= index < vol.shape[ax]:
        raise ValueError(f"slice index {index} out of range for axis {axis}")
    img = np.take(vol, index, axis=ax)
    peak = vol.max()
    if peak <= 0:
        return np.zeros(img.shape, dtype=np.uint8)
    return np.round(255.0 * img / peak).astype(np.uint8)


def save_pgm(path, image: np.ndarray):
    """Binary PGM (P5), 8-bit."""
    image = np.asarray(image, dtype=np.uint8)
    if image.ndim != 2:
        raise ValueError("PGM image must be 2D")
    h, w = image.shape
    header = f"P5\n{w} {h}\n255\n".encode("ascii")
    Path(path).write_bytes(header + image.tobytes())


def load_pgm(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    parts = raw.split(b"\n", 3)
    if parts[0] != b"P5" or parts[2] != b"255":
        raise ValueError("unsupported PGM file")
    w, h = (int(t) for t in parts[1].split())
    data = np.frombuffer(parts[3], dtype=np.uint8, count=w * h)
    return data.reshape(h, w)
