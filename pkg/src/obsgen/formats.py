"""On-disk formats: PLY point clouds, PFM depth maps, OBJ meshes, JSON sidecars,
SDF grids, PNG images/masks, and the tensor-container checkpoint layout.

All binary payloads are little-endian 32-bit floats. Invalid depth is written
as 0 (valid depth is strictly positive) and restored to NaN on load. Nothing
here embeds timestamps, so identical inputs produce identical bytes.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np
from PIL import Image

from .geometry import (
    CameraIntrinsics,
    DepthMap,
    NormalizationConstants,
    OrientedPointCloud,
    TriangleMesh,
)

_PLY_HEADER = """ply
format binary_little_endian 1.0
element vertex {n}
property float x
property float y
property float z
property float nx
property float ny
property float nz
end_header
"""


def save_ply(path, cloud: OrientedPointCloud) -> None:
    data = np.concatenate([cloud.points, cloud.normals], axis=1).astype("<f4")
    with open(path, "wb") as f:
        f.write(_PLY_HEADER.format(n=len(cloud)).encode("ascii"))
        f.write(data.tobytes())


def load_ply(path) -> OrientedPointCloud:
    with open(path, "rb") as f:
        header = []
        while True:
            line = f.readline().decode("ascii").strip()
            header.append(line)
            if line == "end_header":
                break
        if "format binary_little_endian 1.0" not in header:
            raise ValueError(f"{path}: unsupported PLY format")
        n = None
        for line in header:
            if line.startswith("element vertex"):
                n = int(line.split()[-1])
        if n is None:
            raise ValueError(f"{path}: missing vertex element")
        data = np.frombuffer(f.read(n * 6 * 4), dtype="<f4").reshape(n, 6).astype(np.float64)
    normals = data[:, 3:6]
    # renormalize away float32 quantization; keep exact zeros degenerate
    lengths = np.linalg.norm(normals, axis=1)
    nz = lengths > 0
    normals[nz] = normals[nz] / lengths[nz, None]
    return OrientedPointCloud(data[:, 0:3], normals)


def save_pfm(path, depth: DepthMap) -> None:
    """Single-channel PFM, scale -1 (little-endian), rows bottom-to-top."""
    values = depth.values.copy()
    values[~np.isfinite(values)] = 0.0
    with open(path, "wb") as f:
        f.write(b"Pf\n")
        f.write(f"{depth.width} {depth.height}\n".encode("ascii"))
        f.write(b"-1.0\n")
        f.write(values[::-1].astype("<f4").tobytes())


def load_pfm(path) -> DepthMap:
    with open(path, "rb") as f:
        if f.readline().strip() != b"Pf":
            raise ValueError(f"{path}: not a single-channel PFM file")
        width, height = (int(x) for x in f.readline().split())
        scale = float(f.readline())
        dtype = "<f4" if scale < 0 else ">f4"
        values = np.frombuffer(f.read(width * height * 4), dtype=dtype).reshape(height, width)
    values = values[::-1].astype(np.float32).copy()
    values[values <= 0] = np.nan
    return DepthMap(values)


def save_obj(path, mesh: TriangleMesh) -> None:
    lines = []
    for v in mesh.vertices:
        lines.append(f"v {v[0]:.8f} {v[1]:.8f} {v[2]:.8f}")
    for face in mesh.faces:
        lines.append(f"f {face[0] + 1} {face[1] + 1} {face[2] + 1}")
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""), encoding="ascii")


def load_obj(path) -> TriangleMesh:
    vertices, faces = [], []
    for raw in Path(path).read_text(encoding="ascii").splitlines():
        parts = raw.split()
        if not parts:
            continue
        if parts[0] == "v":
            vertices.append([float(x) for x in parts[1:4]])
        elif parts[0] == "f":
            idx = [int(p.split("/")[0]) - 1 for p in parts[1:]]
            for i in range(1, len(idx) - 1):
                faces.append([idx[0], idx[i], idx[i + 1]])
    if not vertices:
        return TriangleMesh.empty()
    return TriangleMesh(np.asarray(vertices), np.asarray(faces, dtype=np.int64))


def save_json(path, payload: dict) -> None:
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def load_json(path) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))


def save_intrinsics(path, k: CameraIntrinsics) -> None:
    save_json(path, k.to_dict())


def load_intrinsics(path) -> CameraIntrinsics:
    return CameraIntrinsics.from_dict(load_json(path))


def save_norm_constants(path, constants: NormalizationConstants) -> None:
    save_json(path, constants.to_dict())


def load_norm_constants(path) -> NormalizationConstants:
    return NormalizationConstants.from_dict(load_json(path))


def save_image(path, image: np.ndarray) -> None:
    """Save a grayscale image given as float in [0, 1] or uint8."""
    if image.dtype != np.uint8:
        image = np.clip(np.asarray(image, dtype=np.float64) * 255.0 + 0.5, 0, 255).astype(np.uint8)
    Image.fromarray(image, mode="L").save(path, format="PNG")


def load_image(path) -> np.ndarray:
    """Load a grayscale image as float32 in [0, 1]."""
    with Image.open(path) as im:
        return np.asarray(im.convert("L"), dtype=np.float32) / 255.0


def save_mask(path, mask: np.ndarray) -> None:
    Image.fromarray(np.where(mask, 255, 0).astype(np.uint8), mode="L").save(path, format="PNG")


def load_mask(path) -> np.ndarray:
    with Image.open(path) as im:
        return np.asarray(im.convert("L")) > 127


# --- SDF grid container: one-line JSON header, then raw <f4 payload ---------

def save_sdf_grid(path, resolution, bounds_min, bounds_max, values: np.ndarray) -> None:
    header = {
        "resolution": [int(r) for r in resolution],
        "bounds_min": [float(b) for b in bounds_min],
        "bounds_max": [float(b) for b in bounds_max],
        "dtype": "<f4",
        "order": "C",
    }
    with open(path, "wb") as f:
        f.write((json.dumps(header, sort_keys=True) + "\n").encode("ascii"))
        f.write(np.ascontiguousarray(values, dtype="<f4").tobytes())


def load_sdf_grid(path) -> tuple[tuple, np.ndarray, np.ndarray, np.ndarray]:
    with open(path, "rb") as f:
        header = json.loads(f.readline().decode("ascii"))
        res = tuple(header["resolution"])
        values = np.frombuffer(f.read(), dtype="<f4").reshape(res).copy()
    return res, np.asarray(header["bounds_min"]), np.asarray(header["bounds_max"]), values


# --- tensor-container checkpoints -------------------------------------------
#
# A checkpoint is a directory:
#   manifest.json             config dict, training step, tensor index
#   tensors/<name>.bin        raw little-endian float32, C order
#
# Tensor names may contain dots (torch state-dict style); they are used
# verbatim as file stems.

def save_checkpoint(ckpt_dir, config: dict, step: int, tensors: dict) -> None:
    ckpt_dir = Path(ckpt_dir)
    tensor_dir = ckpt_dir / "tensors"
    tensor_dir.mkdir(parents=True, exist_ok=True)
    index = {}
    for name, arr in tensors.items():
        arr = np.ascontiguousarray(arr, dtype="<f4")
        fname = f"{name}.bin"
        (tensor_dir / fname).write_bytes(arr.tobytes())
        index[name] = {"shape": list(arr.shape), "dtype": "<f4", "file": f"tensors/{fname}"}
    save_json(ckpt_dir / "manifest.json", {"config": config, "step": int(step), "tensors": index})


def load_checkpoint(ckpt_dir) -> tuple[dict, int, dict]:
    ckpt_dir = Path(ckpt_dir)
    manifest = load_json(ckpt_dir / "manifest.json")
    tensors = {}
    for name, meta in manifest["tensors"].items():
        raw = (ckpt_dir / meta["file"]).read_bytes()
        tensors[name] = np.frombuffer(raw, dtype=meta["dtype"]).reshape(meta["shape"]).copy()
    return manifest["config"], manifest["step"], tensors
