"""PPM images, the ``transforms.json`` manifest, and client partitioning."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Sequence

import numpy as np

from ..errors import ContractError, FedNerfError
from ..nerf import CameraPose, PosedImage

MANIFEST = "transforms.json"


class DatasetError(FedNerfError):
    exit_code = 2


def to_bytes(pixels: np.ndarray) -> np.ndarray:
    """Quantize [0, 1] values to 0..255 with round-half-up."""
    return np.floor(np.clip(pixels, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)


def write_ppm(path, pixels: np.ndarray) -> None:
    data = to_bytes(pixels)
    h, w, _ = data.shape
    try:
        Path(path).write_bytes(f"P6\n{w} {h}\n255\n".encode() + data.tobytes())
    except OSError as exc:
        raise DatasetError(f"cannot write {path}: {exc}") from exc


def read_ppm(path) -> np.ndarray:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise DatasetError(f"cannot read {path}: {exc}") from exc
    tokens, pos = [], 0
    while len(tokens) < 4:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            pos = data.index(b"\n", pos) + 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        tokens.append(data[start:pos])
    pos += 1
    if tokens[0] != b"P6" or int(tokens[3]) != 255:
        raise DatasetError(f"{path}: only binary P6 with maxval 255 is supported")
    w, h = int(tokens[1]), int(tokens[2])
    body = data[pos:pos + w * h * 3]
    if len(body) != w * h * 3:
        raise DatasetError(f"{path}: truncated pixel data")
    return np.frombuffer(body, dtype=np.uint8).reshape(h, w, 3).astype(np.float64) / 255.0


def write_dataset(images: Sequence[PosedImage], out_dir) -> Path:
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise DatasetError(f"cannot create {out}: {exc}") from exc
    first = images[0].pose
    frames = []
    for i, img in enumerate(images):
        name = f"view_{i:03d}.ppm"
        write_ppm(out / name, img.pixels)
        frames.append({"file": name, "c2w": [float(v) for v in img.pose.c2w.reshape(-1)]})
    manifest = {"focal": float(first.focal), "width": first.width, "height": first.height, "frames": frames}
    (out / MANIFEST).write_text(json.dumps(manifest, indent=2) + "\n")
    return out


def load_dataset(root) -> list[PosedImage]:
    root = Path(root)
    try:
        manifest = json.loads((root / MANIFEST).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise DatasetError(f"cannot read {root / MANIFEST}: {exc}") from exc
    images = []
    for frame in manifest["frames"]:
        pose = CameraPose(np.asarray(frame["c2w"], dtype=np.float64).reshape(4, 4),
                          float(manifest["focal"]), int(manifest["width"]), int(manifest["height"]))
        images.append(PosedImage(pose, read_ppm(root / frame["file"])))
    return images


def partition_views(n_views: int, n_clients: int, views_per_client: int):
    """Give client ``i`` the ``i``-th block of consecutive ring views.

    Returns ``(client_views, test_views)`` where ``client_views[i]`` lists the
    view indices for device ``i + 1`` and the remaining views are held out.
    """
    needed = n_clients * views_per_client + 1
    if n_views < needed:
        raise ContractError(
            f"{n_clients} clients x {views_per_client} views + 1 test view needs {needed} views, "
            f"dataset has {n_views}", "views")
    clients = [list(range(i * views_per_client, (i + 1) * views_per_client)) for i in range(n_clients)]
    test = list(range(n_clients * views_per_client, n_views))
    return clients, test
