"""File formats: ``.grd`` images, JSON parameter files, atomic writes, PNG export."""
from __future__ import annotations

import json
import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from .errors import MissingArtifact
from .grid import Grid, ImageGrid

MAGIC = b"GRDIMG\x00\x01"


def atomic_write_bytes(path, data: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def write_json(path, obj) -> None:
    atomic_write_text(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def read_json(path):
    path = Path(path)
    if not path.exists():
        raise MissingArtifact(f"missing file: {path}")
    return json.loads(path.read_text())


def encode_grd(img: ImageGrid) -> bytes:
    values = img.values
    d = values.ndim
    channels = 2 if np.iscomplexobj(values) else 1
    head = MAGIC + struct.pack(f"<{2 + d}I", d, channels, *values.shape)
    head += struct.pack(f"<{2 * d}d", *img.origin, *img.spacing)
    if channels == 2:
        payload = np.ascontiguousarray(values, dtype="<c16").view("<f8")
    else:
        payload = np.ascontiguousarray(values, dtype="<f8")
    return head + payload.tobytes()


def decode_grd(data: bytes) -> ImageGrid:
    if data[:8] != MAGIC:
        raise ValueError("not a .grd file (bad magic)")
    off = 8
    d, channels = struct.unpack_from("<2I", data, off)
    off += 8
    shape = struct.unpack_from(f"<{d}I", data, off)
    off += 4 * d
    geo = struct.unpack_from(f"<{2 * d}d", data, off)
    off += 16 * d
    count = channels * int(np.prod(shape))
    flat = np.frombuffer(data, dtype="<f8", count=count, offset=off)
    if channels == 2:
        values = flat.view("<c16").reshape(shape).astype(np.complex128)
    elif channels == 1:
        values = flat.reshape(shape).astype(np.float64)
    else:
        raise ValueError(f"unsupported channel count {channels}")
    return ImageGrid(values, Grid(shape, geo[:d], geo[d:]))


def write_grd(path, img) -> None:
    if not isinstance(img, ImageGrid):
        arr = np.asarray(img)
        img = ImageGrid(arr, Grid(arr.shape, (0.0,) * arr.ndim, (1.0,) * arr.ndim))
    atomic_write_bytes(path, encode_grd(img))


def read_grd(path) -> ImageGrid:
    path = Path(path)
    if not path.exists():
        raise MissingArtifact(f"missing file: {path}")
    return decode_grd(path.read_bytes())


def to_uint8(values: np.ndarray) -> np.ndarray:
    """Linear window over the 1st..99th percentile of the magnitude."""
    mag = np.abs(values)
    lo, hi = np.percentile(mag, [1, 99])
    if hi <= lo:
        hi = lo + 1.0
    return np.clip(np.rint(255.0 * (mag - lo) / (hi - lo)), 0, 255).astype(np.uint8)


def write_png(path, values: np.ndarray) -> None:
    from io import BytesIO

    from PIL import Image

    buf = BytesIO()
    Image.fromarray(to_uint8(values)).save(buf, format="PNG")
    atomic_write_bytes(path, buf.getvalue())


def write_montage(path, images, cols: int) -> None:
    """Tile equally sized images row-major into one PNG; ``None`` cells stay black."""
    images = list(images)
    shapes = [np.shape(im) for im in images if im is not None]
    if not shapes:
        return
    h, w = shapes[0]
    rows = -(-len(images) // cols)
    canvas = np.zeros((rows * h, cols * w), dtype=np.uint8)
    for k, im in enumerate(images):
        if im is None:
            continue
        r, c = divmod(k, cols)
        canvas[r * h : (r + 1) * h, c * w : (c + 1) * w] = to_uint8(np.asarray(im))
    from io import BytesIO

    from PIL import Image

    buf = BytesIO()
    Image.fromarray(canvas).save(buf, format="PNG")
    atomic_write_bytes(path, buf.getvalue())
