"""Canvas I/O.

Two on-disk forms:

* raw tensor — magic ``CNVT``, version, dimension header, little-endian
  float32 data. Lossless for pipeline round trips (values are stored at
  float32 precision; reading restores them exactly).
* 8-bit PNG — for human inspection, mapped linearly [−1, 1] ↔ [0, 255];
  round trips are quantization-bounded by 1/255 per channel.

Datasets for training are directories with one subdirectory per class
label (or unlabeled files at the top level), holding ``.cnvt`` tensors
and/or ``.png`` images.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np
from PIL import Image

__all__ = [
    "write_tensor",
    "read_tensor",
    "write_image",
    "read_image",
    "read_canvas",
    "load_dataset",
]

_TENSOR_MAGIC = b"CNVT"
_TENSOR_VERSION = 1


def write_tensor(path, array: np.ndarray) -> None:
    array = np.asarray(array, dtype=np.float32)
    header = _TENSOR_MAGIC + struct.pack("<II", _TENSOR_VERSION, array.ndim)
    header += struct.pack(f"<{array.ndim}I", *array.shape)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(array.astype("<f4").tobytes())


def read_tensor(path) -> np.ndarray:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != _TENSOR_MAGIC:
        raise ValueError(f"{path}: not a canvas tensor file")
    version, ndim = struct.unpack_from("<II", blob, 4)
    if version != _TENSOR_VERSION:
        raise ValueError(f"{path}: unsupported tensor version {version}")
    shape = struct.unpack_from(f"<{ndim}I", blob, 12)
    count = int(np.prod(shape))
    data = np.frombuffer(blob, dtype="<f4", count=count, offset=12 + 4 * ndim)
    if data.size != count:
        raise ValueError(f"{path}: truncated tensor data")
    return data.astype(np.float64).reshape(shape)


def write_image(path, array: np.ndarray) -> None:
    """Write a canvas in [−1, 1] as an 8-bit grayscale or RGB PNG."""
    array = np.asarray(array, dtype=np.float64)
    quantized = np.clip(np.rint((array + 1.0) * 127.5), 0, 255).astype(np.uint8)
    if quantized.ndim == 3 and quantized.shape[2] == 1:
        quantized = quantized[:, :, 0]
    if quantized.ndim == 2:
        Image.fromarray(quantized, mode="L").save(path)
    elif quantized.ndim == 3 and quantized.shape[2] == 3:
        Image.fromarray(quantized, mode="RGB").save(path)
    else:
        raise ValueError(f"cannot write canvas of shape {array.shape} as an image")


def read_image(path) -> np.ndarray:
    """Read an 8-bit image back to a float canvas in [−1, 1]."""
    with Image.open(path) as img:
        if img.mode not in ("L", "RGB"):
            img = img.convert("RGB" if img.mode in ("RGBA", "P") else "L")
        data = np.asarray(img, dtype=np.float64)
    return data / 127.5 - 1.0


def read_canvas(path) -> np.ndarray:
    """Read either on-disk form, chosen by extension."""
    path = Path(path)
    if path.suffix == ".cnvt":
        return read_tensor(path)
    return read_image(path)


def load_dataset(root) -> list[tuple[np.ndarray, str | None]]:
    """Load (canvas, label) pairs from a dataset directory.

    Subdirectory names are class labels; files directly under the root
    are unlabeled. Entries are sorted for reproducible ordering.
    """
    root = Path(root)
    if not root.is_dir():
        raise ValueError(f"dataset directory not found: {root}")
    pairs: list[tuple[np.ndarray, str | None]] = []
    for path in sorted(root.iterdir()):
        if path.is_dir():
            for f in sorted(path.iterdir()):
                if f.suffix in (".cnvt", ".png"):
                    pairs.append((read_canvas(f), path.name))
        elif path.suffix in (".cnvt", ".png"):
            pairs.append((read_canvas(path), None))
    if not pairs:
        raise ValueError(f"dataset directory {root} holds no .cnvt or .png files")
    return pairs
