"""Named-tensor checkpoint container.

Layout: magic "XHCKPT1\\0", u32 record count, then per tensor: u32 name
length, UTF-8 name, u32 rank, u32 extents, raw little-endian float32
data. Metadata (config echo, adapter flag, training step, optimizer
moments) rides along as reserved tensor names so the byte format stays
exactly this and nothing else.
"""

import json
import struct

import numpy as np

MAGIC = b"XHCKPT1\x00"

META_CONFIG = "meta.config_utf8"
META_ADAPTER = "meta.adapter"
META_STEP = "meta.step"


def save_tensors(path, tensors):
    """Write dict name -> ndarray. Order is the dict's iteration order."""
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", len(tensors)))
        for name, arr in tensors.items():
            arr = np.asarray(arr, dtype=np.float32)
            nb = name.encode("utf-8")
            f.write(struct.pack("<I", len(nb)))
            f.write(nb)
            f.write(struct.pack("<I", arr.ndim))
            for ext in arr.shape:
                f.write(struct.pack("<I", ext))
            f.write(arr.astype("<f4").tobytes())


def load_tensors(path):
    with open(path, "rb") as f:
        magic = f.read(8)
        if magic != MAGIC:
            raise ValueError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
        (count,) = struct.unpack("<I", f.read(4))
        out = {}
        for _ in range(count):
            (nlen,) = struct.unpack("<I", f.read(4))
            name = f.read(nlen).decode("utf-8")
            (rank,) = struct.unpack("<I", f.read(4))
            shape = struct.unpack(f"<{rank}I", f.read(4 * rank)) if rank else ()
            n = int(np.prod(shape)) if rank else 1
            raw = f.read(4 * n)
            if len(raw) != 4 * n:
                raise ValueError(f"{path}: truncated record '{name}'")
            out[name] = np.frombuffer(raw, dtype="<f4").reshape(shape).astype(np.float32)
    return out


def encode_text(text):
    """UTF-8 bytes as a float32 vector (values 0..255, exact in f32)."""
    return np.frombuffer(text.encode("utf-8"), dtype=np.uint8).astype(np.float32)


def decode_text(arr):
    return np.asarray(arr).astype(np.uint8).tobytes().decode("utf-8")


def pack_meta(tensors, config=None, adapter=False, step=None):
    """Attach reserved metadata records to a tensor dict (returns new dict)."""
    out = dict(tensors)
    if config is not None:
        out[META_CONFIG] = encode_text(json.dumps(config, sort_keys=True))
    out[META_ADAPTER] = np.asarray([1.0 if adapter else 0.0], dtype=np.float32)
    if step is not None:
        out[META_STEP] = np.asarray([float(step)], dtype=np.float32)
    return out


def split_meta(tensors):
    """Split a loaded dict into (plain tensors, meta dict)."""
    plain, meta = {}, {}
    for name, arr in tensors.items():
        if name == META_CONFIG:
            meta["config"] = json.loads(decode_text(arr))
        elif name == META_ADAPTER:
            meta["adapter"] = bool(arr.reshape(-1)[0])
        elif name == META_STEP:
            meta["step"] = int(round(float(arr.reshape(-1)[0])))
        else:
            plain[name] = arr
    return plain, meta
