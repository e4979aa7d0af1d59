"""Binary checkpoint format: named float32 tensors plus a JSON trailer.

Layout (all little-endian):
  magic "ADAF" | u32 version | u32 tensor count
  per tensor: u32 name length | UTF-8 name | u32 rank | u64 per dim |
              raw float32 values (row-major)
  u32 JSON length | UTF-8 JSON config snapshot

Optimizer and RNG state ride along as additional named tensors. Tensors
are written in sorted-name order so save -> load -> save is byte-identical.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .errors import DecodeError

MAGIC = b"ADAF"
VERSION = 1


def save_checkpoint(path, tensors, config):
    buf = bytearray()
    buf += MAGIC
    buf += struct.pack("<II", VERSION, len(tensors))
    for name in sorted(tensors):
        # note: asarray (not ascontiguousarray) keeps 0-d tensors rank 0
        arr = np.asarray(tensors[name], dtype="<f4")
        nb = name.encode("utf-8")
        buf += struct.pack("<I", len(nb)) + nb
        buf += struct.pack("<I", arr.ndim)
        buf += struct.pack(f"<{arr.ndim}Q", *arr.shape) if arr.ndim else b""
        buf += arr.tobytes()
    cj = json.dumps(config, sort_keys=True, separators=(",", ":")).encode("utf-8")
    buf += struct.pack("<I", len(cj)) + cj
    with open(path, "wb") as f:
        f.write(buf)


def load_checkpoint(path):
    with open(path, "rb") as f:
        raw = f.read()
    if raw[:4] != MAGIC:
        raise DecodeError(f"{path}: bad checkpoint magic at offset 0")
    try:
        version, count = struct.unpack_from("<II", raw, 4)
        if version != VERSION:
            raise DecodeError(f"{path}: unsupported checkpoint version {version}")
        pos = 12
        tensors = {}
        for _ in range(count):
            (nlen,) = struct.unpack_from("<I", raw, pos)
            pos += 4
            name = raw[pos:pos + nlen].decode("utf-8")
            pos += nlen
            (rank,) = struct.unpack_from("<I", raw, pos)
            pos += 4
            dims = struct.unpack_from(f"<{rank}Q", raw, pos) if rank else ()
            pos += 8 * rank
            n = int(np.prod(dims)) if rank else 1
            arr = np.frombuffer(raw, dtype="<f4", count=n, offset=pos)
            pos += 4 * n
            tensors[name] = arr.reshape(tuple(dims)).copy()
        (clen,) = struct.unpack_from("<I", raw, pos)
        pos += 4
        config = json.loads(raw[pos:pos + clen].decode("utf-8"))
    except (struct.error, UnicodeDecodeError, ValueError) as exc:
        raise DecodeError(f"{path}: truncated or corrupt checkpoint: {exc}") from exc
    return tensors, config


# -- RNG state as a float32 tensor ------------------------------------------
# PCG64 state fits in a handful of integers; each is split into 16-bit
# chunks, which float32 represents exactly.

def _int_to_chunks(value, n_chunks):
    return [(value >> (16 * i)) & 0xFFFF for i in range(n_chunks)]


def _chunks_to_int(chunks):
    return sum(int(c) << (16 * i) for i, c in enumerate(chunks))


def rng_state_to_array(generator):
    st = generator.bit_generator.state
    vals = (_int_to_chunks(st["state"]["state"], 8)
            + _int_to_chunks(st["state"]["inc"], 8)
            + [int(st["has_uint32"])]
            + _int_to_chunks(int(st["uinteger"]), 2))
    return np.array(vals, dtype=np.float32)


def rng_state_from_array(arr):
    vals = [int(round(float(v))) for v in arr]
    gen = np.random.Generator(np.random.PCG64())
    gen.bit_generator.state = {
        "bit_generator": "PCG64",
        "state": {"state": _chunks_to_int(vals[0:8]),
                  "inc": _chunks_to_int(vals[8:16])},
        "has_uint32": vals[16],
        "uinteger": _chunks_to_int(vals[17:19]),
    }
    return gen
