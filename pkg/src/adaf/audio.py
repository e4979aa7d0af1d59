"""WAV decode/encode, polyphase resampling, and patch extraction.

The WAV path is a deliberately small RIFF parser: PCM 16-bit signed or
32-bit float, any channel count. Decoded audio is mono float in [-1, 1].
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np
from scipy.signal import resample_poly

from .errors import DecodeError, TooShortError, UnsupportedFormatError, ValidationError

TARGET_RATE = 16000
DEFAULT_PATCH_LEN = 400  # 25 ms at 16 kHz


@dataclass
class AudioClip:
    samples: np.ndarray      # mono float, |x| <= 1
    sample_rate: int
    source_id: str = ""


@dataclass
class PatchSequence:
    patches: np.ndarray                  # T x P
    label: np.ndarray | None = None      # C-dim multi-hot, filled by caller
    clip_id: str = ""


def decode_wav(path) -> AudioClip:
    """Parse a RIFF/WAVE file into a normalized mono AudioClip."""
    with open(path, "rb") as f:
        raw = f.read()
    if len(raw) < 12:
        raise DecodeError(f"{path}: file too short for RIFF header (offset 0)")
    if raw[0:4] != b"RIFF":
        raise DecodeError(f"{path}: missing RIFF magic at offset 0")
    if raw[8:12] != b"WAVE":
        raise DecodeError(f"{path}: missing WAVE form type at offset 8")

    fmt = None
    data = None
    pos = 12
    while pos + 8 <= len(raw):
        cid = raw[pos:pos + 4]
        (size,) = struct.unpack_from("<I", raw, pos + 4)
        body = raw[pos + 8:pos + 8 + size]
        if cid == b"fmt ":
            if size < 16:
                raise DecodeError(f"{path}: fmt chunk too small at offset {pos}")
            fmt = struct.unpack_from("<HHIIHH", body, 0)
        elif cid == b"data":
            if len(body) < size:
                raise DecodeError(
                    f"{path}: truncated data chunk at offset {pos} "
                    f"(declared {size}, present {len(body)})")
            data = body
        pos += 8 + size + (size & 1)  # chunks are word-aligned

    if fmt is None:
        raise DecodeError(f"{path}: no fmt chunk found")
    if data is None:
        raise DecodeError(f"{path}: no data chunk found")
    audio_format, channels, rate, _, _, bits = fmt
    if channels < 1 or rate < 1:
        raise DecodeError(f"{path}: nonsensical fmt chunk (channels={channels}, rate={rate})")

    if audio_format == 1 and bits == 16:
        x = np.frombuffer(data[:len(data) - len(data) % 2], dtype="<i2")
        x = x.astype(np.float64) / 32768.0
    elif audio_format == 3 and bits == 32:
        x = np.frombuffer(data[:len(data) - len(data) % 4], dtype="<f4").astype(np.float64)
    else:
        raise UnsupportedFormatError(
            f"{path}: unsupported encoding (format={audio_format}, bits={bits}); "
            "only 16-bit PCM and 32-bit float are handled")

    frames = len(x) // channels
    if frames == 0:
        raise DecodeError(f"{path}: empty data chunk")
    x = x[:frames * channels].reshape(frames, channels).mean(axis=1)
    x = np.clip(x, -1.0, 1.0)
    return AudioClip(samples=x.astype(np.float32), sample_rate=rate, source_id=str(path))


def encode_wav(path, samples, sample_rate):
    """Write mono 16-bit PCM WAV."""
    x = np.clip(np.asarray(samples, dtype=np.float64), -1.0, 1.0)
    pcm = np.round(x * 32767.0).astype("<i2").tobytes()
    with open(path, "wb") as f:
        f.write(b"RIFF" + struct.pack("<I", 36 + len(pcm)) + b"WAVE")
        f.write(b"fmt " + struct.pack("<IHHIIHH", 16, 1, 1, sample_rate,
                                      sample_rate * 2, 2, 16))
        f.write(b"data" + struct.pack("<I", len(pcm)) + pcm)


def _kaiser_sinc_filter(up, down, taps_per_phase=64, beta=8.6):
    """Odd-length Kaiser-windowed sinc low-pass with gain `up`."""
    length = taps_per_phase * up + 1
    n = np.arange(length) - (length - 1) / 2
    fc = 0.5 / max(up, down)  # cutoff in the upsampled domain
    h = 2 * fc * np.sinc(2 * fc * n) * np.kaiser(length, beta)
    return up * h / h.sum()  # DC gain `up` compensates the zero-stuffing


def resample(clip: AudioClip, target_rate: int) -> AudioClip:
    """Windowed-sinc polyphase resampling (Kaiser window, 64 taps/phase)."""
    if target_rate <= 0:
        raise ValidationError(f"target_rate must be positive, got {target_rate}")
    if clip.sample_rate == target_rate:
        return AudioClip(clip.samples.copy(), target_rate, clip.source_id)
    g = math.gcd(clip.sample_rate, target_rate)
    up, down = target_rate // g, clip.sample_rate // g
    h = _kaiser_sinc_filter(up, down)
    y = resample_poly(clip.samples.astype(np.float64), up, down, window=h)
    y = np.clip(y, -1.0, 1.0).astype(np.float32)
    return AudioClip(y, target_rate, clip.source_id)


def patchify(clip: AudioClip, patch_length: int = DEFAULT_PATCH_LEN) -> PatchSequence:
    """Cut into non-overlapping patches; trailing partial patch is dropped."""
    if patch_length < 1:
        raise ValidationError(f"patch_length must be >= 1, got {patch_length}")
    if clip.sample_rate != TARGET_RATE:
        raise ValidationError(
            f"patchify expects {TARGET_RATE} Hz audio, got {clip.sample_rate}; "
            "resample first")
    n = len(clip.samples)
    t = n // patch_length
    if t < 1:
        raise TooShortError(
            f"clip {clip.source_id!r} has {n} samples, shorter than one "
            f"patch of {patch_length}")
    patches = np.asarray(clip.samples[:t * patch_length],
                         dtype=np.float32).reshape(t, patch_length)
    return PatchSequence(patches=patches, clip_id=clip.source_id)
