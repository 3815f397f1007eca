"""Binary file formats for windowed datasets ("SLDS") and trained models ("SLNN").

Both formats share a 12-byte prefix:

    magic[4] | version u16 | precision u8 (0=f32, 1=f64) | flags u8 | crc32 u32

followed by a payload whose CRC-32 must match the header. Everything is
little-endian with a fixed field order and no timestamps, so identical
inputs produce byte-identical files on any platform.

SLDS payload:
    n_samples u64 | in_width u64 | out_width u64 | meta_len u64
    input block (row-major) | output block (row-major) | metadata utf-8

SLNN payload (flags bit0 = bias-free, bit1/bit2 = input/output scaling present):
    n_mats u32 | widths u64 x (n_mats+1) | activation codes u8 x (n_mats-1)
    [in gain/offset f64 x width0] [out gain/offset f64 x widthL]
    per layer: weights (+ bias unless bias-free) in the declared precision
    meta_len u64 | metadata utf-8

Metadata is `key = value` text in [section] blocks; datasets carry their
window config and provenance, models carry training provenance plus an
optional embedded window config under "window." keys.
"""

from __future__ import annotations

import struct
import zlib

import numpy as np

from .engine import Channel, OutputChannel, SlideConfig, WindowedDataset
from .errors import ConfigError, FormatError
from .neuralnet import AffineScaling, MlpModel

DATASET_MAGIC = b"SLDS"
MODEL_MAGIC = b"SLNN"
FORMAT_VERSION = 1

_PREFIX = struct.Struct("<4sHBBI")
_ACT_CODES = {"identity": 0, "relu": 1, "elu": 2, "tanh": 3}
_ACT_NAMES = {v: k for k, v in _ACT_CODES.items()}
_PRECISION = {0: np.dtype(np.float32), 1: np.dtype(np.float64)}


def _precision_code(dtype):
    dtype = np.dtype(dtype)
    for code, dt in _PRECISION.items():
        if dt == dtype:
            return code
    raise ConfigError(f"unsupported precision {dtype}")


class _Cursor:
    """Sequential reader that reports the byte offset of any shortfall."""

    def __init__(self, data, start=0):
        self.data = data
        self.pos = start

    def take(self, n):
        if self.pos + n > len(self.data):
            raise FormatError(
                f"truncated file: wanted {n} bytes, {len(self.data) - self.pos} left",
                offset=self.pos,
            )
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt):
        s = struct.Struct(fmt)
        return s.unpack(self.take(s.size))

    def array(self, dtype, count):
        raw = self.take(count * dtype.itemsize)
        return np.frombuffer(raw, dtype=dtype.newbyteorder("<")).astype(dtype, copy=True)


def _check_prefix(cur: _Cursor, magic):
    got_magic, version, precision, flags, crc = cur.unpack("<4sHBBI")
    if got_magic != magic:
        raise FormatError(f"bad magic {got_magic!r}, expected {magic!r}", offset=0)
    if version != FORMAT_VERSION:
        raise FormatError(f"unsupported format version {version}", offset=4)
    if precision not in _PRECISION:
        raise FormatError(f"unknown precision code {precision}", offset=6)
    payload = cur.data[cur.pos:]
    if zlib.crc32(payload) != crc:
        raise FormatError("payload CRC-32 mismatch", offset=8)
    return _PRECISION[precision], flags


def _le_bytes(arr, dtype):
    return np.ascontiguousarray(arr, dtype=dtype.newbyteorder("<")).tobytes()


# ---------------------------------------------------------------------------
# metadata text
# ---------------------------------------------------------------------------

def _channel_str(ch: Channel) -> str:
    if ":" in ch.name:
        raise ConfigError(f"channel name {ch.name!r} must not contain ':'")
    return f"{ch.source}:{ch.index}:{ch.encoding}:{ch.gain!r}:{ch.offset!r}:{ch.name}"


def _channel_from(text: str) -> Channel:
    source, index, encoding, gain, offset, name = text.split(":")
    return Channel(source=source, index=int(index), encoding=encoding,
                   gain=float(gain), offset=float(offset), name=name)


def _output_str(ch: OutputChannel) -> str:
    if ":" in ch.name:
        raise ConfigError(f"output name {ch.name!r} must not contain ':'")
    return f"{ch.index}:{ch.gain!r}:{ch.offset!r}:{ch.name}"


def _output_from(text: str) -> OutputChannel:
    index, gain, offset, name = text.split(":")
    return OutputChannel(index=int(index), gain=float(gain),
                         offset=float(offset), name=name)


def window_to_items(config: SlideConfig) -> dict:
    """Flatten a window config into string key/value pairs."""
    items = {
        "h": repr(config.h),
        "n_in": str(config.n_in),
        "n_out": str(config.n_out),
        "with_initial_conditions": str(config.with_initial_conditions),
    }
    for i, ch in enumerate(config.inputs):
        items[f"input{i}"] = _channel_str(ch)
    for i, ch in enumerate(config.outputs):
        items[f"output{i}"] = _output_str(ch)
    return items


def window_from_items(items: dict) -> SlideConfig:
    inputs = []
    outputs = []
    i = 0
    while f"input{i}" in items:
        inputs.append(_channel_from(items[f"input{i}"]))
        i += 1
    i = 0
    while f"output{i}" in items:
        outputs.append(_output_from(items[f"output{i}"]))
        i += 1
    return SlideConfig(
        h=float(items["h"]),
        n_in=int(items["n_in"]),
        n_out=int(items["n_out"]),
        inputs=tuple(inputs),
        outputs=tuple(outputs),
        with_initial_conditions=items.get("with_initial_conditions") == "True",
    )


def _meta_text(sections: dict) -> str:
    lines = []
    for section, items in sections.items():
        lines.append(f"[{section}]")
        for key in items:
            lines.append(f"{key} = {items[key]}")
        lines.append("")
    return "\n".join(lines)


def _meta_parse(text: str) -> dict:
    sections = {}
    current = None
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1]
            sections[current] = {}
            continue
        if "=" not in line or current is None:
            raise FormatError(f"malformed metadata line {lineno}: {line!r}")
        key, _, value = line.partition("=")
        sections[current][key.strip()] = value.strip()
    return sections


def embed_window_meta(meta: dict, config: SlideConfig) -> dict:
    """Add a window config to a model meta dict under 'window.' keys."""
    out = dict(meta)
    for key, value in window_to_items(config).items():
        out[f"window.{key}"] = value
    return out


def extract_window_meta(meta: dict) -> SlideConfig | None:
    items = {k[len("window."):]: v for k, v in meta.items() if k.startswith("window.")}
    if not items:
        return None
    return window_from_items(items)


# ---------------------------------------------------------------------------
# dataset files
# ---------------------------------------------------------------------------

def save_dataset(dataset: WindowedDataset, path):
    dtype = np.dtype(dataset.inputs.dtype)
    code = _precision_code(dtype)
    meta = _meta_text({
        "window": window_to_items(dataset.config),
        "provenance": dict(sorted(dataset.provenance.items())),
    }).encode("utf-8")

    payload = bytearray()
    payload += struct.pack("<QQQQ", len(dataset), dataset.input_width,
                           dataset.output_width, len(meta))
    payload += _le_bytes(dataset.inputs, dtype)
    payload += _le_bytes(dataset.outputs, dtype)
    payload += meta

    with open(path, "wb") as fh:
        fh.write(_PREFIX.pack(DATASET_MAGIC, FORMAT_VERSION, code, 0,
                              zlib.crc32(bytes(payload))))
        fh.write(payload)


def load_dataset(path) -> WindowedDataset:
    with open(path, "rb") as fh:
        data = fh.read()
    cur = _Cursor(data)
    dtype, _ = _check_prefix(cur, DATASET_MAGIC)

    n_samples, in_width, out_width, meta_len = cur.unpack("<QQQQ")
    implied = (_PREFIX.size + 32
               + (n_samples * (in_width + out_width)) * dtype.itemsize + meta_len)
    if implied != len(data):
        raise FormatError(
            f"header implies {implied} bytes, file has {len(data)}", offset=cur.pos
        )
    inputs = cur.array(dtype, n_samples * in_width).reshape(n_samples, in_width)
    outputs = cur.array(dtype, n_samples * out_width).reshape(n_samples, out_width)
    sections = _meta_parse(cur.take(meta_len).decode("utf-8"))
    if "window" not in sections:
        raise FormatError("dataset metadata lacks a [window] section")
    config = window_from_items(sections["window"])
    return WindowedDataset(inputs=inputs, outputs=outputs, config=config,
                           provenance=sections.get("provenance", {}))


# ---------------------------------------------------------------------------
# model files
# ---------------------------------------------------------------------------

def save_model(model: MlpModel, path):
    dtype = np.dtype(model.dtype)
    code = _precision_code(dtype)
    flags = (1 if model.bias_free else 0)
    flags |= (2 if model.in_scale is not None else 0)
    flags |= (4 if model.out_scale is not None else 0)
    meta = _meta_text({"meta": dict(sorted(model.meta.items()))}).encode("utf-8")

    payload = bytearray()
    payload += struct.pack("<I", model.n_layers)
    payload += struct.pack(f"<{len(model.widths)}Q", *model.widths)
    for act in model.activations:
        payload += struct.pack("<B", _ACT_CODES[act])
    f64 = np.dtype(np.float64)
    if model.in_scale is not None:
        payload += _le_bytes(model.in_scale.gain, f64)
        payload += _le_bytes(model.in_scale.offset, f64)
    if model.out_scale is not None:
        payload += _le_bytes(model.out_scale.gain, f64)
        payload += _le_bytes(model.out_scale.offset, f64)
    for i in range(model.n_layers):
        payload += _le_bytes(model.weights[i], dtype)
        if model.biases is not None:
            payload += _le_bytes(model.biases[i], dtype)
    payload += struct.pack("<Q", len(meta))
    payload += meta

    with open(path, "wb") as fh:
        fh.write(_PREFIX.pack(MODEL_MAGIC, FORMAT_VERSION, code, flags,
                              zlib.crc32(bytes(payload))))
        fh.write(payload)


def load_model(path) -> MlpModel:
    with open(path, "rb") as fh:
        data = fh.read()
    cur = _Cursor(data)
    dtype, flags = _check_prefix(cur, MODEL_MAGIC)
    bias_free = bool(flags & 1)

    (n_mats,) = cur.unpack("<I")
    if n_mats < 1:
        raise FormatError("model declares no layers", offset=cur.pos - 4)
    widths = cur.unpack(f"<{n_mats + 1}Q")
    act_codes = cur.unpack(f"<{n_mats - 1}B") if n_mats > 1 else ()
    try:
        activations = tuple(_ACT_NAMES[c] for c in act_codes)
    except KeyError as exc:
        raise FormatError(f"unknown activation code {exc}", offset=cur.pos - 1) from exc

    f64 = np.dtype(np.float64)
    in_scale = out_scale = None
    if flags & 2:
        gain = cur.array(f64, widths[0])
        offset = cur.array(f64, widths[0])
        in_scale = AffineScaling(gain, offset)
    if flags & 4:
        gain = cur.array(f64, widths[-1])
        offset = cur.array(f64, widths[-1])
        out_scale = AffineScaling(gain, offset)

    weights = []
    biases = None if bias_free else []
    for i in range(n_mats):
        weights.append(cur.array(dtype, widths[i + 1] * widths[i])
                       .reshape(widths[i + 1], widths[i]))
        if not bias_free:
            biases.append(cur.array(dtype, widths[i + 1]))

    (meta_len,) = cur.unpack("<Q")
    sections = _meta_parse(cur.take(meta_len).decode("utf-8"))
    if cur.pos != len(data):
        raise FormatError(f"{len(data) - cur.pos} trailing bytes", offset=cur.pos)
    return MlpModel(widths=tuple(int(w) for w in widths), activations=activations,
                    weights=weights, biases=biases, dtype=dtype,
                    in_scale=in_scale, out_scale=out_scale,
                    meta=sections.get("meta", {}))
