"""Synthetic datasets, embedding text files and binary checkpoints.

Embedding file (UTF-8 text)::

    dtn-embed v1 dim=<D>
    <class_label>,<v1>,...,<vD>
    ...

Checkpoint file (little-endian)::

    b"DTNC" | u32 version | u32 section_count
    section*: u32 name_len | name (utf-8) | u8 kind | u64 payload_len | payload
    u32 crc32 of all preceding bytes

kind 0 is a float64 array (u32 ndim | u64 dims... | row-major f8 values),
kind 1 is UTF-8 text (JSON for structured sections).
"""
from __future__ import annotations

import json
import math
import re
import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .episodes import Dataset
from .errors import (CheckpointCorruptError, CheckpointVersionError, ConfigError, ParseError)
from .model import ModelConfig, ModelState, init_model

# -- synthetic data --------------------------------------------------------------


@dataclass(frozen=True)
class SyntheticSpec:
    """Class means on a radius-4 sphere plus variation along one shared basis.

    Because the variation basis is shared by every class, the offset between
    two samples of a seen class is a plausible offset for a novel class too.
    """
    class_count: int = 21
    dim: int = 16
    samples_per_class: int = 60
    variation_dims: int = 6
    variation_scale: float = 1.0
    noise_scale: float = 0.3
    seed: int = 0
    mean_radius: float = 4.0

    def __post_init__(self):
        if self.variation_dims > self.dim:
            raise ConfigError(f"variation_dims ({self.variation_dims}) exceeds dim ({self.dim})")
        if min(self.class_count, self.dim, self.samples_per_class) < 1 or self.variation_dims < 0:
            raise ConfigError(f"invalid synthetic spec {self}")
        if self.variation_scale < 0 or self.noise_scale < 0:
            raise ConfigError("scales must be non-negative")


def _draw_structure(spec: SyntheticSpec, rng: np.random.Generator):
    basis, _ = np.linalg.qr(rng.standard_normal((spec.dim, spec.variation_dims)))
    means = rng.standard_normal((spec.class_count, spec.dim))
    means *= spec.mean_radius / np.linalg.norm(means, axis=1, keepdims=True)
    return basis, means


def synthetic_structure(spec: SyntheticSpec) -> tuple[np.ndarray, np.ndarray]:
    """(orthonormal variation basis [dim x V_d], class means [classes x dim])."""
    return _draw_structure(spec, np.random.default_rng(spec.seed))


def gen_synthetic(spec: SyntheticSpec) -> Dataset:
    rng = np.random.default_rng(spec.seed)
    basis, means = _draw_structure(spec, rng)
    n = spec.samples_per_class
    labels = np.repeat(np.arange(spec.class_count), n)
    coeffs = rng.standard_normal((labels.size, spec.variation_dims)) * spec.variation_scale
    noise = rng.standard_normal((labels.size, spec.dim)) * spec.noise_scale
    x = means[labels] + coeffs @ basis.T + noise
    return Dataset(x, labels)


def gen_unstructured(class_count: int = 20, dim: int = 16, samples_per_class: int = 60,
                     seed: int = 0) -> Dataset:
    """Every class drawn from the same standard normal: labels carry no signal."""
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((class_count * samples_per_class, dim))
    return Dataset(x, np.repeat(np.arange(class_count), samples_per_class))


# -- embedding files -------------------------------------------------------------

_HEADER = re.compile(r"^dtn-embed v1 dim=(\d+)$")


def write_embeddings(ds: Dataset, path) -> None:
    lines = [f"dtn-embed v1 dim={ds.dim}"]
    for label, row in zip(ds.labels.tolist(), ds.x):
        lines.append(",".join([str(label)] + [repr(float(v)) for v in row]))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_embeddings(path) -> Dataset:
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().rstrip("\r\n")
        m = _HEADER.match(header)
        if not m:
            raise ParseError(f"bad header {header!r}, expected 'dtn-embed v1 dim=<D>'", 1)
        dim = int(m.group(1))
        if dim < 1:
            raise ParseError("dim must be positive", 1)
        labels, rows = [], []
        for lineno, line in enumerate(fh, start=2):
            line = line.rstrip("\r\n")
            if not line.strip():
                continue
            fields = line.split(",")
            if len(fields) != dim + 1:
                raise ParseError(f"expected {dim + 1} fields, found {len(fields)}", lineno)
            try:
                values = [float(v) for v in fields[1:]]
            except ValueError as exc:
                raise ParseError(f"non-numeric value ({exc})", lineno) from None
            if not all(math.isfinite(v) for v in values):
                raise ParseError("non-finite value", lineno)
            labels.append(fields[0].strip())
            rows.append(values)
    if not rows:
        return Dataset(np.zeros((0, dim)), np.zeros(0, dtype=str))
    return Dataset(np.array(rows), np.array(labels))


# -- checkpoints -----------------------------------------------------------------

MAGIC = b"DTNC"
FORMAT_VERSION = 1
_KIND_ARRAY = 0
_KIND_TEXT = 1


@dataclass
class Checkpoint:
    state: ModelState
    schedule: str = ""
    config: dict = field(default_factory=dict)
    rng_states: dict = field(default_factory=dict)
    progress: dict = field(default_factory=dict)
    velocity: dict[str, np.ndarray] = field(default_factory=dict)
    format_version: int = FORMAT_VERSION


def _pack_array(a: np.ndarray) -> bytes:
    a = np.asarray(a, dtype="<f8")
    return struct.pack("<I", a.ndim) + struct.pack(f"<{a.ndim}Q", *a.shape) + a.tobytes(order="C")


def _unpack_array(payload: bytes, name: str) -> np.ndarray:
    try:
        (ndim,) = struct.unpack_from("<I", payload, 0)
        shape = struct.unpack_from(f"<{ndim}Q", payload, 4)
    except struct.error:
        raise CheckpointCorruptError(f"section {name!r}: truncated array header") from None
    offset = 4 + 8 * ndim
    count = int(np.prod(shape)) if ndim else 1
    if len(payload) - offset != 8 * count:
        raise CheckpointCorruptError(f"section {name!r}: payload size does not match shape {shape}")
    return np.frombuffer(payload, dtype="<f8", offset=offset).reshape(shape).astype(np.float64)


def _json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def encode_checkpoint(ckpt: Checkpoint) -> bytes:
    state = ckpt.state
    sections: list[tuple[str, int, bytes]] = [
        ("model", _KIND_TEXT, _json({"config": state.config.to_dict(),
                                     "step_count": state.step_count}).encode()),
        ("schedule", _KIND_TEXT, ckpt.schedule.encode()),
        ("config", _KIND_TEXT, _json(ckpt.config).encode()),
        ("rng", _KIND_TEXT, _json(ckpt.rng_states).encode()),
        ("progress", _KIND_TEXT, _json(ckpt.progress).encode()),
    ]
    for name, t in state.named_parameters().items():
        sections.append((f"param/{name}", _KIND_ARRAY, _pack_array(t.data)))
    for name in sorted(ckpt.velocity):
        sections.append((f"velocity/{name}", _KIND_ARRAY, _pack_array(ckpt.velocity[name])))
    body = bytearray(MAGIC + struct.pack("<II", FORMAT_VERSION, len(sections)))
    for name, kind, payload in sections:
        raw = name.encode()
        body += struct.pack("<I", len(raw)) + raw + struct.pack("<BQ", kind, len(payload)) + payload
    body += struct.pack("<I", zlib.crc32(bytes(body)))
    return bytes(body)


def decode_checkpoint(blob: bytes) -> Checkpoint:
    if len(blob) < 12 or blob[:4] != MAGIC:
        raise CheckpointCorruptError("missing DTNC magic bytes")
    version, count = struct.unpack_from("<II", blob, 4)
    if version != FORMAT_VERSION:
        raise CheckpointVersionError(f"checkpoint format version {version}, this build reads {FORMAT_VERSION}")
    if len(blob) < 16 or struct.unpack_from("<I", blob, len(blob) - 4)[0] != zlib.crc32(blob[:-4]):
        raise CheckpointCorruptError("checksum mismatch (file truncated or modified)")
    pos, end = 12, len(blob) - 4
    sections: dict[str, tuple[int, bytes]] = {}
    try:
        for _ in range(count):
            (n,) = struct.unpack_from("<I", blob, pos)
            name = blob[pos + 4:pos + 4 + n].decode()
            pos += 4 + n
            kind, size = struct.unpack_from("<BQ", blob, pos)
            pos += 9
            if pos + size > end:
                raise CheckpointCorruptError(f"section {name!r} runs past end of file")
            sections[name] = (kind, blob[pos:pos + size])
            pos += size
    except struct.error:
        raise CheckpointCorruptError("truncated section header") from None
    if pos != end:
        raise CheckpointCorruptError(f"{end - pos} trailing bytes after last section")

    def text(name):
        if name not in sections or sections[name][0] != _KIND_TEXT:
            raise CheckpointCorruptError(f"missing text section {name!r}")
        return sections[name][1].decode()

    model_meta = json.loads(text("model"))
    state = init_model(ModelConfig.from_dict(model_meta["config"]), np.random.default_rng(0))
    arrays = {k[len("param/"):]: _unpack_array(v, k) for k, (kind, v) in sections.items()
              if k.startswith("param/")}
    try:
        state.load_arrays(arrays)
    except (KeyError, ValueError) as exc:
        raise CheckpointCorruptError(str(exc)) from None
    state.step_count = int(model_meta["step_count"])
    velocity = {k[len("velocity/"):]: _unpack_array(v, k) for k, (kind, v) in sections.items()
                if k.startswith("velocity/")}
    return Checkpoint(state=state, schedule=text("schedule"), config=json.loads(text("config")),
                      rng_states=json.loads(text("rng")), progress=json.loads(text("progress")),
                      velocity=velocity, format_version=version)


def save_checkpoint(ckpt: Checkpoint | ModelState, path) -> None:
    if isinstance(ckpt, ModelState):
        ckpt = Checkpoint(ckpt)
    Path(path).write_bytes(encode_checkpoint(ckpt))


def load_checkpoint(path) -> Checkpoint:
    return decode_checkpoint(Path(path).read_bytes())
