"""Versioned binary serialization of a boosted ensemble.

Layout (all little-endian), with a trailing CRC32 over every preceding
byte:

    magic "SGBC" | u32 version | u32 class count | f64 shrinkage
    basic learner block
    u32 stage count
    per stage: f64 step size | u32-prefixed kept rows | u32-prefixed kept
               cols | learner block
    u32 crc32

A learner block is: u32-prefixed UTF-8 profile name, u32 C/H/W geometry,
u32 parameter count, then each parameter as u32 ndim, u32 dims, f64 data.
The checksum is verified before anything is reconstructed, so a corrupt
file never yields a partial ensemble.
"""

import struct
import zlib

import numpy as np

from .boosting import BoostEnsemble, Stage
from .errors import CheckpointError
from .learners import build_basic_learner, get_profile, warm_start_learner
from .subgrid import SubgridMask

MAGIC = b"SGBC"
VERSION = 1


def _pack_u32_list(values):
    return struct.pack("<I", len(values)) + struct.pack(f"<{len(values)}I", *values)


def _pack_learner(learner):
    name = learner.profile.encode("utf-8")
    out = [struct.pack("<I", len(name)), name]
    c, h, w = learner.geometry
    out.append(struct.pack("<III", c, h, w))
    params = learner.net.params()
    out.append(struct.pack("<I", len(params)))
    for p in params:
        dims = p.data.shape
        out.append(struct.pack("<I", len(dims)))
        out.append(struct.pack(f"<{len(dims)}I", *dims))
        out.append(p.data.astype("<f8").tobytes())
    return b"".join(out)


class _Reader:
    def __init__(self, buf):
        self.buf = buf
        self.pos = 0

    def take(self, n):
        if self.pos + n > len(self.buf):
            raise CheckpointError("truncated checkpoint")
        out = self.buf[self.pos : self.pos + n]
        self.pos += n
        return out

    def u32(self):
        return struct.unpack("<I", self.take(4))[0]

    def f64(self):
        return struct.unpack("<d", self.take(8))[0]

    def u32_list(self):
        n = self.u32()
        return struct.unpack(f"<{n}I", self.take(4 * n))

    def done(self):
        return self.pos == len(self.buf)


def _read_learner(reader, n_classes, mask=None, basic=None):
    name = reader.take(reader.u32()).decode("utf-8")
    get_profile(name)  # validate early
    c, h, w = struct.unpack("<III", reader.take(12))
    if mask is None:
        learner = build_basic_learner(name, (c, h, w), n_classes, seed=0)
    else:
        learner = warm_start_learner(basic, mask, n_classes, seed=0)
        if learner.geometry != (c, h, w):
            raise CheckpointError(
                f"stage geometry {(c, h, w)} does not match its mask {learner.geometry}"
            )
    params = learner.net.params()
    count = reader.u32()
    if count != len(params):
        raise CheckpointError(f"expected {len(params)} parameters, file has {count}")
    for p in params:
        ndim = reader.u32()
        dims = struct.unpack(f"<{ndim}I", reader.take(4 * ndim))
        if dims != p.data.shape:
            raise CheckpointError(f"parameter shape {dims} does not fit layout {p.data.shape}")
        n = int(np.prod(dims)) if dims else 1
        p.data = np.frombuffer(reader.take(8 * n), dtype="<f8").reshape(dims).copy()
    return learner


def save_checkpoint(ensemble, path):
    body = [MAGIC, struct.pack("<II", VERSION, ensemble.n_classes)]
    body.append(struct.pack("<d", ensemble.shrinkage))
    body.append(_pack_learner(ensemble.basic))
    body.append(struct.pack("<I", len(ensemble.stages)))
    for stage in ensemble.stages:
        body.append(struct.pack("<d", stage.step_size))
        body.append(_pack_u32_list(stage.mask.rows))
        body.append(_pack_u32_list(stage.mask.cols))
        body.append(_pack_learner(stage.learner))
    blob = b"".join(body)
    with open(path, "wb") as fh:
        fh.write(blob)
        fh.write(struct.pack("<I", zlib.crc32(blob)))


def load_checkpoint(path):
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < len(MAGIC) + 4:
        raise CheckpointError("file too short")
    body, crc_bytes = raw[:-4], raw[-4:]
    if struct.unpack("<I", crc_bytes)[0] != zlib.crc32(body):
        raise CheckpointError("checksum mismatch")
    if body[:4] != MAGIC:
        raise CheckpointError(f"bad magic {body[:4]!r}")
    reader = _Reader(body)
    reader.take(4)
    version = reader.u32()
    if version != VERSION:
        raise CheckpointError(f"unsupported format version {version}")
    n_classes = reader.u32()
    shrinkage = reader.f64()
    basic = _read_learner(reader, n_classes)
    ensemble = BoostEnsemble(basic, n_classes, shrinkage)
    for _ in range(reader.u32()):
        step = reader.f64()
        rows = reader.u32_list()
        cols = reader.u32_list()
        mask = SubgridMask(rows, cols)
        learner = _read_learner(reader, n_classes, mask=mask, basic=basic)
        learner.role = "additive"
        ensemble.stages.append(Stage(learner, step, mask))
    if not reader.done():
        raise CheckpointError(f"{len(body) - reader.pos} trailing bytes")
    return ensemble
