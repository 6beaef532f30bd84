"""Checkpoint and time-series files.

Checkpoint layout (all little-endian)::

    16 bytes  magic b"BENARD-DA-CKPT1\\0"
    u32       format version (1)
    u32 u32   nx1, nx2
    u32       reserved (0)
    f64 x 4   L, Ra, Pr, t
    f64 x nx1*nx2   omega at collocation points, row-major, x2 fastest
    f64 x nx1*nx2   theta, same layout
    u64       checksum: first 8 bytes of BLAKE2b over everything after the magic

Time series: CSV with header ``t,err_u,err_theta,err_omega,nu_ref,nu_da`` and
17 significant digits per value.
"""

from __future__ import annotations

import hashlib
import os
import struct
from pathlib import Path
from typing import Iterable

import numpy as np

from .assimilation import TwinRecord
from .benard import PhysParams, State

MAGIC = b"BENARD-DA-CKPT1\0"
VERSION = 1
_HEADER = struct.Struct("<IIII4d")
TIMESERIES_HEADER = "t,err_u,err_theta,err_omega,nu_ref,nu_da"


class CheckpointError(OSError):
    pass


class BadMagicError(CheckpointError):
    pass


class VersionMismatchError(CheckpointError):
    pass


class ChecksumError(CheckpointError):
    pass


def _checksum(payload: bytes) -> bytes:
    return hashlib.blake2b(payload, digest_size=8).digest()


def checkpoint_bytes(s: State, pp: PhysParams) -> bytes:
    nx1, nx2 = s.omega.shape
    if s.theta.shape != (nx1, nx2):
        raise ValueError("omega and theta shapes differ")
    payload = (_HEADER.pack(VERSION, nx1, nx2, 0, pp.L, pp.ra, pp.pr, s.t)
               + np.ascontiguousarray(s.omega, dtype="<f8").tobytes()
               + np.ascontiguousarray(s.theta, dtype="<f8").tobytes())
    return MAGIC + payload + _checksum(payload)


def write_checkpoint(s: State, pp: PhysParams, path) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(checkpoint_bytes(s, pp))
    os.replace(tmp, path)


def parse_checkpoint(data: bytes) -> tuple[State, PhysParams]:
    if data[:len(MAGIC)] != MAGIC:
        raise BadMagicError("not a checkpoint file (bad magic)")
    body = data[len(MAGIC):]
    if len(body) < _HEADER.size + 8:
        raise ChecksumError("checkpoint truncated")
    version, nx1, nx2, _, L, ra, pr, t = _HEADER.unpack_from(body)
    if version != VERSION:
        raise VersionMismatchError(f"checkpoint version {version}, expected {VERSION}")
    nbytes = _HEADER.size + 2 * nx1 * nx2 * 8
    if len(body) != nbytes + 8:
        raise ChecksumError("checkpoint size does not match its header (truncated or padded)")
    payload, stored = body[:nbytes], body[nbytes:]
    if _checksum(payload) != stored:
        raise ChecksumError("checkpoint checksum mismatch")
    arr = np.frombuffer(payload, dtype="<f8", offset=_HEADER.size).astype(np.float64)
    omega = arr[:nx1 * nx2].reshape(nx1, nx2).copy()
    theta = arr[nx1 * nx2:].reshape(nx1, nx2).copy()
    return State(omega, theta, t), PhysParams(ra, pr, L)


def read_checkpoint(path) -> tuple[State, PhysParams]:
    with open(path, "rb") as fh:
        return parse_checkpoint(fh.read())


def checkpoint_hash(path) -> str:
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def write_timeseries(records: Iterable[TwinRecord], path) -> None:
    records = list(records)
    prev = None
    for r in records:
        if prev is not None and not r.t > prev:
            raise ValueError(f"time must increase strictly ({r.t} after {prev})")
        prev = r.t
    with open(path, "w", newline="\n") as fh:
        fh.write(TIMESERIES_HEADER + "\n")
        for r in records:
            fh.write(",".join(_fmt(v) for v in (r.t, r.err_u, r.err_theta, r.err_omega,
                                                r.nu_ref, r.nu_da)) + "\n")


def read_timeseries(path) -> list[TwinRecord]:
    with open(path) as fh:
        header = fh.readline().strip()
        if header != TIMESERIES_HEADER:
            raise ValueError(f"unexpected time-series header {header!r}")
        out = []
        for lineno, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 6:
                raise ValueError(f"line {lineno}: expected 6 columns, got {len(parts)}")
            out.append(TwinRecord(*map(float, parts)))
    for a, b in zip(out, out[1:]):
        if not b.t > a.t:
            raise ValueError("time column is not strictly increasing")
    return out
