"""File formats: binary visual-trajectory files, a JSON text export, and
world/scenario JSON.

VT binary layout (little-endian):
  magic      4s   b"VTRJ"
  version    u16  (currently 1)
  b_count    u16  beams per observation
  stride     u16  simulator steps between subgoals
  reserved   u16  zero
  dt         f64  seconds per step
  r_max      f64  meters
  n_records  u32
then per record:
  pose       3*f64  (x, y, theta)
  n_cmds     u32
  cmds       n_cmds*2*f64  (v, omega per step)
  ranges     b_count*f64
  validity   b_count*u8
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .kinematics import Pose2D
from .sensor import PanoramicObservation
from .subgoals import SubgoalRecord, VisualTrajectory
from .world import WorldModel

MAGIC = b"VTRJ"
VERSION = 1
_HEADER = struct.Struct("<4sHHHHddI")


def save_vt(vt: VisualTrajectory, path) -> None:
    b_count = vt.records[0].obs.b_count
    r_max = vt.records[0].obs.r_max
    parts = [
        _HEADER.pack(
            MAGIC, VERSION, b_count, vt.stride_steps, 0, vt.dt, r_max, len(vt.records)
        )
    ]
    for rec in vt.records:
        parts.append(struct.pack("<ddd", rec.pose.x, rec.pose.y, rec.pose.theta))
        cmds = np.ascontiguousarray(rec.teleop_cmds, dtype="<f8")
        parts.append(struct.pack("<I", cmds.shape[0]))
        parts.append(cmds.tobytes())
        parts.append(np.ascontiguousarray(rec.obs.ranges, dtype="<f8").tobytes())
        parts.append(np.ascontiguousarray(rec.obs.validity, dtype="u1").tobytes())
    Path(path).write_bytes(b"".join(parts))


def load_vt(path) -> VisualTrajectory:
    raw = Path(path).read_bytes()
    magic, version, b_count, stride, _, dt, r_max, n_records = _HEADER.unpack_from(
        raw, 0
    )
    if magic != MAGIC:
        raise ValueError("not a visual-trajectory file")
    if version != VERSION:
        raise ValueError(f"unsupported visual-trajectory version {version}")
    off = _HEADER.size
    records = []
    for _ in range(n_records):
        x, y, theta = struct.unpack_from("<ddd", raw, off)
        off += 24
        (n_cmds,) = struct.unpack_from("<I", raw, off)
        off += 4
        cmds = np.frombuffer(raw, "<f8", n_cmds * 2, off).reshape(n_cmds, 2).copy()
        off += n_cmds * 16
        ranges = np.frombuffer(raw, "<f8", b_count, off).copy()
        off += b_count * 8
        validity = np.frombuffer(raw, "u1", b_count, off).astype(bool)
        off += b_count
        records.append(
            SubgoalRecord(
                obs=PanoramicObservation(ranges, validity, b_count, r_max),
                teleop_cmds=cmds,
                pose=Pose2D(x, y, theta),
            )
        )
    return VisualTrajectory(records, stride_steps=stride, dt=dt)


def export_vt_text(vt: VisualTrajectory) -> str:
    """Human-readable JSON rendering of a visual trajectory."""
    doc = {
        "format": "vtnav visual trajectory",
        "version": VERSION,
        "b_count": vt.records[0].obs.b_count,
        "r_max": vt.records[0].obs.r_max,
        "dt": vt.dt,
        "stride_steps": vt.stride_steps,
        "records": [
            {
                "pose": [rec.pose.x, rec.pose.y, rec.pose.theta],
                "teleop_cmds": rec.teleop_cmds.tolist(),
                "ranges": rec.obs.ranges.tolist(),
                "validity": rec.obs.validity.astype(int).tolist(),
            }
            for rec in vt.records
        ],
    }
    return json.dumps(doc, indent=1)


def save_world(world: WorldModel, path) -> None:
    doc = {
        "bounds": list(world.bounds),
        "segments": world.segments.tolist(),
        "obstacles": [poly.tolist() for poly in world.obstacles],
    }
    Path(path).write_text(json.dumps(doc, indent=1))


def load_world(path) -> WorldModel:
    doc = json.loads(Path(path).read_text())
    return WorldModel(
        np.array(doc["segments"], dtype=float).reshape(-1, 4),
        [np.array(p, dtype=float) for p in doc["obstacles"]],
        tuple(doc["bounds"]),
    )
