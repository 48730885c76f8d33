"""Pose manifest: a CSV with one row per captured image.

Fixed header: image,tx,ty,tz,qw,qx,qy,qz,timestamp. Quaternions must be
unit within 1e-4 (wxyz order, matching the consumer's pose convention).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

HEADER = ["image", "tx", "ty", "tz", "qw", "qx", "qy", "qz", "timestamp"]
QUAT_TOL = 1e-4


class ManifestError(ValueError):
    pass


@dataclass(frozen=True)
class ManifestRow:
    image: str
    pose: np.ndarray  # (7,) = t(3) + q_wxyz(4)
    timestamp: float


@dataclass(frozen=True)
class PoseManifest:
    rows: tuple[ManifestRow, ...]

    def __len__(self) -> int:
        return len(self.rows)

    def poses(self) -> np.ndarray:
        return np.array([r.pose for r in self.rows])

    @staticmethod
    def read(path) -> "PoseManifest":
        path = Path(path)
        with open(path, newline="") as f:
            reader = csv.reader(f)
            try:
                header = next(reader)
            except StopIteration:
                raise ManifestError(f"{path}: empty manifest") from None
            if [h.strip() for h in header] != HEADER:
                raise ManifestError(
                    f"{path}: header must be {','.join(HEADER)}, got {','.join(header)}"
                )
            rows = []
            for lineno, rec in enumerate(reader, start=2):
                if not rec:
                    continue
                if len(rec) != len(HEADER):
                    raise ManifestError(f"{path}:{lineno}: expected {len(HEADER)} fields")
                image = rec[0].strip()
                if not image:
                    raise ManifestError(f"{path}:{lineno}: empty image filename")
                try:
                    vals = [float(v) for v in rec[1:]]
                except ValueError as exc:
                    raise ManifestError(f"{path}:{lineno}: {exc}") from None
                pose = np.array(vals[:7])
                qnorm = np.linalg.norm(pose[3:7])
                if abs(qnorm - 1.0) > QUAT_TOL:
                    raise ManifestError(
                        f"{path}:{lineno}: quaternion norm {qnorm:.6f} not unit"
                    )
                pose[3:7] /= qnorm
                rows.append(ManifestRow(image=image, pose=pose, timestamp=vals[7]))
        if not rows:
            raise ManifestError(f"{path}: no data rows")
        return PoseManifest(rows=tuple(rows))
