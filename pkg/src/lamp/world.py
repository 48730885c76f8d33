"""Deterministic synthetic worlds: semantic objects with unit embeddings,
a smooth pose-to-embedding observation model, random-walk dataset
generation, and brute-force oracles for goal visibility.

Dataset files are little-endian binary (magic LAMPDS1\\0): u32 version,
u32 d, u64 count, then per record 7 x f32 pose followed by d x f32
embedding. Worlds round-trip through JSON.
"""

from __future__ import annotations

import io
import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .geometry import Pose, normalize, yaw_quat

DATASET_MAGIC = b"LAMPDS1\x00"
DATASET_VERSION = 1

MAX_PAIRWISE_COS = 0.25
AMBIENT_WEIGHT = 0.2


class DatasetFormatError(ValueError):
    pass


class UnknownObjectError(KeyError):
    pass


@dataclass(frozen=True)
class WorldObject:
    id: str
    label: str
    center: np.ndarray  # (3,)
    radius: float
    base_embedding: np.ndarray  # unit (d,)

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float))
        object.__setattr__(
            self, "base_embedding", np.asarray(self.base_embedding, dtype=float)
        )
        if self.radius <= 0:
            raise ValueError(f"object {self.id}: radius must be positive")
        if abs(np.linalg.norm(self.base_embedding) - 1.0) > 1e-6:
            raise ValueError(f"object {self.id}: embedding not unit norm")


@dataclass(frozen=True)
class WorldSpec:
    extent: np.ndarray  # (2, 2): [[xmin, xmax], [ymin, ymax]]
    objects: tuple[WorldObject, ...]
    ambient_embedding: np.ndarray
    seed: int

    def __post_init__(self):
        object.__setattr__(self, "extent", np.asarray(self.extent, dtype=float))
        object.__setattr__(
            self, "ambient_embedding", np.asarray(self.ambient_embedding, dtype=float)
        )
        ids = [o.id for o in self.objects]
        if len(set(ids)) != len(ids):
            raise ValueError("object ids must be unique")
        for o in self.objects:
            if not (
                self.extent[0, 0] <= o.center[0] <= self.extent[0, 1]
                and self.extent[1, 0] <= o.center[1] <= self.extent[1, 1]
            ):
                raise ValueError(f"object {o.id} outside extent")

    @property
    def d(self) -> int:
        return self.ambient_embedding.shape[0]

    def bounds3(self) -> np.ndarray:
        """(3, 2) box for field input scaling; z spans the object heights."""
        zs = [o.center[2] for o in self.objects] + [0.0]
        return np.array(
            [
                [self.extent[0, 0], self.extent[0, 1]],
                [self.extent[1, 0], self.extent[1, 1]],
                [min(zs) - 1.0, max(zs) + 1.0],
            ]
        )

    def object_by_id(self, object_id: str) -> WorldObject:
        for o in self.objects:
            if o.id == object_id:
                return o
        raise UnknownObjectError(object_id)

    def to_json(self) -> dict:
        return {
            "extent": self.extent.tolist(),
            "seed": self.seed,
            "ambient_embedding": self.ambient_embedding.tolist(),
            "objects": [
                {
                    "id": o.id,
                    "label": o.label,
                    "center": o.center.tolist(),
                    "radius": o.radius,
                    "base_embedding": o.base_embedding.tolist(),
                }
                for o in self.objects
            ],
        }

    @staticmethod
    def from_json(data: dict) -> "WorldSpec":
        return WorldSpec(
            extent=np.array(data["extent"]),
            seed=data["seed"],
            ambient_embedding=np.array(data["ambient_embedding"]),
            objects=tuple(
                WorldObject(
                    id=o["id"],
                    label=o["label"],
                    center=np.array(o["center"]),
                    radius=o["radius"],
                    base_embedding=np.array(o["base_embedding"]),
                )
                for o in data["objects"]
            ),
        )


@dataclass(frozen=True)
class ObservationModel:
    fov_half_angle: float = np.deg2rad(60.0)
    max_range: float = 20.0  # meters per meter of object radius
    attenuation: float = 20.0
    noise_sigma: float = 0.01

    def __post_init__(self):
        if not (0.0 < self.fov_half_angle <= np.pi):
            raise ValueError("fov_half_angle must be in (0, pi]")
        if self.max_range <= 0:
            raise ValueError("max_range must be positive")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be non-negative")

    def effective_range(self, radius: float) -> float:
        """Bigger objects are visible from farther away."""
        return self.max_range * radius

    def to_json(self) -> dict:
        return {
            "fov_half_angle": self.fov_half_angle,
            "max_range": self.max_range,
            "attenuation": self.attenuation,
            "noise_sigma": self.noise_sigma,
        }

    @staticmethod
    def from_json(data: dict) -> "ObservationModel":
        return ObservationModel(**data)


_LABELS = [
    "statue", "oak tree", "fountain", "bench", "mailbox", "fire alarm",
    "puzzle cube", "street lamp", "bicycle", "trash bin", "flower pot",
    "vending machine", "stone arch", "phone booth", "hydrant", "signpost",
    "sculpture", "planter", "kiosk", "drinking fountain",
]


def _random_unit(rng: np.random.Generator, d: int) -> np.ndarray:
    return normalize(rng.standard_normal(d))


def gen_world(
    seed: int,
    extent,
    n_objects: int,
    d: int,
    hard_fraction: float = 0.5,
) -> WorldSpec:
    """Random world with mutually distinguishable object embeddings.

    Embeddings are rejection-sampled until every pair (including the
    ambient vector) has |cos| below 0.5; hard objects get small radii.
    """
    if n_objects < 1:
        raise ValueError("need at least one object")
    extent = np.asarray(extent, dtype=float).reshape(2, 2)
    rng = np.random.default_rng(seed)
    vecs: list[np.ndarray] = []
    tries = 0
    while len(vecs) < n_objects + 1:  # +1 for the ambient embedding
        v = _random_unit(rng, d)
        if all(abs(v @ u) < MAX_PAIRWISE_COS for u in vecs):
            vecs.append(v)
        tries += 1
        if tries > 10_000:
            raise RuntimeError(
                f"could not place {n_objects} embeddings with pairwise "
                f"|cos| < {MAX_PAIRWISE_COS} in d={d}"
            )
    ambient, obj_vecs = vecs[0], vecs[1:]
    n_hard = int(round(hard_fraction * n_objects))
    objects = []
    # keep object centers away from the border so they are approachable
    margin = 0.05 * (extent[:, 1] - extent[:, 0])
    for i in range(n_objects):
        hard = i < n_hard
        radius = rng.uniform(0.6, 1.2) if hard else rng.uniform(2.0, 4.0)
        center = np.array(
            [
                rng.uniform(extent[0, 0] + margin[0], extent[0, 1] - margin[0]),
                rng.uniform(extent[1, 0] + margin[1], extent[1, 1] - margin[1]),
                0.0,
            ]
        )
        objects.append(
            WorldObject(
                id=f"obj-{i:02d}",
                label=_LABELS[i % len(_LABELS)],
                center=center,
                radius=radius,
                base_embedding=obj_vecs[i],
            )
        )
    return WorldSpec(extent=extent, objects=tuple(objects), ambient_embedding=ambient, seed=seed)


def _mixture(world: WorldSpec, obs: ObservationModel, pose: Pose) -> np.ndarray:
    fwd = pose.forward_axis()
    acc = AMBIENT_WEIGHT * world.ambient_embedding
    for o in world.objects:
        vec = o.center - pose.t
        dist = float(np.linalg.norm(vec))
        if dist > obs.effective_range(o.radius):
            continue
        if dist < 1e-9:
            angle = 0.0
        else:
            angle = float(np.arccos(np.clip(fwd @ (vec / dist), -1.0, 1.0)))
        if angle > obs.fov_half_angle:
            continue
        falloff = np.cos(angle / obs.fov_half_angle * (np.pi / 2.0))
        w = np.exp(-dist / obs.attenuation) * falloff
        acc = acc + w * o.base_embedding
    return acc


def observe(
    world: WorldSpec,
    obs: ObservationModel,
    pose: Pose,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Unit embedding seen from a pose: ambient + visible objects + noise."""
    acc = _mixture(world, obs, pose)
    if rng is not None and obs.noise_sigma > 0:
        acc = acc + obs.noise_sigma * rng.standard_normal(world.d)
    return normalize(acc)


def goal_embedding(world: WorldSpec, object_id: str) -> np.ndarray:
    return world.object_by_id(object_id).base_embedding.copy()


def random_walk_poses(world: WorldSpec, n: int, rng: np.random.Generator) -> np.ndarray:
    """Traversable pose sequence: bounded random walk with heading jitter.

    Returns an (n, 7) float array. The walk reflects off the extent and
    re-seeds its position occasionally so long runs cover the whole world.
    """
    ext = world.extent
    pos = np.array([rng.uniform(*ext[0]), rng.uniform(*ext[1]), 0.0])
    heading = rng.uniform(0.0, 2.0 * np.pi)
    step_len = 0.01 * max(ext[0, 1] - ext[0, 0], ext[1, 1] - ext[1, 0])
    out = np.empty((n, 7))
    for i in range(n):
        heading += rng.normal(0.0, 0.6)
        pos = pos + step_len * np.array([np.cos(heading), np.sin(heading), 0.0])
        pos[0] = np.clip(pos[0], ext[0, 0], ext[0, 1])
        pos[1] = np.clip(pos[1], ext[1, 0], ext[1, 1])
        if rng.uniform() < 0.002:
            pos = np.array([rng.uniform(*ext[0]), rng.uniform(*ext[1]), 0.0])
        q = yaw_quat(heading % (2.0 * np.pi))
        out[i, :3] = pos
        out[i, 3:] = q
    return out


def gen_dataset(
    world: WorldSpec, obs: ObservationModel, n_samples: int, seed: int
) -> tuple[np.ndarray, np.ndarray]:
    """Sample (pose, embedding) pairs along a random walk.

    Poses are quantized to f32 before observing, so a reloaded dataset
    reproduces its embeddings exactly from its stored poses.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    rng = np.random.default_rng(seed)
    X = random_walk_poses(world, n_samples, rng)
    X = X.astype(np.float32).astype(float)
    Z = np.empty((n_samples, world.d))
    for i in range(n_samples):
        # f32-rounded quaternions are still unit within Pose's tolerance
        pose = Pose(t=X[i, :3], q=X[i, 3:])
        Z[i] = observe(world, obs, pose, rng)
    return X, Z


# -- dataset file format ---------------------------------------------------


def save_dataset_bytes(X: np.ndarray, Z: np.ndarray) -> bytes:
    X = np.asarray(X)
    Z = np.asarray(Z)
    if X.shape[0] != Z.shape[0] or X.shape[1] != 7:
        raise ValueError(f"bad dataset shapes {X.shape} / {Z.shape}")
    buf = io.BytesIO()
    buf.write(DATASET_MAGIC)
    buf.write(struct.pack("<IIQ", DATASET_VERSION, Z.shape[1], X.shape[0]))
    rec = np.concatenate([X, Z], axis=1).astype("<f4")
    buf.write(rec.tobytes())
    return buf.getvalue()


def save_dataset(X, Z, path):
    with open(path, "wb") as f:
        f.write(save_dataset_bytes(X, Z))


def load_dataset(path) -> tuple[np.ndarray, np.ndarray]:
    with open(path, "rb") as f:
        magic = f.read(8)
        if magic != DATASET_MAGIC:
            raise DatasetFormatError("bad magic bytes")
        header = f.read(16)
        if len(header) != 16:
            raise DatasetFormatError("truncated header")
        version, d, count = struct.unpack("<IIQ", header)
        if version != DATASET_VERSION:
            raise DatasetFormatError(f"unsupported version {version}")
        body = f.read()
    expected = count * (7 + d) * 4
    if len(body) != expected:
        raise DatasetFormatError(
            f"record bytes {len(body)} do not match header count {count}"
        )
    rec = np.frombuffer(body, dtype="<f4").reshape(count, 7 + d).astype(float)
    return rec[:, :7], rec[:, 7:]


# -- oracles ----------------------------------------------------------------


def observe_noiseless(world: WorldSpec, obs: ObservationModel, pose: Pose) -> np.ndarray:
    return observe(world, obs, pose, rng=None)


def best_visible_pose(
    world: WorldSpec,
    obs: ObservationModel,
    object_id: str,
    grid_step: float,
    n_headings: int = 16,
) -> Pose:
    """Exhaustive grid x heading search for the most goal-similar view.

    Ties break on lexicographic (ix, iy, ih) index, so the result is
    deterministic for a given grid.
    """
    goal = goal_embedding(world, object_id)
    ext = world.extent
    xs = np.arange(ext[0, 0], ext[0, 1] + 1e-9, grid_step)
    ys = np.arange(ext[1, 0], ext[1, 1] + 1e-9, grid_step)
    headings = np.arange(n_headings) * (2.0 * np.pi / n_headings)
    best, best_sim = None, -np.inf
    for x in xs:
        for y in ys:
            t = np.array([x, y, 0.0])
            for h in headings:
                pose = Pose(t=t, q=yaw_quat(h))
                sim = float(observe_noiseless(world, obs, pose) @ goal)
                if sim > best_sim + 1e-15:
                    best, best_sim = pose, sim
    return best
