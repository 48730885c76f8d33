"""Synthetic world generation, the observation model, and the dataset
binary format."""

import numpy as np
import pytest

from lamp.geometry import Pose, normalize, yaw_quat
from lamp.world import (
    AMBIENT_WEIGHT,
    DATASET_MAGIC,
    MAX_PAIRWISE_COS,
    DatasetFormatError,
    ObservationModel,
    UnknownObjectError,
    WorldObject,
    WorldSpec,
    best_visible_pose,
    gen_dataset,
    gen_world,
    goal_embedding,
    load_dataset,
    observe,
    observe_noiseless,
    random_walk_poses,
    save_dataset,
    save_dataset_bytes,
)

EXTENT = [[0.0, 40.0], [0.0, 40.0]]


def small_world(seed=3, n=6, d=16):
    return gen_world(seed, EXTENT, n, d, hard_fraction=0.5)


def test_gen_world_shapes_and_determinism():
    w1 = small_world()
    w2 = small_world()
    assert len(w1.objects) == 6
    assert w1.d == 16
    for a, b in zip(w1.objects, w2.objects):
        assert a.id == b.id
        assert np.array_equal(a.center, b.center)
        assert np.array_equal(a.base_embedding, b.base_embedding)


def test_gen_world_embedding_separation():
    w = small_world()
    vecs = [w.ambient_embedding] + [o.base_embedding for o in w.objects]
    for i in range(len(vecs)):
        assert np.isclose(np.linalg.norm(vecs[i]), 1.0)
        for j in range(i + 1, len(vecs)):
            assert abs(vecs[i] @ vecs[j]) < MAX_PAIRWISE_COS


def test_gen_world_hard_objects_are_smaller():
    w = gen_world(5, EXTENT, 10, 16, hard_fraction=0.5)
    radii = [o.radius for o in w.objects]
    # first half hard (small), second half easy (large)
    assert max(radii[:5]) < min(radii[5:])


def test_gen_world_centers_inside_extent():
    w = gen_world(9, EXTENT, 12, 16)
    for o in w.objects:
        assert EXTENT[0][0] <= o.center[0] <= EXTENT[0][1]
        assert EXTENT[1][0] <= o.center[1] <= EXTENT[1][1]


def test_gen_world_rejects_zero_objects():
    with pytest.raises(ValueError):
        gen_world(1, EXTENT, 0, 8)


def test_world_json_roundtrip():
    w = small_world()
    w2 = WorldSpec.from_json(w.to_json())
    assert np.array_equal(w.extent, w2.extent)
    assert np.array_equal(w.ambient_embedding, w2.ambient_embedding)
    for a, b in zip(w.objects, w2.objects):
        assert a.id == b.id and a.label == b.label
        assert np.array_equal(a.center, b.center)
        assert a.radius == b.radius
        assert np.array_equal(a.base_embedding, b.base_embedding)


def test_object_by_id_and_unknown():
    w = small_world()
    assert w.object_by_id("obj-00").id == "obj-00"
    with pytest.raises(UnknownObjectError):
        w.object_by_id("nope")


def test_world_object_validation():
    with pytest.raises(ValueError):
        WorldObject(id="x", label="x", center=np.zeros(3), radius=0.0,
                    base_embedding=normalize(np.ones(4)))
    with pytest.raises(ValueError):
        WorldObject(id="x", label="x", center=np.zeros(3), radius=1.0,
                    base_embedding=np.ones(4))


def test_observation_model_validation():
    with pytest.raises(ValueError):
        ObservationModel(fov_half_angle=0.0)
    with pytest.raises(ValueError):
        ObservationModel(max_range=-1.0)
    with pytest.raises(ValueError):
        ObservationModel(noise_sigma=-0.1)


def test_observe_is_unit_norm():
    w = small_world()
    obs = ObservationModel()
    rng = np.random.default_rng(0)
    for _ in range(20):
        pose = Pose(
            t=np.array([rng.uniform(0, 40), rng.uniform(0, 40), 0.0]),
            q=yaw_quat(rng.uniform(0, 2 * np.pi)),
        )
        z = observe(w, obs, pose, rng)
        assert np.isclose(np.linalg.norm(z), 1.0)


def test_observe_far_from_everything_is_ambient():
    # a pose outside every object's range sees only the ambient embedding
    w = small_world()
    obs = ObservationModel(max_range=0.01)  # effective range ~ centimeters
    pose = Pose(t=np.array([20.0, 20.0, 0.0]), q=yaw_quat(0.0))
    z = observe_noiseless(w, obs, pose)
    assert np.allclose(z, normalize(AMBIENT_WEIGHT * w.ambient_embedding))


def test_observe_facing_object_beats_facing_away():
    w = small_world()
    obs = ObservationModel(attenuation=5.0)
    o = max(w.objects, key=lambda ob: ob.radius)
    t = o.center + np.array([-3.0, 0.0, 0.0])
    facing = Pose(t=t, q=yaw_quat(0.0))       # +x points at the object
    away = Pose(t=t, q=yaw_quat(np.pi))       # looks the other way
    sim_facing = observe_noiseless(w, obs, facing) @ o.base_embedding
    sim_away = observe_noiseless(w, obs, away) @ o.base_embedding
    assert sim_facing > sim_away


def test_observe_signal_decays_with_distance():
    w = small_world()
    obs = ObservationModel(attenuation=5.0)
    o = max(w.objects, key=lambda ob: ob.radius)
    sims = []
    for dist in (2.0, 6.0, 12.0):
        pose = Pose(t=o.center + np.array([-dist, 0.0, 0.0]), q=yaw_quat(0.0))
        sims.append(observe_noiseless(w, obs, pose) @ o.base_embedding)
    assert sims[0] > sims[1] > sims[2]


def test_goal_embedding_matches_object():
    w = small_world()
    z = goal_embedding(w, "obj-01")
    assert np.array_equal(z, w.objects[1].base_embedding)
    z[0] = 99.0  # returned copy must not alias world state
    assert w.objects[1].base_embedding[0] != 99.0


def test_random_walk_poses_inside_extent():
    w = small_world()
    X = random_walk_poses(w, 2000, np.random.default_rng(7))
    assert X.shape == (2000, 7)
    assert np.all(X[:, 0] >= 0.0) and np.all(X[:, 0] <= 40.0)
    assert np.all(X[:, 1] >= 0.0) and np.all(X[:, 1] <= 40.0)
    assert np.allclose(np.linalg.norm(X[:, 3:], axis=1), 1.0)
    assert np.all(X[:, 2] == 0.0)


def test_random_walk_covers_world():
    w = small_world()
    X = random_walk_poses(w, 20_000, np.random.default_rng(8))
    # every 10x10 quadrant should be visited
    for qx in range(4):
        for qy in range(4):
            inside = (
                (X[:, 0] >= qx * 10) & (X[:, 0] < (qx + 1) * 10)
                & (X[:, 1] >= qy * 10) & (X[:, 1] < (qy + 1) * 10)
            )
            assert inside.sum() > 0, (qx, qy)


def test_gen_dataset_deterministic_and_f32_clean():
    w = small_world()
    obs = ObservationModel()
    X1, Z1 = gen_dataset(w, obs, 500, seed=11)
    X2, Z2 = gen_dataset(w, obs, 500, seed=11)
    assert np.array_equal(X1, X2) and np.array_equal(Z1, Z2)
    # poses are exactly representable in f32
    assert np.array_equal(X1, X1.astype(np.float32).astype(float))


def test_gen_dataset_rejects_empty():
    with pytest.raises(ValueError):
        gen_dataset(small_world(), ObservationModel(), 0, seed=1)


def test_dataset_roundtrip_bitwise(tmp_path):
    w = small_world()
    obs = ObservationModel()
    X, Z = gen_dataset(w, obs, 300, seed=2)
    path = tmp_path / "ds.bin"
    save_dataset(X, Z, path)
    X2, Z2 = load_dataset(path)
    # [DERIVED] f32 storage of f32-quantized poses is lossless
    assert np.array_equal(X, X2)
    assert np.array_equal(Z.astype(np.float32).astype(float), Z2)
    # saving the reloaded arrays reproduces the file byte for byte
    assert save_dataset_bytes(X2, Z2) == path.read_bytes()


def test_dataset_magic_bytes(tmp_path):
    X = np.zeros((2, 7))
    X[:, 3] = 1.0
    Z = np.ones((2, 4)) / 2.0
    raw = save_dataset_bytes(X, Z)
    assert raw[:8] == DATASET_MAGIC == b"LAMPDS1\x00"


def test_load_dataset_rejects_corruption(tmp_path):
    X = np.zeros((3, 7))
    X[:, 3] = 1.0
    Z = np.ones((3, 4)) / 2.0
    good = save_dataset_bytes(X, Z)

    bad_magic = tmp_path / "bad_magic.bin"
    bad_magic.write_bytes(b"NOTMAGIC" + good[8:])
    with pytest.raises(DatasetFormatError):
        load_dataset(bad_magic)

    truncated = tmp_path / "trunc.bin"
    truncated.write_bytes(good[:-5])
    with pytest.raises(DatasetFormatError):
        load_dataset(truncated)

    trailing = tmp_path / "trail.bin"
    trailing.write_bytes(good + b"\x00\x00\x00\x00")
    with pytest.raises(DatasetFormatError):
        load_dataset(trailing)


def test_save_dataset_rejects_bad_shapes():
    with pytest.raises(ValueError):
        save_dataset_bytes(np.zeros((2, 6)), np.zeros((2, 4)))
    with pytest.raises(ValueError):
        save_dataset_bytes(np.zeros((2, 7)), np.zeros((3, 4)))


def test_best_visible_pose_is_near_object():
    w = small_world()
    obs = ObservationModel(attenuation=5.0)
    o = max(w.objects, key=lambda ob: ob.radius)
    pose = best_visible_pose(w, obs, o.id, grid_step=4.0, n_headings=8)
    # the best view of the biggest object is close to it
    assert np.linalg.norm(pose.t - o.center) < 10.0


def test_best_visible_pose_monotone_in_grid_step():
    # [TRIVIAL] halving the grid step never decreases the achieved similarity
    w = small_world()
    obs = ObservationModel(attenuation=5.0)
    o = w.objects[-1]
    goal = o.base_embedding
    sims = []
    for step in (16.0, 8.0, 4.0):
        p = best_visible_pose(w, obs, o.id, grid_step=step, n_headings=8)
        sims.append(float(observe_noiseless(w, obs, p) @ goal))
    assert sims[0] <= sims[1] + 1e-12
    assert sims[1] <= sims[2] + 1e-12
