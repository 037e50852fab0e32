import numpy as np
import pytest

from legtrack.anatomy import (
    Landmark, LandmarkTable, SceneSnapshot, cross_route_error, point_in_frame, point_in_world,
    relative_transform, route_point, scope_tip_in_frame, with_anatomical_frames,
)
from legtrack.errors import MissingFrame, UnknownPoint
from legtrack.geom import Transform, apply, compose, invert
from legtrack.pipeline import snapshot_at
from legtrack.simulate import LegModelParams, MotionScript, default_script, session_config, synthesize
from strategies import random_transform


def homogeneous(t: Transform, p):
    return (t.matrix() @ np.append(p, 1.0))[:3]


@pytest.fixture(scope="module")
def sim():
    params = LegModelParams()
    stream, table, traj = synthesize(params, default_script(5.0, 20.0))
    return stream, table, traj, session_config(params, table)


def test_point_from_identity_host():
    table = LandmarkTable.from_vectors({"E": ("M", (10, 0, 0))})
    snap = SceneSnapshot(0.0, {"M": Transform.identity()})
    np.testing.assert_array_equal(point_in_world(snap, table, "E"), [10, 0, 0])


def test_point_matches_homogeneous_multiply(rng):
    for _ in range(100):
        t = random_transform(rng)
        v = rng.uniform(-500, 500, 3)
        table = LandmarkTable.from_vectors({"C": ("H", v)})
        np.testing.assert_allclose(
            point_in_world(SceneSnapshot(0.0, {"H": t}), table, "C"), homogeneous(t, v), atol=1e-9
        )


def test_lookup_errors():
    table = LandmarkTable.from_vectors({"C": ("H", (0, 0, 1))})
    snap = SceneSnapshot(0.0, {"M": Transform.identity()})
    with pytest.raises(UnknownPoint):
        point_in_world(snap, table, "E")
    with pytest.raises(MissingFrame):
        point_in_world(snap, table, "C")
    with pytest.raises(MissingFrame):
        relative_transform(snap, "M", "H")
    with pytest.raises(UnknownPoint):
        table.find("C", "M")


def test_table_prefers_first_available_host():
    table = LandmarkTable((Landmark("E", "D", (0, 0, 1)), Landmark("E", "M", (0, 0, 2))))
    assert table.find("E").host == "D"
    assert table.find("E", available={"M"}).host == "M"
    assert table.points() == ["E"] and table.hosts() == ["D", "M"]


def test_table_rejects_duplicates_and_bad_accuracy():
    with pytest.raises(ValueError):
        LandmarkTable((Landmark("E", "M", (0, 0, 1)), Landmark("E", "M", (0, 0, 2))))
    with pytest.raises(ValueError):
        LandmarkTable((), accuracy_mm=0.0)
    with pytest.raises(ValueError):
        Landmark("E", "M", (0, np.inf, 0))


def test_perturbed_statistics(rng):
    table = LandmarkTable(tuple(Landmark(f"P{i}", "H", (0, 0, 0)) for i in range(5000)))
    noisy = table.perturbed(0.3, rng)
    v = np.array([e.vector for e in noisy.entries])
    assert v.std() == pytest.approx(0.3, rel=0.03)
    assert table.perturbed(0.0, rng).entries[0].vector.tolist() == [0, 0, 0]


def test_relative_transform_cases(rng):
    th, tm, ts = (random_transform(rng) for _ in range(3))
    snap = SceneSnapshot(0.0, {"H": th, "M": tm, "S": ts})
    assert relative_transform(snap, "M", "M").allclose(Transform.identity(), 0)
    h_t_m = relative_transform(snap, "M", "H")
    # M's origin in H coordinates, computed directly
    np.testing.assert_allclose(apply(h_t_m, np.zeros(3)), apply(invert(th), tm.translation), atol=1e-9)
    chained = compose(h_t_m, relative_transform(snap, "S", "M"))
    assert chained.allclose(relative_transform(snap, "S", "H"), 1e-9)


def test_scope_tip_trivial():
    table = LandmarkTable.from_vectors({"F": ("S", (0, 0, 150))})
    snap = SceneSnapshot(0.0, {"S": Transform.identity()})
    np.testing.assert_allclose(scope_tip_in_frame(snap, table, "S"), [0, 0, 150])


def test_scope_tip_touching_condyle_centre():
    params = LegModelParams()
    script = MotionScript.from_functions(1.0, 10.0, scope_x=0.0, scope_y=0.0, scope_z=0.0, knee_flexion=40.0)
    stream, table, _ = synthesize(params, script)
    cfg = session_config(params, table)
    for sample in stream:
        snap = snapshot_at(cfg, sample)
        np.testing.assert_allclose(scope_tip_in_frame(snap, table), 0.0, atol=1e-9)


def test_scope_tip_two_paths(sim):
    stream, table, _, cfg = sim
    snap = snapshot_at(cfg, stream[7])
    world = point_in_world(snap, table, "F")
    via_world = apply(invert(snap.pose("C")), world)
    np.testing.assert_allclose(scope_tip_in_frame(snap, table), via_world, atol=1e-9)


def test_identical_routes_give_zero(sim):
    stream, table, _, cfg = sim
    snap = snapshot_at(cfg, stream[3])
    assert cross_route_error(snap, table, "E", ["H", "C", "D"], ["H", "C", "D"]) == 0.0


def test_exact_routes_agree_at_every_sample(sim):
    stream, table, traj, cfg = sim
    for i, sample in enumerate(stream):
        snap = snapshot_at(cfg, sample)
        assert cross_route_error(snap, table, "E", ["M"], ["H", "C", "D"]) < 1e-9
        assert cross_route_error(snap, table, "E", ["M"], ["G", "C", "D"]) < 1e-9
        np.testing.assert_allclose(route_point(snap, table, "E", ["M"]), traj.points["E"][i], atol=1e-9)


def test_route_must_end_at_host(sim):
    stream, table, _, cfg = sim
    with pytest.raises(UnknownPoint):
        route_point(snapshot_at(cfg, stream[0]), table, "E", ["H", "C"])


def test_anatomical_frames_match_ground_truth(sim):
    stream, table, traj, cfg = sim
    for i in (0, 50, 99):
        snap = snapshot_at(cfg, stream[i])
        assert snap.pose("C").allclose(traj.frames["C"][i], 1e-9)
        assert snap.pose("D").allclose(traj.frames["D"][i], 1e-9)


def test_world_invariance_1000_seeded(rng, sim):
    stream, table, _, cfg = sim
    base = snapshot_at(cfg, stream[42])
    motions = random_transform(rng, 1000)
    frames = {k: Transform(np.broadcast_to(v.rotation, (1000, 3, 3)), np.broadcast_to(v.translation, (1000, 3)))
              for k, v in base.frames.items()}
    moved = SceneSnapshot(0.0, frames).moved(motions)
    for a, b in (("M", "H"), ("D", "C"), ("S", "C")):
        rel = relative_transform(moved, a, b)
        assert rel.allclose(relative_transform(base, a, b)[None], 1e-9)
    for point in ("E", "F", "D"):
        np.testing.assert_allclose(point_in_frame(moved, table, point, "C"),
                                   np.broadcast_to(point_in_frame(base, table, point, "C"), (1000, 3)), atol=1e-9)
    err = cross_route_error(moved, table, "E", ["M"], ["H", "C", "D"])
    assert err.shape == (1000,) and err.max() < 1e-9


def test_with_anatomical_frames_needs_points():
    table = LandmarkTable.from_vectors({"B": ("H", (0, 0, 0))})
    with pytest.raises(UnknownPoint):
        with_anatomical_frames(SceneSnapshot(0.0, {"H": Transform.identity()}), table)
