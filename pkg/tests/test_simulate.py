import dataclasses

import numpy as np
import pytest

from legtrack.errors import InvalidParams, OutOfRange
from legtrack.geom import apply
from legtrack.pipeline import track
from legtrack.simulate import (
    CHANNELS, LegModelParams, MotionScript, NoiseSpec, _forward, default_script, ground_truth_at, session_config,
    sweep_script, synthesize,
)

PARAMS = LegModelParams()


def test_zero_script_is_static():
    stream, _, traj = synthesize(PARAMS, MotionScript.zeros(1.0, 50.0))
    assert np.all(stream.visible)
    np.testing.assert_array_equal(stream.positions, np.broadcast_to(stream.positions[0], stream.positions.shape))
    frames, _ = _forward(PARAMS, np.array([0.0] * 9 + [0.0, 20.0, 5.0]))
    np.testing.assert_allclose(stream.positions[0, :4], apply(frames["femur"], PARAMS.femur_body.reference), atol=1e-12)


def test_marker_noise_statistics():
    script = MotionScript.zeros(100.0, 100.0)  # 10^4 samples
    clean, _, _ = synthesize(PARAMS, script)
    noisy, _, _ = synthesize(PARAMS, script, NoiseSpec(marker_sigma_mm=0.03, seed=5))
    dev = noisy.positions - clean.positions
    assert 0.02 <= dev.std() <= 0.04
    per_marker = np.linalg.norm(dev, axis=-1).mean(axis=0)  # expected sigma * 2*sqrt(2/pi) = 0.048
    assert np.all(np.abs(per_marker - 0.03 * 2 * np.sqrt(2 / np.pi)) < 0.002)
    assert 0.02 <= np.abs(dev).mean() <= 0.04


def test_occlusion_statistics_and_labels():
    noise = NoiseSpec(occlusion_prob=0.1, occlusion_by_label={"G": 1.0}, seed=3)
    stream, _, _ = synthesize(PARAMS, MotionScript.zeros(50.0, 100.0), noise)
    g = stream.labels.index("G")
    assert not stream.visible[:, g].any()
    assert np.isnan(stream.positions[:, g]).all()
    others = np.delete(stream.visible, g, axis=1)
    assert (1 - others.mean()) == pytest.approx(0.1, abs=0.01)


def test_permanently_occluded_femur_marker_still_tracks():
    noise = NoiseSpec(occlusion_by_label={"F4": 1.0})
    stream, table, traj = synthesize(PARAMS, default_script(5.0, 20.0), noise)
    result = track(session_config(PARAMS, table), stream)
    assert (result.fit_status["femur"] == "ok").all()
    np.testing.assert_allclose(result.angles, traj.script.commands[:, :6], atol=1e-9)


def test_determinism_and_independent_streams():
    script = default_script(2.0, 50.0)
    a = synthesize(PARAMS, script, NoiseSpec(0.03, 0.3, 0.1, seed=11))
    b = synthesize(PARAMS, script, NoiseSpec(0.03, 0.3, 0.1, seed=11))
    assert np.array_equal(a[0].positions, b[0].positions, equal_nan=True)
    assert np.array_equal(a[0].visible, b[0].visible)
    assert all(np.array_equal(x.vector, y.vector) for x, y in zip(a[1].entries, b[1].entries))
    c = synthesize(PARAMS, script, NoiseSpec(0.03, 0.3, 0.1, seed=12))
    assert not np.array_equal(a[0].visible, c[0].visible)
    # occlusion does not change the marker noise draws
    d = synthesize(PARAMS, script, NoiseSpec(0.03, 0.3, 0.0, seed=11))
    both = a[0].visible
    np.testing.assert_array_equal(a[0].positions[both], d[0].positions[both])


def test_landmark_noise_statistics():
    exact = synthesize(PARAMS, MotionScript.zeros(0.1, 10.0))[1]
    devs = []
    for seed in range(200):
        noisy = synthesize(PARAMS, MotionScript.zeros(0.1, 10.0), NoiseSpec(landmark_sigma_mm=0.3, seed=seed))[1]
        devs += [n.vector - e.vector for n, e in zip(noisy.entries, exact.entries)]
    assert np.std(devs) == pytest.approx(0.3, rel=0.05)


def test_rigidity():
    stream, _, _ = synthesize(PARAMS, sweep_script(10.0, 50.0))
    for body in PARAMS.bodies:
        idx = [stream.labels.index(lab) for lab in body.labels]
        p = stream.positions[:, idx]
        d = np.linalg.norm(p[:, :, None] - p[:, None], axis=-1)
        ref = np.linalg.norm(body.reference[:, None] - body.reference[None], axis=-1)
        assert np.abs(d - ref).max() < 1e-9


def test_ground_truth_accessor():
    script = MotionScript.from_functions(1.0, 10.0, knee_flexion=30.0)
    _, _, traj = synthesize(PARAMS, script)
    angles, translation, points = ground_truth_at(traj, 0.45)
    assert angles.knee_flexion == 30.0
    assert translation.gap == 0.0

    _, _, zero = synthesize(PARAMS, MotionScript.zeros(1.0, 10.0))
    assert ground_truth_at(zero, 0.0)[0].as_array().tolist() == [0.0] * 6

    ramp = MotionScript.from_functions(1.1, 10.0, knee_varus=lambda t: 10.0 * t)  # 0 -> 10 deg over 1 s
    _, _, traj = synthesize(PARAMS, ramp)
    assert ground_truth_at(traj, 0.5)[0].knee_varus == pytest.approx(5.0, abs=1e-12)
    assert ground_truth_at(traj, 0.55)[0].knee_varus == pytest.approx(5.5, abs=1e-12)
    np.testing.assert_allclose(ground_truth_at(traj, 0.3)[2]["E"], traj.points["E"][3], atol=1e-9)

    for t in (-0.01, 1.2):
        with pytest.raises(OutOfRange):
            ground_truth_at(traj, t)


def test_closure_noise_free_sweep():
    script = sweep_script(60.0, 50.0)
    stream, table, traj = synthesize(PARAMS, script)
    result = track(session_config(PARAMS, table), stream)
    assert np.abs(result.angles - script.commands[:, :6]).max() < 0.01
    assert np.abs(result.translation - script.commands[:, 6:9]).max() < 0.01
    assert np.abs(result.scope_tip - script.commands[:, 9:12]).max() < 0.01
    # the sweep covers the required ranges
    cmd = script.commands
    assert cmd[:, 0].min() < 0.1 and cmd[:, 0].max() > 89.9
    assert cmd[:, 3].max() > 119.9 and cmd[:, 1].min() < -19.9 and cmd[:, 5].max() > 14.9


def test_invalid_params():
    with pytest.raises(InvalidParams):
        synthesize(dataclasses.replace(PARAMS, femur_length_mm=-1.0), MotionScript.zeros(0.1, 10.0))
    bad_scope = dataclasses.replace(PARAMS, scope_body=dataclasses.replace(PARAMS.scope_body, id="x", labels=("H", "S2", "S3", "S4")))
    with pytest.raises(InvalidParams):
        synthesize(bad_scope, MotionScript.zeros(0.1, 10.0))
    with pytest.raises(InvalidParams):
        MotionScript([0.0, 0.0], np.zeros((2, len(CHANNELS))))
    with pytest.raises(InvalidParams):
        MotionScript([0.0], np.full((1, len(CHANNELS)), np.nan))
    with pytest.raises(InvalidParams):
        MotionScript.from_functions(1.0, 10.0, elbow=3.0)
    with pytest.raises(InvalidParams):
        NoiseSpec(marker_sigma_mm=-0.1)
    with pytest.raises(InvalidParams):
        NoiseSpec(occlusion_prob=1.5)


def test_script_helpers():
    s = MotionScript.from_functions(2.0, 25.0, hip_flexion=lambda t: t)
    assert len(s.times) == 50 and s.rate_hz == pytest.approx(25.0)
    np.testing.assert_array_equal(s.channel("hip_flexion"), s.times)
    assert s.channel("scope_y")[0] == 20.0
