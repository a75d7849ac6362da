import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from wasnsim.scene import (Components, ConfigurationError, SceneConfig, calibrate_noise,
                           generate_scene, load_config_file, network_selection,
                           selection_matrix, true_scms)
from wasnsim.scm import ALL_ACTIVE, GLOBAL_ONLY, NOISE_ONLY, batch_scm

from conftest import rel_fro

LARGE = dict(n_nodes=10, n_sensors=8, n_global_desired=1, n_local_desired=5,
                n_global_noise=1, n_local_noise=3, target_snr_db=0.0, sensor_noise_frac=0.1)


def test_large_config_dimensions():
    scene = generate_scene(SceneConfig(**LARGE, n_channels=6))
    assert scene.A_glob.shape == (80, 1)
    assert scene.A_loc.shape == (80, 50)
    assert scene.B_loc.shape == (80, 30)


def test_single_node_degenerate():
    cfg = SceneConfig(n_nodes=1, n_sensors=3, n_global_desired=1, n_local_desired=0,
                      n_global_noise=0, n_local_noise=0, n_channels=1, target_snr_db=None)
    scene = generate_scene(cfg)
    c = scene.components(0)
    assert np.all(c.s_loc == 0) and np.all(c.n_glob == 0)
    sensor = scene.latent_frame(0)["sensor"]
    np.testing.assert_allclose(c.total, scene.A_glob @ scene.latent_frame(0)["s_glob"] + sensor)


def test_determinism_bitwise():
    cfg = SceneConfig(seed=7)
    a, b = generate_scene(cfg), generate_scene(cfg)
    for name in ("A_glob", "A_loc", "B_glob", "B_loc", "sensor_var", "schedule"):
        assert np.array_equal(getattr(a, name), getattr(b, name))
    assert np.array_equal(a.components(13).total, b.components(13).total)


def test_frames_are_independent_of_access_order():
    scene = generate_scene(SceneConfig(seed=3))
    late = scene.components(50).total
    for i in range(5):
        scene.components(i)
    assert np.array_equal(late, scene.components(50).total)


def test_true_scm_hand_example():
    # A_glob = [1; 0], no noise sources, sensor noise variance 0.1
    cfg = SceneConfig(n_nodes=1, n_sensors=2, n_global_desired=1, n_local_desired=0,
                      n_global_noise=0, n_local_noise=0, n_channels=1, target_snr_db=None)
    scene = generate_scene(cfg)
    scene = type(scene)(cfg, np.array([[1.0], [0.0]], complex), scene.A_loc, scene.B_glob,
                        scene.B_loc, np.array([0.1, 0.1]), 1.0, scene.schedule)
    np.testing.assert_allclose(true_scms(scene).R_yy, [[1.1, 0], [0, 0.1]], atol=1e-15)


@given(st.integers(0, 10_000))
def test_true_scm_decomposition(seed):
    R = true_scms(generate_scene(SceneConfig(seed=seed, n_nodes=3, n_sensors=3)))
    np.testing.assert_allclose(R.R_yy - R.R_nn, R.R_ss, atol=1e-12)
    for M in (R.R_yy, R.R_nn, R.R_ss, R.R_glob):
        np.testing.assert_allclose(M, M.conj().T, atol=0)
        assert np.linalg.eigvalsh(M).min() > -1e-10


@given(st.integers(0, 1000), st.floats(0.25, 4.0))
def test_desired_scaling(seed, c):
    scene = generate_scene(SceneConfig(seed=seed, target_snr_db=None))
    R = true_scms(scene)
    scaled = type(scene)(scene.config, c * scene.A_glob, c * scene.A_loc, scene.B_glob,
                         scene.B_loc, scene.sensor_var, scene.noise_gain, scene.schedule)
    R2 = true_scms(scaled)
    np.testing.assert_allclose(R2.R_ss, c ** 2 * R.R_ss, rtol=1e-12, atol=1e-12)
    np.testing.assert_allclose(R2.R_nn, R.R_nn, atol=0)


@pytest.mark.parametrize("target", [-5.0, 0.0, 5.0])
def test_snr_calibration(target):
    scene = generate_scene(SceneConfig(target_snr_db=target, seed=2))
    assert np.mean(scene.node_snr_db()) == pytest.approx(target, abs=1e-8)


def test_unreachable_snr():
    with pytest.raises(ConfigurationError):
        generate_scene(SceneConfig(target_snr_db=40.0))


def test_calibration_oracle():
    # one node, analytic: snr = pd / (g2*pn + frac*(pd1 + g2*pn1))
    des, nz = np.array([2.0]), np.array([1.0])
    g2, sens = calibrate_noise(des, des, nz, nz, 0.1, 3.0)
    assert 10 * np.log10(2.0 / (g2 + 0.1 * (2.0 + g2))) == pytest.approx(3.0, abs=1e-9)
    assert sens[0] == pytest.approx(0.1 * (2.0 + g2))


def test_monte_carlo_scm_large_scene():
    scene = generate_scene(SceneConfig(**LARGE, n_channels=6, seed=1))
    R = true_scms(scene)
    acc = np.zeros_like(R.R_yy)
    n_chunks, chunk = 100, 10_000
    for i in range(n_chunks):
        y = scene.components(i, n_samples=chunk).total
        acc += y @ y.conj().T
    assert rel_fro(acc / (n_chunks * chunk), R.R_yy) < 1e-2


def test_components_gating():
    rng = np.random.default_rng(0)
    parts = [rng.standard_normal((3, 4)) for _ in range(4)]
    c = Components(*parts)
    np.testing.assert_array_equal(c.observed(ALL_ACTIVE), (parts[0] + parts[1]) + (parts[2] + parts[3]))
    np.testing.assert_array_equal(c.observed(GLOBAL_ONLY), parts[0] + parts[2])
    np.testing.assert_array_equal(c.observed(NOISE_ONLY), parts[2] + parts[3])
    with pytest.raises(ValueError):
        c.observed(9)


def test_global_component_scm_matches_samples():
    scene = generate_scene(SceneConfig(seed=4))
    R = true_scms(scene)
    g = scene.components(0, n_samples=200_000).global_component
    assert rel_fro(batch_scm(g), R.R_glob) < 2e-2


def test_selection_matrices():
    E = network_selection((3, 4, 2), 1, 2)
    assert E.shape == (9, 2)
    np.testing.assert_array_equal(E[3:5], np.eye(2))
    assert E.sum() == 2
    with pytest.raises(ConfigurationError):
        selection_matrix(2, 3)


@pytest.mark.parametrize("bad", [
    dict(n_channels=5), dict(n_nodes=0), dict(n_sensors=(4, 4)), dict(n_global_noise=-1),
    dict(activity_pattern=("all", "sometimes")), dict(sensor_noise_frac=-0.1),
])
def test_invalid_configs(bad):
    with pytest.raises(ConfigurationError):
        SceneConfig(**bad)


def test_config_round_trip(tmp_path):
    cfg = SceneConfig(n_nodes=3, n_sensors=(4, 5, 6), seed=11)
    assert SceneConfig.from_dict(json.loads(json.dumps(cfg.to_dict()))) == cfg
    with pytest.raises(ConfigurationError):
        SceneConfig.from_dict({"n_nodez": 3})
    p = tmp_path / "scene.cfg"
    p.write_text("n_nodes = 3\n# comment\nn_sensors = [4, 5, 6]\nseed = 11\n")
    assert SceneConfig.from_dict(load_config_file(p)) == cfg


def test_schedule_cycles_pattern():
    scene = generate_scene(SceneConfig(n_frames=7))
    assert [scene.label(i) for i in range(7)] == [0, 1, 2, 0, 1, 2, 0]
