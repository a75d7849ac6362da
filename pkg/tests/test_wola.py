import numpy as np
import pytest
from hypothesis import given, strategies as st

from wasnsim.scene import ConfigurationError, SceneConfig
from wasnsim.scm import batch_scm, herm, node_slices
from wasnsim.filters import solve_mwf
from wasnsim.wola import (WolaConfig, analyze, anechoic_scene, delay_and_attenuate,
                          read_wav, synthesize, write_wav)

CFG = WolaConfig()


def _interior(x, L=1024):
    return x[..., L:-L]


@pytest.mark.parametrize("cfg", [WolaConfig(), WolaConfig(256, 0.5),
                                 WolaConfig(512, 0.75), WolaConfig(64, 0.5, "rect")])
def test_round_trip(cfg):
    x = np.random.default_rng(0).standard_normal((3, 20 * cfg.frame_length))
    y = synthesize(analyze(x, cfg), cfg, x.shape[-1])
    L = cfg.frame_length
    err = np.linalg.norm(_interior(y - x, L)) / np.linalg.norm(_interior(x, L))
    assert err < 1e-10


@given(st.integers(0, 1000), st.floats(-3, 3), st.floats(-3, 3))
def test_linearity(seed, a, b):
    rng = np.random.default_rng(seed)
    cfg = WolaConfig(128)
    x, y = rng.standard_normal((2, 2, 1024))
    lhs = analyze(a * x + b * y, cfg)
    rhs = a * analyze(x, cfg) + b * analyze(y, cfg)
    np.testing.assert_allclose(lhs, rhs, atol=1e-10 * (1 + np.abs(rhs).max()))


def test_sinusoid_at_bin_center():
    L, b = 1024, 40
    n = np.arange(8 * L)
    X = analyze(np.cos(2 * np.pi * b * n / L)[None], CFG)
    energy = np.sum(np.abs(X[..., 0]) ** 2, axis=1)
    assert np.argmax(energy) == b
    assert energy[b - 1:b + 2].sum() > 0.99 * energy.sum()


def test_zero_signal():
    assert np.all(analyze(np.zeros((2, 4096)), CFG) == 0)


def test_constant_gain():
    x = np.random.default_rng(1).standard_normal((1, 10 * 1024))
    y = synthesize(0.3 * analyze(x, CFG), CFG, x.shape[-1])
    np.testing.assert_allclose(_interior(y), 0.3 * _interior(x), atol=1e-10)


def test_per_bin_independence():
    rng = np.random.default_rng(2)
    cfg = WolaConfig(256)
    X = analyze(rng.standard_normal((1, 4096)), cfg)
    f = 17
    X2 = X.copy()
    X2[f] *= 2.5
    delta = np.zeros_like(X)
    delta[f] = 1.5 * X[f]
    np.testing.assert_allclose(synthesize(X2, cfg) - synthesize(X, cfg), synthesize(delta, cfg),
                               atol=1e-12)


def test_rejects_bad_input():
    with pytest.raises(ValueError):
        analyze(np.zeros((1, 100)), CFG)
    with pytest.raises(ValueError):
        synthesize(np.zeros((10, 3, 1)), CFG)
    with pytest.raises(ConfigurationError):
        WolaConfig(1023)
    with pytest.raises(ConfigurationError):
        WolaConfig(overlap=1.0)
    with pytest.raises(ConfigurationError):
        WolaConfig(window="kaiser")


def test_integer_delay_is_shift():
    src = np.random.default_rng(3).standard_normal(500)
    out = delay_and_attenuate(src, np.array([1.0, 0.5]), np.array([0.0, 7.0]), 500)
    np.testing.assert_allclose(out[0], src, atol=1e-12)
    np.testing.assert_allclose(out[1, 7:], 0.5 * src[:-7], atol=1e-12)


def test_per_bin_mwf_improves_snr():
    rng = np.random.default_rng(4)
    cfg = WolaConfig(256)
    n = 40_000
    s = delay_and_attenuate(rng.standard_normal(n), np.array([1.0, 0.8, 0.6]),
                            np.array([0.0, 3.3, 6.1]), n)
    v = delay_and_attenuate(rng.standard_normal(n), np.array([0.7, 1.0, 0.9]),
                            np.array([5.2, 0.0, 2.4]), n)
    v = v + 0.1 * rng.standard_normal(v.shape)
    S, V = analyze(s, cfg), analyze(v, cfg)
    to_frames = lambda a: np.swapaxes(a, 1, 2)
    R_ss, R_vv = batch_scm(to_frames(S)), batch_scm(to_frames(V))
    W = solve_mwf(R_ss + R_vv, R_ss[..., :, :1]).W
    out_s = herm(W) @ to_frames(S)
    out_v = herm(W) @ to_frames(V)
    snr_in = np.mean(np.abs(S[..., 0]) ** 2, axis=1) / np.mean(np.abs(V[..., 0]) ** 2, axis=1)
    snr_out = (np.mean(np.abs(out_s[:, 0]) ** 2, axis=-1)
               / np.mean(np.abs(out_v[:, 0]) ** 2, axis=-1))
    active = np.mean(np.abs(S[..., 0]) ** 2, axis=1) > 1e-6
    assert np.all(snr_out[active] > snr_in[active])


def test_wav_round_trip(tmp_path):
    x = np.random.default_rng(5).uniform(-1, 1, (3, 1000))
    write_wav(tmp_path / "a.wav", x, 16000)
    y, fs = read_wav(tmp_path / "a.wav")
    assert fs == 16000 and y.shape == (3, 1000)
    np.testing.assert_allclose(y, x.astype(np.float32), atol=0)


SMALL = SceneConfig(n_nodes=3, n_sensors=3, n_global_desired=1, n_local_desired=1,
                    n_global_noise=1, n_local_noise=1, n_channels=2)


def test_anechoic_scene_structure():
    wola = WolaConfig(256)
    a = anechoic_scene(SMALL, wola, duration_s=0.5)
    b = anechoic_scene(SMALL, wola, duration_s=0.5)
    n = 8000
    assert a.components.total.shape == (9, n)
    np.testing.assert_array_equal(a.components.total, b.components.total)
    # local sources reach only their own node
    rows = node_slices(a.sizes)
    power = np.mean(a.components.s_loc ** 2, axis=1)
    assert np.all(power > 0)
    assert len(a.schedule) == wola.n_frames(n)
    X = a.stft_components()
    assert X.s_glob.shape == (wola.n_bins, wola.n_frames(n), 9)


def test_anechoic_local_masking():
    cfg = SceneConfig(n_nodes=2, n_sensors=2, n_global_desired=0, n_local_desired=(1, 0),
                      n_global_noise=1, n_local_noise=0, n_channels=1, sensor_noise_frac=0.0,
                      target_snr_db=None)
    a = anechoic_scene(cfg, WolaConfig(256), duration_s=0.25)
    assert np.any(a.components.s_loc[:2] != 0)
    assert np.all(a.components.s_loc[2:] == 0)
