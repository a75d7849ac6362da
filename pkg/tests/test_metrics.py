import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from wasnsim.metrics import (CSV_COLUMNS, RunReport, Trace, expected_mse, mse_d, read_csv,
                             snr_first_channel)

from conftest import crandn, random_hpd


def test_perfect_estimate():
    d = crandn(np.random.default_rng(0), 3, 2, 10)
    assert mse_d(d, d) == 0


@given(st.complex_numbers(max_magnitude=10, allow_nan=False, allow_infinity=False))
def test_constant_offset(c):
    d = crandn(np.random.default_rng(1), 4, 3, 25)
    assert mse_d(d + c, d) == pytest.approx(abs(c) ** 2, rel=1e-9, abs=1e-12)


@given(st.integers(0, 10_000), st.integers(1, 4), st.integers(1, 3), st.integers(1, 12))
def test_naive_summation(seed, K, J, B):
    rng = np.random.default_rng(seed)
    d_hat, d = crandn(rng, K, J, B), crandn(rng, K, J, B)
    total = 0.0
    for k in range(K):
        for n in range(B):
            total += sum(abs(d_hat[k, j, n] - d[k, j, n]) ** 2 for j in range(J))
    assert mse_d(d_hat, d) == pytest.approx(total / (K * J * B), rel=1e-12)


def test_frame_window():
    d = np.zeros((1, 1, 20))
    d_hat = np.zeros_like(d)
    d_hat[..., 10:15] = 2.0
    assert mse_d(d_hat, d, frame=2, frame_size=5) == 4.0
    assert mse_d(d_hat, d, frame=0, frame_size=5) == 0.0
    with pytest.raises(ValueError):
        mse_d(d_hat, d, frame=4, frame_size=5)
    with pytest.raises(ValueError):
        mse_d(d_hat, d, frame=1)
    with pytest.raises(ValueError):
        mse_d(d_hat[..., :3], d)


@given(st.integers(0, 1000))
def test_expected_mse_matches_sampling(seed):
    rng = np.random.default_rng(seed)
    n, J = 4, 2
    R_ss = random_hpd(rng, n, cond_floor=0.0)
    R_nn = random_hpd(rng, n)
    W = crandn(rng, n, J)
    E = np.eye(n, J)
    # closed form vs E||E^T s - W^H (s + v)||^2 expanded by hand
    R_yy = R_ss + R_nn
    by_hand = sum(np.real(
        (E[:, j] @ R_ss @ E[:, j]) - 2 * np.real(W[:, j].conj() @ R_ss @ E[:, j])
        + W[:, j].conj() @ R_yy @ W[:, j]) for j in range(J))
    assert expected_mse(W, R_yy, R_ss, E) == pytest.approx(by_hand, rel=1e-10)


def test_snr_sentinels():
    s = [np.ones((2, 10))]
    assert snr_first_channel(s, [np.zeros((2, 10))]) == math.inf
    assert snr_first_channel(s, s) == pytest.approx(0.0)
    assert snr_first_channel([np.zeros((2, 10))], s) == -math.inf


def test_snr_mean_over_nodes():
    s = [np.full((1, 4), 10.0), np.full((1, 4), 1.0)]
    v = [np.ones((1, 4)), np.ones((1, 4))]
    assert snr_first_channel(s, v) == pytest.approx(10.0)


def _report():
    t1 = Trace([0.5, 0.25], [1.0, 2.0], [0.1, 0.0], [0.4, 0.3])
    t2 = Trace([1 / 3, 0.2], [math.inf, -1.5], [0.0, 1e-17], [0.3, 0.2])
    return RunReport(["a", "b"], 2, {"a": t1, "b": t2}, {"x": 1}, 7, {"a": {"J": 2}})


def test_csv_round_trip(tmp_path):
    rep = _report()
    rep.to_csv(tmp_path / "r.csv")
    lines = (tmp_path / "r.csv").read_text().splitlines()
    assert lines[0] == ",".join(CSV_COLUMNS)
    assert lines[1].startswith("0,a,") and lines[2].startswith("0,b,")
    back = read_csv(tmp_path / "r.csv")
    np.testing.assert_array_equal(back["b"]["mse_d"], [1 / 3, 0.2])
    assert back["b"]["snr_db"][0] == math.inf
    rep.to_json(tmp_path / "r.json")
    assert '"seed": 7' in (tmp_path / "r.json").read_text()


def test_read_csv_rejects_bad_header(tmp_path):
    (tmp_path / "bad.csv").write_text("a,b\n1,2\n")
    with pytest.raises(ValueError):
        read_csv(tmp_path / "bad.csv")
