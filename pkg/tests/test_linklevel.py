import math

import numpy as np
import pytest

from wbcsi.arrays import CarrierConfig, UpaConfig
from wbcsi.linklevel import (
    ScenarioConfig,
    build_scenario,
    ezf_precoder,
    mmse_irc_sinr,
    run_sweep,
    spectral_efficiency,
)


def grid(n_subbands=5):
    return CarrierConfig(3.5e9, 3.4e9, 30e3, n_subbands, 48)


def upa32(g):
    lam = g.wavelength("DL")
    return UpaConfig(2, 8, 2, 0.5 * lam, 0.8 * lam)


def random_ue_channels(rng, n_ues, n_sub, n_rx, n_t):
    return [
        rng.standard_normal((n_sub, n_rx, n_t))
        + 1j * rng.standard_normal((n_sub, n_rx, n_t))
        for _ in range(n_ues)
    ]


class TestBuildScenario:
    def test_counts_and_determinism(self):
        cfg = ScenarioConfig(n_ues=8, n_drops=1, master_seed=0)
        sets_a = build_scenario(cfg, 5)
        sets_b = build_scenario(cfg, 5)
        assert len(sets_a) == 8
        assert all(len(ps) == 460 for ps in sets_a)
        for a, b in zip(sets_a, sets_b):
            assert np.array_equal(a.aod, b.aod)
            assert np.array_equal(a.phases_dl, b.phases_dl)

    def test_ues_do_not_share_angles(self):
        cfg = ScenarioConfig(n_ues=4, n_drops=1)
        sets = build_scenario(cfg, 9)
        for i in range(4):
            for j in range(i + 1, 4):
                assert not np.allclose(sets[i].aod, sets[j].aod)

    def test_stream_budget_checked(self):
        g = grid()
        cfg = ScenarioConfig(n_ues=40, streams_per_ue=1)
        with pytest.raises(ValueError):
            cfg.validate_against(upa32(g))

    def test_invalid_config_rejected(self):
        with pytest.raises(ValueError):
            ScenarioConfig(n_ues=0)
        with pytest.raises(ValueError):
            ScenarioConfig(streams_per_ue=3)


class TestEzf:
    def test_single_ue_single_stream_matched(self):
        rng = np.random.default_rng(0)
        chans = random_ue_channels(rng, 1, 3, 1, 8)
        w = ezf_precoder(chans, 1, total_power=1.0)
        assert w.shape == (3, 8, 1)
        for k in range(3):
            h = chans[0][k, 0]
            cos = abs(np.vdot(w[:, :, 0][k], h.conj())) / (
                np.linalg.norm(w[k, :, 0]) * np.linalg.norm(h)
            )
            assert cos == pytest.approx(1.0, abs=1e-10)

    def test_zero_forcing_nulls_cross_ue(self):
        rng = np.random.default_rng(1)
        chans = random_ue_channels(rng, 2, 4, 1, 8)
        w = ezf_precoder(chans, 1, total_power=1.0)
        for k in range(4):
            h1 = chans[0][k, 0]
            h2 = chans[1][k, 0]
            desired = abs(h1 @ w[k, :, 0]) ** 2
            leak = abs(h2 @ w[k, :, 0]) ** 2
            assert leak / desired < 1e-18

    def test_power_budget(self):
        rng = np.random.default_rng(2)
        chans = random_ue_channels(rng, 3, 2, 2, 8)
        for streams in (1, 2):
            w = ezf_precoder(chans, streams, total_power=2.5)
            for k in range(2):
                assert np.linalg.norm(w[k]) ** 2 == pytest.approx(2.5, abs=1e-10)

    def test_multi_stream_nulling(self):
        rng = np.random.default_rng(3)
        chans = random_ue_channels(rng, 2, 2, 2, 8)
        w = ezf_precoder(chans, 2, total_power=1.0)
        assert w.shape == (2, 8, 4)
        for k in range(2):
            eff_other = chans[0][k] @ w[k, :, 2:]  # UE 0 sees UE 1's streams
            # UE 0's stream basis lies in its row space; cross-UE streams are
            # nulled against that basis, so residual leakage is tiny.
            u, _, _ = np.linalg.svd(chans[0][k], full_matrices=False)
            leak = np.linalg.norm(u.conj().T @ eff_other)
            assert leak < 1e-10


class TestMmseIrc:
    def test_single_antenna_no_interference(self):
        rng = np.random.default_rng(4)
        chans = random_ue_channels(rng, 1, 2, 1, 4)
        w = ezf_precoder(chans, 1, total_power=1.0)
        sigma2 = 0.1
        sinr = mmse_irc_sinr(chans, w, sigma2)
        for k in range(2):
            expected = abs(chans[0][k, 0] @ w[k, :, 0]) ** 2 / sigma2
            assert sinr[0, 0, k] == pytest.approx(expected, rel=1e-10)

    def test_noise_scaling(self):
        rng = np.random.default_rng(5)
        chans = random_ue_channels(rng, 1, 2, 1, 4)
        w = ezf_precoder(chans, 1, total_power=1.0)
        s1 = mmse_irc_sinr(chans, w, 0.2)
        s2 = mmse_irc_sinr(chans, w, 0.4)
        assert np.allclose(s1, 2 * s2, rtol=1e-10)

    def test_irc_beats_mrc_under_interference(self):
        # Brute-force comparison against a maximum-ratio combiner.
        rng = np.random.default_rng(6)
        for _ in range(20):
            chan = rng.standard_normal((1, 2, 6)) + 1j * rng.standard_normal((1, 2, 6))
            w = rng.standard_normal((1, 6, 3)) + 1j * rng.standard_normal((1, 6, 3))
            sigma2 = 0.3
            sinr = mmse_irc_sinr([chan], w, sigma2, streams_per_ue=1)[0, 0, 0]
            eff = chan[0] @ w[0]
            h_d = eff[:, 0]
            r_int = (
                eff[:, 1:] @ eff[:, 1:].conj().T + sigma2 * np.eye(2)
            )
            mrc = np.abs(h_d.conj() @ h_d) ** 2 / np.real(
                h_d.conj() @ r_int @ h_d
            )
            assert sinr >= mrc - 1e-10

    def test_invalid_noise_rejected(self):
        rng = np.random.default_rng(7)
        chans = random_ue_channels(rng, 1, 1, 1, 2)
        w = ezf_precoder(chans, 1, total_power=1.0)
        with pytest.raises(ValueError):
            mmse_irc_sinr(chans, w, 0.0)


class TestSpectralEfficiency:
    def test_zero_sinr(self):
        assert spectral_efficiency(np.zeros((3, 1, 4))) == 0.0

    def test_unit_sinr_single_ue(self):
        assert spectral_efficiency(np.ones((1, 1, 5))) == pytest.approx(1.0)

    def test_sums_over_ues(self):
        assert spectral_efficiency(np.ones((8, 1, 2))) == pytest.approx(8.0)

    def test_negative_rejected(self):
        with pytest.raises(ValueError):
            spectral_efficiency(np.array([[-0.1]]))

    def test_zf_multiplexing_slope(self):
        # With perfect CSI the sum rate gains ~ n_ues bits per 3 dB of SNR
        # in the noise-limited regime.
        g = grid(n_subbands=3)
        u = upa32(g)
        cfg = ScenarioConfig(
            n_ues=8, n_drops=3, snr_db=(20.0, 30.0), master_seed=6,
            n_cov_samples=4, n_sel_samples=2,
        )
        res = run_sweep(cfg, u, g, schemes=("perfect",), n_ports_list=(4,))
        se = {r["snr_db"]: r["mean_se_bps_hz"] for r in res.rows}
        slope = (se[30.0] - se[20.0]) / 10.0  # bits/s/Hz per dB
        ideal = 8 * math.log2(10) / 10.0
        assert slope == pytest.approx(ideal, rel=0.2)


class TestRunSweep:
    def test_row_structure_and_perfect_reference(self):
        g = grid(n_subbands=4)
        u = upa32(g)
        cfg = ScenarioConfig(
            n_ues=2, n_drops=2, snr_db=(0.0, 10.0), master_seed=1,
            n_cov_samples=12, n_sel_samples=3,
        )
        res = run_sweep(
            cfg, u, g, schemes=("perfect", "pcr"), n_ports_list=(4, 8)
        )
        assert len(res.rows) == 2 * 2 * 2  # snr x scheme x ports
        perfect_rows = [r for r in res.rows if r["scheme"] == "perfect"]
        assert all(r["mean_nmse"] == 0.0 for r in perfect_rows)
        for r in res.rows:
            assert r["mean_se_bps_hz"] >= 0.0

    def test_perfect_dominates_feedback(self):
        g = grid(n_subbands=4)
        u = upa32(g)
        cfg = ScenarioConfig(
            n_ues=3, n_drops=4, snr_db=(10.0,), master_seed=2,
            n_cov_samples=16, n_sel_samples=4,
        )
        res = run_sweep(cfg, u, g, schemes=("perfect", "pcr_d"), n_ports_list=(6,))
        se = {r["scheme"]: r["mean_se_bps_hz"] for r in res.rows}
        assert se["perfect"] >= se["pcr_d"]

    def test_deterministic_and_worker_invariant(self):
        g = grid(n_subbands=3)
        u = upa32(g)
        cfg = ScenarioConfig(
            n_ues=2, n_drops=4, snr_db=(10.0,), master_seed=3,
            n_cov_samples=8, n_sel_samples=2,
        )
        kwargs = dict(schemes=("pcr", "baseline"), n_ports_list=(4,))
        r1 = run_sweep(cfg, u, g, workers=1, **kwargs)
        r2 = run_sweep(cfg, u, g, workers=3, **kwargs)
        r3 = run_sweep(cfg, u, g, workers=1, **kwargs)
        for a, b in ((r1, r2), (r1, r3)):
            for ra, rb in zip(a.rows, b.rows):
                assert ra == rb

    def test_unknown_scheme_rejected(self):
        g = grid()
        with pytest.raises(ValueError):
            run_sweep(ScenarioConfig(n_ues=1), upa32(g), g, schemes=("magic",))

    def test_csv_output(self, tmp_path):
        g = grid(n_subbands=3)
        u = upa32(g)
        cfg = ScenarioConfig(
            n_ues=2, n_drops=1, snr_db=(10.0,), master_seed=4,
            n_cov_samples=8, n_sel_samples=2,
        )
        res = run_sweep(cfg, u, g, schemes=("perfect",), n_ports_list=(4,))
        out = tmp_path / "rows.csv"
        res.to_csv(out)
        lines = out.read_text().strip().split("\n")
        assert lines[0] == (
            "snr_db,scheme,n_ports,feedback_bits,mean_nmse,mean_se_bps_hz,drops"
        )
        assert len(lines) == 2
