import math

import numpy as np
import pytest
from scipy.integrate import quad

from tem_codec.bitstream import deserialize, serialize
from tem_codec.codec import StreamError, encode
from tem_codec.decoder import (ReconstructionConfig, ReconstructionError, from_firing,
                               frame_matrix, mirror_decode, reconstruct)
from tem_codec.signal import ParameterError, mse_db, synth_sinc_signal
from tem_codec.tem_core import MACHINES, encode_adaptive, encode_fixed

from conftest import OMEGA, zero_signal


class TestFrame:
    def test_matches_quadrature(self):
        edges = np.array([0.0, 0.013, 0.021, 0.04])
        centers = np.array([0.005, 0.03, -0.2])
        A = frame_matrix(edges, centers, OMEGA)
        for n in range(3):
            for k in range(3):
                ref = quad(lambda t: np.sinc(OMEGA * (t - centers[k]) / np.pi),
                           edges[n], edges[n + 1], epsabs=1e-14)[0]
                assert A[n, k] == pytest.approx(ref, rel=1e-9, abs=1e-15)


class TestConfig:
    def test_defaults(self):
        cfg = ReconstructionConfig(omega=OMEGA)
        assert cfg.rate == pytest.approx(50 * 20)

    @pytest.mark.parametrize("kw", [dict(tol=0.0), dict(tol=1.0), dict(rate=100.0)])
    def test_rejects(self, kw):
        with pytest.raises(ParameterError):
            ReconstructionConfig(omega=OMEGA, **kw)


class TestUnquantized:
    @pytest.mark.parametrize("encoder", [encode_fixed, encode_adaptive])
    def test_recovery(self, params, sinc_signals, encoder):
        for x in sinc_signals:
            seq = from_firing(encoder(x, params), x.omega, x.duration)
            assert mse_db(x, reconstruct(seq)) <= -40

    def test_zero_signal(self, params):
        x = zero_signal(0.2)
        trace = reconstruct(from_firing(encode_fixed(x, params), x.omega, x.duration))
        assert np.max(np.abs(trace.samples)) <= 1e-10

    def test_too_few_measurements(self, params):
        x = zero_signal(0.0015)
        seq = from_firing(encode_fixed(x, params), x.omega, x.duration)
        with pytest.raises(ReconstructionError):
            reconstruct(seq)


class TestMirror:
    @pytest.mark.parametrize("machine", MACHINES)
    def test_intervals_within_a_cell(self, params, sinc_signals, machine):
        x = sinc_signals[4]
        s = encode(x, params, machine)
        seq = mirror_decode(s)
        assert np.all(np.diff(seq.times) > 0)
        assert np.allclose(seq.biases, s.trace.biases)
        # Intervals are measured from the reconstructed previous time, so
        # every decoded time sits within half a fine cell of the truth. The
        # cell is at most D/K wide.
        cell = params.kd / params.beta / params.K
        assert np.abs(seq.times - s.trace.times).max() <= 0.5 * cell * 1.001
        assert np.abs(seq.intervals - s.trace.intervals).max() <= cell * 1.001

    @pytest.mark.parametrize("machine", MACHINES)
    def test_zero_signal_constant_intervals(self, params, machine):
        s = encode(zero_signal(0.2), params, machine)
        seq = mirror_decode(s)
        tail = seq.intervals[len(seq) // 2:]
        assert np.ptp(tail) <= params.kd / params.beta / params.K

    def test_checksum_mismatch(self, params, sinc_signals):
        s = encode(sinc_signals[0], params, "ACIF")
        bad = type(s)(header=type(s.header)(**{**s.header.__dict__,
                                               "plan_checksum": s.header.plan_checksum ^ 1}),
                      records=s.records)
        with pytest.raises(StreamError, match="checksum"):
            mirror_decode(bad)

    def test_record_count_mismatch(self, params, sinc_signals):
        s = encode(sinc_signals[0], params, "IF")
        with pytest.raises(StreamError):
            mirror_decode(type(s)(header=s.header, records=s.records[:-1]))

    def test_deterministic(self, params, sinc_signals):
        s = encode(sinc_signals[5], params, "ACIF")
        a = reconstruct(mirror_decode(deserialize(serialize(s))))
        b = reconstruct(mirror_decode(deserialize(serialize(s))))
        assert np.array_equal(a.samples, b.samples)

    def test_plan_per_record(self, params, sinc_signals):
        s = encode(sinc_signals[5], params, "ACIF")
        seq = mirror_decode(s)
        assert len(seq.plans) == len(seq)
        assert {p.epoch for p in seq.plans[:params.M_var]} == {0}


class TestRateDistortion:
    def test_tone_improves_with_K(self, params):
        # 5 Hz tone built from its own Nyquist-grid samples.
        n = np.arange(-10, 11)
        x = synth_sinc_signal(OMEGA, 10, coeffs=0.8 * np.cos(2 * math.pi * 5 * n * math.pi / OMEGA),
                              duration=1.0)
        for machine in MACHINES:
            errs = [mse_db(x, reconstruct(mirror_decode(encode(x, params.with_(K=K), machine))))
                    for K in (16, 32, 64, 128, 256)]
            assert all(b < a for a, b in zip(errs, errs[1:])), (machine, errs)

    @pytest.mark.parametrize("machine", MACHINES)
    def test_non_increasing_in_K(self, params, sinc_signals, machine):
        for x in sinc_signals[:3]:
            errs = [mse_db(x, reconstruct(mirror_decode(encode(x, params.with_(K=K), machine))))
                    for K in (16, 32, 64, 128, 256, 512)]
            assert all(b <= a + 0.5 for a, b in zip(errs, errs[1:])), errs
