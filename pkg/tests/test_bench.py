import math

import numpy as np
import pytest

from tem_codec import bench
from tem_codec.bench import (ExperimentConfig, ResultRow, bits_at_mse, compression, curves,
                             mse_at_bits, parse_config, read_csv, run_point, sweep, write_csv)
from tem_codec.tem_core import CodecParams

SMALL = ExperimentConfig(seeds=2, duration=0.3, Ks=(16, 64))


@pytest.fixture(scope="module")
def small_rows():
    return sweep(SMALL)


class TestConfig:
    def test_parse(self):
        cfg = parse_config("""
            # comment
            machines = IF, ACIF
            seeds = 3
            Ks = 16,32
            beta = 0.6   # trailing comment
            tdc_mode = paper_literal
        """)
        assert cfg.machines == ("IF", "ACIF") and cfg.seeds == 3 and cfg.Ks == (16, 32)
        assert cfg.params.beta == 0.6 and cfg.params.tdc_mode == "paper_literal"

    def test_text_overrides_flags(self):
        cfg = parse_config("seeds = 4", seeds=9, duration=0.5)
        assert cfg.seeds == 4 and cfg.duration == 0.5

    @pytest.mark.parametrize("text", ["nonsense", "colour = red", "machines = XIF", "seeds = 0"])
    def test_rejects(self, text):
        with pytest.raises(ValueError):
            parse_config(text)

    def test_resolved_is_complete(self):
        flat = ExperimentConfig().resolved()
        assert flat["kappa"] == "0.24" and flat["Ks"] == "16,32,64,128,256,512"
        assert "params" not in flat

    def test_default_constants(self):
        p = ExperimentConfig().params
        assert (p.kappa, p.delta, p.b_if, p.alpha1, p.alpha2) == (0.24, 0.0156, 3.4166, 0.98, 0.6)


class TestSweep:
    def test_cardinality(self):
        cfg = ExperimentConfig(seeds=20, duration=0.12)
        rows = sweep(cfg)
        assert len(rows) == 480
        assert len({(r.machine, r.seed, r.K) for r in rows}) == 480

    def test_csv_is_reproducible(self, small_rows, tmp_path):
        a = write_csv(small_rows, tmp_path / "a.csv", SMALL)
        b = write_csv(sweep(SMALL), tmp_path / "b.csv", SMALL)
        assert a == b
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()

    def test_workers_match_serial(self, small_rows):
        import dataclasses
        assert sweep(dataclasses.replace(SMALL, workers=2)) == small_rows

    def test_csv_round_trip(self, small_rows, tmp_path):
        write_csv(small_rows, tmp_path / "s.csv", SMALL)
        rows, meta = read_csv(tmp_path / "s.csv")
        assert rows == small_rows
        assert meta["seeds"] == "2" and meta["b_if"] == "3.4166"

    def test_rows_rederive_from_streams(self, small_rows, tmp_path):
        from tem_codec.bitstream import count_bits_empirical, deserialize, serialize
        from tem_codec.codec import encode
        for row in small_rows[::5]:
            x = bench.build_signal(SMALL, row.seed)
            path = tmp_path / "s.tem"
            path.write_bytes(serialize(encode(x, SMALL.params.with_(K=row.K), row.machine)))
            acct = count_bits_empirical(deserialize(path.read_bytes()))
            assert acct.total_paper_count == row.bits_paper
            assert acct.total_self_delimiting == row.bits_self_delimiting
            assert acct.n_samples == row.n_events

    def test_audio_source(self):
        cfg = ExperimentConfig(source=str(bench.DEFAULT_AUDIO), time_scale=100.0,
                               audio_offset=5.0, seeds=2, duration=0.3, Ks=(64,),
                               machines=("IF",))
        rows = sweep(cfg)
        assert len(rows) == 2 and rows[0].mse_db != rows[1].mse_db
        assert all(r.mse_db < -40 for r in rows)


def _row(machine, K, bits, mse, seed=0):
    return ResultRow(machine=machine, seed=seed, K=K, n_events=10, bits_paper=bits,
                     bits_self_delimiting=bits + 10, mse_db=mse, switch_rate=0.0,
                     mean_phi=1.0, saturations=0)


class TestSummaries:
    rows = [_row("IF", 16, 1000, -20), _row("IF", 32, 2000, -30), _row("IF", 64, 3000, -40),
            _row("ACIF", 16, 500, -22), _row("ACIF", 32, 900, -32), _row("ACIF", 64, 1300, -42)]

    def test_curves(self):
        cv = curves(self.rows)
        assert list(cv) == ["IF", "ACIF"]
        assert list(cv["IF"]["bits"]) == [1000, 2000, 3000]
        assert list(curves(self.rows, "self_delimiting")["IF"]["bits"]) == [1010, 2010, 3010]

    def test_bits_at_mse(self):
        cv = curves(self.rows)["IF"]
        assert bits_at_mse(cv, -25) == pytest.approx(1500)
        assert bits_at_mse(cv, -40) == pytest.approx(3000)
        assert bits_at_mse(cv, -50) is None
        assert bits_at_mse(cv, -10) is None

    def test_mse_at_bits(self):
        cv = curves(self.rows)["IF"]
        assert mse_at_bits(cv, 2000) == pytest.approx(-30)
        assert mse_at_bits(cv, 2 ** ((math.log2(1000) + math.log2(2000)) / 2)) == pytest.approx(-25)
        assert mse_at_bits(cv, 100) is None

    def test_compression(self):
        frac, detail = compression(self.rows, "IF", "ACIF", targets=[-30, -35])
        assert detail[0][1:] == pytest.approx((820, 2000))
        assert detail[1][1:] == pytest.approx((1020, 2500))
        assert frac == pytest.approx(np.mean([1 - 820 / 2000, 1 - 1020 / 2500]))

    def test_self_comparison_is_zero(self, small_rows):
        frac, _ = compression(small_rows, "AIF", "AIF")
        assert frac == pytest.approx(0.0)

    def test_missing_machine(self):
        with pytest.raises(KeyError):
            compression(self.rows, "AIF")


def test_run_point_matches_sweep(small_rows):
    row = run_point(SMALL, "ACIF", 1, 64)
    assert row in small_rows
