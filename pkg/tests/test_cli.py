import csv
import json

import numpy as np
import pytest

from pbnc import storage
from pbnc.models.models import PacketBlock
from pbnc.schemas.network import LineNetworkSpec
from pbnc.schemas.protomatrix import ProtomatrixFile
from pbnc.services.codec_service import build_precode_encoder
from pbnc.services.network_service import line_network_dist, ml_bound_series


def read_csv(path):
    with open(path, newline="") as handle:
        return list(csv.reader(handle))


@pytest.fixture
def lifted_code(cli):
    path = cli.path("code.json")
    assert cli("lift", "--preset", "example_rate3", "--seed", 5, "--girth", "--output", path) == 0
    return path


class TestCommands:
    """Exit codes and outputs of the command-line entry point."""

    def test_presets(self, cli, capsys):
        assert cli("presets") == 0
        out = capsys.readouterr().out
        assert "design_example_1\tM=8" in out
        assert len(out.strip().splitlines()) == 6

    def test_unknown_command_is_a_usage_error(self, cli):
        with pytest.raises(SystemExit) as exc:
            cli("frobnicate")
        assert exc.value.code == 1

    def test_missing_input_file(self, cli):
        assert cli("threshold", "--protomatrix", cli.path("absent.json"), "--hops", 1) == 2

    def test_no_batch_rows_reports_no_threshold(self, cli):
        proto = cli.write_json("proto.json", {"M": 4, "n_v": 2, "n_c1": 1, "n_c2": 0, "B1": [[1, 1]], "B2": [], "delta": []})
        out = cli.path("thresholds.csv")
        assert cli("threshold", "--protomatrix", proto, "--hops", 1, "--homogeneous", "--output", out) == 0
        rows = read_csv(out)
        assert rows[0][:2] == ["extension_rows", "capacity"]
        assert rows[1][1] == "no threshold"
        settings = json.loads(open(out + ".config.json").read())
        assert settings["command"] == "threshold"
        assert settings["parameters"]["homogeneous"] is True

    def test_compare_omega_columns(self, cli):
        out = cli.path("thresholds.csv")
        code = cli(
            "threshold", "--preset", "example_rate3", "--hops", 1, "--homogeneous", "--compare-omega",
            "--delta1", 0.05, "--lmax", 100, "--omega", "binomial", "--output", out,
        )
        assert code == 0
        rows = read_csv(out)
        assert rows[0][-3:] == ["capacity_exact", "capacity_binomial", "omega_difference"]
        capacity, binomial = rows[0].index("capacity"), rows[0].index("capacity_binomial")
        for row in rows[1:]:
            assert row[binomial] == row[capacity]

    def test_grid_guard_exit_code(self, cli):
        assert cli("family", "--hops", 4, "--M", 8, "--delta1", 0.01) == 3

    def test_family_then_threshold(self, cli):
        family = cli.path("family.txt")
        assert cli("family", "--hops", 1, "--M", 8, "--delta1", 0.1, "--delta2", 0.08, "--output", family) == 0
        out = cli.path("thresholds.csv")
        trace = cli.path("trace.csv")
        code = cli("threshold", "--preset", "example_rate3", "--family", family, "--lmax", 300, "--output", out, "--trace", trace)
        assert code == 0
        capacity = float(read_csv(out)[1][1])
        assert 3.0 <= capacity <= 8.0
        assert read_csv(trace)[0] == ["iteration", "max_x", "max_z"]

    def test_family_batch_size_must_match(self, cli):
        family = cli.path("family.txt")
        assert cli("family", "--hops", 1, "--M", 4, "--delta1", 0.5, "--output", family) == 0
        assert cli("threshold", "--preset", "example_rate3", "--family", family) == 2

    def test_mlbound_json(self, cli):
        out = cli.path("bound.json")
        N = [100, 150, 200]
        assert cli("mlbound", "--eps", "0.2,0.2", "--M", 16, "--A", 1600, "--N", "100,150,200", "--format", "json", "--output", out) == 0
        rows = json.loads(open(out).read())
        expected = ml_bound_series(line_network_dist(LineNetworkSpec.homogeneous(0.2, 2, 16)), 1600, N)
        assert [r["N"] for r in rows] == N
        for row, value in zip(rows, expected):
            assert row["ml_bound"] == pytest.approx(value, abs=1e-12)

    def test_optimize(self, cli):
        request = {
            "B1": [[1, 1, 1, 0]], "M": 4, "hops": 1, "homogeneous": True,
            "optimizer": {
                "i_star": 1, "ir_star": 1, "ic_star": 1, "ip_star": 1, "ir_star_ext": 1,
                "d_init": [3], "delta_init": [0.0], "delta_ext": [0.0],
            },
            "de": {"l_max": 50},
        }
        config = cli.write_json("optimize.json", request)
        out = cli.path("optimized.json")
        log = cli.path("trace.log")
        assert cli("optimize", config, "--delta1", 0.05, "--seed", 3, "--log", log, "--output", out) == 0
        result = storage.load_model(out, ProtomatrixFile)
        assert (result.n_c1, result.n_c2, result.n_core) == (1, 2, 1)
        assert sum(result.B2[0]) == 3
        lines = open(log).read().splitlines()
        assert len(lines) == 4
        assert lines[-1].startswith("phase=ext index=1 candidate=0")


class TestCodecCommands:
    """Lift, encode, decode and simulate through files."""

    def test_encode_decode_round_trip(self, cli, lifted_code, rng):
        code = storage.load_lifted_code(lifted_code)
        encoder = build_precode_encoder(code, np.random.default_rng([5]))
        inputs = PacketBlock(rng.integers(0, 256, size=(4, encoder.A_eff)))
        packets = cli.path("inputs.bin")
        storage.write_packets(packets, inputs)
        batches = cli.path("batches.json")
        assert cli("encode", "--code", lifted_code, "--input", packets, "--seed", 5, "--output", batches) == 0
        out = cli.path("decoded.bin")
        assert cli("decode", "--code", lifted_code, "--batches", batches, "--output", out) == 0
        np.testing.assert_array_equal(storage.read_packets(out).payload, inputs.payload)

    def test_decode_failure(self, cli, lifted_code, rng):
        code = storage.load_lifted_code(lifted_code)
        encoder = build_precode_encoder(code, np.random.default_rng([5]))
        packets = cli.path("inputs.bin")
        storage.write_packets(packets, PacketBlock(rng.integers(0, 256, size=(1, encoder.A_eff))))
        batches = cli.path("batches.json")
        assert cli("encode", "--code", lifted_code, "--input", packets, "--seed", 5, "--N", 1, "--output", batches) == 0
        out = cli.path("decoded.bin")
        assert cli("decode", "--code", lifted_code, "--batches", batches, "--decoder", "bp", "--output", out) == 2

    def test_simulate_without_trials(self, cli, lifted_code):
        plan = cli.write_json("plan.json", {"code": lifted_code, "eps": [0.1], "N_range": [8, 16], "trials": 5})
        out = cli.path("fer.csv")
        assert cli("simulate", plan, "--trials", 0, "--output", out) == 0
        assert read_csv(out) == [["N", "trials", "failures", "fer", "wilson_lo", "wilson_hi", "ml_bound"]]

    def test_simulate(self, cli, lifted_code):
        plan = cli.write_json("plan.json", {"code": lifted_code, "eps": [0.1, 0.1], "N_range": [16, 32], "trials": 4, "decoder": "inactivation"})
        out = cli.path("fer.json")
        assert cli("simulate", plan, "--format", "json", "--output", out) == 0
        rows = json.loads(open(out).read())
        assert [r["N"] for r in rows] == [16, 32]
        assert all(r["trials"] == 4 and "packet_erasure_rate" in r for r in rows)
