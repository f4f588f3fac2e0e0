import logging
import math

import numpy as np
import pytest
from numpy.testing import assert_array_equal

from pbnc.errors import InputError
from pbnc.schemas.network import LineNetworkSpec
from pbnc.schemas.settings import DEConfig, OptConfig
from pbnc.services.density_evolution_service import threshold_homogeneous
from pbnc.services.optimizer_service import (
    ThresholdOracle,
    optimize_core,
    optimize_extension,
    rand_matrix,
    rand_punc_vec,
    rand_row,
)

B1 = np.ones((1, 6), dtype=np.int64)
TARGET = np.array([[1, 0, 2, 0, 0, 1], [0, 1, 0, 2, 1, 0]])


def distance_oracle(B2, delta):
    """Deterministic stand-in for a threshold: distance to a fixed target protomatrix."""
    B2 = np.asarray(B2)
    return float(np.abs(B2[:2] - TARGET).sum() + B2[2:].sum() + abs(delta[0] - 0.3))


class ScriptedOracle:
    def __init__(self, values):
        self.values = list(values)
        self.calls = 0

    def __call__(self, B2, delta):
        value = self.values[self.calls]
        self.calls += 1
        return value


def small_config(**overrides) -> OptConfig:
    settings = dict(
        i_star=1, ir_star=3, ic_star=3, ip_star=3, ir_star_ext=4,
        d_init=[4, 4], delta_init=[0.1, 0.2], b_max=2, b_max_prime=2, seed=5,
    )
    settings.update(overrides)
    return OptConfig(**settings)


class TestRandomGenerators:
    """Random protomatrix rows and puncturing vectors."""

    def test_rand_matrix_row_degrees(self, rng):
        B = rand_matrix(3, 5, [0, 4, 10], 2, rng)
        assert_array_equal(B.sum(axis=1), [0, 4, 10])
        assert B.max() <= 2

    def test_rand_matrix_infeasible_degree(self, rng):
        with pytest.raises(InputError):
            rand_matrix(1, 3, [7], 2, rng)
        with pytest.raises(InputError):
            rand_matrix(2, 3, [1], 2, rng)

    def test_rand_row(self, rng):
        for _ in range(50):
            row = rand_row(6, 3, 8, rng)
            assert 1 <= row.sum() <= 8
            assert row.max() <= 3
        assert not rand_row(6, 3, 0, rng).any()

    def test_rand_punc_vec_keeps_total(self, rng):
        delta = [0.2, 0.5, 0.0, 0.9]
        for _ in range(50):
            out = rand_punc_vec(delta, rng, step=0.3)
            assert out.sum() == pytest.approx(sum(delta))
            assert (out >= 0).all() and (out < 1).all()

    def test_rand_punc_vec_single_entry(self, rng):
        assert_array_equal(rand_punc_vec([0.4], rng), [0.4])

    def test_rand_punc_vec_rejects_bad_fraction(self, rng):
        with pytest.raises(InputError):
            rand_punc_vec([0.2, 1.0], rng)


class TestCoreSearch:
    """Acceptance rule, tracing and checkpointing of the core search."""

    def test_only_strict_improvements_are_accepted(self):
        oracle = ScriptedOracle([5.0, 5.0, 4.0, 4.0 + 1e-10, 3.0, 10.0, 10.0, 10.0, 10.0])
        result = optimize_core(B1, small_config(), oracle, M=100)
        assert [e.accepted for e in result.trace] == [True, False, True, False, True, False, False, False, False]
        assert result.threshold == 3.0
        assert oracle.calls == 9

    def test_result_is_the_best_candidate_seen(self):
        result = optimize_core(B1, small_config(i_star=3), distance_oracle, M=100)
        accepted = [e.threshold for e in result.trace if e.accepted]
        assert result.threshold == min(e.threshold for e in result.trace)
        assert accepted == sorted(accepted, reverse=True)
        assert distance_oracle(result.B2, result.delta) == result.threshold
        assert result.B2.sum() == 8

    def test_starts_from_supplied_incumbent(self):
        result = optimize_core(B1, small_config(), distance_oracle, M=100, initial=(TARGET, [0.3, 0.0]))
        assert result.threshold == 0.0
        assert_array_equal(result.B2, TARGET)
        assert not any(e.accepted for e in result.trace)

    def test_resume_matches_uninterrupted_run(self, tmp_path):
        full = optimize_core(B1, small_config(i_star=3), distance_oracle, M=100, rng=np.random.default_rng(7))
        path = tmp_path / "checkpoint.json"
        optimize_core(B1, small_config(i_star=2), distance_oracle, M=100, rng=np.random.default_rng(7), checkpoint_path=path)
        assert path.exists()
        resumed = optimize_core(
            B1, small_config(i_star=3), distance_oracle, M=100,
            rng=np.random.default_rng(999), checkpoint_path=path, resume=True,
        )
        assert_array_equal(resumed.B2, full.B2)
        assert resumed.delta == pytest.approx(full.delta)
        assert resumed.threshold == full.threshold

    def test_trace_is_logged(self, caplog):
        caplog.set_level(logging.INFO, logger="pbnc.optimizer.trace")
        result = optimize_core(B1, small_config(), distance_oracle, M=100)
        lines = [r.getMessage() for r in caplog.records if r.name == "pbnc.optimizer.trace"]
        assert len(lines) == len(result.trace)
        assert lines[0].startswith("phase=row index=0 candidate=0")


class TestExtensionSearch:
    """Row-by-row extension of an optimized core."""

    def test_appends_one_row_per_extension_entry(self):
        result = optimize_extension(B1, TARGET, [0.3, 0.0, 0.5, 0.5], small_config(), distance_oracle, M=4)
        assert result.B2.shape == (2, 6)
        assert (result.B2.sum(axis=1) <= 4).all()
        assert result.delta == pytest.approx([0.5, 0.5])
        assert len(result.trace) == 8

    def test_first_candidate_is_kept_without_a_threshold(self):
        result = optimize_extension(B1, TARGET, [0.3, 0.0, 0.5], small_config(), lambda B2, delta: math.inf, M=4)
        assert result.B2.shape == (1, 6)
        assert [e.accepted for e in result.trace] == [True, False, False, False]

    def test_rejects_short_puncturing_vector(self):
        with pytest.raises(InputError):
            optimize_extension(B1, TARGET, [0.3], small_config(), distance_oracle, M=4)


class TestThresholdOracle:
    """Oracle wiring to the homogeneous threshold search."""

    def test_matches_direct_threshold(self, rate3_preset):
        protomatrix, delta = rate3_preset
        template = LineNetworkSpec.homogeneous(0.0, 1, 8)
        cfg = DEConfig(l_max=200)
        oracle = ThresholdOracle(protomatrix.B1, template, cfg, resolution=0.02)
        expected = threshold_homogeneous(protomatrix, delta, template, cfg, resolution=0.02).capacity
        assert oracle(protomatrix.B2, delta) == pytest.approx(expected)
        assert oracle.M == 8
