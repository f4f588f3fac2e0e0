import math

import numpy as np
import pytest
from numpy.testing import assert_array_equal

from pbnc import storage
from pbnc.errors import InputError
from pbnc.models.models import DecoderKind, FerPoint
from pbnc.schemas.network import LineNetworkSpec
from pbnc.services.codec_service import build_precode_encoder
from pbnc.services.network_service import line_network_dist
from pbnc.services.optimizer_service import lift_with_retry
from pbnc.services.protograph_service import lift
from pbnc.services.simulation_service import (
    TrialPlan,
    effective_input_count,
    ml_bound_curve,
    overhead_report,
    realize_transfer,
    run_fer,
    wilson_interval,
)


@pytest.fixture
def rate3_code(rate3_preset, rng):
    protomatrix, delta = rate3_preset
    return lift(protomatrix, delta, 2, 8, 8, 8, rng)


def point(N, fer, ml_bound):
    return FerPoint(N=N, trials=100, failures=int(fer * 100), fer=fer, wilson_lo=0.0, wilson_hi=1.0, ml_bound=ml_bound)


class TestChannel:
    """Transfer matrices and confidence intervals."""

    def test_lossless_single_hop_is_identity(self, rng):
        H = realize_transfer(LineNetworkSpec.homogeneous(0.0, 1, 6), rng)
        assert_array_equal(H, np.eye(6, dtype=np.int64))

    def test_total_loss(self, rng):
        H = realize_transfer(LineNetworkSpec.homogeneous(1.0, 3, 4), rng)
        assert not H.any()

    def test_wilson_interval(self):
        lo, hi = wilson_interval(5, 10)
        assert lo < 0.5 < hi
        assert wilson_interval(0, 10)[0] == pytest.approx(0.0)
        with pytest.raises(InputError):
            wilson_interval(0, 0)


class TestFrameErrorRate:
    """Monte-Carlo frame error rate of lifted codes."""

    def plan(self, code, **overrides):
        settings = dict(
            netspec=LineNetworkSpec.homogeneous(0.2, 2, 8), code=code, N_range=(16, 24, 32),
            trials=8, decoder=DecoderKind.BP, seed=11,
        )
        settings.update(overrides)
        return TrialPlan(**settings)

    def test_zero_trials(self, rate3_code):
        assert run_fer(self.plan(rate3_code, trials=0)) == []

    def test_plan_checks_batch_size(self, rate3_code):
        with pytest.raises(InputError):
            self.plan(rate3_code, netspec=LineNetworkSpec.homogeneous(0.2, 2, 4))

    def test_too_many_batches_requested(self, rate3_code):
        with pytest.raises(InputError):
            run_fer(self.plan(rate3_code, N_range=(rate3_code.n_batches + 1,)))

    def test_reproducible(self, rate3_code):
        plan = self.plan(rate3_code)
        assert run_fer(plan) == run_fer(plan)

    def test_worker_count_does_not_change_results(self, rate3_code):
        plan = self.plan(rate3_code, decoder=DecoderKind.INACTIVATION)
        assert run_fer(plan, workers=1) == run_fer(plan, workers=2)

    def test_points_are_well_formed(self, rate3_code):
        points = run_fer(self.plan(rate3_code))
        assert [p.N for p in points] == [16, 24, 32]
        for p in points:
            assert p.trials == 8
            assert p.fer == pytest.approx(p.failures / p.trials)
            assert p.wilson_lo <= p.fer <= p.wilson_hi
            assert 0.0 <= p.packet_erasure_rate <= 1.0

    def test_never_beats_the_ml_bound(self, rate3_code):
        points = run_fer(self.plan(rate3_code, decoder=DecoderKind.INACTIVATION, trials=30, N_range=(12, 16, 20)))
        for p in points:
            sigma = math.sqrt(p.ml_bound * (1 - p.ml_bound) / p.trials)
            assert p.fer >= p.ml_bound - 3 * sigma - 1e-9

    def test_ml_bound_uses_the_encoded_input_count(self, rate3_code):
        plan = self.plan(rate3_code)
        A_eff = build_precode_encoder(rate3_code, np.random.default_rng([plan.seed])).A_eff
        assert effective_input_count(plan) == A_eff
        expected = ml_bound_curve(plan.netspec, A_eff, plan.N_range)
        assert [p.ml_bound for p in run_fer(plan)] == pytest.approx(expected)

    def test_overhead_report(self):
        points = [point(10, 0.5, 0.2), point(11, 0.2, 0.05), point(12, 0.05, 0.01)]
        report = overhead_report(points, A=96)
        assert report.N == 12
        assert report.N_ml == 11
        assert report.rate == pytest.approx(8.0)
        assert report.overhead == pytest.approx(12 / 11 - 1)

    def test_overhead_report_without_target(self):
        report = overhead_report([point(10, 0.5, None)], A=96)
        assert report.N is None
        assert report.overhead is None

    @pytest.mark.slow
    def test_design_example_1_end_to_end(self, design_example_1):
        protomatrix, delta = storage.to_protomatrix(design_example_1)
        code = lift_with_retry(protomatrix, delta, 5, 10, 8, 8, np.random.default_rng(1))
        netspec = LineNetworkSpec.homogeneous(0.2, 3, 8)
        C = line_network_dist(netspec).capacity
        N_max = min(int(1.5 * code.A / C), code.n_batches)
        N_range = tuple(range(40, N_max + 1, 5))
        points = run_fer(TrialPlan(netspec=netspec, code=code, N_range=N_range, trials=200, seed=3), workers=4)
        fers = [p.fer for p in points]
        assert all(b <= a + 0.05 for a, b in zip(fers, fers[1:]))
        assert min(fers) <= 0.1
