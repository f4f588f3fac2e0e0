import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from pbnc import storage
from pbnc.errors import InputError
from pbnc.models.models import BcnForm, OmegaMode, Protomatrix, RankDistribution
from pbnc.schemas.network import LineNetworkSpec
from pbnc.schemas.settings import DEConfig
from pbnc.services.density_evolution_service import (
    DensityEvolution,
    bcn_update,
    compare_omega_modes,
    de_trace,
    lcn_update,
    omega_approximation_report,
    omega_binomial,
    omega_exact_pmf,
    omega_gap,
    reg_inc_beta,
    run_de,
    threshold,
    threshold_homogeneous,
    threshold_profile,
    vcn_update,
)
from pbnc.services.network_service import dominates, enumerate_family, line_network_dist, single_hop_dist

BETA = DEConfig(bcn_form=BcnForm.BETA, omega_mode=OmegaMode.BINOMIAL)
DIRECT = DEConfig(bcn_form=BcnForm.DIRECT, omega_mode=OmegaMode.BINOMIAL)


def random_rank_distribution(rng, M: int) -> RankDistribution:
    h = rng.random(M + 1)
    return RankDistribution(h / h.sum())


def random_bcn_case(rng, M: int):
    """One B-CN row of degree at most 20, random edge erasures and a random rank distribution."""
    n_v = int(rng.integers(1, 9))
    row = rng.integers(0, 4, size=n_v)
    while row.sum() > 20:
        row[rng.integers(n_v)] = 0
    if not row.any():
        row[0] = 1
    protomatrix = Protomatrix(np.zeros((0, n_v)), row[None, :])
    x = rng.random((1, n_v))
    j = int(rng.choice(np.flatnonzero(row)))
    delta = [float(rng.uniform(0.0, 0.5))]
    return protomatrix, delta, x, j, random_rank_distribution(rng, M)


def random_protograph(rng):
    """Random punctured protograph with up to two L-CN rows and one to four B-CN rows."""
    n_v = int(rng.integers(3, 9))
    B1 = rng.integers(0, 3, size=(int(rng.integers(0, 3)), n_v))
    B2 = rng.integers(0, 3, size=(int(rng.integers(1, 5)), n_v))
    for row in B2:
        if not row.any():
            row[rng.integers(n_v)] = 1
    return Protomatrix(B1, B2), rng.uniform(0.0, 0.5, size=B2.shape[0])


def line_network_pair(rng, M: int, m: int):
    """Rank distributions of a line network and of the same network with larger erasures."""
    hops = int(rng.integers(1, 4))
    eps = rng.uniform(0.0, 0.5, size=hops)
    worse = np.clip(eps + rng.uniform(0.0, 0.3, size=hops), 0.0, 1.0)
    good = line_network_dist(LineNetworkSpec(eps=[float(e) for e in eps], M=M, field={"m": m}))
    bad = line_network_dist(LineNetworkSpec(eps=[float(e) for e in worse], M=M, field={"m": m}))
    return good, bad


class TestScalarUpdates:
    """Reference update rules on single edges."""

    def test_lcn_needs_every_other_input(self):
        protomatrix = Protomatrix([[1, 2, 0]], np.zeros((0, 3)))
        x = np.array([[0.5, 0.2, 0.9]])
        assert lcn_update(protomatrix, x, 0, 0) == pytest.approx(1 - 0.8**2)
        assert lcn_update(protomatrix, x, 0, 1) == pytest.approx(1 - 0.5 * 0.8)

    def test_vcn_multiplies_other_messages(self):
        protomatrix = Protomatrix([[1, 1]], [[2, 1]])
        y = np.array([[0.5, 0.4], [0.3, 0.6]])
        assert vcn_update(protomatrix, y, 0, 0) == pytest.approx(0.3**2)
        assert vcn_update(protomatrix, y, 1, 0) == pytest.approx(0.5 * 0.3)

    def test_reg_inc_beta_edges(self):
        assert reg_inc_beta(0.3, 4, 4) == 1.0
        assert reg_inc_beta(0.3, 4, 7) == 1.0
        assert reg_inc_beta(1.0, 4, 1) == pytest.approx(1.0)
        assert reg_inc_beta(0.5, 3, 1) == pytest.approx(0.25)
        with pytest.raises(InputError):
            reg_inc_beta(1.5, 3, 1)

    def test_exact_and_binomial_agree_on_equal_inputs(self):
        protomatrix = Protomatrix(np.zeros((0, 3)), [[2, 1, 3]])
        x_row = np.full(3, 0.35)
        pmf = omega_exact_pmf(protomatrix, 0, 2, x_row)
        assert pmf.sum() == pytest.approx(1.0)
        for s in range(pmf.size):
            assert pmf[s] == pytest.approx(omega_binomial(protomatrix, 0, 2, s, x_row))

    @pytest.mark.parametrize("M", [8, 16])
    @pytest.mark.parametrize("q", [2, 256])
    def test_direct_and_beta_forms_agree(self, M, q, rng):
        for _ in range(200):
            protomatrix, delta, x, j, h = random_bcn_case(rng, M)
            beta = bcn_update(protomatrix, delta, h, 0, j, x, BETA, q)
            direct = bcn_update(protomatrix, delta, h, 0, j, x, DIRECT, q)
            assert beta == pytest.approx(direct, abs=1e-12)

    @pytest.mark.slow
    def test_direct_and_beta_forms_agree_exhaustively(self, rng):
        for _ in range(10_000):
            M = int(rng.choice([8, 16]))
            q = int(rng.choice([2, 256]))
            protomatrix, delta, x, j, h = random_bcn_case(rng, M)
            beta = bcn_update(protomatrix, delta, h, 0, j, x, BETA, q)
            direct = bcn_update(protomatrix, delta, h, 0, j, x, DIRECT, q)
            assert beta == pytest.approx(direct, abs=1e-12)

    def test_full_puncturing_erases_everything(self, rng):
        protomatrix, _, x, j, h = random_bcn_case(rng, 8)
        assert bcn_update(protomatrix, [0.999999], h, 0, j, x) == pytest.approx(1.0, abs=1e-5)


class TestDensityEvolutionEngine:
    """The vectorized engine against the scalar rules and its monotonicity."""

    @pytest.mark.parametrize("de_config", [BETA, DIRECT, DEConfig(omega_mode=OmegaMode.EXACT)])
    def test_engine_matches_scalar_rules(self, rate3_preset, rng, de_config):
        protomatrix, delta = rate3_preset
        delta = np.array([0.2, 0.1])
        h = random_rank_distribution(rng, 8)
        engine = DensityEvolution(protomatrix, delta, 8, 256, de_config)
        x = rng.random((protomatrix.n_c, protomatrix.n_v))
        y = engine.check_update(x[None], h.h[None, :])[0]
        for i, j in zip(*np.nonzero(protomatrix.B)):
            if i < protomatrix.n_c1:
                expected = lcn_update(protomatrix, x, i, j)
            else:
                expected = bcn_update(protomatrix, delta, h, i, j, x, de_config, 256)
            assert y[i, j] == pytest.approx(expected, abs=1e-12)
        x_next = engine.variable_update(y[None])[0]
        for i, j in zip(*np.nonzero(protomatrix.B)):
            assert x_next[i, j] == pytest.approx(vcn_update(protomatrix, y, i, j), abs=1e-12)

    def test_identity_batches_decode_in_one_iteration(self):
        protomatrix = Protomatrix(np.zeros((0, 4)), np.eye(4, dtype=np.int64))
        outcome = run_de(protomatrix, np.zeros(4), RankDistribution.point_mass(4, 4))
        assert outcome.converged
        assert outcome.iterations == 1

    def test_rank_zero_never_converges(self, rate3_preset):
        protomatrix, delta = rate3_preset
        outcome = run_de(protomatrix, delta, RankDistribution.point_mass(0, 8), DEConfig(l_max=50))
        assert not outcome.converged
        assert outcome.z.max() == pytest.approx(1.0)

    def test_rejects_wrong_batch_size(self, rate3_preset):
        protomatrix, delta = rate3_preset
        engine = DensityEvolution(protomatrix, delta, 8, 256)
        with pytest.raises(InputError):
            engine.run(np.ones((1, 5)) / 5)

    def test_trace_is_non_increasing(self, rate3_preset):
        protomatrix, delta = rate3_preset
        rows = de_trace(protomatrix, delta, single_hop_dist(0.05, 8), DEConfig(l_max=200))
        posteriors = [z for _, _, z in rows]
        assert rows[0][0] == 1
        assert all(a >= b - 1e-12 for a, b in zip(posteriors, posteriors[1:]))


FORMS = [BcnForm.BETA, BcnForm.DIRECT]


class TestRandomProtographs:
    """Monotonicity of density evolution on random punctured protographs."""

    @staticmethod
    def _check_update_monotonicity(instances, form, rng):
        de_config = DEConfig(bcn_form=form, omega_mode=OmegaMode.BINOMIAL)
        for _ in range(instances):
            protomatrix, delta = random_protograph(rng)
            M = int(rng.choice([4, 8]))
            m = int(rng.choice([1, 8]))
            engine = DensityEvolution(protomatrix, delta, M, 2**m, de_config)
            good, bad = line_network_pair(rng, M, m)
            x = rng.random((1, protomatrix.n_c, protomatrix.n_v))
            worse = np.clip(x + 0.3 * rng.random(x.shape), 0.0, 1.0)
            y = engine.check_update(x, good.h[None, :])
            assert (engine.check_update(worse, good.h[None, :]) >= y - 1e-12).all()
            assert (engine.check_update(x, bad.h[None, :]) >= y - 1e-12).all()

    @pytest.mark.parametrize("form", FORMS)
    def test_check_update_is_monotone(self, form, rng):
        self._check_update_monotonicity(200, form, rng)

    @pytest.mark.slow
    @pytest.mark.parametrize("form", FORMS)
    def test_check_update_is_monotone_exhaustively(self, form, rng):
        self._check_update_monotonicity(10_000, form, rng)

    @pytest.mark.parametrize("form", FORMS)
    def test_messages_never_grow_and_unused_edges_stay_erased(self, form, rng):
        de_config = DEConfig(bcn_form=form, omega_mode=OmegaMode.BINOMIAL, l_max=30)
        for _ in range(100):
            protomatrix, delta = random_protograph(rng)
            engine = DensityEvolution(protomatrix, delta, 8, 256, de_config)
            good, _ = line_network_pair(rng, 8, 8)
            unused = protomatrix.B == 0
            x = np.ones((protomatrix.n_c, protomatrix.n_v))
            z = np.ones(protomatrix.n_v)
            for state in engine.iterate(good):
                assert (state.x <= x + 1e-12).all()
                assert (state.z <= z + 1e-12).all()
                assert (state.x[unused] == 1.0).all()
                assert (state.y[unused] == 1.0).all()
                x, z = state.x, state.z

    @pytest.mark.parametrize("form", FORMS)
    def test_dominating_channel_converges_too(self, form, rng):
        de_config = DEConfig(bcn_form=form, omega_mode=OmegaMode.BINOMIAL, l_max=100, stall_eps=0.0)
        for _ in range(100):
            protomatrix, delta = random_protograph(rng)
            good, bad = line_network_pair(rng, 8, 8)
            assert dominates(bad, good)
            engine = DensityEvolution(protomatrix, delta, 8, 256, de_config)
            for better, worse in zip(engine.iterate(good), engine.iterate(bad)):
                assert (better.x <= worse.x + 1e-12).all()
                assert (better.z <= worse.z + 1e-12).all()
            if run_de(protomatrix, delta, bad, de_config).converged:
                assert run_de(protomatrix, delta, good, de_config).converged


class TestThresholds:
    """Threshold searches over families and homogeneous line networks."""

    def test_no_batch_rows_has_no_threshold(self, rate3_preset):
        protomatrix, _ = rate3_preset
        family = enumerate_family(LineNetworkSpec.homogeneous(0.0, 1, 8), 0.1, 0.08)
        result = threshold(Protomatrix(protomatrix.B1, np.zeros((0, 8))), [], family)
        assert result.capacity == math.inf
        assert not result.found

    def test_family_threshold_is_a_bucket_capacity(self, rate3_preset):
        protomatrix, delta = rate3_preset
        family = enumerate_family(LineNetworkSpec.homogeneous(0.0, 1, 8), 0.05, 0.08)
        result = threshold(protomatrix, delta, family, DEConfig(l_max=300))
        assert result.found
        assert result.capacity == pytest.approx(family.key_capacity(result.bucket_key))
        assert 3.0 <= result.capacity <= 8.0
        engine = DensityEvolution(protomatrix, delta, 8, 256, DEConfig(l_max=300))
        for key in family.sorted_keys():
            if key >= result.bucket_key:
                assert engine.all_converge(family.rank_matrix(key))
        below = [k for k in family.sorted_keys() if k < result.bucket_key]
        if below:
            assert not engine.all_converge(family.rank_matrix(below[-1]))

    def test_homogeneous_threshold_brackets_convergence(self, rate3_preset):
        protomatrix, delta = rate3_preset
        template = LineNetworkSpec.homogeneous(0.0, 1, 8)
        cfg = DEConfig(l_max=300)
        result = threshold_homogeneous(protomatrix, delta, template, cfg, resolution=0.01)
        assert result.found
        assert run_de(protomatrix, delta, single_hop_dist(result.eps, 8), cfg).converged
        assert not run_de(protomatrix, delta, single_hop_dist(min(result.eps + 0.02, 1.0), 8), cfg).converged
        assert result.capacity == pytest.approx(line_network_dist(LineNetworkSpec.homogeneous(result.eps, 1, 8)).capacity)

    def test_extension_rows_never_raise_the_threshold(self, rate3_preset):
        protomatrix, delta = rate3_preset
        with_extension = Protomatrix(protomatrix.B1, protomatrix.B2, n_core=1)
        rows = threshold_profile(
            with_extension, delta, template=LineNetworkSpec.homogeneous(0.0, 1, 8),
            de_config=DEConfig(l_max=300), resolution=0.01,
        )
        assert [row.extension_rows for row in rows] == [0, 1]
        assert rows[1].found
        assert rows[1].capacity <= rows[0].capacity
        assert rows[1].rate == pytest.approx(3.0)

    def test_profile_needs_one_channel_description(self, rate3_preset):
        protomatrix, delta = rate3_preset
        with pytest.raises(InputError):
            threshold_profile(protomatrix, delta)

    def test_compare_omega_modes(self, rate3_preset):
        protomatrix, delta = rate3_preset
        family = enumerate_family(LineNetworkSpec.homogeneous(0.0, 1, 8), 0.1, 0.08)
        results = compare_omega_modes(protomatrix, delta, family, de_config=DEConfig(l_max=200))
        assert set(results) == {"exact", "binomial", "difference"}
        assert results["difference"] == pytest.approx(abs(results["exact"] - results["binomial"]))

    def test_compare_omega_modes_on_a_homogeneous_network(self, rate3_preset):
        protomatrix, delta = rate3_preset
        template = LineNetworkSpec.homogeneous(0.0, 1, 8)
        cfg = DEConfig(l_max=200, omega_mode=OmegaMode.BINOMIAL)
        results = compare_omega_modes(protomatrix, delta, template=template, de_config=cfg, resolution=0.02)
        expected = threshold_homogeneous(protomatrix, delta, template, cfg, resolution=0.02).capacity
        assert results["binomial"] == pytest.approx(expected)
        assert math.isfinite(results["exact"])

    def test_compare_omega_modes_needs_one_channel_description(self, rate3_preset):
        protomatrix, delta = rate3_preset
        with pytest.raises(InputError):
            compare_omega_modes(protomatrix, delta)

    def test_equal_inputs_make_the_binomial_model_exact(self):
        row = np.array([2, 1, 0, 3, 1, 0, 0, 1])
        assert omega_gap(row, np.full(8, 0.37), 0, 8) == pytest.approx(0.0, abs=1e-12)

    def test_spread_inputs_break_the_binomial_model(self):
        # exactly one of the other inputs is erased; the binomial model spreads that over 0, 1 and 2
        row = np.array([1, 1, 1, 0, 0, 0, 0, 0])
        assert omega_gap(row, np.array([0.5, 0.0, 1.0, 0, 0, 0, 0, 0]), 0, 8) == pytest.approx(0.5)

    def test_erased_input_approximation_report(self, rng):
        report = omega_approximation_report(rng, draws=100)
        assert report.gaps.shape == (100,)
        assert report.worst == pytest.approx(report.gaps.max())
        assert 0.0 <= report.median <= report.worst <= 1.0
        assert report.edge == np.flatnonzero(report.row)[0]
        assert omega_gap(report.row, report.x_row, report.edge, 8) == pytest.approx(report.worst)

    def test_erased_input_approximation_needs_draws(self, rng):
        with pytest.raises(InputError):
            omega_approximation_report(rng, draws=0)

    @pytest.mark.slow
    def test_design_example_1_thresholds(self, design_example_1):
        protomatrix, delta = storage.to_protomatrix(design_example_1)
        template = LineNetworkSpec.homogeneous(0.0, design_example_1.hops, design_example_1.M)
        family = enumerate_family(template, design_example_1.delta1, design_example_1.delta2)
        rows = threshold_profile(protomatrix, delta, family=family, workers=4)
        published = [6.1010, 5.5000, 4.9760, 4.3010, 3.7710, 3.3560, 3.0560]
        assert [row.capacity for row in rows] == pytest.approx(published, abs=0.05)

    @pytest.mark.slow
    def test_design_example_2_thresholds(self, design_example_2):
        protomatrix, delta = storage.to_protomatrix(design_example_2)
        template = LineNetworkSpec.homogeneous(0.0, design_example_2.hops, design_example_2.M)
        rows = threshold_profile(protomatrix, delta, template=template, resolution=1e-4)
        eps = [0.1904, 0.2588, 0.3193, 0.3730, 0.4170, 0.4531, 0.4863, 0.5176, 0.5459]
        capacities = [12.0822, 10.8829, 9.8486, 8.9490, 8.2240, 7.6349, 7.0990, 6.5993, 6.1504]
        assert [row.eps for row in rows] == pytest.approx(eps, abs=0.005)
        assert [row.capacity for row in rows] == pytest.approx(capacities, abs=0.05)
