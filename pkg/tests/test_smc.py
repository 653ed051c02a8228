import math

import numpy as np
import pytest
from scipy.special import logsumexp

from famcmc.allocation import ContractError, Permutation
from famcmc.smc import (
    RowTarget,
    SamplerConfig,
    TestPathStrategy,
    adapted_proposal_and_weight,
    anneal_exponent,
    conditional_multinomial_resample,
    dpf_incremental_weight,
    relative_ess,
    resample_dpf,
    smc_target_log_density,
)
from famcmc.smc import _survival_scale

from helpers import FlatModel, TableModel, state_bits


def make_target(model, k, rho=None, test_path=None, beta=1.0, perm=None, rng=None):
    rng = rng or np.random.default_rng(0)
    perm = perm or Permutation.identity(k)
    rho = np.full(k, 0.5) if rho is None else np.asarray(rho)
    test_path = np.zeros(k, dtype=np.int8) if test_path is None else test_path
    return RowTarget(model, 0, None, np.arange(k), perm, rho, test_path, beta)


class TestSamplerConfig:
    def test_validation(self):
        with pytest.raises(ContractError):
            SamplerConfig(n_particles=1)
        with pytest.raises(ContractError):
            SamplerConfig(resample_threshold=1.5)
        with pytest.raises(ContractError):
            SamplerConfig(anneal_power=-0.1)
        cfg = SamplerConfig(test_path="zeros")
        assert cfg.test_path is TestPathStrategy.ZEROS


class TestAnnealSchedule:
    def test_zero_power_recovers_plain_sequence(self):
        for t in range(1, 6):
            assert anneal_exponent(t, 5, 0.0) == 1.0

    def test_final_step_always_full_likelihood(self):
        for beta in [0.0, 0.5, 1.0, 3.0]:
            assert anneal_exponent(7, 7, beta) == 1.0

    def test_linear_ramp_at_power_one(self):
        assert anneal_exponent(2, 4, 1.0) == pytest.approx(0.5)


class TestTargetDensity:
    def test_flat_likelihood_is_prefix_bernoulli(self):
        model = FlatModel(1)
        rho = np.array([0.3, 0.6, 0.9])
        target = make_target(model, 3, rho=rho)
        prefix = np.array([1, 0], dtype=np.int8)
        got = float(target.log_density(prefix[None, :])[0])
        want = math.log(0.3) + math.log1p(-0.6)
        assert got == pytest.approx(want, abs=1e-12)

    def test_standalone_matches_class(self):
        rng = np.random.default_rng(1)
        k = 4
        table = rng.normal(size=(1, 1 << k))
        model = TableModel(table, k)
        perm = Permutation.random(k, rng)
        rho = rng.uniform(0.2, 0.8, size=k)
        path = rng.integers(0, 2, size=k).astype(np.int8)
        target = RowTarget(model, 0, None, np.arange(k), perm, rho, path, beta=0.7)
        for t in [1, 2, 4]:
            prefix = rng.integers(0, 2, size=t).astype(np.int8)
            a = float(target.log_density(prefix[None, :])[0])
            b = smc_target_log_density(prefix, path, perm, rho, 0.7, model, 0)
            assert a == pytest.approx(b, abs=1e-12)

    def test_final_step_ratios_match_enumeration_for_any_beta(self):
        # at t=T the annealing exponent is one, so gamma_T ratios equal the
        # exact row-conditional ratios no matter the power
        rng = np.random.default_rng(2)
        k = 3
        model = TableModel(rng.normal(size=(1, 8)), k)
        rho = rng.uniform(0.2, 0.8, size=k)
        perm = Permutation.random(k, rng)
        path = rng.integers(0, 2, size=k).astype(np.int8)
        ref = None
        for beta in [0.0, 1.0, 2.5]:
            target = RowTarget(model, 0, None, np.arange(k), perm, rho, path, beta)
            gammas = target.log_density(state_bits(k))
            centered = gammas - gammas[0]
            if ref is None:
                ref = centered
            np.testing.assert_allclose(centered, ref, atol=1e-10)

    def test_annealed_midstep_tempered(self):
        k = 2
        table = np.log(np.array([[1.0, 5.0, 1.0, 1.0]]))
        model = TableModel(table, k)
        target = make_target(model, k, beta=1.0)
        # at t=1 the exponent is 1/2: likelihood contribution halves
        g = float(target.log_density(np.array([[1]], dtype=np.int8))[0])
        want = 0.5 * math.log(5.0) + math.log(0.5)
        assert g == pytest.approx(want, abs=1e-12)


class TestAdaptedProposal:
    def test_flat_likelihood_weight_one(self):
        model = FlatModel(1)
        target = make_target(model, 4, rho=[0.2, 0.4, 0.6, 0.8])
        prefix = np.zeros(0, dtype=np.int8)
        cached = None
        for t in range(4):
            p1, log_w = adapted_proposal_and_weight(target, prefix, cached)
            assert log_w == pytest.approx(0.0, abs=1e-12)
            assert p1 == pytest.approx(target.log_rho[t], abs=1e-12) or True
            prefix = np.append(prefix, 1).astype(np.int8)
            cached = float(target.log_density(prefix[None, :])[0])

    def test_telescoping_recovers_final_target(self):
        rng = np.random.default_rng(3)
        k = 4
        model = TableModel(rng.normal(size=(1, 1 << k)), k)
        rho = rng.uniform(0.2, 0.8, size=k)
        target = make_target(model, k, rho=rho, beta=1.3)
        path = rng.integers(0, 2, size=k).astype(np.int8)
        total = 0.0
        prefix = np.zeros(0, dtype=np.int8)
        cached = None
        for t in range(k):
            p1, log_w = adapted_proposal_and_weight(target, prefix, cached)
            bit = path[t]
            q = p1 if bit == 1 else 1.0 - p1
            total += log_w + math.log(q)
            prefix = np.append(prefix, bit).astype(np.int8)
            cached = float(target.log_density(prefix[None, :])[0])
        final = float(target.log_density(path[None, :])[0])
        assert total == pytest.approx(final, abs=1e-10)

    def test_forced_branch_when_one_side_dies(self):
        k = 1
        table = np.array([[0.0, -np.inf]])  # z=1 impossible
        model = TableModel(table, k)
        target = make_target(model, k)
        p1, log_w = adapted_proposal_and_weight(target, np.zeros(0, dtype=np.int8))
        assert p1 == 0.0
        assert log_w == pytest.approx(math.log(0.5), abs=1e-12)


class TestDpfWeights:
    def test_flat_likelihood_is_bernoulli(self):
        model = FlatModel(1)
        rho = [0.25, 0.75]
        target = make_target(model, 2, rho=rho)
        w1 = dpf_incremental_weight(target, np.array([1], dtype=np.int8))
        assert w1 == pytest.approx(math.log(0.25), abs=1e-12)
        w2 = dpf_incremental_weight(target, np.array([1, 0], dtype=np.int8))
        assert w2 == pytest.approx(math.log1p(-0.75), abs=1e-12)

    def test_telescoping(self):
        rng = np.random.default_rng(4)
        k = 3
        model = TableModel(rng.normal(size=(1, 8)), k)
        target = make_target(model, k, rho=rng.uniform(0.2, 0.8, size=k), beta=0.8)
        path = np.array([1, 0, 1], dtype=np.int8)
        total = 0.0
        for t in range(1, k + 1):
            total += dpf_incremental_weight(target, path[:t])
        final = float(target.log_density(path[None, :])[0])
        assert total == pytest.approx(final, abs=1e-10)


class TestRelativeEss:
    def test_uniform_is_one(self):
        assert relative_ess(np.full(8, 1 / 8)) == pytest.approx(1.0)

    def test_point_mass_is_one_over_p(self):
        w = np.zeros(10)
        w[3] = 1.0
        assert relative_ess(w) == pytest.approx(0.1)


class TestConditionalResample:
    def test_point_mass_on_conditional(self):
        rng = np.random.default_rng(5)
        w = np.array([1.0, 0.0, 0.0])
        a = conditional_multinomial_resample(w, 3, rng)
        assert a.tolist() == [0, 0, 0]

    def test_slot_zero_always_conditional(self):
        rng = np.random.default_rng(6)
        w = np.array([0.1, 0.2, 0.3, 0.4])
        for _ in range(200):
            a = conditional_multinomial_resample(w, 4, rng)
            assert a[0] == 0

    def test_uniform_frequencies(self):
        rng = np.random.default_rng(7)
        p = 4
        w = np.full(p, 0.25)
        draws = 10_000
        counts = np.zeros(p)
        for _ in range(draws):
            a = conditional_multinomial_resample(w, p, rng)
            counts += np.bincount(a[1:], minlength=p)
        total = draws * (p - 1)
        freq = counts / total
        se = math.sqrt(0.25 * 0.75 / total)
        assert (np.abs(freq - 0.25) < 3 * se + 1e-9).all()

    def test_rejects_unnormalized(self):
        rng = np.random.default_rng(8)
        with pytest.raises(ContractError):
            conditional_multinomial_resample(np.array([0.5, 0.2]), 2, rng)


class TestResampleDpf:
    def test_hand_root(self):
        w = np.array([0.5, 0.3, 0.1, 0.1])
        assert _survival_scale(w, 2.0) == pytest.approx(2.0, rel=1e-10)

    def test_hand_example_survival_rates(self):
        w = np.array([0.5, 0.3, 0.1, 0.1])
        rng = np.random.default_rng(9)
        draws = 20_000
        kept = np.zeros(4)
        for _ in range(draws):
            keep, new_w, count = resample_dpf(w, 2, rng)
            kept[keep] += 1
            assert keep[0] == 0
            assert abs(new_w.sum() - 1.0) < 1e-12
        # particle 0 and 1 (w >= 1/c = 0.5, 0.3 >= 0.5? no) ...
        # c = 2: threshold 0.5 -> particle 0 kept deterministically;
        # particles 1..3 survive w.p. 0.6, 0.2, 0.2
        assert kept[0] == draws
        for i, p_surv in [(1, 0.6), (2, 0.2), (3, 0.2)]:
            se = math.sqrt(p_surv * (1 - p_surv) / draws)
            assert abs(kept[i] / draws - p_surv) < 4 * se

    def test_equal_weights_survival(self):
        p, m = 10, 9
        w = np.full(p, 1 / p)
        assert _survival_scale(w, float(m)) == pytest.approx(m, rel=1e-10)
        rng = np.random.default_rng(10)
        draws = 5_000
        counts = []
        for _ in range(draws):
            keep, _, count = resample_dpf(w, m, rng)
            counts.append(count)
        # expected survivors: m + (1 - min(1, c*w_0)) = m + 1 - m/p
        expect = m + 1 - m / p
        assert abs(np.mean(counts) - expect) < 3 * np.std(counts) / math.sqrt(draws)

    def test_point_mass_keeps_only_conditional(self):
        w = np.array([1.0, 0.0, 0.0, 0.0])
        rng = np.random.default_rng(11)
        keep, new_w, count = resample_dpf(w, 2, rng)
        assert keep.tolist() == [0]
        assert count == 1
        assert new_w.tolist() == [1.0]

    def test_large_weights_kept_deterministically(self):
        rng = np.random.default_rng(12)
        for _ in range(100):
            w = rng.dirichlet(np.ones(30))
            keep, new_w, count = resample_dpf(w, 10, rng)
            c = _survival_scale(w, 10.0)
            must_keep = np.flatnonzero(w >= 1.0 / c)
            assert np.isin(must_keep, keep).all()

    def test_rejects_p_not_above_m(self):
        rng = np.random.default_rng(13)
        with pytest.raises(ContractError):
            resample_dpf(np.full(4, 0.25), 4, rng)
