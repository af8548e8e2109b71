import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qtow import quantum_core as qc
from qtow.contextuality import (CLASSICAL_BOUND, QUANTUM_MAX, KcbsSet, build_kcbs, is_admissible,
                                kcbs_sampled_contexts, kcbs_witness, lemma_a1_analytic,
                                lemma_a1_sampled, noncontextual_max, probe_projector)

KSET = build_kcbs()


def probe_oracle_perp(beta):
    # closed form of Tr(M_A rho') for rho = |perp><perp|, from direct 3x3 evaluation
    return 2 * math.sin(beta) ** 2 * math.cos(beta) ** 2


class TestKcbsSet:
    def test_third_component(self):
        assert np.allclose(KSET.vectors[:, 2], 5 ** -0.25, atol=1e-15)
        assert 5 ** -0.25 == pytest.approx(0.6687403, abs=1e-7)

    def test_adjacent_orthogonal_and_unit(self):
        for i in range(5):
            assert abs(KSET.vectors[i] @ KSET.vectors[(i + 1) % 5]) < 1e-12
            assert abs(np.linalg.norm(KSET.vectors[i]) - 1) < 1e-12

    def test_adjacent_closed_form(self):
        a = math.acos(5 ** -0.25)
        assert math.sin(a) ** 2 * math.cos(4 * math.pi / 5) + math.cos(a) ** 2 == pytest.approx(0, abs=1e-12)

    def test_non_adjacent_incompatible(self):
        assert abs(KSET.vectors[0] @ KSET.vectors[2]) > 0.1
        assert KSET.exclusivity_edges() == [(0, 1), (0, 4), (1, 2), (2, 3), (3, 4)]

    def test_cyclic_rotation_symmetry(self):
        c, s = math.cos(4 * math.pi / 5), math.sin(4 * math.pi / 5)
        rz = np.array([[c, -s, 0], [s, c, 0], [0, 0, 1]])
        rotated = KSET.vectors @ rz.T
        assert np.allclose(rotated, np.roll(KSET.vectors, -1, axis=0), atol=1e-12)

    def test_rejects_bad_geometry(self):
        with pytest.raises(ValueError):
            KcbsSet(np.tile([0.0, 0.0, 1.0], (5, 1)))
        with pytest.raises(ValueError):
            KcbsSet(2 * KSET.vectors)


class TestWitness:
    def test_z_state(self):
        res = kcbs_witness(qc.KET_PERP, KSET)
        assert all(abs(e - 1 / math.sqrt(5)) < 1e-12 for e in res.expectations)
        assert res.sum == pytest.approx(math.sqrt(5), abs=1e-12)
        assert res.sum == pytest.approx(2.2360680, abs=1e-7)
        assert res.violated and res.classical_bound == 2 and res.quantum_max == math.sqrt(5)

    def test_maximally_mixed(self):
        res = kcbs_witness(qc.maximally_mixed(), KSET)
        assert res.sum == pytest.approx(5 / 3, abs=1e-12)
        assert not res.violated

    def test_state_a_against_dot_products(self):
        oracle = sum(float(v[0]) ** 2 for v in KSET.vectors)
        a = math.acos(5 ** -0.25)
        assert oracle == pytest.approx(math.sin(a) ** 2 * 5 / 2, abs=1e-12)
        res = kcbs_witness(qc.KET_A, KSET)
        assert res.sum == pytest.approx(oracle, abs=1e-12)
        assert res.sum == pytest.approx(1.382, abs=1e-3)
        assert not res.violated

    def test_sum_field(self):
        res = kcbs_witness(qc.state(0.3, 0.4, math.sqrt(0.75)), KSET)
        assert res.sum == pytest.approx(sum(res.expectations), abs=1e-12)

    def test_bounded_over_random_states(self, rng_np):
        for _ in range(10_000 // 10):
            v = rng_np.normal(size=(10, 3)) + 1j * rng_np.normal(size=(10, 3))
            for psi in v / np.linalg.norm(v, axis=1, keepdims=True):
                s = kcbs_witness(psi, KSET).sum
                assert -1e-12 <= s <= QUANTUM_MAX + 1e-9


class TestNoncontextual:
    def test_max_is_two(self):
        best, arg = noncontextual_max(KSET)
        assert best == 2
        assert (1, 0, 1, 0, 0) in arg and len(arg) == 5

    def test_brute_force_oracle(self):
        edges = [(i, (i + 1) % 5) for i in range(5)]
        sums = [sum(b) for b in itertools.product((0, 1), repeat=5)
                if all(not (b[i] and b[j]) for i, j in edges)]
        assert max(sums) == noncontextual_max(KSET)[0] == CLASSICAL_BOUND

    def test_admissibility(self):
        assert is_admissible((1, 0, 1, 0, 0))
        assert not is_admissible((1, 1, 0, 0, 0))
        assert not is_admissible((1, 0, 0, 0, 1))

    def test_geometry_independent(self):
        assert noncontextual_max(edges=[(i, (i + 1) % 5) for i in range(5)])[0] == 2


class TestLemmaAnalytic:
    def test_perp_without_probe(self):
        for beta in (0.1, 0.7, 1.4):
            assert lemma_a1_analytic(qc.KET_PERP, beta).p_no_probe == 0.0

    def test_commuting_endpoints(self):
        assert lemma_a1_analytic(qc.KET_PERP, math.pi / 2).p_with_probe == pytest.approx(0, abs=1e-12)
        assert lemma_a1_analytic(qc.KET_PERP, 0.0).p_with_probe == pytest.approx(0, abs=1e-12)

    @pytest.mark.parametrize("beta", np.linspace(0, math.pi / 2, 15))
    def test_against_closed_form(self, beta):
        assert lemma_a1_analytic(qc.KET_PERP, beta).p_with_probe == pytest.approx(
            probe_oracle_perp(beta), abs=1e-12)

    def test_quarter(self):
        assert lemma_a1_analytic(qc.KET_PERP, math.pi / 4).p_with_probe == pytest.approx(0.5, abs=1e-12)

    def test_probe_matters_inside_interval(self):
        for beta in np.linspace(0, math.pi / 2, 17)[1:-1]:
            c = lemma_a1_analytic(qc.KET_PERP, beta)
            assert c.p_with_probe > c.p_no_probe

    @settings(max_examples=50)
    @given(st.floats(0, math.pi / 2))
    def test_commuting_probe_no_change(self, beta):
        # the probe commutes with a diagonal rho in its own eigenbasis
        psi = np.array([math.cos(beta), 0, math.sin(beta)], complex)
        c = lemma_a1_analytic(psi, beta)
        assert c.p_with_probe == pytest.approx(c.p_no_probe, abs=1e-12)

    def test_probe_projector(self):
        assert qc.is_projector(probe_projector(0.3))


class TestLemmaSampled:
    @pytest.mark.parametrize("beta", [0.2, math.pi / 4, 1.2])
    def test_agrees_with_channel(self, beta):
        n = 100_000
        an = lemma_a1_analytic(qc.KET_PERP, beta)
        sm = lemma_a1_sampled(qc.KET_PERP, beta, n, 31)
        sigma = math.sqrt(an.p_with_probe * (1 - an.p_with_probe) / n)
        assert abs(sm.p_with_probe - an.p_with_probe) < 3 * sigma
        assert sm.p_no_probe == 0.0

    def test_a_at_zero(self):
        sm = lemma_a1_sampled(qc.KET_A, 0.0, 1000, 1)
        assert sm.p_no_probe == sm.p_with_probe == 1.0

    def test_single_sample(self):
        sm = lemma_a1_sampled(qc.state(0.6, 0, 0.8), 0.5, 1, 2)
        assert sm.p_with_probe in (0.0, 1.0) and sm.p_no_probe in (0.0, 1.0)

    def test_generic_state(self):
        psi = qc.state(0.5, 0.5, math.sqrt(0.5))
        n = 100_000
        for beta in (0.3, 1.0):
            an = lemma_a1_analytic(psi, beta)
            sm = lemma_a1_sampled(psi, beta, n, 4)
            for p, q in ((an.p_with_probe, sm.p_with_probe), (an.p_no_probe, sm.p_no_probe)):
                assert abs(p - q) < 3 * math.sqrt(p * (1 - p) / n)


class TestSampledContexts:
    def test_completeness(self):
        for i in range(5):
            eff = KSET.context(i)
            assert np.max(np.abs(eff.sum(axis=0) - qc.IDENTITY)) < 1e-12

    def test_z_state(self):
        res = kcbs_sampled_contexts(qc.KET_PERP, KSET, 100_000, 42)
        assert abs(res.sum - math.sqrt(5)) < 3 * res.sum_sigma
        assert np.all(np.abs(res.discrepancy_z) < 3)
        assert res.counts.sum() == 5 * 100_000

    def test_mixed_state(self):
        res = kcbs_sampled_contexts(qc.maximally_mixed(), KSET, 20_000, 3)
        assert abs(res.z_score) < 4
