import json
import math

import numpy as np
import pytest

from eigstream.errors import ContractViolation, NoCandidate
from eigstream.heavy_light import (
    HeavyLightParams,
    HeavyStore,
    RowPool,
    classify_row,
    heavy_branch_vector,
    heavy_denominator,
    heavy_threshold,
    run_heavy_light,
)
from eigstream.instances import gen_heavy_mixture, gen_planted_gap
from eigstream.linalg import correlation, exact_top_eigens, make_rng
from eigstream.stream import RowStream


def run(A, seed, **kw):
    return run_heavy_light(RowStream(A, order_seed=seed), HeavyLightParams(**kw), make_rng(seed, 1))


class TestClassifyRow:
    def test_zero_row_light(self):
        assert classify_row(np.zeros(5), 1.0, 5) == "light"

    @pytest.mark.parametrize("d", [1, 2, 3, 50])
    def test_single_row_matrix_heavy(self, d):
        row = np.random.default_rng(d).standard_normal(d)
        assert classify_row(row, float(row @ row), d) == "heavy"

    def test_planted_heavy_row(self):
        rng = np.random.default_rng(0)
        A = rng.standard_normal((1000, 50))
        mean_norm = np.mean(np.linalg.norm(A, axis=1))
        big = rng.standard_normal(50)
        big *= 20 * mean_norm / np.linalg.norm(big)
        A = np.vstack([A, big])
        frob = float(np.sum(A**2))
        assert classify_row(big, frob, 50) == "heavy"
        # with n far above d log^4 d the bulk is light
        rows = np.vstack([rng.standard_normal((200_000, 50)), big])
        frob = float(np.sum(rows**2))
        assert classify_row(big, frob, 50) == "heavy"
        assert classify_row(rows[0], frob, 50) == "light"

    def test_threshold_formula(self):
        assert heavy_threshold(10.0, 32, 4) == pytest.approx(10.0 / (32 * math.log(32) ** 4))
        assert heavy_denominator(2, 4) == 2.0
        with pytest.raises(ContractViolation):
            heavy_threshold(0.0, 4)


class TestHeavyStore:
    def test_budget_overflow(self):
        store = HeavyStore(threshold_sq=1.0, budget=3)
        assert store.add(np.eye(4)[:2])
        assert not store.add(np.eye(4)[2:])
        assert store.overflowed and len(store) == 0
        assert len(store.pool) == 0

    def test_shared_pool_counts_physical_rows(self):
        pool = RowPool()
        a, b = HeavyStore(1.0, 10, pool), HeavyStore(2.0, 10, pool)
        rows = np.eye(3)
        a.add(rows, keys=[0, 1, 2])
        b.add(rows[:2], keys=[0, 1])
        assert len(pool) == 3
        a.release()
        assert len(pool) == 2
        np.testing.assert_array_equal(b.rows, rows[:2])

    def test_branch_vector(self):
        store = HeavyStore(0.0, 5)
        store.add(np.array([[3.0, 0.0, 0.0], [0.0, 1.0, 0.0]]))
        np.testing.assert_allclose(heavy_branch_vector(store), [1.0, 0.0, 0.0])

    def test_empty_branch(self):
        with pytest.raises(NoCandidate):
            heavy_branch_vector(HeavyStore(1.0, 5))


class TestParams:
    def test_beta_times_r(self):
        with pytest.raises(ContractViolation):
            HeavyLightParams(R_hint=16, beta=0.01)
        p = HeavyLightParams(R_hint=16)
        assert p.resolved_beta == 0.25 and p.resolved_alpha == 0.25

    def test_bad_values(self):
        with pytest.raises(ContractViolation):
            HeavyLightParams(R_hint=1.0)
        with pytest.raises(ContractViolation):
            HeavyLightParams(chunk=0)


class TestRunHeavyLight:
    def test_only_heavy_rows(self):
        A = np.diag([1.0, 3.0, 2.0, 0.5, 1.5, 0.7])[:5]
        v, rep = run(A, 0)
        assert correlation(v, np.eye(6)[1]) == pytest.approx(1.0)
        assert rep.winner_branch == "heavy"

    def test_no_heavy_rows_planted_gap(self):
        inst = gen_planted_gap(32, 10_000, 9, 0)
        corrs, branches = [], set()
        for seed in range(20):
            v, rep = run(inst.A, seed, heavy_store=True)
            corrs.append(correlation(v, inst.truth.v1))
            branches.add(rep.winner_branch)
        corrs = np.array(corrs)
        assert np.sum(corrs >= 1 - 8 / 3) >= 16
        assert np.sum(corrs >= 0.9) >= 16

    def test_light_only_instance_uses_light_branch(self):
        inst = gen_planted_gap(32, 20_000, 4, 1)
        v, rep = run(inst.A, 0)
        assert rep.extra["valid_lane_heavy_rows"] == 0
        assert rep.winner_branch == "light"
        assert correlation(v, inst.truth.v1) >= 0.8

    def test_mixed_instance_heavy_wins(self):
        inst = gen_heavy_mixture(32, 20_000, 1, 2.0, seed=3)
        for seed in range(3):
            v, rep = run(inst.A, seed)
            assert correlation(v, inst.truth.v1) >= 0.99
            assert rep.winner_branch == "heavy"

    def test_ablation_flags_broken_equalization(self):
        inst = gen_heavy_mixture(32, 5000, 1, 2.0, seed=3)
        _, rep = run(inst.A, 0, heavy_store=False)
        assert "eta_equalization_broken" in rep.flags
        assert rep.extra["light_eta_measured"] > 1
        assert rep.rows_stored_peak == 0

    def test_report_contents(self):
        inst = gen_heavy_mixture(16, 2000, 3, [8.0, 6.0, 4.0], seed=1)
        v, rep = run(inst.A, 2)
        assert abs(np.linalg.norm(v) - 1) < 1e-12
        d = json.loads(rep.to_json())
        for key in ("winner_branch", "lanes", "rows_stored_peak", "sketch_dims", "seeds", "estimate"):
            assert key in d
        valid = [lane for lane in d["lanes"] if lane["status"] == "valid"]
        assert len(valid) == 1
        assert valid[0]["heavy_rows"] == 3
        assert d["rows_stored_peak"] <= len(d["lanes"]) * d["extra"]["budget"]
        assert d["rows_read"] == 2003

    def test_deterministic(self):
        inst = gen_planted_gap(16, 3000, 9, 5)
        v1, r1 = run(inst.A, 7)
        v2, r2 = run(inst.A, 7)
        np.testing.assert_array_equal(v1, v2)
        assert r1.to_json() == r2.to_json()

    def test_zero_stream(self):
        with pytest.raises(NoCandidate):
            run(np.zeros((10, 4)), 0)


class TestBranchInvariants:
    def test_branch_dichotomy(self):
        # heavy part captures most of v1: its top vector is within 4 beta
        d, beta = 32, 0.25
        for seed in range(5):
            r = np.random.default_rng(seed)
            u = r.standard_normal(d)
            u /= np.linalg.norm(u)
            heavy = 30.0 * (u + 0.05 * r.standard_normal((4, d)))
            light = r.standard_normal((4000, d)) * 0.3
            A = np.vstack([heavy, light])
            frob = float(np.sum(A**2))
            mask = np.array([classify_row(a, frob, d) == "heavy" for a in A])
            s = exact_top_eigens(A)
            Ah = A[mask]
            assert np.linalg.norm(Ah @ s.v1) >= (1 - beta) * math.sqrt(s.sigma1_sq)
            store = HeavyStore(0.0, len(Ah))
            store.add(Ah)
            assert correlation(heavy_branch_vector(store), s.v1) >= 1 - 4 * beta

    def test_light_gap_transfer(self):
        R = 16
        beta = 1 / math.sqrt(R)
        checked = 0
        for seed in range(5):
            inst = gen_planted_gap(32, 5000, R, seed)
            A = inst.A
            frob = float(np.sum(A**2))
            light = A[[classify_row(a, frob, 32) == "light" for a in A]]
            if np.linalg.norm(light @ inst.truth.v1) ** 2 < beta * inst.truth.sigma1_sq:
                continue
            assert beta >= 2 / R
            s = exact_top_eigens(light)
            assert s.gap_R >= 2
            checked += 1
        assert checked >= 3
