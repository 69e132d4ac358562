import math

import numpy as np
import pytest

from coalbm.engine import (CIRCLE, LINE, StopRule, coalescence_time,
                           init_system, run_until)
from coalbm.genealogy import (BranchLengthTable, branch_length_formula,
                              branch_length_scan, build_table, interior_total,
                              sfs_sample, total_length, tree_polylines,
                              truncated_branch_length)
from coalbm.rng import RngStream


def _run(n, topology, seed, stop=None, t_max=32.0):
    st = init_system(n, topology)
    return run_until(st, 1e-4 / n**2, RngStream(seed, 0),
                     stop or StopRule.single_block(), t_max=t_max)


class TestFormula:
    def test_m1_interior_is_min_of_adjacent_pairs(self):
        log = _run(6, LINE, 101)
        for i in (2, 3, 4, 5):
            v, c = branch_length_formula(log, i, 1)
            assert not c
            expect = min(coalescence_time(log, i - 1, i),
                         coalescence_time(log, i, i + 1))
            assert v == pytest.approx(expect, abs=1e-15)

    def test_line_out_of_window_is_zero(self):
        log = _run(6, LINE, 102)
        for m in range(2, 6):
            for i in range(6 - m + 2, 7):
                assert branch_length_formula(log, i, m) == (0.0, False)

    def test_edge_cases_match_pair_times(self):
        log = _run(6, LINE, 103)
        m = 2
        v1, _ = branch_length_formula(log, 1, m)
        expect = max(coalescence_time(log, m, m + 1) -
                     coalescence_time(log, 1, m), 0.0)
        assert v1 == pytest.approx(expect, abs=1e-15)
        vr, _ = branch_length_formula(log, 6 - m + 1, m)
        expect = max(coalescence_time(log, 6 - m, 6 - m + 1) -
                     coalescence_time(log, 6 - m + 1, 6), 0.0)
        assert vr == pytest.approx(expect, abs=1e-15)

    def test_rejects_bad_arguments(self):
        log = _run(4, LINE, 104)
        with pytest.raises(ValueError):
            branch_length_formula(log, 0, 1)
        with pytest.raises(ValueError):
            branch_length_formula(log, 2, 0)
        with pytest.raises(ValueError):
            branch_length_formula(log, 2, 5)


class TestFormulaVsScan:
    @pytest.mark.parametrize("topology", [LINE, CIRCLE])
    def test_fixed_seed_n6(self, topology):
        log = _run(6, topology, 105)
        for m in range(1, 6):
            for i in range(1, 7):
                f = branch_length_formula(log, i, m)
                s = branch_length_scan(log, i, m)
                assert f[1] == s[1]
                assert f[0] == pytest.approx(s[0], abs=1e-12)

    @pytest.mark.parametrize("topology", [LINE, CIRCLE])
    def test_many_seeds_n8(self, topology):
        for r in range(60):
            st = init_system(8, topology)
            log = run_until(st, 1e-4 / 64, RngStream(106, r),
                            StopRule.single_block(), t_max=32.0)
            for m in range(1, 8):
                for i in range(1, 9):
                    f = branch_length_formula(log, i, m)
                    s = branch_length_scan(log, i, m)
                    assert f[1] == s[1] and abs(f[0] - s[0]) <= 1e-12

    def test_censored_log_agreement(self):
        # stop early so many entries are censored or provably zero
        st = init_system(8, LINE)
        log = run_until(st, 1e-4 / 64, RngStream(107, 0),
                        StopRule.horizon_only(), t_max=5e-4)
        assert log.censored
        for m in range(1, 8):
            for i in range(1, 9):
                f = branch_length_formula(log, i, m)
                s = branch_length_scan(log, i, m)
                assert f[1] == s[1] and abs(f[0] - s[0]) <= 1e-12


class TestScanRoot:
    def test_line_root_is_censored_lifetime(self):
        log = _run(5, LINE, 108)
        v, c = branch_length_scan(log, 1, 5)
        assert c
        assert v == pytest.approx(log.final_clock - log.events[-1].time)
        assert branch_length_scan(log, 2, 5) == (0.0, False)

    def test_circle_root_only_at_smallest_index(self):
        log = _run(5, CIRCLE, 109)
        v, c = branch_length_scan(log, 1, 5)
        assert c and v >= 0
        assert branch_length_scan(log, 3, 5) == (0.0, False)


class TestTruncated:
    def test_infinite_cutoff_reduces_to_formula(self):
        log = _run(6, LINE, 110)
        for i in range(1, 7):
            for m in (1, 2, 3):
                assert truncated_branch_length(log, i, m, math.inf) == \
                    branch_length_formula(log, i, m)

    def test_zero_cutoff_is_zero(self):
        log = _run(6, LINE, 111)
        for i in range(1, 7):
            assert truncated_branch_length(log, i, 1, 0.0)[0] == 0.0

    def test_monotone_in_cutoff(self):
        log = _run(6, LINE, 112)
        for i in (2, 3, 4):
            prev = 0.0
            for cut in (1e-4, 1e-3, 1e-2, 1e-1, math.inf):
                v, _ = truncated_branch_length(log, i, 1, cut)
                assert v >= prev - 1e-15
                prev = v

    @pytest.mark.slow
    def test_truncation_gap_small(self):
        # Mean of L - L~ at n=100, m=1, cutoff n**(-4/3+0.01), interior
        # center: stays below 10 * n**(-7/3) (observed about 25x smaller;
        # tail constant near 0.4).
        n, center = 100, 50
        cutoff = n ** (-4.0 / 3.0 + 0.01)
        diffs = []
        for r in range(4000):
            st = init_system(n, LINE)
            log = run_until(st, 1e-3 / n**2, RngStream(113, r),
                            StopRule.entry_resolved(center, 1), t_max=16.0)
            v, c = branch_length_formula(log, center, 1)
            w, c2 = truncated_branch_length(log, center, 1, cutoff)
            if not (c or c2):
                diffs.append(v - w)
        mean_gap = float(np.mean(diffs))
        assert 0.0 <= mean_gap < 10.0 * n ** (-7.0 / 3.0)


class TestCircleSymmetry:
    @pytest.mark.slow
    def test_same_distribution_across_indices_m2(self):
        # exchangeability holds for every leaf count on the circle
        from coalbm.harness import ks_2sample, ks_2sample_critical
        cols = {3: [], 9: []}
        for r in range(600):
            st = init_system(12, CIRCLE)
            log = run_until(st, 1e-4 / 144, RngStream(131, r),
                            StopRule.all_blocks_larger_than(2), t_max=8.0)
            table = build_table(log, 2)
            if table.censored[:, 1].any():
                continue
            for i in cols:
                cols[i].append(table.length(i, 2)[0])
        ks = ks_2sample(cols[3], cols[9])
        assert ks < ks_2sample_critical(len(cols[3]), len(cols[9]), 0.01)


class TestTables:
    def test_build_and_totals(self):
        log = _run(8, LINE, 114, stop=StopRule.all_blocks_larger_than(2),
                   t_max=64.0)
        table = build_table(log, 2)
        for m in (1, 2):
            v, c = total_length(table, m)
            assert v == pytest.approx(float(table.values[:, m - 1].sum()))
            iv, ic = interior_total(table, m)
            mask = (table.particles >= 2) & (table.particles <= 8 - m)
            assert iv == pytest.approx(float(table.values[mask, m - 1].sum()))

    def test_line_zero_band(self):
        log = _run(8, LINE, 115)
        table = build_table(log, 3)
        for m in (2, 3):
            for i in range(8 - m + 2, 9):
                s = i - 1
                assert table.values[s, m - 1] == 0.0

    def test_interior_total_rejects_circle(self):
        log = _run(8, CIRCLE, 116)
        table = build_table(log, 2)
        with pytest.raises(ValueError):
            interior_total(table, 1)

    def test_m_max_bounds(self):
        log = _run(6, LINE, 117)
        with pytest.raises(ValueError):
            build_table(log, 6)
        with pytest.raises(ValueError):
            build_table(log, 0)


def _fixed_table(values):
    values = np.asarray(values, dtype=float)
    k, m_max = values.shape
    return BranchLengthTable(
        n=k, m_max=m_max, topology=LINE,
        particles=np.arange(1, k + 1), values=values,
        censored=np.zeros_like(values, dtype=bool), final_clock=1.0)


class TestSfs:
    def test_zero_rate_gives_zero_counts(self):
        table = _fixed_table([[0.3], [0.2]])
        out = sfs_sample(table, 0.0, RngStream(118, 0))
        assert out.counts.tolist() == [0]

    def test_zero_length_gives_zero_counts(self):
        table = _fixed_table([[0.0, 0.4], [0.0, 0.1]])
        out = sfs_sample(table, 5.0, RngStream(119, 0))
        assert out.counts[0] == 0

    def test_negative_rate_rejected(self):
        table = _fixed_table([[0.1]])
        with pytest.raises(ValueError):
            sfs_sample(table, -1.0, RngStream(120, 0))

    @pytest.mark.slow
    def test_poisson_moments(self):
        # nu=10 and total length 0.1: counts are Poisson(1).
        table = _fixed_table([[0.06], [0.04]])
        stream = RngStream(121, 0)
        draws = np.array([sfs_sample(table, 10.0, stream).counts[0]
                          for _ in range(100_000)])
        assert abs(draws.mean() - 1.0) < 3.0 * math.sqrt(1.0 / draws.size)
        assert abs(draws.var() - 1.0) < 0.05


class TestTreePolylines:
    def test_two_leaves_three_polylines(self):
        st = init_system(2, LINE)
        log = run_until(st, 1e-5, RngStream(122, 0), StopRule.single_block(),
                        t_max=1e6, sample_every=50)
        lines = tree_polylines(log)
        assert len(lines) == 3

    def test_six_leaves_eleven_polylines(self):
        # t_max large enough that the heavy-tailed final pair always meets
        st = init_system(6, LINE)
        log = run_until(st, 1e-4 / 36, RngStream(123, 0),
                        StopRule.single_block(), t_max=1e6, sample_every=100)
        lines = tree_polylines(log)
        assert len(lines) == 11
        leaves = [pl for pl in lines if pl["block"][0] == pl["block"][1]]
        assert len(leaves) == 6

    def test_merge_points_shared(self):
        st = init_system(4, LINE)
        log = run_until(st, 1e-4 / 16, RngStream(124, 0),
                        StopRule.single_block(), t_max=1e6, sample_every=50)
        lines = {pl["block"]: pl for pl in tree_polylines(log)}
        for ev in log.events:
            parent = (ev.left_block[0], ev.right_block[1])
            for child in (ev.left_block, ev.right_block):
                end = (lines[child]["times"][-1], lines[child]["positions"][-1])
                start = (lines[parent]["times"][0], lines[parent]["positions"][0])
                assert end == start

    def test_requires_sampling(self):
        log = _run(3, LINE, 125)
        with pytest.raises(RuntimeError):
            tree_polylines(log)
