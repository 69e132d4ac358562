import numpy as np
import pytest

from coalbm.engine import (CIRCLE, LINE, StopRule, init_system, run_until)
from coalbm.genealogy import BranchLengthTable, SfsVector, build_table
from coalbm.rng import RngStream
from coalbm.serialize import (dump_eventlog, load_eventlog, sfs_from_csv,
                              sfs_to_csv, sfs_to_text, table_from_csv,
                              table_to_csv, table_to_text)


def _log(topology=LINE, seed=401):
    st = init_system(6, topology)
    return run_until(st, 1e-4 / 36, RngStream(seed, 0),
                     StopRule.single_block(), t_max=32.0)


class TestEventLogRoundTrip:
    @pytest.mark.parametrize("topology", [LINE, CIRCLE])
    def test_bit_exact(self, topology):
        log = _log(topology)
        text = dump_eventlog(log)
        back = load_eventlog(text)
        assert back.n == log.n
        assert back.topology == log.topology
        assert np.array_equal(back.particles, log.particles)
        assert back.final_clock == log.final_clock
        assert back.censored == log.censored
        assert len(back.events) == len(log.events)
        for a, b in zip(log.events, back.events):
            assert a.time == b.time  # repr round-trip, bit exact
            assert a.left_block == b.left_block
            assert a.right_block == b.right_block
        # and a second dump is byte-identical
        assert dump_eventlog(back) == text

    def test_rejects_foreign_text(self):
        with pytest.raises(ValueError):
            load_eventlog("not an event log\n")


class TestTableRoundTrip:
    def test_bit_exact(self):
        table = build_table(_log(seed=402), 3)
        text = table_to_csv(table, config_hash="cafe")
        back = table_from_csv(text)
        assert back.n == table.n and back.m_max == table.m_max
        assert np.array_equal(back.values, table.values)
        assert np.array_equal(back.censored, table.censored)
        assert back.final_clock == table.final_clock

    def test_text_mirror_mentions_all_rows(self):
        table = build_table(_log(seed=403), 2)
        text = table_to_text(table)
        for p in table.particles:
            assert f"i={int(p)}:" in text


class TestSfsRoundTrip:
    def test_bit_exact(self):
        sfs = SfsVector(nu=2.5, counts=np.array([3, 0, 7]),
                        censored=np.array([False, False, True]))
        back = sfs_from_csv(sfs_to_csv(sfs, config_hash="beef"))
        assert back.nu == sfs.nu
        assert np.array_equal(back.counts, sfs.counts)
        assert np.array_equal(back.censored, sfs.censored)

    def test_text_mirror(self):
        sfs = SfsVector(nu=1.0, counts=np.array([2, 5]),
                        censored=np.array([False, True]))
        text = sfs_to_text(sfs)
        assert "M[1]: 2" in text
        assert "M[2]: 5*" in text
