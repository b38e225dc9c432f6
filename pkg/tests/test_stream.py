import itertools
import math

import numpy as np
import pytest
from scipy import stats

from eigstream.errors import ContractViolation, SinglePassError, StreamFormatError
from eigstream.stream import (
    RowStream,
    StreamStats,
    filter_stream,
    load_matrix,
    open_stream,
    shuffle_order,
    tee,
    write_binary,
    write_csv,
)


def drain(stream):
    return np.array(list(stream))


@pytest.fixture
def three_rows():
    return np.array([[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]])


class TestOpenStream:
    def test_csv_file_order(self, tmp_path, three_rows):
        path = tmp_path / "a.csv"
        write_csv(path, three_rows)
        np.testing.assert_array_equal(drain(open_stream(path)), three_rows)

    def test_binary_roundtrip(self, tmp_path, three_rows):
        path = tmp_path / "a.eigs"
        write_binary(path, three_rows)
        np.testing.assert_array_equal(load_matrix(path), three_rows)
        raw = path.read_bytes()
        assert raw[:5] == b"EIGS1"
        assert int.from_bytes(raw[5:13], "little") == 3
        assert int.from_bytes(raw[13:21], "little") == 2

    def test_same_seed_same_order(self, tmp_path, three_rows):
        path = tmp_path / "a.eigs"
        write_binary(path, three_rows)
        a = drain(open_stream(path, order_seed=9))
        b = drain(open_stream(path, order_seed=9))
        np.testing.assert_array_equal(a, b)
        assert sorted(map(tuple, a)) == sorted(map(tuple, three_rows))

    def test_csv_row_length_error(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("2,3\n1,2,3\n4,5\n")
        with pytest.raises(StreamFormatError, match="row 1"):
            open_stream(path)

    def test_csv_non_finite(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("2,2\n1,2\n4,nan\n")
        with pytest.raises(StreamFormatError, match="row 1"):
            open_stream(path)

    def test_csv_bad_header(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("three,2\n1,2\n")
        with pytest.raises(StreamFormatError, match="header"):
            open_stream(path)

    def test_csv_short(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("3,2\n1,2\n3,4\n")
        with pytest.raises(StreamFormatError, match="row 2"):
            open_stream(path)

    def test_binary_non_finite(self, tmp_path, three_rows):
        A = three_rows.copy()
        A[2, 0] = np.inf
        path = tmp_path / "a.eigs"
        write_binary(path, A)
        with pytest.raises(StreamFormatError, match="row 2"):
            open_stream(path)

    def test_binary_truncated(self, tmp_path, three_rows):
        path = tmp_path / "a.eigs"
        write_binary(path, three_rows)
        path.write_bytes(path.read_bytes()[:-8])
        with pytest.raises(StreamFormatError):
            open_stream(path)

    def test_binary_bad_magic(self, tmp_path):
        path = tmp_path / "a.eigs"
        path.write_bytes(b"EIGS1" + b"\x00" * 4)
        with pytest.raises(StreamFormatError, match="header"):
            open_stream(path)


class TestNextRow:
    def test_end_of_stream_signal(self, three_rows):
        s = RowStream(three_rows)
        rows = [s.next_row() for _ in range(3)]
        np.testing.assert_array_equal(rows, three_rows)
        assert s.next_row() is None
        assert s.next_row() is None
        assert s.cursor == 3

    def test_single_pass_enforced(self, three_rows):
        s = RowStream(three_rows)
        drain(s)
        with pytest.raises(SinglePassError):
            list(s.chunks(2))

    def test_chunks_cover_each_row_once(self):
        A = np.arange(70.0).reshape(35, 2)
        s = RowStream(A, order_seed=1)
        got = np.vstack(list(s.chunks(8)))
        np.testing.assert_array_equal(got, A[shuffle_order(35, 1)])


class TestShuffle:
    def test_four_row_permutation_frequencies(self):
        counts = {p: 0 for p in itertools.permutations(range(4))}
        trials = 10_000
        for seed in range(trials):
            counts[tuple(shuffle_order(4, seed))] += 1
        p = 1 / 24
        sigma = math.sqrt(p * (1 - p) / trials)
        for c in counts.values():
            assert abs(c / trials - p) <= 3 * sigma

    def test_chi_square_five(self):
        perms = {p: i for i, p in enumerate(itertools.permutations(range(5)))}
        counts = np.zeros(len(perms))
        for seed in range(100_000):
            counts[perms[tuple(shuffle_order(5, seed))]] += 1
        assert stats.chisquare(counts).pvalue > 1e-3

    def test_filtered_substream_uniform(self):
        # rows 1, 3, 4 survive a norm filter; their relative order must be uniform
        A = np.diag([1.0, 5.0, 1.0, 6.0, 7.0, 0.5])
        perms = {p: i for i, p in enumerate(itertools.permutations([5.0, 6.0, 7.0]))}
        counts = np.zeros(6)
        for seed in range(6000):
            sub = filter_stream(RowStream(A, order_seed=seed), lambda r: np.linalg.norm(r, axis=1) > 2)
            order = tuple(float(np.max(r)) for r in sub)
            counts[perms[order]] += 1
        assert stats.chisquare(counts).pvalue > 1e-3


class TestStreamStats:
    def test_frobenius_after_pass(self):
        A = np.random.default_rng(0).standard_normal((500, 12))
        st = StreamStats()
        prev = 0.0
        for rows in RowStream(A, order_seed=3).chunks(37):
            st.update(rows)
            assert st.frob_sq >= prev
            assert st.frob_sq >= st.max_row_norm_sq >= 0
            prev = st.frob_sq
        assert st.frob_sq == pytest.approx(np.sum(A**2), rel=1e-12)
        assert st.max_row_norm_sq == pytest.approx(np.max(np.sum(A**2, axis=1)), rel=1e-12)
        assert st.rows_seen == 500


class TestTee:
    def test_single_consumer(self, three_rows):
        (c,) = tee(RowStream(three_rows), 1)
        np.testing.assert_array_equal(drain(c), three_rows)

    def test_lockstep_three(self):
        A = np.arange(10.0).reshape(5, 2)
        consumers = tee(RowStream(A), 3)
        seen = [[] for _ in consumers]
        while True:
            rows = [c.next() for c in consumers]
            if rows[0] is None:
                assert all(r is None for r in rows)
                break
            for s, r in zip(seen, rows):
                s.append(r)
        for s in seen:
            np.testing.assert_array_equal(s, A)

    def test_lag_violation(self):
        a, b = tee(RowStream(np.eye(4)), 2)
        a.next()
        with pytest.raises(ContractViolation):
            a.next()

    @pytest.mark.parametrize("n", [10, 1000])
    def test_peak_live_rows_is_one(self, n):
        consumers = tee(RowStream(np.ones((n, 3))), 4)
        for _ in range(n + 1):
            for c in consumers:
                c.next()
        hub = consumers[0].hub
        assert hub.peak_live_rows == 1
        assert hub.physical_reads == n

    def test_zero_consumers(self, three_rows):
        with pytest.raises(ContractViolation):
            tee(RowStream(three_rows), 0)
