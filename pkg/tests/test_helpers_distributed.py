"""Tests for latentsft.helpers.distributed module."""

from __future__ import annotations

import threading

import pytest

from latentsft.helpers.distributed import chunk, ordered_map, shards


@pytest.fixture
def sample_list() -> list[int]:
    """Sample list for testing."""
    return list(range(10))


class TestChunk:
    """Contiguous chunking."""

    @pytest.mark.parametrize(
        ("replica", "expected"),
        [(1, [0, 1, 2]), (2, [3, 4, 5]), (3, [6, 7, 8, 9])],
    )
    def test_last_replica_takes_remainder(
        self, sample_list: list[int], replica: int, expected: list[int]
    ) -> None:
        """Items split into equal chunks; the last one gets the rest."""
        assert list(chunk(sample_list, replica, 3)) == expected

    def test_sparse_distribution(self) -> None:
        """With fewer items than replicas each replica gets at most one."""
        assert [list(chunk([7, 8], r, 4)) for r in range(1, 5)] == [[7], [8], [], []]

    @pytest.mark.parametrize(("replica", "total"), [(1, 0), (0, 2), (3, 2)])
    def test_invalid_arguments(self, replica: int, total: int) -> None:
        """Replica must lie in [1, total] and total must be positive."""
        with pytest.raises(ValueError, match="replica|total"):
            list(chunk([1, 2, 3], replica, total))

    def test_covers_input_in_order(self, sample_list: list[int]) -> None:
        """Concatenated chunks reproduce the input."""
        parts = [list(chunk(sample_list, r, 4)) for r in range(1, 5)]
        assert [x for part in parts for x in part] == sample_list


class TestShards:
    """Worker shards."""

    def test_drops_empty_shards(self) -> None:
        """Workers without items get no shard."""
        assert shards([1, 2], 4) == [[1], [2]]

    def test_single_worker(self, sample_list: list[int]) -> None:
        """One worker gets everything."""
        assert shards(sample_list, 1) == [sample_list]


class TestOrderedMap:
    """Order-preserving parallel map."""

    def test_serial_runs_on_caller(self) -> None:
        """threads=1 stays on the calling thread."""
        names = ordered_map(lambda _: threading.current_thread().name, [1, 2, 3])
        assert set(names) == {threading.current_thread().name}

    def test_threaded_keeps_order(self, sample_list: list[int]) -> None:
        """Results come back in input order."""
        assert ordered_map(lambda x: x * x, sample_list, threads=4) == [x * x for x in sample_list]
