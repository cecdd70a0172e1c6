import numpy as np
import pytest

from lorentz_lab.rng import (BLOCK_ELEMENTS, WORKERS_ENV, RngStreamSpec, block_layout,
                             default_workers, exponentials, ordered_map, rows_per_block)


def test_same_key_same_block_same_stream():
    a = RngStreamSpec(7, 3).generator(5).random(10)
    b = RngStreamSpec(7, 3).generator(5).random(10)
    assert np.array_equal(a, b)


def test_blocks_and_streams_differ():
    base = RngStreamSpec(7, 3)
    draws = [base.generator(0).random(4), base.generator(1).random(4),
             base.substream(1).generator(0).random(4), RngStreamSpec(8, 3).generator(0).random(4)]
    for i in range(len(draws)):
        for j in range(i + 1, len(draws)):
            assert not np.array_equal(draws[i], draws[j])


def test_block_independent_of_evaluation_order():
    spec = RngStreamSpec(1, 1)
    forward = [spec.generator(b).random(3) for b in range(4)]
    backward = [spec.generator(b).random(3) for b in reversed(range(4))][::-1]
    assert all(np.array_equal(f, g) for f, g in zip(forward, backward))


def test_validation():
    with pytest.raises(ValueError):
        RngStreamSpec(-1, 0)
    with pytest.raises(ValueError):
        RngStreamSpec(0, 1 << 64)
    with pytest.raises(ValueError):
        RngStreamSpec().generator(-1)
    assert RngStreamSpec((1 << 64) - 1, (1 << 64) - 1).substream(1).stream_id == 0


def test_block_layout_covers_rows():
    layout = block_layout(10_000, 101)
    per = rows_per_block(101)
    assert per == BLOCK_ELEMENTS // 101
    assert sum(r for _, _, r in layout) == 10_000
    assert [b for b, _, _ in layout] == list(range(len(layout)))
    assert all(start == b * per for b, start, _ in layout)
    assert rows_per_block(10**7) == 1


def test_ordered_map_preserves_order():
    items = list(range(50))
    assert list(ordered_map(lambda v: v * v, items, workers=4)) == [v * v for v in items]
    assert list(ordered_map(lambda v: v, [], workers=4)) == []


def test_workers_env(monkeypatch):
    monkeypatch.setenv(WORKERS_ENV, "3")
    assert default_workers() == 3
    monkeypatch.delenv(WORKERS_ENV)
    assert default_workers() >= 1


def test_exponentials_mean_and_positivity():
    e = exponentials(RngStreamSpec(2).generator(0), 200_000)
    assert e.min() > 0
    assert abs(e.mean() - 1) < 4 / np.sqrt(200_000)
