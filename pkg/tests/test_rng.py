import numpy as np
import pytest

from slgbm.rng import RngStream, blocks_for, philox_block


@pytest.mark.parametrize("seed,stream,counter", [(0, 0, 0), (1, 2, 3), (2**64 - 1, 5, 10**6),
                                                 (123456789, 2**63, 2**40)])
def test_block_matches_numpy_philox(seed, stream, counter):
    # numpy pre-increments its 256-bit counter before every block
    words = [(((counter - 1) % 2**256) >> (64 * k)) % 2**64 for k in range(4)]
    bg = np.random.Philox(key=np.array([seed, stream], dtype=np.uint64),
                          counter=np.array(words, dtype=np.uint64))
    ref = bg.random_raw(4)
    assert np.array_equal(philox_block(seed, stream, counter), ref)


def test_stream_is_pure_function_of_fields():
    s = RngStream(7, 3, 11)
    a, nxt = s.normals(10)
    b, _ = RngStream(7, 3, 11).normals(10)
    assert np.array_equal(a, b)
    assert nxt.counter == 11 + blocks_for(10) == 14
    c, _ = nxt.normals(4)
    d, _ = s.normals(16)
    assert np.array_equal(c, d[12:16])


def test_streams_differ():
    a, _ = RngStream(7, 0).normals(8)
    b, _ = RngStream(7, 1).normals(8)
    c, _ = RngStream(8, 0).normals(8)
    assert not np.allclose(a, b) and not np.allclose(a, c)


def test_normals_are_standard():
    z, _ = RngStream(2024).normals(400000)
    assert abs(z.mean()) < 5 / np.sqrt(z.size)
    assert abs(z.var() - 1) < 5 * np.sqrt(2 / z.size)
    assert abs(np.mean(z ** 4) - 3) < 5 * np.sqrt(96 / z.size)
    assert np.all(np.isfinite(z))


def test_field_validation():
    with pytest.raises(ValueError):
        RngStream(-1)
    with pytest.raises(ValueError):
        RngStream(0, 2**64)
    with pytest.raises(ValueError):
        RngStream(0.5)
