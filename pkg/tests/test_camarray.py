import numpy as np
import pytest

from camdot import camarray, costmodel
from camdot.camarray import CamConfig, CamError, CamState
from camdot.geodot import HashBits


def _bits(rng, n) -> HashBits:
    return HashBits(bits=rng.integers(0, 2, n).astype(np.uint8))


def test_config_validation():
    CamConfig(rows=64)
    CamConfig(rows=512, sense_window_cycles=3)
    with pytest.raises(CamError):
        CamConfig(rows=100)
    CamConfig(rows=64, distance_buckets=1)             # width-1 buckets: exact
    with pytest.raises(CamError):
        CamConfig(rows=64, sense_window_cycles=0)
    with pytest.raises(CamError):
        CamConfig(rows=64, distance_buckets=0)


def test_word_length_reconfiguration():
    cam = CamState(CamConfig(rows=64))
    assert cam.word_bits == 256                        # one chunk on reset
    cam.set_word_length(1024)
    assert cam.word_bits == 1024
    with pytest.raises(CamError):
        cam.set_word_length(300)
    with pytest.raises(CamError):
        cam.set_word_length(0)


def test_reconfigure_is_nondestructive():
    rng = np.random.default_rng(0)
    cam = CamState(CamConfig(rows=64))
    cam.set_word_length(1024)
    full = _bits(rng, 1024)
    cam.write_row(3, full)
    before = cam.storage.copy()
    cam.set_word_length(512)
    assert np.array_equal(cam.storage, before)         # no stored bit changes
    assert cam.stored_count == 1
    # narrow searches see only the prefix
    key = HashBits(bits=full.bits[:512].copy())
    assert cam.search(key) == [(3, 0)]
    # widening back exposes the original full word
    cam.set_word_length(1024)
    assert cam.search(full) == [(3, 0)]


def test_write_shorter_hash_zero_fills_tail():
    rng = np.random.default_rng(10)
    cam = CamState(CamConfig(rows=64))
    cam.set_word_length(1024)
    cam.write_row(0, _bits(rng, 1024))
    short = _bits(rng, 256)
    cam.write_row(0, short)                            # overwrite, shorter hash
    assert np.array_equal(cam.storage[0, :256], short.bits)
    assert not cam.storage[0, 256:].any()              # replaced, not retained
    zeros_tail = HashBits(bits=np.concatenate(
        [short.bits, np.zeros(768, dtype=np.uint8)]))
    assert cam.search(zeros_tail) == [(0, 0)]


def test_write_row_validation():
    rng = np.random.default_rng(1)
    cam = CamState(CamConfig(rows=64))
    cam.write_row(0, _bits(rng, 512))                  # longer than active word: fine
    with pytest.raises(CamError):
        cam.write_row(64, _bits(rng, 256))             # row out of range
    with pytest.raises(CamError):
        cam.write_row(-1, _bits(rng, 256))
    with pytest.raises(CamError):
        cam.write_row(0, np.ones(1025, dtype=np.uint8))
    with pytest.raises(CamError):
        cam.write_row(0, np.full(256, 2, dtype=np.uint8))  # non-binary
    with pytest.raises(CamError):
        cam.write_row(0, np.zeros(0, dtype=np.uint8))


def test_search_matches_bruteforce():
    rng = np.random.default_rng(2)
    cam = CamState(CamConfig(rows=128))
    cam.set_word_length(512)
    stored = {}
    for row in rng.choice(128, size=40, replace=False):
        b = _bits(rng, 512)
        cam.write_row(int(row), b)
        stored[int(row)] = b.bits
    query = _bits(rng, 512)
    hits = cam.search(query)
    assert sorted(r for r, _ in hits) == sorted(stored)
    for row, dist in hits:
        assert dist == int((stored[row] != query.bits).sum())


def test_search_skips_invalid_rows():
    rng = np.random.default_rng(3)
    cam = CamState(CamConfig(rows=64))
    cam.write_row(5, _bits(rng, 256))
    hits = cam.search(_bits(rng, 256))
    assert [r for r, _ in hits] == [5]
    cam.clear()
    assert cam.search(_bits(rng, 256)) == []


def test_search_word_length_mismatch():
    rng = np.random.default_rng(4)
    cam = CamState(CamConfig(rows=64))
    cam.set_word_length(512)
    with pytest.raises(CamError):
        cam.search(_bits(rng, 256))


def test_search_many_matches_single_searches():
    rng = np.random.default_rng(5)
    cam = CamState(CamConfig(rows=64))
    cam.set_word_length(1024)
    mat = rng.integers(0, 2, (64, 1024)).astype(np.uint8)
    cam.write_rows(mat)
    queries = rng.integers(0, 2, (20, 1024)).astype(np.uint8)
    row_idx, dists = cam.search_many(queries)
    assert dists.shape == (20, 64)
    for q in range(20):
        single = dict(cam.search(HashBits(bits=queries[q])))
        assert list(row_idx) == sorted(single)
        for j, row in enumerate(row_idx):
            assert dists[q, j] == single[int(row)]


def test_write_rows_start_offset_and_overflow():
    rng = np.random.default_rng(6)
    cam = CamState(CamConfig(rows=64))
    mat = rng.integers(0, 2, (10, 256)).astype(np.uint8)
    cam.write_rows(mat, start=54)
    assert cam.stored_count == 10
    with pytest.raises(CamError):
        cam.write_rows(mat, start=60)                  # runs past last row


def test_distance_buckets_floor_quantize():
    rng = np.random.default_rng(7)
    plain = CamState(CamConfig(rows=64))
    coarse = CamState(CamConfig(rows=64, distance_buckets=8))
    b = _bits(rng, 256)
    q = _bits(rng, 256)
    plain.write_row(0, b)
    coarse.write_row(0, b)
    (_, exact), = plain.search(q)
    (_, quant), = coarse.search(q)
    assert quant == (exact // 8) * 8                   # floored to bucket width
    assert 0 <= exact - quant < 8


def test_trace_events_emitted():
    rng = np.random.default_rng(8)
    trace = costmodel.CostTrace()
    cam = CamState(CamConfig(rows=64), trace=trace)
    cam.set_word_length(512)
    cam.write_rows(rng.integers(0, 2, (7, 512)).astype(np.uint8))
    cam.search_many(rng.integers(0, 2, (3, 512)).astype(np.uint8))
    kinds = [(e.kind, e.count) for e in trace]
    assert ("reconfigure", 1) in kinds
    assert ("write", 7) in kinds
    assert ("search", 3) in kinds
    search = next(e for e in trace if e.kind == "search")
    assert search.rows == 64 and search.word_bits == 512
    assert search.valid_rows == 7


def test_search_determinism_across_instances():
    rng = np.random.default_rng(9)
    mat = rng.integers(0, 2, (64, 768)).astype(np.uint8)
    queries = rng.integers(0, 2, (5, 768)).astype(np.uint8)
    results = []
    for _ in range(2):
        cam = CamState(CamConfig(rows=64))
        cam.set_word_length(768)
        cam.write_rows(mat)
        _, dists = cam.search_many(queries)
        results.append(dists)
    assert np.array_equal(results[0], results[1])


def test_choices_exported():
    assert camarray.ROW_CHOICES == (64, 128, 256, 512)
    assert camarray.WORD_CHOICES == (256, 512, 768, 1024)
    assert camarray.CHUNK_BITS == 256
