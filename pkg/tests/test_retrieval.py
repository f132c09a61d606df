import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from docanon.errors import SchemaError
from docanon.raster import Raster
from docanon.retrieval import (EmbeddingStore, best_match, cosine, embed_thumbnail,
                               retrieval_accuracy, top1)
from docanon.synthdoc import default_templates, render

vectors = arrays(np.float64, 5, elements=st.floats(-10, 10)).filter(lambda v: np.linalg.norm(v) > 1e-3)


def test_cosine_examples():
    assert cosine([1, 2, 2], [2, 1, 2]) == pytest.approx(8 / 9)
    assert cosine([1, 0], [0, 1]) == 0.0
    v = [0.3, -1.2, 5.0]
    assert cosine(v, v) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        cosine([0, 0], [1, 1])
    with pytest.raises(ValueError):
        cosine([1, 2], [1, 2, 3])


@given(vectors, vectors, st.floats(0.01, 100))
def test_cosine_scale_invariant(u, v, a):
    assert cosine(a * u, v) == pytest.approx(cosine(u, v), abs=1e-9)
    assert -1.0 <= cosine(u, v) <= 1.0


def test_thumbnail_is_block_mean_for_divisible_sizes(rng):
    px = rng.integers(0, 256, (64, 32)).astype(np.uint8)
    blocks = px.astype(float).reshape(16, 4, 16, 2).mean(axis=(1, 3)).ravel()
    expected = blocks - blocks.mean()
    expected /= np.linalg.norm(expected)
    np.testing.assert_allclose(embed_thumbnail(Raster(px)), expected, atol=1e-12)


def test_thumbnail_basic_properties(rng):
    img = Raster(rng.integers(0, 256, (123, 77)).astype(np.uint8))
    v = embed_thumbnail(img)
    assert v.shape == (256,)
    assert np.linalg.norm(v) == pytest.approx(1.0, abs=1e-9)
    np.testing.assert_array_equal(v, embed_thumbnail(Raster(img.pixels.copy())))
    np.testing.assert_allclose(embed_thumbnail(img.to_rgb()), v)
    with pytest.raises(ValueError):
        embed_thumbnail(Raster.blank(40, 40, 9))


def test_same_template_is_more_similar():
    tpls = default_templates(3, 0)
    vecs = {(i, s): embed_thumbnail(render(t, s)[0]) for i, t in enumerate(tpls) for s in range(3)}
    for (i, s), v in vecs.items():
        same = min(cosine(v, w) for (j, r), w in vecs.items() if j == i and r != s)
        other = max(cosine(v, w) for (j, _), w in vecs.items() if j != i)
        assert same > other


def _store(*rows):
    s = EmbeddingStore(len(rows[0][2]))
    for doc, model, vec in rows:
        s.add(doc, model, vec)
    return s


def test_top1_examples():
    s = _store(("a", "m1", [1, 0, 0]), ("b", "m2", [0.6, 0.8, 0]), ("c", "m3", [0, 0, 1]))
    q = [0.5, 0.9, 0.1]
    sims = [cosine(q, r.vector) for r in s.records]
    assert top1(s, q).doc_id == s.records[int(np.argmax(sims))].doc_id == "b"
    assert top1(s, [0, 0, 1]).doc_id == "c"
    one = _store(("z", "m", [1, 0, 0]))
    assert top1(one, [-1, 0, 0]).doc_id == "z"


def test_top1_ties_and_errors():
    s = _store(("k", "m", [1, 0]), ("b", "m", [2, 0]), ("x", "m", [0, 1]))
    rec, sim = best_match(s, [1, 0])
    assert rec.doc_id == "b" and sim == pytest.approx(1.0)
    with pytest.raises(ValueError):
        top1(EmbeddingStore(2), [1, 0])
    with pytest.raises(ValueError):
        top1(s, [1, 0, 0])


@given(st.floats(0.05, 50))
def test_top1_invariant_under_store_scaling(a):
    base = [("a", "m", [1.0, 0.2, 0.1]), ("b", "m", [0.1, 1.0, 0.3]), ("c", "m", [0.2, 0.1, 1.0])]
    scaled = [(d, m, [a * x for x in v]) for d, m, v in base]
    q = [0.3, 0.9, 0.2]
    assert top1(_store(*base), q).doc_id == top1(_store(*scaled), q).doc_id


def test_store_invariants():
    s = _store(("a", "m", [1, 0]))
    with pytest.raises(ValueError):
        s.add("a", "m", [0, 1])
    with pytest.raises(ValueError):
        s.add("b", "m", [0, 1, 0])
    with pytest.raises(ValueError):
        s.add("c", "m", [0, 0])
    assert [r.doc_id for r in s.without(["a"]).records] == []


def test_jsonl_round_trip_float32(tmp_path, rng):
    vecs = rng.normal(size=(4, 8))
    s = _store(*[(f"d{i}", "m", v) for i, v in enumerate(vecs)])
    path = tmp_path / "s.jsonl"
    s.save(path)
    back = EmbeddingStore.load(path)
    assert [r.doc_id for r in back.records] == ["d0", "d1", "d2", "d3"]
    for r, v in zip(back.records, vecs):
        np.testing.assert_array_equal(np.array(r.vector), v.astype(np.float32).astype(np.float64))
    assert path.read_text().count("\n") == 4


@pytest.mark.parametrize("text", ["", "{bad\n", '{"doc_id": "a"}\n',
                                  '{"doc_id": "a", "model_id": "m", "vector": []}\n',
                                  '{"doc_id": "a", "model_id": "m", "vector": [1]}\n'
                                  '{"doc_id": "b", "model_id": "m", "vector": [1, 2]}\n'])
def test_jsonl_errors(tmp_path, text):
    path = tmp_path / "s.jsonl"
    path.write_text(text)
    with pytest.raises(SchemaError):
        EmbeddingStore.load(path)


def test_retrieval_accuracy():
    s = _store(("a", "m1", [1, 0]), ("b", "m2", [0, 1]))
    assert retrieval_accuracy(s, [([1, 0], "m1"), ([0, 1], "m2")]) == 1.0
    assert retrieval_accuracy(s, [([1, 0], "m2"), ([0, 1], "m1")]) == 0.0
    assert retrieval_accuracy(s, [([1, 0.1], "m1"), ([1, 0.1], "m2")]) == 0.5
