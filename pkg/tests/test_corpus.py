import numpy as np
import pytest

from focalorder.corpus import (
    GeneratorConfig,
    corpus_hash,
    generate_corpus,
    generate_document,
    load_corpus,
    save_corpus,
)
from focalorder.metrics import spatial_logical_mismatch


def test_config_validation():
    with pytest.raises(ValueError):
        GeneratorConfig(n_docs=1, elements_max=0, elements_min=0)
    with pytest.raises(ValueError):
        GeneratorConfig(n_docs=1, ambiguity=1.5)
    with pytest.raises(ValueError):
        GeneratorConfig(n_docs=1, columns_min=3, columns_max=2)


def test_zero_ambiguity_has_no_mismatches():
    cfg = GeneratorConfig(n_docs=30, ambiguity=0.0, seed=7)
    for doc in generate_corpus(cfg):
        assert spatial_logical_mismatch(doc).count == 0


def test_determinism_and_fixed_element_count():
    cfg = GeneratorConfig(
        n_docs=5, elements_min=30, elements_max=30, ambiguity=0.5, seed=3
    )
    a = generate_corpus(cfg)
    b = generate_corpus(cfg)
    assert a == b
    assert corpus_hash(a) == corpus_hash(b)
    for doc in a:
        assert len(doc) == 30


def test_documents_are_valid():
    cfg = GeneratorConfig(n_docs=20, ambiguity=0.8, seed=11)
    for doc in generate_corpus(cfg):
        assert sorted(doc.gt_order) == list(range(len(doc)))
        for el in doc.elements:
            assert 0 <= el.bbox.x0 <= el.bbox.x1 <= doc.page_width
            assert 0 <= el.bbox.y0 <= el.bbox.y1 <= doc.page_height


def test_n_docs_zero():
    assert generate_corpus(GeneratorConfig(n_docs=0)) == []


def test_mismatch_count_monotone_in_ambiguity():
    low = GeneratorConfig(n_docs=120, ambiguity=0.15, seed=42)
    high = GeneratorConfig(n_docs=120, ambiguity=0.6, seed=42)
    count = lambda cfg: sum(
        spatial_logical_mismatch(d).count for d in generate_corpus(cfg)
    )
    assert count(low) < count(high)


def test_mismatch_positions_concentrate_in_middle():
    cfg = GeneratorConfig(n_docs=150, ambiguity=0.6, seed=42)
    positions = []
    for doc in generate_corpus(cfg):
        positions.extend(spatial_logical_mismatch(doc).positions)
    positions = np.array(positions)
    assert len(positions) > 0
    inside = ((positions >= 0.2) & (positions <= 0.8)).mean()
    assert inside > 0.9


def test_roundtrip(tmp_path):
    cfg = GeneratorConfig(n_docs=8, ambiguity=0.4, seed=1)
    docs = generate_corpus(cfg)
    path = tmp_path / "corpus.jsonl"
    save_corpus(docs, str(path))
    assert load_corpus(str(path)) == docs


def test_empty_file(tmp_path):
    path = tmp_path / "empty.jsonl"
    path.write_text("")
    assert load_corpus(str(path)) == []


def test_duplicate_order_index_rejected(tmp_path):
    line = (
        '{"doc_id":"d","page_width":100,"page_height":100,'
        '"elements":[{"bbox":[0,0,10,10],"category":"text","order_index":0},'
        '{"bbox":[0,20,10,30],"category":"text","order_index":0}]}'
    )
    path = tmp_path / "bad.jsonl"
    path.write_text(line + "\n")
    with pytest.raises(ValueError, match="line 1"):
        load_corpus(str(path))


def test_malformed_line_reports_number(tmp_path):
    good = (
        '{"doc_id":"d","page_width":100,"page_height":100,'
        '"elements":[{"bbox":[0,0,10,10],"category":"text","order_index":0}]}'
    )
    path = tmp_path / "bad.jsonl"
    path.write_text(good + "\n" + "{not json}\n")
    with pytest.raises(ValueError, match="line 2"):
        load_corpus(str(path))
