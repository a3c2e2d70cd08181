import filecmp
import json

import numpy as np
import pytest

from attnrec import synth
from attnrec.corpus import tokenize
from attnrec.errors import ConfigError

SMALL = dict(n_users=30, n_articles=48, n_clusters=4, min_library=4,
             max_library=8, doc_length=30, seed=11)


def test_generation_is_deterministic(tmp_path):
    a = synth.generate(synth.SynthConfig(**SMALL))
    b = synth.generate(synth.SynthConfig(**SMALL))
    assert a.libraries == b.libraries
    assert a.docs == b.docs
    assert a.tags == b.tags
    assert np.array_equal(a.article_cluster, b.article_cluster)
    dir_a, dir_b = tmp_path / "a", tmp_path / "b"
    synth.write_dataset(a, dir_a)
    synth.write_dataset(b, dir_b)
    for name in ("users.dat", "docs.txt", "tags.dat", "citations.dat", "truth.json"):
        assert filecmp.cmp(dir_a / name, dir_b / name, shallow=False)


def test_libraries_follow_planted_clusters():
    data = synth.generate(synth.SynthConfig(**SMALL))
    for lib, prefs in zip(data.libraries, data.user_clusters):
        assert SMALL["min_library"] <= len(lib) <= SMALL["max_library"]
        assert {int(data.article_cluster[j]) for j in lib} <= set(prefs)


def test_tags_and_citations_stay_within_cluster():
    cfg = synth.SynthConfig(**SMALL)
    data = synth.generate(cfg)
    for j, row in enumerate(data.tags):
        k = int(data.article_cluster[j])
        lo, hi = k * cfg.tags_per_cluster, (k + 1) * cfg.tags_per_cluster
        assert row and all(lo <= t < hi for t in row)
    for citing, cited in data.citations:
        assert data.article_cluster[citing] == data.article_cluster[cited]
        assert citing != cited


def test_documents_survive_tokenization():
    cfg = synth.SynthConfig(**SMALL)
    data = synth.generate(cfg)
    for doc in data.docs:
        tokens = tokenize(doc)
        assert len(tokens) == cfg.doc_length


def test_truth_file_contents(tmp_path):
    data = synth.generate(synth.SynthConfig(**SMALL))
    synth.write_dataset(data, tmp_path)
    truth = json.loads((tmp_path / "truth.json").read_text())
    assert len(truth["article_cluster"]) == SMALL["n_articles"]
    assert truth["config"]["seed"] == SMALL["seed"]


def test_config_validation():
    with pytest.raises(ConfigError):
        synth.SynthConfig(n_articles=10, n_clusters=20).validate()
    with pytest.raises(ConfigError):
        # default max library exceeds the per-cluster article count
        synth.SynthConfig(n_articles=48, n_clusters=4, min_library=4,
                          max_library=30).validate()
    with pytest.raises(ConfigError):
        synth.SynthConfig(min_library=1).validate()
