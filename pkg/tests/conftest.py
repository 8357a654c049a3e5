import os
from pathlib import Path

import numpy as np
import pytest

from scat import CorpusConfig, Vocabulary, build_vocab, matrix_from_docs

# Candidate locations of a real 20 Newsgroups tree (bydate layout or flat
# one-directory-per-class). The large-scale reproduction tests skip when
# none exists.
NEWSGROUPS_ENV = "SCAT_20NG_DIR"
NEWSGROUPS_CANDIDATES = (
    Path(__file__).resolve().parent.parent / "data" / "20news",
    Path.home() / "data" / "20news",
)


def newsgroups_dir() -> Path | None:
    override = os.environ.get(NEWSGROUPS_ENV)
    if override:
        p = Path(override)
        return p if p.is_dir() else None
    for p in NEWSGROUPS_CANDIDATES:
        if p.is_dir():
            return p
    return None


requires_20ng = pytest.mark.skipif(
    newsgroups_dir() is None,
    reason=f"20 Newsgroups corpus not found (set ${NEWSGROUPS_ENV} or place it under data/20news)",
)


TOPIC_WORDS = [
    ["alpha", "bravo", "charlie", "delta", "echo",
     "foxtrot", "golf", "hotel", "india", "juliet"],
    ["kilo", "lima", "mike", "november", "oscar",
     "papa", "quebec", "romeo", "sierra", "tango"],
    ["uniform", "victor", "whiskey", "xray", "yankee",
     "zulu", "ampere", "becquerel", "celsius", "dalton"],
]


def synthetic_topic_docs(
    n_per_topic: int = 100,
    topics: int = 2,
    doc_len: int = 30,
    seed: int = 7,
) -> tuple[list[list[str]], list[int]]:
    """Documents drawn from disjoint per-topic vocabularies."""
    rng = np.random.default_rng(seed)
    docs, labels = [], []
    for t in range(topics):
        words = TOPIC_WORDS[t]
        for _ in range(n_per_topic):
            docs.append([words[i] for i in rng.integers(0, len(words), size=doc_len)])
            labels.append(t)
    return docs, labels


@pytest.fixture
def two_topic_corpus():
    docs, labels = synthetic_topic_docs(n_per_topic=100, topics=2)
    cfg = CorpusConfig(max_vocab=50, min_doc_freq=1)
    vocab = build_vocab(docs, cfg)
    ids = [f"doc{i}" for i in range(len(docs))]
    return matrix_from_docs(docs, vocab, cfg.weighting, labels, ids), vocab


def write_class_tree(root: Path, classes: dict[str, list[str]]) -> None:
    """Lay out {class_name: [document texts]} as one directory per class."""
    for cname, texts in classes.items():
        cdir = root / cname
        cdir.mkdir(parents=True)
        for i, text in enumerate(texts):
            (cdir / f"{i:04d}").write_text(text, encoding="latin-1")


def make_vocab(tokens: list[str]) -> Vocabulary:
    return Vocabulary(list(tokens), np.ones(len(tokens), dtype=np.int64))
