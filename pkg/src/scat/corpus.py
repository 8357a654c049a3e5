"""Bag-of-words corpus pipeline.

Turns directory trees of plain-text documents (notably the 20 Newsgroups
one-directory-per-class layout) into sparse document-term matrices with
weights in [0, 1], class labels and deterministic train/test splits.
"""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence

import numpy as np

WEIGHTINGS = ("log_normalized_tf", "binary")

# Maximal runs of Unicode letters; [^\W\d_] is "word char minus digits/underscore".
_TOKEN_RE = re.compile(r"[^\W\d_]+", re.UNICODE)


class CorpusError(Exception):
    """Raised when a corpus cannot be loaded or built."""


def tokenize(text: str) -> list[str]:
    """Lowercase `text` and return its alphabetic runs of length >= 2.

    Numeric and mixed runs never match; single letters are dropped.
    Order is preserved. Empty input yields an empty list.
    """
    return [t for t in _TOKEN_RE.findall(text.lower()) if len(t) >= 2]


@dataclass
class CorpusConfig:
    """Knobs for vocabulary construction, weighting and splitting."""

    max_vocab: int = 2000
    min_doc_freq: int = 3
    stopwords: frozenset[str] | None = None
    weighting: str = "log_normalized_tf"
    split_seed: int = 0
    test_fraction: float = 0.2

    def __post_init__(self) -> None:
        if self.max_vocab < 1:
            raise ValueError(f"max_vocab must be >= 1, got {self.max_vocab}")
        if self.min_doc_freq < 1:
            raise ValueError(f"min_doc_freq must be >= 1, got {self.min_doc_freq}")
        if not 0.0 < self.test_fraction < 1.0:
            raise ValueError(f"test_fraction must be in (0, 1), got {self.test_fraction}")
        if self.weighting not in WEIGHTINGS:
            raise ValueError(f"unknown weighting {self.weighting!r}; expected one of {WEIGHTINGS}")
        if self.stopwords is not None:
            self.stopwords = frozenset(self.stopwords)

    def to_dict(self) -> dict:
        return {
            "max_vocab": self.max_vocab,
            "min_doc_freq": self.min_doc_freq,
            "stopwords": sorted(self.stopwords) if self.stopwords is not None else None,
            "weighting": self.weighting,
            "split_seed": self.split_seed,
            "test_fraction": self.test_fraction,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CorpusConfig":
        stop = d.get("stopwords")
        return cls(
            max_vocab=d["max_vocab"],
            min_doc_freq=d["min_doc_freq"],
            stopwords=frozenset(stop) if stop is not None else None,
            weighting=d["weighting"],
            split_seed=d["split_seed"],
            test_fraction=d["test_fraction"],
        )


@dataclass
class Vocabulary:
    """Ordered token -> index map with per-token document frequencies.

    Tokens are sorted by descending document frequency, ties broken
    lexicographically, so indices are reproducible across runs.
    """

    tokens: list[str]
    doc_freq: np.ndarray  # int64, aligned with tokens
    index_of: dict[str, int] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        self.doc_freq = np.asarray(self.doc_freq, dtype=np.int64)
        if len(self.tokens) != self.doc_freq.shape[0]:
            raise ValueError("tokens and doc_freq lengths differ")
        self.index_of = {t: i for i, t in enumerate(self.tokens)}
        if len(self.index_of) != len(self.tokens):
            raise ValueError("duplicate tokens in vocabulary")

    def __len__(self) -> int:
        return len(self.tokens)

    @property
    def size(self) -> int:
        return len(self.tokens)


def build_vocab(docs: Sequence[list[str]], cfg: CorpusConfig) -> Vocabulary:
    """Build a Vocabulary from tokenized documents.

    Keeps tokens with document frequency >= cfg.min_doc_freq that are not
    stopwords, then truncates to the cfg.max_vocab highest-frequency tokens
    (ties lexicographic). Raises CorpusError when everything is filtered out.
    """
    if not docs:
        raise CorpusError("cannot build a vocabulary from an empty document list")
    df: Counter[str] = Counter()
    for doc in docs:
        df.update(set(doc))
    stop = cfg.stopwords or frozenset()
    kept = [(tok, n) for tok, n in df.items() if n >= cfg.min_doc_freq and tok not in stop]
    if not kept:
        raise CorpusError(
            "empty vocabulary: every token was filtered by min_doc_freq/stopwords"
        )
    kept.sort(key=lambda item: (-item[1], item[0]))
    kept = kept[: cfg.max_vocab]
    return Vocabulary([tok for tok, _ in kept], np.array([n for _, n in kept]))


def vectorize(
    doc: Iterable[str], vocab: Vocabulary, weighting: str = "log_normalized_tf"
) -> tuple[np.ndarray, np.ndarray]:
    """Turn one tokenized document into a sparse row over `vocab`.

    Returns (indices, weights) with indices strictly increasing (uint32) and
    weights in [0, 1] (float32). Out-of-vocabulary tokens are ignored; a doc
    with no in-vocab tokens yields empty arrays.

    log_normalized_tf: weight_i = log(1 + tf_i) / log(1 + max_tf), where
    max_tf is the highest in-vocab term count of this document, so the most
    frequent in-vocab token always gets weight exactly 1.0.
    binary: weight_i = 1.0 for every present token.
    """
    if weighting not in WEIGHTINGS:
        raise ValueError(f"unknown weighting {weighting!r}")
    if len(vocab) == 0:
        raise ValueError("vocabulary is empty")
    counts: Counter[int] = Counter()
    index_of = vocab.index_of
    for tok in doc:
        idx = index_of.get(tok)
        if idx is not None:
            counts[idx] += 1
    if not counts:
        return np.empty(0, dtype=np.uint32), np.empty(0, dtype=np.float32)
    indices = np.fromiter(sorted(counts), dtype=np.uint32, count=len(counts))
    if weighting == "binary":
        weights = np.ones(len(indices), dtype=np.float32)
    else:
        tf = np.array([counts[int(i)] for i in indices], dtype=np.float64)
        weights = (np.log1p(tf) / np.log1p(tf.max())).astype(np.float32)
    return indices, weights


@dataclass
class DocMatrix:
    """Sparse matrix of per-document term weights (CSR-style storage).

    indptr[i]:indptr[i+1] delimits row i inside `indices`/`weights`.
    Weights lie in [0, 1]; indices within a row are strictly increasing.
    `labels` holds one class id per row (-1 when unlabeled).
    """

    n: int
    v: int
    indptr: np.ndarray  # int64, shape (n + 1,)
    indices: np.ndarray  # uint32
    weights: np.ndarray  # float32
    labels: np.ndarray | None = None  # int32, shape (n,)
    doc_ids: list[str] | None = None

    def __post_init__(self) -> None:
        self.indptr = np.asarray(self.indptr, dtype=np.int64)
        self.indices = np.asarray(self.indices, dtype=np.uint32)
        self.weights = np.asarray(self.weights, dtype=np.float32)
        if self.indptr.shape != (self.n + 1,):
            raise ValueError("indptr must have n + 1 entries")
        if self.indices.shape != self.weights.shape:
            raise ValueError("indices and weights lengths differ")
        if self.indices.size and int(self.indices.max()) >= self.v:
            raise ValueError("column index out of range")
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int32)
            if self.labels.shape != (self.n,):
                raise ValueError("labels must have one entry per row")
        if self.doc_ids is None:
            self.doc_ids = [f"doc{i:06d}" for i in range(self.n)]
        elif len(self.doc_ids) != self.n:
            raise ValueError("doc_ids must have one entry per row")

    def row(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        lo, hi = self.indptr[i], self.indptr[i + 1]
        return self.indices[lo:hi], self.weights[lo:hi]

    def dense(self, rows: np.ndarray | None = None, dtype=np.float32) -> np.ndarray:
        """Densify selected rows (all rows when `rows` is None)."""
        if rows is None:
            rows = np.arange(self.n)
        out = np.zeros((len(rows), self.v), dtype=dtype)
        for r, i in enumerate(rows):
            lo, hi = self.indptr[i], self.indptr[i + 1]
            out[r, self.indices[lo:hi]] = self.weights[lo:hi]
        return out


def matrix_from_docs(
    docs: Sequence[list[str]],
    vocab: Vocabulary,
    weighting: str,
    labels: Sequence[int] | None = None,
    doc_ids: Sequence[str] | None = None,
) -> DocMatrix:
    """Vectorize `docs` against `vocab` and assemble a DocMatrix."""
    indptr = np.zeros(len(docs) + 1, dtype=np.int64)
    idx_parts: list[np.ndarray] = []
    w_parts: list[np.ndarray] = []
    for i, doc in enumerate(docs):
        idx, w = vectorize(doc, vocab, weighting)
        idx_parts.append(idx)
        w_parts.append(w)
        indptr[i + 1] = indptr[i] + len(idx)
    indices = np.concatenate(idx_parts) if idx_parts else np.empty(0, dtype=np.uint32)
    weights = np.concatenate(w_parts) if w_parts else np.empty(0, dtype=np.float32)
    return DocMatrix(
        n=len(docs),
        v=len(vocab),
        indptr=indptr,
        indices=indices,
        weights=weights,
        labels=np.asarray(labels, dtype=np.int32) if labels is not None else None,
        doc_ids=list(doc_ids) if doc_ids is not None else None,
    )


def strip_header(text: str) -> str:
    """Drop everything up to and including the first blank line.

    News messages carry routing headers there; keeping them would let a
    classifier cheat. Texts without a blank line are returned unchanged.
    """
    pos = text.find("\n\n")
    return text[pos + 2 :] if pos != -1 else text


def load_stopwords(path: str | Path) -> frozenset[str]:
    """Read a stopword file, one token per line; blank lines ignored."""
    words = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.strip().lower()
        if line:
            words.append(line)
    return frozenset(words)


class LoadedCorpus(NamedTuple):
    train: DocMatrix
    test: DocMatrix
    class_names: list[str]
    vocab: Vocabulary
    skipped_files: int


def _read_class_dirs(root: Path) -> list[Path]:
    dirs = sorted(p for p in root.iterdir() if p.is_dir())
    if not dirs:
        raise CorpusError(f"no class directories under {root}")
    return dirs


def _read_documents(
    class_dirs: list[Path], rel_root: Path
) -> tuple[list[list[str]], list[int], list[str], int]:
    """Read every file under the class dirs in sorted order.

    Returns (token lists, label ids, doc ids, skipped count). Unreadable
    files are skipped and counted. An empty class directory is an error.
    """
    docs: list[list[str]] = []
    labels: list[int] = []
    doc_ids: list[str] = []
    skipped = 0
    for label, cdir in enumerate(class_dirs):
        files = sorted(p for p in cdir.iterdir() if not p.is_dir())
        if not files:
            raise CorpusError(f"class directory {cdir} is empty")
        n_before = len(docs)
        for f in files:
            try:
                # latin-1 decodes any byte sequence; 20NG has non-UTF-8 messages
                text = f.read_text(encoding="latin-1")
            except OSError:
                skipped += 1
                continue
            docs.append(tokenize(strip_header(text)))
            labels.append(label)
            doc_ids.append(str(f.relative_to(rel_root)))
        if len(docs) == n_before:
            raise CorpusError(f"class directory {cdir} has no readable files")
    return docs, labels, doc_ids, skipped


def load_20newsgroups(path: str | Path, cfg: CorpusConfig | None = None) -> LoadedCorpus:
    """Load a 20 Newsgroups style directory tree.

    Two layouts are recognized. The bydate layout (`20news-bydate-train` /
    `20news-bydate-test`, or plain `train` / `test` subdirectories holding
    one directory per class) keeps its predefined split. A flat layout (one
    directory per class directly under `path`) is split per class by
    cfg.split_seed / cfg.test_fraction.

    Labels follow the sorted class-directory names. Message headers (up to
    the first blank line) are stripped. The vocabulary is built from the
    training split only and both splits are vectorized against it.
    """
    cfg = cfg or CorpusConfig()
    root = Path(path)
    if not root.is_dir():
        raise CorpusError(f"corpus directory not found: {root}")

    split_pair = None
    for train_name, test_name in (
        ("20news-bydate-train", "20news-bydate-test"),
        ("train", "test"),
    ):
        if (root / train_name).is_dir() and (root / test_name).is_dir():
            split_pair = (root / train_name, root / test_name)
            break

    if split_pair is not None:
        train_dirs = _read_class_dirs(split_pair[0])
        test_dirs = _read_class_dirs(split_pair[1])
        class_names = [d.name for d in train_dirs]
        if [d.name for d in test_dirs] != class_names:
            raise CorpusError("train/test class directories disagree")
        tr_docs, tr_labels, tr_ids, sk1 = _read_documents(train_dirs, root)
        te_docs, te_labels, te_ids, sk2 = _read_documents(test_dirs, root)
        skipped = sk1 + sk2
    else:
        class_dirs = _read_class_dirs(root)
        class_names = [d.name for d in class_dirs]
        docs, labels, ids, skipped = _read_documents(class_dirs, root)
        rng = np.random.default_rng(cfg.split_seed)
        order = rng.permutation(len(docs))
        n_test = int(len(docs) * cfg.test_fraction + 0.5)
        test_rows = np.sort(order[:n_test])
        train_rows = np.sort(order[n_test:])
        tr_docs = [docs[i] for i in train_rows]
        tr_labels = [labels[i] for i in train_rows]
        tr_ids = [ids[i] for i in train_rows]
        te_docs = [docs[i] for i in test_rows]
        te_labels = [labels[i] for i in test_rows]
        te_ids = [ids[i] for i in test_rows]

    vocab = build_vocab(tr_docs, cfg)
    train = matrix_from_docs(tr_docs, vocab, cfg.weighting, tr_labels, tr_ids)
    test = matrix_from_docs(te_docs, vocab, cfg.weighting, te_labels, te_ids)
    return LoadedCorpus(train, test, class_names, vocab, skipped)
