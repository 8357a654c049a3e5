"""Second-chance k-competitive autoencoder for bag-of-words text.

A tied-weight autoencoder whose hidden layer runs a winner/loser
competition: the strongest and the weakest positive activations win and
absorb the energy of the rest. Ships with k-sparse and KATE-style
competitive layers as baselines, a corpus pipeline, a hand-derived
(finite-difference-verified) training loop, and topic/classification
evaluation.
"""

from .corpus import (
    CorpusConfig,
    CorpusError,
    DocMatrix,
    LoadedCorpus,
    Vocabulary,
    build_vocab,
    load_20newsgroups,
    load_stopwords,
    matrix_from_docs,
    strip_header,
    tokenize,
    vectorize,
)
from .evaluate import (
    ClassifierConfig,
    EvalReport,
    SoftmaxClassifier,
    encode_matrix,
    evaluate,
    export_embeddings,
    extract_topics,
    report_from_predictions,
    train_classifier,
)
from .io import (
    CorpusArchive,
    FormatError,
    load_corpus,
    load_model,
    save_corpus,
    save_model,
)
from .model import (
    CompetitionOutcome,
    ForwardTrace,
    Gradients,
    ModelParams,
    backward,
    compete,
    compete_backward,
    compete_batch,
    cross_entropy,
    decode,
    encode_preact,
    forward,
    init_params,
    kate_layer,
    ksparse_layer,
    scat_layer,
)
from .train import (
    NumericError,
    OptimizerState,
    TrainConfig,
    TrainReport,
    default_k,
    fit,
    grad_check,
    optimizer_step,
)

__version__ = "0.1.0"
