"""Trace-to-verdict toolkit for system-call based malware detection
experiments: strace parsing, statistical call pruning, call-graph pattern
features with an n-gram baseline, seeded classifiers, and a synthetic corpus
generator for end-to-end evaluation.
"""

from .exceptions import (
    ConfigError,
    DimensionMismatch,
    EmptyRetainedSet,
    EmptyResultError,
    EmptyTrace,
    MalformedLine,
    OneClassOnly,
    SchemaError,
    ScgkitError,
    TooFewSamples,
)
from .trace import (
    BENIGN,
    MALWARE,
    Dataset,
    SignatureTable,
    Trace,
    TraceEvent,
    default_signature_table,
    parse_strace_line,
    parse_trace_file,
    read_normalized,
    write_normalized,
)
from .pruning import (
    PruneRecord,
    PruneReport,
    SyscallPruner,
    UsageMatrices,
    build_usage_matrices,
    distribution,
    prune,
    sample_count,
)
from .graph import Scg, build_scg, entity_canonical, to_dot
from .features import (
    FeatureVector,
    NgramFeaturizer,
    ScgmFeaturizer,
    Vocabulary,
    build_vocabulary,
    canonical_key,
    featurize_ngram,
    featurize_scgm,
    group_components,
    vectorize,
)
from .ml import (
    ConfusionMatrix,
    CvResult,
    LogisticRegression,
    Metrics,
    RandomForest,
    compute_metrics,
    evaluate,
    kfold_cv,
    load_model,
    save_model,
    split_dataset,
    train_forest,
    train_logistic,
)
from .synth import (
    BehaviorProfile,
    CorpusConfig,
    EventTemplate,
    NoiseConfig,
    default_profiles,
    generate_corpus,
    load_profiles,
)
from .datasets import load_allowlist, load_reference_trace

__version__ = "0.1.0"

__all__ = [
    "BENIGN",
    "MALWARE",
    "BehaviorProfile",
    "ConfigError",
    "ConfusionMatrix",
    "CorpusConfig",
    "CvResult",
    "Dataset",
    "DimensionMismatch",
    "EmptyResultError",
    "EmptyRetainedSet",
    "EmptyTrace",
    "EventTemplate",
    "FeatureVector",
    "LogisticRegression",
    "MalformedLine",
    "Metrics",
    "NgramFeaturizer",
    "NoiseConfig",
    "OneClassOnly",
    "PruneRecord",
    "PruneReport",
    "RandomForest",
    "Scg",
    "ScgkitError",
    "SchemaError",
    "ScgmFeaturizer",
    "SignatureTable",
    "SyscallPruner",
    "TooFewSamples",
    "Trace",
    "TraceEvent",
    "UsageMatrices",
    "Vocabulary",
    "build_scg",
    "build_usage_matrices",
    "build_vocabulary",
    "canonical_key",
    "compute_metrics",
    "default_profiles",
    "default_signature_table",
    "distribution",
    "entity_canonical",
    "evaluate",
    "featurize_ngram",
    "featurize_scgm",
    "generate_corpus",
    "group_components",
    "kfold_cv",
    "load_allowlist",
    "load_model",
    "load_profiles",
    "load_reference_trace",
    "parse_strace_line",
    "parse_trace_file",
    "prune",
    "read_normalized",
    "sample_count",
    "save_model",
    "split_dataset",
    "to_dot",
    "train_forest",
    "train_logistic",
    "vectorize",
    "write_normalized",
]
