"""Pattern features from call graphs, plus the n-gram baseline.

Call invocations that are weakly connected in the graph (ignoring edge
direction, with path entities acting purely as connectors) form one
component.  A component's feature key is the sorted multiset of its call
names, so any permutation of the same call mix matches the same key across
samples.  The n-gram baseline instead slides an ordered window over the
retained call sequence, keeping order significant.
"""

from __future__ import annotations

import csv
from collections import Counter
from dataclasses import dataclass
from typing import IO, Iterable, Mapping, Sequence

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.exceptions import NotFittedError

from .graph import Scg, build_scg
from .trace import Trace, TraceEvent

KEY_SEPARATOR = "|"

KIND_SCGM = "scgm"
KIND_NGRAM = "ngram"

FeatureMap = Counter  # pattern key -> frequency within one sample


class UnionFind:
    """Disjoint sets over integer ids, with path compression."""

    def __init__(self, size: int):
        self.parent = list(range(size))

    def find(self, i: int) -> int:
        root = i
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[i] != root:
            self.parent[i], i = root, self.parent[i]
        return root

    def union(self, a: int, b: int) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[rb] = ra


def group_components(scg: Scg) -> list[list[TraceEvent]]:
    """Group call nodes into weakly-connected components of the graph.

    Entities act only as connectors and appear in no component.  Components
    are returned ordered by their earliest event, members in event order, so
    repeated grouping of the same graph is identical.
    """
    calls = scg.call_nodes
    call_id = {ev: i for i, ev in enumerate(calls)}
    entity_id = {name: len(calls) + i for i, name in enumerate(sorted(scg.entity_nodes))}
    uf = UnionFind(len(calls) + len(entity_id))

    for src, dst in scg.edges:
        src_id = entity_id[src] if isinstance(src, str) else call_id[src]
        uf.union(src_id, call_id[dst])

    groups: dict[int, list[TraceEvent]] = {}
    for ev in calls:
        groups.setdefault(uf.find(call_id[ev]), []).append(ev)
    components = [sorted(members, key=lambda ev: ev.index) for members in groups.values()]
    components.sort(key=lambda members: members[0].index)
    return components


def canonical_key(component: Iterable[TraceEvent | str]) -> str:
    """Order-independent key of a component: sorted call names joined by '|'.

    Duplicates are kept, so ``{open, open, read}`` and ``{open, read, open}``
    map to the same key while staying distinct from ``{open, read}``.
    """
    names = sorted(m if isinstance(m, str) else m.name for m in component)
    if not names:
        raise ValueError("cannot key an empty component")
    return KEY_SEPARATOR.join(names)


def ngram_key(window: Sequence[str]) -> str:
    """Order-preserving key of one n-gram window."""
    return KEY_SEPARATOR.join(window)


def featurize_scgm(trace: Trace, retained: Iterable[str]) -> FeatureMap:
    """Count graph-component patterns in one trace.

    Builds the call graph over retained events, groups it into components,
    and counts how many components share each canonical key.  A trace whose
    events are all pruned yields an empty map (the sample vectorizes to all
    zeros); that is reported by callers, not fatal.
    """
    scg = build_scg(trace, retained)
    return Counter(canonical_key(component) for component in group_components(scg))


def featurize_ngram(trace: Trace, retained: Iterable[str], n: int = 4) -> FeatureMap:
    """Count ordered n-gram windows over the retained call-name sequence.

    A sequence of length L yields max(0, L - n + 1) windows, counted with
    multiplicity; shorter sequences yield an empty map.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    retained = frozenset(retained)
    names = [ev.name for ev in trace.events if ev.name in retained]
    return Counter(ngram_key(names[i:i + n]) for i in range(len(names) - n + 1))


# ---------------------------------------------------------------------------
# vocabulary and vectors


@dataclass(frozen=True)
class Vocabulary:
    """Deterministically ordered union of pattern keys, tagged by feature kind."""

    keys: tuple[str, ...]
    kind: str

    def __post_init__(self):
        if self.kind not in (KIND_SCGM, KIND_NGRAM):
            raise ValueError(f"unknown feature kind {self.kind!r}")
        if len(set(self.keys)) != len(self.keys):
            raise ValueError("vocabulary keys must be distinct")

    def __len__(self) -> int:
        return len(self.keys)

    def index(self) -> dict[str, int]:
        return {key: i for i, key in enumerate(self.keys)}


@dataclass(frozen=True)
class FeatureVector:
    """Counts aligned to a vocabulary, with the class label kept last."""

    values: tuple[int, ...]
    label: int


def build_vocabulary(feature_maps: Iterable[Mapping[str, int]], kind: str) -> Vocabulary:
    """Union of keys over per-sample feature maps, lexicographically ordered."""
    keys: set[str] = set()
    for fmap in feature_maps:
        keys.update(fmap)
    return Vocabulary(keys=tuple(sorted(keys)), kind=kind)


def vectorize(feature_map: Mapping[str, int], vocabulary: Vocabulary,
              label: int) -> FeatureVector:
    """Project one feature map onto a vocabulary.

    Keys outside the vocabulary (unseen at training time) contribute nothing;
    missing keys count zero.
    """
    values = tuple(int(feature_map.get(key, 0)) for key in vocabulary.keys)
    return FeatureVector(values=values, label=label)


# ---------------------------------------------------------------------------
# estimator API


class _TraceFeaturizer(BaseEstimator, TransformerMixin):
    """Shared fit/transform machinery for both feature constructions."""

    kind: str = ""

    def _featurize(self, trace: Trace) -> FeatureMap:
        raise NotImplementedError

    def fit(self, X: Iterable[Trace], y=None) -> "_TraceFeaturizer":
        maps = [self._featurize(trace) for trace in X]
        self.vocabulary_ = build_vocabulary(maps, kind=self.kind)
        self.n_features_ = len(self.vocabulary_)
        return self

    def transform(self, X: Iterable[Trace]) -> np.ndarray:
        if not hasattr(self, "vocabulary_"):
            raise NotFittedError(f"{type(self).__name__} is not fitted; call fit first")
        index = self.vocabulary_.index()
        rows = []
        for trace in X:
            row = np.zeros(len(index), dtype=np.int64)
            for key, count in self._featurize(trace).items():
                j = index.get(key)
                if j is not None:
                    row[j] = count
            rows.append(row)
        if not rows:
            return np.zeros((0, len(index)), dtype=np.int64)
        return np.stack(rows)

    def get_feature_names_out(self, input_features=None) -> np.ndarray:
        if not hasattr(self, "vocabulary_"):
            raise NotFittedError(f"{type(self).__name__} is not fitted; call fit first")
        return np.asarray(self.vocabulary_.keys, dtype=object)


class ScgmFeaturizer(_TraceFeaturizer):
    """Graph-component pattern counts as a fit/transform estimator.

    ``retained`` limits featurization to a call set (normally the pruning
    output); ``None`` uses every event as given.
    """

    kind = KIND_SCGM

    def __init__(self, retained: Iterable[str] | None = None):
        self.retained = retained

    def _featurize(self, trace: Trace) -> FeatureMap:
        retained = self.retained
        if retained is None:
            retained = {ev.name for ev in trace.events}
        return featurize_scgm(trace, retained)


class NgramFeaturizer(_TraceFeaturizer):
    """Ordered n-gram window counts as a fit/transform estimator."""

    kind = KIND_NGRAM

    def __init__(self, retained: Iterable[str] | None = None, n: int = 4):
        self.retained = retained
        self.n = n

    def _featurize(self, trace: Trace) -> FeatureMap:
        retained = self.retained
        if retained is None:
            retained = {ev.name for ev in trace.events}
        return featurize_ngram(trace, retained, n=self.n)


# ---------------------------------------------------------------------------
# serialization


def write_vocabulary(vocabulary: Vocabulary, stream: IO[str]) -> None:
    """One key per line, preceded by a kind marker comment."""
    stream.write(f"# kind: {vocabulary.kind}\n")
    for key in vocabulary.keys:
        stream.write(key + "\n")


def read_vocabulary(stream: IO[str] | Iterable[str]) -> Vocabulary:
    kind = KIND_SCGM
    keys = []
    for raw in stream:
        line = raw.rstrip("\n")
        if line.startswith("# kind:"):
            kind = line.split(":", 1)[1].strip()
            continue
        if line:
            keys.append(line)
    return Vocabulary(keys=tuple(keys), kind=kind)


def write_matrix_csv(matrix: np.ndarray, labels: Sequence[int],
                     vocabulary: Vocabulary, stream: IO[str],
                     sample_ids: Sequence[str] | None = None) -> None:
    """Feature matrix as CSV: key columns plus a trailing ``class`` column."""
    if matrix.shape[0] != len(labels):
        raise ValueError(f"{matrix.shape[0]} rows vs {len(labels)} labels")
    writer = csv.writer(stream, lineterminator="\n")
    header = list(vocabulary.keys) + ["class"]
    if sample_ids is not None:
        header = ["sample_id"] + header
    writer.writerow(header)
    for i in range(matrix.shape[0]):
        row = [int(v) for v in matrix[i]] + [int(labels[i])]
        if sample_ids is not None:
            row = [sample_ids[i]] + row
        writer.writerow(row)
