"""Statistical pruning of uninformative system calls.

Two boolean presence matrices record, per class, which samples request which
calls.  A call is dropped when its class distribution score is too close to
zero (requested about equally by both classes, after correcting for class
imbalance) or when it appears in too few samples.  A static allowlist mode
bypasses the thresholds and keeps exactly the listed calls.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import IO, Iterable

import numpy as np
from sklearn.base import BaseEstimator

from .exceptions import EmptyRetainedSet, OneClassOnly
from .trace import MALWARE, Dataset, Trace, reindexed

REASON_KEPT = "kept"
REASON_RULE1 = "rule1"      # distribution too close to zero
REASON_RULE2 = "rule2"      # present in too few samples
REASON_ALLOWLIST = "allowlist"  # static mode: not on the allowlist

DEFAULT_TAU_D = 0.1
DEFAULT_TAU_N = 2


@dataclass(eq=False)
class UsageMatrices:
    """Per-class call presence matrices over a dataset.

    ``malware_presence[i, j]`` is 1 iff malware sample i requests call j;
    ``benign_presence`` likewise for benign samples.  Columns follow
    ``call_names``, which is sorted for a deterministic order.
    """

    call_names: tuple[str, ...]
    malware_presence: np.ndarray
    benign_presence: np.ndarray

    @property
    def n_malware(self) -> int:
        return self.malware_presence.shape[0]

    @property
    def n_benign(self) -> int:
        return self.benign_presence.shape[0]

    @property
    def n_calls(self) -> int:
        return len(self.call_names)

    def column(self, name: str) -> int:
        return self.call_names.index(name)


@dataclass(frozen=True)
class PruneRecord:
    """Pruning outcome for one system call."""

    name: str
    d: float
    n_count: int
    retained: bool
    reason: str


@dataclass(frozen=True)
class PruneReport:
    """Full pruning outcome: one record per observed call, plus the thresholds used."""

    records: tuple[PruneRecord, ...]
    tau_d: float
    tau_n: int
    allowlist_mode: bool = False

    def retained_calls(self) -> frozenset[str]:
        return frozenset(r.name for r in self.records if r.retained)

    def __iter__(self):
        return iter(self.records)


def build_usage_matrices(dataset: Dataset) -> UsageMatrices:
    """Build the presence matrices for a dataset with both classes present.

    Entries record presence (0/1), not per-sample frequency.  Raises
    :class:`OneClassOnly` when either class is empty, since the distribution
    score needs both.
    """
    if dataset.n_malware == 0 or dataset.n_benign == 0:
        raise OneClassOnly(
            f"need both classes, got {dataset.n_malware} malware / {dataset.n_benign} benign")

    names = sorted({ev.name for trace in dataset for ev in trace.events})
    col = {name: j for j, name in enumerate(names)}

    malware = np.zeros((dataset.n_malware, len(names)), dtype=bool)
    benign = np.zeros((dataset.n_benign, len(names)), dtype=bool)
    mi = bi = 0
    for trace in dataset:
        row = malware[mi] if trace.label == MALWARE else benign[bi]
        for ev in trace.events:
            row[col[ev.name]] = True
        if trace.label == MALWARE:
            mi += 1
        else:
            bi += 1
    return UsageMatrices(call_names=tuple(names), malware_presence=malware,
                         benign_presence=benign)


def distribution(um: UsageMatrices, j: int) -> float:
    """Class-distribution score of call j, in [-1, 1].

    1 means only malware samples request it, -1 only benign ones.  The benign
    column sum is weighted by the malware/benign sample ratio so unequal class
    sizes do not bias the score.
    """
    m_sum = int(um.malware_presence[:, j].sum())
    b_sum = int(um.benign_presence[:, j].sum())
    balance = um.n_malware / um.n_benign
    weighted = b_sum * balance
    return (m_sum - weighted) / (m_sum + weighted)


def sample_count(um: UsageMatrices, j: int) -> int:
    """Number of samples (either class) requesting call j."""
    return int(um.malware_presence[:, j].sum()) + int(um.benign_presence[:, j].sum())


def prune(dataset: Dataset, tau_d: float = DEFAULT_TAU_D, tau_n: int = DEFAULT_TAU_N,
          allowlist: Iterable[str] | None = None) -> PruneReport:
    """Select the retained call set for a dataset.

    Threshold mode keeps calls with ``|d| > tau_d`` and ``n_count >= tau_n``.
    When ``allowlist`` is given the retained set is instead exactly the
    allowlist intersected with the observed calls; scores are still reported.
    Raises :class:`EmptyRetainedSet` when nothing survives.
    """
    if not 0 <= tau_d < 1:
        raise ValueError(f"tau_d must be in [0, 1), got {tau_d}")
    if tau_n < 0:
        raise ValueError(f"tau_n must be >= 0, got {tau_n}")
    um = build_usage_matrices(dataset)
    allowed = frozenset(allowlist) if allowlist is not None else None

    records = []
    for j, name in enumerate(um.call_names):
        d = distribution(um, j)
        n_count = sample_count(um, j)
        if allowed is not None:
            retained = name in allowed
            reason = REASON_KEPT if retained else REASON_ALLOWLIST
        elif abs(d) <= tau_d:
            retained, reason = False, REASON_RULE1
        elif n_count < tau_n:
            retained, reason = False, REASON_RULE2
        else:
            retained, reason = True, REASON_KEPT
        records.append(PruneRecord(name=name, d=d, n_count=n_count,
                                   retained=retained, reason=reason))

    report = PruneReport(records=tuple(records), tau_d=tau_d, tau_n=tau_n,
                         allowlist_mode=allowed is not None)
    if not report.retained_calls():
        raise EmptyRetainedSet(
            f"no call survived pruning (tau_d={tau_d}, tau_n={tau_n}); lower the thresholds")
    return report


# ---------------------------------------------------------------------------
# report serialization

_CSV_HEADER = ["name", "d", "n_count", "retained", "reason"]


def write_report_csv(report: PruneReport, stream: IO[str]) -> None:
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(_CSV_HEADER)
    for rec in report.records:
        writer.writerow([rec.name, repr(rec.d), rec.n_count,
                         int(rec.retained), rec.reason])


def write_retained(report: PruneReport, stream: IO[str]) -> None:
    """Write the retained call set, one name per line, sorted."""
    for name in sorted(report.retained_calls()):
        stream.write(name + "\n")


def read_retained(stream: IO[str] | Iterable[str]) -> frozenset[str]:
    names = set()
    for raw in stream:
        line = raw.split("#", 1)[0].strip()
        if line:
            names.add(line)
    return frozenset(names)


# ---------------------------------------------------------------------------
# estimator wrapper


class SyscallPruner(BaseEstimator):
    """Estimator-style wrapper around :func:`prune`.

    ``fit`` computes the retained call set from a sequence of labeled traces;
    ``transform`` filters each trace down to retained events (re-indexed).
    """

    def __init__(self, tau_d: float = DEFAULT_TAU_D, tau_n: int = DEFAULT_TAU_N,
                 allowlist: Iterable[str] | None = None):
        self.tau_d = tau_d
        self.tau_n = tau_n
        self.allowlist = allowlist

    def fit(self, X: Iterable[Trace], y=None) -> "SyscallPruner":
        dataset = X if isinstance(X, Dataset) else Dataset.from_traces(X)
        self.report_ = prune(dataset, tau_d=self.tau_d, tau_n=self.tau_n,
                             allowlist=self.allowlist)
        self.retained_ = self.report_.retained_calls()
        return self

    def transform(self, X: Iterable[Trace]) -> list[Trace]:
        if not hasattr(self, "retained_"):
            raise RuntimeError("SyscallPruner is not fitted; call fit first")
        out = []
        for trace in X:
            kept = [ev for ev in trace.events if ev.name in self.retained_]
            out.append(Trace(sample_id=trace.sample_id, label=trace.label,
                             events=reindexed(kept)))
        return out

    def fit_transform(self, X: Iterable[Trace], y=None) -> list[Trace]:
        return self.fit(X, y).transform(X)
