"""Seeded synthetic trace corpora with planted behavior profiles.

A profile is a small template of wired system calls (fd symbols are produced
before they are consumed; path placeholders become concrete per-instance
paths) plus per-class inclusion probabilities and a repeat-count range.  Each
generated sample concatenates freshly wired template instances, so every
instance forms its own graph component with a known pattern key.

Noise operates at component granularity: reorder noise permutes whole
instance blocks (fd wiring stays valid, ordered windows change), and junk
noise inserts statistically uninformative calls that pruning is expected to
drop.  Generation is a pure function of (config, seed); per-sample random
streams are derived so content and noise draws never interact.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .exceptions import ConfigError
from .trace import BENIGN, MALWARE, Dataset, Trace, TraceEvent

JUNK_CALLS = ("getegid", "geteuid", "getgid", "getrusage", "gettimeofday",
              "getuid", "sched_yield", "sysinfo", "time")

FIRST_FD = 3


@dataclass(frozen=True)
class EventTemplate:
    """One call inside a component template.

    ``paths`` holds ``{placeholder}`` tokens resolved to fresh concrete paths
    per instance (the same token resolves to the same path within one
    instance); ``fds`` name fd symbols that an earlier ``ret_fd`` in the same
    template must produce.
    """

    name: str
    paths: tuple[str, ...] = ()
    fds: tuple[str, ...] = ()
    ret_fd: str | None = None


@dataclass(frozen=True)
class BehaviorProfile:
    """A named component template with class affinities and a repeat range."""

    name: str
    template: tuple[EventTemplate, ...]
    malware_affinity: float
    benign_affinity: float
    repeat: tuple[int, int] = (1, 1)

    def __post_init__(self):
        if not self.template:
            raise ConfigError(f"profile {self.name!r}: empty template")
        for prob in (self.malware_affinity, self.benign_affinity):
            if not 0.0 <= prob <= 1.0:
                raise ConfigError(f"profile {self.name!r}: affinity {prob} outside [0, 1]")
        lo, hi = self.repeat
        if not 1 <= lo <= hi:
            raise ConfigError(f"profile {self.name!r}: bad repeat range {self.repeat}")
        produced: set[str] = set()
        for ev in self.template:
            for symbol in ev.fds:
                if symbol not in produced:
                    raise ConfigError(
                        f"profile {self.name!r}: fd symbol {symbol!r} consumed before produced")
            if ev.ret_fd is not None:
                produced.add(ev.ret_fd)

    def affinity(self, label: int) -> float:
        return self.malware_affinity if label == MALWARE else self.benign_affinity


@dataclass(frozen=True)
class NoiseConfig:
    reorder_rate: float = 0.0
    junk_rate: float = 0.0

    def __post_init__(self):
        for rate in (self.reorder_rate, self.junk_rate):
            if not 0.0 <= rate <= 1.0:
                raise ConfigError(f"noise rate {rate} outside [0, 1]")


@dataclass(frozen=True)
class CorpusConfig:
    n_malware: int
    n_benign: int
    profiles: tuple[BehaviorProfile, ...]
    noise: NoiseConfig = field(default_factory=NoiseConfig)

    def __post_init__(self):
        if self.n_malware < 0 or self.n_benign < 0:
            raise ConfigError("sample counts must be >= 0")
        if not self.profiles:
            raise ConfigError("no behavior profiles configured")
        for label, word in ((MALWARE, "malware"), (BENIGN, "benign")):
            if not any(p.affinity(label) > 0 for p in self.profiles):
                raise ConfigError(f"no profile can appear in {word} samples")


# ---------------------------------------------------------------------------
# profile files


def parse_profiles(text: str) -> tuple[BehaviorProfile, ...]:
    """Parse the JSON profile format (see the bundled default_profiles.json)."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"profiles file is not valid JSON: {exc}") from None
    entries = doc.get("profiles") if isinstance(doc, dict) else None
    if not isinstance(entries, list) or not entries:
        raise ConfigError('profiles file needs a nonempty "profiles" list')
    profiles = []
    for entry in entries:
        try:
            template = tuple(
                EventTemplate(
                    name=ev["name"],
                    paths=tuple(ev.get("paths", ())),
                    fds=tuple(ev.get("fds", ())),
                    ret_fd=ev.get("ret_fd"),
                )
                for ev in entry["template"]
            )
            profiles.append(BehaviorProfile(
                name=entry["name"],
                template=template,
                malware_affinity=float(entry["malware_affinity"]),
                benign_affinity=float(entry["benign_affinity"]),
                repeat=tuple(entry.get("repeat", (1, 1))),  # type: ignore[arg-type]
            ))
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"bad profile entry {entry!r}: {exc}") from None
    return tuple(profiles)


def default_profiles() -> tuple[BehaviorProfile, ...]:
    from .datasets import default_profiles_text
    return parse_profiles(default_profiles_text())


def load_profiles(path) -> tuple[BehaviorProfile, ...]:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_profiles(fh.read())


# ---------------------------------------------------------------------------
# generation


class _Allocator:
    """Fresh fd numbers and concrete paths within one sample."""

    def __init__(self):
        self.next_fd = FIRST_FD
        self.next_path = 0

    def fd(self) -> int:
        value = self.next_fd
        self.next_fd += 1
        return value

    def path(self, token: str) -> str:
        value = f"/{token}/{token}{self.next_path}"
        self.next_path += 1
        return value


def _instantiate(template: tuple[EventTemplate, ...], alloc: _Allocator) -> list[tuple]:
    """One freshly wired component block as (name, paths, fds, ret, ret_is_fd) rows."""
    fd_bindings: dict[str, int] = {}
    path_bindings: dict[str, str] = {}
    rows = []
    for ev in template:
        paths = []
        for token in ev.paths:
            token = token.strip("{}")
            if token not in path_bindings:
                path_bindings[token] = alloc.path(token)
            paths.append(path_bindings[token])
        fds = [fd_bindings[symbol] for symbol in ev.fds]
        if ev.ret_fd is not None:
            fd_bindings[ev.ret_fd] = alloc.fd()
            ret, ret_is_fd = fd_bindings[ev.ret_fd], True
        else:
            ret, ret_is_fd = 0, False
        rows.append((ev.name, tuple(paths), tuple(fds), ret, ret_is_fd))
    return rows


def _generate_sample(sample_id: str, label: int, config: CorpusConfig,
                     content_rng: np.random.Generator,
                     noise_rng: np.random.Generator) -> Trace:
    alloc = _Allocator()
    blocks: list[list[tuple]] = []
    for profile in config.profiles:
        if content_rng.random() >= profile.affinity(label):
            continue
        lo, hi = profile.repeat
        for _ in range(int(content_rng.integers(lo, hi + 1))):
            blocks.append(_instantiate(profile.template, alloc))
    if not blocks:
        # guarantee a nonempty trace: fall back to the likeliest profile
        profile = max(config.profiles, key=lambda p: (p.affinity(label), p.name))
        blocks.append(_instantiate(profile.template, alloc))

    if config.noise.reorder_rate > 0 and noise_rng.random() < config.noise.reorder_rate:
        order = noise_rng.permutation(len(blocks))
        blocks = [blocks[i] for i in order]

    rows = [row for block in blocks for row in block]
    if config.noise.junk_rate > 0:
        n_junk = int(round(config.noise.junk_rate * len(rows)))
        for _ in range(n_junk):
            position = int(noise_rng.integers(0, len(rows) + 1))
            name = JUNK_CALLS[int(noise_rng.integers(0, len(JUNK_CALLS)))]
            rows.insert(position, (name, (), (), 0, False))

    events = tuple(
        TraceEvent(index=i, name=name, path_args=paths, fd_args=fds,
                   ret=ret, ret_is_fd=ret_is_fd)
        for i, (name, paths, fds, ret, ret_is_fd) in enumerate(rows)
    )
    return Trace(sample_id=sample_id, label=label, events=events)


def generate_corpus(config: CorpusConfig, seed: int = 0) -> Dataset:
    """Generate a labeled corpus, deterministic in (config, seed).

    Every sample derives two independent random streams from the root seed:
    one for content (which profiles appear, how often) and one for noise, so
    corpora that differ only in noise rates share identical planted content.
    """
    total = config.n_malware + config.n_benign
    children = np.random.SeedSequence(seed).spawn(total)
    traces = []
    for i, child in enumerate(children):
        if i < config.n_malware:
            label, sample_id = MALWARE, f"malware-{i:04d}"
        else:
            label, sample_id = BENIGN, f"benign-{i - config.n_malware:04d}"
        content_seq, noise_seq = child.spawn(2)
        traces.append(_generate_sample(
            sample_id, label, config,
            np.random.default_rng(content_seq),
            np.random.default_rng(noise_seq)))
    return Dataset.from_traces(traces)


def profile_pattern_keys(profile: BehaviorProfile) -> frozenset[str]:
    """Pattern keys one instance of this profile contributes to a trace."""
    from .features import featurize_scgm
    rows = _instantiate(profile.template, _Allocator())
    events = tuple(
        TraceEvent(index=i, name=name, path_args=paths, fd_args=fds,
                   ret=ret, ret_is_fd=ret_is_fd)
        for i, (name, paths, fds, ret, ret_is_fd) in enumerate(rows)
    )
    trace = Trace(sample_id=profile.name, label=MALWARE, events=events)
    return frozenset(featurize_scgm(trace, {ev.name for ev in events}))
