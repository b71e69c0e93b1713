"""Normalized system-call trace model and strace text parser.

The normalized representation keeps, for every successful call: its name, the
file-path arguments, the consumed file descriptors, and the return value.
Which argument positions carry fds or paths is driven by a call-signature
table (a bundled, human-editable text file) rather than guessed from the
argument syntax, so quoted read/write buffers never turn into paths.

Failed calls (``= -1`` with an errno suffix), signal and exit markers, and
``unfinished``/``resumed`` fragments are skipped at parse time.  Multi-process
captures are treated as a single event stream: pid prefixes are ignored.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from importlib import resources
from typing import IO, Iterable, Iterator

from .exceptions import EmptyTrace, MalformedLine, SchemaError

MALWARE = 1
BENIGN = 0

_NAME_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")
_PID_PREFIX_RE = re.compile(r"^(?:\[pid\s+\d+\]\s+|\d+\s+)")
_EXIT_RE = re.compile(r"^\+\+\+ (?:exited with|killed by) .*\+\+\+$")
_SIGNAL_RE = re.compile(r"^--- .* ---$")
_INT_TOKEN_RE = re.compile(r"^(-?\d+)(?:<|$)")

_ESCAPES = {
    "n": "\n", "t": "\t", "r": "\r", "a": "\a", "b": "\b",
    "f": "\f", "v": "\v", '"': '"', "\\": "\\",
}


# ---------------------------------------------------------------------------
# call-signature table


@dataclass(frozen=True)
class CallSignature:
    """Argument layout of one system call."""

    name: str
    ret_is_fd: bool = False
    fd_positions: tuple[int, ...] = ()
    path_positions: tuple[int, ...] = ()


_EMPTY_SIGNATURE = CallSignature(name="")


class SignatureTable:
    """Lookup of per-call argument signatures.

    Unknown calls resolve to an empty signature: no fd arguments, no path
    arguments, non-fd return value.
    """

    def __init__(self, signatures: Iterable[CallSignature]):
        self._by_name = {sig.name: sig for sig in signatures}

    def get(self, name: str) -> CallSignature:
        return self._by_name.get(name, _EMPTY_SIGNATURE)

    def __contains__(self, name: str) -> bool:
        return name in self._by_name

    def __len__(self) -> int:
        return len(self._by_name)

    @classmethod
    def parse(cls, text: str) -> "SignatureTable":
        """Parse the table format: ``name ret_is_fd fd_positions path_positions``.

        Positions are 0-based and comma-separated; ``-`` means none.  Blank
        lines and ``#`` comments are ignored.
        """
        sigs = []
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 4:
                raise ValueError(f"signature table line {lineno}: expected 4 fields, got {len(parts)}")
            name, ret_flag, fd_spec, path_spec = parts
            sigs.append(CallSignature(
                name=name,
                ret_is_fd=ret_flag == "1",
                fd_positions=_parse_positions(fd_spec, lineno),
                path_positions=_parse_positions(path_spec, lineno),
            ))
        return cls(sigs)

    @classmethod
    def load(cls, path) -> "SignatureTable":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.parse(fh.read())


def _parse_positions(spec: str, lineno: int) -> tuple[int, ...]:
    if spec == "-":
        return ()
    try:
        return tuple(int(p) for p in spec.split(","))
    except ValueError as exc:
        raise ValueError(f"signature table line {lineno}: bad position spec {spec!r}") from exc


_default_table: SignatureTable | None = None


def default_signature_table() -> SignatureTable:
    """The bundled signature table covering the security-critical call set."""
    global _default_table
    if _default_table is None:
        text = resources.files("scgkit.data").joinpath("call_signatures.txt").read_text("utf-8")
        _default_table = SignatureTable.parse(text)
    return _default_table


# ---------------------------------------------------------------------------
# domain types


@dataclass(frozen=True)
class TraceEvent:
    """One successful system-call invocation."""

    index: int
    name: str
    path_args: tuple[str, ...] = ()
    fd_args: tuple[int, ...] = ()
    ret: int = 0
    ret_is_fd: bool = False

    def __post_init__(self):
        object.__setattr__(self, "path_args", tuple(self.path_args))
        object.__setattr__(self, "fd_args", tuple(self.fd_args))
        if self.index < 0:
            raise ValueError(f"event index must be >= 0, got {self.index}")
        if not self.name or any(c.isspace() for c in self.name):
            raise ValueError(f"bad system call name {self.name!r}")
        if self.ret_is_fd and self.ret < 0:
            raise ValueError(f"{self.name}: fd-returning call with negative return {self.ret}")


def reindexed(events: Iterable["TraceEvent"]) -> tuple["TraceEvent", ...]:
    """Copy events with indices renumbered 0..k-1 in the given order."""
    return tuple(
        TraceEvent(index=pos, name=ev.name, path_args=ev.path_args,
                   fd_args=ev.fd_args, ret=ev.ret, ret_is_fd=ev.ret_is_fd)
        for pos, ev in enumerate(events)
    )


@dataclass(frozen=True)
class Trace:
    """Ordered event sequence of one traced sample."""

    sample_id: str
    label: int
    events: tuple[TraceEvent, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "events", tuple(self.events))
        if self.label not in (MALWARE, BENIGN):
            raise ValueError(f"label must be 0 or 1, got {self.label!r}")
        for pos, ev in enumerate(self.events):
            if ev.index != pos:
                raise ValueError(
                    f"{self.sample_id}: event at position {pos} has index {ev.index}")

    def call_names(self) -> tuple[str, ...]:
        return tuple(ev.name for ev in self.events)

    def __len__(self) -> int:
        return len(self.events)


@dataclass(frozen=True)
class Dataset:
    """A labeled collection of traces."""

    samples: tuple[Trace, ...]
    n_malware: int
    n_benign: int

    def __post_init__(self):
        object.__setattr__(self, "samples", tuple(self.samples))
        m = sum(1 for t in self.samples if t.label == MALWARE)
        n = sum(1 for t in self.samples if t.label == BENIGN)
        if (m, n) != (self.n_malware, self.n_benign):
            raise ValueError(
                f"class counts {self.n_malware}/{self.n_benign} do not match labels {m}/{n}")

    @classmethod
    def from_traces(cls, traces: Iterable[Trace]) -> "Dataset":
        traces = tuple(traces)
        m = sum(1 for t in traces if t.label == MALWARE)
        return cls(samples=traces, n_malware=m, n_benign=len(traces) - m)

    def __len__(self) -> int:
        return len(self.samples)

    def __iter__(self) -> Iterator[Trace]:
        return iter(self.samples)


# ---------------------------------------------------------------------------
# strace text parsing


def _split_args(argstr: str) -> list[str]:
    """Split an strace argument string at top-level commas.

    Respects (), [], {} nesting and double-quoted strings with backslash
    escapes, so struct and buffer arguments stay in one token.
    """
    parts: list[str] = []
    depth = 0
    token_start = 0
    i = 0
    n = len(argstr)
    while i < n:
        c = argstr[i]
        if c == '"':
            i += 1
            while i < n:
                if argstr[i] == "\\":
                    i += 2
                    continue
                if argstr[i] == '"':
                    break
                i += 1
        elif c in "([{":
            depth += 1
        elif c in ")]}":
            depth -= 1
        elif c == "," and depth == 0:
            parts.append(argstr[token_start:i].strip())
            token_start = i + 1
        i += 1
    tail = argstr[token_start:].strip()
    if tail or parts:
        parts.append(tail)
    return parts


def _unescape(body: str) -> str:
    out: list[str] = []
    i = 0
    n = len(body)
    while i < n:
        c = body[i]
        if c != "\\":
            out.append(c)
            i += 1
            continue
        i += 1
        if i >= n:
            out.append("\\")
            break
        e = body[i]
        if e in _ESCAPES:
            out.append(_ESCAPES[e])
            i += 1
        elif e == "x":
            hexdigits = body[i + 1:i + 3]
            if len(hexdigits) == 2 and all(h in "0123456789abcdefABCDEF" for h in hexdigits):
                out.append(chr(int(hexdigits, 16)))
                i += 3
            else:
                out.append("x")
                i += 1
        elif e.isdigit():
            j = i
            while j < n and j < i + 3 and body[j] in "01234567":
                j += 1
            out.append(chr(int(body[i:j], 8)))
            i = j
        else:
            out.append(e)
            i += 1
    return "".join(out)


def _quoted_string(token: str) -> str | None:
    """Extract and unescape a leading double-quoted string literal, if any."""
    if not token.startswith('"'):
        return None
    i = 1
    n = len(token)
    while i < n:
        if token[i] == "\\":
            i += 2
            continue
        if token[i] == '"':
            return _unescape(token[1:i])
        i += 1
    return None


def _int_token(token: str) -> int | None:
    m = _INT_TOKEN_RE.match(token)
    if m is None:
        return None
    return int(m.group(1))


def _find_close_paren(line: str, start: int) -> int:
    """Index of the ``)`` matching the ``(`` at ``start``, or -1."""
    depth = 0
    i = start
    n = len(line)
    while i < n:
        c = line[i]
        if c == '"':
            i += 1
            while i < n:
                if line[i] == "\\":
                    i += 2
                    continue
                if line[i] == '"':
                    break
                i += 1
        elif c == "(":
            depth += 1
        elif c == ")":
            depth -= 1
            if depth == 0:
                return i
        i += 1
    return -1


def parse_strace_line(line: str, table: SignatureTable | None = None,
                      index: int = 0) -> TraceEvent | None:
    """Parse one line of strace default text output.

    Returns a :class:`TraceEvent`, or ``None`` for lines that carry no
    retained call: signal and exit markers, ``unfinished``/``resumed``
    fragments, blank lines, and calls that returned an error.

    Raises :class:`MalformedLine` when the line matches no recognized strace
    output shape.
    """
    if table is None:
        table = default_signature_table()
    line = line.rstrip("\n")
    stripped = _PID_PREFIX_RE.sub("", line.strip())
    if not stripped:
        return None
    if _EXIT_RE.match(stripped) or _SIGNAL_RE.match(stripped):
        return None
    if "<unfinished" in stripped or "resumed>" in stripped:
        return None

    m = _NAME_RE.match(stripped)
    if m is None or m.end() >= len(stripped) or stripped[m.end()] != "(":
        raise MalformedLine(line, "no system call name")
    name = m.group(0)

    open_paren = m.end()
    close_paren = _find_close_paren(stripped, open_paren)
    if close_paren < 0:
        raise MalformedLine(line, "unbalanced parentheses")

    tail = stripped[close_paren + 1:].lstrip()
    if not tail.startswith("="):
        raise MalformedLine(line, "missing return value")
    ret_text = tail[1:].strip()
    if not ret_text:
        raise MalformedLine(line, "missing return value")
    ret_token = ret_text.split(None, 1)[0]
    if ret_token == "?":
        return None
    try:
        ret = int(ret_token)
    except ValueError:
        try:
            ret = int(ret_token, 16)
        except ValueError:
            raise MalformedLine(line, f"unparseable return value {ret_token!r}") from None
    if ret == -1:
        return None

    sig = table.get(name)
    args = _split_args(stripped[open_paren + 1:close_paren])
    paths = []
    for pos in sig.path_positions:
        if pos < len(args):
            value = _quoted_string(args[pos])
            if value is not None:
                paths.append(value)
    fds = []
    for pos in sig.fd_positions:
        if pos < len(args):
            value = _int_token(args[pos])
            if value is not None and value >= 0:
                fds.append(value)

    return TraceEvent(
        index=index,
        name=name,
        path_args=tuple(paths),
        fd_args=tuple(fds),
        ret=ret,
        ret_is_fd=sig.ret_is_fd,
    )


def parse_trace_file(content: str, sample_id: str, label: int,
                     table: SignatureTable | None = None) -> tuple[Trace, int]:
    """Parse a whole strace capture into a trace plus a skipped-line count.

    Skipped lines include non-call markers, error returns, and malformed
    lines; events are re-indexed from 0 in file order.  Raises
    :class:`EmptyTrace` when nothing parses.
    """
    if table is None:
        table = default_signature_table()
    events: list[TraceEvent] = []
    skipped = 0
    for raw in content.splitlines():
        try:
            ev = parse_strace_line(raw, table, index=len(events))
        except MalformedLine:
            skipped += 1
            continue
        if ev is None:
            skipped += 1
            continue
        events.append(ev)
    if not events:
        raise EmptyTrace(f"{sample_id}: no events parsed ({skipped} lines skipped)")
    return Trace(sample_id=sample_id, label=label, events=tuple(events)), skipped


# ---------------------------------------------------------------------------
# normalized JSONL format

_EVENT_FIELDS = ("name", "path_args", "fd_args", "ret", "ret_is_fd")


def write_normalized(dataset: Dataset, stream: IO[str]) -> None:
    """Write a dataset as one JSON object per line (UTF-8, LF endings)."""
    for trace in dataset.samples:
        record = {
            "sample_id": trace.sample_id,
            "label": trace.label,
            "events": [
                {
                    "name": ev.name,
                    "path_args": list(ev.path_args),
                    "fd_args": list(ev.fd_args),
                    "ret": ev.ret,
                    "ret_is_fd": ev.ret_is_fd,
                }
                for ev in trace.events
            ],
        }
        stream.write(json.dumps(record, ensure_ascii=False))
        stream.write("\n")


def _require(obj: dict, key: str, lineno: int):
    if key not in obj:
        raise SchemaError(lineno, key)
    return obj[key]


def read_normalized(stream: IO[str] | Iterable[str]) -> Dataset:
    """Read a normalized JSONL stream back into a dataset.

    Raises :class:`SchemaError` naming the offending line number and field.
    """
    traces: list[Trace] = []
    for lineno, raw in enumerate(stream, start=1):
        line = raw.strip()
        if not line:
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise SchemaError(lineno, "json", str(exc)) from None
        if not isinstance(obj, dict):
            raise SchemaError(lineno, "json", "expected an object")

        sample_id = _require(obj, "sample_id", lineno)
        if not isinstance(sample_id, str):
            raise SchemaError(lineno, "sample_id", "expected a string")
        label = _require(obj, "label", lineno)
        if label not in (MALWARE, BENIGN):
            raise SchemaError(lineno, "label", "expected 0 or 1")
        raw_events = _require(obj, "events", lineno)
        if not isinstance(raw_events, list):
            raise SchemaError(lineno, "events", "expected a list")

        events = []
        for pos, entry in enumerate(raw_events):
            if not isinstance(entry, dict):
                raise SchemaError(lineno, f"events[{pos}]", "expected an object")
            for key in _EVENT_FIELDS:
                if key not in entry:
                    raise SchemaError(lineno, f"events[{pos}].{key}")
            name = entry["name"]
            if not isinstance(name, str) or not name:
                raise SchemaError(lineno, f"events[{pos}].name", "expected a nonempty string")
            try:
                events.append(TraceEvent(
                    index=pos,
                    name=name,
                    path_args=tuple(str(p) for p in entry["path_args"]),
                    fd_args=tuple(int(f) for f in entry["fd_args"]),
                    ret=int(entry["ret"]),
                    ret_is_fd=bool(entry["ret_is_fd"]),
                ))
            except (TypeError, ValueError) as exc:
                raise SchemaError(lineno, f"events[{pos}]", str(exc)) from None
        traces.append(Trace(sample_id=sample_id, label=label, events=tuple(events)))
    return Dataset.from_traces(traces)
