"""Access to the data files bundled with the package.

Includes the call-signature table, the default security-critical call
allowlist, the default behavior profiles for corpus generation, and a small
hand-checked reference trace used throughout the test suite: an 18-event
capture whose call-graph grouping and 4-gram windows are known exactly.
"""

from __future__ import annotations

from importlib import resources

from .trace import MALWARE, Trace, default_signature_table, parse_trace_file


def _read_data(filename: str) -> str:
    return resources.files("scgkit.data").joinpath(filename).read_text("utf-8")


def reference_trace_text() -> str:
    """Raw strace text of the bundled reference trace."""
    return _read_data("reference_trace.strace")


def load_reference_trace(label: int = MALWARE) -> Trace:
    """The bundled 18-event reference trace, parsed and labeled."""
    trace, skipped = parse_trace_file(
        reference_trace_text(), sample_id="reference", label=label,
        table=default_signature_table())
    if skipped:
        raise RuntimeError(f"reference trace has {skipped} unparseable lines")
    return trace


def parse_call_list(text: str) -> frozenset[str]:
    """Parse a call-list file: one name per line, ``#`` comments allowed."""
    names = set()
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if line:
            names.add(line)
    return frozenset(names)


def load_allowlist(path=None) -> frozenset[str]:
    """Load a call allowlist file; defaults to the bundled security-critical set."""
    if path is None:
        return parse_call_list(_read_data("security_critical_calls.txt"))
    with open(path, "r", encoding="utf-8") as fh:
        return parse_call_list(fh.read())


def default_profiles_text() -> str:
    """JSON text of the bundled behavior profiles."""
    return _read_data("default_profiles.json")
