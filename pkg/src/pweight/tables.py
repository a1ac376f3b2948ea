"""Tab-separated tables and run manifests.

Every table is UTF-8 with a header line. Reals are written with 17
significant digits, enough to round-trip a double exactly, and ``inf``
is accepted wherever a real is read. Outputs are written to a temporary
file in the destination directory and renamed into place, so a failed
run never leaves a partial file behind.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import sys
import tempfile
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .exceptions import ParseError
from .testing import SummaryStatRecord

__all__ = [
    "format_real",
    "read_table",
    "read_effects",
    "read_summary_stats",
    "read_groups",
    "write_table",
    "file_digest",
    "RunManifest",
]


def format_real(x):
    return format(float(x), ".17g")


def _format_cell(v):
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, float) or hasattr(v, "dtype") and v.dtype.kind == "f":
        return format_real(v)
    return str(v)


def read_table(path, required, optional=()):
    """Read a header-first TSV, returning ``{column: [str, ...]}`` and line numbers.

    Raises
    ------
    ParseError
        On a missing file, a missing required column, or a row with the
        wrong number of fields; the message carries the line number.
    """
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ParseError(f"cannot read file: {exc.strerror}", path) from exc
    lines = text.splitlines()
    if not lines or not lines[0].strip():
        raise ParseError("missing header line", path, 1)
    header = lines[0].split("\t")
    missing = [c for c in required if c not in header]
    if missing:
        raise ParseError(
            f"header lacks column(s) {', '.join(missing)}; found {', '.join(header)}", path, 1
        )
    keep = [c for c in dict.fromkeys((*required, *optional)) if c in header]
    cols = {c: [] for c in keep}
    where = {c: header.index(c) for c in keep}
    line_numbers = []
    for k, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        fields = line.split("\t")
        if len(fields) != len(header):
            raise ParseError(
                f"expected {len(header)} tab-separated fields, found {len(fields)}", path, k
            )
        for c in keep:
            cols[c].append(fields[where[c]].strip())
        line_numbers.append(k)
    return cols, line_numbers


def _real(value, column, path, line):
    try:
        return float(value)
    except ValueError:
        raise ParseError(f"column {column!r}: {value!r} is not a number", path, line) from None


def read_effects(path):
    """``id<TAB>mu`` table; returns ``(ids, mu)``."""
    cols, lines = read_table(path, ("id", "mu"))
    mu = [_real(v, "mu", path, ln) for v, ln in zip(cols["mu"], lines)]
    return cols["id"], mu


def read_summary_stats(path, broadcast_n=None):
    """``id<TAB>p<TAB>n`` table, with an optional ``sign`` column.

    ``broadcast_n`` replaces a missing (or overrides an existing) ``n``
    column with one study-level sample size.
    """
    required = ("id", "p") if broadcast_n is not None else ("id", "p", "n")
    cols, lines = read_table(path, required, optional=("n", "sign"))
    records = []
    for k, ln in enumerate(lines):
        p = _real(cols["p"][k], "p", path, ln)
        n = broadcast_n if broadcast_n is not None else _real(cols["n"][k], "n", path, ln)
        sign = None
        if "sign" in cols:
            raw = cols["sign"][k]
            s = _real(raw, "sign", path, ln) if raw not in ("", "NA") else None
            if s is not None and s not in (1.0, -1.0):
                raise ParseError(f"column 'sign': {raw!r} is not +1 or -1", path, ln)
            sign = None if s is None else int(s)
        try:
            records.append(SummaryStatRecord(cols["id"][k], p, float(n), sign))
        except ValueError as exc:
            raise ParseError(str(exc), path, ln) from exc
    return records


def read_groups(path):
    """``id<TAB>locus`` table as a dict."""
    cols, _ = read_table(path, ("id", "locus"))
    return dict(zip(cols["id"], cols["locus"]))


def write_table(path, header, rows):
    """Write rows atomically; ``path`` of ``None`` or ``-`` means stdout."""
    body = "\t".join(header) + "\n"
    body += "".join("\t".join(_format_cell(v) for v in row) + "\n" for row in rows)
    if path in (None, "-"):
        sys.stdout.write(body)
        sys.stdout.flush()
        return
    _atomic_write(Path(path), body)


def _atomic_write(path, body):
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(body)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def file_digest(path):
    """SHA-256 hex digest of a file's bytes."""
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


@dataclass
class RunManifest:
    """Everything needed to rerun a command and reproduce its output.

    Holds no timestamps or host details, so identical runs produce
    identical manifests.
    """

    subcommand: str
    parameters: dict
    input_digests: dict = field(default_factory=dict)
    version: str = ""

    def to_json(self):
        data = _clean(asdict(self))
        return json.dumps(data, indent=2, sort_keys=True, default=_jsonable) + "\n"

    def write(self, output_path):
        """Write next to ``output_path`` as ``<output>.manifest.json``."""
        out = Path(str(output_path) + ".manifest.json")
        _atomic_write(out, self.to_json())
        return out


def _clean(obj):
    # JSON has no infinities; write them as the strings the parsers accept
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, float) and not math.isfinite(obj):
        return format_real(obj)
    return obj


def _jsonable(obj):
    if isinstance(obj, float):
        return format_real(obj)
    if hasattr(obj, "__dataclass_fields__"):
        return asdict(obj)
    return str(obj)
