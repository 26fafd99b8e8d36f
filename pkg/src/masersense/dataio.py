"""File formats: two-column CSV with ``#`` metadata, fixed-precision JSON,
atomic writes, checksums and the dataset manifest.

CSV layout::

    # value_kind=photon_count
    frequency_MHz,value
    1442,0.5
    ...

Lines starting with ``#`` are comments; ``# key=value`` comments are
metadata. A single non-numeric header row is allowed before the data.
Floats are written with 17 significant digits, so a write/read roundtrip
reproduces every value bit for bit.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import sys
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import DomainError, InputError
from .magnetometry import FieldResponse
from .spectrum import Spectrum, TimeTrace, ValueKind

FLOAT_FORMAT = ".17g"
ROLES = ("spectrum", "trace", "background", "field-response")


def format_float(x: float) -> str:
    return format(float(x), FLOAT_FORMAT)


# -- atomic output ------------------------------------------------------------

def atomic_write(path: str | Path, data: str | bytes) -> None:
    """Write via a temporary file in the same directory, then rename."""
    path = Path(path)
    raw = data.encode("utf-8") if isinstance(data, str) else data
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(raw)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def sha256_file(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


def sha256_bytes(data: str | bytes) -> str:
    return hashlib.sha256(data.encode("utf-8") if isinstance(data, str) else data).hexdigest()


# -- JSON ---------------------------------------------------------------------

def _json_scalar(x) -> str:
    if x is None:
        return "null"
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        # JSON has no representation for non-finite numbers
        return format_float(x) if math.isfinite(x) else "null"
    if isinstance(x, str):
        return json.dumps(x, ensure_ascii=False)
    raise TypeError(f"cannot serialise {type(x).__name__} to JSON")


def dumps_json(obj, indent: int = 2) -> str:
    """Deterministic JSON: key order as given, floats at 17 significant digits."""

    def enc(o, level):
        pad = " " * (indent * (level + 1))
        end = " " * (indent * level)
        if isinstance(o, dict):
            if not o:
                return "{}"
            items = [f"{pad}{_json_scalar(str(k))}: {enc(v, level + 1)}" for k, v in o.items()]
            return "{\n" + ",\n".join(items) + "\n" + end + "}"
        if isinstance(o, (list, tuple, np.ndarray)):
            if len(o) == 0:
                return "[]"
            items = [f"{pad}{enc(v, level + 1)}" for v in o]
            return "[\n" + ",\n".join(items) + "\n" + end + "]"
        return _json_scalar(o)

    return enc(obj, 0) + "\n"


# -- CSV ----------------------------------------------------------------------

@dataclass(frozen=True)
class _Table:
    meta: dict[str, str]
    header: tuple[str, ...] | None
    rows: np.ndarray
    line_numbers: tuple[int, ...]


def _read_table(path: str | Path, n_cols: tuple[int, ...]) -> _Table:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror or exc}") from None
    except UnicodeDecodeError:
        raise InputError(f"{path}: not a UTF-8 text file") from None

    meta: dict[str, str] = {}
    header = None
    rows, lines = [], []
    width = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            body = line[1:].strip()
            if "=" in body:
                key, value = body.split("=", 1)
                meta[key.strip()] = value.strip()
            continue
        fields = [c.strip() for c in line.split(",")]
        try:
            values = [float(c) for c in fields]
        except ValueError:
            if header is None and not rows:
                header = tuple(fields)
                width = len(fields)
                continue
            raise InputError(f"{path}:{lineno}: malformed row {raw!r}; expected numbers") from None
        if width is None:
            width = len(values)
        if len(values) != width:
            raise InputError(f"{path}:{lineno}: expected {width} columns, found {len(values)}")
        if not all(math.isfinite(v) for v in values):
            raise InputError(f"{path}:{lineno}: non-finite value")
        rows.append(values)
        lines.append(lineno)
    if width is not None and width not in n_cols:
        raise InputError(f"{path}: expected {' or '.join(map(str, n_cols))} columns, found {width}")
    if not rows:
        raise InputError(f"{path}: no data rows")
    return _Table(meta, header, np.array(rows, dtype=float), tuple(lines))


def _check_increasing(table: _Table, path, what: str) -> None:
    d = np.diff(table.rows[:, 0])
    bad = np.flatnonzero(d <= 0)
    if len(bad):
        line = table.line_numbers[bad[0] + 1]
        raise InputError(f"{path}:{line}: {what} axis is not strictly increasing")


def _meta_float(meta, key, path):
    if key not in meta:
        return None
    try:
        return float(meta[key])
    except ValueError:
        raise InputError(f"{path}: metadata {key}={meta[key]!r} is not a number") from None


def load_spectrum_csv(path: str | Path, value_kind: ValueKind | str | None = None) -> Spectrum:
    """Two-column spectrum (frequency MHz, value).

    ``value_kind`` comes from the ``# value_kind=`` header, else the
    argument, else ``linear_amplitude``; a header that contradicts an
    explicit argument is an error.
    """
    table = _read_table(path, (2,))
    _check_increasing(table, path, "frequency")
    kind = table.meta.get("value_kind")
    if kind is not None and value_kind is not None and ValueKind(value_kind).value != kind:
        raise InputError(f"{path}: file declares value_kind={kind}, caller expects {ValueKind(value_kind).value}")
    kind = kind or value_kind or ValueKind.LINEAR_AMPLITUDE
    try:
        return Spectrum(table.rows[:, 0], table.rows[:, 1], ValueKind(kind))
    except ValueError as exc:
        raise InputError(f"{path}: {exc}") from None


def load_trace_csv(path: str | Path) -> TimeTrace:
    """Two-column trace (time s, volts) with optional ``B0_T`` / ``freq_MHz`` metadata."""
    table = _read_table(path, (2,))
    _check_increasing(table, path, "time")
    try:
        return TimeTrace(table.rows[:, 0], table.rows[:, 1],
                         B0_T=_meta_float(table.meta, "B0_T", path),
                         freq_MHz=_meta_float(table.meta, "freq_MHz", path))
    except DomainError as exc:
        raise InputError(f"{path}: {exc}") from None


def load_field_response_csv(path: str | Path) -> FieldResponse:
    """Columns: field (T), amplitude (V), optionally amplitude and field errors."""
    table = _read_table(path, (2, 3, 4))
    _check_increasing(table, path, "field")
    r = table.rows
    try:
        return FieldResponse(r[:, 0], r[:, 1],
                             amp_errors=r[:, 2] if r.shape[1] > 2 else None,
                             field_errors=r[:, 3] if r.shape[1] > 3 else None)
    except DomainError as exc:
        raise InputError(f"{path}: {exc}") from None


def table_csv(columns: dict[str, np.ndarray], meta: dict[str, object] | None = None) -> str:
    """CSV text for equal-length columns, headed by ``# key=value`` lines."""
    lines = [f"# {k}={v if isinstance(v, str) else format_float(v)}"
             for k, v in (meta or {}).items() if v is not None]
    lines.append(",".join(columns))
    cols = [np.asarray(c, dtype=float) for c in columns.values()]
    for row in zip(*cols):
        lines.append(",".join(format_float(x) for x in row))
    return "\n".join(lines) + "\n"


def spectrum_csv(spectrum: Spectrum) -> str:
    return table_csv({"frequency_MHz": spectrum.frequencies, "value": spectrum.values},
                     {"value_kind": spectrum.value_kind.value})


def trace_csv(trace: TimeTrace) -> str:
    return table_csv({"time_s": trace.times, "volts": trace.volts},
                     {"B0_T": trace.B0_T, "freq_MHz": trace.freq_MHz})


def write_spectrum_csv(path: str | Path, spectrum: Spectrum) -> None:
    atomic_write(path, spectrum_csv(spectrum))


def write_trace_csv(path: str | Path, trace: TimeTrace) -> None:
    atomic_write(path, trace_csv(trace))


# -- manifest -----------------------------------------------------------------

LOADERS = {
    "spectrum": load_spectrum_csv,
    "background": load_spectrum_csv,
    "trace": load_trace_csv,
    "field-response": load_field_response_csv,
}


@dataclass(frozen=True)
class ManifestEntry:
    path: Path
    role: str
    sha256: str


@dataclass(frozen=True)
class DatasetManifest:
    """Input files by role, each parsed once and checksummed."""

    entries: tuple[ManifestEntry, ...]

    def get(self, role: str) -> ManifestEntry | None:
        return next((e for e in self.entries if e.role == role), None)

    def checksums(self) -> dict[str, str]:
        return {str(e.path): e.sha256 for e in self.entries}

    def load(self, role: str):
        entry = self.get(role)
        return None if entry is None else LOADERS[role](entry.path)


def load_manifest(path: str | Path) -> DatasetManifest:
    """Read a TOML manifest of ``[[file]]`` tables with ``path`` and ``role``.

    Relative paths resolve against the manifest's directory. Every file
    must exist and parse; an optional ``sha256`` key must match.
    """
    path = Path(path)
    try:
        data = tomllib.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise InputError(f"cannot read manifest {path}: {exc.strerror or exc}") from None
    except tomllib.TOMLDecodeError as exc:
        raise InputError(f"{path}: TOML parse error: {exc}") from None

    files = data.get("file")
    if not isinstance(files, list) or not files:
        raise InputError(f"{path}: manifest needs at least one [[file]] table")
    entries, seen = [], set()
    for k, item in enumerate(files):
        where = f"{path}: file[{k}]"
        if not isinstance(item, dict) or "path" not in item or "role" not in item:
            raise InputError(f"{where}: needs 'path' and 'role'")
        role = item["role"]
        if role not in ROLES:
            raise InputError(f"{where}: role {role!r} is not one of {', '.join(ROLES)}")
        if role in seen:
            raise InputError(f"{where}: role {role!r} listed twice")
        seen.add(role)
        fpath = (path.parent / item["path"]).resolve()
        if not fpath.is_file():
            raise InputError(f"{where}: {fpath} does not exist")
        digest = sha256_file(fpath)
        expected = item.get("sha256")
        if expected is not None and expected.lower() != digest:
            raise InputError(f"{where}: checksum mismatch for {fpath}")
        LOADERS[role](fpath)
        entries.append(ManifestEntry(fpath, role, digest))
    return DatasetManifest(tuple(entries))
