"""Waveform files and the JSON results container.

Two waveform encodings are supported:

text
    Optional ``#`` comment lines (schema, sample period, config hash), the
    header ``time_s,i0_v,i90_v``, then one ``time,i0,i90`` row per sample
    with floats printed to 17 significant digits so they parse back exactly.

binary (``QRW1``)
    Magic ``b"QRW1"``, then little-endian ``u32`` schema (1), ``f64``
    sample period in seconds, ``u64`` sample count, then the samples as
    interleaved ``f64`` pairs ``(i0, i90)``.
"""

import csv
import hashlib
import json
import math
import struct
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import WaveformParseError
from .synth import WaveformPair

WAVEFORM_SCHEMA = 1
RESULTS_SCHEMA = 1
TEXT_HEADER = "time_s,i0_v,i90_v"
MAGIC = b"QRW1"
_BIN_HEAD = struct.Struct("<4sIdQ")
_SAMPLE_DTYPE = np.dtype("<f8")

FORMAT_SUFFIX = {"text": ".csv", "binary": ".qrw"}


def config_hash(config):
    """sha256 of the canonical (sorted, compact) JSON encoding of ``config``."""
    blob = json.dumps(to_jsonable(config), sort_keys=True, separators=(",", ":"),
                      allow_nan=False)
    return hashlib.sha256(blob.encode()).hexdigest()


def file_sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


# -- waveforms ---------------------------------------------------------------

def encode_text(wf, config_sha256=None):
    lines = [f"# schema={WAVEFORM_SCHEMA}", f"# sample_period_s={wf.sample_period!r}"]
    if config_sha256:
        lines.append(f"# config_sha256={config_sha256}")
    lines.append(TEXT_HEADER)
    body = np.column_stack([wf.times, wf.i0, wf.i90])
    head = "\n".join(lines) + "\n"
    rows = "\n".join("%.17g,%.17g,%.17g" % tuple(r) for r in body.tolist())
    return (head + rows + ("\n" if rows else "")).encode("ascii")


def encode_binary(wf):
    head = _BIN_HEAD.pack(MAGIC, WAVEFORM_SCHEMA, float(wf.sample_period), len(wf))
    data = np.empty(2 * len(wf), dtype=_SAMPLE_DTYPE)
    data[0::2] = wf.i0
    data[1::2] = wf.i90
    return head + data.tobytes()


def write_waveform(wf, path, fmt="binary", config_sha256=None):
    data = encode_binary(wf) if fmt == "binary" else encode_text(wf, config_sha256)
    Path(path).write_bytes(data)
    return Path(path)


def decode_binary(data):
    if len(data) < _BIN_HEAD.size:
        raise WaveformParseError(f"binary header needs {_BIN_HEAD.size} bytes, file has "
                                 f"{len(data)}", len(data))
    magic, schema, dt, count = _BIN_HEAD.unpack_from(data)
    if magic != MAGIC:
        raise WaveformParseError(f"bad magic {magic!r}", 0)
    if schema != WAVEFORM_SCHEMA:
        raise WaveformParseError(f"unsupported schema {schema}", 4)
    if not (math.isfinite(dt) and dt > 0):
        raise WaveformParseError(f"invalid sample period {dt!r}", 8)
    need = _BIN_HEAD.size + 16 * count
    if len(data) < need:
        # offset of the first missing or partial sample pair
        whole = (len(data) - _BIN_HEAD.size) // 16
        raise WaveformParseError(f"truncated: header promises {count} samples, "
                                 f"only {whole} complete", _BIN_HEAD.size + 16 * whole)
    if len(data) > need:
        raise WaveformParseError(f"{len(data) - need} trailing bytes after samples", need)
    pairs = np.frombuffer(data, dtype=_SAMPLE_DTYPE, count=2 * count, offset=_BIN_HEAD.size)
    return WaveformPair(pairs[0::2].copy(), pairs[1::2].copy(), dt)


def _line_offsets(data):
    """Yield ``(offset, line_bytes)`` for every line of ``data``."""
    pos = 0
    n = len(data)
    while pos < n:
        end = data.find(b"\n", pos)
        if end < 0:
            end = n
        yield pos, data[pos:end].rstrip(b"\r")
        pos = end + 1


def _parse_meta(line, offset):
    meta = {}
    for item in line[1:].decode("ascii", "replace").split():
        key, sep, value = item.partition("=")
        if sep:
            meta[key] = value
    if "schema" in meta and meta["schema"] != str(WAVEFORM_SCHEMA):
        raise WaveformParseError(f"unsupported schema {meta['schema']}", offset)
    return meta


def _scan_rows(data, start):
    """Slow path: locate the first bad row for the error message."""
    for off, line in _line_offsets(data[start:]):
        if not line:
            continue
        fields = line.split(b",")
        if len(fields) != 3:
            raise WaveformParseError(f"expected 3 fields, got {len(fields)}", start + off)
        for f in fields:
            try:
                float(f)
            except ValueError:
                raise WaveformParseError(f"bad number {f[:40]!r}", start + off) from None
    raise WaveformParseError("unparseable sample rows", start)


def decode_text(data):
    meta = {}
    body_start = None
    for off, line in _line_offsets(data):
        if line.startswith(b"#"):
            meta.update(_parse_meta(line, off))
            continue
        if line.strip() == TEXT_HEADER.encode():
            body_start = off + len(line) + 1
            if data[off + len(line):off + len(line) + 2] == b"\r\n":
                body_start += 1
            break
        raise WaveformParseError(f"expected header {TEXT_HEADER!r}", off)
    if body_start is None:
        raise WaveformParseError("missing header line", len(data))
    body = data[body_start:]
    if body and not body.endswith(b"\n"):
        # a partial final line marks a truncated write
        last = body.rfind(b"\n") + 1
        raise WaveformParseError("truncated final row (no newline)", body_start + last)
    rows = [r for r in body.replace(b"\r", b"").split(b"\n") if r]
    try:
        flat = np.array(b",".join(rows).split(b",") if rows else [], dtype=float)
    except ValueError:
        _scan_rows(data, body_start)
    if flat.size != 3 * len(rows):
        _scan_rows(data, body_start)
    table = flat.reshape(-1, 3)
    times = table[:, 0]
    if "sample_period_s" in meta:
        dt = float(meta["sample_period_s"])
    elif times.size >= 2:
        dt = float((times[-1] - times[0]) / (times.size - 1))
    else:
        raise WaveformParseError("sample period unknown: no metadata and < 2 rows", body_start)
    if not (math.isfinite(dt) and dt > 0):
        raise WaveformParseError(f"invalid sample period {dt!r}", 0)
    t0 = float(times[0]) if times.size else 0.0
    return WaveformPair(table[:, 1].copy(), table[:, 2].copy(), dt, t0)


def read_waveform(path):
    """Load a waveform, detecting the encoding from the magic bytes."""
    data = Path(path).read_bytes()
    if data[:4] == MAGIC:
        return decode_binary(data)
    return decode_text(data)


# -- results container -------------------------------------------------------

def to_jsonable(obj):
    """Plain JSON types; non-finite floats become ``None``."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if hasattr(obj, "value") and isinstance(obj.value, str):
        return obj.value
    if obj is None or isinstance(obj, str):
        return obj
    if hasattr(obj, "to_dict"):
        return to_jsonable(obj.to_dict())
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def dumps(doc):
    return json.dumps(to_jsonable(doc), sort_keys=True, indent=2, allow_nan=False) + "\n"


def make_container(command, config, seed, results, tool_version, created_utc=None):
    return {
        "schema": "injlock.results",
        "schema_version": RESULTS_SCHEMA,
        "tool_version": tool_version,
        "command": command,
        "seed": int(seed),
        "created_utc": created_utc,
        "config": config,
        "config_sha256": config_hash(config),
        "results": results,
    }


def write_results(doc, path):
    Path(path).write_text(dumps(doc), encoding="utf-8")
    return Path(path)


def read_results(path):
    return json.loads(Path(path).read_text(encoding="utf-8"))


def results_schema():
    text = resources.files("injlock").joinpath("results.schema.json").read_text()
    return json.loads(text)


TABLE_SCHEMA = 1


def write_table(rows, path, config_sha256=None):
    """CSV with ``#`` metadata lines and a header row.

    Floats are written at full precision and missing values left empty.
    """
    rows = list(rows)
    with open(path, "w", newline="") as fh:
        fh.write(f"# schema={TABLE_SCHEMA}\n")
        if config_sha256:
            fh.write(f"# config_sha256={config_sha256}\n")
        if rows:
            w = csv.writer(fh, lineterminator="\n")
            cols = list(rows[0])
            w.writerow(cols)
            w.writerows([_cell(r[c]) for c in cols] for r in rows)
    return Path(path)


def _cell(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v)) if math.isfinite(v) else ""
    return v
