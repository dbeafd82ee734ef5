# utils.py
import csv
import io
import json
import math
import os
import tempfile

from errors import InvalidInputError

LENGTH_UNITS = {
    "pm": 1e-12,
    "nm": 1e-9,
    "um": 1e-6,
    "µm": 1e-6,
    "μm": 1e-6,
    "mm": 1e-3,
    "cm": 1e-2,
    "m": 1.0,
}


def per_cm3_to_per_m3(n):
    return n * 1e6


def per_m3_to_per_cm3(n):
    return n * 1e-6


def split_length(token):
    """'100nm' -> (100.0, 1e-9). A bare number is taken as metres."""
    text = token.strip()
    for suffix in sorted(LENGTH_UNITS, key=len, reverse=True):
        if text.endswith(suffix):
            number = text[: -len(suffix)].strip()
            if number:
                return float(number), LENGTH_UNITS[suffix]
    return float(text), 1.0


def log_grid(lo, hi, count):
    if count == 1:
        return [float(lo)]
    a, b = math.log(lo), math.log(hi)
    return [math.exp(a + (b - a) * i / (count - 1)) for i in range(count)]


def atomic_write_text(path, text):
    """Write text next to the target and rename it into place."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=".tmp-", dir=directory)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.remove(tmp)
        raise


def canonical_json(obj):
    return json.dumps(obj, sort_keys=True, indent=2, default=_json_default) + "\n"


def _json_default(obj):
    if hasattr(obj, "value") and hasattr(obj, "name"):  # enums
        return obj.value
    if hasattr(obj, "tolist"):
        return obj.tolist()
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


def format_float(x):
    return repr(float(x))


def render_csv(header, rows, comments=()):
    buf = io.StringIO()
    for line in comments:
        buf.write(f"# {line}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([format_float(v) if isinstance(v, float) else v for v in row])
    return buf.getvalue()


def read_text_lines(path):
    """Lines of a UTF-8 text file; undecodable bytes are reported with their line."""
    try:
        with open(path, "rb") as f:
            data = f.read()
    except OSError as e:
        raise InvalidInputError(f"cannot read file ({e.strerror})", path=path)
    try:
        return data.decode("utf-8").splitlines()
    except UnicodeDecodeError as e:
        line = data[:e.start].count(b"\n") + 1
        raise InvalidInputError(f"not valid UTF-8 (byte 0x{data[e.start]:02x})", path=path, line=line)


def read_numeric_csv(path, expected_header):
    """
    Read a UTF-8 CSV whose first non-comment line equals expected_header.
    Returns a list of (line_number, tuple_of_floats). '#' lines are skipped.
    """
    lines = read_text_lines(path)

    header_seen = False
    rows = []
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        cells = [c.strip() for c in line.split(",")]
        if not header_seen:
            if cells != list(expected_header):
                raise InvalidInputError(
                    f"expected header {','.join(expected_header)!r}, got {line!r}",
                    path=path, line=lineno)
            header_seen = True
            continue
        if len(cells) != len(expected_header):
            raise InvalidInputError(
                f"expected {len(expected_header)} columns, got {len(cells)}",
                path=path, line=lineno)
        try:
            values = tuple(float(c) for c in cells)
        except ValueError:
            raise InvalidInputError(f"non-numeric value in {line!r}", path=path, line=lineno)
        if not all(math.isfinite(v) for v in values):
            raise InvalidInputError(f"non-finite value in {line!r}", path=path, line=lineno)
        rows.append((lineno, values))

    if not header_seen:
        raise InvalidInputError("missing header line", path=path)
    return rows
