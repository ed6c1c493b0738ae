"""
Misc. file handling utilities, not tied to a single reportkg module
"""

import json
import os
import stat
import tempfile
from concurrent.futures import ThreadPoolExecutor
from fractions import Fraction
from functools import lru_cache

from jinja2 import Environment, PackageLoader

from .exceptions import InputFormatError


def _new_file_mode(path):
    """Mode for a written file: kept from an existing `path`, else 0666 minus the umask."""
    try:
        return stat.S_IMODE(os.stat(path).st_mode)
    except FileNotFoundError:
        umask = os.umask(0)
        os.umask(umask)
        return 0o666 & ~umask


def atomic_write(path, text):
    """
    Write `text` to `path` so that readers never observe a partially written
    file.

    The content goes to a temporary file in the same directory first, which
    is then moved over `path` with os.replace. On failure the temporary file
    is removed and `path` is left as it was. The file mode of an existing
    `path` is kept; new files get the usual umask-based mode.
    """
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp_path = tempfile.mkstemp(
        dir=directory, prefix=f".{os.path.basename(path)}.", suffix=".tmp"
    )
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as f:
            f.write(text)
        os.chmod(tmp_path, _new_file_mode(path))
        os.replace(tmp_path, path)
    except BaseException:
        if os.path.exists(tmp_path):
            os.unlink(tmp_path)
        raise


def _open_error(path, e):
    if isinstance(e, FileNotFoundError):
        return InputFormatError("no such file", path=path)
    return InputFormatError(f"cannot read file: {e.strerror or e}", path=path)


def read_json(path):
    """Load a single JSON document, raising InputFormatError on failure."""
    try:
        with open(path, encoding="utf-8") as f:
            return json.load(f)
    except OSError as e:
        raise _open_error(path, e)
    except UnicodeDecodeError:
        raise InputFormatError("invalid UTF-8", path=path)
    except json.JSONDecodeError as e:
        raise InputFormatError(f"malformed JSON: {e.msg}", path=path, line=e.lineno)


def read_jsonl(path):
    """
    Yield (line_number, object) for every non-blank line of a JSON-lines
    file. Line numbers start at 1. Lines that are not UTF-8 encoded JSON
    objects raise InputFormatError naming the line.
    """
    try:
        f = open(path, "rb")
    except OSError as e:
        raise _open_error(path, e)
    with f:
        for lineno, raw in enumerate(f, start=1):
            try:
                line = raw.decode("utf-8")
            except UnicodeDecodeError:
                raise InputFormatError("invalid UTF-8", path=path, line=lineno)
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as e:
                raise InputFormatError(f"malformed JSON: {e.msg}", path=path, line=lineno)
            if not isinstance(obj, dict):
                raise InputFormatError(
                    f"expected a JSON object, got {type(obj).__name__}",
                    path=path,
                    line=lineno,
                )
            yield lineno, obj


def dumps_json(obj):
    """Serialize one JSON document the way every reportkg artifact is written."""
    return json.dumps(obj, ensure_ascii=False, indent=2) + "\n"


def dumps_jsonl(objs):
    """Serialize an iterable of JSON objects to JSON-lines text."""
    return "".join(json.dumps(obj, ensure_ascii=False) + "\n" for obj in objs)


def round_fraction(value, digits=4):
    """
    Render an exact fraction (or float) with a fixed number of decimals, the
    precision results are reported with. Infinite values render as "inf" and
    undefined values (None) as the "0/0" sentinel.
    """
    if value is None:
        return "0/0"
    if isinstance(value, float) and value == float("inf"):
        return "inf"
    if isinstance(value, Fraction):
        value = float(value)
    return round(value, digits)


def parallel_map(func, items, threads=None):
    """
    Order preserving map over `items`, fanned out over a thread pool.

    threads=None or 0 uses the machine's parallelism, threads=1 runs inline.
    """
    items = list(items)
    if threads == 1 or len(items) <= 1:
        return [func(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads or None) as pool:
        return list(pool.map(func, items))


@lru_cache()
def _template_environment():
    return Environment(
        loader=PackageLoader("reportkg", "templates"),
        keep_trailing_newline=True,
        trim_blocks=True,
        lstrip_blocks=True,
    )


def render_template(name, **context):
    """Render one of the text templates shipped in reportkg/templates."""
    return _template_environment().get_template(name).render(**context)
