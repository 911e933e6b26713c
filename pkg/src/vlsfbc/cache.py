"""Content-addressed binary disk cache.

Entries are keyed by a SHA-256 of their full input description, stored as
``<dir>/<k[:2]>/<k>.bin`` with a small integrity header (format magic +
payload digest).  Writes are atomic (temp file + rename), so concurrent
producers of the same key are safe; corrupt or truncated entries read as
misses and get replaced on the next put.
"""

import hashlib
import os
import tempfile

_MAGIC = b"VLSFBC-CACHE-v1\n"


def content_key(*parts):
    """SHA-256 hex digest of an ordered sequence of str/bytes parts."""
    hsh = hashlib.sha256()
    for part in parts:
        if isinstance(part, str):
            part = part.encode()
        elif not isinstance(part, (bytes, bytearray, memoryview)):
            raise TypeError(f"cache key parts must be str or bytes, got {type(part)!r}")
        hsh.update(len(bytes(part)).to_bytes(8, "little"))
        hsh.update(part)
    return hsh.hexdigest()


def default_cache_dir():
    env = os.environ.get("VLSF_CACHE_DIR")
    if env:
        return env
    return os.path.join(os.path.expanduser("~"), ".cache", "vlsfbc")


def _entry_path(cache_dir, key):
    return os.path.join(cache_dir, key[:2], key + ".bin")


def cache_get(cache_dir, key):
    """Return the cached payload bytes, or None on miss/corruption."""
    path = _entry_path(cache_dir, key)
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError:
        return None
    if not blob.startswith(_MAGIC):
        return None
    digest = blob[len(_MAGIC) : len(_MAGIC) + 32]
    payload = blob[len(_MAGIC) + 32 :]
    if hashlib.sha256(payload).digest() != digest:
        return None
    return payload


def cache_put(cache_dir, key, payload):
    """Atomically store payload bytes under key."""
    path = _entry_path(cache_dir, key)
    os.makedirs(os.path.dirname(path), exist_ok=True)
    blob = _MAGIC + hashlib.sha256(payload).digest() + payload
    fd, tmp = tempfile.mkstemp(dir=os.path.dirname(path), suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(blob)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise
