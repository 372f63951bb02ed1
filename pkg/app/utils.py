import hashlib
import os
import re
import string
import tempfile
import unicodedata
from typing import Iterable, List


ASCII_PUNCT = re.escape(string.punctuation)
_SURROUNDING_PUNCT = re.compile(rf'^[{ASCII_PUNCT}]+|[{ASCII_PUNCT}]+$')


def normalize_token(token: str) -> str:
    """Strip surrounding ASCII punctuation; pure punctuation tokens are kept."""
    if not token:
        return ""

    stripped = _SURROUNDING_PUNCT.sub('', token)

    if not stripped:
        return token

    return stripped


def normalize_text(line: str) -> List[str]:
    """NFC, lowercase, whitespace tokenization, punctuation stripping.

    This is the single ingestion point for every command.
    """
    if not line:
        return []

    line = unicodedata.normalize('NFC', line).lower()

    return [normalize_token(token) for token in line.split()]


def is_punctuation(token: str) -> bool:
    return bool(token) and all(ch in string.punctuation for ch in token)


def compute_file_hash(file_path: str) -> str:
    sha256_hash = hashlib.sha256()

    with open(file_path, "rb") as f:
        for byte_block in iter(lambda: f.read(4096), b""):
            sha256_hash.update(byte_block)

    return sha256_hash.hexdigest()


def compute_text_hash(*parts: str) -> str:
    sha256_hash = hashlib.sha256()
    for part in parts:
        sha256_hash.update(part.encode('utf-8'))
        sha256_hash.update(b'\x00')
    return sha256_hash.hexdigest()


def write_lines_atomic(path: str, lines: Iterable[str]) -> int:
    """Write '\\n'-terminated lines to a temp file beside `path`, then move it in."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)

    count = 0
    fd, tmp_path = tempfile.mkstemp(dir=directory, prefix='.tmp_')
    try:
        with os.fdopen(fd, 'w', encoding='utf-8', newline='\n') as f:
            for line in lines:
                f.write(line)
                f.write('\n')
                count += 1
        os.replace(tmp_path, path)
    except BaseException:
        if os.path.exists(tmp_path):
            os.remove(tmp_path)
        raise

    return count


def format_float(value: float) -> str:
    return format(float(value), '.9g')
