"""Plain-text ``key: value`` reports and their JSON counterparts."""
import logging
import re
from pathlib import Path
from typing import Iterable, List, Tuple, Union

from pydantic import BaseModel

from .errors import UsageError

logger = logging.getLogger(__name__)

LINE_PATTERN = re.compile(r"^([A-Za-z0-9_.\[\]-]+): (.*)$")

SIZE_PATTERN = re.compile(r"^\s*(\d+)\s*[xX]\s*(\d+)\s*$")


def parse_size(text: str) -> Tuple[int, int]:
    """``WxH`` to (H, W); extents must be positive and even"""
    match = SIZE_PATTERN.match(text or "")
    if not match:
        raise UsageError(f"input size must look like WxH, got '{text}'")
    w, h = int(match.group(1)), int(match.group(2))
    if w < 2 or h < 2 or w % 2 or h % 2:
        raise UsageError(f"input size {w}x{h} must have positive even extents")
    return h, w


def format_size(size: Tuple[int, int]) -> str:
    h, w = size
    return f"{w}x{h}"


def check_lines(lines: Iterable[str]) -> List[str]:
    """Return the lines unchanged after confirming each fits the grammar"""
    lines = list(lines)
    for line in lines:
        if not LINE_PATTERN.match(line):
            raise ValueError(f"report line does not fit 'key: value': {line!r}")
    return lines


def parse_lines(text: str) -> List[Tuple[str, str]]:
    """Split report text into (key, value) pairs in order; keys may repeat"""
    pairs = []
    for line in text.splitlines():
        if not line.strip():
            continue
        match = LINE_PATTERN.match(line)
        if not match:
            raise ValueError(f"not a report line: {line!r}")
        pairs.append((match.group(1), match.group(2)))
    return pairs


def write_json(report: BaseModel, path: Union[str, Path]) -> Path:
    path = Path(path)
    try:
        path.write_text(report.model_dump_json(indent=2))
    except Exception as e:
        logger.error(f"Error writing report {path}: {str(e)}")
        raise
    return path
