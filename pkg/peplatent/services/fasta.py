"""FASTA parsing"""
from pathlib import Path
from typing import Dict, Optional, Union
import logging

from peplatent.errors import ParseError

logger = logging.getLogger(__name__)


def parse_fasta_text(text: str) -> Dict[str, str]:
    """
    Parses FASTA text into id -> sequence.

    The id is the first whitespace-delimited token after '>'. Body lines are
    concatenated and uppercased. A repeated id replaces the earlier entry.

    Raises:
        ParseError: On sequence data before the first header or an empty header
    """
    sequences: Dict[str, str] = {}
    current: Optional[str] = None
    chunks: list[str] = []

    def flush() -> None:
        if current is None:
            return
        if current in sequences:
            logger.warning(f"Duplicate FASTA header '{current}'; keeping the later entry")
        sequences[current] = "".join(chunks).upper()

    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith(">"):
            flush()
            tokens = line[1:].split()
            if not tokens:
                raise ParseError("empty FASTA header", line_no)
            current = tokens[0]
            chunks = []
        elif current is None:
            raise ParseError("sequence data before the first '>' header", line_no)
        else:
            chunks.append("".join(line.split()))
    flush()
    return sequences


def parse_fasta(path: Union[str, Path]) -> Dict[str, str]:
    sequences = parse_fasta_text(Path(path).read_text(encoding="utf-8"))
    logger.debug(f"Parsed {len(sequences)} sequences from {path}")
    return sequences
