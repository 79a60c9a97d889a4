"""Records file ingest and cleaning"""
from pathlib import Path
from typing import Iterable, List, Set, Union
import json
import logging

from pydantic import ValidationError

from peplatent.errors import AlphabetError, InvalidArgumentError, ParseError
from peplatent.models.records import BinderRecord, IngestResult, Rejection
from peplatent.services.codec import validate_sequence
from peplatent.utils.workspace import atomic_write_text

logger = logging.getLogger(__name__)

MAX_RESOLUTION = 5.0


def _check_residues(record: BinderRecord) -> str:
    """Returns an empty string when both sequences are clean, else the reason detail"""
    for field in ("receptor_seq", "binder_seq"):
        try:
            validate_sequence(getattr(record, field))
        except AlphabetError as e:
            return f"{field}: '{e.letter}' at position {e.position}"
        except InvalidArgumentError:
            return f"{field}: empty"
    return ""


def parse_records(text: str) -> List[tuple[int, BinderRecord]]:
    """
    Parses JSON-lines text into (line number, record) pairs; blank lines
    are skipped.

    Raises:
        ParseError: On invalid JSON or a record missing required fields
    """
    parsed = []
    for line_no, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as e:
            raise ParseError(f"invalid JSON: {e.msg}", line_no) from e
        if not isinstance(obj, dict):
            raise ParseError("record must be a JSON object", line_no)
        try:
            parsed.append((line_no, BinderRecord.model_validate(obj)))
        except ValidationError as e:
            fields = ", ".join(".".join(str(p) for p in err["loc"]) for err in e.errors())
            raise ParseError(f"invalid record ({fields})", line_no) from e
    return parsed


def clean_records(
    parsed: Iterable[tuple[int, BinderRecord]],
    max_resolution: float = MAX_RESOLUTION,
) -> IngestResult:
    """
    Applies the cleaning rules in file order, one reason per dropped record:

    - duplicate-id: the first occurrence of a pdb_id claims it, even when
      that occurrence is itself rejected
    - low-resolution: resolution strictly worse than max_resolution
    - unknown-residue: any letter outside the 20 standard amino acids
    - pocket-out-of-range: a pocket index outside the receptor
    """
    seen: Set[str] = set()
    result = IngestResult()
    for line_no, record in parsed:
        if record.pdb_id in seen:
            result.rejections.append(Rejection(pdb_id=record.pdb_id, line=line_no, reason="duplicate-id"))
            continue
        seen.add(record.pdb_id)

        if record.resolution > max_resolution:
            result.rejections.append(
                Rejection(
                    pdb_id=record.pdb_id,
                    line=line_no,
                    reason="low-resolution",
                    detail=f"{record.resolution} > {max_resolution}",
                )
            )
            continue

        detail = _check_residues(record)
        if detail:
            result.rejections.append(
                Rejection(pdb_id=record.pdb_id, line=line_no, reason="unknown-residue", detail=detail)
            )
            continue

        bad = [i for i in record.pocket_indices if not 0 <= i < len(record.receptor_seq)]
        if bad:
            result.rejections.append(
                Rejection(
                    pdb_id=record.pdb_id,
                    line=line_no,
                    reason="pocket-out-of-range",
                    detail=f"indices {bad} outside receptor of length {len(record.receptor_seq)}",
                )
            )
            continue

        result.records.append(record)
    return result


def ingest(path: Union[str, Path], max_resolution: float = MAX_RESOLUTION) -> IngestResult:
    """
    Reads and cleans a JSON-lines records file.

    Args:
        path: File with one record object per line (pdb_id, receptor_seq,
            binder_seq, resolution, pocket_indices, optional cluster_id)
        max_resolution: Records with a worse (larger) resolution are dropped

    Returns:
        IngestResult with the kept records in file order and the rejections

    Raises:
        ParseError: With the line number of a malformed record
    """
    path = Path(path)
    result = clean_records(parse_records(path.read_text(encoding="utf-8")), max_resolution)
    logger.info(f"Ingested {len(result.records)} records from {path} ({len(result.rejections)} rejected)")
    for rejection in result.rejections:
        logger.debug(f"Rejected {rejection.pdb_id} (line {rejection.line}): {rejection.reason} {rejection.detail}")
    return result


def records_jsonl(records: Iterable[BinderRecord]) -> str:
    return "".join(r.model_dump_json(exclude_none=True) + "\n" for r in records)


def write_records(records: Iterable[BinderRecord], path: Union[str, Path]) -> Path:
    """Writes records back as JSON lines; ingesting the output yields the same records"""
    records = list(records)
    path = atomic_write_text(path, records_jsonl(records))
    logger.info(f"Wrote {len(records)} records to {path}")
    return path


def filter_by_length(records: Iterable[BinderRecord], length: int) -> List[BinderRecord]:
    """Keeps records whose binder has exactly `length` residues"""
    records = list(records)
    kept = [r for r in records if len(r.binder_seq) == length]
    if len(kept) < len(records):
        logger.warning(f"Skipped {len(records) - len(kept)} records whose binder length is not {length}")
    return kept
