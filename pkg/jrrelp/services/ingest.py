"""Ingestion of TACRED-style JSON datasets."""

import json
import logging
from pathlib import Path
from typing import Any, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError

from jrrelp.errors import ArtifactError, CorpusValidationError, LoadError, StructuralError
from jrrelp.schemas.corpus import NO_RELATION, Dataset, Sentence, Split
from jrrelp.services.dependency import validate_tree
from jrrelp.services.hash_chain import compute_chain_hash

logger = logging.getLogger(__name__)

TACRED_NO_RELATION = "no_relation"

# Key order of re-emitted records.
RECORD_KEYS = (
    "id",
    "relation",
    "token",
    "subj_start",
    "subj_end",
    "obj_start",
    "obj_end",
    "subj_type",
    "obj_type",
    "stanford_pos",
    "stanford_ner",
    "stanford_head",
    "stanford_deprel",
)


class TacredRecord(BaseModel):
    """One record of the public TACRED JSON format."""

    model_config = ConfigDict(extra="ignore")

    id: Optional[str] = None
    token: list[str] = Field(..., description="Tokens")
    subj_start: int
    subj_end: int
    obj_start: int
    obj_end: int
    subj_type: str
    obj_type: str
    stanford_pos: list[str]
    stanford_ner: list[str]
    stanford_head: list[int]
    stanford_deprel: Optional[list[str]] = None
    relation: str


def normalize_relation(relation: str) -> str:
    return NO_RELATION if relation == TACRED_NO_RELATION else relation


def record_to_sentence(record: TacredRecord) -> Sentence:
    return Sentence(
        tokens=record.token,
        subj_span=(record.subj_start, record.subj_end),
        obj_span=(record.obj_start, record.obj_end),
        subj_type=record.subj_type,
        obj_type=record.obj_type,
        pos_tags=record.stanford_pos,
        ner_tags=record.stanford_ner,
        dep_heads=record.stanford_head,
        relation=normalize_relation(record.relation),
        id=record.id,
        dep_rels=record.stanford_deprel,
    )


def sentence_to_record(sentence: Sentence) -> dict[str, Any]:
    """TACRED record with a fixed key order."""
    values = {
        "id": sentence.id,
        "relation": TACRED_NO_RELATION if sentence.is_negative else sentence.relation,
        "token": list(sentence.tokens),
        "subj_start": sentence.subj_span[0],
        "subj_end": sentence.subj_span[1],
        "obj_start": sentence.obj_span[0],
        "obj_end": sentence.obj_span[1],
        "subj_type": sentence.subj_type,
        "obj_type": sentence.obj_type,
        "stanford_pos": list(sentence.pos_tags),
        "stanford_ner": list(sentence.ner_tags),
        "stanford_head": list(sentence.dep_heads),
        "stanford_deprel": list(sentence.dep_rels) if sentence.dep_rels is not None else None,
    }
    return {key: values[key] for key in RECORD_KEYS if values[key] is not None}


def parse_records(records: Any, split: Split = Split.TRAIN) -> Dataset:
    """
    Convert decoded JSON records into a validated dataset.

    Raises:
        LoadError: not an array, empty, or a record misses a field
        CorpusValidationError: spans/lengths inconsistent or parse not a tree
    """
    if not isinstance(records, list):
        raise LoadError("dataset must be a JSON array")
    if not records:
        raise LoadError("empty dataset")

    sentences = []
    for index, raw in enumerate(records):
        if not isinstance(raw, dict):
            raise LoadError(f"record {index} is not an object", record_index=index)
        try:
            record = TacredRecord.model_validate(raw)
        except ValidationError as e:
            first = e.errors()[0]
            field = ".".join(str(part) for part in first["loc"])
            if first["type"] == "missing":
                message = f"record {index} is missing field '{field}'"
            else:
                message = f"record {index} has invalid field '{field}': {first['msg']}"
            raise LoadError(message, record_index=index, field=field) from e
        try:
            sentence = record_to_sentence(record)
        except ValidationError as e:
            message = e.errors()[0]["msg"]
            raise CorpusValidationError(
                f"record {index}: {message}", record_index=index
            ) from e
        try:
            validate_tree(sentence.dep_heads)
        except StructuralError as e:
            raise CorpusValidationError(f"record {index}: {e.message}", record_index=index) from e
        sentences.append(sentence)

    return Dataset(sentences=sentences, split=split)


def load_dataset(path: Path, format: str = "tacred-json", split: Split = Split.TRAIN) -> Dataset:
    """
    Load a dataset file.

    Args:
        path: JSON file holding an array of TACRED records
        format: Only ``tacred-json`` is supported
        split: Split the sentences belong to

    Returns:
        Dataset with ``no_relation`` normalized to ``NoRelation``
    """
    if format != "tacred-json":
        raise LoadError(f"Unsupported dataset format: {format}")
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ArtifactError(f"Cannot read dataset: {path}", path=str(path)) from e
    try:
        records = json.loads(text)
    except json.JSONDecodeError as e:
        raise LoadError(f"Dataset is not valid JSON: {e}", path=str(path)) from e

    dataset = parse_records(records, split)
    logger.info(f"Loaded {len(dataset)} sentences from {path} ({split.value})")
    return dataset


def dataset_to_records(dataset: Dataset) -> list[dict[str, Any]]:
    return [sentence_to_record(s) for s in dataset.sentences]


def dump_dataset_bytes(dataset: Dataset) -> bytes:
    """TACRED JSON bytes; key order fixed, UTF-8, trailing newline."""
    text = json.dumps(dataset_to_records(dataset), indent=2, ensure_ascii=False)
    return (text + "\n").encode("utf-8")


def dump_dataset(dataset: Dataset, path: Path) -> None:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(dump_dataset_bytes(dataset))
    except OSError as e:
        raise ArtifactError(f"Cannot write dataset: {path}", path=str(path)) from e


def dataset_hash(dataset: Dataset) -> str:
    """Chained hash over the dataset's records in order."""
    return compute_chain_hash(dataset_to_records(dataset)) or ""
