"""
Corpus preprocessing: type-substitution, positional features, vocabulary
construction and automatic knowledge-graph answer sets.
"""

import logging
from collections import Counter, defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

from jrrelp.errors import ArtifactError, ConfigurationError, KnowledgeGraphError
from jrrelp.schemas.config import DataConfig
from jrrelp.schemas.corpus import (
    NO_RELATION,
    OBJ_PREFIX,
    PAD_TOKEN,
    SUBJ_PREFIX,
    UNK_TOKEN,
    AnswerEntry,
    AnswerSets,
    AttributeKind,
    Dataset,
    Sentence,
    Split,
    Vocab,
)
from jrrelp.services.ingest import dataset_hash, dump_dataset_bytes, parse_records
from jrrelp.services.manifest import RunRecorder, verify_manifest
from jrrelp.storage.artifact_store import ArtifactStore

logger = logging.getLogger(__name__)


def type_substitute(sentence: Sentence) -> Sentence:
    """Replace subject/object tokens by ``SUBJ-<type>`` / ``OBJ-<type>``."""
    tokens = list(sentence.tokens)
    for i in sentence.subj_indices():
        tokens[i] = sentence.subj_token
    for i in sentence.obj_indices():
        tokens[i] = sentence.obj_token
    return sentence.model_copy(update={"tokens": tokens})


def type_substitute_dataset(dataset: Dataset) -> Dataset:
    return Dataset(sentences=[type_substitute(s) for s in dataset.sentences], split=dataset.split)


def _offsets(n: int, start: int, end: int) -> list[int]:
    return [i - start if i < start else (i - end if i > end else 0) for i in range(n)]


def positional_offsets(sentence: Sentence) -> tuple[list[int], list[int]]:
    """Signed distance of each token to the subject span and to the object span."""
    n = sentence.n
    return _offsets(n, *sentence.subj_span), _offsets(n, *sentence.obj_span)


def _is_type_token(token: str) -> bool:
    return token.startswith(SUBJ_PREFIX) or token.startswith(OBJ_PREFIX)


def build_vocab(train: Dataset, min_count: int = 1, extra_relations: Iterable[str] = ()) -> Vocab:
    """
    Build token, relation and attribute maps from a type-substituted split.

    Type tokens are kept regardless of frequency; NoRelation always has
    relation index 0. ``extra_relations`` extends the relation inventory with
    labels seen only in dev or test so every gold label encodes.
    """
    counts = Counter(t for s in train.sentences for t in s.tokens if not _is_type_token(t))
    type_tokens = sorted(
        {s.subj_token for s in train.sentences} | {s.obj_token for s in train.sentences}
    )
    words = sorted((t for t, c in counts.items() if c >= min_count), key=lambda t: (-counts[t], t))
    tokens = [PAD_TOKEN, UNK_TOKEN] + type_tokens + words

    positives = sorted(({s.relation for s in train.sentences} | set(extra_relations)) - {NO_RELATION})
    relations = [NO_RELATION] + positives

    max_offset = max(s.n for s in train.sentences) - 1
    pos_values = sorted({p for s in train.sentences for p in s.pos_tags})
    ner_values = sorted({t for s in train.sentences for t in s.ner_tags})
    offsets = range(-max_offset, max_offset + 1)
    attributes = (
        [PAD_TOKEN, UNK_TOKEN]
        + [f"{AttributeKind.POS.value}:{v}" for v in pos_values]
        + [f"{AttributeKind.NER.value}:{v}" for v in ner_values]
        + [f"{AttributeKind.SO.value}:{k}" for k in offsets]
        + [f"{AttributeKind.OO.value}:{k}" for k in offsets]
    )

    vocab = Vocab(tokens=tokens, relations=relations, attributes=attributes, max_offset=max_offset)
    dropped = len(counts) - len(words)
    logger.info(
        f"Built vocab: {vocab.n_tokens} tokens ({dropped} below min_count={min_count}), "
        f"{vocab.n_relations} relations, {vocab.n_attributes} attributes"
    )
    return vocab


def build_answer_sets(train: Dataset, vocab: Vocab, include_negative_relation: bool = True) -> AnswerSets:
    """
    Collect (s_type, r, o_type) triples from every training sentence.

    Raises:
        KnowledgeGraphError: no triple survives the NoRelation filter
    """
    domain = sorted({vocab.token_id(s.obj_token) for s in train.sentences})

    answers: dict[tuple[int, int], set[int]] = defaultdict(set)
    for sentence in train.sentences:
        if sentence.is_negative and not include_negative_relation:
            continue
        key = (vocab.token_id(sentence.subj_token), vocab.relation_id(sentence.relation))
        answers[key].add(vocab.token_id(sentence.obj_token))

    if not answers:
        raise KnowledgeGraphError("no triples extracted")

    entries = [
        AnswerEntry(subj_type=s, relation=r, objects=sorted(objs))
        for (s, r), objs in sorted(answers.items())
    ]
    logger.info(f"Built answer sets: {len(entries)} questions over {len(domain)} object types")
    return AnswerSets(
        candidate_domain=domain,
        entries=entries,
        include_negative_relation=include_negative_relation,
    )


def carve_dev_split(train: Dataset, size: int, seed: int) -> tuple[Dataset, Dataset]:
    """Seeded split of ``size`` training sentences into a dev set."""
    if size >= len(train):
        raise ConfigurationError(
            f"cannot carve {size} dev sentences from {len(train)} training sentences"
        )
    rng = np.random.default_rng(seed)
    dev_idx = set(rng.permutation(len(train))[:size].tolist())
    kept = [s for i, s in enumerate(train.sentences) if i not in dev_idx]
    dev = [s for i, s in enumerate(train.sentences) if i in dev_idx]
    return Dataset(sentences=kept, split=Split.TRAIN), Dataset(sentences=dev, split=Split.DEV)


@dataclass
class PreparedCorpus:
    """Type-substituted splits with the vocabulary and KG built from train."""
    train: Dataset
    dev: Dataset
    test: Optional[Dataset]
    vocab: Vocab
    answer_sets: AnswerSets


def prepare_corpus(
    train: Dataset,
    dev: Optional[Dataset],
    test: Optional[Dataset],
    data: DataConfig,
    seed: int = 0,
) -> PreparedCorpus:
    """Substitute types, carve dev if needed, then build vocab and answer sets."""
    if dev is None:
        train, dev = carve_dev_split(train, data.dev_carve_size, seed)
        logger.info(f"Carved {len(dev)} dev sentences from train")
    train = type_substitute_dataset(train)
    dev = type_substitute_dataset(dev)
    test = type_substitute_dataset(test) if test is not None else None
    held_out = [s.relation for split in (dev, test) if split is not None for s in split.sentences]
    vocab = build_vocab(train, data.min_count, extra_relations=held_out)
    answer_sets = build_answer_sets(train, vocab, data.include_negative_kg)
    return PreparedCorpus(train=train, dev=dev, test=test, vocab=vocab, answer_sets=answer_sets)


# ============================================================================
# Prepared corpus on disk
# ============================================================================

SPLIT_FILES = {Split.TRAIN: "train.json", Split.DEV: "dev.json", Split.TEST: "test.json"}
VOCAB_FILE = "vocab.json"
ANSWER_SETS_FILE = "answer_sets.json"


def write_prepared_corpus(recorder: RunRecorder, corpus: PreparedCorpus) -> None:
    """Write splits, vocab and answer sets through a run recorder."""
    for split, dataset in ((Split.TRAIN, corpus.train), (Split.DEV, corpus.dev), (Split.TEST, corpus.test)):
        if dataset is None:
            continue
        recorder.write_blob(SPLIT_FILES[split], dump_dataset_bytes(dataset))
        recorder.manifest.dataset_hashes[split.value] = dataset_hash(dataset)
    recorder.write_json(VOCAB_FILE, corpus.vocab.model_dump(mode="json"))
    recorder.write_json(ANSWER_SETS_FILE, corpus.answer_sets.model_dump(mode="json"))
    recorder.manifest.vocab_hash = corpus.vocab.fingerprint()


def read_prepared_corpus(data_dir: Path) -> PreparedCorpus:
    """
    Load the output of ``preprocess`` after verifying its manifest.

    Raises:
        ArtifactError: a listed artifact is missing or was modified
    """
    store = ArtifactStore(Path(data_dir))
    manifest = verify_manifest(store)

    def read_split(split: Split) -> Optional[Dataset]:
        name = SPLIT_FILES[split]
        if name not in manifest.artifacts:
            return None
        return parse_records(store.download_json(name), split)

    train = read_split(Split.TRAIN)
    dev = read_split(Split.DEV)
    if train is None or dev is None:
        raise ArtifactError(f"Prepared corpus in {data_dir} lacks a train or dev split")
    vocab = Vocab.model_validate(store.download_json(VOCAB_FILE))
    if manifest.vocab_hash is not None and vocab.fingerprint() != manifest.vocab_hash:
        raise ArtifactError("Vocabulary does not match the manifest hash", path=str(data_dir))
    return PreparedCorpus(
        train=train,
        dev=dev,
        test=read_split(Split.TEST),
        vocab=vocab,
        answer_sets=AnswerSets.model_validate(store.download_json(ANSWER_SETS_FILE)),
    )
