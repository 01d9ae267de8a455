"""
Pydantic models for corpus-side data: sentences, datasets, vocabularies,
answer sets and synthetic corpus specifications.
"""

from collections import Counter
from enum import Enum
from typing import Iterator, Optional

from pydantic import BaseModel, ConfigDict, Field, PrivateAttr, model_validator

from jrrelp.errors import EncodingError
from jrrelp.services.hash_chain import compute_content_hash

NO_RELATION = "NoRelation"
SUBJ_PREFIX = "SUBJ-"
OBJ_PREFIX = "OBJ-"

PAD_TOKEN = "<PAD>"
UNK_TOKEN = "<UNK>"
PAD_ID = 0
UNK_ID = 1

SUBJ_SLOT = "<SUBJ>"
OBJ_SLOT = "<OBJ>"


# ============================================================================
# Enums
# ============================================================================

class Split(str, Enum):
    """Dataset split."""
    TRAIN = "train"
    DEV = "dev"
    TEST = "test"


class AttributeKind(str, Enum):
    """Namespaces of the shared attribute vocabulary."""
    POS = "pos"
    NER = "ner"
    SO = "so"
    OO = "oo"


# ============================================================================
# Sentences
# ============================================================================

class Sentence(BaseModel):
    """One training example with its span annotations and parse."""

    model_config = ConfigDict(frozen=True)

    tokens: list[str] = Field(..., min_length=1, description="Sentence tokens")
    subj_span: tuple[int, int] = Field(..., description="Inclusive 0-based subject span")
    obj_span: tuple[int, int] = Field(..., description="Inclusive 0-based object span")
    subj_type: str = Field(..., min_length=1, description="Subject entity type")
    obj_type: str = Field(..., min_length=1, description="Object entity type")
    pos_tags: list[str] = Field(..., description="POS tag per token")
    ner_tags: list[str] = Field(..., description="NER tag per token")
    dep_heads: list[int] = Field(..., description="1-based dependency heads, 0 = root")
    relation: str = Field(..., min_length=1, description="Relation label")
    id: Optional[str] = Field(None, description="Source record identifier")
    dep_rels: Optional[list[str]] = Field(None, description="Dependency relation labels")

    @model_validator(mode="after")
    def check_spans_and_lengths(self) -> "Sentence":
        n = len(self.tokens)
        for name in ("pos_tags", "ner_tags", "dep_heads"):
            if len(getattr(self, name)) != n:
                raise ValueError(f"{name} has length {len(getattr(self, name))}, expected {n}")
        if self.dep_rels is not None and len(self.dep_rels) != n:
            raise ValueError(f"dep_rels has length {len(self.dep_rels)}, expected {n}")
        for name, (start, end) in (("subj_span", self.subj_span), ("obj_span", self.obj_span)):
            if not 0 <= start <= end < n:
                raise ValueError(f"{name} ({start}, {end}) out of range for {n} tokens")
        s_start, s_end = self.subj_span
        o_start, o_end = self.obj_span
        if s_start <= o_end and o_start <= s_end:
            raise ValueError("subject and object spans overlap")
        return self

    @property
    def n(self) -> int:
        return len(self.tokens)

    @property
    def is_negative(self) -> bool:
        return self.relation == NO_RELATION

    def subj_indices(self) -> range:
        return range(self.subj_span[0], self.subj_span[1] + 1)

    def obj_indices(self) -> range:
        return range(self.obj_span[0], self.obj_span[1] + 1)

    @property
    def subj_token(self) -> str:
        return SUBJ_PREFIX + self.subj_type

    @property
    def obj_token(self) -> str:
        return OBJ_PREFIX + self.obj_type


class Dataset(BaseModel):
    """A non-empty list of sentences belonging to one split."""

    sentences: list[Sentence] = Field(..., min_length=1, description="Sentences")
    split: Split = Field(..., description="Split name")

    def __len__(self) -> int:
        return len(self.sentences)

    def relation_counts(self) -> Counter:
        return Counter(s.relation for s in self.sentences)

    def negative_fraction(self) -> float:
        return sum(1 for s in self.sentences if s.is_negative) / len(self.sentences)


# ============================================================================
# Vocabulary
# ============================================================================

class Vocab(BaseModel):
    """
    Token, relation and attribute index maps.

    Tokens reserve PAD=0 and UNK=1. Attributes are namespaced
    (``pos:NN``, ``ner:PERSON``, ``so:-3``, ``oo:2``) and reserve the same
    two leading slots.
    """

    tokens: list[str] = Field(..., min_length=2, description="Index → token")
    relations: list[str] = Field(..., min_length=1, description="Index → relation")
    attributes: list[str] = Field(..., min_length=2, description="Index → namespaced attribute")
    max_offset: int = Field(..., ge=0, description="Positional offsets are clipped to ±max_offset")

    _token_ids: dict[str, int] = PrivateAttr(default_factory=dict)
    _relation_ids: dict[str, int] = PrivateAttr(default_factory=dict)
    _attribute_ids: dict[str, int] = PrivateAttr(default_factory=dict)

    @model_validator(mode="after")
    def check_dense(self) -> "Vocab":
        for name in ("tokens", "relations", "attributes"):
            values = getattr(self, name)
            if len(set(values)) != len(values):
                raise ValueError(f"duplicate entries in {name}")
        if self.tokens[PAD_ID] != PAD_TOKEN or self.tokens[UNK_ID] != UNK_TOKEN:
            raise ValueError("token map must start with PAD, UNK")
        if self.attributes[PAD_ID] != PAD_TOKEN or self.attributes[UNK_ID] != UNK_TOKEN:
            raise ValueError("attribute map must start with PAD, UNK")
        return self

    def model_post_init(self, __context) -> None:
        self._token_ids = {t: i for i, t in enumerate(self.tokens)}
        self._relation_ids = {r: i for i, r in enumerate(self.relations)}
        self._attribute_ids = {a: i for i, a in enumerate(self.attributes)}

    @property
    def n_tokens(self) -> int:
        return len(self.tokens)

    @property
    def n_relations(self) -> int:
        return len(self.relations)

    @property
    def n_attributes(self) -> int:
        return len(self.attributes)

    def encode_token(self, token: str) -> int:
        return self._token_ids.get(token, UNK_ID)

    def encode_tokens(self, tokens: list[str]) -> list[int]:
        return [self._token_ids.get(t, UNK_ID) for t in tokens]

    def decode_token(self, index: int) -> str:
        return self.tokens[index]

    def has_token(self, token: str) -> bool:
        return token in self._token_ids

    def token_id(self, token: str) -> int:
        """Index of a token that must be in the vocabulary."""
        try:
            return self._token_ids[token]
        except KeyError:
            raise EncodingError(f"Token not in vocabulary: {token}", token=token) from None

    def relation_id(self, relation: str) -> int:
        try:
            return self._relation_ids[relation]
        except KeyError:
            raise EncodingError(f"Unknown relation: {relation}", relation=relation) from None

    def attribute_id(self, kind: AttributeKind, value: str) -> int:
        return self._attribute_ids.get(f"{kind.value}:{value}", UNK_ID)

    def offset_id(self, kind: AttributeKind, offset: int) -> int:
        clipped = max(-self.max_offset, min(self.max_offset, offset))
        return self._attribute_ids.get(f"{kind.value}:{clipped}", UNK_ID)

    def fingerprint(self) -> str:
        return compute_content_hash(self.model_dump())


# ============================================================================
# Answer sets
# ============================================================================

class AnswerEntry(BaseModel):
    """Valid object types for one (subject type, relation) question."""
    subj_type: int = Field(..., ge=0, description="Token index of SUBJ-<type>")
    relation: int = Field(..., ge=0, description="Relation index")
    objects: list[int] = Field(..., min_length=1, description="Token indices of OBJ-<type>, sorted")


class AnswerSets(BaseModel):
    """Knowledge graph questions (s_type, r, ?) and their answer sets."""

    candidate_domain: list[int] = Field(..., description="Ordered OBJ-<type> token indices")
    entries: list[AnswerEntry] = Field(default_factory=list, description="Answer sets by key")
    include_negative_relation: bool = Field(True, description="Whether NoRelation triples were kept")

    _lookup: dict[tuple[int, int], frozenset[int]] = PrivateAttr(default_factory=dict)
    _position: dict[int, int] = PrivateAttr(default_factory=dict)

    @model_validator(mode="after")
    def check_subsets(self) -> "AnswerSets":
        domain = set(self.candidate_domain)
        if len(domain) != len(self.candidate_domain):
            raise ValueError("candidate domain has duplicates")
        for entry in self.entries:
            if not set(entry.objects) <= domain:
                raise ValueError(
                    f"answer set for ({entry.subj_type}, {entry.relation}) leaves the candidate domain"
                )
        return self

    def model_post_init(self, __context) -> None:
        self._lookup = {(e.subj_type, e.relation): frozenset(e.objects) for e in self.entries}
        self._position = {token: p for p, token in enumerate(self.candidate_domain)}

    def __getitem__(self, key: tuple[int, int]) -> frozenset[int]:
        return self._lookup[key]

    def __contains__(self, key: tuple[int, int]) -> bool:
        return key in self._lookup

    def __len__(self) -> int:
        return len(self._lookup)

    def get(self, key: tuple[int, int], default: frozenset[int] = frozenset()) -> frozenset[int]:
        return self._lookup.get(key, default)

    def keys(self) -> Iterator[tuple[int, int]]:
        return iter(self._lookup)

    @property
    def domain_size(self) -> int:
        return len(self.candidate_domain)

    def domain_position(self, token_index: int) -> int:
        return self._position[token_index]

    def fingerprint(self) -> str:
        return compute_content_hash(self.model_dump())


# ============================================================================
# Synthetic corpus specification
# ============================================================================

class TemplateToken(BaseModel):
    """One template position; ``word`` may be the SUBJ/OBJ slot marker."""
    word: str = Field(..., min_length=1)
    pos: str = Field(..., min_length=1)
    head: int = Field(..., ge=0, description="1-based head within the template, 0 = root")


class SentenceTemplate(BaseModel):
    """A fixed-parse sentence frame expressing one relation."""

    relation: str = Field(..., description="Relation expressed, or NoRelation")
    tokens: list[TemplateToken] = Field(..., min_length=2)

    @model_validator(mode="after")
    def check_slots(self) -> "SentenceTemplate":
        words = [t.word for t in self.tokens]
        if words.count(SUBJ_SLOT) != 1 or words.count(OBJ_SLOT) != 1:
            raise ValueError("template needs exactly one subject slot and one object slot")
        n = len(self.tokens)
        if any(t.head > n for t in self.tokens):
            raise ValueError("template head index out of range")
        if sum(1 for t in self.tokens if t.head == 0) != 1:
            raise ValueError("template parse needs exactly one root")
        return self


class TypeConstraint(BaseModel):
    """A legal (subject type, relation, object type) combination."""
    subj_type: str
    relation: str
    obj_type: str


class SyntheticSpec(BaseModel):
    """Everything needed to generate a typed synthetic RE corpus."""

    entity_types: dict[str, list[str]] = Field(
        ..., min_length=1, description="Entity type → surface mentions (space-separated tokens)"
    )
    relations: list[str] = Field(..., min_length=1, description="Positive relation labels")
    constraints: list[TypeConstraint] = Field(default_factory=list, description="Legal triples")
    templates: list[SentenceTemplate] = Field(..., min_length=1, description="Sentence frames")
    negative_fraction: float = Field(0.6, ge=0.0, lt=1.0, description="Fraction of NoRelation sentences")
    train_size: int = Field(200, ge=1)
    dev_size: int = Field(50, ge=1)
    test_size: int = Field(50, ge=1)

    @model_validator(mode="after")
    def check_references(self) -> "SyntheticSpec":
        for c in self.constraints:
            if c.subj_type not in self.entity_types or c.obj_type not in self.entity_types:
                raise ValueError(f"constraint references unknown type: {c}")
            if c.relation not in self.relations:
                raise ValueError(f"constraint references unknown relation: {c.relation}")
        for mentions in self.entity_types.values():
            if not mentions or any(not m.split() for m in mentions):
                raise ValueError("every entity type needs non-empty mentions")
        return self
