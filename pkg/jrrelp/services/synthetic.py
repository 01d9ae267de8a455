"""
Synthetic typed relation-extraction corpora.

Sentences are realized from fixed-parse templates, so every generated
sentence carries POS, NER and dependency annotations without a parser.
"""

import logging

import numpy as np

from jrrelp.errors import GenerationError
from jrrelp.schemas.corpus import (
    NO_RELATION,
    OBJ_SLOT,
    SUBJ_SLOT,
    Dataset,
    Sentence,
    SentenceTemplate,
    Split,
    SyntheticSpec,
    TemplateToken,
    TypeConstraint,
)

logger = logging.getLogger(__name__)

ENTITY_POOL: dict[str, list[str]] = {
    "PERSON": ["John Doe", "Mary", "Ana Lopez", "Wei Chen", "Omar", "Jane Smith"],
    "CITY": ["Miami", "Paris", "Osaka", "Lagos", "New York", "Lima"],
    "ORGANIZATION": ["Acme Corp", "Globex", "Initech", "Umbrella", "Hooli", "Vandelay"],
    "COUNTRY": ["France", "Peru", "Japan", "Nigeria", "Canada", "Chile"],
    "DATE": ["1999", "May 2004", "2012", "June 1987", "2020", "1975"],
    "TITLE": ["chairman", "senator", "professor", "director", "editor", "coach"],
    "NUMBER": ["twelve", "forty", "three", "ninety", "seven", "eighty"],
    "RELIGION": ["Buddhist", "Catholic", "Hindu", "Muslim", "Jewish", "Sikh"],
}

RELATION_POOL = [
    "LivesIn", "WorksFor", "BornIn", "FoundedBy", "LocatedIn",
    "MemberOf", "SpouseOf", "HeadquartersIn", "CitizenOf", "EmployeeCount",
]

TRIGGER_POOL = [
    "lives", "works", "born", "founded", "located", "joined", "married", "based",
    "moved", "leads", "grew", "settled", "served", "started", "belongs", "resides",
    "operates", "raised", "hired", "built", "runs", "chairs", "visits", "owns",
]
NEGATIVE_TRIGGERS = ["mentioned", "met", "saw", "discussed", "called", "praised"]
PREPOSITIONS = ["in", "for", "at", "by", "with", "of"]
FILLERS = ["yesterday", "recently", "reportedly", "again", "today", "quietly"]

# Fixed parse shapes: (words with slot markers, POS tags, 1-based heads).
SHAPES: list[tuple[list[str], list[str], list[int]]] = [
    ([SUBJ_SLOT, "{verb}", "{prep}", OBJ_SLOT], ["NNP", "VBD", "IN", "NNP"], [2, 0, 4, 2]),
    ([SUBJ_SLOT, "{filler}", "{verb}", OBJ_SLOT, "{filler2}"], ["NNP", "RB", "VBD", "NNP", "RB"], [3, 3, 0, 3, 3]),
    (["the", "{verb}", "{prep}", OBJ_SLOT, "is", SUBJ_SLOT], ["DT", "NN", "IN", "NNP", "VBZ", "NNP"], [2, 5, 4, 2, 0, 5]),
    ([OBJ_SLOT, "was", "{verb}", "{prep}", SUBJ_SLOT], ["NNP", "VBD", "VBN", "IN", "NNP"], [3, 3, 0, 5, 3]),
]


def _template(relation: str, shape_index: int, verb: str, prep: str, filler: str, filler2: str) -> SentenceTemplate:
    words, tags, heads = SHAPES[shape_index % len(SHAPES)]
    fills = {"{verb}": verb, "{prep}": prep, "{filler}": filler, "{filler2}": filler2}
    tokens = [
        TemplateToken(word=fills.get(w, w), pos=p, head=h)
        for w, p, h in zip(words, tags, heads)
    ]
    return SentenceTemplate(relation=relation, tokens=tokens)


def default_synthetic_spec(
    num_entity_types: int = 4,
    num_relations: int = 5,
    templates_per_relation: int = 3,
    negative_fraction: float = 0.6,
    train_size: int = 200,
    dev_size: int = 50,
    test_size: int = 50,
    seed: int = 0,
) -> SyntheticSpec:
    """
    A strongly type-constrained spec: every relation admits one subject type
    and one or two object types. The first template of every relation uses a
    shared trigger, so only the entity types tell those sentences apart.
    """
    if num_entity_types < 2 or num_relations < 1:
        raise GenerationError("need at least two entity types and one relation")
    rng = np.random.default_rng(seed)

    type_names = list(ENTITY_POOL)[:num_entity_types]
    type_names += [f"TYPE{k}" for k in range(len(type_names), num_entity_types)]
    entity_types = {
        name: ENTITY_POOL.get(name, [f"ent{k}x{name.lower()}" for k in range(6)])
        for name in type_names
    }
    relations = RELATION_POOL[:num_relations]
    relations += [f"Rel{k}" for k in range(len(relations), num_relations)]

    constraints = []
    for relation in relations:
        subj_type = type_names[int(rng.integers(len(type_names)))]
        others = [t for t in type_names if t != subj_type]
        n_objects = 1 + int(rng.integers(2))
        for obj_index in rng.permutation(len(others))[:n_objects]:
            constraints.append(TypeConstraint(subj_type=subj_type, relation=relation, obj_type=others[obj_index]))

    templates = []
    for r_index, relation in enumerate(relations):
        for t in range(templates_per_relation):
            verb = "has" if t == 0 else TRIGGER_POOL[(r_index * templates_per_relation + t) % len(TRIGGER_POOL)]
            templates.append(
                _template(
                    relation,
                    shape_index=r_index + t,
                    verb=verb,
                    prep=PREPOSITIONS[(r_index + t) % len(PREPOSITIONS)],
                    filler=FILLERS[t % len(FILLERS)],
                    filler2=FILLERS[(t + r_index + 1) % len(FILLERS)],
                )
            )
    for t, verb in enumerate(NEGATIVE_TRIGGERS):
        templates.append(
            _template(
                NO_RELATION,
                shape_index=t,
                verb=verb,
                prep=PREPOSITIONS[t % len(PREPOSITIONS)],
                filler=FILLERS[t % len(FILLERS)],
                filler2=FILLERS[(t + 2) % len(FILLERS)],
            )
        )

    return SyntheticSpec(
        entity_types=entity_types,
        relations=relations,
        constraints=constraints,
        templates=templates,
        negative_fraction=negative_fraction,
        train_size=train_size,
        dev_size=dev_size,
        test_size=test_size,
    )


def realize_template(
    template: SentenceTemplate,
    subj_type: str,
    subj_mention: str,
    obj_type: str,
    obj_mention: str,
    sentence_id: str,
) -> Sentence:
    """Fill the slots of a template; multi-token mentions attach to their last token."""
    words: list[str] = []
    pos: list[str] = []
    ner: list[str] = []
    head_token: list[int] = []
    spans: dict[str, tuple[int, int]] = {}

    for tok in template.tokens:
        if tok.word in (SUBJ_SLOT, OBJ_SLOT):
            entity_type, mention = (subj_type, subj_mention) if tok.word == SUBJ_SLOT else (obj_type, obj_mention)
            parts = mention.split()
            start = len(words)
            words.extend(parts)
            pos.extend([tok.pos] * len(parts))
            ner.extend([entity_type] * len(parts))
            spans[tok.word] = (start, len(words) - 1)
            head_token.append(len(words) - 1)
        else:
            head_token.append(len(words))
            words.append(tok.word)
            pos.append(tok.pos)
            ner.append("O")

    heads = [0] * len(words)
    for t_index, tok in enumerate(template.tokens):
        own = head_token[t_index]
        heads[own] = 0 if tok.head == 0 else head_token[tok.head - 1] + 1
        if tok.word in spans:
            start, end = spans[tok.word]
            for j in range(start, end):
                heads[j] = end + 1

    return Sentence(
        tokens=words,
        subj_span=spans[SUBJ_SLOT],
        obj_span=spans[OBJ_SLOT],
        subj_type=subj_type,
        obj_type=obj_type,
        pos_tags=pos,
        ner_tags=ner,
        dep_heads=heads,
        relation=template.relation,
        id=sentence_id,
    )


def _generate_split(
    spec: SyntheticSpec,
    split: Split,
    size: int,
    rng: np.random.Generator,
    legal: list[TypeConstraint],
    by_relation: dict[str, list[SentenceTemplate]],
) -> Dataset:
    type_names = sorted(spec.entity_types)
    n_negative = int(round(size * spec.negative_fraction))
    labels = np.array([True] * n_negative + [False] * (size - n_negative))
    labels = labels[rng.permutation(size)]

    sentences = []
    for i, negative in enumerate(labels.tolist()):
        if negative:
            subj_type = type_names[int(rng.integers(len(type_names)))]
            obj_type = type_names[int(rng.integers(len(type_names)))]
            candidates = by_relation[NO_RELATION]
        else:
            triple = legal[int(rng.integers(len(legal)))]
            subj_type, obj_type = triple.subj_type, triple.obj_type
            candidates = by_relation[triple.relation]
        template = candidates[int(rng.integers(len(candidates)))]
        subj_pool = spec.entity_types[subj_type]
        obj_pool = spec.entity_types[obj_type]
        sentences.append(
            realize_template(
                template,
                subj_type,
                subj_pool[int(rng.integers(len(subj_pool)))],
                obj_type,
                obj_pool[int(rng.integers(len(obj_pool)))],
                sentence_id=f"{split.value}-{i:05d}",
            )
        )
    return Dataset(sentences=sentences, split=split)


def generate_synthetic(spec: SyntheticSpec, seed: int) -> tuple[Dataset, Dataset, Dataset]:
    """
    Generate train/dev/test splits, deterministic under ``seed``.

    Raises:
        GenerationError: no legal triple has a template, or negatives are
            requested without NoRelation templates
    """
    by_relation: dict[str, list[SentenceTemplate]] = {}
    for template in spec.templates:
        by_relation.setdefault(template.relation, []).append(template)

    legal = [c for c in spec.constraints if c.relation in by_relation]
    if not legal:
        raise GenerationError("specification admits no legal triple with a template")
    if spec.negative_fraction > 0 and NO_RELATION not in by_relation:
        raise GenerationError("negative_fraction > 0 but no NoRelation template is defined")

    rng = np.random.default_rng(seed)
    splits = (
        _generate_split(spec, Split.TRAIN, spec.train_size, rng, legal, by_relation),
        _generate_split(spec, Split.DEV, spec.dev_size, rng, legal, by_relation),
        _generate_split(spec, Split.TEST, spec.test_size, rng, legal, by_relation),
    )
    logger.info(
        f"Generated synthetic corpus (seed={seed}): "
        f"{spec.train_size}/{spec.dev_size}/{spec.test_size} sentences, "
        f"{len(legal)} legal triples"
    )
    return splits
