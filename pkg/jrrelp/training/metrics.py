"""RE scoring with NoRelation excluded, plus KGLP ranking diagnostics."""

from collections import Counter
from typing import Optional, Sequence

import torch

from jrrelp.errors import InputError
from jrrelp.schemas.reports import EvalReport, KGLPDiagnostics, RelationCounts

NO_RELATION_INDEX = 0


def _f1(precision: float, recall: float) -> float:
    if precision + recall <= 0.0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def _count(
    preds: Sequence[int],
    golds: Sequence[int],
    no_relation: int,
) -> tuple[Counter, Counter, Counter]:
    if len(preds) != len(golds):
        raise InputError(f"{len(preds)} predictions for {len(golds)} gold labels")
    correct: Counter = Counter()
    guessed: Counter = Counter()
    gold_counts: Counter = Counter()
    for gold, guess in zip(golds, preds):
        gold, guess = int(gold), int(guess)
        if guess != no_relation:
            guessed[guess] += 1
        if gold != no_relation:
            gold_counts[gold] += 1
        if gold != no_relation and gold == guess:
            correct[guess] += 1
    return correct, guessed, gold_counts


def _relation_counts(
    correct: Counter,
    guessed: Counter,
    gold_counts: Counter,
    labels: Optional[Sequence[str]],
) -> dict[str, RelationCounts]:
    counts = {}
    for relation in sorted(set(guessed) | set(gold_counts)):
        name = labels[relation] if labels is not None else str(relation)
        counts[name] = RelationCounts(
            tp=correct[relation],
            fp=guessed[relation] - correct[relation],
            fn=gold_counts[relation] - correct[relation],
        )
    return counts


def micro_prf(
    preds: Sequence[int],
    golds: Sequence[int],
    labels: Optional[Sequence[str]] = None,
    no_relation: int = NO_RELATION_INDEX,
) -> EvalReport:
    """
    Micro-averaged precision, recall and F1 over non-NoRelation labels.

    Precision is 0 when nothing but NoRelation is predicted.
    """
    correct, guessed, gold_counts = _count(preds, golds, no_relation)
    tp = sum(correct.values())
    n_guessed = sum(guessed.values())
    n_gold = sum(gold_counts.values())
    precision = tp / n_guessed if n_guessed else 0.0
    recall = tp / n_gold if n_gold else 0.0
    return EvalReport(
        precision=precision,
        recall=recall,
        f1=_f1(precision, recall),
        averaging="micro",
        counts=_relation_counts(correct, guessed, gold_counts, labels),
    )


def macro_prf(
    preds: Sequence[int],
    golds: Sequence[int],
    labels: Optional[Sequence[str]] = None,
    no_relation: int = NO_RELATION_INDEX,
) -> EvalReport:
    """
    Unweighted mean of per-relation precision, recall and F1 over every
    non-NoRelation class that is predicted or gold.
    """
    correct, guessed, gold_counts = _count(preds, golds, no_relation)
    classes = sorted(set(guessed) | set(gold_counts))
    if not classes:
        return EvalReport(precision=0.0, recall=0.0, f1=0.0, averaging="macro")
    precisions = [correct[c] / guessed[c] if guessed[c] else 0.0 for c in classes]
    recalls = [correct[c] / gold_counts[c] if gold_counts[c] else 0.0 for c in classes]
    f1s = [_f1(p, r) for p, r in zip(precisions, recalls)]
    return EvalReport(
        precision=sum(precisions) / len(classes),
        recall=sum(recalls) / len(classes),
        f1=sum(f1s) / len(classes),
        averaging="macro",
        counts=_relation_counts(correct, guessed, gold_counts, labels),
    )


def kglp_diagnostics(
    scores: torch.Tensor,
    targets: torch.Tensor,
    mask: Optional[torch.Tensor] = None,
) -> KGLPDiagnostics:
    """
    Filtered ranking metrics over candidate-domain scores.

    Every positive of a target row is one query. Other positives of the
    same row are filtered out; ties go to the lower candidate index, so
    rank = 1 + #(score > gold) + #(score == gold at a lower index).
    """
    scores = scores.detach()
    targets = targets.detach() > 0.5
    if mask is not None:
        scores = scores[mask]
        targets = targets[mask]

    ranks: list[int] = []
    n_candidates = scores.shape[-1] if scores.dim() == 2 else 0
    positions = torch.arange(n_candidates)
    for row_scores, row_targets in zip(scores, targets):
        for gold in torch.nonzero(row_targets).flatten().tolist():
            competitors = ~row_targets
            gold_score = row_scores[gold]
            higher = (row_scores > gold_score) & competitors
            tied_before = (row_scores == gold_score) & competitors & (positions < gold)
            ranks.append(1 + int(higher.sum()) + int(tied_before.sum()))

    if not ranks:
        return KGLPDiagnostics(hits_at_1=0.0, hits_at_10=0.0, mrr=0.0, num_queries=0)
    n = len(ranks)
    return KGLPDiagnostics(
        hits_at_1=sum(1 for r in ranks if r <= 1) / n,
        hits_at_10=sum(1 for r in ranks if r <= 10) / n,
        mrr=sum(1.0 / r for r in ranks) / n,
        num_queries=n,
    )
