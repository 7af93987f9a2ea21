"""Ranked cross-modal retrieval and its summary metrics.

Candidates are ordered by descending score; equal scores break toward the
lower candidate index, so rankings are reproducible. Ranks are 1-based and
always refer to the best-ranked ground-truth candidate of a query.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DataValidationError, ShapeMismatchError
from .matrix_io import DatasetManifest, check_matrix

RECALL_KS = (1, 5, 10)


@dataclass(frozen=True)
class RankingResult:
    query_id: str
    candidate_ids: tuple[str, ...]
    rank_of_first_truth: int | None


@dataclass(frozen=True)
class TaskMetrics:
    recall_at: dict[int, float]
    median_rank: float
    mean_rank: float
    ranks: np.ndarray = field(repr=False)


def rank(
    queries,
    candidates,
    scorer,
    query_ids=None,
    candidate_ids=None,
    truth=None,
    exclude=None,
):
    """Order candidates for every query; returns a list of RankingResult.

    scorer maps (queries, candidates) to a score matrix; -inf marks pairs
    that can never match. truth maps query id to a non-empty set of candidate
    ids and fills rank_of_first_truth (1-based); without it the field is None.
    exclude maps query id to candidate ids dropped from that query's list.
    """
    Q = check_matrix(queries, "queries")
    C = check_matrix(candidates, "candidates")
    nq, nc = Q.shape[0], C.shape[0]
    if query_ids is None:
        query_ids = [str(i) for i in range(nq)]
    if candidate_ids is None:
        candidate_ids = [str(i) for i in range(nc)]
    if len(query_ids) != nq or len(candidate_ids) != nc:
        raise ShapeMismatchError("id lists must match the row counts")
    if len(set(candidate_ids)) != nc:
        raise DataValidationError("candidate ids must be unique")

    scores = np.asarray(scorer(Q, C), dtype=np.float64)
    if scores.shape != (nq, nc):
        raise ShapeMismatchError(f"scorer returned shape {scores.shape}, expected {(nq, nc)}")
    if np.isnan(scores).any():
        raise DataValidationError("scores contain NaN")

    order = np.argsort(-scores, axis=1, kind="stable")
    cand = np.asarray(candidate_ids, dtype=object)
    results = []
    for i, qid in enumerate(query_ids):
        row = order[i]
        if exclude is not None and qid in exclude:
            dropped = exclude[qid]
            row = row[[cand[j] not in dropped for j in row]]
        ordered = tuple(cand[row])
        first = None
        if truth is not None:
            wanted = truth.get(qid)
            if not wanted:
                raise DataValidationError(f"query {qid!r} has no ground-truth candidates")
            first = next(
                (pos + 1 for pos, cid in enumerate(ordered) if cid in wanted), None
            )
            if first is None:
                raise DataValidationError(
                    f"no ground-truth candidate of query {qid!r} is present"
                )
        results.append(RankingResult(qid, ordered, first))
    return results


def metrics_from_ranks(ranks) -> TaskMetrics:
    """recall@{1,5,10}, lower median rank, and mean rank."""
    r = np.asarray(ranks)
    if r.ndim != 1 or r.size < 1 or (r < 1).any():
        raise DataValidationError("ranks must be a non-empty vector of 1-based ranks")
    recall = {k: float((r <= k).mean()) for k in RECALL_KS}
    ordered = np.sort(r)
    return TaskMetrics(
        recall_at=recall,
        median_rank=float(ordered[(r.size - 1) // 2]),
        mean_rank=float(r.mean()),
        ranks=r,
    )


def _first_truth_ranks(results) -> np.ndarray:
    return np.asarray([res.rank_of_first_truth for res in results])


def evaluate_annotation(
    image_vecs, image_ids, sentence_vecs, sentence_ids, manifest: DatasetManifest, scorer
) -> TaskMetrics:
    """Images query sentences; a query's truths are all its own sentences."""
    by_image = manifest.image_to_sentences()
    present = set(sentence_ids)
    truth = {}
    for image_id in image_ids:
        own = {s for s in by_image.get(image_id, ()) if s in present}
        if not own:
            raise DataValidationError(
                f"image {image_id!r} has no ground-truth sentence among the candidates"
            )
        truth[image_id] = own
    results = rank(image_vecs, sentence_vecs, scorer, image_ids, sentence_ids, truth)
    return metrics_from_ranks(_first_truth_ranks(results))


def evaluate_search(
    sentence_vecs, sentence_ids, image_vecs, image_ids, manifest: DatasetManifest, scorer
) -> TaskMetrics:
    """Sentences query images; each query has exactly one true image."""
    to_image = manifest.sentence_to_image()
    present = set(image_ids)
    truth = {}
    for sentence_id in sentence_ids:
        image_id = to_image.get(sentence_id)
        if image_id is None or image_id not in present:
            raise DataValidationError(
                f"sentence {sentence_id!r} has no ground-truth image among the candidates"
            )
        truth[sentence_id] = {image_id}
    results = rank(sentence_vecs, image_vecs, scorer, sentence_ids, image_ids, truth)
    return metrics_from_ranks(_first_truth_ranks(results))


def sentence_similarity_ranks(
    sentence_vecs, sentence_ids, manifest: DatasetManifest, scorer
) -> np.ndarray:
    """First-truth rank per sentence against its siblings, query excluded."""
    to_image = manifest.sentence_to_image()
    by_image = manifest.image_to_sentences()
    present = set(sentence_ids)
    truth = {}
    exclude = {}
    for sentence_id in sentence_ids:
        image_id = to_image.get(sentence_id)
        siblings = set() if image_id is None else {
            s for s in by_image[image_id] if s != sentence_id and s in present
        }
        if not siblings:
            raise DataValidationError(f"sentence {sentence_id!r} has no sibling sentences")
        truth[sentence_id] = siblings
        exclude[sentence_id] = {sentence_id}
    results = rank(
        sentence_vecs, sentence_vecs, scorer, sentence_ids, sentence_ids, truth, exclude
    )
    return _first_truth_ranks(results)


def evaluate_sentence_similarity(
    sentence_vecs, sentence_ids, manifest: DatasetManifest, scorer
) -> float:
    """Mean first-sibling rank; the single headline number for this task."""
    return float(sentence_similarity_ranks(sentence_vecs, sentence_ids, manifest, scorer).mean())
