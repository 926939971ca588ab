"""Recall@K evaluation in both retrieval directions, plus Mean Recall.

Gold truth is a strict bijection between text ids and image ids (the
corpus is pairwise aligned, so multi-gold variants are unnecessary). A
query counts as a hit at K when its gold partner appears at rank <= K
under the deterministic ranking rule of the retrieval module. Mean Recall
is the arithmetic mean of R@1/5/10 over both directions.

Also houses the consistency check over the published benchmark rows
shipped in data/published_results.tsv: the stated Mean Recall of every
row must match the mean of its six recalls within the one-decimal
rounding slack.
"""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources

import numpy as np

from .errors import (
    DuplicateIdError,
    MalformedLineError,
    MissingGoldError,
)
from .retrieval import DEFAULT_BLOCK, RetrievalIndex

EVAL_KS = (1, 5, 10)

# One-decimal table values: a stated mean can differ from the recomputed
# mean by up to 0.05; the 1e-9 guard absorbs binary rounding of the sum.
MR_SLACK = 0.05
MR_GUARD = 1e-9


@dataclass(frozen=True)
class GoldMapping:
    """Bijection text_id <-> image_id for the evaluation split."""

    text_to_image: dict

    def __post_init__(self):
        images = list(self.text_to_image.values())
        if len(set(images)) != len(images):
            raise DuplicateIdError("gold mapping maps two texts to one image")

    @property
    def image_to_text(self) -> dict:
        return {v: k for k, v in self.text_to_image.items()}

    def __len__(self) -> int:
        return len(self.text_to_image)


def load_gold(path) -> GoldMapping:
    """Parse a gold file of tab-separated text_id image_id lines."""
    mapping: dict = {}
    with open(path, "r", encoding="utf-8") as handle:
        for line_no, line in enumerate(handle, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                raise MalformedLineError("blank line in gold file", line_no)
            parts = line.split("\t")
            if len(parts) != 2 or not parts[0] or not parts[1]:
                raise MalformedLineError("expected text_id<TAB>image_id", line_no)
            text_id, image_id = parts
            if text_id in mapping:
                raise DuplicateIdError(f"text id {text_id!r} repeated", line_no, text_id)
            mapping[text_id] = image_id
    return GoldMapping(text_to_image=mapping)


def recall_at_k(ranked, gold: dict, k: int) -> float:
    """Percentage of queries whose gold candidate appears at rank <= k.

    ranked maps each query id to its candidate ids in rank order; gold
    maps each query id to its single correct candidate.
    """
    if k < 1:
        raise ValueError(f"K must be >= 1, got {k}")
    if not ranked:
        raise MissingGoldError("no queries to evaluate")
    hits = 0
    for query_id, candidates in ranked.items():
        if query_id not in gold:
            raise MissingGoldError(f"query {query_id!r} has no gold entry")
        if gold[query_id] in list(candidates)[:k]:
            hits += 1
    return 100.0 * hits / len(ranked)


def mean_recall(recalls) -> float:
    """Arithmetic mean of the six directional recalls."""
    values = [float(v) for v in recalls]
    if len(values) != 6:
        raise ValueError(f"expected six recall values, got {len(values)}")
    return sum(values) / 6.0


@dataclass(frozen=True)
class RecallReport:
    t2i_r1: float
    t2i_r5: float
    t2i_r10: float
    i2t_r1: float
    i2t_r5: float
    i2t_r10: float
    mr: float

    FIELDS = ("t2i_r1", "t2i_r5", "t2i_r10", "i2t_r1", "i2t_r5", "i2t_r10", "mr")

    def machine_lines(self) -> str:
        """Full-precision key<TAB>value lines in stable order."""
        return "".join(f"{k}\t{getattr(self, k)!r}\n" for k in self.FIELDS)

    def render_table(self) -> str:
        """Human table, one-decimal fixed point."""
        rows = [
            "direction  R@1    R@5    R@10",
            f"t2i        {self.t2i_r1:<6.1f} {self.t2i_r5:<6.1f} {self.t2i_r10:<6.1f}",
            f"i2t        {self.i2t_r1:<6.1f} {self.i2t_r5:<6.1f} {self.i2t_r10:<6.1f}",
            f"mean recall {self.mr:.1f}",
        ]
        return "\n".join(rows) + "\n"


def gold_ranks(index: RetrievalIndex, gold: GoldMapping, direction: str,
               block: int = DEFAULT_BLOCK) -> dict:
    """Rank of each query's gold candidate, computed in query blocks.

    The rank is 1 + (candidates scoring strictly higher) + (equal scorers
    with a smaller id), identical to the position a full sorted list
    would give under the tie rule.
    """
    if direction == "t2i":
        pairs = sorted(gold.text_to_image.items())
        positions = [index.text_position(q) for q, _ in pairs]
        candidate_ids = np.asarray(index.image_ids, dtype=object)
        gold_positions = [index.image_position(c) for _, c in pairs]
        score_block = index.scores_for_texts
    elif direction == "i2t":
        pairs = sorted(gold.image_to_text.items())
        positions = [index.image_position(q) for q, _ in pairs]
        candidate_ids = np.asarray(index.text_ids, dtype=object)
        gold_positions = [index.text_position(c) for _, c in pairs]
        score_block = index.scores_for_images
    else:
        raise ValueError(f"direction must be t2i or i2t, got {direction!r}")
    if not pairs:
        raise MissingGoldError("gold mapping is empty")

    ranks: dict = {}
    for start in range(0, len(pairs), block):
        stop = min(start + block, len(pairs))
        scores = score_block(positions[start:stop])
        for row, pair_idx in enumerate(range(start, stop)):
            query_id, gold_id = pairs[pair_idx]
            row_scores = scores[row]
            gold_score = row_scores[gold_positions[pair_idx]]
            higher = int(np.sum(row_scores > gold_score))
            tied = np.flatnonzero(row_scores == gold_score)
            before = sum(1 for t in tied if candidate_ids[t] < gold_id)
            ranks[query_id] = 1 + higher + before
    return ranks


def recalls_from_ranks(ranks: dict, ks) -> list:
    """R@k percentages from a query -> gold-rank mapping."""
    values = np.asarray(sorted(ranks.values()))
    return [100.0 * float(np.sum(values <= k)) / len(values) for k in ks]


def evaluate_split(index: RetrievalIndex, gold: GoldMapping, ks=EVAL_KS,
                   block: int = DEFAULT_BLOCK) -> RecallReport:
    """Run both directions over all gold pairs and fill the report."""
    if tuple(ks) != EVAL_KS:
        raise ValueError(f"report shape is fixed to Ks {EVAL_KS}")
    for text_id, image_id in gold.text_to_image.items():
        index.text_position(text_id)
        index.image_position(image_id)
    t2i = recalls_from_ranks(gold_ranks(index, gold, "t2i", block), ks)
    i2t = recalls_from_ranks(gold_ranks(index, gold, "i2t", block), ks)
    six = t2i + i2t
    return RecallReport(
        t2i_r1=six[0], t2i_r5=six[1], t2i_r10=six[2],
        i2t_r1=six[3], i2t_r5=six[4], i2t_r10=six[5],
        mr=mean_recall(six),
    )


@dataclass(frozen=True)
class PublishedRow:
    """One benchmark row: six recalls plus the stated Mean Recall."""

    setting: str
    model: str
    recalls: tuple
    mr: float

    def check(self, slack: float = MR_SLACK):
        """Returns (recomputed mean, passes) at the given slack."""
        recomputed = mean_recall(self.recalls)
        return recomputed, abs(recomputed - self.mr) <= slack + MR_GUARD


_FIXTURE_COLUMNS = ("setting", "model", "t2i_r1", "t2i_r5", "t2i_r10",
                    "i2t_r1", "i2t_r5", "i2t_r10", "mr")


def load_published_rows(path=None) -> list:
    """Read benchmark rows from a TSV; defaults to the bundled fixtures."""
    if path is None:
        text = resources.files("laclip").joinpath("data/published_results.tsv").read_text("utf-8")
    else:
        with open(path, "r", encoding="utf-8") as handle:
            text = handle.read()
    lines = text.splitlines()
    if not lines or tuple(lines[0].split("\t")) != _FIXTURE_COLUMNS:
        raise MalformedLineError(f"fixture header must be {_FIXTURE_COLUMNS}", 1)
    rows = []
    for line_no, line in enumerate(lines[1:], start=2):
        parts = line.split("\t")
        if len(parts) != len(_FIXTURE_COLUMNS):
            raise MalformedLineError(f"expected {len(_FIXTURE_COLUMNS)} columns", line_no)
        try:
            numbers = [float(p) for p in parts[2:]]
        except ValueError:
            raise MalformedLineError("non-numeric recall value", line_no) from None
        rows.append(PublishedRow(setting=parts[0], model=parts[1],
                                 recalls=tuple(numbers[:6]), mr=numbers[6]))
    return rows


def check_published_consistency(rows=None, slack: float = MR_SLACK) -> list:
    """(row, recomputed mean, ok) for every benchmark row."""
    if rows is None:
        rows = load_published_rows()
    return [(row, *row.check(slack)) for row in rows]
