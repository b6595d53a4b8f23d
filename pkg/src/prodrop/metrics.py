"""Precision/recall/F for pronoun recovery and micro-F for discourse parsing."""

from dataclasses import dataclass

from .corpus import NONE_LABEL
from .errors import ValidationError


@dataclass
class DprCounts:
    true_positive: int = 0
    predicted_non_none: int = 0
    gold_non_none: int = 0

    def update(self, predictions, golds, none=NONE_LABEL):
        if len(predictions) != len(golds):
            raise ValidationError(
                f"prediction length {len(predictions)} != gold length {len(golds)}")
        for p, g in zip(predictions, golds):
            self.predicted_non_none += p != none
            self.gold_non_none += g != none
            self.true_positive += p == g != none
        return self

    def __add__(self, other):
        return DprCounts(self.true_positive + other.true_positive,
                         self.predicted_non_none + other.predicted_non_none,
                         self.gold_non_none + other.gold_non_none)

    def prf(self):
        p = self.true_positive / self.predicted_non_none if self.predicted_non_none else 0.0
        r = self.true_positive / self.gold_non_none if self.gold_non_none else 0.0
        f = 2 * p * r / (p + r) if p + r else 0.0
        return p, r, f


@dataclass
class CdpCounts:
    arcs_correct: int = 0
    rels_correct: int = 0
    total_dependents: int = 0

    def update(self, pred_heads, pred_rels, gold_heads, gold_rels):
        if not len(pred_heads) == len(gold_heads) == len(pred_rels) == len(gold_rels):
            raise ValidationError("predicted and gold graphs differ in size")
        for ph, pr, gh, gr in zip(pred_heads, pred_rels, gold_heads, gold_rels):
            self.total_dependents += 1
            self.arcs_correct += ph == gh
            self.rels_correct += ph == gh and pr == gr
        return self

    def __add__(self, other):
        return CdpCounts(self.arcs_correct + other.arcs_correct,
                         self.rels_correct + other.rels_correct,
                         self.total_dependents + other.total_dependents)

    def f_scores(self):
        if not self.total_dependents:
            return 0.0, 0.0
        return (self.arcs_correct / self.total_dependents,
                self.rels_correct / self.total_dependents)


def dpr_metrics(predictions, golds):
    """Return (P, R, F); a true positive is a matching non-"None" label."""
    return DprCounts().update(predictions, golds).prf()


def cdp_metrics(predicted, gold):
    """Micro arc/relation F over aligned sequences of (heads, relations) graphs.

    Each graph is a pair ``(heads, relations)``.  Every dependent has one
    predicted and one gold head, so micro P = R = F = accuracy.  A relation
    counts only when its arc is also correct, so rel F never exceeds arc F.
    """
    counts = CdpCounts()
    if len(predicted) != len(gold):
        raise ValidationError("predicted and gold graph sets differ in size")
    for (ph, pr), (gh, gr) in zip(predicted, gold):
        counts.update(ph, pr, gh, gr)
    return counts.f_scores()


def snippet_graph(snippet):
    return ([u.disc_head for u in snippet.utterances],
            [u.disc_relation for u in snippet.utterances])


def evaluate_snippets(predicted, gold):
    """Full report comparing predicted snippets against gold ones (matched by id)."""
    by_id = {s.id: s for s in predicted}
    dpr, cdp = DprCounts(), CdpCounts()
    for g in gold:
        try:
            p = by_id[g.id]
        except KeyError:
            raise ValidationError(f"no prediction for snippet {g.id!r}") from None
        if len(p.utterances) != len(g.utterances) or p.pro_drop_index != g.pro_drop_index:
            raise ValidationError(f"snippet {g.id!r}: predicted structure does not match gold")
        dpr.update([t.pronoun_label for t in p.target.tokens],
                   [t.pronoun_label for t in g.target.tokens])
        cdp.update(*snippet_graph(p), *snippet_graph(g))
    return report(dpr, cdp)


def report(dpr, cdp):
    p, r, f = dpr.prf()
    arc, rel = cdp.f_scores()
    return {"dpr_p": p, "dpr_r": r, "dpr_f": f, "arc_f": arc, "rel_f": rel}


def format_report(metrics):
    return "\n".join(f"{k}={v:.6f}" for k, v in metrics.items())
