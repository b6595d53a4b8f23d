"""Joint objective, Adam, the epoch loop, checkpoints and the alpha/beta sweep."""

import csv
import dataclasses
import json
import logging
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .biaffine import arc_loss, rel_loss
from .config import TrainConfig
from .corpus import LabelVocabularies, Vocab
from .errors import DomainError, NumericalError, ValidationError
from .metrics import CdpCounts, DprCounts, report
from .model import JointModel
from .recovery import dpr_loss

log = logging.getLogger(__name__)

FORMAT_VERSION = 1
DEFAULT_RATIOS = (0.25, 0.5, 0.75, 1.0, 1.25)
LOG_FIELDS = ("epoch", "loss", "loss_arc", "loss_rel", "loss_dp",
              "dpr_p", "dpr_r", "dpr_f", "arc_f", "rel_f")
ADAM_BETA1, ADAM_BETA2, ADAM_EPS = 0.9, 0.999, 1e-8


def param_groups(params):
    """Map group name to parameter paths, used by gradient checks and freezing."""
    def pick(pred):
        return [p for p in params if pred(p)]

    arc = ("biaffine.arc_head.", "biaffine.arc_dep.", "biaffine.U_arc", "biaffine.u_arc")
    rel = ("biaffine.rel_head.", "biaffine.rel_dep.", "biaffine.U_rel",
           "biaffine.W_rel_", "biaffine.b_rel")
    groups = {
        "embedding": pick(lambda p: p == "encoder.embedding"),
        "gru": pick(lambda p: p.startswith(("encoder.fwd.", "encoder.bwd."))),
        "syngcn": pick(lambda p: p.startswith("syngcn.")),
        "root": pick(lambda p: p == "utterance.root"),
        "biaffine_arc": pick(lambda p: p.startswith(arc)),
        "biaffine_rel": pick(lambda p: p.startswith(rel)),
        "relgcn": pick(lambda p: p.startswith("relgcn.")),
        "fusion": pick(lambda p: p.startswith("fusion.")),
        "recovery": pick(lambda p: p.startswith("recovery.")),
    }
    return {name: paths for name, paths in groups.items() if paths}


def cdp_parameter_paths(params):
    """Biaffine scorers plus RelGCN relation embeddings/transforms."""
    return [p for p in params
            if p.startswith("biaffine.") or p == "relgcn.rel_emb" or p.endswith(".W_rel")]


# ----------------------------------------------------------------------------
# objective and optimizer


def joint_loss(model, prep, training=False, rng=None, alpha=None, beta=None):
    """``alpha * (loss_arc + loss_rel) + beta * loss_dp`` from one forward pass.

    Returns the loss tensor and the float value of each part.
    """
    cfg = model.config
    alpha = cfg.alpha if alpha is None else alpha
    beta = cfg.beta if beta is None else beta
    out = model.forward(prep, training=training, rng=rng, use_gold_arcs=True)
    la = arc_loss(out.arc_probs, prep.gold_heads, cfg.reduction)
    lr = rel_loss(out.rel_probs, prep.gold_rels, prep.gold_heads, cfg.reduction)
    ld = dpr_loss(out.dp_probs, prep.gold_labels, cfg.reduction)
    loss = (la + lr) * alpha + ld * beta
    return loss, {"arc": la.item(), "rel": lr.item(), "dp": ld.item()}


@dataclass
class AdamState:
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    t: int = 0


def adam_step(params, state, lr, frozen=()):
    """One bias-corrected Adam update of every tensor in ``params`` not in ``frozen``."""
    state.t += 1
    t = state.t
    c1 = 1.0 - ADAM_BETA1 ** t
    c2 = 1.0 - ADAM_BETA2 ** t
    for path, p in params.items():
        if path in frozen:
            continue
        g = p.grad
        m = state.m.get(path)
        if m is None:
            m = state.m[path] = np.zeros_like(p.data)
            state.v[path] = np.zeros_like(p.data)
        v = state.v[path]
        m *= ADAM_BETA1
        m += (1.0 - ADAM_BETA1) * g
        v *= ADAM_BETA2
        v += (1.0 - ADAM_BETA2) * g * g
        p.data -= lr * (m / c1) / (np.sqrt(v / c2) + ADAM_EPS)


# ----------------------------------------------------------------------------
# checkpoints


@dataclass
class Checkpoint:
    config: TrainConfig
    word_vocab: list
    vocabs: LabelVocabularies
    params: dict
    adam: AdamState
    epoch: int
    rng_state: dict
    metrics: dict = field(default_factory=dict)

    @classmethod
    def capture(cls, model, adam, epoch, rng, metrics=None):
        return cls(
            config=model.config,
            word_vocab=model.word_vocab.to_list(),
            vocabs=model.vocabs,
            params=model.params.state_dict(),
            adam=AdamState({k: v.copy() for k, v in adam.m.items()},
                           {k: v.copy() for k, v in adam.v.items()}, adam.t),
            epoch=epoch,
            rng_state=rng.bit_generator.state,
            metrics=dict(metrics or {}),
        )

    def build_model(self):
        model = JointModel(Vocab(self.word_vocab), self.vocabs,
                           dataclasses.replace(self.config, embeddings=""))
        model.config = self.config
        model.params.load_state_dict(self.params)
        return model

    def restore_rng(self):
        rng = np.random.default_rng()
        rng.bit_generator.state = self.rng_state
        return rng

    def save(self, path):
        meta = {
            "format_version": FORMAT_VERSION,
            "config": self.config.to_dict(),
            "word_vocab": self.word_vocab,
            "vocabs": self.vocabs.to_dict(),
            "epoch": self.epoch,
            "adam_t": self.adam.t,
            "rng_state": self.rng_state,
            "metrics": self.metrics,
        }
        arrays = {"meta": np.array(json.dumps(meta))}
        arrays.update({f"param:{k}": v for k, v in self.params.items()})
        arrays.update({f"adam_m:{k}": v for k, v in self.adam.m.items()})
        arrays.update({f"adam_v:{k}": v for k, v in self.adam.v.items()})
        with open(path, "wb") as fh:
            np.savez(fh, **arrays)

    @classmethod
    def load(cls, path):
        with np.load(path, allow_pickle=False) as data:
            meta = json.loads(str(data["meta"]))
            if meta.get("format_version") != FORMAT_VERSION:
                raise ValidationError(
                    f"unsupported checkpoint format {meta.get('format_version')!r}")

            def section(prefix):
                return {k[len(prefix):]: data[k].copy() for k in data.files
                        if k.startswith(prefix)}

            params = section("param:")
            adam = AdamState(section("adam_m:"), section("adam_v:"), meta["adam_t"])
        return cls(
            config=TrainConfig.from_dict(meta["config"]),
            word_vocab=meta["word_vocab"],
            vocabs=LabelVocabularies.from_dict(meta["vocabs"]),
            params=params,
            adam=adam,
            epoch=meta["epoch"],
            rng_state=meta["rng_state"],
            metrics=meta["metrics"],
        )


# ----------------------------------------------------------------------------
# training


@dataclass
class TrainResult:
    best: Checkpoint
    last: Checkpoint
    log: list


def split_validation(n, fraction, seed):
    """Deterministic (train, validation) index split holding out ``fraction``."""
    order = np.random.default_rng([seed, 2]).permutation(n)
    n_val = int(round(n * fraction)) if n > 1 else 0
    return np.sort(order[n_val:]), np.sort(order[:n_val])


def evaluate_model(model, preps):
    dpr, cdp = DprCounts(), CdpCounts()
    labels = model.vocabs.pronoun_labels
    relations = model.vocabs.relations
    for prep in preps:
        graph, predicted = model.predict(prep)
        dpr.update([labels[i] for i in predicted], [labels[i] for i in prep.gold_labels])
        cdp.update(graph.chosen_heads, [relations[r] for r in graph.relations],
                   prep.gold_heads.tolist(), [relations[r] for r in prep.gold_rels])
    return report(dpr, cdp)


def selection_score(config, metrics):
    return metrics["dpr_f"] if config.beta > 0 else metrics["arc_f"]


def train(corpus, config, resume=None, progress=None):
    """Train on ``corpus`` and return the best and last checkpoints plus the log.

    Snippets form the unit of optimization (``batch_size`` snippets per
    Adam step).  The held-out ``val_fraction`` selects the best checkpoint;
    with no held-out snippets the training snippets are used.
    """
    config.validate()
    if len(corpus) == 0:
        raise ValidationError("cannot train on an empty corpus")
    if resume is not None:
        model = resume.build_model()
        model.config = config
        adam = resume.adam
        rng = resume.restore_rng()
        start = resume.epoch
    else:
        model = JointModel.from_corpus(corpus, config)
        adam = AdamState()
        rng = np.random.default_rng([config.seed, 1])
        start = 0
    preps = [model.prepare(s) for s in corpus.snippets]
    train_idx, val_idx = split_validation(len(preps), config.val_fraction, config.seed)
    train_preps = [preps[i] for i in train_idx]
    eval_preps = [preps[i] for i in val_idx] or train_preps
    cdp_paths = set(cdp_parameter_paths(model.params))

    last = best = resume if resume is not None else Checkpoint.capture(model, adam, 0, rng)
    best_score = selection_score(config, best.metrics) if best.metrics else -1.0
    rows = []
    for epoch in range(start, config.epochs):
        totals = {"loss": 0.0, "arc": 0.0, "rel": 0.0, "dp": 0.0}
        frozen = cdp_paths if config.freeze_cdp and epoch >= config.freeze_after else ()
        order = rng.permutation(len(train_preps))
        for lo in range(0, len(order), config.batch_size):
            batch = order[lo:lo + config.batch_size]
            model.params.zero_grad()
            for i in batch:
                prep = train_preps[i]
                try:
                    # overflow surfaces as NumericalError from the tensor ops
                    with np.errstate(over="ignore", invalid="ignore"):
                        loss, parts = joint_loss(model, prep, training=True, rng=rng)
                        ad.backward(loss * (1.0 / len(batch)))
                except (NumericalError, DomainError) as exc:
                    raise NumericalError(
                        f"training diverged at epoch {epoch + 1}, snippet "
                        f"{prep.snippet.id!r}: {exc}") from exc
                totals["loss"] += loss.item()
                for key, value in parts.items():
                    totals[key] += value
            adam_step(model.params, adam, config.lr, frozen)
        n = len(train_preps)
        metrics = evaluate_model(model, eval_preps)
        row = {"epoch": epoch + 1, "loss": totals["loss"] / n, "loss_arc": totals["arc"] / n,
               "loss_rel": totals["rel"] / n, "loss_dp": totals["dp"] / n, **metrics}
        if not np.isfinite(row["loss"]):
            raise NumericalError(f"training diverged at epoch {epoch + 1}")
        rows.append(row)
        last = Checkpoint.capture(model, adam, epoch + 1, rng, metrics)
        score = selection_score(config, metrics)
        if score >= best_score:
            best, best_score = last, score
        log.info("epoch %d loss %.6f dpr_f %.4f arc_f %.4f rel_f %.4f", epoch + 1,
                 row["loss"], metrics["dpr_f"], metrics["arc_f"], metrics["rel_f"])
        if progress is not None:
            progress(row)
    return TrainResult(best, last, rows)


def write_log(rows, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(LOG_FIELDS)
        for row in rows:
            writer.writerow([repr(row[k]) if isinstance(row[k], float) else row[k]
                             for k in LOG_FIELDS])


# ----------------------------------------------------------------------------
# alpha/beta interaction


SWEEP_FIELDS = ("ratio", "alpha", "beta", "dpr_f", "arc_f", "rel_f")


def interaction_sweep(corpus, config, ratios=DEFAULT_RATIOS):
    """Train one model per alpha:beta ratio (beta fixed at 1) with a shared seed."""
    rows = []
    for ratio in ratios:
        if ratio < 0:
            raise ValidationError(f"ratio must be non-negative, got {ratio}")
        cfg = dataclasses.replace(config, alpha=float(ratio), beta=1.0)
        result = train(corpus, cfg)
        metrics = result.best.metrics
        rows.append({"ratio": float(ratio), "alpha": cfg.alpha, "beta": cfg.beta,
                     "dpr_f": metrics.get("dpr_f", 0.0), "arc_f": metrics.get("arc_f", 0.0),
                     "rel_f": metrics.get("rel_f", 0.0)})
    return rows


def write_sweep(rows, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=SWEEP_FIELDS)
        writer.writeheader()
        writer.writerows(rows)
