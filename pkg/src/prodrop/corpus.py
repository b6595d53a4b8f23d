"""Conversation snippets, the JSON-lines corpus format, and synthetic data.

A corpus file holds one JSON object per line::

    {"id": ..., "pro_drop_index": 3,
     "utterances": [{"speaker": "A", "disc_head": 0, "disc_relation": "Root",
                     "tokens": [{"surface": "w1", "dep_head": 0,
                                 "dep_label": "root", "pronoun_label": "None"}]}]}

Utterance and token indices are 1-based; head 0 denotes the virtual root
(discourse) or the syntactic root (dependency).  ``pro_drop_index`` is the
1-based position of the target utterance whose dropped pronouns are
recovered; all other utterances form its context.
"""

import json
import random
from dataclasses import dataclass, field, replace

from .errors import ConfigError, ParseError, ValidationError

NONE_LABEL = "None"
ROOT_RELATION = "Root"
DEFAULT_RELATIONS = (
    "Agreement", "Understanding", "Directive", "Question",
    "Answer", "Feedback", "Expansion", "Contingency",
)
DEFAULT_NUM_PRONOUN_LABELS = 17
CONTEXT_BEFORE = 5
CONTEXT_AFTER = 2
CHAIN_LABEL = "dep"

_TOKEN_FIELDS = ("surface", "dep_head", "dep_label", "pronoun_label")
_UTTERANCE_FIELDS = ("speaker", "disc_head", "disc_relation", "tokens")
_SNIPPET_FIELDS = ("id", "pro_drop_index", "utterances")


@dataclass(frozen=True)
class Token:
    surface: str
    dep_head: int | None
    dep_label: str | None
    pronoun_label: str = NONE_LABEL


@dataclass(frozen=True)
class Utterance:
    speaker: str
    tokens: tuple
    disc_head: int
    disc_relation: str

    def __len__(self):
        return len(self.tokens)


@dataclass(frozen=True)
class ConversationSnippet:
    id: str
    utterances: tuple
    pro_drop_index: int

    @property
    def target(self):
        return self.utterances[self.pro_drop_index - 1]


class Vocab:
    """Ordered string-to-index mapping."""

    def __init__(self, items=()):
        self._items = []
        self._index = {}
        for item in items:
            self.add(item)

    def add(self, item):
        if item not in self._index:
            self._index[item] = len(self._items)
            self._items.append(item)
        return self._index[item]

    def index(self, item):
        return self._index[item]

    def get(self, item, default=None):
        return self._index.get(item, default)

    def __contains__(self, item):
        return item in self._index

    def __getitem__(self, i):
        return self._items[i]

    def __len__(self):
        return len(self._items)

    def __iter__(self):
        return iter(self._items)

    def __eq__(self, other):
        return isinstance(other, Vocab) and self._items == other._items

    def __repr__(self):
        return f"Vocab({self._items!r})"

    def to_list(self):
        return list(self._items)


@dataclass
class LabelVocabularies:
    """Pronoun labels ("None" at 0), relations ("Root" at 0), dependency labels."""

    pronoun_labels: Vocab = field(default_factory=lambda: Vocab([NONE_LABEL]))
    relations: Vocab = field(default_factory=lambda: Vocab([ROOT_RELATION]))
    dep_labels: Vocab = field(default_factory=Vocab)

    @classmethod
    def default(cls, n_pronoun_labels=DEFAULT_NUM_PRONOUN_LABELS):
        return cls(
            pronoun_labels=Vocab([NONE_LABEL] + synthetic_pronoun_names(n_pronoun_labels)),
            relations=Vocab((ROOT_RELATION,) + DEFAULT_RELATIONS),
        )

    @property
    def T(self):
        return len(self.pronoun_labels)

    def to_dict(self):
        return {
            "pronoun_labels": self.pronoun_labels.to_list(),
            "relations": self.relations.to_list(),
            "dep_labels": self.dep_labels.to_list(),
        }

    @classmethod
    def from_dict(cls, data):
        return cls(Vocab(data["pronoun_labels"]), Vocab(data["relations"]),
                   Vocab(data["dep_labels"]))


@dataclass(frozen=True)
class Corpus:
    snippets: tuple
    vocabs: LabelVocabularies

    def __len__(self):
        return len(self.snippets)

    def __iter__(self):
        return iter(self.snippets)


def synthetic_pronoun_names(n_labels):
    return [f"PRO{i:02d}" for i in range(1, n_labels)]


# ----------------------------------------------------------------------------
# validation


def chain_fallback_dependencies(utterance):
    """Attach token i to token i-1 (token 1 to the root) when no parse is given."""
    missing = [t.dep_head is None for t in utterance.tokens]
    if not any(missing):
        return utterance
    if not all(missing):
        raise ValidationError("utterance has partial dependency annotation")
    tokens = tuple(replace(t, dep_head=i, dep_label=CHAIN_LABEL)
                   for i, t in enumerate(utterance.tokens))
    return replace(utterance, tokens=tokens)


def validate_snippet(snippet, vocabs=None):
    """Raise :class:`ValidationError` naming the snippet if any invariant fails."""
    def fail(message):
        raise ValidationError(f"snippet {snippet.id!r}: {message}")

    m = len(snippet.utterances)
    if m == 0:
        fail("no utterances")
    if not 1 <= snippet.pro_drop_index <= m:
        fail(f"pro_drop_index {snippet.pro_drop_index} outside [1, {m}]")
    for i, utt in enumerate(snippet.utterances, start=1):
        if not utt.tokens:
            fail(f"utterance {i} has no tokens")
        if not 0 <= utt.disc_head < i:
            fail(f"utterance {i} has discourse head {utt.disc_head}; heads must precede")
        if (utt.disc_head == 0) != (utt.disc_relation == ROOT_RELATION):
            fail(f"utterance {i}: relation {utt.disc_relation!r} with head {utt.disc_head}")
        if vocabs is not None and utt.disc_relation not in vocabs.relations:
            fail(f"utterance {i}: unknown relation {utt.disc_relation!r}")
        n = len(utt.tokens)
        for k, tok in enumerate(utt.tokens, start=1):
            if tok.dep_head is None:
                fail(f"utterance {i} token {k} lacks a dependency head")
            if not 0 <= tok.dep_head <= n or tok.dep_head == k:
                fail(f"utterance {i} token {k} has invalid dependency head {tok.dep_head}")
            if vocabs is not None and tok.pronoun_label not in vocabs.pronoun_labels:
                fail(f"utterance {i} token {k}: unknown pronoun label {tok.pronoun_label!r}")


def build_vocabularies(snippets, exclude_dep_labels=()):
    """First-appearance vocabularies with "None" and "Root" pinned to index 0."""
    vocabs = LabelVocabularies()
    excluded = set(exclude_dep_labels)
    for snippet in snippets:
        for utt in snippet.utterances:
            vocabs.relations.add(utt.disc_relation)
            for tok in utt.tokens:
                vocabs.pronoun_labels.add(tok.pronoun_label)
                if tok.dep_label is not None and tok.dep_label not in excluded:
                    vocabs.dep_labels.add(tok.dep_label)
    return vocabs


# ----------------------------------------------------------------------------
# file format


def _require(record, fields, what, line):
    if not isinstance(record, dict):
        raise ParseError(f"{what} must be an object", line)
    keys = set(record)
    if keys != set(fields):
        missing = sorted(set(fields) - keys)
        extra = sorted(keys - set(fields))
        raise ParseError(f"{what} fields mismatch (missing {missing}, unexpected {extra})", line)


def _int(value, what, line, optional=False):
    if value is None and optional:
        return None
    if isinstance(value, bool) or not isinstance(value, int):
        raise ParseError(f"{what} must be an integer", line)
    return value


def _str(value, what, line, optional=False):
    if value is None and optional:
        return None
    if not isinstance(value, str):
        raise ParseError(f"{what} must be a string", line)
    return value


def snippet_from_record(record, line=None):
    _require(record, _SNIPPET_FIELDS, "snippet", line)
    utterances = []
    if not isinstance(record["utterances"], list):
        raise ParseError("utterances must be a list", line)
    for u in record["utterances"]:
        _require(u, _UTTERANCE_FIELDS, "utterance", line)
        if not isinstance(u["tokens"], list):
            raise ParseError("tokens must be a list", line)
        tokens = []
        for t in u["tokens"]:
            _require(t, _TOKEN_FIELDS, "token", line)
            tokens.append(Token(
                surface=_str(t["surface"], "surface", line),
                dep_head=_int(t["dep_head"], "dep_head", line, optional=True),
                dep_label=_str(t["dep_label"], "dep_label", line, optional=True),
                pronoun_label=_str(t["pronoun_label"], "pronoun_label", line),
            ))
        utterances.append(Utterance(
            speaker=_str(u["speaker"], "speaker", line),
            tokens=tuple(tokens),
            disc_head=_int(u["disc_head"], "disc_head", line),
            disc_relation=_str(u["disc_relation"], "disc_relation", line),
        ))
    return ConversationSnippet(
        id=_str(record["id"], "id", line),
        utterances=tuple(utterances),
        pro_drop_index=_int(record["pro_drop_index"], "pro_drop_index", line),
    )


def snippet_to_record(snippet):
    return {
        "id": snippet.id,
        "pro_drop_index": snippet.pro_drop_index,
        "utterances": [
            {
                "speaker": u.speaker,
                "disc_head": u.disc_head,
                "disc_relation": u.disc_relation,
                "tokens": [
                    {"surface": t.surface, "dep_head": t.dep_head,
                     "dep_label": t.dep_label, "pronoun_label": t.pronoun_label}
                    for t in u.tokens
                ],
            }
            for u in snippet.utterances
        ],
    }


def _finish(snippets, exclude_dep_labels, vocabs):
    checked = []
    for snippet in snippets:
        try:
            utts = tuple(chain_fallback_dependencies(u) for u in snippet.utterances)
        except ValidationError as exc:
            raise ValidationError(f"snippet {snippet.id!r}: {exc}") from None
        snippet = replace(snippet, utterances=utts)
        validate_snippet(snippet, vocabs)
        checked.append(snippet)
    if vocabs is None:
        vocabs = build_vocabularies(checked, exclude_dep_labels)
    return Corpus(tuple(checked), vocabs)


def parse_corpus(lines, exclude_dep_labels=(), vocabs=None):
    """Parse an iterable of JSON lines into a validated :class:`Corpus`."""
    snippets = []
    for number, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid JSON ({exc.msg})", number) from None
        snippets.append(snippet_from_record(record, number))
    return _finish(snippets, exclude_dep_labels, vocabs)


def load_corpus(path, exclude_dep_labels=(), vocabs=None):
    """Load and validate a corpus file.

    When ``vocabs`` is given (e.g. from a trained model) labels are checked
    against it instead of building fresh vocabularies from the file.
    """
    with open(path, encoding="utf-8") as fh:
        return parse_corpus(fh, exclude_dep_labels, vocabs)


def dumps_snippet(snippet):
    return json.dumps(snippet_to_record(snippet), ensure_ascii=False, separators=(",", ":"))


def save_corpus(snippets, path):
    if isinstance(snippets, Corpus):
        snippets = snippets.snippets
    with open(path, "w", encoding="utf-8") as fh:
        for snippet in snippets:
            fh.write(dumps_snippet(snippet))
            fh.write("\n")


# ----------------------------------------------------------------------------
# synthetic data

TASK_MODES = ("plain", "relation_coupled")
_DEP_LABELS = ("nsubj", "obj", "advmod", "amod", "nmod", "det", "mark", "compound")


@dataclass(frozen=True)
class SyntheticSpec:
    n_snippets: int = 20
    vocab_size: int = 50
    seed: int = 0
    task_mode: str = "plain"
    n_labels: int = DEFAULT_NUM_PRONOUN_LABELS

    def validate(self):
        if self.n_snippets < 1:
            raise ConfigError("n_snippets must be >= 1")
        if self.vocab_size < 10:
            raise ConfigError("vocab_size must be >= 10")
        if self.task_mode not in TASK_MODES:
            raise ConfigError(f"task_mode must be one of {TASK_MODES}")
        if self.n_labels < 2:
            raise ConfigError("n_labels must be >= 2")


def _attach_span(rng, lo, hi, parent, heads):
    """Attach tokens lo..hi (1-based, inclusive) as one projective subtree."""
    if lo > hi:
        return
    root = rng.randint(lo, hi)
    heads[root] = parent
    for a, b in ((lo, root - 1), (root + 1, hi)):
        start = a
        while start <= b:
            end = rng.randint(start, b)
            _attach_span(rng, start, end, root, heads)
            start = end + 1


def random_projective_heads(rng, n):
    heads = [0] * (n + 1)
    _attach_span(rng, 1, n, 0, heads)
    return heads[1:]


def relation_coupled_label(relation_index, pronoun_names):
    """Pronoun dropped before token 1 as a function of the relation index."""
    return pronoun_names[relation_index % len(pronoun_names)]


def generate_synthetic(spec):
    """Generate a deterministic synthetic corpus.

    ``plain``: each word carries a fixed pronoun label (a table keyed on word
    identity).  ``relation_coupled``: every utterance holds one cue word and
    one anchor word, a dependent also holds the reference word matching its
    head's anchor, an utterance's relation is determined by its head's cue,
    and the only dropped pronoun sits before token 1 and is a function of
    that relation.
    """
    spec.validate()
    rng = random.Random(spec.seed)
    pronouns = synthetic_pronoun_names(spec.n_labels)
    relations = (ROOT_RELATION,) + DEFAULT_RELATIONS
    coupled = spec.task_mode == "relation_coupled"
    n_cues = min(len(DEFAULT_RELATIONS), spec.vocab_size // 4) if coupled else 0
    cues = [f"c{i}" for i in range(n_cues)]
    anchors = [f"a{i}" for i in range(n_cues)]
    refs = [f"r{i}" for i in range(n_cues)]
    fillers = [f"w{i}" for i in range(spec.vocab_size - 3 * n_cues)]
    table = {w: (NONE_LABEL if rng.random() < 0.7 else rng.choice(pronouns)) for w in fillers}

    snippets = []
    for s in range(spec.n_snippets):
        m = rng.randint(2, CONTEXT_BEFORE + CONTEXT_AFTER + 1)
        target = rng.randint(max(1, m - CONTEXT_AFTER), min(m, CONTEXT_BEFORE + 1))
        heads = [0]
        for j in range(2, m + 1):
            r = rng.random()
            heads.append(0 if r < 0.1 else j - 1 if r < 0.7 else rng.randint(1, j - 1))
        if coupled:
            cue_of = [rng.randrange(n_cues) for _ in range(m)]
            anchor_of = (rng.sample(range(n_cues), m) if m <= n_cues
                         else [rng.randrange(n_cues) for _ in range(m)])
        utterances = []
        for j in range(1, m + 1):
            head = heads[j - 1]
            n = rng.randint(3 if coupled else 2, 10)
            words = [rng.choice(fillers) for _ in range(n)]
            if coupled:
                slots = rng.sample(range(n), 3)
                words[slots[0]] = cues[cue_of[j - 1]]
                words[slots[1]] = anchors[anchor_of[j - 1]]
                if head:
                    words[slots[2]] = refs[anchor_of[head - 1]]
            if head == 0:
                relation = ROOT_RELATION
            elif coupled:
                relation = DEFAULT_RELATIONS[cue_of[head - 1]]
            else:
                relation = rng.choice(DEFAULT_RELATIONS)
            dep_heads = random_projective_heads(rng, n)
            tokens = []
            for k, (w, h) in enumerate(zip(words, dep_heads), start=1):
                if coupled:
                    label = (relation_coupled_label(relations.index(relation), pronouns)
                             if k == 1 else NONE_LABEL)
                else:
                    label = table[w]
                tokens.append(Token(w, h, "root" if h == 0 else rng.choice(_DEP_LABELS), label))
            utterances.append(Utterance(rng.choice("AB"), tuple(tokens), head, relation))
        snippets.append(ConversationSnippet(
            f"syn-{spec.seed}-{s:04d}", tuple(utterances), target))
    return _finish(snippets, (), None)
