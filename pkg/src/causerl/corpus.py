"""Data layer: causal-statement conversion, the synthetic corpus generator,
fold construction and JSONL persistence.

External statement resources:

* GLU-SPE / GLU-GEN / ATOMIC carry exactly one ``>relation>`` marker that is
  spliced into a comma, with the second clause's first alphabetic character
  lowercased unless its first token is a placeholder containing ``_``.
* DISTANT and SYNTH statements pass through, gaining only a terminal period.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from causerl.encoders import Vocabulary
from causerl.errors import (
    InvalidSpecError,
    MarkerNotFoundError,
    MultipleMarkersError,
    ParseError,
    SpanOutOfRangeError,
    TooFewDocumentsError,
)

RESOURCES = ("GLU-SPE", "GLU-GEN", "ATOMIC", "DISTANT", "SYNTH")
_MARKER_RESOURCES = ("GLU-SPE", "GLU-GEN", "ATOMIC")
_MARKER_RE = re.compile(r"\s*>[^>]+>\s*")


@dataclass
class CausalStatement:
    resource: str
    original: str
    converted: str
    token_ids: list[int] | None = None


@dataclass
class EventPairExample:
    doc_id: str
    tokens: list[str]
    span_e1: tuple[int, int]
    span_e2: tuple[int, int]
    label: int
    fold_id: int = -1
    token_ids: list[int] | None = None

    def validate(self) -> None:
        n = len(self.tokens)
        s1, e1 = self.span_e1
        s2, e2 = self.span_e2
        if not (0 <= s1 < e1 <= n and 0 <= s2 < e2 <= n):
            raise SpanOutOfRangeError(
                f"spans {self.span_e1}/{self.span_e2} in length {n}")
        if s1 < e2 and s2 < e1:
            raise SpanOutOfRangeError("event spans overlap")
        if self.label not in (0, 1):
            raise ValueError(f"label must be 0 or 1, got {self.label}")


def tokenize(text: str) -> list[str]:
    """Lowercased whitespace/punctuation tokenization."""
    return re.findall(r"[\w']+|[^\w\s]", text.lower())


def detokenize(tokens: list[str]) -> str:
    out = []
    for tok in tokens:
        if tok in (",", ".") or not out:
            out.append(tok)
        else:
            out.append(" " + tok)
    return "".join(out)


def _ensure_period(text: str) -> str:
    return text if text.endswith(".") else text + "."


def convert_statement(original: str, resource: str) -> str:
    """Rewrite an external causal statement into plain-sentence form.

    Idempotent: feeding a converted form back in returns it unchanged.
    """
    if resource not in RESOURCES:
        raise ValueError(f"unknown resource {resource!r}")
    if resource not in _MARKER_RESOURCES:
        return _ensure_period(original)

    matches = list(_MARKER_RE.finditer(original))
    if len(matches) > 1:
        raise MultipleMarkersError(f"{len(matches)} relation markers in {original!r}")
    if not matches:
        # a converted form has its marker already spliced into a comma
        if "," in original:
            return _ensure_period(original)
        raise MarkerNotFoundError(f"no >relation> marker in {original!r}")

    pre = original[:matches[0].start()]
    post = original[matches[0].end():]
    first_token = post.split(maxsplit=1)[0] if post.split() else ""
    if "_" not in first_token:
        chars = list(post)
        for i, c in enumerate(chars):
            if c.isalpha():
                chars[i] = c.lower()
                break
        post = "".join(chars)
    return _ensure_period(f"{pre}, {post}")


# ---------------------------------------------------------------------------
# synthetic corpus


@dataclass
class SyntheticSpec:
    vocab_size: int = 200
    n_patterns: int = 20
    n_external_statements: int = 400
    n_eci_examples: int = 600
    pattern_overlap: float = 0.8
    noise_rate: float = 0.05
    seed: int = 0
    examples_per_doc: int = 5
    n_topics: int = 10

    def __post_init__(self):
        if not 0.0 <= self.pattern_overlap <= 1.0:
            raise InvalidSpecError(f"pattern_overlap {self.pattern_overlap} not in [0,1]")
        if not 0.0 <= self.noise_rate < 1.0:
            raise InvalidSpecError(f"noise_rate {self.noise_rate} not in [0,1)")
        if self.n_patterns < 2:
            raise InvalidSpecError("need at least 2 causal patterns")
        if self.vocab_size < 8 * max(2, int(np.ceil(np.sqrt(self.n_patterns)))):
            raise InvalidSpecError(f"vocab_size {self.vocab_size} too small "
                                   f"for {self.n_patterns} patterns")
        if min(self.n_external_statements, self.n_eci_examples) < 2:
            raise InvalidSpecError("statement and example counts must be >= 2")
        if self.examples_per_doc < 1 or self.n_topics < 1:
            raise InvalidSpecError("examples_per_doc and n_topics must be >= 1")


_SYLLABLES = ["ba", "co", "da", "fe", "gi", "ho", "ju", "ka", "li", "mo",
              "nu", "pe", "qui", "ro", "sa", "te", "vi", "wo", "xa", "zu"]


def _make_words(rng: np.random.Generator, count: int) -> list[str]:
    words: list[str] = []
    seen = set()
    while len(words) < count:
        n_syl = int(rng.integers(2, 4))
        w = "".join(_SYLLABLES[int(rng.integers(len(_SYLLABLES)))]
                    for _ in range(n_syl))
        if w not in seen:
            seen.add(w)
            words.append(w)
    return words


@dataclass
class SyntheticCorpus:
    statements: list[CausalStatement]
    examples: list[EventPairExample]
    spec: SyntheticSpec


def generate_synthetic(spec: SyntheticSpec) -> SyntheticCorpus:
    """Build a planted-pattern corpus.

    Each causal pattern is a (cause-verb, effect-verb) pair realized as
    "<agent> <cause-verb> <object>, <agent> <effect-verb> <object>.".
    External statements instantiate a "seen" subset of patterns; ECI
    positives instantiate patterns with the two verbs as event spans, with
    ``pattern_overlap`` controlling how many positives use seen patterns.
    Negatives mix verbs across patterns or swap clause order.
    """
    rng = np.random.default_rng(spec.seed)
    # one shared verb pool: any verb can fill either clause, so clause order
    # relative to the planted ordered pair is the only causal signal and the
    # hard negatives cannot be solved by lexical identity alone
    n_verbs = max(3, 2 * int(np.ceil(np.sqrt(spec.n_patterns))))
    n_fill = spec.vocab_size - n_verbs - 1  # minus "the"
    n_agents = n_fill // 2
    pool = _make_words(rng, spec.vocab_size - 1)
    verbs = pool[:n_verbs]
    agents = pool[n_verbs:n_verbs + n_agents]
    objects = pool[n_verbs + n_agents:]

    # ordered verb pairs; no pattern is another pattern's reverse, so a
    # clause-swapped instance is always a true negative
    unordered = [(i, j) for i in range(n_verbs) for j in range(i + 1, n_verbs)]
    chosen = rng.choice(len(unordered), size=spec.n_patterns, replace=False)
    patterns = []
    for idx in sorted(chosen.tolist()):
        i, j = unordered[idx]
        if rng.random() < 0.5:
            i, j = j, i
        patterns.append((verbs[i], verbs[j]))
    pattern_set = set(patterns)
    # each pattern prefers a small object subset; instances of a pattern are
    # object-consistent while mixed/swapped negatives draw objects freely,
    # so pattern membership shows up as verb-object co-occurrence rather
    # than as the presence of any single token
    n_pref = max(2, len(objects) // 8)
    preferred = {p: rng.choice(len(objects), size=n_pref, replace=False)
                 for p in patterns}
    n_seen = max(1, spec.n_patterns // 2)
    seen_idx = sorted(rng.permutation(spec.n_patterns)[:n_seen].tolist())
    seen = [patterns[i] for i in seen_idx]
    unseen = [patterns[i] for i in range(spec.n_patterns) if i not in seen_idx]

    def noun_phrase(pattern=None) -> list[str]:
        if pattern is not None:
            head = objects[int(preferred[pattern][
                int(rng.integers(len(preferred[pattern])))])]
        else:
            head = objects[int(rng.integers(len(objects)))]
        return ["the", head] if rng.random() < 0.5 else [head]

    def realize(cv: str, ev: str, swap_clauses: bool = False, pattern=None):
        agent = agents[int(rng.integers(len(agents)))]
        first, second = (ev, cv) if swap_clauses else (cv, ev)
        tokens = [agent, first, *noun_phrase(pattern), ",", agent, second,
                  *noun_phrase(pattern), "."]
        v1 = tokens.index(first, 1)
        v2 = tokens.index(second, tokens.index(",") + 1)
        return tokens, (v1, v1 + 1), (v2, v2 + 1)

    statements = []
    for i in range(spec.n_external_statements):
        pattern = seen[i % len(seen)]
        tokens, _, _ = realize(*pattern, pattern=pattern)
        text = detokenize(tokens)
        statements.append(CausalStatement("SYNTH", text,
                                          convert_statement(text, "SYNTH")))

    n_pos = spec.n_eci_examples // 2
    n_neg = spec.n_eci_examples - n_pos
    n_from_seen = int(round(spec.pattern_overlap * n_pos))

    raw: list[tuple[list[str], tuple, tuple, int]] = []
    for i in range(n_pos):
        source = seen if i < n_from_seen else (unseen or seen)
        pattern = source[int(rng.integers(len(source)))]
        tokens, s1, s2 = realize(*pattern, pattern=pattern)
        raw.append((tokens, s1, s2, 1))
    for i in range(n_neg):
        if i % 2 == 0:  # verbs drawn from two different patterns
            while True:
                cv = patterns[int(rng.integers(spec.n_patterns))][0]
                ev = patterns[int(rng.integers(spec.n_patterns))][1]
                if cv != ev and (cv, ev) not in pattern_set:
                    break
            tokens, s1, s2 = realize(cv, ev)
        else:  # clause order swapped: effect clause first
            cv, ev = patterns[int(rng.integers(spec.n_patterns))]
            tokens, s1, s2 = realize(cv, ev, swap_clauses=True)
        raw.append((tokens, s1, s2, 0))

    order = rng.permutation(len(raw))
    examples = []
    for pos, take in enumerate(order):
        tokens, s1, s2, label = raw[take]
        if rng.random() < spec.noise_rate:
            label = 1 - label
        doc = pos // spec.examples_per_doc
        doc_id = f"t{doc % spec.n_topics:02d}_d{doc:04d}"
        ex = EventPairExample(doc_id, tokens, s1, s2, label)
        ex.validate()
        examples.append(ex)
    return SyntheticCorpus(statements, examples, spec)


def pseudo_examples_from_statements(statements: list[CausalStatement]
                                    ) -> list[EventPairExample]:
    """Turn external statements into pseudo-positive ECI examples, taking the
    word after each clause-initial token as the predicate (a POS-free
    approximation). Used by the statements-as-training-data ablation."""
    out = []
    for i, stmt in enumerate(statements):
        tokens = tokenize(stmt.converted)
        if "," not in tokens:
            continue
        comma = tokens.index(",")
        clause2 = comma + 1
        e1 = 1 if comma > 1 else 0
        e2 = clause2 + 1 if len(tokens) > clause2 + 1 else clause2
        if e2 >= len(tokens) or e1 >= comma:
            continue
        ex = EventPairExample(f"ext_{i:05d}", tokens, (e1, e1 + 1),
                              (e2, e2 + 1), 1)
        try:
            ex.validate()
        except (SpanOutOfRangeError, ValueError):
            continue
        out.append(ex)
    return out


# ---------------------------------------------------------------------------
# folds


@dataclass
class FoldPlan:
    k: int
    dev: list[str]
    folds: list[list[str]]

    def fold_of(self, doc_id: str) -> int:
        for i, fold in enumerate(self.folds):
            if doc_id in fold:
                return i
        return -1

    def to_json(self) -> dict:
        return {"k": self.k, "dev": self.dev, "folds": self.folds}

    @classmethod
    def from_json(cls, doc: dict) -> "FoldPlan":
        return cls(doc["k"], list(doc["dev"]), [list(f) for f in doc["folds"]])

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), sort_keys=True))

    @classmethod
    def load(cls, path) -> "FoldPlan":
        return cls.from_json(json.loads(Path(path).read_text()))


def make_folds(examples: list[EventPairExample], k: int, seed: int,
               dev_topics: int = 2) -> FoldPlan:
    """Partition documents into k near-equal folds.

    When document ids carry a topic prefix ("<topic>_<doc>"), the last
    ``dev_topics`` topics are held out as the development set and appear in
    no fold; ids without the prefix yield an empty dev set.
    """
    if k < 2:
        raise ValueError(f"k must be >= 2, got {k}")
    doc_ids = sorted({ex.doc_id for ex in examples})
    topics = sorted({d.split("_")[0] for d in doc_ids if "_" in d})
    dev_docs: list[str] = []
    if len(topics) > dev_topics:
        dev_set = set(topics[-dev_topics:])
        dev_docs = [d for d in doc_ids if "_" in d and d.split("_")[0] in dev_set]
    remaining = [d for d in doc_ids if d not in set(dev_docs)]
    if len(remaining) < k:
        raise TooFewDocumentsError(f"{len(remaining)} documents for {k} folds")

    rng = np.random.default_rng(seed)
    shuffled = [remaining[i] for i in rng.permutation(len(remaining))]
    folds = [sorted(part.tolist()) for part in
             np.array_split(np.array(shuffled, dtype=object), k)]
    return FoldPlan(k, dev_docs, folds)


# ---------------------------------------------------------------------------
# persistence


def save_statements_jsonl(path, statements: list[CausalStatement]) -> None:
    with open(path, "w") as fh:
        for s in statements:
            fh.write(json.dumps({"resource": s.resource, "original": s.original,
                                 "converted": s.converted}, sort_keys=True) + "\n")


def load_statements_jsonl(path) -> list[CausalStatement]:
    out = []
    for lineno, obj in _iter_jsonl(path):
        try:
            out.append(CausalStatement(obj["resource"], obj["original"],
                                       obj["converted"]))
        except (KeyError, TypeError) as exc:
            raise ParseError(f"bad statement record: {exc}", lineno)
    return out


def save_examples_jsonl(path, examples: list[EventPairExample]) -> None:
    with open(path, "w") as fh:
        for ex in examples:
            fh.write(json.dumps({
                "doc_id": ex.doc_id, "tokens": ex.tokens,
                "e1": list(ex.span_e1), "e2": list(ex.span_e2),
                "label": ex.label,
            }, sort_keys=True) + "\n")


def load_examples_jsonl(path) -> list[EventPairExample]:
    out = []
    for lineno, obj in _iter_jsonl(path):
        try:
            ex = EventPairExample(obj["doc_id"], list(obj["tokens"]),
                                  tuple(obj["e1"]), tuple(obj["e2"]),
                                  int(obj["label"]))
            ex.validate()
        except (KeyError, TypeError, ValueError, SpanOutOfRangeError) as exc:
            raise ParseError(f"bad example record: {exc}", lineno)
        out.append(ex)
    return out


def _iter_jsonl(path):
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                yield lineno, json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(str(exc), lineno)


# ---------------------------------------------------------------------------
# vocabulary mapping


def build_vocabulary(statements: list[CausalStatement],
                     examples: list[EventPairExample]) -> Vocabulary:
    tokens: set[str] = set()
    for s in statements:
        tokens.update(tokenize(s.converted))
    for ex in examples:
        tokens.update(t.lower() for t in ex.tokens)
    return Vocabulary.from_tokens(tokens)


def encode_corpus(statements: list[CausalStatement],
                  examples: list[EventPairExample],
                  vocab: Vocabulary) -> None:
    """Fill token_ids in place on statements and examples."""
    for s in statements:
        s.token_ids = vocab.encode(tokenize(s.converted))
    for ex in examples:
        ex.token_ids = vocab.encode([t.lower() for t in ex.tokens])
