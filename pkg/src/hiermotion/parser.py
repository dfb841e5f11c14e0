"""Rule-based semantic parsing of motion descriptions into hierarchical graphs.

The parser works from a verb lexicon plus pattern rules that map adverbs,
prepositional phrases and object noun phrases to semantic-role relations.  It
is deterministic and covers the templated toy corpus exactly; free text outside
the rules degrades to OTHERS-relation specifics rather than failing.
Only the first sentence of the input is parsed.
"""

from __future__ import annotations

import re

from .semgraph import (
    GraphEdge,
    GraphNode,
    GraphError,
    Level,
    Relation,
    SemanticGraph,
)


class NoVerbFound(GraphError):
    """The sentence contains no token from the verb lexicon."""


_WORD_RE = re.compile(r"[A-Za-z]+(?:'[A-Za-z]+)?")

# base verb -> inflected surface forms (all forms map back to the base)
_VERB_BASES: dict[str, tuple[str, ...]] = {
    "walk": ("walk", "walks", "walking", "walked"),
    "run": ("run", "runs", "running", "ran"),
    "jog": ("jog", "jogs", "jogging", "jogged"),
    "march": ("march", "marches", "marching", "marched"),
    "stroll": ("stroll", "strolls", "strolling", "strolled"),
    "pace": ("pace", "paces", "pacing", "paced"),
    "step": ("step", "steps", "stepping", "stepped"),
    "turn": ("turn", "turns", "turning", "turned"),
    "spin": ("spin", "spins", "spinning", "spun"),
    "rotate": ("rotate", "rotates", "rotating", "rotated"),
    "jump": ("jump", "jumps", "jumping", "jumped"),
    "hop": ("hop", "hops", "hopping", "hopped"),
    "leap": ("leap", "leaps", "leaping", "leapt", "leaped"),
    "stop": ("stop", "stops", "stopping", "stopped"),
    "stand": ("stand", "stands", "standing", "stood"),
    "pause": ("pause", "pauses", "pausing", "paused"),
    "wave": ("wave", "waves", "waving", "waved"),
    "pick": ("pick", "picks", "picking", "picked"),
    "raise": ("raise", "raises", "raising", "raised"),
    "lift": ("lift", "lifts", "lifting", "lifted"),
    "bend": ("bend", "bends", "bending", "bent"),
    "sit": ("sit", "sits", "sitting", "sat"),
    "kneel": ("kneel", "kneels", "kneeling", "knelt"),
    "crouch": ("crouch", "crouches", "crouching", "crouched"),
    "kick": ("kick", "kicks", "kicking", "kicked"),
    "stretch": ("stretch", "stretches", "stretching", "stretched"),
    "move": ("move", "moves", "moving", "moved"),
    "zig": ("zig", "zigs", "zigging", "zigged"),
    "zag": ("zag", "zags", "zagging", "zagged"),
    "zigzag": ("zigzag", "zigzags", "zigzagging", "zigzagged"),
}

VERB_FORMS: dict[str, str] = {
    form: base for base, forms in _VERB_BASES.items() for form in forms
}

# a verb-looking token preceded by one of these is a noun ("several steps")
_NOUN_CONTEXT = {
    "a", "an", "the", "both", "each", "every", "no", "several", "few", "many",
    "some", "one", "two", "three", "four", "five", "his", "her", "its", "their",
    "this", "that", "these", "those",
}

_DETERMINERS = {
    "a", "an", "the", "his", "her", "its", "their", "both", "one", "two",
    "three", "four", "five", "some", "several", "few", "many", "an",
}

_CONNECTORS = {"and", "then", "while", "before", "after"}

_MANNER_ADVERBS = {
    "quickly", "slowly", "fast", "swiftly", "rapidly", "briskly", "gradually",
    "carefully", "steadily", "gently", "smoothly", "still", "vigorously",
    "energetically", "calmly", "sharply",
}

_MISC_ADVERBS = {"casually", "confidently", "happily", "nervously", "gracefully",
                 "cautiously", "lazily"}

_TEMPORAL_ADVERBS = {"briefly", "momentarily", "again", "twice", "repeatedly"}

_DIRECTION_ADVERBS = {
    "forward", "forwards", "backward", "backwards", "ahead", "left", "right",
    "up", "down", "upward", "upwards", "downward", "downwards", "sideways",
    "around", "clockwise", "counterclockwise", "anticlockwise",
}

# verbs whose following "up"/"down" is a particle, not a direction
_PARTICLE_VERBS = {"pick", "raise", "lift"}

_SUBJECT_PRONOUNS = {"someone", "somebody", "he", "she", "they", "it"}

# fixed multiword phrases, longest first within each leading token
_PHRASE_PATTERNS: list[tuple[tuple[str, ...], Relation]] = [
    (("in", "a", "straight", "line"), Relation.ARGM_MNR),
    (("in", "a", "zigzag"), Relation.ARGM_MNR),
    (("in", "a", "circle"), Relation.ARGM_MNR),
    (("in", "circles"), Relation.ARGM_MNR),
    (("in", "place"), Relation.ARGM_LOC),
    (("on", "the", "spot"), Relation.ARGM_LOC),
    (("to", "the", "left"), Relation.ARGM_DIR),
    (("to", "the", "right"), Relation.ARGM_DIR),
    (("to", "left"), Relation.ARGM_DIR),
    (("to", "right"), Relation.ARGM_DIR),
    (("for", "a", "few", "seconds"), Relation.ARGM_TMP),
    (("for", "a", "moment"), Relation.ARGM_TMP),
    (("for", "a", "while"), Relation.ARGM_TMP),
    (("with", "both", "hands"), Relation.ARG2),
    (("with", "one", "hand"), Relation.ARG2),
    (("with", "the", "left", "hand"), Relation.ARG2),
    (("with", "the", "right", "hand"), Relation.ARG2),
    (("with", "the", "left", "arm"), Relation.ARG2),
    (("with", "the", "right", "arm"), Relation.ARG2),
]

# generic preposition -> relation of "prep + NP" phrases not matched above
_PREP_RELATION = {
    "with": Relation.ARG2,
    "from": Relation.ARG3,
    "to": Relation.ARG4,
    "toward": Relation.ARG4,
    "towards": Relation.ARG4,
    "into": Relation.ARG4,
    "onto": Relation.ARG4,
    "in": Relation.ARGM_LOC,
    "on": Relation.ARGM_LOC,
    "at": Relation.ARGM_LOC,
    "near": Relation.ARGM_LOC,
    "under": Relation.ARGM_LOC,
    "over": Relation.ARGM_LOC,
    "behind": Relation.ARGM_LOC,
    "beside": Relation.ARGM_LOC,
    "inside": Relation.ARGM_LOC,
    "outside": Relation.ARGM_LOC,
    "across": Relation.ARGM_DIR,
    "through": Relation.ARGM_DIR,
    "along": Relation.ARGM_DIR,
}

_PREPOSITIONS = set(_PREP_RELATION)


def first_sentence(text: str) -> str:
    m = re.search(r"[.!?]", text)
    return text[: m.end()] if m else text


def tokenize(text: str) -> list[str]:
    """Word tokens of the first sentence, original casing, punctuation dropped."""
    return _WORD_RE.findall(first_sentence(text))


def _is_verb(tokens_lower: list[str], i: int) -> bool:
    if tokens_lower[i] not in VERB_FORMS:
        return False
    return i == 0 or tokens_lower[i - 1] not in _NOUN_CONTEXT


def _subject_length(tokens_lower: list[str], first_verb: int) -> int:
    # everything before the first verb is treated as the subject chunk
    return first_verb


def _match_phrase(tokens_lower: list[str], i: int, end: int):
    for pattern, rel in _PHRASE_PATTERNS:
        j = i + len(pattern)
        if j <= end and tuple(tokens_lower[i:j]) == pattern:
            return j, rel
    return None


def _consume_np(tokens_lower: list[str], i: int, end: int) -> int:
    """Advance past a noun phrase starting at i; stops before boundaries."""
    j = i
    if j < end and tokens_lower[j] in _DETERMINERS:
        j += 1
    while j < end:
        t = tokens_lower[j]
        if (t in _PREPOSITIONS or t in _CONNECTORS or t in _MANNER_ADVERBS
                or t in _MISC_ADVERBS or t in _TEMPORAL_ADVERBS
                or t in _DIRECTION_ADVERBS or t in VERB_FORMS):
            break
        j += 1
    return max(j, i + 1)


def _extract_specifics(tokens_lower: list[str], verb_i: int, end: int,
                       verb_base: str) -> list[tuple[int, int, Relation]]:
    """Attribute phrases (span start, span end, relation) inside one clause."""
    out: list[tuple[int, int, Relation]] = []
    other_start: int | None = None

    def flush_other(upto: int):
        nonlocal other_start
        if other_start is not None:
            out.append((other_start, upto, Relation.OTHERS))
            other_start = None

    i = verb_i + 1
    # particle directly after particle verbs ("picks up") is part of the verb
    if (verb_base in _PARTICLE_VERBS and i < end
            and tokens_lower[i] in ("up", "down")):
        i += 1
    while i < end:
        t = tokens_lower[i]
        if t in _CONNECTORS:
            flush_other(i)
            i += 1
            continue
        hit = _match_phrase(tokens_lower, i, end)
        if hit is not None:
            flush_other(i)
            j, rel = hit
            out.append((i, j, rel))
            i = j
            continue
        if t in _MANNER_ADVERBS:
            flush_other(i)
            out.append((i, i + 1, Relation.ARGM_MNR))
            i += 1
            continue
        if t in _MISC_ADVERBS:
            flush_other(i)
            out.append((i, i + 1, Relation.ARGM_ADV))
            i += 1
            continue
        if t in _TEMPORAL_ADVERBS:
            flush_other(i)
            out.append((i, i + 1, Relation.ARGM_TMP))
            i += 1
            continue
        if t in _DIRECTION_ADVERBS:
            flush_other(i)
            out.append((i, i + 1, Relation.ARGM_DIR))
            i += 1
            continue
        if t in _PREPOSITIONS:
            flush_other(i)
            j = _consume_np(tokens_lower, i + 1, end)
            out.append((i, j, _PREP_RELATION[t]))
            i = j
            continue
        if t in _DETERMINERS:
            flush_other(i)
            j = _consume_np(tokens_lower, i, end)
            out.append((i, j, Relation.ARG1))
            i = j
            continue
        if other_start is None:
            other_start = i
        i += 1
    flush_other(end)
    return out


def parse_description(text: str, *, on_no_verb: str = "raise") -> SemanticGraph:
    """Parse a motion description into a hierarchical semantic graph.

    One action node per detected verb, one specific node per attribute phrase
    attached by its semantic role; all edge weights start at 1.0.  With
    ``on_no_verb="fallback"`` a verbless sentence yields a single action node
    covering the whole predicate, linked with the OTHERS relation (the distinct
    signal that no verb was found).
    """
    if not text or not text.strip():
        raise ValueError("empty description")
    sentence = first_sentence(text)
    tokens = tokenize(sentence)
    if not tokens:
        raise ValueError("description has no word tokens")
    tokens_lower = [t.lower() for t in tokens]

    verb_positions = [i for i in range(len(tokens)) if _is_verb(tokens_lower, i)]

    nodes: list[GraphNode] = []
    edges: list[GraphEdge] = []
    root = GraphNode(id="m0", level=Level.MOTION, text=sentence,
                     span=(0, len(tokens)), masked=False)
    nodes.append(root)

    if not verb_positions:
        if on_no_verb != "fallback":
            raise NoVerbFound(f"no verb found in {sentence!r}")
        start = 0
        if tokens_lower[0] in _SUBJECT_PRONOUNS:
            start = 1
        elif tokens_lower[0] in _DETERMINERS and len(tokens) > 2:
            start = 2
        node = GraphNode(id="a0", level=Level.ACTION,
                         text=" ".join(tokens[start:]), span=(start, len(tokens)),
                         masked=False)
        nodes.append(node)
        edges.append(GraphEdge(root.id, node.id, Relation.OTHERS, 1.0))
        return SemanticGraph(tuple(nodes), tuple(edges), root.id)

    clause_ends = verb_positions[1:] + [len(tokens)]
    spec_count = 0
    for k, (vi, end) in enumerate(zip(verb_positions, clause_ends)):
        action = GraphNode(id=f"a{k}", level=Level.ACTION, text=tokens[vi],
                           span=(vi, vi + 1), masked=False)
        nodes.append(action)
        edges.append(GraphEdge(root.id, action.id, Relation.ARGM_MA, 1.0))
        base = VERB_FORMS[tokens_lower[vi]]
        for (s, e, rel) in _extract_specifics(tokens_lower, vi, end, base):
            spec = GraphNode(id=f"s{spec_count}", level=Level.SPECIFIC,
                             text=" ".join(tokens[s:e]), span=(s, e), masked=False)
            spec_count += 1
            nodes.append(spec)
            edges.append(GraphEdge(action.id, spec.id, rel, 1.0))
    return SemanticGraph(tuple(nodes), tuple(edges), root.id)
