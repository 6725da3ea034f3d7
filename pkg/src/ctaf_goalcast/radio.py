"""Radio-call parsing: normalisation, intent rules, speaker identification.

Also home to the word-error-rate scorer, the dynamic/static context builders
used for prompting, and thin adapters for optional hosted transcription and
labelling services.
"""

from __future__ import annotations

import logging
import os
import random
import re
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Protocol, Sequence

import numpy as np

from .geometry import (
    INSUFFICIENT,
    OTHER,
    AirportConfig,
    Depart,
    EnterLeg,
    IntentLabel,
    Landing,
    LocalPosition,
    Takeoff,
    bearing_deg,
    cardinal_direction,
    depart_direction,
    distance_miles,
    intent_label_set,
)

log = logging.getLogger(__name__)

UNKNOWN_SPEAKER = "Unknown"

PHONETIC = {
    "alpha": "a", "alfa": "a", "bravo": "b", "charlie": "c", "delta": "d", "echo": "e",
    "foxtrot": "f", "golf": "g", "hotel": "h", "india": "i", "juliet": "j", "juliett": "j",
    "kilo": "k", "lima": "l", "mike": "m", "november": "n", "oscar": "o", "papa": "p",
    "quebec": "q", "romeo": "r", "sierra": "s", "tango": "t", "uniform": "u", "victor": "v",
    "whiskey": "w", "xray": "x", "yankee": "y", "zulu": "z",
}
SPOKEN_DIGITS = {
    "zero": "0", "oh": "0", "one": "1", "two": "2", "three": "3", "tree": "3", "four": "4",
    "five": "5", "fife": "5", "six": "6", "seven": "7", "eight": "8", "nine": "9", "niner": "9",
}
FILLERS = {"uh", "um", "uhh", "umm", "er", "erm", "ah"}
# a digit directly before one of these is a quantity, never part of a callsign
UNIT_WORDS = {"mile", "miles", "thousand", "hundred", "feet", "ft", "knots", "minutes", "minute"}

_WORD = re.compile(r"[A-Za-z0-9]+")


@dataclass(frozen=True)
class TokenStream:
    tokens: tuple[str, ...]
    spans: tuple[tuple[int, int], ...]
    raw: str = ""

    def __len__(self) -> int:
        return len(self.tokens)

    @property
    def text(self) -> str:
        return " ".join(self.tokens)


def _spellable(token: str, from_word: bool) -> bool:
    return from_word or token.isdigit() or len(token) == 1


def normalize_transcript(text: str | TokenStream) -> TokenStream:
    """Lowercase, strip punctuation, collapse phonetic letters and spoken digits.

    Runs of single letters/digits are fused into one token ("one three five papa
    lima" -> "135pl"), except that a digit followed by a unit word stays apart
    ("... 135pl three miles" keeps "3").
    """
    if isinstance(text, TokenStream):
        text = text.text
    words: list[tuple[str, tuple[int, int], bool]] = []
    for m in _WORD.finditer(text):
        w = m.group(0).lower()
        if w in FILLERS:
            continue
        if w in PHONETIC:
            words.append((PHONETIC[w], m.span(), True))
        elif w in SPOKEN_DIGITS:
            words.append((SPOKEN_DIGITS[w], m.span(), True))
        else:
            words.append((w, m.span(), False))
    tokens: list[str] = []
    spans: list[tuple[int, int]] = []
    run: list[tuple[str, tuple[int, int]]] = []

    def flush():
        if run:
            tokens.append("".join(t for t, _ in run))
            spans.append((run[0][1][0], run[-1][1][1]))
            run.clear()

    for i, (tok, span, from_word) in enumerate(words):
        nxt = words[i + 1][0] if i + 1 < len(words) else None
        if not _spellable(tok, from_word):
            flush()
            tokens.append(tok)
            spans.append(span)
            continue
        if tok.isdigit() and nxt in UNIT_WORDS:
            flush()
            tokens.append(tok)
            spans.append(span)
            continue
        run.append((tok, span))
    flush()
    return TokenStream(tuple(tokens), tuple(spans), text)


# ------------------------------------------------------------------ intents

_DIRS = "north|northeast|east|southeast|south|southwest|west|northwest"
_DIR_BEARING = {
    "north": 0.0, "northeast": 45.0, "east": 90.0, "southeast": 135.0,
    "south": 180.0, "southwest": 225.0, "west": 270.0, "northwest": 315.0,
}
_RUNWAY = re.compile(r"\b(?:runway|rwy) (\d{1,2})\b")

# (pattern, specificity, kind): higher specificity wins, later position breaks ties
_RULES: list[tuple[re.Pattern, int, str]] = [
    (re.compile(r"\b(?:taxiing|taxi|back taxi|backtaxi|back taxiing|clear of (?:the )?runway|"
                r"clear of the active|clearing (?:the )?runway|clear of all runways)\b"), 1, "other"),
    (re.compile(r"\b(crosswind|downwind|base)\b"), 2, "leg"),
    (re.compile(r"\b(?:short |long )?final\b"), 2, "landing"),
    (re.compile(r"\b(?:full stop|landing|touch and go|touch n go|stop and go|to land|straight in)\b"), 3, "landing"),
    (re.compile(r"\b(?:departing (?:from )?runway|taking off|take off|takeoff|for departure|"
                r"departure runway|rolling runway)\b"), 3, "takeoff"),
    (re.compile(rf"\b(?:depart\w*|leaving|exiting|out)\b(?: \w+){{0,6}}? to the ({_DIRS})\b"), 4, "depart"),
    (re.compile(rf"\bdeparting ({_DIRS})(?:bound)?\b"), 4, "depart"),
    (re.compile(rf"\b({_DIRS})bound\b"), 4, "depart"),
    (re.compile(r"\bstraight out\b"), 4, "straight_out"),
]


@dataclass(frozen=True)
class _Match:
    specificity: int
    end: int
    label: IntentLabel


def _runway_for(span: tuple[int, int], mentions: list[tuple[int, str]], airport: AirportConfig) -> str | None:
    valid = [(pos, d) for pos, d in mentions if airport.has_runway(d)]
    if valid:
        pos, d = min(valid, key=lambda m: (abs(m[0] - span[0]), m[0] < span[0]))
        return airport.runway(d).designator
    if len(airport.runway_ends) == 1:
        return airport.runway_ends[0].designator
    return None


def extract_intent(tokens: TokenStream | str, airport: AirportConfig) -> IntentLabel:
    """Rule-based intent label for one transcript.

    Every phrase rule that fires proposes a label with a specificity
    (ground ops 1 < leg/final 2 < landing/takeoff words 3 < pattern exit 4).
    The most specific proposal wins; among equals the one ending latest in the
    utterance wins. Runway-bound proposals take the nearest runway mention and are
    discarded if none resolves. No proposal, or two different labels tied on both
    specificity and position, gives ``insufficient``.
    """
    if isinstance(tokens, str):
        tokens = normalize_transcript(tokens)
    s = tokens.text
    mentions = [(m.start(), m.group(1)) for m in _RUNWAY.finditer(s)]
    matches: list[_Match] = []
    for pattern, spec, kind in _RULES:
        for m in pattern.finditer(s):
            label = None
            if kind == "other":
                label = OTHER
            elif kind == "depart":
                label = Depart(depart_direction(_DIR_BEARING[m.group(1)]))
            else:
                rwy = _runway_for(m.span(), mentions, airport)
                if rwy is None:
                    continue
                if kind == "leg":
                    label = EnterLeg(rwy, m.group(1))
                elif kind == "landing":
                    label = Landing(rwy)
                elif kind == "takeoff":
                    label = Takeoff(rwy)
                elif kind == "straight_out":
                    label = Depart(depart_direction(airport.runway(rwy).heading))
            if label is not None:
                matches.append(_Match(spec, m.end(), label))
    if not matches:
        return INSUFFICIENT
    top = max(m.specificity for m in matches)
    best = [m for m in matches if m.specificity == top]
    last = max(m.end for m in best)
    winners = {m.label for m in best if m.end == last}
    if len(winners) != 1:
        return INSUFFICIENT
    return winners.pop()


# ------------------------------------------------------------------ speakers


@dataclass(frozen=True)
class AircraftDirectoryEntry:
    tail_number: str
    aliases: tuple[str, ...] = ()

    @property
    def normalized_aliases(self) -> tuple[tuple[str, ...], ...]:
        out = []
        for a in self.aliases:
            toks = normalize_transcript(a).tokens
            if toks and toks not in out:
                out.append(toks)
        return tuple(out)


@dataclass(frozen=True)
class ContextEntry:
    tail_number: str
    aliases: tuple[str, ...]
    distance_miles: int
    direction: str

    @property
    def normalized_aliases(self) -> tuple[tuple[str, ...], ...]:
        return AircraftDirectoryEntry(self.tail_number, self.aliases).normalized_aliases


@dataclass(frozen=True)
class DynamicContext:
    entries: tuple[ContextEntry, ...]
    text: str = ""

    def tails(self) -> set[str]:
        return {e.tail_number for e in self.entries}


def load_directory(path: str | Path) -> dict[str, AircraftDirectoryEntry]:
    """Read ``tail_number,alias1|alias2|...`` lines (``#`` starts a comment)."""
    out: dict[str, AircraftDirectoryEntry] = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tail, _, rest = line.partition(",")
        tail = tail.strip().upper()
        if not tail:
            raise ValueError(f"{path}:{lineno}: missing tail number")
        if tail in out:
            raise ValueError(f"{path}:{lineno}: duplicate tail number {tail}")
        aliases = tuple(a.strip() for a in rest.split("|") if a.strip())
        out[tail] = AircraftDirectoryEntry(tail, aliases)
    return out


def write_directory(path: str | Path, directory: dict[str, AircraftDirectoryEntry]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for tail in sorted(directory):
            fh.write(f"{tail},{'|'.join(directory[tail].aliases)}\n")


def _suffix_score(tail: str, tokens: Sequence[str], skip: set[int]) -> int:
    tail = tail.lower()
    best = 0
    for i, tok in enumerate(tokens):
        if i in skip or len(tok) < 2:
            continue
        if tail.endswith(tok):
            best = max(best, len(tok))
    return best


def _contains(tokens: Sequence[str], phrase: Sequence[str]) -> bool:
    n = len(phrase)
    return any(tuple(tokens[i : i + n]) == tuple(phrase) for i in range(len(tokens) - n + 1))


def speaker_scores(tokens: TokenStream | str, context: DynamicContext) -> dict[str, int]:
    if isinstance(tokens, str):
        tokens = normalize_transcript(tokens)
    toks = tokens.tokens
    # runway numbers are never callsign fragments
    skip = {i + 1 for i, t in enumerate(toks) if t in ("runway", "rwy")}
    scores = {}
    for e in context.entries:
        score = 3 * _suffix_score(e.tail_number, toks, skip)
        for alias in e.normalized_aliases:
            if _contains(toks, alias):
                score += 2 if len(alias) > 1 else 1
        scores[e.tail_number] = score
    return scores


def identify_speaker(tokens: TokenStream | str, context: DynamicContext) -> str:
    """Tail number with the highest evidence score, or ``"Unknown"``.

    Score = 3 x longest tail suffix spoken (>= 2 chars) + 2 per multi-word alias
    + 1 per single-word alias. Zero or tied best scores give ``"Unknown"``.
    """
    scores = speaker_scores(tokens, context)
    if not scores:
        return UNKNOWN_SPEAKER
    top = max(scores.values())
    winners = [t for t, s in scores.items() if s == top]
    if top <= 0 or len(winners) != 1:
        return UNKNOWN_SPEAKER
    return winners[0]


CONTEXT_PREAMBLE = (
    "Identify the aircraft that transmitted the radio call using the options below. "
    "Answer with the tail number alone, or Unknown when the call does not single one out.\n"
    "Options:"
)


def build_dynamic_context(
    directory: dict[str, AircraftDirectoryEntry],
    states: Iterable[tuple[str, LocalPosition]],
) -> DynamicContext:
    """Per-aircraft option blocks (tail, names, distance and direction), tail-sorted."""
    entries = []
    for tail, pos in sorted(states, key=lambda s: s[0]):
        entry = directory.get(tail)
        if entry is None:
            log.warning("tail %s not in aircraft directory; listing it without names", tail)
            aliases: tuple[str, ...] = ()
        else:
            aliases = entry.aliases
        if pos.x == 0.0 and pos.y == 0.0:
            direction = "Overhead"
        else:
            direction = cardinal_direction(pos, 8)
        entries.append(ContextEntry(tail, aliases, distance_miles(pos), direction))
    blocks = [CONTEXT_PREAMBLE]
    for e in entries:
        blocks.append(
            f"{e.tail_number}\nNames - {', '.join(e.aliases)}\nLocation - {e.distance_miles} miles, {e.direction}"
        )
    return DynamicContext(tuple(entries), "\n".join(blocks))


@dataclass(frozen=True)
class StaticContext:
    airport_aliases: tuple[str, ...]
    runway_designators: tuple[str, ...]
    lexicon: tuple[str, ...] = ()
    examples: tuple[tuple[str, str, str], ...] = ()  # (transcript, speaker, label); authored, not field data

    def render(self) -> str:
        lines = [
            f"Airport names: {', '.join(self.airport_aliases)}",
            f"Runways: {', '.join(self.runway_designators)}",
        ]
        if self.lexicon:
            lines.append(f"Phraseology: {', '.join(self.lexicon)}")
        for transcript, speaker, label in self.examples:
            lines.append(f"Example: {transcript} => {speaker} / {label}")
        return "\n".join(lines)


DEFAULT_LEXICON = (
    "traffic", "upwind", "crosswind", "downwind", "base", "final", "short final",
    "full stop", "touch and go", "departing", "straight out", "back taxi", "clear of runway",
    "remaining in the pattern", "45 for the downwind", "midfield",
)


def default_static_context(airport: AirportConfig) -> StaticContext:
    r = airport.sorted_ends()[0].designator
    examples = (
        (f"{airport.name} traffic Skyhawk 23AB left downwind runway {r} full stop", "N123AB", f"landing:{r}"),
        (f"{airport.name} traffic Cherokee 5PL departing runway {r} to the north", "N105PL", "depart:N"),
        (f"{airport.name} traffic Diamond 2NG taxiing to runway {r}", "N202NG", "other"),
    )
    return StaticContext(
        airport_aliases=airport.aliases or (airport.name,),
        runway_designators=tuple(x.designator for x in airport.sorted_ends()),
        lexicon=DEFAULT_LEXICON,
        examples=examples,
    )


# ---------------------------------------------------------------------- WER


def edit_counts(ref: Sequence[str], hyp: Sequence[str]) -> tuple[int, int, int]:
    """(substitutions, deletions, insertions) of a minimum-edit alignment."""
    n, m = len(ref), len(hyp)
    # cost table and back-pointers, row by row
    prev = [(j, 0, 0, j) for j in range(m + 1)]  # (cost, S, D, I)
    for i in range(1, n + 1):
        cur = [(i, 0, i, 0)]
        for j in range(1, m + 1):
            c, s, d, ins = prev[j - 1]
            if ref[i - 1] == hyp[j - 1]:
                diag = (c, s, d, ins)
            else:
                diag = (c + 1, s + 1, d, ins)
            c, s, d, ins = prev[j]
            up = (c + 1, s, d + 1, ins)
            c, s, d, ins = cur[j - 1]
            left = (c + 1, s, d, ins + 1)
            cur.append(min(diag, up, left, key=lambda t: t[0]))
        prev = cur
    _, s, d, ins = prev[m]
    return s, d, ins


def word_error_rate(reference: str, hypothesis: str, normalize: bool = True) -> float:
    """(S + D + I) / N over words; normalised tokens unless ``normalize`` is False."""
    if normalize:
        ref = normalize_transcript(reference).tokens
        hyp = normalize_transcript(hypothesis).tokens
    else:
        ref = tuple(reference.split())
        hyp = tuple(hypothesis.split())
    if not ref:
        raise ValueError("undefined WER: empty reference")
    s, d, i = edit_counts(ref, hyp)
    return (s + d + i) / len(ref)


def score_labeling(
    predictions: Sequence[tuple[str, IntentLabel]],
    truths: Sequence[tuple[str, IntentLabel]],
) -> dict[str, float]:
    if len(predictions) != len(truths):
        raise ValueError("predictions and truths differ in length")
    if not predictions:
        raise ValueError("cannot score an empty labeling")
    n = len(truths)
    sia = sum(p[0] == t[0] for p, t in zip(predictions, truths)) / n
    ila = sum(p[1] == t[1] for p, t in zip(predictions, truths)) / n
    return {"speaker_id_accuracy": sia, "intent_label_accuracy": ila}


# --------------------------------------------------------- external services


class ExternalServiceError(RuntimeError):
    pass


class ClientNotConfigured(ExternalServiceError):
    pass


class ExternalTimeout(ExternalServiceError):
    pass


@dataclass
class ClientConfig:
    endpoint: str
    credential_env: str | None = None
    timeout_s: float = 30.0
    max_retries: int = 2
    backoff_s: float = 0.5


class ModelClient(Protocol):
    def transcribe(self, audio_ref: str, prompt: str) -> str: ...

    def complete(self, prompt: str) -> str: ...


class HTTPModelClient:
    """JSON-over-HTTP client for hosted transcription / completion endpoints.

    ``POST {endpoint}/transcribe`` with ``{"audio_ref", "prompt"}`` and
    ``POST {endpoint}/complete`` with ``{"prompt"}``; both answer ``{"text": ...}``.
    Retries use exponential backoff (factor 2) with full jitter.
    """

    def __init__(self, config: ClientConfig, seed: int | None = None):
        self.config = config
        self._rng = random.Random(seed)

    def _headers(self) -> dict[str, str]:
        headers = {"content-type": "application/json"}
        if self.config.credential_env:
            token = os.environ.get(self.config.credential_env)
            if token:
                headers["authorization"] = f"Bearer {token}"
        return headers

    def _post(self, route: str, payload: dict) -> str:
        import httpx

        url = self.config.endpoint.rstrip("/") + route
        attempts = self.config.max_retries + 1
        last: Exception | None = None
        for attempt in range(attempts):
            log.info("POST %s attempt %d payload=%s", url, attempt + 1, payload)
            try:
                resp = httpx.post(url, json=payload, headers=self._headers(), timeout=self.config.timeout_s)
                resp.raise_for_status()
                text = str(resp.json()["text"])
                log.info("response from %s: %r", url, text)
                return text
            except httpx.TimeoutException as exc:
                last = ExternalTimeout(f"{url} timed out after {self.config.timeout_s}s")
                last.__cause__ = exc
            except (httpx.HTTPError, KeyError, ValueError) as exc:
                last = ExternalServiceError(f"{url} failed: {exc}")
                last.__cause__ = exc
            if attempt + 1 < attempts:
                time.sleep(self._rng.uniform(0, self.config.backoff_s * 2**attempt))
        assert last is not None
        raise last

    def transcribe(self, audio_ref: str, prompt: str) -> str:
        return self._post("/transcribe", {"audio_ref": audio_ref, "prompt": prompt})

    def complete(self, prompt: str) -> str:
        return self._post("/complete", {"prompt": prompt})


def transcribe_external(audio_ref: str, static_context: StaticContext, client: ModelClient | None) -> str:
    if client is None:
        raise ClientNotConfigured("client not configured")
    return client.transcribe(audio_ref, static_context.render())


@dataclass(frozen=True)
class LabelResult:
    speaker: str
    intent: IntentLabel
    raw_reply: str
    call_id: str | None = None


_TAIL = re.compile(r"\b(N[0-9][0-9A-Z]{0,4}|Unknown)\b")
_LABEL_TOKEN = re.compile(
    r"\b(takeoff:\d{2}|landing:\d{2}|enter_leg:\d{2}:\w+|depart:[NESW])\b|/\s*(other|insufficient)\s*$"
)


def parse_label_reply(reply: str, context: DynamicContext, airport: AirportConfig) -> tuple[str, IntentLabel]:
    m = _TAIL.search(reply)
    speaker = m.group(1) if m else UNKNOWN_SPEAKER
    if speaker not in context.tails():
        speaker = UNKNOWN_SPEAKER
    labels = set(intent_label_set(airport))
    tok = _LABEL_TOKEN.search(reply)
    if tok:
        try:
            label = IntentLabel.parse(tok.group(1) or tok.group(2))
            if label in labels:
                return speaker, label
        except ValueError:
            pass
    rest = reply[m.end():] if m else reply
    return speaker, extract_intent(rest, airport)


def label_external(
    transcript: str,
    static_context: StaticContext,
    dynamic_context: DynamicContext,
    airport: AirportConfig,
    client: ModelClient | None,
    call_id: str | None = None,
) -> LabelResult:
    """Ask a hosted model for (speaker, intent) and validate against the closed sets."""
    if client is None:
        raise ClientNotConfigured("client not configured")
    prompt = "\n\n".join([static_context.render(), dynamic_context.text, f"Radio call: {transcript}"])
    reply = client.complete(prompt)
    speaker, label = parse_label_reply(reply, dynamic_context, airport)
    return LabelResult(speaker, label, reply, call_id)


# ------------------------------------------------------------ rule pipeline


def states_at(tracks, t: float, max_gap: float = 2.0) -> list[tuple[str, LocalPosition]]:
    """Interpolated position of every aircraft whose track brackets time ``t``.

    ``tracks`` maps tail -> object with ``times`` and ``positions`` arrays. A
    track qualifies when ``t`` lies inside it, or within ``max_gap`` seconds of
    either end (nearest sample used).
    """
    out = []
    for tail in sorted(tracks):
        tr = tracks[tail]
        times = np.asarray(tr.times)
        if len(times) == 0 or t < times[0] - max_gap or t > times[-1] + max_gap:
            continue
        pos = np.array([np.interp(t, times, tr.positions[:, i]) for i in range(3)])
        out.append((tail, LocalPosition.from_array(pos)))
    return out


def label_calls(calls, tracks, directory: dict[str, AircraftDirectoryEntry], airport: AirportConfig):
    """Rule-based (speaker, intent) for each call; returns (labels, notes).

    The speaker is chosen among aircraft with a track at the call time.
    """
    from .dataio import LabeledCall

    labels, notes = [], []
    for c in calls:
        ctx = build_dynamic_context(directory, states_at(tracks, c.time))
        toks = normalize_transcript(c.transcript)
        speaker = identify_speaker(toks, ctx)
        intent = extract_intent(toks, airport)
        labels.append(LabeledCall(c.time, speaker, intent))
        note = []
        if speaker == UNKNOWN_SPEAKER:
            note.append("speaker unresolved")
        if intent == INSUFFICIENT:
            note.append("no intent phrase")
        notes.append("; ".join(note))
    return labels, notes
