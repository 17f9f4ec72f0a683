"""Split step text into premise/conclusion content units.

Units come from predicate-argument frames supplied by a pluggable
predictor (a real SRL model out of process, recorded frames for
reproducible tests, or a rule-based clause splitter). Frames are reduced
to maximal non-overlapping spans, then classified by position and the
conjunctions around them.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import re
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Protocol, runtime_checkable

from .backends import BackendError
from .chains import CONCLUSION, PREMISE, Diagnostics, Rcu, ReasoningChain, Step

_EDGE_PUNCT = " \t\n,.;:!?"


@dataclass(frozen=True)
class Modifier:
    """A tagged sub-span of a frame; verb-bearing modifiers split off as own units."""

    span: tuple[int, int]
    text: str
    contains_verb: bool = False


@dataclass(frozen=True)
class Frame:
    """A predicate-argument frame located inside a sentence."""

    span: tuple[int, int]
    text: str
    modifiers: tuple[Modifier, ...] = ()


@dataclass(frozen=True)
class Unit:
    """A selected text span, ordered by position in the sentence."""

    start: int
    end: int
    text: str


@runtime_checkable
class FramePredictor(Protocol):
    """Returns frames for a sentence; deterministic for a fixed configuration."""

    #: Whether the predictor tolerates concurrent calls; the evaluator
    #: serializes access to predictors that do not.
    concurrent_safe: bool

    def frames(self, sentence: str) -> list[Frame]: ...


def contains_verb(text: str, verb_words: Iterable[str]) -> bool:
    """Word-list verb check used when building frames without a tagger."""
    words = {w.lower() for w in verb_words}
    return any(tok in words for tok in re.findall(r"[a-z']+", text.lower()))


def _trim(sentence: str, start: int, end: int) -> tuple[int, int]:
    while start < end and sentence[start] in _EDGE_PUNCT:
        start += 1
    while end > start and sentence[end - 1] in _EDGE_PUNCT:
        end -= 1
    return start, end


def _subtract_verb_modifiers(frame: Frame) -> list[tuple[int, int]]:
    """Frame span minus its verb-bearing modifier spans, as contiguous pieces."""
    cuts = sorted(m.span for m in frame.modifiers if m.contains_verb)
    pieces = []
    cursor = frame.span[0]
    for c_start, c_end in cuts:
        if c_start > cursor:
            pieces.append((cursor, min(c_start, frame.span[1])))
        cursor = max(cursor, c_end)
    if cursor < frame.span[1]:
        pieces.append((cursor, frame.span[1]))
    return pieces


def select_units(frames: list[Frame], sentence: str) -> list[Unit]:
    """Reduce overlapping frames to maximal disjoint units, in sentence order.

    Verb-bearing modifiers are carved out of their frames first (that
    content is covered by its own frame), then frames are taken longest
    first, skipping any that overlap an already selected span, until the
    leftovers are contained in what was selected. No frames at all means
    the whole sentence is one unit.
    """
    if not frames:
        s, e = _trim(sentence, 0, len(sentence))
        return [Unit(s, e, sentence[s:e])] if e > s else []

    seen: set[tuple[int, int]] = set()
    candidates: list[Unit] = []
    for frame in frames:
        for raw_start, raw_end in _subtract_verb_modifiers(frame):
            start, end = _trim(sentence, raw_start, raw_end)
            if end <= start or (start, end) in seen:
                continue
            seen.add((start, end))
            candidates.append(Unit(start, end, sentence[start:end]))

    candidates.sort(key=lambda u: (-len(u.text), u.start))
    selected: list[Unit] = []
    for i, cand in enumerate(candidates):
        if selected:
            covered = " ".join(u.text for u in sorted(selected, key=lambda u: u.start))
            if all(rest.text in covered for rest in candidates[i:]):
                break
        if all(cand.end <= u.start or cand.start >= u.end for u in selected):
            selected.append(cand)
    selected.sort(key=lambda u: u.start)
    return selected


_RESULT_SINGLE = {"so", "therefore", "thus", "hence"}
_RESULT_BIGRAMS = {("which", "means"), ("that", "means")}
_REASON = {"because", "since", "as"}


def classify_rcus(
    units: list[Unit],
    sentence: str,
    diagnostics: Diagnostics | None = None,
    step_index: int | None = None,
) -> list[Rcu]:
    """Assign premise/conclusion roles to ordered units.

    The last unit is the conclusion by default. A reason conjunction
    (because/since/as) directly before a unit makes that unit a premise;
    a result conjunction (so/therefore/thus/hence/which means/that means)
    makes it the conclusion. A single unit is the conclusion with no
    premises.
    """
    if not units:
        raise ValueError("classify_rcus requires at least one unit")
    if len(units) == 1:
        u = units[0]
        return [Rcu(text=u.text, role=CONCLUSION, span=(u.start, u.end))]

    marks: list[str | None] = [None] * len(units)
    prev_end = 0
    for idx, unit in enumerate(units):
        gap = sentence[prev_end : unit.start]
        tokens = re.findall(r"[a-z']+", gap.lower())
        if tokens:
            if tuple(tokens[-2:]) in _RESULT_BIGRAMS or tokens[-1] in _RESULT_SINGLE:
                marks[idx] = CONCLUSION
            elif tokens[-1] in _REASON:
                # "as"/"since"/"because" count only when directly before the unit
                marks[idx] = PREMISE
        prev_end = unit.end

    marked_conclusions = [i for i, m in enumerate(marks) if m == CONCLUSION]
    if marked_conclusions:
        conclusion_idx = marked_conclusions[-1]
        if len(marked_conclusions) > 1 and diagnostics is not None:
            diagnostics.multi_result_conjunction_steps += 1
            diagnostics.notes.append(
                f"step {step_index}: multiple result conjunctions; last unit kept as conclusion"
            )
    else:
        non_premise = [i for i, m in enumerate(marks) if m != PREMISE]
        conclusion_idx = non_premise[-1] if non_premise else len(units) - 1

    return [
        Rcu(
            text=u.text,
            role=CONCLUSION if i == conclusion_idx else PREMISE,
            span=(u.start, u.end),
        )
        for i, u in enumerate(units)
    ]


def segment_step(
    step: Step,
    predictor: FramePredictor,
    diagnostics: Diagnostics | None = None,
) -> Step:
    """Segment one step; pre-annotated gold units pass through untouched."""
    if step.gold_rcus is not None:
        return dataclasses.replace(step, rcus=tuple(step.gold_rcus))
    try:
        frames = predictor.frames(step.text)
    except Exception as exc:
        raise BackendError(f"frame predictor failed on step {step.index}: {exc}") from exc
    units = select_units(frames, step.text)
    rcus = classify_rcus(units, step.text, diagnostics=diagnostics, step_index=step.index)
    return dataclasses.replace(step, rcus=tuple(rcus))


def segment_chain(
    chain: ReasoningChain,
    predictor: FramePredictor,
    diagnostics: Diagnostics | None = None,
) -> ReasoningChain:
    """Segment every step that does not already carry units."""
    steps = [
        s if s.segmented else segment_step(s, predictor, diagnostics)
        for s in chain.steps
    ]
    return chain.with_steps(steps)


def rechunk_chain(
    chain: ReasoningChain,
    granularity: str,
    predictor: FramePredictor | None = None,
) -> ReasoningChain:
    """Rebuild step boundaries: one step per unit, per sentence, or whole chain.

    Metrics run unchanged on the re-chunked chain; ``sentence`` is the
    identity (steps are assumed to be sentences already).
    """
    if granularity == "sentence":
        return chain
    if granularity == "chain":
        text = " ".join(s.text for s in chain.steps)
        return chain.with_steps([Step(index=1, text=text)])
    if granularity == "rcu":
        if predictor is None:
            raise ValueError("rcu granularity requires a frame predictor")
        segmented = segment_chain(chain, predictor)
        steps = []
        for s in segmented.steps:
            for u in s.rcus:
                steps.append(Step(index=len(steps) + 1, text=u.text))
        return chain.with_steps(steps)
    raise ValueError(f"unknown granularity: {granularity}")


# --- predictors ----------------------------------------------------------

_CLAUSE_BOUNDARY = re.compile(
    r"""
    ,?\s+(?:so|therefore|thus|hence)\s+
  | ,?\s+(?:which|that)\s+means\s+
  | \s+(?:since|because)\s+
  | ;\s*
    """,
    re.VERBOSE | re.IGNORECASE,
)

_LEADING_SUBORDINATOR = re.compile(
    r"^(?:even\s+)?(?:if|as|since|because|so|then|when|while|with)\s+",
    re.IGNORECASE,
)


class ClauseFramePredictor:
    """Rule-based stand-in for an SRL model: one frame per clause.

    Splits on explicit reason/result conjunctions and semicolons, and
    excludes leading subordinators from the frame (they stay in the gap,
    where role classification looks for them). Use a real frame backend
    via the recorded or remote predictors for anything beyond plain
    connective-joined steps.
    """

    concurrent_safe = True

    def frames(self, sentence: str) -> list[Frame]:
        frames = []
        cursor = 0
        boundaries = [m.span() for m in _CLAUSE_BOUNDARY.finditer(sentence)]
        boundaries.append((len(sentence), len(sentence)))
        for b_start, b_end in boundaries:
            start, end = _trim(sentence, cursor, b_start)
            cursor = b_end
            if end <= start:
                continue
            lead = _LEADING_SUBORDINATOR.match(sentence[start:end])
            if lead:
                start += lead.end()
            if end > start:
                frames.append(Frame(span=(start, end), text=sentence[start:end]))
        return frames


def sentence_key(sentence: str) -> str:
    """Stable lookup key for recorded frames."""
    return hashlib.sha256(sentence.encode("utf-8")).hexdigest()


def _frame_from_json(raw: dict[str, Any]) -> Frame:
    modifiers = tuple(
        Modifier(
            span=(m["start"], m["end"]),
            text=m["text"],
            contains_verb=bool(m.get("contains_verb", False)),
        )
        for m in raw.get("modifiers", [])
    )
    return Frame(span=(raw["start"], raw["end"]), text=raw["text"], modifiers=modifiers)


def frame_to_json(frame: Frame) -> dict[str, Any]:
    return {
        "start": frame.span[0],
        "end": frame.span[1],
        "text": frame.text,
        "modifiers": [
            {
                "start": m.span[0],
                "end": m.span[1],
                "text": m.text,
                "contains_verb": m.contains_verb,
            }
            for m in frame.modifiers
        ],
    }


@dataclass
class RecordedFramePredictor:
    """Replays frames recorded per sentence hash, for reproducible runs.

    ``on_missing`` is ``"empty"`` (unknown sentence becomes one whole-sentence
    unit downstream) or ``"error"``.
    """

    entries: dict[str, list[Frame]] = field(default_factory=dict)
    on_missing: str = "empty"
    concurrent_safe: bool = True

    @classmethod
    def from_file(cls, path: str | Path, on_missing: str = "empty") -> "RecordedFramePredictor":
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
        entries = {
            key: [_frame_from_json(f) for f in frames] for key, frames in raw.items()
        }
        return cls(entries=entries, on_missing=on_missing)

    def record(self, sentence: str, frames: list[Frame]) -> None:
        self.entries[sentence_key(sentence)] = list(frames)

    def dump(self, path: str | Path) -> None:
        raw = {
            key: [frame_to_json(f) for f in frames]
            for key, frames in sorted(self.entries.items())
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(raw, fh, indent=2, sort_keys=True)

    def frames(self, sentence: str) -> list[Frame]:
        key = sentence_key(sentence)
        if key not in self.entries:
            if self.on_missing == "error":
                raise KeyError(f"no recorded frames for sentence: {sentence!r}")
            return []
        return list(self.entries[key])


class RemoteFramePredictor:
    """Client for an out-of-process frame backend.

    Wire format: request ``{"sentence": ...}``, response
    ``{"frames": [{"start", "end", "text", "modifiers": [...]}]}``.
    """

    concurrent_safe = True

    def __init__(self, endpoint: str, timeout: float = 30.0) -> None:
        self.endpoint = endpoint
        self.timeout = timeout

    def frames(self, sentence: str) -> list[Frame]:
        import requests

        resp = requests.post(self.endpoint, json={"sentence": sentence}, timeout=self.timeout)
        resp.raise_for_status()
        payload = resp.json()
        return [_frame_from_json(f) for f in payload["frames"]]


class SerializedPredictor:
    """Lock wrapper for predictors that do not allow concurrent calls."""

    concurrent_safe = True

    def __init__(self, inner: FramePredictor) -> None:
        self._inner = inner
        self._lock = threading.Lock()

    def frames(self, sentence: str) -> list[Frame]:
        with self._lock:
            return self._inner.frames(sentence)
