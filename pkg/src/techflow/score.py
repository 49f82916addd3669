"""Score data model: phonemes, notes, technique labels, alignment arithmetic.

A score couples a phoneme sequence (ids into the shipped inventory) with a
note sequence. ``phoneme_to_notes`` maps every phoneme to one or more note
indices; several phonemes may share one note (a syllable sung on one note)
and one phoneme may span several notes (a melisma). The frame timeline is
the concatenation of note durations; phoneme spans tile the same timeline.

Technique labels live at phoneme level in seven groups. ``glissando`` is
never user-set: a phoneme carries it exactly when its word maps to more
than one distinct note.
"""

from __future__ import annotations

import importlib.resources
from dataclasses import dataclass, fields, replace
from pathlib import Path

from .errors import ContractError, ParseError, ScoreValidationError

LANGUAGES = ("zh", "en", "es", "de", "fr")
NOTE_TYPES = ("normal", "slur", "rest")

# group name -> number of real classes; the DROP sentinel used during
# classifier-free-guidance training equals the cardinality itself.
TECH_GROUPS = {
    "intensity": 3,      # 0 none, 1 strong, 2 weak
    "mix_falsetto": 3,   # 0 chest, 1 falsetto, 2 mixed
    "breathy": 2,
    "bubble": 2,
    "vibrato": 2,
    "pharyngeal": 2,
    "glissando": 2,      # rule-derived, never predicted
}
GROUP_NAMES = tuple(TECH_GROUPS)
PREDICTED_GROUPS = GROUP_NAMES[:6]


def drop_sentinel(group: str) -> int:
    return TECH_GROUPS[group]


@dataclass(frozen=True)
class Note:
    midi_pitch: int          # semitones, 0 = rest
    duration_frames: int
    note_type: str           # one of NOTE_TYPES


@dataclass(frozen=True)
class Score:
    phonemes: tuple          # phoneme ids into the inventory
    word_spans: tuple        # (start, end) phoneme ranges, end exclusive
    notes: tuple             # Note
    phoneme_to_notes: tuple  # tuple of note-index tuples, one per phoneme
    language: str
    singer_id: str

    @property
    def n_phonemes(self) -> int:
        return len(self.phonemes)

    def word_of_phoneme(self, i: int) -> int:
        for w, (s, e) in enumerate(self.word_spans):
            if s <= i < e:
                return w
        raise ContractError(f"phoneme {i} not covered by any word span")


@dataclass(frozen=True)
class TechniqueSeq:
    intensity: tuple
    mix_falsetto: tuple
    breathy: tuple
    bubble: tuple
    vibrato: tuple
    pharyngeal: tuple
    glissando: tuple

    def group(self, name: str) -> tuple:
        return getattr(self, name)

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def with_group(self, name: str, values) -> "TechniqueSeq":
        return replace(self, **{name: tuple(int(v) for v in values)})

    @property
    def n_phonemes(self) -> int:
        return len(self.intensity)

    @classmethod
    def from_dict(cls, groups: dict) -> "TechniqueSeq":
        return cls(**{k: tuple(int(v) for v in groups[k]) for k in GROUP_NAMES})

    @classmethod
    def all_zero(cls, n: int) -> "TechniqueSeq":
        z = (0,) * n
        return cls(*(z for _ in GROUP_NAMES))


@dataclass(frozen=True)
class Alignment:
    phoneme_frames: tuple    # (start_frame, n_frames) per phoneme

    @property
    def total_frames(self) -> int:
        if not self.phoneme_frames:
            return 0
        s, n = self.phoneme_frames[-1]
        return s + n


# --- phoneme inventory ------------------------------------------------------

_INVENTORY_CACHE = None


def load_inventory(path=None):
    """Phoneme names, one per line, grouped by ``[section]`` headers.

    Returns the flat name tuple; ids are positions in it.
    """
    global _INVENTORY_CACHE
    if path is None and _INVENTORY_CACHE is not None:
        return _INVENTORY_CACHE
    if path is None:
        text = (
            importlib.resources.files("techflow.data")
            .joinpath("phonemes.txt")
            .read_text(encoding="utf-8")
        )
    else:
        text = Path(path).read_text(encoding="utf-8")
    names = []
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#") or line.startswith("["):
            continue
        names.append(line)
    inv = tuple(names)
    if path is None:
        _INVENTORY_CACHE = inv
    return inv


def inventory_sections(path=None) -> dict:
    """Section name -> (first_id, last_id + 1) range into the inventory."""
    if path is None:
        text = (
            importlib.resources.files("techflow.data")
            .joinpath("phonemes.txt")
            .read_text(encoding="utf-8")
        )
    else:
        text = Path(path).read_text(encoding="utf-8")
    sections = {}
    current = None
    idx = 0
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("["):
            if current is not None:
                sections[current[0]] = (current[1], idx)
            current = (line.strip("[]"), idx)
            continue
        idx += 1
    if current is not None:
        sections[current[0]] = (current[1], idx)
    return sections


def silence_phoneme_id() -> int:
    return load_inventory().index("SIL")


# --- validation -------------------------------------------------------------

def validate_score(score: Score, inventory_size=None) -> list:
    """Collect invariant violations; empty list means the score is valid."""
    v = []
    n = score.n_phonemes
    if inventory_size is None:
        inventory_size = len(load_inventory())
    if score.language not in LANGUAGES:
        v.append(f"language: unknown tag {score.language!r}")
    for i, p in enumerate(score.phonemes):
        if not 0 <= p < inventory_size:
            v.append(f"phonemes: id {p} at index {i} outside inventory")
    # word spans must partition [0, n)
    cursor = 0
    for w, span in enumerate(score.word_spans):
        s, e = span
        if s != cursor:
            kind = "overlap" if s < cursor else "gap"
            v.append(f"word_spans: {kind} at word {w} (starts {s}, expected {cursor})")
        if e <= s:
            v.append(f"word_spans: empty span at word {w}")
        cursor = max(cursor, e)
    if score.word_spans and cursor != n:
        v.append(f"word_spans: cover {cursor} phonemes, score has {n}")
    if not score.word_spans and n:
        v.append("word_spans: empty but score has phonemes")
    for j, note in enumerate(score.notes):
        if note.duration_frames < 1:
            v.append(f"notes: note {j} duration {note.duration_frames} < 1")
        if not 0 <= note.midi_pitch <= 127:
            v.append(f"notes: note {j} midi {note.midi_pitch} outside [0,127]")
        if note.note_type not in NOTE_TYPES:
            v.append(f"notes: note {j} unknown type {note.note_type!r}")
    if len(score.phoneme_to_notes) != n:
        v.append(
            f"phoneme_to_notes: {len(score.phoneme_to_notes)} entries for {n} phonemes"
        )
    n_notes = len(score.notes)
    flat = []
    for i, refs in enumerate(score.phoneme_to_notes):
        if len(refs) == 0:
            v.append(f"phoneme_to_notes: phoneme {i} maps to no note")
            continue
        for k in refs:
            if not 0 <= k < n_notes:
                v.append(f"phoneme_to_notes: phoneme {i} references note {k} of {n_notes}")
        if list(refs) != sorted(set(refs)):
            v.append(f"phoneme_to_notes: phoneme {i} notes not strictly increasing")
        flat.extend(refs)
    if not any(m.startswith("phoneme_to_notes") for m in v):
        if any(b < a for a, b in zip(flat, flat[1:])):
            v.append("phoneme_to_notes: note order does not follow phoneme order")
        missing = set(range(n_notes)) - set(flat)
        if missing:
            v.append(f"phoneme_to_notes: notes {sorted(missing)} referenced by no phoneme")
    return v


def validate_techniques(seq: TechniqueSeq, score: Score) -> list:
    v = []
    n = score.n_phonemes
    for g in GROUP_NAMES:
        vals = seq.group(g)
        if len(vals) != n:
            v.append(f"techniques.{g}: length {len(vals)} != {n} phonemes")
            continue
        card = TECH_GROUPS[g]
        for i, x in enumerate(vals):
            if not 0 <= x < card:
                v.append(f"techniques.{g}: label {x} at phoneme {i} outside 0..{card - 1}")
    if len(seq.glissando) == n and not any(m.startswith("techniques.glissando") for m in v):
        if not validate_score(score):
            want = derive_glissando(score)
            if tuple(seq.glissando) != want:
                v.append("techniques.glissando: does not match word-to-multi-note rule")
    return v


def require_valid(score: Score, techniques: TechniqueSeq | None = None) -> None:
    v = validate_score(score)
    if not v and techniques is not None:
        v = validate_techniques(techniques, score)
    if v:
        raise ScoreValidationError(v)


# --- alignment arithmetic ---------------------------------------------------

def derive_glissando(score: Score) -> tuple:
    """1 for every phoneme of a word whose phonemes map to >1 distinct note."""
    v = validate_score(score)
    if v:
        raise ScoreValidationError(v)
    out = [0] * score.n_phonemes
    for s, e in score.word_spans:
        distinct = set()
        for i in range(s, e):
            distinct.update(score.phoneme_to_notes[i])
        if len(distinct) > 1:
            for i in range(s, e):
                out[i] = 1
    return tuple(out)


def alignment_from_score(score: Score) -> Alignment:
    """Phoneme frame spans. A note shared by m phonemes is split equally,
    remainder to the last sharer, so total frames == sum of note durations."""
    sharers = [[] for _ in score.notes]
    for i, refs in enumerate(score.phoneme_to_notes):
        for k in refs:
            sharers[k].append(i)
    frames = [0] * score.n_phonemes
    for k, note in enumerate(score.notes):
        ph = sharers[k]
        if not ph:
            raise ScoreValidationError([f"phoneme_to_notes: notes [{k}] referenced by no phoneme"])
        base = note.duration_frames // len(ph)
        for i in ph[:-1]:
            frames[i] += base
        frames[ph[-1]] += note.duration_frames - base * (len(ph) - 1)
    spans = []
    start = 0
    for n in frames:
        spans.append((start, n))
        start += n
    return Alignment(tuple(spans))


def note_index_per_frame(score: Score):
    """For each frame of the timeline, the index of the active note."""
    out = []
    for k, note in enumerate(score.notes):
        out.extend([k] * note.duration_frames)
    return out


def expand_to_frames(per_phoneme, alignment: Alignment):
    """Repeat each phoneme value over its frame span (length regulator)."""
    if len(per_phoneme) != len(alignment.phoneme_frames):
        raise ContractError(
            f"expand_to_frames: {len(per_phoneme)} values for "
            f"{len(alignment.phoneme_frames)} phoneme spans"
        )
    out = []
    for val, (_, n) in zip(per_phoneme, alignment.phoneme_frames):
        out.extend([val] * n)
    return out


# --- serialization ----------------------------------------------------------

_FORMAT_TAG = "techflow-score v1"


def write_score(path, score: Score, techniques: TechniqueSeq | None = None) -> None:
    """Canonical text form; writing then reading is the identity."""
    lines = [_FORMAT_TAG]
    lines.append(f"language {score.language}")
    lines.append(f"singer_id {score.singer_id}")
    lines.append("phonemes " + " ".join(str(p) for p in score.phonemes))
    lines.append("word_spans " + " ".join(f"{s}:{e}" for s, e in score.word_spans))
    lines.append(
        "notes "
        + " ".join(f"{n.midi_pitch}/{n.duration_frames}/{n.note_type}" for n in score.notes)
    )
    lines.append(
        "phoneme_to_notes "
        + " ".join(",".join(str(k) for k in refs) for refs in score.phoneme_to_notes)
    )
    if techniques is not None:
        for g in GROUP_NAMES:
            lines.append(f"techniques {g} " + " ".join(str(x) for x in techniques.group(g)))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")


def _parse_ints(text: str, path, lineno: int, field: str):
    try:
        return tuple(int(tok) for tok in text.split())
    except ValueError as exc:
        raise ParseError(f"{path}:{lineno}: bad integer in {field}: {exc}") from None


def read_score(path):
    """Returns (Score, TechniqueSeq or None); validates before returning."""
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    lines = text.splitlines()
    if not lines or lines[0].strip() != _FORMAT_TAG:
        raise ParseError(f"{path}:1: missing format tag {_FORMAT_TAG!r}")
    data = {}
    tech = {}
    for lineno, line in enumerate(lines[1:], start=2):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, _, rest = line.partition(" ")
        if key == "techniques":
            g, _, vals = rest.partition(" ")
            if g not in TECH_GROUPS:
                raise ParseError(f"{path}:{lineno}: unknown technique group {g!r}")
            tech[g] = _parse_ints(vals, path, lineno, f"techniques {g}")
        elif key in ("language", "singer_id"):
            data[key] = rest.strip()
        elif key == "phonemes":
            data[key] = _parse_ints(rest, path, lineno, key)
        elif key == "word_spans":
            spans = []
            for tok in rest.split():
                parts = tok.split(":")
                if len(parts) != 2:
                    raise ParseError(f"{path}:{lineno}: bad span {tok!r}")
                spans.append((int(parts[0]), int(parts[1])))
            data[key] = tuple(spans)
        elif key == "notes":
            notes = []
            for tok in rest.split():
                parts = tok.split("/")
                if len(parts) != 3:
                    raise ParseError(f"{path}:{lineno}: bad note {tok!r}")
                try:
                    notes.append(Note(int(parts[0]), int(parts[1]), parts[2]))
                except ValueError as exc:
                    raise ParseError(f"{path}:{lineno}: bad note {tok!r}: {exc}") from None
            data[key] = tuple(notes)
        elif key == "phoneme_to_notes":
            refs = []
            for tok in rest.split():
                refs.append(_parse_ints(tok.replace(",", " "), path, lineno, key))
            data[key] = tuple(refs)
        else:
            raise ParseError(f"{path}:{lineno}: unknown key {key!r}")
    missing = {"language", "singer_id", "phonemes", "word_spans", "notes",
               "phoneme_to_notes"} - set(data)
    if missing:
        raise ParseError(f"{path}: missing keys {sorted(missing)}")
    score = Score(
        phonemes=data["phonemes"],
        word_spans=data["word_spans"],
        notes=data["notes"],
        phoneme_to_notes=data["phoneme_to_notes"],
        language=data["language"],
        singer_id=data["singer_id"],
    )
    techniques = None
    if tech:
        missing = set(GROUP_NAMES) - set(tech)
        if missing:
            raise ParseError(f"{path}: techniques present but missing groups {sorted(missing)}")
        techniques = TechniqueSeq.from_dict(tech)
    require_valid(score, techniques)
    return score, techniques
