"""Deterministic "oracle singer": renders F0 and pseudo-mel features.

The renderer is analytic so every technique leaves a verifiable signature:

* vibrato      -- additive sine on F0 over flagged phonemes
* glissando    -- linear pitch interpolation through note midpoints in-word
* bubble       -- periodic voicing gaps
* intensity    -- +/- gain on every bin of voiced frames
* breathy      -- halved harmonic contrast plus seeded uniform noise
* falsetto     -- lowest-quartile bins attenuated (mixed voice: half as much)
* pharyngeal   -- second-quartile bins boosted

Unvoiced frames sit exactly at the noise floor. Everything is pure given
(inputs, seed). Arrays are float64 internally; files store float32.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import predictor
from .arrayio import write_array
from .errors import ContractError
from .score import (
    Alignment,
    LANGUAGES,
    Note,
    PREDICTED_GROUPS,
    Score,
    TechniqueSeq,
    alignment_from_score,
    derive_glissando,
    expand_to_frames,
    inventory_sections,
    note_index_per_frame,
    require_valid,
    silence_phoneme_id,
)

NOISE_FLOOR_DB = 0.0
HARMONIC_PEAK_DB = 24.0
HARMONIC_DECAY = 0.55          # amplitude factor per harmonic step
N_HARMONICS = 4
BIN_RANGE_SEMITONES = (36.0, 96.0)
BIN_SIGMA_FRACTION = 0.05      # gaussian bump width as fraction of n_bins
FALSETTO_LOW_CUT_DB = 6.0
PHARYNGEAL_BOOST_DB = 4.0

# phrase-level sampling probabilities used by gen_dataset; tests check
# dataset marginals against these.
SAMPLING_PROBS = {
    "intensity": (0.5, 0.25, 0.25),
    "mix_falsetto": (0.5, 0.25, 0.25),
    "breathy": 0.3,
    "bubble": 0.3,
    "vibrato": 0.3,
    "pharyngeal": 0.3,
}
VIBRATO_WORD_KEEP = 0.8        # per-word keep rate when the phrase has vibrato
REST_WORD_PROB = 0.15
TWO_NOTE_WORD_PROB = 0.3


@dataclass(frozen=True)
class OracleConfig:
    frame_rate_hz: float = 100.0
    n_bins: int = 16
    vibrato_rate_hz: float = 6.0
    vibrato_depth_semitones: float = 0.6
    bubble_gap_period_frames: int = 12
    bubble_gap_len_frames: int = 3
    breathy_noise_db: float = 12.0
    intensity_gain_db: float = 6.0
    rng_seed: int = 0

    def __post_init__(self):
        if self.frame_rate_hz <= 0 or self.vibrato_rate_hz <= 0:
            raise ContractError("oracle config: rates must be positive")
        if self.bubble_gap_period_frames <= 0 or self.bubble_gap_len_frames <= 0:
            raise ContractError("oracle config: bubble periods must be positive")
        if self.n_bins < 4:
            raise ContractError("oracle config: n_bins must be >= 4")


@dataclass(frozen=True)
class PitchTrack:
    f0_semitones: np.ndarray   # MIDI-semitone space, 0 where unvoiced
    voicing: np.ndarray        # {0, 1} per frame

    def __post_init__(self):
        if len(self.f0_semitones) != len(self.voicing):
            raise ContractError("pitch track: f0 and voicing lengths differ")

    @property
    def n_frames(self) -> int:
        return len(self.f0_semitones)


def semitone_to_hz(st):
    return 440.0 * np.power(2.0, (np.asarray(st, dtype=float) - 69.0) / 12.0)


def hz_to_semitone(hz):
    return 69.0 + 12.0 * np.log2(np.asarray(hz, dtype=float) / 440.0)


def splitmix64(x: int) -> int:
    """One round of splitmix64; used to derive independent item seeds."""
    x = (x + 0x9E3779B97F4A7C15) & 0xFFFFFFFFFFFFFFFF
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & 0xFFFFFFFFFFFFFFFF
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & 0xFFFFFFFFFFFFFFFF
    return x ^ (x >> 31)


def item_seed(seed: int, index: int) -> int:
    return (seed & 0xFFFFFFFFFFFFFFFF) ^ splitmix64(index)


# --- F0 rendering -----------------------------------------------------------

def _frame_flags(values, alignment: Alignment) -> np.ndarray:
    return np.asarray(expand_to_frames(list(values), alignment), dtype=float)


def render_f0(score: Score, techniques: TechniqueSeq, alignment: Alignment,
              config: OracleConfig) -> PitchTrack:
    require_valid(score)
    total = alignment.total_frames
    note_of_frame = note_index_per_frame(score)
    if len(note_of_frame) != total:
        raise ContractError("alignment total does not match note durations")
    midi = np.array([n.midi_pitch for n in score.notes], dtype=float)
    f0 = midi[note_of_frame]
    voicing = (f0 > 0).astype(float)

    # glissando: interpolate through note midpoints inside flagged words
    gliss = derive_glissando(score)
    note_starts = np.cumsum([0] + [n.duration_frames for n in score.notes])
    for w, (s, e) in enumerate(score.word_spans):
        if not any(gliss[i] for i in range(s, e)):
            continue
        notes_in_word = sorted({k for i in range(s, e) for k in score.phoneme_to_notes[i]})
        anchors = [
            (note_starts[k] + score.notes[k].duration_frames / 2.0, midi[k])
            for k in notes_in_word
            if score.notes[k].midi_pitch > 0
        ]
        if len(anchors) < 2:
            continue
        ws = alignment.phoneme_frames[s][0]
        we = alignment.phoneme_frames[e - 1][0] + alignment.phoneme_frames[e - 1][1]
        frames = np.arange(ws, we, dtype=float)
        interp = np.interp(frames, [a[0] for a in anchors], [a[1] for a in anchors])
        seg = voicing[ws:we] > 0
        f0[ws:we][seg] = interp[seg]

    k = np.arange(total, dtype=float)
    vib = _frame_flags(techniques.vibrato, alignment) > 0
    f0 = np.where(
        vib & (voicing > 0),
        f0 + config.vibrato_depth_semitones
        * np.sin(2.0 * math.pi * config.vibrato_rate_hz * k / config.frame_rate_hz),
        f0,
    )

    bub = _frame_flags(techniques.bubble, alignment) > 0
    period, gap = config.bubble_gap_period_frames, config.bubble_gap_len_frames
    in_gap = (k >= period) & (np.mod(k, period) < gap)
    gap_frames = bub & in_gap
    voicing[gap_frames] = 0.0
    f0[gap_frames] = 0.0
    f0[voicing == 0] = 0.0
    return PitchTrack(f0, voicing)


# --- pseudo-mel rendering ---------------------------------------------------

def _harmonic_template(f0_voiced: np.ndarray, n_bins: int) -> np.ndarray:
    """Gaussian bumps at harmonic positions, in dB above the floor."""
    lo, hi = BIN_RANGE_SEMITONES
    sigma = BIN_SIGMA_FRACTION * n_bins
    bins = np.arange(n_bins, dtype=float)
    out = np.zeros((len(f0_voiced), n_bins))
    for h in range(1, N_HARMONICS + 1):
        st = f0_voiced + 12.0 * math.log2(h)
        pos = (st - lo) / (hi - lo) * (n_bins - 1)
        amp = HARMONIC_PEAK_DB * HARMONIC_DECAY ** (h - 1)
        out += amp * np.exp(-0.5 * ((bins[None, :] - pos[:, None]) / sigma) ** 2)
    return out


def render_mel(score: Score, techniques: TechniqueSeq, pitch: PitchTrack,
               config: OracleConfig) -> np.ndarray:
    require_valid(score)
    alignment = alignment_from_score(score)
    total = alignment.total_frames
    if pitch.n_frames != total:
        raise ContractError(
            f"render_mel: pitch has {pitch.n_frames} frames, score has {total}"
        )
    n_bins = config.n_bins
    mel = np.full((total, n_bins), NOISE_FLOOR_DB, dtype=float)
    voiced = pitch.voicing > 0
    if not np.any(voiced):
        return mel

    contrast = np.ones(total)
    breathy = _frame_flags(techniques.breathy, alignment) > 0
    contrast[breathy] = 0.5

    template = np.zeros((total, n_bins))
    template[voiced] = _harmonic_template(pitch.f0_semitones[voiced], n_bins)
    mel += contrast[:, None] * template * voiced[:, None]

    rng = np.random.default_rng(config.rng_seed)
    noise = rng.uniform(0.0, config.breathy_noise_db, size=(total, n_bins))
    mel[breathy & voiced] += noise[breathy & voiced]

    intensity = _frame_flags(techniques.intensity, alignment)
    mel[(intensity == 1) & voiced] += config.intensity_gain_db
    mel[(intensity == 2) & voiced] -= config.intensity_gain_db

    q = n_bins // 4
    register = _frame_flags(techniques.mix_falsetto, alignment)
    mel[np.ix_((register == 1) & voiced, np.arange(q))] -= FALSETTO_LOW_CUT_DB
    mel[np.ix_((register == 2) & voiced, np.arange(q))] -= FALSETTO_LOW_CUT_DB / 2.0

    phar = _frame_flags(techniques.pharyngeal, alignment) > 0
    mel[np.ix_(phar & voiced, np.arange(q, 2 * q))] += PHARYNGEAL_BOOST_DB

    mel[~voiced] = NOISE_FLOOR_DB
    return mel


# --- random data ------------------------------------------------------------

def random_score(rng: np.random.Generator) -> Score:
    language = LANGUAGES[rng.integers(len(LANGUAGES))]
    identity = predictor.IDENTITIES[rng.integers(len(predictor.IDENTITIES))]
    lo, hi = inventory_sections()[language]
    sil = silence_phoneme_id()

    phonemes, spans, notes, refs = [], [], [], []

    def add_rest_word():
        start = len(phonemes)
        phonemes.append(sil)
        notes.append(Note(0, int(rng.integers(5, 41)), "rest"))
        refs.append((len(notes) - 1,))
        spans.append((start, start + 1))

    n_words = int(rng.integers(2, 9))
    for w in range(n_words):
        if w > 0 and rng.random() < REST_WORD_PROB:
            add_rest_word()
        start = len(phonemes)
        n_ph = int(rng.integers(1, 5))
        word_ph = [int(rng.integers(lo, hi)) for _ in range(n_ph)]
        if rng.random() < TWO_NOTE_WORD_PROB:
            p1 = int(rng.integers(48, 73))
            step = int(rng.integers(2, 6)) * (1 if rng.random() < 0.5 else -1)
            p2 = int(np.clip(p1 + step, 48, 72))
            if p2 == p1:
                p2 = p1 + 2 if p1 + 2 <= 72 else p1 - 2
            a = len(notes)
            notes.append(Note(p1, int(rng.integers(5, 41)), "normal"))
            notes.append(Note(p2, int(rng.integers(5, 41)), "slur"))
            if n_ph == 1:
                refs.append((a, a + 1))
            else:
                half = (n_ph + 1) // 2
                for i in range(n_ph):
                    refs.append((a,) if i < half else (a + 1,))
        else:
            notes.append(Note(int(rng.integers(48, 73)), int(rng.integers(5, 41)), "normal"))
            refs.extend([(len(notes) - 1,)] * n_ph)
        phonemes.extend(word_ph)
        spans.append((start, start + n_ph))

    return Score(
        phonemes=tuple(phonemes),
        word_spans=tuple(spans),
        notes=tuple(notes),
        phoneme_to_notes=tuple(refs),
        language=language,
        singer_id=identity,
    )


def random_profile(rng: np.random.Generator) -> dict:
    profile = {}
    for g in ("intensity", "mix_falsetto"):
        profile[g] = int(rng.choice(3, p=SAMPLING_PROBS[g]))
    for g in ("breathy", "bubble", "vibrato", "pharyngeal"):
        profile[g] = int(rng.random() < SAMPLING_PROBS[g])
    return profile


def techniques_from_profile(score: Score, profile: dict,
                            rng: np.random.Generator) -> TechniqueSeq:
    """Phrase profile applied to lyric phonemes; silence stays label 0.

    Vibrato lands on a random subset of words (at least one) so labels vary
    at phoneme level while the phrase majority follows the profile.
    """
    n = score.n_phonemes
    sil = silence_phoneme_id()
    lyric = np.array([p != sil for p in score.phonemes])
    groups = {}
    for g in PREDICTED_GROUPS:
        vals = np.zeros(n, dtype=int)
        if profile.get(g, 0):
            vals[lyric] = profile[g]
        groups[g] = vals
    if profile.get("vibrato", 0):
        lyric_words = [
            (s, e) for s, e in score.word_spans if any(lyric[s:e])
        ]
        keep = [rng.random() < VIBRATO_WORD_KEEP for _ in lyric_words]
        if not any(keep):
            keep[int(rng.integers(len(lyric_words)))] = True
        vib = np.zeros(n, dtype=int)
        for (s, e), k in zip(lyric_words, keep):
            if k:
                vib[s:e] = 1
        vib[~lyric] = 0
        groups["vibrato"] = vib
    groups["glissando"] = np.array(derive_glissando(score), dtype=int)
    return TechniqueSeq.from_dict({g: tuple(v) for g, v in groups.items()})


# --- dataset generation -----------------------------------------------------

def render_item(index: int, seed: int, config: OracleConfig):
    """Everything for one dataset item, reproducible from (seed, index)."""
    sub = item_seed(seed, index)
    rng = np.random.default_rng(sub)
    score = random_score(rng)
    profile = random_profile(rng)
    techniques = techniques_from_profile(score, profile, rng)
    alignment = alignment_from_score(score)
    item_config = replace(config, rng_seed=sub)
    pitch = render_f0(score, techniques, alignment, item_config)
    mel = render_mel(score, techniques, pitch, item_config)
    metadata = {
        "techniques": profile,
        "language": score.language,
        "identity": score.singer_id,
    }
    prompt = predictor.gen_prompt(metadata, rng)
    return score, techniques, pitch, mel, profile, prompt


def _write_item(out_dir: Path, item_id: str, rendered) -> None:
    from .score import write_score

    score, techniques, pitch, mel, _, prompt = rendered
    d = out_dir / item_id
    d.mkdir(parents=True, exist_ok=True)
    write_score(d / "score.txt", score, techniques)
    write_array(d / "f0.bin", np.stack([pitch.f0_semitones, pitch.voicing]))
    write_array(d / "mel.bin", mel)
    (d / "prompt.txt").write_text(prompt + "\n", encoding="utf-8", newline="\n")


def manifest_line(item_id: str, profile: dict, language: str, identity: str,
                  n_frames: int) -> str:
    parts = [item_id]
    parts += [f"{g}={profile[g]}" for g in PREDICTED_GROUPS]
    parts += [f"language={language}", f"identity={identity}", f"frames={n_frames}"]
    return " ".join(parts)


def gen_dataset(out_dir, n_items: int, config: OracleConfig | None = None,
                seed: int = 0, n_workers: int = 1) -> Path:
    """Render ``n_items`` items under ``out_dir``; returns the manifest path.

    Fully reproducible: item i depends only on (seed, i, config), so worker
    count does not change the bytes written.
    """
    config = config or OracleConfig()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    ids = [f"item_{i:05d}" for i in range(n_items)]
    lines = []
    if n_workers > 1 and n_items > 1:
        import concurrent.futures

        with concurrent.futures.ProcessPoolExecutor(max_workers=n_workers) as ex:
            rendered = list(ex.map(_render_for_pool, [(i, seed, config) for i in range(n_items)]))
    else:
        rendered = [render_item(i, seed, config) for i in range(n_items)]
    for item_id, item in zip(ids, rendered):
        _write_item(out_dir, item_id, item)
        score, _, pitch, _, profile, _ = item
        lines.append(manifest_line(item_id, profile, score.language, score.singer_id,
                                   pitch.n_frames))
    manifest = out_dir / "manifest.txt"
    manifest.write_text("".join(line + "\n" for line in lines), encoding="utf-8",
                        newline="\n")
    return manifest


def _render_for_pool(args):
    return render_item(*args)


def read_manifest(path) -> list:
    """Parse manifest lines into (item_id, fields dict)."""
    out = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        toks = line.split()
        fields = dict(tok.split("=", 1) for tok in toks[1:])
        out.append((toks[0], fields))
    return out
