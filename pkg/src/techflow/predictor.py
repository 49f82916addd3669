"""Prompt-driven technique prediction.

Two halves: deterministic prompt plumbing (templates, synonym table, prompt
generation, keyword extraction, token hashing) and a trainable model that
decodes a natural-language prompt plus a score into per-phoneme technique
labels for the six predictable groups (glissando stays rule-derived).
"""

from __future__ import annotations

import importlib.resources
import re
import zlib
from dataclasses import dataclass

import numpy as np

from .errors import ContractError
from .score import GROUP_NAMES, PREDICTED_GROUPS, Score, TechniqueSeq

# keyword -> (group, label) for promptable technique values; group label 0
# is the unprompted default everywhere.
KEYWORD_TO_LABEL = {
    "strong": ("intensity", 1),
    "weak": ("intensity", 2),
    "falsetto": ("mix_falsetto", 1),
    "mixed_voice": ("mix_falsetto", 2),
    "breathy": ("breathy", 1),
    "bubble": ("bubble", 1),
    "vibrato": ("vibrato", 1),
    "pharyngeal": ("pharyngeal", 1),
}

IDENTITIES = ("alto", "tenor", "soprano", "bass")

N_HASH_BUCKETS = 4096
EMPTY_TOKEN_BUCKET = 0

_WORD_RE = re.compile(r"[a-z0-9]+")


def tokenize(text: str) -> list:
    """Lowercase words, punctuation (incl. hyphens) acting as separators."""
    return _WORD_RE.findall(text.lower())


def hash_token(word: str) -> int:
    """Stable bucket id in [1, N_HASH_BUCKETS); bucket 0 marks empty text."""
    return 1 + zlib.crc32(word.encode("utf-8")) % (N_HASH_BUCKETS - 1)


@dataclass(frozen=True)
class SynonymTable:
    tech: dict   # keyword -> list of synonym phrases
    identity: dict
    language: dict

    def tech_phrases(self):
        """(phrase tokens, keyword) pairs, longest phrase first."""
        pairs = []
        for kw, phrases in self.tech.items():
            for p in phrases:
                pairs.append((tuple(tokenize(p)), kw))
        pairs.sort(key=lambda kv: -len(kv[0]))
        return pairs


_TABLE_CACHE = None
_TEMPLATE_CACHE = None


def _read_data(name: str) -> str:
    return (
        importlib.resources.files("techflow.data").joinpath(name).read_text(encoding="utf-8")
    )


def load_synonym_table() -> SynonymTable:
    global _TABLE_CACHE
    if _TABLE_CACHE is None:
        groups = {"tech": {}, "id": {}, "lan": {}}
        for line in _read_data("synonyms.txt").splitlines():
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            cls, keyword, rest = (part.strip() for part in line.split(":", 2))
            groups[cls][keyword] = [p.strip() for p in rest.split("|")]
        _TABLE_CACHE = SynonymTable(groups["tech"], groups["id"], groups["lan"])
    return _TABLE_CACHE


def load_templates() -> tuple:
    global _TEMPLATE_CACHE
    if _TEMPLATE_CACHE is None:
        lines = [
            ln.strip()
            for ln in _read_data("templates.txt").splitlines()
            if ln.strip() and not ln.strip().startswith("#")
        ]
        _TEMPLATE_CACHE = tuple(lines)
    return _TEMPLATE_CACHE


def profile_keywords(profile: dict) -> list:
    """Active technique keywords for a phrase-level profile, in group order."""
    out = []
    for g in PREDICTED_GROUPS:
        label = int(profile.get(g, 0))
        if label == 0:
            continue
        for kw, (kg, kl) in KEYWORD_TO_LABEL.items():
            if kg == g and kl == label:
                out.append(kw)
                break
        else:
            raise ContractError(f"no prompt keyword for {g}={label}")
    return out


def keywords_to_profile(keywords) -> dict:
    profile = {g: 0 for g in PREDICTED_GROUPS}
    for kw in keywords:
        if kw == "none":
            continue
        g, label = KEYWORD_TO_LABEL[kw]
        profile[g] = label
    return profile


def _join_phrases(phrases: list) -> str:
    if len(phrases) == 1:
        return phrases[0]
    return ", ".join(phrases[:-1]) + " and " + phrases[-1]


def gen_prompt(metadata: dict, rng: np.random.Generator) -> str:
    """Fill a uniformly chosen template with uniformly chosen synonyms.

    metadata: {"techniques": phrase profile, "language": tag, "identity": tag}
    """
    table = load_synonym_table()
    templates = load_templates()
    keywords = profile_keywords(metadata.get("techniques", {}))
    if not keywords:
        keywords = ["none"]
    template = templates[rng.integers(len(templates))]
    fills = []
    for kw in keywords:
        synonyms = table.tech.get(kw)
        if not synonyms:
            raise ContractError(f"technique keyword {kw!r} has no synonyms")
        fills.append(synonyms[rng.integers(len(synonyms))])
    prompt = template.replace("[tech]", _join_phrases(fills))
    if "[id]" in prompt:
        identity = metadata.get("identity", IDENTITIES[0])
        choices = table.identity.get(identity, [identity])
        prompt = prompt.replace("[id]", choices[rng.integers(len(choices))])
    if "[lan]" in prompt:
        language = metadata.get("language", "en")
        choices = table.language.get(language, [language])
        prompt = prompt.replace("[lan]", choices[rng.integers(len(choices))])
    return prompt


def extract_keywords(prompt: str, table: SynonymTable | None = None) -> set:
    """Recover the technique keywords inserted into a generated prompt.

    Greedy longest-phrase-first scan over the tokenized prompt; consumed
    tokens cannot participate in a second match.
    """
    if table is None:
        table = load_synonym_table()
    tokens = tokenize(prompt)
    used = [False] * len(tokens)
    found = set()
    for phrase, keyword in table.tech_phrases():
        n = len(phrase)
        for start in range(0, len(tokens) - n + 1):
            if any(used[start : start + n]):
                continue
            if tuple(tokens[start : start + n]) == phrase:
                for j in range(start, start + n):
                    used[j] = True
                found.add(keyword)
    return found
