"""TextGrid alignments, phone inventories and edit-distance sequence alignment."""

from __future__ import annotations

import bisect
import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

GAP = "*"

VOWEL = "vowel"
CONSONANT = "consonant"
SILENCE = "silence"
OTHER = "other"

CORNERS = ("i", "u", "a", "ae")


class TextGridError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


@dataclass(frozen=True)
class Interval:
    t0: float
    t1: float
    label: str

    @property
    def duration(self) -> float:
        return self.t1 - self.t0


@dataclass(frozen=True)
class Alignment:
    xmin: float
    xmax: float
    tiers: dict = field(default_factory=dict)  # name -> tuple[Interval, ...]

    @property
    def total_duration(self) -> float:
        return self.xmax - self.xmin

    def tier(self, name: str | None = None) -> tuple:
        """Return a tier by name; with no name, the phone tier."""
        if name is not None:
            if name not in self.tiers:
                raise KeyError(f"no tier named {name!r}")
            return self.tiers[name]
        for candidate in ("phones", "phone", "phonemes", "segments"):
            if candidate in self.tiers:
                return self.tiers[candidate]
        raise KeyError("alignment has no phone tier")


@dataclass(frozen=True)
class LanguageInventory:
    language: str
    classes: Mapping[str, str]
    corner_vowels: Mapping[str, str]
    silence_labels: frozenset = frozenset({"", "sil", "sp"})

    def __post_init__(self):
        for corner in ("i", "u", "a"):
            if corner not in self.corner_vowels:
                raise ValueError(f"{self.language}: corner vowel /{corner}/ missing")
        for corner, label in self.corner_vowels.items():
            if self.classes.get(label) != VOWEL:
                raise ValueError(f"{self.language}: corner vowel {label!r} is not classified as a vowel")

    def classify(self, label: str) -> str:
        if label in self.silence_labels:
            return SILENCE
        return self.classes.get(label, OTHER)

    def corner_of(self, label: str) -> str | None:
        for corner, lab in self.corner_vowels.items():
            if lab == label:
                return corner
        return None

    @classmethod
    def from_dict(cls, d: Mapping) -> "LanguageInventory":
        classes = {}
        for label in d.get("vowels", []):
            classes[label] = VOWEL
        for label in d.get("consonants", []):
            classes[label] = CONSONANT
        silence = frozenset(d.get("silence", ["", "sil", "sp"]))
        return cls(d["language"], classes, dict(d["corner_vowels"]), silence)

    def to_dict(self) -> dict:
        return {
            "language": self.language,
            "vowels": sorted(k for k, v in self.classes.items() if v == VOWEL),
            "consonants": sorted(k for k, v in self.classes.items() if v == CONSONANT),
            "corner_vowels": dict(self.corner_vowels),
            "silence": sorted(self.silence_labels),
        }


def load_inventory(path) -> LanguageInventory:
    return LanguageInventory.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


# ARPAbet. Glides W and Y are grouped with the vowels, which is how the
# phoneme-accuracy worked example counts them (8 vowels incl. W).
_EN_VOWELS = "AA AE AH AO AW AY EH ER EY IH IY OW OY UH UW W Y".split()
_EN_CONSONANTS = "B CH D DH F G HH JH K L M N NG P R S SH T TH V Z ZH".split()
_KO_VOWELS = "a e ae i o u eo eu ui ya yo yu ye wa wo we wi".split()
_KO_CONSONANTS = "p ph pp t th tt k kh kk s ss h c ch cc m n ng l".split()
_TA_VOWELS = "a aa i ii u uu e ee ai o oo au ae".split()
_TA_CONSONANTS = "k ng c ny t nn th n p m y r l v zh ll rr nnn j sh s h".split()

BUILTIN_INVENTORIES = {
    "en": LanguageInventory.from_dict(
        {"language": "en", "vowels": _EN_VOWELS, "consonants": _EN_CONSONANTS,
         "corner_vowels": {"i": "IY", "u": "UW", "a": "AA", "ae": "AE"}}
    ),
    "ko": LanguageInventory.from_dict(
        {"language": "ko", "vowels": _KO_VOWELS, "consonants": _KO_CONSONANTS,
         "corner_vowels": {"i": "i", "u": "u", "a": "a", "ae": "ae"}}
    ),
    "ta": LanguageInventory.from_dict(
        {"language": "ta", "vowels": _TA_VOWELS, "consonants": _TA_CONSONANTS,
         "corner_vowels": {"i": "i", "u": "u", "a": "a", "ae": "ae"}}
    ),
}


@dataclass(frozen=True)
class PhoneSequence:
    labels: tuple
    classes: tuple

    @classmethod
    def from_labels(cls, labels: Iterable[str], inventory: LanguageInventory) -> "PhoneSequence":
        labels = tuple(labels)
        return cls(labels, tuple(inventory.classify(lab) for lab in labels))

    @classmethod
    def from_alignment(cls, alignment: Alignment, inventory: LanguageInventory, tier: str | None = None):
        """Canonical sequence: the non-silence labels of the phone tier."""
        labels = [iv.label for iv in alignment.tier(tier) if inventory.classify(iv.label) != SILENCE]
        return cls.from_labels(labels, inventory)

    def __len__(self):
        return len(self.labels)


# -- TextGrid parsing --------------------------------------------------------

_TOKEN = re.compile(
    r'"(?P<str>(?:[^"]|"")*)"'
    r"|(?P<flag><exists>|<absent>)"
    r"|(?P<idx>\[\s*\d*\s*\])"
    r"|(?P<num>(?<![\w.])-?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?(?![\w.]))"
    r"|(?P<comment>![^\n]*)"
)


def _tokens(text: str):
    line_starts = [0] + [m.end() for m in re.finditer("\n", text)]
    for m in _TOKEN.finditer(text):
        kind = m.lastgroup
        if kind in ("idx", "comment"):
            continue
        line = bisect.bisect_right(line_starts, m.start())
        if kind == "str":
            yield ("str", m.group("str").replace('""', '"'), line)
        elif kind == "flag":
            yield ("flag", m.group("flag"), line)
        else:
            yield ("num", float(m.group("num")), line)


class _Stream:
    def __init__(self, text):
        self.toks = list(_tokens(text))
        self.pos = 0

    def _next(self, kind):
        if self.pos >= len(self.toks):
            last = self.toks[-1][2] if self.toks else 1
            raise TextGridError(f"unexpected end of file (wanted {kind})", last)
        k, v, line = self.toks[self.pos]
        if k != kind:
            raise TextGridError(f"expected {kind}, found {v!r}", line)
        self.pos += 1
        return v, line

    def num(self):
        return self._next("num")

    def str(self):
        return self._next("str")

    def peek_kind(self):
        return self.toks[self.pos][0] if self.pos < len(self.toks) else None


def parse_textgrid(text: str) -> Alignment:
    """Parse a long- or short-format TextGrid. Point tiers are skipped."""
    s = _Stream(text)
    ftype, line = s.str()
    if ftype != "ooTextFile":
        raise TextGridError(f"bad file type {ftype!r}", line)
    oclass, line = s.str()
    if oclass != "TextGrid":
        raise TextGridError(f"bad object class {oclass!r}", line)
    xmin, line = s.num()
    xmax, _ = s.num()
    if xmin > xmax:
        raise TextGridError(f"xmin {xmin} > xmax {xmax}", line)
    if s.peek_kind() == "flag":
        flag, _ = s._next("flag")
        if flag == "<absent>":
            return Alignment(xmin, xmax, {})
    n_tiers, _ = s.num()
    tiers = {}
    for _ in range(int(n_tiers)):
        tclass, tline = s.str()
        name, _ = s.str()
        txmin, _ = s.num()
        txmax, _ = s.num()
        if txmin > txmax:
            raise TextGridError(f"tier {name!r}: xmin > xmax", tline)
        count, _ = s.num()
        if tclass == "IntervalTier":
            intervals = []
            for _ in range(int(count)):
                t0, iline = s.num()
                t1, _ = s.num()
                label, _ = s.str()
                if not t0 < t1:
                    raise TextGridError(f"tier {name!r}: interval with t0 >= t1", iline)
                if intervals and t0 < intervals[-1].t1 - 1e-9:
                    raise TextGridError(f"tier {name!r}: overlapping intervals", iline)
                intervals.append(Interval(t0, t1, label.strip()))
            tiers[name] = tuple(intervals)
        elif tclass == "TextTier":
            for _ in range(int(count)):
                s.num()
                s.str()
        else:
            raise TextGridError(f"unknown tier class {tclass!r}", tline)
    return Alignment(xmin, xmax, tiers)


def read_textgrid(path) -> Alignment:
    raw = Path(path).read_bytes()
    for enc in ("utf-8-sig", "utf-16"):
        try:
            return parse_textgrid(raw.decode(enc))
        except UnicodeDecodeError:
            continue
    raise TextGridError(f"{path}: cannot decode as UTF-8 or UTF-16")


def _q(label: str) -> str:
    return '"' + label.replace('"', '""') + '"'


def serialize_textgrid(alignment: Alignment) -> str:
    """Long-format TextGrid text. Floats are written with repr (exact round trip)."""
    out = [
        'File type = "ooTextFile"',
        'Object class = "TextGrid"',
        "",
        f"xmin = {alignment.xmin!r}",
        f"xmax = {alignment.xmax!r}",
        "tiers? <exists>",
        f"size = {len(alignment.tiers)}",
        "item []:",
    ]
    for i, (name, intervals) in enumerate(alignment.tiers.items(), start=1):
        out += [
            f"    item [{i}]:",
            '        class = "IntervalTier"',
            f"        name = {_q(name)}",
            f"        xmin = {alignment.xmin!r}",
            f"        xmax = {alignment.xmax!r}",
            f"        intervals: size = {len(intervals)}",
        ]
        for j, iv in enumerate(intervals, start=1):
            out += [
                f"        intervals [{j}]:",
                f"            xmin = {iv.t0!r}",
                f"            xmax = {iv.t1!r}",
                f"            text = {_q(iv.label)}",
            ]
    return "\n".join(out) + "\n"


def alignment_from_phones(phones: Sequence[tuple[float, float, str]], tier: str = "phones") -> Alignment:
    """Build a one-tier alignment from (t0, t1, label) triples."""
    intervals = tuple(Interval(float(a), float(b), lab) for a, b, lab in phones)
    xmin = intervals[0].t0 if intervals else 0.0
    xmax = intervals[-1].t1 if intervals else 0.0
    return Alignment(xmin, xmax, {tier: intervals})


# -- sequence alignment --------------------------------------------------------


def align_sequences(canonical: Sequence[str] | PhoneSequence, decoded: Sequence[str] | PhoneSequence):
    """Global unit-cost edit-distance alignment.

    Returns a list of (canonical label or GAP, decoded label or GAP) pairs.
    Among optimal paths, traceback prefers match > substitution > deletion
    (canonical against GAP) > insertion (GAP against decoded).
    """
    a = list(canonical.labels if isinstance(canonical, PhoneSequence) else canonical)
    b = list(decoded.labels if isinstance(decoded, PhoneSequence) else decoded)
    n, m = len(a), len(b)
    d = [[0] * (m + 1) for _ in range(n + 1)]
    for i in range(1, n + 1):
        d[i][0] = i
    for j in range(1, m + 1):
        d[0][j] = j
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            sub = d[i - 1][j - 1] + (a[i - 1] != b[j - 1])
            d[i][j] = min(sub, d[i - 1][j] + 1, d[i][j - 1] + 1)

    pairs = []
    i, j = n, m
    while i > 0 or j > 0:
        if i > 0 and j > 0 and d[i][j] == d[i - 1][j - 1] + (a[i - 1] != b[j - 1]):
            pairs.append((a[i - 1], b[j - 1]))
            i, j = i - 1, j - 1
        elif i > 0 and d[i][j] == d[i - 1][j] + 1:
            pairs.append((a[i - 1], GAP))
            i -= 1
        else:
            pairs.append((GAP, b[j - 1]))
            j -= 1
    pairs.reverse()
    return pairs


def alignment_cost(pairs) -> int:
    return sum(1 for c, d in pairs if c != d)


def syllable_count(alignment: Alignment, inventory: LanguageInventory, tier: str | None = None) -> int:
    """Number of vowel-class intervals (one nucleus per syllable)."""
    return sum(1 for iv in alignment.tier(tier) if inventory.classify(iv.label) == VOWEL)
