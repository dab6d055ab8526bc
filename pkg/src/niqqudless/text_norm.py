"""Hebrew text normalization.

Everything downstream (tokenizer training, WER/CER scoring, manifests) works on
the diacritic-free surface form produced here.
"""
import re
import unicodedata

# Niqqud points and cantillation marks. Maqaf (U+05BE), paseq (U+05C0),
# sof pasuq (U+05C3) and nun hafukha (U+05C6) are punctuation, not marks.
DIACRITIC_CODEPOINTS = frozenset(
    [*range(0x0591, 0x05BE), 0x05BF, 0x05C1, 0x05C2, 0x05C4, 0x05C5, 0x05C7]
)

GERESH = "\u05F3"
GERSHAYIM = "\u05F4"

_DIACRITIC_RE = re.compile("[\u0591-\u05BD\u05BF\u05C1\u05C2\u05C4\u05C5\u05C7]")


def is_diacritic(ch: str) -> bool:
    return ord(ch) in DIACRITIC_CODEPOINTS


def is_punctuation(ch: str) -> bool:
    """Unicode general category P*, plus the Hebrew geresh/gershayim."""
    return unicodedata.category(ch).startswith("P") or ch in (GERESH, GERSHAYIM)


def strip_diacritics(text: str) -> str:
    """Remove niqqud and cantillation marks, leaving every other codepoint in place.

    >>> strip_diacritics("מַתָּנָה") == strip_diacritics("מַתְנֶה") == "מתנה"
    True
    """
    return _DIACRITIC_RE.sub("", text)


def remove_punctuation(text: str) -> str:
    return "".join(ch for ch in text if not is_punctuation(ch))


def collapse_whitespace(text: str) -> str:
    return " ".join(text.split())


def normalize_for_scoring(text: str) -> str:
    """Canonical plain form used for training text and for WER/CER.

    NFC, strip diacritics, delete punctuation (maqaf included), NFC again
    (deleting marks can expose new compositions), collapse whitespace.
    The result is a fixed point of this function.
    """
    text = unicodedata.normalize("NFC", text)
    text = remove_punctuation(strip_diacritics(text))
    text = unicodedata.normalize("NFC", text)
    return collapse_whitespace(text)


def is_normalized(text: str) -> bool:
    return normalize_for_scoring(text) == text
