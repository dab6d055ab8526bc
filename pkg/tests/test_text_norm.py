import unicodedata

from hypothesis import given, settings
from hypothesis import strategies as st

from niqqudless.text_norm import (
    DIACRITIC_CODEPOINTS,
    GERESH,
    GERSHAYIM,
    is_diacritic,
    is_normalized,
    is_punctuation,
    normalize_for_scoring,
    strip_diacritics,
)

GIFT = "מַתָּנָה"
CONDITIONING = "מַתְנֶה"

hebrew_ish = st.text(
    alphabet=st.sampled_from(
        [chr(c) for c in range(0x0591, 0x05F5)] + list("abc 123\t\n,.!?-– ") + [GERESH, GERSHAYIM]
    ),
    max_size=60,
)


def test_gift_and_conditioning_collide():
    assert strip_diacritics(GIFT) == "מתנה"
    assert strip_diacritics(CONDITIONING) == "מתנה"


def test_strip_is_identity_without_marks():
    assert strip_diacritics("abc 123") == "abc 123"


def test_scoring_examples():
    assert normalize_for_scoring("שלום, עולם!") == "שלום עולם"
    assert normalize_for_scoring("  a   b ") == "a b"
    assert normalize_for_scoring(GIFT + ".") == "מתנה"


def test_diacritic_class_matches_codepoint_list():
    expected = set(range(0x0591, 0x05BE)) | {0x05BF, 0x05C1, 0x05C2, 0x05C4, 0x05C5, 0x05C7}
    assert set(DIACRITIC_CODEPOINTS) == expected
    for cp in range(0x0580, 0x0600):
        assert is_diacritic(chr(cp)) == (cp in expected)


def test_hebrew_punctuation():
    for ch in (GERESH, GERSHAYIM, "־", "׀", "׃", "׆"):
        assert is_punctuation(ch)
    assert normalize_for_scoring("צה" + GERSHAYIM + "ל") == "צהל"
    # maqaf joins the two words after deletion
    assert normalize_for_scoring("בית־ספר") == "ביתספר"


def test_mixed_script_passes_through():
    assert normalize_for_scoring("iPhone 15 חדש") == "iPhone 15 חדש"


def test_empty():
    assert normalize_for_scoring("") == ""
    assert is_normalized("")


@settings(max_examples=500, deadline=None)
@given(hebrew_ish)
def test_normalize_idempotent(text):
    once = normalize_for_scoring(text)
    assert normalize_for_scoring(once) == once


@settings(max_examples=500, deadline=None)
@given(hebrew_ish)
def test_output_has_no_marks_or_punctuation(text):
    out = normalize_for_scoring(text)
    assert is_normalized(out)
    assert not any(is_diacritic(c) or is_punctuation(c) for c in out)
    assert out == out.strip() and "  " not in out


@settings(max_examples=500, deadline=None)
@given(hebrew_ish)
def test_strip_keeps_other_codepoints_in_order(text):
    text = unicodedata.normalize("NFC", text)
    kept = "".join(c for c in text if not is_diacritic(c))
    assert strip_diacritics(text) == kept
