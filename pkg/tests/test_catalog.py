import random

import pytest

from blindpay.catalog import (
    LicensePlaintext,
    LicenseSpec,
    decrypt_license,
    derive_license_key,
    encrypt_license,
    k_powers_for,
    parse_catalog,
    serialize_catalog,
    setup,
    sign_terms,
    verify_catalog,
    verify_terms,
    with_published_terms,
)
from blindpay.encoding import enc_int
from blindpay.errors import AuthenticationFailure, CatalogFormatError
from blindpay.group import mul_mod, pow_mod

from conftest import make_catalog
from test_group import naive_pow


@pytest.fixture()
def plain():
    return LicensePlaintext(license_id="lic-1", terms="read-only",
                            content_key=b"k" * 16, permissions=("read",))


# --- key derivation -----------------------------------------------------------

def test_derive_price_one_is_x_to_s(params64):
    s, x = 12345, pow_mod(params64.g, 999, params64)
    assert derive_license_key(x, 1, s, params64) == pow_mod(x, s, params64)


def test_derive_tower_composes(params64):
    rng = random.Random(8)
    s = rng.randrange(2, params64.q)
    x = pow_mod(params64.g, rng.randrange(1, params64.q), params64)
    for _ in range(20):
        a, b = rng.randrange(1, 20), rng.randrange(1, 20)
        via_two_hops = derive_license_key(derive_license_key(x, a, s, params64),
                                          b, s, params64)
        assert via_two_hops == derive_license_key(x, a + b, s, params64)


def test_derive_small_group_hand_value(params23):
    # price 3, s = 3: exponent 3^3 mod 11 = 5, so C = 8^5 mod 23.
    # Confirmed by the repeated-multiplication oracle: 8^5 mod 23 = 16.
    assert pow(3, 3, 11) == 5
    oracle = naive_pow(8, 5, 23)
    assert oracle == 16
    assert derive_license_key(8, 3, 3, params23) == oracle


def test_derive_rejects_zero_price(params64):
    with pytest.raises(ValueError):
        derive_license_key(4, 0, 3, params64)


# --- authenticated encryption ----------------------------------------------------

def test_encrypt_roundtrip(params64, plain):
    key = pow_mod(params64.g, 4242, params64)
    blob = encrypt_license(key, plain)
    assert decrypt_license(key, blob) == plain


def test_decrypt_wrong_key_fails_loudly(params64, plain):
    key = pow_mod(params64.g, 4242, params64)
    blob = encrypt_license(key, plain)
    with pytest.raises(AuthenticationFailure):
        decrypt_license(mul_mod(key, params64.g, params64), blob)


def test_decrypt_any_flipped_byte_fails(params64, plain):
    rng = random.Random(77)
    key = pow_mod(params64.g, 4242, params64)
    blob = encrypt_license(key, plain, rng)
    positions = rng.sample(range(len(blob)), min(100, len(blob)))
    for pos in positions:
        tampered = bytearray(blob)
        tampered[pos] ^= 1 << rng.randrange(8)
        with pytest.raises(AuthenticationFailure):
            decrypt_license(key, bytes(tampered))


def test_decrypt_truncated_blob(params64):
    with pytest.raises(AuthenticationFailure):
        decrypt_license(4, b"short")


def test_plaintext_encoding_roundtrip(plain):
    assert LicensePlaintext.decode(plain.encode()) == plain
    empty_perms = LicensePlaintext(license_id="a", terms="t", content_key=b"",
                                   permissions=())
    assert LicensePlaintext.decode(empty_perms.encode()) == empty_perms


# --- signatures -------------------------------------------------------------------

def test_sign_verify_terms(params64, small_catalog):
    keys, cat = small_catalog
    entry = cat.licenses[0]
    assert verify_terms(cat.verify_pk, entry.terms, entry.encrypted_license,
                        entry.terms_signature)
    assert not verify_terms(cat.verify_pk, entry.terms + "!", entry.encrypted_license,
                            entry.terms_signature)


def test_signature_cross_pairing_rejected(params64):
    keys, cat = make_catalog(params64, prices=tuple(range(1, 11)))
    for i, a in enumerate(cat.licenses):
        for j, b in enumerate(cat.licenses):
            expected = i == j
            assert verify_terms(cat.verify_pk, a.terms, a.encrypted_license,
                                b.terms_signature) is expected


def test_sign_terms_matches_verify(params64, small_catalog, plain):
    keys, cat = small_catalog
    sig = sign_terms(keys, "anything", b"blob")
    assert verify_terms(keys.verify_pk, "anything", b"blob", sig)


# --- setup ---------------------------------------------------------------------------

def test_k_powers():
    assert k_powers_for(1) == {1}
    assert k_powers_for(5) == {1, 2, 4}
    assert k_powers_for(8) == {1, 2, 4, 8}
    assert k_powers_for(31) == {1, 2, 4, 8, 16}


def test_setup_k_table_for_max_price_five(params64):
    keys, cat = make_catalog(params64, prices=(1, 5))
    assert set(cat.k_table) == {1, 2, 4}


def test_setup_key_derivation_soundness(params64):
    keys, cat = make_catalog(params64, prices=(1, 2, 3, 5))
    for entry in cat.licenses:
        c = derive_license_key(entry.x, entry.price, keys.s, params64)
        plain = decrypt_license(c, entry.encrypted_license)
        assert plain.terms == entry.terms
        assert plain.license_id == entry.license_id


def test_setup_k_table_consistency(params64):
    keys, cat = make_catalog(params64)
    for t, k in cat.k_table.items():
        assert k == pow_mod(params64.g, pow(keys.s, t, params64.q), params64)


def test_setup_price_one_collapses_tower(params64):
    keys, cat = make_catalog(params64, prices=(1,))
    entry = cat.licenses[0]
    c = pow_mod(entry.x, keys.s, params64)
    assert decrypt_license(c, entry.encrypted_license).license_id == entry.license_id


def test_setup_shared_factor(params64):
    keys, cat = make_catalog(params64, prices=(2, 5), shared_x="family")
    assert cat.licenses[0].x == cat.licenses[1].x


def test_setup_rejects_duplicates_and_bad_prices(params64, plain):
    spec = LicenseSpec("a", "c", 1, "t", plain)
    with pytest.raises(ValueError):
        setup(params64, [spec, spec])
    with pytest.raises(ValueError):
        setup(params64, [LicenseSpec("a", "c", 0, "t", plain)])
    with pytest.raises(ValueError):
        setup(params64, [LicenseSpec("a", "c", 1, "two\nlines", plain)])


def test_setup_deterministic_with_rng(params64):
    k1, c1 = make_catalog(params64, seed=5)
    k2, c2 = make_catalog(params64, seed=5)
    assert k1.s == k2.s
    assert serialize_catalog(c1) == serialize_catalog(c2)


# --- catalog document ------------------------------------------------------------------

def test_catalog_roundtrip_byte_exact(params64):
    keys, cat = make_catalog(params64)
    text = serialize_catalog(cat)
    assert serialize_catalog(parse_catalog(text)) == text


def test_catalog_verify_clean(params64):
    keys, cat = make_catalog(params64)
    assert verify_catalog(cat) == []
    assert verify_catalog(parse_catalog(serialize_catalog(cat))) == []


def test_catalog_verify_flags_tampered_terms(params64):
    keys, cat = make_catalog(params64)
    cat.licenses[0].terms = "read-write"
    problems = verify_catalog(cat)
    assert any("terms signature" in p for p in problems)


def test_catalog_parse_rejects_garbage():
    with pytest.raises(CatalogFormatError):
        parse_catalog("not a catalog\n")
    with pytest.raises(CatalogFormatError):
        parse_catalog("blindpay-catalog: v1\nn: twelve\n")


def test_catalog_contains_no_secrets(params64):
    keys, cat = make_catalog(params64)
    text = serialize_catalog(cat)
    assert str(keys.s) not in text
    assert keys.sign_sk.hex() not in text
    assert enc_int(keys.s).hex() not in text


def test_with_published_terms_republishes(params64):
    keys, cat = make_catalog(params64)
    crooked = with_published_terms(cat, keys, "lic-2", "read-print")
    entry = crooked.entry("lic-2")
    assert entry.terms == "read-print"
    assert verify_catalog(crooked) == []  # signature matches the new claim
    # the original catalog object is untouched
    assert cat.entry("lic-2").terms == "read-only"
