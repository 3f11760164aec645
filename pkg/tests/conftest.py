import random

import pytest

from blindpay.catalog import LicensePlaintext, LicenseSpec, setup
from blindpay.group import GroupParams, gen_params

# Tiny hand-checkable group: 23 = 2*11 + 1, and 4 generates the 11 quadratic
# residues mod 23.
PARAMS23 = GroupParams(n=23, q=11, g=4, bits=5)


@pytest.fixture(scope="session")
def params23():
    return PARAMS23.validate()


@pytest.fixture(scope="session")
def params16():
    return gen_params(16, seed=101).validate()


@pytest.fixture(scope="session")
def params32():
    return gen_params(32, seed=102).validate()


@pytest.fixture(scope="session")
def params64():
    return gen_params(64, seed=103).validate()


def make_catalog(params, prices=(1, 2, 3, 5), seed=7, shared_x=None, terms="read-only"):
    rng = random.Random(seed)
    specs = []
    for p in prices:
        lid = f"lic-{p}"
        plain = LicensePlaintext(license_id=lid, terms=terms,
                                 content_key=rng.randbytes(16),
                                 permissions=("read",))
        specs.append(LicenseSpec(license_id=lid, content_id=f"content-{p}", price=p,
                                 terms=terms, plaintext=plain, x_label=shared_x))
    return setup(params, specs, rng=rng)


@pytest.fixture()
def small_catalog(params64):
    keys, cat = make_catalog(params64)
    return keys, cat
