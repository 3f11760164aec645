"""Safe-prime group arithmetic, hash-to-group, and discrete-log equality proofs.

All protocol values live in the order-q subgroup of Z_n* where n = 2q + 1 is
a safe prime, i.e. the quadratic residues mod n.  The subgroup has prime
order, so exponents form the field Z_q and exponent towers reduce mod q.
Staying inside the subgroup is what makes the multiplicative blinding
perfect: g generates every residue, so a blinded value is uniform over the
subgroup whatever it hides.

Functions that the complexity accounting cares about (pow_mod, div_mod)
accept an optional counter object and increment it; validation helpers use
raw pow() and stay off the books.
"""

from __future__ import annotations

import hashlib
import random
import secrets
from dataclasses import dataclass

from .encoding import enc_int
from .errors import MalformedElement

_SMALL_PRIMES = (
    2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67,
    71, 73, 79, 83, 89, 97, 101, 103, 107, 109, 113, 127, 131, 137, 139,
)

# Deterministic Miller-Rabin bases, valid for everything below 3.3e24.
_MR_BASES = (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41)
_MR_DETERMINISTIC_BOUND = 3_317_044_064_679_887_385_961_981


def is_probable_prime(m: int) -> bool:
    """Miller-Rabin.  Deterministic below 3.3e24; above that, 64 extra
    rounds with bases derived from m itself (so the answer never varies
    between runs)."""
    if m < 2:
        return False
    for p in _SMALL_PRIMES:
        if m % p == 0:
            return m == p
    d = m - 1
    r = 0
    while d % 2 == 0:
        d //= 2
        r += 1

    def witness(a: int) -> bool:
        x = pow(a, d, m)
        if x in (1, m - 1):
            return False
        for _ in range(r - 1):
            x = pow(x, 2, m)
            if x == m - 1:
                return False
        return True

    bases = list(_MR_BASES)
    if m >= _MR_DETERMINISTIC_BOUND:
        h = hashlib.sha256(m.to_bytes((m.bit_length() + 7) // 8, "big"))
        extra = random.Random(int.from_bytes(h.digest(), "big"))
        bases += [extra.randrange(2, m - 1) for _ in range(64)]
    return not any(witness(a) for a in bases)


@dataclass(frozen=True)
class GroupParams:
    """Public group description: safe prime n = 2q + 1, generator g of the
    order-q subgroup, and the bit length of n."""

    n: int
    q: int
    g: int
    bits: int

    def validate(self):
        if self.n != 2 * self.q + 1:
            raise ValueError("n != 2q + 1")
        if not is_probable_prime(self.n) or not is_probable_prime(self.q):
            raise ValueError("n and q must both be prime")
        if self.bits != self.n.bit_length():
            raise ValueError("bits field disagrees with n")
        if not (2 <= self.g <= self.n - 1) or self.g == 1:
            raise ValueError("generator out of range")
        if pow(self.g, self.q, self.n) != 1:
            raise ValueError("generator is not in the order-q subgroup")
        return self


def gen_params(bits: int, seed: int | None = None) -> GroupParams:
    """Generate group parameters with an n of exactly `bits` bits.

    bits >= 8 is accepted for desk-scale work; anything meant to resist an
    adversary should be 2048 or more.  With a seed the search is fully
    reproducible.
    """
    if bits < 8:
        raise ValueError("bits must be >= 8")
    rng: random.Random = random.Random(seed) if seed is not None else random.SystemRandom()
    while True:
        q = rng.getrandbits(bits - 1) | (1 << (bits - 2)) | 1
        n = 2 * q + 1
        if n.bit_length() != bits:
            continue
        if is_probable_prime(q) and is_probable_prime(n):
            break
    while True:
        h = rng.randrange(2, n - 1)
        g = pow(h, 2, n)  # squaring lands in the quadratic-residue subgroup
        if g != 1:
            break
    return GroupParams(n=n, q=q, g=g, bits=bits)


def is_member(e: int, params: GroupParams) -> bool:
    """Subgroup membership test (not billed to any operation counter)."""
    return 0 < e < params.n and pow(e, params.q, params.n) == 1


def ensure_member(e: int, params: GroupParams) -> int:
    if not is_member(e, params):
        raise MalformedElement(f"{e} is not a member of the order-{params.q} subgroup")
    return e


def pow_mod(base: int, e: int, params: GroupParams, ops=None) -> int:
    """base^e mod n.  Exponents are reduced mod q, the subgroup order."""
    if ops is not None:
        ops.exponentiations += 1
    return pow(base, e % params.q, params.n)


def mul_mod(a: int, b: int, params: GroupParams) -> int:
    return (a * b) % params.n


def inv_mod(e: int, params: GroupParams) -> int:
    """Multiplicative inverse mod n."""
    return pow(e, -1, params.n)


def div_mod(a: int, b: int, params: GroupParams, ops=None) -> int:
    """a / b mod n; the unblinding operation of the purchase protocol."""
    if ops is not None:
        ops.divisions += 1
    return (a * pow(b, -1, params.n)) % params.n


def hash_to_group(label: bytes, params: GroupParams) -> int:
    """Deterministically map a label to a subgroup element != 1.

    The digest is expanded to cover the modulus with slack, reduced mod n
    and squared (cofactor clearing).  Outputs of distinct labels carry no
    known exponent relation to each other, which is exactly the property
    license encryption factors need.
    """
    if not label:
        raise ValueError("label must be nonempty")
    want = (params.bits + 7) // 8 + 8
    for ctr in range(2**32):
        blocks = []
        for i in range((want + 31) // 32):
            h = hashlib.sha256()
            h.update(b"h2g-v1")
            h.update(ctr.to_bytes(4, "big"))
            h.update(i.to_bytes(2, "big"))
            h.update(label)
            blocks.append(h.digest())
        v = int.from_bytes(b"".join(blocks)[:want], "big") % params.n
        e = pow(v, 2, params.n)
        if e not in (0, 1):
            return e
    raise RuntimeError("unreachable: hash_to_group exhausted counters")


# --- discrete-log equality proofs (Chaum-Pedersen made non-interactive) ------

@dataclass(frozen=True)
class DlEqProof:
    """Proof that log_{base1}(y1) = log_{base2}(y2)."""

    commitment_a: int
    commitment_b: int
    challenge: int
    response: int


def _dleq_challenge(params: GroupParams, base1: int, y1: int, base2: int,
                    y2: int, a1: int, a2: int) -> int:
    h = hashlib.sha256()
    h.update(b"dleq-v1")
    for v in (params.n, params.g, base1, y1, base2, y2, a1, a2):
        h.update(enc_int(v))
    return int.from_bytes(h.digest(), "big") % params.q


def dleq_prove(secret: int, base1: int, base2: int, params: GroupParams,
               rng: random.Random | None = None) -> DlEqProof:
    """Prove knowledge of `secret` with base1^secret and base2^secret linked.

    The challenge is a hash over the canonical transcript, so the proof is
    non-interactive and verifiable offline.
    """
    secret %= params.q
    y1 = pow(base1, secret, params.n)
    y2 = pow(base2, secret, params.n)
    w = (rng.randrange(params.q) if rng is not None
         else secrets.randbelow(params.q))
    a1 = pow(base1, w, params.n)
    a2 = pow(base2, w, params.n)
    c = _dleq_challenge(params, base1, y1, base2, y2, a1, a2)
    z = (w + c * secret) % params.q
    return DlEqProof(commitment_a=a1, commitment_b=a2, challenge=c, response=z)


def dleq_equations_hold(challenge: int, response: int, base1: int, y1: int,
                        base2: int, y2: int, a1: int, a2: int,
                        params: GroupParams) -> bool:
    """The bare sigma-protocol acceptance predicate, without the hash
    binding.  Exposed so soundness can be measured by enumerating
    (challenge, response) pairs directly."""
    n = params.n
    lhs1 = pow(base1, response, n)
    rhs1 = (a1 * pow(y1, challenge, n)) % n
    if lhs1 != rhs1:
        return False
    lhs2 = pow(base2, response, n)
    rhs2 = (a2 * pow(y2, challenge, n)) % n
    return lhs2 == rhs2


def dleq_verify(proof: DlEqProof, base1: int, y1: int, base2: int, y2: int,
                params: GroupParams) -> bool:
    """Check a proof against the statement (base1, y1, base2, y2).

    Raises MalformedElement if any input is outside the subgroup; returns
    False for any proof that fails the recomputed challenge or the
    verification equations.
    """
    for e in (base1, y1, base2, y2, proof.commitment_a, proof.commitment_b):
        ensure_member(e, params)
    if not (0 <= proof.challenge < params.q and 0 <= proof.response < params.q):
        return False
    c = _dleq_challenge(params, base1, y1, base2, y2,
                        proof.commitment_a, proof.commitment_b)
    if c != proof.challenge:
        return False
    return dleq_equations_hold(proof.challenge, proof.response, base1, y1,
                               base2, y2, proof.commitment_a,
                               proof.commitment_b, params)
