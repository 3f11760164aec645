"""Arbitration of buyer/seller conflicts.

Three resolvable dispute kinds:

  B - the decrypted license does not match the publicly signed terms;
  C - a step response carried a corrupt signature;
  D - every step looked fine but the assembled key opens nothing.

(The fourth conceivable conflict, a seller claiming non-payment, cannot
arise: without completing the steps the buyer holds only blinded values.)

Type D has three proof methods, all anchored in the seller's public
commitments: per-step equality proofs against the K table, an audited
key chain for a randomly chosen license, or outright disclosure of the
generation factor.

Resolvers work from a DisputeCase.  When a live seller agent is supplied,
its answers (values, proofs, chains) are recorded into the case, so the
same resolver replayed on the stored record reaches the same verdict with
no seller present.  Evidence for kinds C and D carries only blinded
request/response pairs: the arbitrator never sees card identifiers, the
license factor, or anything naming the buyer.
"""

from __future__ import annotations

import base64
import random
from dataclasses import dataclass, field

from .catalog import (
    Catalog,
    decrypt_license,
    sign_payload,
    terms_payload,
    verify_payload,
)
from .errors import (
    AuthenticationFailure,
    ChainLengthMismatch,
    MalformedElement,
    MalformedEvidence,
    MissingKPower,
    SellerUnresponsive,
)
from .group import DlEqProof, GroupParams, dleq_prove, dleq_verify
from .purchase import step_payload

SELLER_AT_FAULT = "seller-at-fault"
BUYER_CLAIM_REJECTED = "buyer-claim-rejected"
SELLER_MUST_RESIGN = "seller-must-resign"
ESCALATED_TO_D = "escalated-to-D"


@dataclass(frozen=True)
class Verdict:
    outcome: str
    rationale: str
    checked_steps: int = 0


@dataclass(frozen=True)
class EvidenceStep:
    """One transcript step as evidence: the wire values plus, for type B
    only, the blinding exponent the buyer discloses."""

    m: int
    m_out: int
    t: int
    signature: bytes
    alpha: int | None = None


@dataclass
class DisputeCase:
    kind: str
    params: GroupParams
    verify_pk: bytes
    k_table: dict[int, int]
    steps: list[EvidenceStep]
    # type B: the buyer gives up the license to prove the claim
    license_id: str = ""
    x: int = 0
    published_terms: str = ""
    encrypted_license: bytes = b""
    terms_signature: bytes = b""
    buyer_key: int = 0
    # recorded seller material (filled during live arbitration)
    seller_values: tuple[int, int] | None = None
    seller_resign: bytes | None = None
    seller_proof: DlEqProof | None = None
    step_proofs: list[DlEqProof] | None = None
    audit_license_id: str = ""
    audit_x: int = 0
    audit_price: int = 0
    audit_blob: bytes = b""
    chain: list[int] | None = None
    link_proofs: list[DlEqProof] | None = None
    segment_proofs: list[DlEqProof] | None = None
    s_revealed: int | None = None
    # verdict trail (not evidence, not serialized)
    stages: list[Verdict] = field(default_factory=list)


# --- case builders ------------------------------------------------------------

def _strip(transcripts) -> list[EvidenceStep]:
    return [EvidenceStep(m=tr.m, m_out=tr.m_out, t=tr.t, signature=tr.step_signature)
            for tr in transcripts]


def build_type_b_case(catalog: Catalog, session) -> DisputeCase:
    """Terms-mismatch claim.  Reveals the license and the per-step blinding
    exponents; that loss of privacy is the price of a type B claim."""
    entry = session.entry
    steps = [EvidenceStep(m=tr.m, m_out=tr.m_out, t=tr.t,
                          signature=tr.step_signature, alpha=tr.alpha)
             for tr in session.transcripts]
    return DisputeCase(
        kind="B", params=catalog.params, verify_pk=catalog.verify_pk,
        k_table=dict(catalog.k_table), steps=steps,
        license_id=entry.license_id, x=entry.x, published_terms=entry.terms,
        encrypted_license=entry.encrypted_license,
        terms_signature=entry.terms_signature, buyer_key=session.acc,
    )


def build_type_c_case(catalog: Catalog, bad) -> DisputeCase:
    """Corrupt-signature claim from a BadStepSignature error."""
    step = EvidenceStep(m=bad.m, m_out=bad.m_out, t=bad.t, signature=bad.signature)
    return DisputeCase(kind="C", params=catalog.params, verify_pk=catalog.verify_pk,
                       k_table=dict(catalog.k_table), steps=[step])


def build_type_d_case(catalog: Catalog, session) -> DisputeCase:
    """Dead-key claim.  Only blinded pairs and signatures: the disputed
    license stays private."""
    return DisputeCase(kind="D", params=catalog.params, verify_pk=catalog.verify_pk,
                       k_table=dict(catalog.k_table), steps=_strip(session.transcripts))


# --- seller-side arbitration agent ---------------------------------------------

class SellerDisputeAgent:
    """The seller's prover.  Answers value queries, produces equality
    proofs, reveals chains or the generation factor.  Always answers from
    its true secrets; a seller who misbehaved during the purchase is
    exposed precisely because honest proofs fail on dishonest values."""

    def __init__(self, keys, catalog: Catalog, rng: random.Random | None = None):
        self.keys = keys
        self.catalog = catalog
        self.rng = rng

    @property
    def params(self) -> GroupParams:
        return self.catalog.params

    def original_values(self, m: int, t: int) -> tuple[int, int]:
        """Recompute what this seller would have responded to request m."""
        p = self.params
        return m, pow(m, pow(self.keys.s, t, p.q), p.n)

    def sign_values(self, m: int, m_out: int) -> bytes:
        return sign_payload(self.keys.sign_sk, step_payload(m, m_out))

    def prove(self, base1: int, y1: int, base2: int, y2: int, t: int) -> DlEqProof:
        """Equality proof with secret s^t.  y1/y2 are part of the statement
        the arbitrator wants checked; if they do not match this seller's
        secret the proof simply will not verify."""
        secret = pow(self.keys.s, t, self.params.q)
        return dleq_prove(secret, base1, base2, self.params, self.rng)

    def reveal_chain(self, license_id: str) -> list[int]:
        entry = self.catalog.entry(license_id)
        p = self.params
        chain = [entry.x]
        for _ in range(entry.price):
            chain.append(pow(chain[-1], self.keys.s % p.q, p.n))
        return chain

    def reveal_s(self) -> int:
        return self.keys.s


def _safe_verify(proof: DlEqProof | None, b1: int, y1: int, b2: int, y2: int,
                 params: GroupParams) -> bool:
    if proof is None:
        return False
    try:
        return dleq_verify(proof, b1, y1, b2, y2, params)
    except MalformedElement:
        return False


# --- resolvers -----------------------------------------------------------------

def resolve_type_b(case: DisputeCase) -> Verdict:
    """Check the seller's public commitment against what the key opened.

    The seller is at fault only when every buyer-provided piece checks out
    (signature, blinding chain, decryption) and the embedded terms still
    differ from the published ones.  Any broken piece rejects the claim and
    names the failing check.
    """
    if case.kind != "B":
        raise MalformedEvidence(f"type B resolver got kind {case.kind!r}")
    if not case.steps:
        raise MalformedEvidence("no transcript steps in evidence")
    p = case.params
    if not verify_payload(case.verify_pk,
                          terms_payload(case.published_terms, case.encrypted_license),
                          case.terms_signature):
        return Verdict(BUYER_CLAIM_REJECTED, "terms signature invalid", 0)
    acc = case.x
    for i, st in enumerate(case.steps, 1):
        if st.alpha is None:
            raise MalformedEvidence(f"step {i}: blinding exponent missing")
        if not verify_payload(case.verify_pk, step_payload(st.m, st.m_out), st.signature):
            return Verdict(BUYER_CLAIM_REJECTED, f"step {i}: step signature invalid", i)
        expected_m = (pow(p.g, st.alpha, p.n) * acc) % p.n
        if st.m != expected_m:
            return Verdict(BUYER_CLAIM_REJECTED,
                           f"step {i}: request inconsistent with blinding exponent", i)
        k = case.k_table.get(st.t)
        if k is None:
            raise MalformedEvidence(f"step {i}: no unblinding key for value {st.t}")
        unblinder = pow(k, st.alpha, p.n)
        acc = (st.m_out * pow(unblinder, -1, p.n)) % p.n
    if acc != case.buyer_key:
        return Verdict(BUYER_CLAIM_REJECTED,
                       "claimed key does not follow from the transcript", len(case.steps))
    try:
        plain = decrypt_license(case.buyer_key, case.encrypted_license)
    except AuthenticationFailure:
        return Verdict(BUYER_CLAIM_REJECTED,
                       "key does not decrypt the license (raise type D instead)",
                       len(case.steps))
    if plain.terms != case.published_terms:
        return Verdict(SELLER_AT_FAULT,
                       f"license terms {plain.terms!r} differ from published "
                       f"{case.published_terms!r}", len(case.steps))
    return Verdict(BUYER_CLAIM_REJECTED, "decrypted terms match the published terms",
                   len(case.steps))


def resolve_type_c(case: DisputeCase, seller: SellerDisputeAgent | None = None) -> Verdict:
    """Corrupt step signature.

    Valid signature: claim rejected.  Seller concurs with the values: the
    remedy is a fresh valid signature.  Seller's values conflict with the
    buyer's: escalate, the seller must prove its own pair correct; success
    rejects the claim (and the proven pair goes to the buyer), failure
    obliges the seller to sign the buyer's values.  No answer at all is
    treated as fault by timeout.
    """
    if case.kind != "C":
        raise MalformedEvidence(f"type C resolver got kind {case.kind!r}")
    if len(case.steps) != 1:
        raise MalformedEvidence("type C evidence is exactly one step")
    st = case.steps[0]
    if verify_payload(case.verify_pk, step_payload(st.m, st.m_out), st.signature):
        return Verdict(BUYER_CLAIM_REJECTED, "presented signature is valid", 1)

    if case.seller_values is None and seller is not None:
        try:
            case.seller_values = seller.original_values(st.m, st.t)
        except SellerUnresponsive:
            case.seller_values = None
    if case.seller_values is None:
        return Verdict(SELLER_AT_FAULT, "seller unresponsive within the deadline", 1)

    q_val, n_val = case.seller_values
    if (q_val, n_val) == (st.m, st.m_out):
        if case.seller_resign is None and seller is not None:
            case.seller_resign = seller.sign_values(st.m, st.m_out)
        if case.seller_resign is None or not verify_payload(
                case.verify_pk, step_payload(st.m, st.m_out), case.seller_resign):
            return Verdict(SELLER_AT_FAULT,
                           "seller failed to produce a valid signature on agreed values", 1)
        return Verdict(SELLER_MUST_RESIGN,
                       "seller acknowledged the values; valid signature reissued", 1)

    case.stages.append(Verdict(
        ESCALATED_TO_D, "seller's original values conflict with the buyer's", 1))
    k = case.k_table.get(st.t)
    if k is None:
        raise MissingKPower(st.t)
    if case.seller_proof is None and seller is not None:
        case.seller_proof = seller.prove(q_val, n_val, case.params.g, k, st.t)
    if _safe_verify(case.seller_proof, q_val, n_val, case.params.g, k, case.params):
        return Verdict(BUYER_CLAIM_REJECTED,
                       "seller proved its values correct; proven response forwarded", 1)
    return Verdict(SELLER_MUST_RESIGN,
                   "seller could not prove its values; must sign the buyer's values", 1)


def resolve_type_d_method1(case: DisputeCase,
                           seller: SellerDisputeAgent | None = None) -> Verdict:
    """Per-step equality proofs against the public K table.

    For step k of value t the seller proves that the response is the
    request raised to the very exponent committed in K_t.  Nothing private
    leaves the seller.
    """
    _require_d(case)
    if case.step_proofs is None:
        case.step_proofs = [None] * len(case.steps)
    if len(case.step_proofs) != len(case.steps):
        raise MalformedEvidence("one proof per step required")
    for i, st in enumerate(case.steps):
        _check_step_signature(case, i, st)
        k = case.k_table.get(st.t)
        if k is None:
            raise MissingKPower(st.t)
        if case.step_proofs[i] is None and seller is not None:
            case.step_proofs[i] = seller.prove(st.m, st.m_out, case.params.g, k, st.t)
        if not _safe_verify(case.step_proofs[i], st.m, st.m_out,
                            case.params.g, k, case.params):
            return Verdict(SELLER_AT_FAULT,
                           f"step {i + 1}: response not proven consistent with K_{st.t}",
                           i + 1)
    return Verdict(BUYER_CLAIM_REJECTED, "all steps proven correct; seller is honest",
                   len(case.steps))


def resolve_type_d_method2(case: DisputeCase, catalog: Catalog | None = None,
                           seller: SellerDisputeAgent | None = None,
                           rng: random.Random | None = None) -> Verdict:
    """Audit a random license's key chain and tie the disputed steps to it.

    The seller reveals the full tower x, x^s, ..., up to the audited
    license's key, proves every link uses one exponent, proves each
    disputed step used that same exponent (per step value), and the
    revealed key must actually open the audited license.
    """
    _require_d(case)
    if not case.audit_license_id:
        if catalog is None:
            raise MalformedEvidence("no audit license recorded and no catalog given")
        pick = (rng or random).randrange(len(catalog.licenses))
        entry = catalog.licenses[pick]
        case.audit_license_id = entry.license_id
        case.audit_x = entry.x
        case.audit_price = entry.price
        case.audit_blob = entry.encrypted_license
    if case.chain is None and seller is not None:
        case.chain = seller.reveal_chain(case.audit_license_id)
    if case.chain is None:
        return Verdict(SELLER_AT_FAULT, "seller unresponsive within the deadline",
                       0)
    chain = case.chain
    if len(chain) != case.audit_price + 1:
        raise ChainLengthMismatch(
            f"chain has {len(chain)} entries for price {case.audit_price}")
    if chain[0] != case.audit_x:
        return Verdict(SELLER_AT_FAULT, "chain does not start at the audited factor", 0)
    try:
        decrypt_license(chain[-1], case.audit_blob)
    except AuthenticationFailure:
        return Verdict(SELLER_AT_FAULT,
                       "revealed key does not decrypt the audited license", 0)

    if case.link_proofs is None:
        case.link_proofs = [None] * max(0, len(chain) - 2)
    for j in range(2, len(chain)):
        if case.link_proofs[j - 2] is None and seller is not None:
            case.link_proofs[j - 2] = seller.prove(chain[j - 1], chain[j],
                                                   chain[0], chain[1], 1)
        if not _safe_verify(case.link_proofs[j - 2], chain[j - 1], chain[j],
                            chain[0], chain[1], case.params):
            return Verdict(SELLER_AT_FAULT, f"chain link {j} not proven", 0)

    if case.segment_proofs is None:
        case.segment_proofs = [None] * len(case.steps)
    for i, st in enumerate(case.steps):
        _check_step_signature(case, i, st)
        if st.t > case.audit_price:
            raise ChainLengthMismatch(
                f"step value {st.t} exceeds audited chain length {case.audit_price}")
        if case.segment_proofs[i] is None and seller is not None:
            case.segment_proofs[i] = seller.prove(st.m, st.m_out,
                                                  chain[0], chain[st.t], st.t)
        if not _safe_verify(case.segment_proofs[i], st.m, st.m_out,
                            chain[0], chain[st.t], case.params):
            return Verdict(SELLER_AT_FAULT,
                           f"step {i + 1}: response not proven consistent with the "
                           f"audited chain", i + 1)
    return Verdict(BUYER_CLAIM_REJECTED,
                   "audited chain valid and all steps proven; seller is honest",
                   len(case.steps))


def resolve_type_d_method3(case: DisputeCase, s_revealed: int | None = None) -> Verdict:
    """Deterministic re-check from the disclosed generation factor.

    The revealed value is first bound to the public commitment K_1 = g^s;
    in a prime-order group there is exactly one exponent per element, so a
    matching commitment pins the true factor.  Then every response is
    recomputed outright.
    """
    _require_d(case)
    if s_revealed is not None:
        case.s_revealed = s_revealed
    if case.s_revealed is None:
        raise MalformedEvidence("no generation factor provided")
    p = case.params
    k1 = case.k_table.get(1)
    if k1 is None:
        raise MissingKPower(1)
    s = case.s_revealed % p.q
    if pow(p.g, s, p.n) != k1:
        return Verdict(SELLER_AT_FAULT,
                       "revealed factor does not match the public commitment", 0)
    for i, st in enumerate(case.steps):
        _check_step_signature(case, i, st)
        if pow(st.m, pow(s, st.t, p.q), p.n) != st.m_out:
            return Verdict(SELLER_AT_FAULT,
                           f"step {i + 1}: recomputed response differs", i + 1)
    return Verdict(BUYER_CLAIM_REJECTED, "all responses recompute exactly; seller is honest",
                   len(case.steps))


def _require_d(case: DisputeCase):
    if case.kind != "D":
        raise MalformedEvidence(f"type D resolver got kind {case.kind!r}")
    if not case.steps:
        raise MalformedEvidence("no transcript steps in evidence")


def _check_step_signature(case: DisputeCase, i: int, st: EvidenceStep):
    if not verify_payload(case.verify_pk, step_payload(st.m, st.m_out), st.signature):
        raise MalformedEvidence(f"step {i + 1}: step signature invalid")


# --- K-table doubling consistency -----------------------------------------------

def prove_k_table(keys, catalog: Catalog,
                  rng: random.Random | None = None) -> dict[tuple[int, int], DlEqProof]:
    """Proofs that each published K_2t really is K_t raised to the committed
    exponent tower, i.e. log_Kt(K_2t) = log_g(K_t)."""
    proofs = {}
    p = catalog.params
    for t in sorted(catalog.k_table):
        if 2 * t in catalog.k_table:
            secret = pow(keys.s, t, p.q)
            proofs[(t, 2 * t)] = dleq_prove(secret, catalog.k_table[t], p.g, p, rng)
    return proofs


def verify_k_table(catalog: Catalog, proofs: dict[tuple[int, int], DlEqProof]) -> bool:
    p = catalog.params
    for t in sorted(catalog.k_table):
        if 2 * t not in catalog.k_table:
            continue
        proof = proofs.get((t, 2 * t))
        if not _safe_verify(proof, catalog.k_table[t], catalog.k_table[2 * t],
                            p.g, catalog.k_table[t], p):
            return False
    return True


# --- case record files ------------------------------------------------------------

_CASE_HEADER = "blindpay-case: v1"


def _proof_str(pr: DlEqProof) -> str:
    return f"{pr.commitment_a} {pr.commitment_b} {pr.challenge} {pr.response}"


def _proof_parse(v: str) -> DlEqProof:
    a1, a2, c, z = (int(x) for x in v.split())
    return DlEqProof(commitment_a=a1, commitment_b=a2, challenge=c, response=z)


def write_case(case: DisputeCase) -> str:
    p = case.params
    lines = [
        _CASE_HEADER,
        f"kind: {case.kind}",
        f"n: {p.n}", f"q: {p.q}", f"g: {p.g}", f"bits: {p.bits}",
        f"verify_pk: {case.verify_pk.hex()}",
    ]
    for t in sorted(case.k_table):
        lines.append(f"ktable: {t} {case.k_table[t]}")
    for st in case.steps:
        alpha = "-" if st.alpha is None else str(st.alpha)
        lines.append(f"step: {st.m} {st.m_out} {st.t} {alpha} {st.signature.hex()}")
    if case.kind == "B":
        lines += [
            f"license: {case.license_id}",
            f"x: {case.x}",
            f"published_terms: {case.published_terms}",
            f"blob: {base64.b64encode(case.encrypted_license).decode()}",
            f"terms_signature: {case.terms_signature.hex()}",
            f"buyer_key: {case.buyer_key}",
        ]
    if case.seller_values is not None:
        lines.append(f"seller_values: {case.seller_values[0]} {case.seller_values[1]}")
    if case.seller_resign is not None:
        lines.append(f"seller_resign: {case.seller_resign.hex()}")
    if case.seller_proof is not None:
        lines.append(f"seller_proof: {_proof_str(case.seller_proof)}")
    for pr in case.step_proofs or []:
        lines.append(f"step_proof: {_proof_str(pr)}" if pr else "step_proof: -")
    if case.audit_license_id:
        lines += [
            f"audit_license: {case.audit_license_id}",
            f"audit_x: {case.audit_x}",
            f"audit_price: {case.audit_price}",
            f"audit_blob: {base64.b64encode(case.audit_blob).decode()}",
        ]
    if case.chain is not None:
        lines.append("chain: " + " ".join(str(c) for c in case.chain))
    for pr in case.link_proofs or []:
        lines.append(f"link_proof: {_proof_str(pr)}" if pr else "link_proof: -")
    for pr in case.segment_proofs or []:
        lines.append(f"segment_proof: {_proof_str(pr)}" if pr else "segment_proof: -")
    if case.s_revealed is not None:
        lines.append(f"s_revealed: {case.s_revealed}")
    return "\n".join(lines) + "\n"


def parse_case(text: str) -> DisputeCase:
    lines = text.splitlines()
    if not lines or lines[0] != _CASE_HEADER:
        raise MalformedEvidence("not a case record")
    fields: dict[str, str] = {}
    k_table: dict[int, int] = {}
    steps: list[EvidenceStep] = []
    step_proofs: list[DlEqProof | None] = []
    link_proofs: list[DlEqProof | None] = []
    segment_proofs: list[DlEqProof | None] = []
    try:
        for line in lines[1:]:
            key, sep, value = line.partition(": ")
            if not sep:
                raise MalformedEvidence(f"bad case line {line!r}")
            if key == "ktable":
                t_s, k_s = value.split(" ", 1)
                k_table[int(t_s)] = int(k_s)
            elif key == "step":
                m, m_out, t, alpha, sig = value.split(" ")
                steps.append(EvidenceStep(
                    m=int(m), m_out=int(m_out), t=int(t),
                    signature=bytes.fromhex(sig),
                    alpha=None if alpha == "-" else int(alpha)))
            elif key == "step_proof":
                step_proofs.append(None if value == "-" else _proof_parse(value))
            elif key == "link_proof":
                link_proofs.append(None if value == "-" else _proof_parse(value))
            elif key == "segment_proof":
                segment_proofs.append(None if value == "-" else _proof_parse(value))
            else:
                fields[key] = value
        params = GroupParams(n=int(fields["n"]), q=int(fields["q"]),
                             g=int(fields["g"]), bits=int(fields["bits"]))
        case = DisputeCase(
            kind=fields["kind"], params=params,
            verify_pk=bytes.fromhex(fields["verify_pk"]),
            k_table=k_table, steps=steps,
        )
        if case.kind == "B":
            case.license_id = fields["license"]
            case.x = int(fields["x"])
            case.published_terms = fields["published_terms"]
            case.encrypted_license = base64.b64decode(fields["blob"], validate=True)
            case.terms_signature = bytes.fromhex(fields["terms_signature"])
            case.buyer_key = int(fields["buyer_key"])
        if "seller_values" in fields:
            a, b = fields["seller_values"].split(" ")
            case.seller_values = (int(a), int(b))
        if "seller_resign" in fields:
            case.seller_resign = bytes.fromhex(fields["seller_resign"])
        if "seller_proof" in fields:
            case.seller_proof = _proof_parse(fields["seller_proof"])
        if step_proofs:
            case.step_proofs = step_proofs
        if "audit_license" in fields:
            case.audit_license_id = fields["audit_license"]
            case.audit_x = int(fields["audit_x"])
            case.audit_price = int(fields["audit_price"])
            case.audit_blob = base64.b64decode(fields["audit_blob"], validate=True)
        if "chain" in fields:
            case.chain = [int(c) for c in fields["chain"].split()]
        if link_proofs:
            case.link_proofs = link_proofs
        if segment_proofs:
            case.segment_proofs = segment_proofs
        if "s_revealed" in fields:
            case.s_revealed = int(fields["s_revealed"])
        return case
    except (KeyError, ValueError) as exc:
        raise MalformedEvidence(f"case record incomplete or corrupt: {exc}")


def resolve_case(case: DisputeCase, catalog: Catalog | None = None,
                 seller: SellerDisputeAgent | None = None,
                 rng: random.Random | None = None) -> list[tuple[str, Verdict]]:
    """Dispatch a case to every applicable resolver.  For kind D this runs
    whichever methods the recorded (or live) material supports."""
    if case.kind == "B":
        return [("B", resolve_type_b(case))]
    if case.kind == "C":
        return [("C", resolve_type_c(case, seller))]
    if case.kind == "D":
        out = []
        if seller is not None or case.step_proofs is not None:
            out.append(("D-method1", resolve_type_d_method1(case, seller)))
        if seller is not None or case.chain is not None:
            out.append(("D-method2", resolve_type_d_method2(case, catalog, seller, rng)))
        if seller is not None or case.s_revealed is not None:
            s = seller.reveal_s() if seller is not None and case.s_revealed is None else None
            out.append(("D-method3", resolve_type_d_method3(case, s)))
        if not out:
            out.append(("D", Verdict(SELLER_AT_FAULT,
                                     "seller unresponsive within the deadline", 0)))
        return out
    raise MalformedEvidence(f"unknown dispute kind {case.kind!r}")
