"""Purchase-phase protocol: blinded step requests and the stateless seller.

The buyer pays for a price-p license in steps.  Each step spends cards
worth t units, sends m = r * acc (acc is the partial key, r = g^alpha the
blinding factor), and gets back m^(s^t) plus a signature on the pair.
Dividing by K_t^alpha strips the blinding, so acc walks up the exponent
tower x, x^s, ..., x^(s^p) while the seller only ever sees uniformly
blinded group elements and anonymous card identifiers.

The seller side is a pure function of (request, keys, ledger state): it
keeps no memory between requests, which is precisely why requests cannot
be linked into a purchase.
"""

from __future__ import annotations

import base64
import random
import secrets
from dataclasses import dataclass, field

from .catalog import (
    Catalog,
    LicenseEntry,
    LicensePlaintext,
    SellerKeys,
    decrypt_license,
    sign_payload,
    verify_payload,
)
from .encoding import enc_int
from .errors import (
    BadStepSignature,
    IncompleteSession,
    InsufficientFunds,
    MismatchedFactor,
    MissingKPower,
    SessionComplete,
    SessionStateError,
)
from .group import GroupParams, div_mod, ensure_member, mul_mod, pow_mod

MODE_BASIC = "basic"
MODE_ENHANCED = "enhanced"


@dataclass(frozen=True)
class StepRequest:
    card_ids: list[str]
    m: int


@dataclass(frozen=True)
class StepResponse:
    m_out: int
    step_signature: bytes


@dataclass(frozen=True)
class StepTranscript:
    """One step as transmitted, kept verbatim as dispute evidence.  The
    blinding exponent used for the step is the buyer's own annotation; it
    never travels."""

    m: int
    m_out: int
    t: int
    step_signature: bytes
    card_ids: tuple[str, ...]
    alpha: int


def step_payload(m: int, m_out: int) -> bytes:
    """Exactly the request/response pair, nothing else.  Adding so much as a
    counter would let signatures link steps together."""
    return b"step-v1" + enc_int(m) + enc_int(m_out)


def plan_steps(price: int, available_powers: set[int]) -> list[int]:
    """Split a price into step values drawn from the published powers.

    Greedy largest-first, repeats allowed; for a powers-of-two table this
    is the binary decomposition, hence minimal length.  Deterministic so
    transcripts reproduce.
    """
    if price < 1:
        raise ValueError("price must be >= 1")
    if 1 not in available_powers:
        raise ValueError("available powers must include 1")
    plan = []
    remaining = price
    for t in sorted(available_powers, reverse=True):
        while t <= remaining:
            plan.append(t)
            remaining -= t
    return plan


def _allocate_cards(cards: list[tuple[str, int]], plan: list[int]) -> list[list[str]]:
    """Assign cards to steps so each step's cards sum to its value exactly.
    Greedy largest-first; callers provision matching denominations."""
    pool = sorted(cards, key=lambda c: -c[1])
    used = [False] * len(pool)
    out = []
    for t in plan:
        chosen = []
        need = t
        for i, (cid, value) in enumerate(pool):
            if not used[i] and value <= need:
                used[i] = True
                chosen.append(cid)
                need -= value
                if need == 0:
                    break
        if need != 0:
            raise InsufficientFunds(
                f"cannot cover a {t}-unit step from the remaining cards")
        out.append(chosen)
    return out


@dataclass
class PurchaseSession:
    """Buyer-side state for one purchase (or upgrade).  Single-owner and
    strictly sequential: request, response, request, response."""

    catalog: Catalog
    entry: LicenseEntry
    mode: str
    refresh_blinding: bool
    alpha: int
    r: int
    unblinders: dict[int, int]
    acc: int
    remaining: int
    plan: list[int]
    step_cards: list[list[str]]
    transcripts: list[StepTranscript] = field(default_factory=list)
    _idx: int = 0
    _pending: tuple[int, int, tuple[str, ...]] | None = None
    _rng: random.Random | None = None
    _ops: object | None = None

    @property
    def params(self) -> GroupParams:
        return self.catalog.params

    def _randrange(self, stop: int) -> int:
        if self._rng is not None:
            return self._rng.randrange(stop)
        return secrets.randbelow(stop)


def _ensure_unblinder(session: PurchaseSession, t: int):
    if t in session.unblinders:
        return
    k = session.catalog.k_table.get(t)
    if k is None:
        raise MissingKPower(t)
    session.unblinders[t] = pow_mod(k, session.alpha, session.params, session._ops)


def _fresh_blinding(session: PurchaseSession, powers: set[int]):
    params = session.params
    session.alpha = session._randrange(params.q)
    session.r = pow_mod(params.g, session.alpha, params, session._ops)
    session.unblinders = {}
    for t in sorted(powers):
        _ensure_unblinder(session, t)


def _begin(catalog: Catalog, entry: LicenseEntry, start_acc: int, units: int,
           cards: list[tuple[str, int]], mode: str, refresh_blinding: bool,
           rng: random.Random | None, ops) -> PurchaseSession:
    if mode not in (MODE_BASIC, MODE_ENHANCED):
        raise ValueError(f"unknown mode {mode!r}")
    total = sum(v for _, v in cards)
    if total < units:
        raise InsufficientFunds(f"cards total {total}, need {units}")
    powers = set(catalog.k_table) if mode == MODE_ENHANCED else {1}
    if 1 not in catalog.k_table:
        raise MissingKPower(1)
    plan = plan_steps(units, powers)
    for t in plan:
        if t not in catalog.k_table:
            raise MissingKPower(t)
    step_cards = _allocate_cards(cards, plan)
    session = PurchaseSession(
        catalog=catalog, entry=entry, mode=mode, refresh_blinding=refresh_blinding,
        alpha=0, r=1, unblinders={}, acc=start_acc, remaining=units, plan=plan,
        step_cards=step_cards, _rng=rng, _ops=ops,
    )
    _fresh_blinding(session, {plan[0]} if refresh_blinding else set(plan))
    return session


def buyer_begin(catalog: Catalog, license_id: str, cards: list[tuple[str, int]],
                mode: str = MODE_BASIC, refresh_blinding: bool = True,
                rng: random.Random | None = None, ops=None) -> PurchaseSession:
    """Open a purchase session: pick alpha, compute r = g^alpha and the
    unblinding powers, plan the steps, and park the cards against them."""
    entry = catalog.entry(license_id)
    ensure_member(entry.x, catalog.params)
    return _begin(catalog, entry, entry.x, entry.price, cards, mode,
                  refresh_blinding, rng, ops)


def begin_upgrade(catalog: Catalog, owned_license_id: str, owned_key: int,
                  target_license_id: str, cards: list[tuple[str, int]],
                  mode: str = MODE_BASIC, refresh_blinding: bool = True,
                  rng: random.Random | None = None, ops=None) -> PurchaseSession:
    """Resume the exponent tower from an already-bought key.

    Works only when both licenses share the same encryption factor; the
    session then runs target_price - owned_price ordinary units and the
    final key opens the dearer license.
    """
    owned = catalog.entry(owned_license_id)
    target = catalog.entry(target_license_id)
    if owned.x != target.x:
        raise MismatchedFactor(
            f"{owned_license_id!r} and {target_license_id!r} have different factors")
    delta = target.price - owned.price
    if delta <= 0:
        raise ValueError("nothing to upgrade: target license is not dearer")
    ensure_member(owned_key, catalog.params)
    return _begin(catalog, target, owned_key, delta, cards, mode,
                  refresh_blinding, rng, ops)


def buyer_step_request(session: PurchaseSession) -> StepRequest:
    if session.remaining == 0:
        raise SessionComplete("all units already paid")
    if session._pending is not None:
        raise SessionStateError("previous step still awaiting its response")
    t = session.plan[session._idx]
    if session.refresh_blinding and session._idx > 0:
        _fresh_blinding(session, {t})
    else:
        _ensure_unblinder(session, t)
    m = mul_mod(session.r, session.acc, session.params)
    cards = tuple(session.step_cards[session._idx])
    session._pending = (t, m, cards)
    return StepRequest(card_ids=list(cards), m=m)


def buyer_process_response(session: PurchaseSession, resp: StepResponse) -> PurchaseSession:
    """Verify the step signature, unblind, and advance the accumulator.

    An invalid signature aborts with BadStepSignature carrying the evidence
    for arbitration; the session itself is left untouched.
    """
    if session._pending is None:
        raise SessionStateError("no request outstanding")
    t, m, cards = session._pending
    if session._ops is not None:
        session._ops.verifications += 1
    if not verify_payload(session.catalog.verify_pk, step_payload(m, resp.m_out),
                          resp.step_signature):
        raise BadStepSignature(m=m, m_out=resp.m_out,
                               signature=resp.step_signature, t=t)
    ensure_member(resp.m_out, session.params)
    session.acc = div_mod(resp.m_out, session.unblinders[t], session.params, session._ops)
    session.remaining -= t
    session._idx += 1
    session.transcripts.append(StepTranscript(
        m=m, m_out=resp.m_out, t=t, step_signature=resp.step_signature,
        card_ids=cards, alpha=session.alpha,
    ))
    session._pending = None
    return session


def buyer_finish(session: PurchaseSession) -> LicensePlaintext:
    """Decrypt the published license blob with the assembled key.

    AuthenticationFailure here is the buyer's type-D evidence: every step
    signature checked out, yet the key does not open the license.
    """
    if session.remaining > 0:
        raise IncompleteSession(f"{session.remaining} units still unpaid")
    return decrypt_license(session.acc, session.entry.encrypted_license)


# --- seller side ---------------------------------------------------------------

def seller_handle_step(req: StepRequest, keys: SellerKeys, bank,
                       params: GroupParams, account: str, ops=None) -> StepResponse:
    """Handle one step: validate, spend the cards, exponentiate, sign.

    Cards are spent all-or-nothing and strictly before any exponentiation,
    so a rejected card costs the seller no work and the buyer no money.
    The handler holds no state between calls.
    """
    if not req.card_ids:
        raise ValueError("step request carries no cards")
    ensure_member(req.m, params)
    receipts = bank.spend_atomic(list(req.card_ids), account)
    t = sum(r.value for r in receipts)
    m_out = pow_mod(req.m, pow(keys.s, t, params.q), params, ops)
    if ops is not None:
        ops.signings += 1
    signature = sign_payload(keys.sign_sk, step_payload(req.m, m_out))
    return StepResponse(m_out=m_out, step_signature=signature)


class SellerStepHandler:
    """Binds the stateless step function to one seller's keys, bank link and
    operation counter."""

    def __init__(self, keys: SellerKeys, params: GroupParams, bank,
                 account: str, ops=None):
        self.keys = keys
        self.params = params
        self.bank = bank
        self.account = account
        self.ops = ops

    def handle(self, req: StepRequest) -> StepResponse:
        return seller_handle_step(req, self.keys, self.bank, self.params,
                                  self.account, self.ops)


# --- drivers --------------------------------------------------------------------

def run_purchase(session: PurchaseSession, step_fn) -> LicensePlaintext:
    """Drive a session to completion.  step_fn maps a StepRequest to a
    StepResponse over whatever channel the caller set up."""
    while session.remaining > 0:
        req = buyer_step_request(session)
        resp = step_fn(req)
        buyer_process_response(session, resp)
    return buyer_finish(session)


def upgrade(catalog: Catalog, owned_license_id: str, owned_key: int,
            target_license_id: str, cards: list[tuple[str, int]], step_fn,
            mode: str = MODE_BASIC, refresh_blinding: bool = True,
            rng: random.Random | None = None, ops=None) -> LicensePlaintext:
    """Upgrade an owned license key to a dearer license sharing its factor."""
    session = begin_upgrade(catalog, owned_license_id, owned_key,
                            target_license_id, cards, mode, refresh_blinding,
                            rng, ops)
    return run_purchase(session, step_fn)


# --- session checkpointing -------------------------------------------------------

def save_session(session: PurchaseSession, path: str):
    """Checkpoint a session between steps so a purchase survives a crash."""
    if session._pending is not None:
        raise SessionStateError("cannot checkpoint with a request outstanding")
    lines = [
        "blindpay-session: v1",
        f"license: {session.entry.license_id}",
        f"mode: {session.mode}",
        f"refresh: {'on' if session.refresh_blinding else 'off'}",
        f"alpha: {session.alpha}",
        f"acc: {session.acc}",
        f"remaining: {session.remaining}",
        f"plan: {' '.join(str(t) for t in session.plan)}",
        f"idx: {session._idx}",
    ]
    for cards in session.step_cards:
        lines.append(f"cards: {' '.join(cards) if cards else '-'}")
    for tr in session.transcripts:
        enc = base64.b64encode(tr.step_signature).decode()
        lines.append(f"transcript: {tr.m} {tr.m_out} {tr.t} {tr.alpha} {enc}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def load_session(path: str, catalog: Catalog, rng: random.Random | None = None,
                 ops=None) -> PurchaseSession:
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != "blindpay-session: v1":
        raise SessionStateError("not a session checkpoint file")
    fields: dict[str, str] = {}
    card_lines, transcript_lines = [], []
    for line in lines[1:]:
        key, _, value = line.partition(": ")
        if key == "cards":
            card_lines.append(value)
        elif key == "transcript":
            transcript_lines.append(value)
        else:
            fields[key] = value
    entry = catalog.entry(fields["license"])
    session = PurchaseSession(
        catalog=catalog, entry=entry, mode=fields["mode"],
        refresh_blinding=fields["refresh"] == "on",
        alpha=int(fields["alpha"]), r=1, unblinders={},
        acc=int(fields["acc"]), remaining=int(fields["remaining"]),
        plan=[int(t) for t in fields["plan"].split()],
        step_cards=[[] if v == "-" else v.split() for v in card_lines],
        _idx=int(fields["idx"]), _rng=rng, _ops=ops,
    )
    for v in transcript_lines:
        m, m_out, t, alpha, sig = v.split(" ", 4)
        session.transcripts.append(StepTranscript(
            m=int(m), m_out=int(m_out), t=int(t),
            step_signature=base64.b64decode(sig), card_ids=(), alpha=int(alpha)))
    params = session.params
    session.r = pow_mod(params.g, session.alpha, params, ops)
    if session.remaining > 0:
        remaining_powers = set(session.plan[session._idx:])
        if session.refresh_blinding:
            remaining_powers = {session.plan[session._idx]}
        for t in sorted(remaining_powers):
            session.unblinders[t] = pow_mod(catalog.k_table[t], session.alpha, params, ops)
    return session
