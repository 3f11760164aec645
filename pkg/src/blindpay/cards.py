"""Bank-side prepaid card ledger.

Cards are opaque 128-bit identifiers with a unit value.  They move through
exactly one life cycle: generated at the bank, distributed to a store,
spent by a seller presenting them for payment.  The spend step is the
double-spend barrier, so it is a single atomic check-and-mark under the
ledger lock.  Nothing in here ever sees a buyer: the retail sale of a card
is cash over a counter, outside the system.
"""

from __future__ import annotations

import enum
import random
import secrets
import threading
from dataclasses import dataclass

from .errors import (
    AlreadyDistributed,
    AlreadySpent,
    LedgerCorrupt,
    NotDistributed,
    UnknownCard,
)


class CardStatus(enum.Enum):
    GENERATED = "generated"
    DISTRIBUTED = "distributed"
    SPENT = "spent"


@dataclass
class PrepaidCard:
    card_id: str
    value: int
    status: CardStatus
    spent_by: str | None = None


@dataclass(frozen=True)
class SpendReceipt:
    """Record of one accepted spend.  Field set is deliberately minimal:
    card, credited account, value, ledger sequence number.  No buyer data
    exists to record."""

    card_id: str
    seller_account: str
    value: int
    seq: int


class CardLedger:
    """All card state plus seller account balances, one lock around both.

    If a path is given, every mutation appends one tab-separated record
    (seq, op, card_id, value, account) and `replay` rebuilds an identical
    ledger from the file.
    """

    def __init__(self, path: str | None = None, rng: random.Random | None = None):
        self.cards: dict[str, PrepaidCard] = {}
        self.accounts: dict[str, int] = {}
        self._seq = 0
        self._spend_seqs: dict[str, int] = {}
        self._rng = rng
        self._lock = threading.Lock()
        self._path = path
        self._fh = open(path, "a", encoding="utf-8") if path else None

    # -- internals ------------------------------------------------------------

    def _new_id(self) -> str:
        if self._rng is not None:
            return self._rng.getrandbits(128).to_bytes(16, "big").hex()
        return secrets.token_bytes(16).hex()

    def _record(self, seq: int, op: str, card_id: str, value: int, account: str):
        if self._fh is not None:
            self._fh.write(f"{seq}\t{op}\t{card_id}\t{value}\t{account}\n")
            self._fh.flush()

    def _next_seq(self) -> int:
        self._seq += 1
        return self._seq

    # -- operations -------------------------------------------------------------

    def issue_cards(self, count: int, value: int = 1) -> list[PrepaidCard]:
        """Generate fresh cards.  count may be zero (no-op); value >= 1."""
        if count < 0:
            raise ValueError("count must be >= 0")
        if value < 1:
            raise ValueError("card value must be >= 1")
        out = []
        with self._lock:
            for _ in range(count):
                cid = self._new_id()
                while cid in self.cards:  # 128-bit ids; loop is theory only
                    cid = self._new_id()
                card = PrepaidCard(card_id=cid, value=value, status=CardStatus.GENERATED)
                self.cards[cid] = card
                self._record(self._next_seq(), "ISSUE", cid, value, "-")
                out.append(card)
        return out

    def distribute(self, card_ids: list[str], store_id: str) -> int:
        """Mark cards as sold to a store.  Returns the number distributed."""
        with self._lock:
            for cid in card_ids:
                card = self.cards.get(cid)
                if card is None:
                    raise UnknownCard(cid)
                if card.status is CardStatus.DISTRIBUTED:
                    raise AlreadyDistributed(cid)
                if card.status is CardStatus.SPENT:
                    raise AlreadySpent(cid, self._spend_seq(cid))
            for cid in card_ids:
                self.cards[cid].status = CardStatus.DISTRIBUTED
                self._record(self._next_seq(), "DIST", cid, self.cards[cid].value, store_id)
        return len(card_ids)

    def _spend_seq(self, card_id: str) -> int:
        return self._spend_seqs.get(card_id, 0)

    def verify_and_spend(self, card_id: str, seller_account: str) -> SpendReceipt:
        """Atomically check a card and mark it spent, crediting the seller.

        Exactly one of any set of concurrent calls for the same card can
        succeed; everyone else sees AlreadySpent.
        """
        return self.spend_atomic([card_id], seller_account)[0]

    def spend_atomic(self, card_ids: list[str], seller_account: str) -> list[SpendReceipt]:
        """Spend several cards as one all-or-nothing transaction.

        Either every card is valid and all get spent, or no card state
        changes at all; a purchase step is never half-charged.
        """
        if not card_ids:
            raise ValueError("card_ids must be nonempty")
        receipts = []
        with self._lock:
            seen: set[str] = set()
            for cid in card_ids:
                card = self.cards.get(cid)
                if card is None:
                    raise UnknownCard(cid)
                if card.status is CardStatus.SPENT or cid in seen:
                    raise AlreadySpent(cid, self._spend_seqs.get(cid, self._seq))
                if card.status is CardStatus.GENERATED:
                    raise NotDistributed(cid)
                seen.add(cid)
            for cid in card_ids:
                card = self.cards[cid]
                card.status = CardStatus.SPENT
                card.spent_by = seller_account
                seq = self._next_seq()
                self._spend_seqs[cid] = seq
                self.accounts[seller_account] = self.accounts.get(seller_account, 0) + card.value
                self._record(seq, "SPEND", cid, card.value, seller_account)
                receipts.append(SpendReceipt(card_id=cid, seller_account=seller_account,
                                             value=card.value, seq=seq))
        return receipts

    def balance(self, seller_account: str) -> int:
        with self._lock:
            return self.accounts.get(seller_account, 0)

    def check_conservation(self):
        """Sum of balances must equal total value of spent cards."""
        with self._lock:
            spent = sum(c.value for c in self.cards.values() if c.status is CardStatus.SPENT)
            credited = sum(self.accounts.values())
            if spent != credited:
                raise LedgerCorrupt(f"spent value {spent} != credited value {credited}")

    def close(self):
        if self._fh is not None:
            self._fh.close()
            self._fh = None

    # -- persistence ---------------------------------------------------------

    @classmethod
    def replay(cls, path: str, attach: bool = False) -> "CardLedger":
        """Rebuild a ledger from its record file.

        With attach=True the returned ledger keeps appending to the same
        file, which is how a restarted bank resumes.
        """
        ledger = cls()
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.rstrip("\n")
                if not line:
                    continue
                parts = line.split("\t")
                if len(parts) != 5:
                    raise LedgerCorrupt(f"{path}:{lineno}: expected 5 fields, got {len(parts)}")
                seq_s, op, cid, value_s, account = parts
                try:
                    seq, value = int(seq_s), int(value_s)
                except ValueError:
                    raise LedgerCorrupt(f"{path}:{lineno}: non-integer seq or value")
                if seq != ledger._seq + 1:
                    raise LedgerCorrupt(f"{path}:{lineno}: sequence gap ({seq} after {ledger._seq})")
                ledger._seq = seq
                if op == "ISSUE":
                    ledger.cards[cid] = PrepaidCard(card_id=cid, value=value,
                                                    status=CardStatus.GENERATED)
                elif op == "DIST":
                    card = ledger.cards.get(cid)
                    if card is None:
                        raise LedgerCorrupt(f"{path}:{lineno}: DIST of unknown card")
                    card.status = CardStatus.DISTRIBUTED
                elif op == "SPEND":
                    card = ledger.cards.get(cid)
                    if card is None:
                        raise LedgerCorrupt(f"{path}:{lineno}: SPEND of unknown card")
                    if card.status is CardStatus.SPENT:
                        raise LedgerCorrupt(f"{path}:{lineno}: second SPEND of {cid}")
                    card.status = CardStatus.SPENT
                    card.spent_by = account
                    ledger._spend_seqs[cid] = seq
                    ledger.accounts[account] = ledger.accounts.get(account, 0) + value
                else:
                    raise LedgerCorrupt(f"{path}:{lineno}: unknown op {op!r}")
        if attach:
            ledger._path = path
            ledger._fh = open(path, "a", encoding="utf-8")
        return ledger
