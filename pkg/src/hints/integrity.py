"""Tamper-evident hash chain with published anchors, and a sorted-key attester.

The chain gives relative temporal ordering: every entry commits to its
predecessor, and anchors (chain heads published on a write-once medium)
bracket each entry between two publication dates.

The attester is a Merkle tree over the sorted key sequence.  Membership is
an audit path; absence is shown by the audit paths of the two stored keys
adjacent to the target (their leaf indices must be consecutive).
"""

from __future__ import annotations

import bisect
import hashlib
import os
import struct
from dataclasses import dataclass
from datetime import date
from enum import Enum
from pathlib import Path
from typing import Iterable, Optional, Sequence

from .encoding import ZERO_DIGEST, encode, record
from .errors import AnchorViolation, ChainError, NotAnchored

_sha256 = hashlib.sha256
_SEQ = struct.Struct(">Q")
_LINK_TAG = b"HINTS-link\x00"
ENTRY_SIZE = 8 + 32 * 3


def link_digest(seq: int, payload_digest: bytes, prev_link: bytes) -> bytes:
    return _sha256(_LINK_TAG + _SEQ.pack(seq) + payload_digest + prev_link).digest()


@record(0x30)
@dataclass(frozen=True)
class ChainedEntry:
    seq: int
    payload_digest: bytes
    prev_link: bytes
    entry_digest: bytes

    def to_bytes(self) -> bytes:
        """Fixed-width stored form (104 bytes)."""
        return _SEQ.pack(self.seq) + self.payload_digest + self.prev_link + self.entry_digest

    @classmethod
    def from_bytes(cls, raw: bytes) -> "ChainedEntry":
        if len(raw) != ENTRY_SIZE:
            raise ChainError(f"stored entry must be {ENTRY_SIZE} bytes, got {len(raw)}")
        (seq,) = _SEQ.unpack_from(raw)
        return cls(seq, raw[8:40], raw[40:72], raw[72:104])


def verify_chain(entries: Sequence[ChainedEntry], payloads: Sequence[bytes]) -> Optional[int]:
    """Return the seq of the first entry that fails verification, or None."""
    if len(entries) != len(payloads):
        return min(len(entries), len(payloads))
    prev = ZERO_DIGEST
    for i, e in enumerate(entries):
        if (
            e.seq != i
            or e.prev_link != prev
            or _sha256(payloads[i]).digest() != e.payload_digest
            or link_digest(e.seq, e.payload_digest, e.prev_link) != e.entry_digest
        ):
            return i
        prev = e.entry_digest
    return None


class HashChain:
    def __init__(self):
        self.entries: list[ChainedEntry] = []
        self.payloads: list[bytes] = []

    def __len__(self):
        return len(self.entries)

    @property
    def head(self) -> Optional[ChainedEntry]:
        return self.entries[-1] if self.entries else None

    def append(self, payload: bytes) -> ChainedEntry:
        seq = len(self.entries)
        prev = self.entries[-1].entry_digest if self.entries else ZERO_DIGEST
        pd = _sha256(payload).digest()
        entry = ChainedEntry(seq, pd, prev, link_digest(seq, pd, prev))
        self.entries.append(entry)
        self.payloads.append(payload)
        return entry

    def verify(self) -> None:
        bad = verify_chain(self.entries, self.payloads)
        if bad is not None:
            raise ChainError(f"chain verification failed at entry {bad}")

    def position(self, seq: int, anchors: "AnchorLog") -> "ChainPosition":
        """Anchor-bracketed position of entry ``seq``, for inclusion in proofs."""
        lower, upper = anchors.bracket(seq)
        start = lower.seq + 1
        return ChainPosition(
            seq=seq,
            lower_seq=None if lower is GENESIS else lower.seq,
            upper_seq=upper.seq,
            payload_digests=tuple(e.payload_digest for e in self.entries[start : upper.seq + 1]),
        )


@record(0x31)
@dataclass(frozen=True)
class Anchor:
    seq: int
    entry_digest: bytes
    published_on: date

    def to_line(self) -> str:
        return f"{self.seq} {self.entry_digest.hex()} {self.published_on.isoformat()}"

    @classmethod
    def from_line(cls, line: str) -> "Anchor":
        try:
            seq, hexd, day = line.split()
            d = bytes.fromhex(hexd)
            anchor = cls(int(seq), d, date.fromisoformat(day))
        except ValueError as exc:
            raise AnchorViolation(f"bad anchor line {line!r}") from exc
        if len(d) != 32 or anchor.seq < 0 or anchor.to_line() != line.strip():
            raise AnchorViolation(f"bad anchor line {line!r}")
        return anchor


class _Genesis:
    """Implicit anchor preceding seq 0; it bounds nothing in time."""

    seq = -1
    entry_digest = ZERO_DIGEST
    published_on = date.min

    def __repr__(self):
        return "GENESIS"


GENESIS = _Genesis()


class AnchorLog:
    """Append-only anchor log; optionally mirrored to a file, one anchor per line.

    Sequence numbers strictly increase; publication dates never decrease.
    """

    def __init__(self, path: str | os.PathLike | None = None):
        self.anchors: list[Anchor] = []
        self._seqs: list[int] = []
        self.path = Path(path) if path is not None else None
        if self.path is not None and self.path.exists():
            for n, line in enumerate(self.path.read_text().splitlines(), 1):
                if line.strip():
                    try:
                        self._admit(Anchor.from_line(line))
                    except AnchorViolation as exc:
                        raise AnchorViolation(f"{self.path}:{n}: {exc}") from exc

    @classmethod
    def from_anchors(cls, anchors: Iterable[Anchor]) -> "AnchorLog":
        log = cls()
        for a in anchors:
            log._admit(a)
        return log

    def __len__(self):
        return len(self.anchors)

    def __iter__(self):
        return iter(self.anchors)

    @property
    def last(self) -> Optional[Anchor]:
        return self.anchors[-1] if self.anchors else None

    def _admit(self, anchor: Anchor) -> None:
        last = self.last
        if last is not None:
            if anchor.seq <= last.seq:
                raise AnchorViolation(f"anchor for seq {anchor.seq} would overwrite or precede seq {last.seq}")
            if anchor.published_on < last.published_on:
                raise AnchorViolation("anchor publication dates must not decrease")
        self.anchors.append(anchor)
        self._seqs.append(anchor.seq)

    def append(self, anchor: Anchor) -> Anchor:
        self._admit(anchor)
        if self.path is not None:
            with open(self.path, "a") as fh:
                fh.write(anchor.to_line() + "\n")
                fh.flush()
                os.fsync(fh.fileno())
        return anchor

    def get(self, seq: int) -> Optional[Anchor]:
        i = bisect.bisect_left(self._seqs, seq)
        if i < len(self._seqs) and self._seqs[i] == seq:
            return self.anchors[i]
        return None

    def bracket(self, seq: int):
        """Nearest anchor strictly before ``seq`` (or GENESIS) and nearest at or after it."""
        i = bisect.bisect_left(self._seqs, seq)
        lower = self.anchors[i - 1] if i > 0 else GENESIS
        if i == len(self.anchors):
            raise NotAnchored(f"entry {seq} follows the last anchor", ) from None
        return lower, self.anchors[i]

    def lower_bound(self, seq: int):
        i = bisect.bisect_left(self._seqs, seq)
        return self.anchors[i - 1] if i > 0 else GENESIS

    def to_text(self) -> str:
        return "".join(a.to_line() + "\n" for a in self.anchors)


def publish_anchor(chain: HashChain, anchors: AnchorLog, on: date) -> Anchor:
    head = chain.head
    if head is None:
        raise ChainError("cannot anchor an empty chain")
    return anchors.append(Anchor(head.seq, head.entry_digest, on))


def chain_locate(entry: ChainedEntry, chain: HashChain | Sequence[ChainedEntry], anchors: AnchorLog):
    """Bracket ``entry`` between anchors, re-deriving links from the chain.

    Only the anchors are trusted: the link digests between the lower and the
    upper anchor are recomputed from payload digests, so a spliced entry
    (valid-looking but with a wrong predecessor) fails.  Raises NotAnchored
    when no anchor follows the entry; ChainError when the entry is not part of
    the anchored chain.
    """
    entries = chain.entries if isinstance(chain, HashChain) else chain
    lower, upper = anchors.bracket(entry.seq)
    if upper.seq >= len(entries):
        raise ChainError("anchor refers past the end of the chain")
    link = lower.entry_digest
    for e in entries[lower.seq + 1 : upper.seq + 1]:
        if e.prev_link != link:
            raise ChainError(f"entry {e.seq} does not follow its predecessor")
        link = link_digest(e.seq, e.payload_digest, link)
        if e.seq == entry.seq and (e != entry or link != entry.entry_digest):
            raise ChainError(f"entry {entry.seq} is not the anchored entry")
    if link != upper.entry_digest:
        raise ChainError(f"segment {lower.seq}..{upper.seq} does not reach its anchor")
    return lower, upper


@record(0x32)
@dataclass(frozen=True)
class ChainPosition:
    """An entry's place in the chain, provable from the anchor log alone.

    ``payload_digests`` cover seqs ``lower_seq + 1 .. upper_seq``.
    """

    seq: int
    lower_seq: Optional[int]
    upper_seq: int
    payload_digests: tuple[bytes, ...]


def verify_position(pos: ChainPosition, payload_digest: bytes, anchors: AnchorLog):
    """Check ``pos`` against the public anchor log; return (lower, upper) anchors."""
    try:
        lower, upper = anchors.bracket(pos.seq)
    except NotAnchored as exc:
        raise ChainError(str(exc)) from exc
    if (None if lower is GENESIS else lower.seq) != pos.lower_seq or upper.seq != pos.upper_seq:
        raise ChainError(f"entry {pos.seq} cites anchors other than its nearest ones")
    first = lower.seq + 1
    if len(pos.payload_digests) != upper.seq - lower.seq:
        raise ChainError("segment length does not match its anchors")
    if pos.payload_digests[pos.seq - first] != payload_digest:
        raise ChainError(f"payload of entry {pos.seq} does not match the chain")
    link = lower.entry_digest
    for offset, pd in enumerate(pos.payload_digests):
        link = link_digest(first + offset, pd, link)
    if link != upper.entry_digest:
        raise ChainError(f"segment {first}..{upper.seq} does not reach its anchor")
    return lower, upper


# -- attester ---------------------------------------------------------------

_LEAF = b"\x00"
_NODE = b"\x01"
_ROOT = b"\x02"
EMPTY_TREE = _sha256(b"").digest()


def leaf_hash(key: bytes) -> bytes:
    return _sha256(_LEAF + key).digest()


def node_hash(left: bytes, right: bytes) -> bytes:
    return _sha256(_NODE + left + right).digest()


def commitment_digest(tree_root: bytes, count: int) -> bytes:
    return _sha256(_ROOT + _SEQ.pack(count) + tree_root).digest()


EMPTY_ROOT = commitment_digest(EMPTY_TREE, 0)


@record(0x40)
@dataclass(frozen=True)
class AttesterCommitment:
    root_digest: bytes
    count: int


class ProofKind(str, Enum):
    MEMBERSHIP = "membership"
    ABSENCE = "absence"


@record(0x41)
@dataclass(frozen=True)
class MembershipPath:
    index: int
    key: bytes
    siblings: tuple[bytes, ...]


@record(0x42)
@dataclass(frozen=True)
class AttestationProof:
    kind: ProofKind
    target_key: bytes
    count: int
    left: Optional[MembershipPath] = None
    right: Optional[MembershipPath] = None


@record(0x43)
@dataclass(frozen=True)
class RangeProof:
    """Every stored key k with lo <= k <= hi, plus the neighbours just outside."""

    lo: bytes
    hi: bytes
    count: int
    members: tuple[MembershipPath, ...]
    left: Optional[MembershipPath] = None
    right: Optional[MembershipPath] = None

    def keys(self) -> list[bytes]:
        return [m.key for m in self.members]


def _level_sizes(count: int) -> list[int]:
    sizes = [count]
    while sizes[-1] > 1:
        sizes.append((sizes[-1] + 1) // 2)
    return sizes


def path_root(path: MembershipPath, count: int) -> Optional[bytes]:
    """Recompute the tree root from an audit path, or None if it is malformed."""
    if not 0 <= path.index < count:
        return None
    h = leaf_hash(path.key)
    idx = path.index
    sibs = iter(path.siblings)
    try:
        for size in _level_sizes(count)[:-1]:
            if idx % 2 == 1:
                h = node_hash(next(sibs), h)
            elif idx + 1 < size:
                h = node_hash(h, next(sibs))
            idx //= 2
    except StopIteration:
        return None
    if next(sibs, None) is not None:
        return None
    return h


def _path_ok(path: MembershipPath, commitment: AttesterCommitment) -> bool:
    root = path_root(path, commitment.count)
    return root is not None and commitment_digest(root, commitment.count) == commitment.root_digest


class Attester:
    """Authenticated sorted key set.  Insert freely, then commit to prove."""

    def __init__(self, keys: Iterable[bytes] = ()):
        self._keys: set[bytes] = set(keys)
        self._sorted: Optional[list[bytes]] = None
        self._levels: list[bytes] = []
        self._commitment: Optional[AttesterCommitment] = None

    def __len__(self):
        return len(self._keys)

    def __contains__(self, key: bytes) -> bool:
        return key in self._keys

    def insert(self, key: bytes) -> None:
        if key not in self._keys:
            self._keys.add(bytes(key))
            self._commitment = None

    def keys(self) -> list[bytes]:
        self.commit()
        return self._sorted

    def commit(self) -> AttesterCommitment:
        if self._commitment is not None:
            return self._commitment
        keys = sorted(self._keys)
        lvl = bytearray()
        for k in keys:
            lvl += _sha256(_LEAF + k).digest()
        levels = [bytes(lvl)]
        while len(levels[-1]) > 32:
            prev = levels[-1]
            n = len(prev) // 32
            nxt = bytearray()
            for i in range(0, n - 1, 2):
                nxt += _sha256(_NODE + prev[32 * i : 32 * i + 64]).digest()
            if n % 2:
                nxt += prev[-32:]
            levels.append(bytes(nxt))
        tree_root = levels[-1] if keys else EMPTY_TREE
        self._sorted = keys
        self._levels = levels
        self._commitment = AttesterCommitment(commitment_digest(tree_root, len(keys)), len(keys))
        return self._commitment

    def _path(self, index: int) -> MembershipPath:
        sibs = []
        idx = index
        for lvl in self._levels[:-1]:
            size = len(lvl) // 32
            if idx % 2 == 1:
                sibs.append(lvl[32 * (idx - 1) : 32 * idx])
            elif idx + 1 < size:
                sibs.append(lvl[32 * (idx + 1) : 32 * (idx + 2)])
            idx //= 2
        return MembershipPath(index, self._sorted[index], tuple(sibs))

    def attest(self, key: bytes) -> AttestationProof:
        c = self.commit()
        keys = self._sorted
        i = bisect.bisect_left(keys, key)
        if i < len(keys) and keys[i] == key:
            return AttestationProof(ProofKind.MEMBERSHIP, key, c.count, left=self._path(i))
        left = self._path(i - 1) if i > 0 else None
        right = self._path(i) if i < len(keys) else None
        return AttestationProof(ProofKind.ABSENCE, key, c.count, left=left, right=right)

    def attest_range(self, lo: bytes, hi: bytes) -> RangeProof:
        c = self.commit()
        keys = self._sorted
        i = bisect.bisect_left(keys, lo)
        j = bisect.bisect_right(keys, hi)
        return RangeProof(
            lo=lo,
            hi=hi,
            count=c.count,
            members=tuple(self._path(k) for k in range(i, j)),
            left=self._path(i - 1) if i > 0 else None,
            right=self._path(j) if j < len(keys) else None,
        )


def _adjacent(left: Optional[MembershipPath], right: Optional[MembershipPath], count: int) -> bool:
    if left is None and right is None:
        return count == 0
    if left is None:
        return right.index == 0
    if right is None:
        return left.index == count - 1
    return right.index == left.index + 1


def verify_attestation(commitment: AttesterCommitment, proof: AttestationProof) -> bool:
    if proof.count != commitment.count:
        return False
    if proof.kind is ProofKind.MEMBERSHIP:
        p = proof.left
        return p is not None and proof.right is None and p.key == proof.target_key and _path_ok(p, commitment)
    if proof.left is not None and not (proof.left.key < proof.target_key and _path_ok(proof.left, commitment)):
        return False
    if proof.right is not None and not (proof.target_key < proof.right.key and _path_ok(proof.right, commitment)):
        return False
    return _adjacent(proof.left, proof.right, commitment.count)


def verify_range(commitment: AttesterCommitment, proof: RangeProof) -> bool:
    if proof.count != commitment.count or proof.lo > proof.hi:
        return False
    chain = []
    if proof.left is not None:
        if not proof.left.key < proof.lo:
            return False
        chain.append(proof.left)
    for m in proof.members:
        if not proof.lo <= m.key <= proof.hi:
            return False
        chain.append(m)
    if proof.right is not None:
        if not proof.hi < proof.right.key:
            return False
        chain.append(proof.right)
    if not chain:
        return commitment.count == 0
    if chain[0].index != 0 and proof.left is None:
        return False
    if chain[-1].index != commitment.count - 1 and proof.right is None:
        return False
    for a, b in zip(chain, chain[1:]):
        if b.index != a.index + 1 or not a.key < b.key:
            return False
    return all(_path_ok(p, commitment) for p in chain)


def proof_size(proof) -> int:
    return len(encode(proof))
