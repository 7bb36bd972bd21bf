"""Reduced-trust historian: certificates in, verifiable proofs out.

Every accepted certificate is appended to a hash chain and indexed in two
attesters, one keyed by name and one by person key.  Periodically the
historian appends an ``IndexCommitment`` (both attester roots) and anchors
the chain head, so the index is bound to a published point in time.

Resolution runs a pure engine over a *view* of the index.  The historian
runs it over its own state while recording which index ranges it reads;
the proof carries those ranges (with range proofs) and their certificates.
A verifier re-runs the same engine over a view built from the proof alone.
Reading a range the proof lacks is a ``missing-absence`` rejection.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass
from datetime import date, timedelta
from typing import Optional

from .certs import (
    Certificate,
    DelegationCertificate,
    IdentityCertificate,
    SCHEMES,
    KeyArchive,
    LinkCertificate,
    RevocationCertificate,
    SeveranceCertificate,
    Verdict,
    short_id,
    tbs,
    verify_at,
)
from .encoding import decode, digest, encode, kind_of, record
from .errors import (
    BadSignature,
    BrokenChain,
    ChainError,
    DecodeError,
    ForkedChain,
    HintsError,
    Rejected,
    SignerUnknown,
    StaleNonce,
)
from .histname import HistoricName, PrimaryName, parse_historic_name, render_historic_name
from .historian import Holder, Outcome, ResolutionResult, matched_holders
from .integrity import (
    GENESIS,
    AnchorLog,
    Attester,
    AttesterCommitment,
    ChainPosition,
    HashChain,
    RangeProof,
    publish_anchor,
    verify_position,
    verify_range,
)
from .journal import Journal
from .transport import Clock, SystemClock

NAME_INDEX = "name"
PERSON_INDEX = "person"
ROLE_LINK = 0x13
ROLE_SEVER = 0x14
ROLE_OUT = 0x15
ROLE_IN = 0x16
_SUFFIX = 10 + 1 + 8  # date, kind/role byte, seq
PROOF_HEADER = b"HINTS-PROOF v1\n"


class MissingListing(HintsError):
    reason = "missing-absence"


@record(0x60)
@dataclass(frozen=True)
class IndexCommitment:
    names: AttesterCommitment
    persons: AttesterCommitment
    as_of: date
    entries: int  # chain entries covered; equals the commitment's own seq


@record(0x61)
@dataclass(frozen=True)
class ProvedCert:
    cert: Certificate
    position: ChainPosition


@record(0x62)
@dataclass(frozen=True)
class Listing:
    index: str
    range: RangeProof


@record(0x63)
@dataclass(frozen=True)
class Candidate:
    first: date
    last: date
    person_key: bytes  # current (terminal) person key
    link_key: bytes  # person key that signed the matched link
    current_name: Optional[PrimaryName]
    delegations: tuple[int, ...]  # chain seqs, link_key -> person_key


@record(0x64)
@dataclass(frozen=True)
class ResolutionProof:
    query: str
    loose: bool
    outcome: str
    commitment: IndexCommitment
    commitment_position: ChainPosition
    certs: tuple[ProvedCert, ...]
    listings: tuple[Listing, ...]
    candidates: tuple[Candidate, ...]

    @property
    def as_of(self) -> date:
        return self.commitment.as_of

    def result(self) -> ResolutionResult:
        return ResolutionResult(
            Outcome(self.outcome),
            tuple(Holder(c.first, c.last, c.current_name) for c in self.candidates),
        )


# -- index keys -------------------------------------------------------------


def name_prefix(name: PrimaryName) -> bytes:
    return str(name).encode("utf-8") + b"\x00"


def _suffix(day: date, tag: int, seq: int) -> bytes:
    return day.isoformat().encode("ascii") + bytes([tag]) + seq.to_bytes(8, "big")


def index_keys(cert, seq: int) -> list[tuple[str, bytes]]:
    day = cert.claimed_date
    kind = kind_of(cert)
    if isinstance(cert, (IdentityCertificate, RevocationCertificate)):
        return [(NAME_INDEX, name_prefix(cert.name) + _suffix(day, kind, seq))]
    if isinstance(cert, LinkCertificate):
        return [
            (NAME_INDEX, name_prefix(cert.name) + _suffix(day, kind, seq)),
            (PERSON_INDEX, cert.person_key + _suffix(day, ROLE_LINK, seq)),
        ]
    if isinstance(cert, SeveranceCertificate):
        return [
            (NAME_INDEX, name_prefix(cert.name) + _suffix(day, kind, seq)),
            (PERSON_INDEX, cert.person_key + _suffix(day, ROLE_SEVER, seq)),
        ]
    return [
        (PERSON_INDEX, cert.issuer + _suffix(day, ROLE_OUT, seq)),
        (PERSON_INDEX, cert.delegate + _suffix(day, ROLE_IN, seq)),
    ]


def split_key(key: bytes) -> tuple[bytes, int, int]:
    """(prefix, tag, seq) of an index key."""
    if len(key) <= _SUFFIX:
        raise DecodeError("index key too short")
    return key[:-_SUFFIX], key[-9], int.from_bytes(key[-8:], "big")


def _upper(prefix: bytes) -> bytes:
    return prefix + b"\xff"


# -- resolution engine ------------------------------------------------------


@dataclass(frozen=True)
class _Span:
    lo: date
    hi: date
    severed: bool


@dataclass(frozen=True)
class EngineAnswer:
    result: ResolutionResult
    candidates: tuple[Candidate, ...]


class Engine:
    """Certified resolution semantics over an index view.

    A view supplies ``name_entries(name) -> [(seq, cert)]``,
    ``key_entries(kid) -> [(seq, role, cert)]``, ``floor(seq) -> date`` (the
    publication date of the anchor just before the entry) and ``archive``.
    """

    def __init__(self, view, now: date):
        self.view = view
        self.now = now
        self._assign: dict = {}
        self._walks: dict = {}
        self._spans: dict = {}

    def eff(self, seq: int, cert) -> date:
        """A certificate cannot take effect before the chain shows it existed."""
        return max(cert.claimed_date, self.view.floor(seq))

    def assignments(self, name: PrimaryName) -> list:
        key = str(name)
        if key in self._assign:
            return self._assign[key]
        entries = self.view.name_entries(name)
        idents = sorted(
            ((self.eff(s, c), s, c) for s, c in entries if isinstance(c, IdentityCertificate)),
            key=lambda t: (t[0], t[1]),
        )
        revs = [(self.eff(s, c), c) for s, c in entries if isinstance(c, RevocationCertificate)]
        out = []
        for i, (lo, seq, ident) in enumerate(idents):
            hi = ident.end
            for r_eff, r in revs:
                if r.key == ident.key and r.issuer == ident.issuer and r.subject == ident.subject and r_eff >= lo:
                    hi = min(hi, r_eff - timedelta(days=1))
            for later_lo, _, _ in idents[i + 1 :]:
                if later_lo > lo:
                    hi = min(hi, later_lo - timedelta(days=1))
                    break
            if lo <= hi:
                out.append((lo, hi, ident))
        self._assign[key] = out
        return out

    def walk(self, kid: bytes) -> tuple[bytes, tuple]:
        """Follow delegations from ``kid``; return (terminal key, ((seq, cert), ...))."""
        if kid in self._walks:
            return self._walks[kid]
        archive = self.view.archive
        path = []
        seen = {kid}
        key = kid
        while True:
            outs = [(s, c) for s, role, c in self.view.key_entries(key) if role == ROLE_OUT and c.time <= self.now]
            if not outs:
                break
            if len(outs) > 1:
                raise ForkedChain(f"key {short_id(key)} delegates to {len(outs)} keys")
            s, d = outs[0]
            entry = archive.by_key(key)
            if entry is None or not entry.covers(d.time):
                raise BrokenChain(f"delegation from {short_id(key)} on {d.time} falls outside the key's validity")
            if d.delegate in seen:
                raise BrokenChain("delegation cycle")
            seen.add(d.delegate)
            path.append((s, d))
            key = d.delegate
        self._walks[kid] = (key, tuple(path))
        return self._walks[kid]

    def terminal(self, kid: bytes) -> bytes:
        return self.walk(kid)[0]

    def lineage(self, terminal: bytes) -> list[bytes]:
        """Every key whose delegation trail ends at ``terminal``."""
        out = [terminal]
        seen = {terminal}
        i = 0
        while i < len(out):
            for _, role, c in self.view.key_entries(out[i]):
                if role == ROLE_IN and c.time <= self.now and c.issuer not in seen:
                    if self.terminal(c.issuer) == terminal:
                        seen.add(c.issuer)
                        out.append(c.issuer)
            i += 1
        return out

    def link_assignment(self, link: LinkCertificate):
        """The assignment whose name key signed the link (first signature)."""
        for lo, hi, ident in self.assignments(link.name):
            if lo <= link.start <= hi:
                try:
                    if verify_at(link, link.start, self.view.archive, name_key=ident.key):
                        return lo, hi
                except SignerUnknown:
                    continue
        return None

    def link_span(self, seq: int, link: LinkCertificate) -> Optional[_Span]:
        if seq in self._spans:
            return self._spans[seq]
        span = None
        assignment = self.link_assignment(link)
        if assignment is not None:
            lo = max(self.eff(seq, link), assignment[0])
            hi = min(link.end, assignment[1])
            severed = False
            if lo <= hi:
                term = self.terminal(link.person_key)
                for s, c in self.view.name_entries(link.name):
                    if isinstance(c, SeveranceCertificate):
                        e = self.eff(s, c)
                        if lo <= e <= hi and self.terminal(c.person_key) == term:
                            hi, severed = e, True
                span = _Span(lo, hi, severed)
        self._spans[seq] = span
        return span

    def current_name(self, terminal: bytes) -> Optional[PrimaryName]:
        best = None
        for kid in self.lineage(terminal):
            for s, role, c in self.view.key_entries(kid):
                if role != ROLE_LINK:
                    continue
                span = self.link_span(s, c)
                if span is None or span.lo > self.now:
                    continue
                if span.hi > self.now or (span.hi == self.now and not span.severed):
                    if best is None or span.lo > best[0] or (span.lo == best[0] and str(c.name) < str(best[1])):
                        best = (span.lo, c.name)
        return best[1] if best else None

    def resolve(self, h: HistoricName, loose: bool) -> EngineAnswer:
        iv = h.interval()
        spans = []
        for s, c in self.view.name_entries(h.name):
            if isinstance(c, LinkCertificate):
                span = self.link_span(s, c)
                if span is not None and span.lo <= iv.last:
                    spans.append((span.lo, s, span.hi, c))
        spans.sort(key=lambda t: (t[0], t[1]))
        found = matched_holders([(lo, hi, self.terminal(c.person_key)) for lo, _, hi, c in spans], iv.first, iv.last, loose)
        cands = []
        for term, (first, last) in found.items():
            link_key = next(
                c.person_key
                for lo, _, hi, c in spans
                if self.terminal(c.person_key) == term and lo <= last and (loose or hi >= first)
            )
            path = self.walk(link_key)[1]
            cands.append(Candidate(first, last, term, link_key, self.current_name(term), tuple(s for s, _ in path)))
        cands.sort(key=lambda c: (c.first, c.last, str(c.current_name), c.person_key))
        holders = tuple(Holder(c.first, c.last, c.current_name) for c in cands)
        if not cands:
            outcome = Outcome.NO_HISTORY
        elif len(cands) > 1:
            outcome = Outcome.MULTIVALENT
        elif cands[0].current_name is None:
            outcome = Outcome.NO_CURRENT_NAME
        else:
            outcome = Outcome.RESOLVED
        return EngineAnswer(ResolutionResult(outcome, holders), tuple(cands))


def _anchor_floor(anchors: AnchorLog, seq: int) -> date:
    lower = anchors.lower_bound(seq)
    return date.min if lower is GENESIS else lower.published_on


class _LiveView:
    """The historian's own index, recording each range the engine reads."""

    def __init__(self, hist: "CertifiedHistorian"):
        self.hist = hist
        self.archive = hist.archive
        self.names: list[PrimaryName] = []
        self.keys: list[bytes] = []

    def name_entries(self, name):
        if name not in self.names:
            self.names.append(name)
        return self.hist._by_name.get(name, [])

    def key_entries(self, kid):
        if kid not in self.keys:
            self.keys.append(kid)
        return self.hist._by_key.get(kid, [])

    def floor(self, seq):
        return _anchor_floor(self.hist.anchors, seq)


# -- the historian ----------------------------------------------------------


class CertifiedHistorian:
    def __init__(
        self,
        archive: KeyArchive,
        anchors: AnchorLog | None = None,
        clock: Clock | None = None,
        anchor_period: int = 1024,
        journal: Journal | None = None,
    ):
        if anchor_period < 1:
            raise ValueError("anchor_period must be positive")
        self.archive = archive
        self.anchors = anchors if anchors is not None else AnchorLog()
        self.clock = clock or SystemClock()
        self.anchor_period = anchor_period
        self.journal = journal
        self.chain: HashChain = journal.chain if journal is not None else HashChain()
        self._lock = threading.RLock()
        self.certs: dict[int, Certificate] = {}
        self.commitments: list[tuple[int, IndexCommitment]] = []
        self.name_attester = Attester()
        self.person_attester = Attester()
        self._by_name: dict[PrimaryName, list] = {}
        self._by_key: dict[bytes, list] = {}
        self._nonces: set[bytes] = set()
        self._since_commit = 0
        if journal is not None and len(journal):
            self._replay(journal.payloads())

    def __getstate__(self):
        state = self.__dict__.copy()
        del state["_lock"]
        return state

    def __setstate__(self, state):
        self.__dict__.update(state)
        self._lock = threading.RLock()

    def today(self) -> date:
        return self.clock.today()

    def _replay(self, payloads: list[bytes]) -> None:
        for seq, raw in enumerate(payloads):
            obj = decode(raw)
            if isinstance(obj, IndexCommitment):
                self.commitments.append((seq, obj))
                self._since_commit = 0
            else:
                self._index(seq, obj)

    def _append(self, payload: bytes):
        if self.journal is not None:
            return self.journal.append(payload)
        return self.chain.append(payload)

    def _index(self, seq: int, cert) -> None:
        self.certs[seq] = cert
        self._nonces.add(cert.nonce)
        for index, key in index_keys(cert, seq):
            if index == NAME_INDEX:
                self.name_attester.insert(key)
                self._by_name.setdefault(cert.name, []).append((seq, cert))
            else:
                self.person_attester.insert(key)
                self._by_key.setdefault(key[:-_SUFFIX], []).append((seq, key[-9], cert))
        self._since_commit += 1

    # -- ingestion ----------------------------------------------------------

    def _check(self, cert) -> None:
        now = self.today()
        if cert.nonce in self._nonces:
            raise StaleNonce(f"nonce {cert.nonce.hex()} was already used")
        if cert.claimed_date > now:
            raise Rejected("temporal-order", f"certificate dated {cert.claimed_date} is after today ({now})")
        if isinstance(cert, DelegationCertificate):
            if any(role == ROLE_OUT for _, role, _ in self._by_key.get(cert.issuer, [])):
                raise ForkedChain(f"key {short_id(cert.issuer)} has already delegated")
            entry = self.archive.by_key(cert.issuer)
            if entry is None:
                raise SignerUnknown(f"no archived key {short_id(cert.issuer)}")
            if not entry.covers(cert.time):
                raise BrokenChain(
                    f"delegation on {cert.time} is outside {short_id(cert.issuer)}'s validity "
                    f"{entry.valid_from}..{entry.valid_to}"
                )
        if isinstance(cert, LinkCertificate):
            engine = Engine(_LiveView(self), now)
            if engine.link_assignment(cert) is None:
                raise Rejected(
                    "name-key-mismatch", f"no identity certificate for {cert.name} carries the key that signed the link"
                )
            return
        verdict = verify_at(cert, cert.claimed_date, self.archive)
        if not verdict:
            raise BadSignature(verdict.reason)

    def ingest(self, cert, check: bool = True):
        """Validate, chain and index one certificate; returns its ChainedEntry."""
        with self._lock:
            if check:
                self._check(cert)
            entry = self._append(encode(cert))
            self._index(entry.seq, cert)
            if self._since_commit >= self.anchor_period:
                self.commit_and_anchor()
            return entry

    ingest_provider_certificate = ingest
    ingest_link_certificate = ingest

    def commit_and_anchor(self, on: Optional[date] = None) -> IndexCommitment:
        with self._lock:
            on = on or self.today()
            c = IndexCommitment(self.name_attester.commit(), self.person_attester.commit(), on, len(self.chain))
            entry = self._append(encode(c))
            self.commitments.append((entry.seq, c))
            self._since_commit = 0
            publish_anchor(self.chain, self.anchors, on)
            return c

    def latest_commitment(self) -> IndexCommitment:
        with self._lock:
            now = self.today()
            if not self.commitments or self._since_commit or self.commitments[-1][1].as_of < now:
                self.commit_and_anchor(now)
            elif self.anchors.last is None or self.anchors.last.seq < self.commitments[-1][0]:
                    publish_anchor(self.chain, self.anchors, now)
            return self.commitments[-1][1]

    # -- resolution ---------------------------------------------------------

    def resolve(self, h: HistoricName, loose: bool = False) -> ResolutionResult:
        with self._lock:
            return Engine(_LiveView(self), self.today()).resolve(h, loose).result

    def certified_resolve(self, h: HistoricName, loose: bool = False) -> ResolutionProof:
        with self._lock:
            commitment = self.latest_commitment()
            cseq = self.commitments[-1][0]
            view = _LiveView(self)
            answer = Engine(view, commitment.as_of).resolve(h, loose)
            listings = []
            seqs: set[int] = set()
            for name in view.names:
                p = name_prefix(name)
                rp = self.name_attester.attest_range(p, _upper(p))
                listings.append(Listing(NAME_INDEX, rp))
                seqs.update(split_key(k)[2] for k in rp.keys())
            for kid in view.keys:
                rp = self.person_attester.attest_range(kid, _upper(kid))
                listings.append(Listing(PERSON_INDEX, rp))
                seqs.update(split_key(k)[2] for k in rp.keys())
            certs = tuple(ProvedCert(self.certs[s], self.chain.position(s, self.anchors)) for s in sorted(seqs))
            return ResolutionProof(
                query=render_historic_name(h),
                loose=loose,
                outcome=answer.result.outcome.value,
                commitment=commitment,
                commitment_position=self.chain.position(cseq, self.anchors),
                certs=certs,
                listings=tuple(listings),
                candidates=answer.candidates,
            )


# -- verification -----------------------------------------------------------


class _ProofView:
    def __init__(self, archive: KeyArchive, anchors: AnchorLog, names: dict, keys: dict):
        self.archive = archive
        self.anchors = anchors
        self._names = names
        self._keys = keys

    def name_entries(self, name):
        p = name_prefix(name)
        if p not in self._names:
            raise MissingListing(f"the proof does not list name {name}")
        return self._names[p]

    def key_entries(self, kid):
        if kid not in self._keys:
            raise MissingListing(f"the proof does not list key {short_id(kid)}")
        return self._keys[kid]

    def floor(self, seq):
        return _anchor_floor(self.anchors, seq)


def _reject(reason: str) -> Verdict:
    return Verdict(False, reason)


def _signature_ok(cert, proof_idents: list, archive: KeyArchive) -> bool:
    try:
        if isinstance(cert, LinkCertificate):
            keys = [i.key for i in proof_idents if i.name == cert.name and _known(archive, i.key)]
            if not keys:
                # name listing absent: the engine checks the name signature if it ever uses this link
                entry = archive.by_key(cert.person_key)
                return (
                    entry is not None
                    and entry.covers(cert.claimed_date)
                    and SCHEMES[entry.scheme].verify(entry.public_key, tbs(cert), cert.signature2)
                )
            return any(verify_at(cert, cert.claimed_date, archive, name_key=k).valid for k in keys)
        return verify_at(cert, cert.claimed_date, archive).valid
    except SignerUnknown:
        return False


def _known(archive: KeyArchive, kid: bytes) -> bool:
    return archive.by_key(kid) is not None


def verify_resolution(proof: ResolutionProof, anchors: AnchorLog, archive: KeyArchive) -> Verdict:
    """Check a resolution proof using only public material.

    Returns Verdict(True, "accept") or Verdict(False, reason) naming the first
    failing check.
    """
    idents = [pc.cert for pc in proof.certs if isinstance(pc.cert, IdentityCertificate)]
    for pc in proof.certs:
        if not _signature_ok(pc.cert, idents, archive):
            return _reject("signature")

    bounds = {}
    try:
        c_lower, c_upper = verify_position(proof.commitment_position, digest(encode(proof.commitment)), anchors)
        for pc in proof.certs:
            if pc.position.seq in bounds or pc.position.seq >= proof.commitment.entries:
                return _reject("chain-position")
            bounds[pc.position.seq] = verify_position(pc.position, digest(encode(pc.cert)), anchors)
    except ChainError:
        return _reject("chain-position")

    for pc in proof.certs:
        _, upper = bounds[pc.position.seq]
        if pc.cert.claimed_date > upper.published_on:
            return _reject("temporal-order")
    c_floor = date.min if c_lower is GENESIS else c_lower.published_on
    if not c_floor <= proof.commitment.as_of <= c_upper.published_on:
        return _reject("temporal-order")

    if proof.commitment.entries != proof.commitment_position.seq:
        return _reject("commitment")

    by_seq = {pc.position.seq: pc.cert for pc in proof.certs}
    names: dict = {}
    keys: dict = {}
    for listing in proof.listings:
        rp = listing.range
        if listing.index == NAME_INDEX:
            root = proof.commitment.names
        elif listing.index == PERSON_INDEX:
            root = proof.commitment.persons
        else:
            return _reject("attestation")
        prefix = rp.lo
        if rp.hi != _upper(prefix) or not verify_range(root, rp):
            return _reject("attestation")
        entries = []
        for k in rp.keys():
            try:
                kp, tag, seq = split_key(k)
            except DecodeError:
                return _reject("listing-mismatch")
            cert = by_seq.get(seq)
            if kp != prefix or cert is None or (listing.index, k) not in index_keys(cert, seq):
                return _reject("listing-mismatch")
            entries.append((seq, cert) if listing.index == NAME_INDEX else (seq, tag, cert))
        target = names if listing.index == NAME_INDEX else keys
        if prefix in target:
            return _reject("listing-mismatch")
        target[prefix] = entries

    try:
        h = parse_historic_name(proof.query)
        answer = Engine(_ProofView(archive, anchors, names, keys), proof.as_of).resolve(h, proof.loose)
    except MissingListing:
        return _reject("missing-absence")
    except (ForkedChain, BrokenChain):
        return _reject("delegation")
    except HintsError:
        return _reject("answer-mismatch")

    claimed = proof.candidates
    if answer.result.outcome.value != proof.outcome or len(answer.candidates) != len(claimed):
        return _reject("answer-mismatch")
    for got, want in zip(answer.candidates, claimed):
        if (got.first, got.last, got.current_name) != (want.first, want.last, want.current_name):
            return _reject("answer-mismatch")
    for got, want in zip(answer.candidates, claimed):
        if (got.person_key, got.link_key) != (want.person_key, want.link_key):
            return _reject("person-key")
    for got, want in zip(answer.candidates, claimed):
        if got.delegations != want.delegations:
            return _reject("delegation")
    return Verdict(True, "accept")


# -- proof files ------------------------------------------------------------


def write_proof(proof: ResolutionProof) -> bytes:
    return PROOF_HEADER + encode(proof)


def read_proof(data: bytes) -> ResolutionProof:
    if not data.startswith(PROOF_HEADER):
        raise DecodeError("not a proof file")
    return decode(data[len(PROOF_HEADER) :], ResolutionProof)


def verify_proof_bytes(data: bytes, anchors: AnchorLog, archive: KeyArchive) -> Verdict:
    try:
        proof = read_proof(data)
    except DecodeError:
        return _reject("decode")
    return verify_resolution(proof, anchors, archive)
