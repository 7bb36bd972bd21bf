"""Shared fixtures: the certified Jane Mobile world and small builders."""

from __future__ import annotations

import time
from contextlib import contextmanager

from dataclasses import dataclass, field, replace
from datetime import date, timedelta
from pathlib import Path

from hints.certified import CertifiedHistorian
from hints.certs import KeyArchive, generate_key, issue_certificate, key_owner, make_nonce, sign_archive
from hints.histname import PrimaryName
from hints.integrity import AnchorLog
from hints.transport import VirtualClock

D = date.fromisoformat
JMOBILE = PrimaryName("jmobile", "yahoo.com")
JANE_EDU = PrimaryName("jane", "sample.edu")


@dataclass
class CertWorld:
    hist: CertifiedHistorian
    archive: KeyArchive
    clock: VirtualClock
    keys: dict
    authority: object
    certs: dict = field(default_factory=dict)
    _n: int = 0

    def nonce(self, day: date) -> bytes:
        self._n += 1
        return make_nonce(day, self._n.to_bytes(16, "big"))

    def issue(self, label: str, kind: str, fields: dict, signers: dict, check: bool = True):
        day = fields.get("start") or fields.get("time")
        if self.clock.today() < day:
            self.clock.set(day)
        cert = issue_certificate(kind, {**fields, "nonce": self.nonce(day)}, {r: self.keys[k] for r, k in signers.items()})
        self.hist.ingest(cert, check=check)
        self.hist.commit_and_anchor()
        self.certs[label] = cert
        return cert

    def write_public(self, directory: Path) -> tuple[Path, Path]:
        anchors = directory / "anchors.log"
        anchors.write_text(self.hist.anchors.to_text())
        archive = directory / "keys.archive"
        archive.write_bytes(sign_archive(self.archive, self.authority))
        return anchors, archive


def cert_world(scheme: str = "ed25519", start: date = D("1999-08-01"), anchor_period: int = 8) -> CertWorld:
    keys = {label: generate_key(scheme, seed=label.encode()) for label in (
        "yahoo", "sample", "hotmail", "name-jmobile", "name-jmobile-2", "name-jane-edu", "name-janem",
        "P1", "P2", "P3", "P4", "Q1", "authority",
    )}
    archive = KeyArchive()
    archive.register("yahoo.com", keys["yahoo"], D("1995-01-01"), D("2010-12-31"))
    archive.register("sample.edu", keys["sample"], D("1995-01-01"), D("2010-12-31"))
    archive.register("hotmail.com", keys["hotmail"], D("1995-01-01"), D("2010-12-31"))
    for label, lo, hi in (
        ("name-jmobile", "1999-08-01", "2001-07-31"),
        ("name-jmobile-2", "2000-09-01", "2003-08-31"),
        ("name-jane-edu", "2001-09-01", "2003-08-31"),
        ("name-janem", "2000-07-01", "2001-12-31"),
        ("P1", "1999-01-01", "2001-06-30"),
        ("P2", "2001-05-01", "2004-12-31"),
        ("P3", "2001-05-01", "2004-12-31"),
        ("P4", "2001-05-01", "2004-12-31"),
        ("Q1", "1999-01-01", "2004-12-31"),
    ):
        archive.register(key_owner(keys[label].key_id), keys[label], D(lo), D(hi))
    clock = VirtualClock(start)
    hist = CertifiedHistorian(archive, AnchorLog(), clock, anchor_period=anchor_period)
    return CertWorld(hist, archive, clock, keys, keys["authority"])


def jane_certified(scheme: str = "ed25519", severance: bool = False, james: bool = False) -> CertWorld:
    """Identity, link, revocation and delegation from the figures, then Jane's current name."""
    w = cert_world(scheme)
    k = w.keys
    w.issue("identity", "identity", dict(issuer="yahoo.com", subject="jmobile", key=k["name-jmobile"].key_id,
                                         start=D("1999-08-01"), end=D("2001-07-31")), {"issuer": "yahoo"})
    w.issue("link", "link", dict(name=JMOBILE, person_key=k["P1"].key_id, start=D("2000-03-02"), end=D("2000-05-01")),
            {"name": "name-jmobile", "person": "P1"})
    if severance:
        w.issue("severance", "severance", dict(name=JMOBILE, person_key=k["P1"].key_id, time=D("2000-04-25")),
                {"person": "P1"})
    w.issue("revocation", "revocation", dict(issuer="yahoo.com", subject="jmobile", key=k["name-jmobile"].key_id,
                                             start=D("2000-05-25")), {"issuer": "yahoo"})
    if james:
        w.issue("identity-james", "identity", dict(issuer="yahoo.com", subject="jmobile", key=k["name-jmobile-2"].key_id,
                                                   start=D("2000-09-01"), end=D("2003-08-31")), {"issuer": "yahoo"})
        w.issue("link-james", "link", dict(name=JMOBILE, person_key=k["Q1"].key_id, start=D("2000-09-02"),
                                           end=D("2002-08-31")), {"name": "name-jmobile-2", "person": "Q1"})
    w.issue("delegation", "delegation", dict(issuer=k["P1"].key_id, delegate=k["P2"].key_id, time=D("2001-06-01")),
            {"issuer": "P1", "delegate": "P2"})
    w.issue("identity-edu", "identity", dict(issuer="sample.edu", subject="jane", key=k["name-jane-edu"].key_id,
                                             start=D("2001-09-01"), end=D("2003-08-31")), {"issuer": "sample"})
    w.issue("link-edu", "link", dict(name=JANE_EDU, person_key=k["P2"].key_id, start=D("2001-09-01"),
                                     end=D("2002-08-31")), {"name": "name-jane-edu", "person": "P2"})
    w.clock.set(D("2002-03-01"))
    return w


STEP_WINDOWS = {"K1": ("1999-01-01", "2001-03-31"), "K2": ("2001-01-01", "2001-06-30"),
                "K3": ("2001-04-01", "2001-09-30"), "K4": ("2001-07-01", "2004-12-31")}
ON_TIME = {1: "2001-02-01", 2: "2001-05-01", 3: "2001-08-01"}
LATE = {1: "2001-04-01", 2: "2001-07-01", 3: "2001-10-01"}  # one day past the issuer key's window


def three_step_world(scheme="hmac-test", late_step=None):
    """K1 -> K2 -> K3 -> K4 between Jane's Yahoo link and her sample.edu link."""
    w = cert_world(scheme)
    for label, (lo, hi) in STEP_WINDOWS.items():
        w.keys[label] = generate_key(scheme, seed=label.encode())
        w.archive.register(key_owner(w.keys[label].key_id), w.keys[label], D(lo), D(hi))
    k = w.keys
    plan = [
        (D("1999-08-01"), "identity", "identity", dict(issuer="yahoo.com", subject="jmobile", key=k["name-jmobile"].key_id,
                                                       start=D("1999-08-01"), end=D("2001-07-31")), {"issuer": "yahoo"}),
        (D("2000-03-02"), "link", "link", dict(name=JMOBILE, person_key=k["K1"].key_id, start=D("2000-03-02"),
                                               end=D("2000-05-01")), {"name": "name-jmobile", "person": "K1"}),
        (D("2001-09-01"), "identity-edu", "identity", dict(issuer="sample.edu", subject="jane", key=k["name-jane-edu"].key_id,
                                                           start=D("2001-09-01"), end=D("2003-08-31")), {"issuer": "sample"}),
        (D("2001-09-01"), "link-edu", "link", dict(name=JANE_EDU, person_key=k["K4"].key_id, start=D("2001-09-01"),
                                                   end=D("2002-08-31")), {"name": "name-jane-edu", "person": "K4"}),
    ]
    for i in (1, 2, 3):
        when = D(LATE[i] if i == late_step else ON_TIME[i])
        a, b = f"K{i}", f"K{i + 1}"
        plan.append((when, f"d{i}", "delegation", dict(issuer=k[a].key_id, delegate=k[b].key_id, time=when),
                     {"issuer": a, "delegate": b}))
    for _, label, kind, fields, signers in sorted(plan, key=lambda t: (t[0], t[2] != "identity")):
        w.issue(label, kind, fields, signers, check=not label.startswith("d") or late_step is None)
    w.clock.set(D("2002-03-01"))
    return w


# -- proof corruptions ---------------------------------------------------------


def _flip(b: bytes, bit: int = 0) -> bytes:
    return bytes([b[0] ^ (1 << bit)]) + b[1:]


def _replace_cert(proof, kind, changes):
    from hints.certified import ProvedCert

    certs = list(proof.certs)
    i = next(i for i, pc in enumerate(certs) if isinstance(pc.cert, kind))
    certs[i] = ProvedCert(replace(certs[i].cert, **changes(certs[i].cert)), certs[i].position)
    return replace(proof, certs=tuple(certs))


def flip_signature_bit(proof):
    from hints.certs import LinkCertificate

    return _replace_cert(proof, LinkCertificate, changes=lambda c: {"signature2": _flip(c.signature2)})


def alter_date_field(proof):
    from hints.certs import LinkCertificate

    return _replace_cert(proof, LinkCertificate, changes=lambda c: {"end": c.end + timedelta(days=30)})


def drop_revocation_absence(proof, name=JMOBILE):
    from hints.certified import NAME_INDEX, name_prefix

    p = name_prefix(name)
    kept = tuple(l for l in proof.listings if not (l.index == NAME_INDEX and l.range.lo == p))
    assert len(kept) == len(proof.listings) - 1
    return replace(proof, listings=kept)


def substitute_person_key(proof, other_key: bytes):
    cands = list(proof.candidates)
    cands[0] = replace(cands[0], person_key=other_key)
    return replace(proof, candidates=tuple(cands))


def reorder_chain_positions(proof):
    from hints.certified import ProvedCert

    certs = list(proof.certs)
    a, b = certs[0], certs[1]
    certs[0], certs[1] = ProvedCert(a.cert, b.position), ProvedCert(b.cert, a.position)
    return replace(proof, certs=tuple(certs))


def remove_delegation_link(proof):
    cands = list(proof.candidates)
    assert cands[0].delegations
    cands[0] = replace(cands[0], delegations=cands[0].delegations[1:])
    return replace(proof, candidates=tuple(cands))


CORRUPTIONS = {
    "flipped signature bit": (flip_signature_bit, "signature"),
    "altered date field": (alter_date_field, "signature"),
    "dropped revocation-absence proof": (drop_revocation_absence, "missing-absence"),
    "substituted person key": (None, "person-key"),  # needs a key; see corrupt()
    "reordered chain positions": (reorder_chain_positions, "chain-position"),
    "delegation link removed": (remove_delegation_link, "delegation"),
}


def corrupt(label: str, proof, world: "CertWorld"):
    fn, _ = CORRUPTIONS[label]
    if fn is None:
        return substitute_person_key(proof, world.keys["P3"].key_id)
    return fn(proof)


# -- random plain histories ----------------------------------------------------


def random_history(rng, hist, clock, accounts, names, until, events, nonce_of):
    """Drive ``hist`` through ``events`` random mutations on random days up to ``until``.

    Links are answered at once (mostly correctly), some challenges are left to
    time out, sweeps answer most reconfirmations.  ``nonce_of(cid)`` reads the
    mailed nonce back.
    """
    from hints.errors import StaleChallenge

    start = clock.today()
    span = (until - start).days
    days = sorted(rng.randrange(span + 1) for _ in range(events))
    for offset in days:
        day = start + timedelta(days=offset)
        if day > clock.today():
            clock.set(day)
        a, n = rng.choice(accounts), rng.choice(names)
        roll = rng.random()
        if roll < 0.45:
            cid = hist.request_link(a, n)
            r = rng.random()
            if r < 0.8:
                hist.confirm_link(cid, nonce_of(cid))
            elif r < 0.9:
                hist.confirm_link(cid, "00" * 16)
        elif roll < 0.6:
            hist.sever_link(a, n)
        elif roll < 0.7 and hist.open_challenges:
            cid = rng.choice(sorted(hist.open_challenges))
            try:
                hist.confirm_link(cid, nonce_of(cid))
            except StaleChallenge:
                pass
        else:
            for act in hist.reestablish_sweep():
                if act.kind == "challenge" and rng.random() < 0.75:
                    hist.confirm_link(act.detail, nonce_of(act.detail))
    if until > clock.today():
        clock.set(until)


class MailNonces:
    """Reads challenge nonces back out of a MemoryTransport's sent mail."""

    def __init__(self, transport):
        self.transport = transport
        self._seen = 0
        self._by_id: dict[str, str] = {}

    def __call__(self, cid: str) -> str:
        sent = self.transport.sent
        for m in sent[self._seen :]:
            if m.challenge_id:
                self._by_id[m.challenge_id] = m.nonce
        self._seen = len(sent)
        return self._by_id[cid]


# -- acceptance reporting --------------------------------------------------------

ACCEPTANCE: dict[int, str] = {}


@contextmanager
def criterion(n: int, title: str, limit_s: float):
    """Time a criterion block and record one PASS/FAIL line for the run summary."""
    t0 = time.perf_counter()
    ok = False
    try:
        yield
        ok = True
    finally:
        took = time.perf_counter() - t0
        status = "PASS" if ok and took < limit_s else "FAIL"
        line = f"criterion {n}: {status}  {title}  ({took:.2f} s, limit {limit_s:g} s)"
        ACCEPTANCE[n] = line
        print(line)
    assert took < limit_s, f"criterion {n} took {took:.2f} s, limit {limit_s:g} s"
