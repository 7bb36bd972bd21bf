"""Signed statements of the reduced-trust historian.

Name-space providers issue identity and revocation certificates; mobile
people, represented only by their person keys, issue link, severance and
delegation certificates.  Keys are named by KeyId, the SHA-256 fingerprint
of the canonical public-key encoding.  A KeyArchive records which public key
was valid for which owner over which dates, so old signatures stay
checkable after their keys expire.
"""

from __future__ import annotations

import base64
import hashlib
import hmac
import os
import secrets
from abc import ABC, abstractmethod
from dataclasses import dataclass, field, replace
from datetime import date
from pathlib import Path
from typing import Iterable, Optional, Union

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives import serialization
from cryptography.hazmat.primitives.asymmetric.ed25519 import Ed25519PrivateKey, Ed25519PublicKey

from .encoding import decode, digest, encode, record
from .errors import BrokenChain, DecodeError, ForkedChain, MissingKey, Rejected, SignerUnknown
from .histname import PrimaryName

NONCE_RANDOM_BYTES = 16
_TBS_TAG = b"HINTS-TBS v1\x00"


# -- signature schemes ------------------------------------------------------


class SignatureScheme(ABC):
    name: str

    @abstractmethod
    def generate(self, seed: Optional[bytes] = None) -> "KeyPair": ...

    @abstractmethod
    def sign(self, private: bytes, message: bytes) -> bytes: ...

    @abstractmethod
    def verify(self, public: bytes, message: bytes, signature: bytes) -> bool: ...


class Ed25519Scheme(SignatureScheme):
    name = "ed25519"

    def generate(self, seed=None):
        seed = seed if seed is not None else secrets.token_bytes(32)
        sk = Ed25519PrivateKey.from_private_bytes(hashlib.sha256(seed).digest())
        pub = sk.public_key().public_bytes(serialization.Encoding.Raw, serialization.PublicFormat.Raw)
        priv = sk.private_bytes(
            serialization.Encoding.Raw, serialization.PrivateFormat.Raw, serialization.NoEncryption()
        )
        return KeyPair(self.name, pub, priv)

    def sign(self, private, message):
        return Ed25519PrivateKey.from_private_bytes(private).sign(message)

    def verify(self, public, message, signature):
        try:
            Ed25519PublicKey.from_public_bytes(public).verify(signature, message)
        except (InvalidSignature, ValueError):
            return False
        return True


class HmacTestScheme(SignatureScheme):
    """Deterministic, fast and INSECURE: the public key is the secret.

    Only for tests that need thousands of signatures; never for deployment.
    """

    name = "hmac-test"

    def generate(self, seed=None):
        seed = seed if seed is not None else secrets.token_bytes(32)
        k = hashlib.sha256(b"hmac-test" + seed).digest()
        return KeyPair(self.name, k, k)

    def sign(self, private, message):
        return hmac.new(private, message, hashlib.sha256).digest()

    def verify(self, public, message, signature):
        return hmac.compare_digest(hmac.new(public, message, hashlib.sha256).digest(), signature)


SCHEMES: dict[str, SignatureScheme] = {s.name: s for s in (Ed25519Scheme(), HmacTestScheme())}
DEFAULT_SCHEME = "ed25519"


@record(0x10)
@dataclass(frozen=True)
class PublicKey:
    scheme: str
    key: bytes


def key_id(scheme: str, public: bytes) -> bytes:
    return digest(encode(PublicKey(scheme, public)))


def short_id(kid: bytes) -> str:
    """Fingerprint rendering like ``AB34D9...``."""
    return kid[:3].hex().upper() + "..."


@dataclass(frozen=True)
class KeyPair:
    scheme: str
    public: bytes
    private: bytes = field(repr=False)

    @property
    def key_id(self) -> bytes:
        return key_id(self.scheme, self.public)

    def sign(self, message: bytes) -> bytes:
        return SCHEMES[self.scheme].sign(self.private, message)


def generate_key(scheme: str = DEFAULT_SCHEME, seed: Optional[bytes] = None) -> KeyPair:
    return SCHEMES[scheme].generate(seed)


def make_nonce(issued: date, rand: Optional[bytes] = None) -> bytes:
    rand = rand if rand is not None else os.urandom(NONCE_RANDOM_BYTES)
    if len(rand) < NONCE_RANDOM_BYTES:
        raise ValueError("nonce needs at least 128 random bits")
    return issued.isoformat().encode("ascii") + rand


# -- certificates -----------------------------------------------------------


@record(0x11)
@dataclass(frozen=True)
class IdentityCertificate:
    issuer: str
    subject: str
    key: bytes
    start: date
    end: date
    nonce: bytes
    signature: bytes = b""

    def __post_init__(self):
        if self.start > self.end:
            raise ValueError("identity certificate starts after it ends")

    @property
    def name(self) -> PrimaryName:
        return PrimaryName(self.subject, self.issuer)

    @property
    def claimed_date(self) -> date:
        return self.start


@record(0x12)
@dataclass(frozen=True)
class RevocationCertificate:
    issuer: str
    subject: str
    key: bytes
    start: date
    nonce: bytes
    signature: bytes = b""

    @property
    def name(self) -> PrimaryName:
        return PrimaryName(self.subject, self.issuer)

    @property
    def claimed_date(self) -> date:
        return self.start


@record(0x13)
@dataclass(frozen=True)
class LinkCertificate:
    name: PrimaryName
    person_key: bytes
    start: date
    end: date
    nonce: bytes
    signature1: bytes = b""
    signature2: bytes = b""

    def __post_init__(self):
        if self.start > self.end:
            raise ValueError("link certificate starts after it ends")

    @property
    def claimed_date(self) -> date:
        return self.start


@record(0x14)
@dataclass(frozen=True)
class SeveranceCertificate:
    name: PrimaryName
    person_key: bytes
    time: date
    nonce: bytes
    signature: bytes = b""

    @property
    def claimed_date(self) -> date:
        return self.time


@record(0x15)
@dataclass(frozen=True)
class DelegationCertificate:
    issuer: bytes
    delegate: bytes
    time: date
    nonce: bytes
    issuer_signature: bytes = b""
    delegate_signature: bytes = b""

    def __post_init__(self):
        if self.issuer == self.delegate:
            raise ValueError("a key cannot delegate to itself")

    @property
    def claimed_date(self) -> date:
        return self.time


Certificate = Union[
    IdentityCertificate, RevocationCertificate, LinkCertificate, SeveranceCertificate, DelegationCertificate
]
CERT_TYPES = (IdentityCertificate, RevocationCertificate, LinkCertificate, SeveranceCertificate, DelegationCertificate)
KIND_NAMES = {
    IdentityCertificate: "identity",
    RevocationCertificate: "revocation",
    LinkCertificate: "link",
    SeveranceCertificate: "severance",
    DelegationCertificate: "delegation",
}
KINDS = {v: k for k, v in KIND_NAMES.items()}
_SIG_FIELDS = {
    IdentityCertificate: ("signature",),
    RevocationCertificate: ("signature",),
    LinkCertificate: ("signature1", "signature2"),
    SeveranceCertificate: ("signature",),
    DelegationCertificate: ("issuer_signature", "delegate_signature"),
}


def kind_name(cert) -> str:
    return KIND_NAMES[type(cert)]


def tbs(cert) -> bytes:
    """The to-be-signed bytes: the canonical encoding with signatures blanked."""
    blank = {f: b"" for f in _SIG_FIELDS[type(cert)]}
    return _TBS_TAG + encode(replace(cert, **blank))


def issue_certificate(kind: str, fields: dict, keys: dict[str, KeyPair]):
    """Build and sign a certificate.

    ``keys`` maps signer roles to key pairs: ``issuer`` for identity and
    revocation; ``name`` and ``person`` for links; ``person`` for severance;
    ``issuer`` and ``delegate`` for delegation.
    """
    cls = KINDS[kind]
    roles = {
        IdentityCertificate: (("signature", "issuer"),),
        RevocationCertificate: (("signature", "issuer"),),
        LinkCertificate: (("signature1", "name"), ("signature2", "person")),
        SeveranceCertificate: (("signature", "person"),),
        DelegationCertificate: (("issuer_signature", "issuer"), ("delegate_signature", "delegate")),
    }[cls]
    for _, role in roles:
        if role not in keys:
            raise MissingKey(f"{kind} certificate needs a {role} key")
    unsigned = cls(**fields)
    body = tbs(unsigned)
    return replace(unsigned, **{sig: keys[role].sign(body) for sig, role in roles})


# -- key archive ------------------------------------------------------------


@record(0x16)
@dataclass(frozen=True)
class KeyArchiveEntry:
    owner: str
    key_id: bytes
    scheme: str
    public_key: bytes
    valid_from: date
    valid_to: date

    def __post_init__(self):
        if self.valid_from > self.valid_to:
            raise ValueError("key validity window is empty")

    def covers(self, day: date) -> bool:
        return self.valid_from <= day <= self.valid_to


def key_owner(kid: bytes) -> str:
    """Archive owner string for a personal key (its own lineage)."""
    return "key:" + kid.hex()


class KeyArchive:
    """Local stand-in for a time-stamped key archival service."""

    def __init__(self, entries: Iterable[KeyArchiveEntry] = ()):
        self._by_owner: dict[str, list[KeyArchiveEntry]] = {}
        self._by_key: dict[bytes, KeyArchiveEntry] = {}
        for e in entries:
            self.add(e)

    def add(self, entry: KeyArchiveEntry) -> None:
        if key_id(entry.scheme, entry.public_key) != entry.key_id:
            raise ValueError("archive entry key id does not match its public key")
        if entry.scheme not in SCHEMES:
            raise ValueError(f"unknown signature scheme {entry.scheme!r}")
        if entry.key_id in self._by_key:
            raise ValueError(f"key {short_id(entry.key_id)} already archived")
        for other in self._by_owner.get(entry.owner, []):
            if other.valid_from <= entry.valid_to and entry.valid_from <= other.valid_to:
                raise ValueError(f"overlapping key windows for {entry.owner}")
        self._by_owner.setdefault(entry.owner, []).append(entry)
        self._by_owner[entry.owner].sort(key=lambda e: e.valid_from)
        self._by_key[entry.key_id] = entry

    def register(self, owner: str, pair: KeyPair, valid_from: date, valid_to: date) -> KeyArchiveEntry:
        entry = KeyArchiveEntry(owner, pair.key_id, pair.scheme, pair.public, valid_from, valid_to)
        self.add(entry)
        return entry

    def entries(self) -> list[KeyArchiveEntry]:
        return [e for owner in sorted(self._by_owner) for e in self._by_owner[owner]]

    def by_key(self, kid: bytes) -> Optional[KeyArchiveEntry]:
        return self._by_key.get(kid)

    def for_owner(self, owner: str) -> list[KeyArchiveEntry]:
        return list(self._by_owner.get(owner, []))

    def covering(self, owner: str, day: date) -> Optional[KeyArchiveEntry]:
        for e in self._by_owner.get(owner, []):
            if e.covers(day):
                return e
        return None

    def __len__(self):
        return len(self._by_key)


@record(0x17)
@dataclass(frozen=True)
class SignedKeyArchive:
    authority_scheme: str
    authority_key: bytes
    entries: tuple[KeyArchiveEntry, ...]
    signature: bytes = b""


ARCHIVE_HEADER = "HINTS-KEYARCHIVE v1"


def sign_archive(archive: KeyArchive, authority: KeyPair) -> bytes:
    unsigned = SignedKeyArchive(authority.scheme, authority.public, tuple(archive.entries()))
    signed = replace(unsigned, signature=authority.sign(b"HINTS-ARCHIVE\x00" + encode(unsigned)))
    return (ARCHIVE_HEADER + "\n" + base64.b64encode(encode(signed)).decode("ascii") + "\n").encode("ascii")


def load_archive(data: bytes, trusted_authority: Optional[bytes] = None) -> KeyArchive:
    """Parse and check a signed bootstrap archive.

    ``trusted_authority`` pins the authority KeyId; without it the embedded
    authority key is accepted as is (self-signed bootstrap).
    """
    try:
        header, body = data.decode("ascii").split("\n", 1)
        signed = decode(base64.b64decode(body.strip(), validate=True), SignedKeyArchive)
    except (ValueError, UnicodeDecodeError) as exc:
        raise DecodeError("unreadable key archive") from exc
    if header.strip() != ARCHIVE_HEADER:
        raise DecodeError("not a key archive file")
    scheme = SCHEMES.get(signed.authority_scheme)
    unsigned = replace(signed, signature=b"")
    if scheme is None or not scheme.verify(
        signed.authority_key, b"HINTS-ARCHIVE\x00" + encode(unsigned), signed.signature
    ):
        raise Rejected("signature", "key archive signature does not verify")
    if trusted_authority is not None and key_id(signed.authority_scheme, signed.authority_key) != trusted_authority:
        raise Rejected("signature", "key archive signed by an untrusted authority")
    return KeyArchive(signed.entries)


def load_archive_file(path, trusted_authority: Optional[bytes] = None) -> KeyArchive:
    return load_archive(Path(path).read_bytes(), trusted_authority)


# -- verification -----------------------------------------------------------


@dataclass(frozen=True)
class Verdict:
    valid: bool
    reason: str = ""

    def __bool__(self):
        return self.valid


VALID = Verdict(True)


def signers(cert) -> list[tuple[str, Optional[bytes], Optional[str]]]:
    """(signature field, signer KeyId or None, signer owner or None) for each signature.

    A link's first signature comes from the name's key, which the link does
    not carry; callers resolve it through the name's identity certificates.
    """
    if isinstance(cert, (IdentityCertificate, RevocationCertificate)):
        return [("signature", None, cert.issuer)]
    if isinstance(cert, LinkCertificate):
        return [("signature1", None, None), ("signature2", cert.person_key, None)]
    if isinstance(cert, SeveranceCertificate):
        return [("signature", cert.person_key, None)]
    return [("issuer_signature", cert.issuer, None), ("delegate_signature", cert.delegate, None)]


def _check_sig(entry: KeyArchiveEntry, body: bytes, sig: bytes) -> bool:
    return SCHEMES[entry.scheme].verify(entry.public_key, body, sig)


def verify_at(cert, claimed_issuance: date, archive: KeyArchive, name_key: Optional[bytes] = None) -> Verdict:
    """Check every signature on ``cert`` with the key valid at ``claimed_issuance``.

    Raises SignerUnknown when the archive holds no key for a signer.  For a
    link certificate, ``name_key`` is the KeyId from the name's identity
    certificate; it is required to check the first signature.
    """
    body = tbs(cert)
    for sig_field, kid, owner in signers(cert):
        sig = getattr(cert, sig_field)
        if owner is not None:
            candidates = archive.for_owner(owner)
            if not candidates:
                raise SignerUnknown(f"no archived key for {owner}")
            entry = archive.covering(owner, claimed_issuance)
            if entry is None:
                if any(_check_sig(e, body, sig) for e in candidates):
                    return Verdict(False, "key-expired-at-issuance")
                return Verdict(False, "signature")
            if not _check_sig(entry, body, sig):
                return Verdict(False, "signature")
            continue
        if kid is None:
            if name_key is None:
                raise SignerUnknown("link certificate needs its name key to verify")
            kid = name_key
        entry = archive.by_key(kid)
        if entry is None:
            raise SignerUnknown(f"no archived key {short_id(kid)}")
        if not _check_sig(entry, body, sig):
            return Verdict(False, "signature")
        if not entry.covers(claimed_issuance):
            return Verdict(False, "key-expired-at-issuance")
    return VALID


def walk_delegations(
    start_key: bytes,
    certs: Iterable[DelegationCertificate],
    at: date,
    archive: Optional[KeyArchive] = None,
) -> bytes:
    """Follow the delegation trail from ``start_key``; return the current key."""
    return delegation_path(start_key, certs, at, archive)[1]


def delegation_path(start_key, certs, at, archive=None):
    """Like walk_delegations, also returning the certificates followed."""
    by_issuer: dict[bytes, list[DelegationCertificate]] = {}
    for c in certs:
        if c.time <= at:
            by_issuer.setdefault(c.issuer, []).append(c)
    path = []
    key = start_key
    seen = {key}
    while key in by_issuer:
        outgoing = by_issuer[key]
        if len(outgoing) > 1:
            raise ForkedChain(f"key {short_id(key)} delegates to {len(outgoing)} keys")
        d = outgoing[0]
        if archive is not None:
            entry = archive.by_key(key)
            if entry is None:
                raise SignerUnknown(f"no archived key {short_id(key)}")
            if not entry.covers(d.time):
                raise BrokenChain(
                    f"delegation from {short_id(key)} on {d.time} is outside the key's validity "
                    f"{entry.valid_from}..{entry.valid_to}"
                )
        if d.delegate in seen:
            raise BrokenChain("delegation cycle")
        seen.add(d.delegate)
        path.append(d)
        key = d.delegate
    return path, key


# -- file format ------------------------------------------------------------

CERT_HEADER = "HINTS-CERT v1"


def write_cert(cert, armored: bool = True) -> bytes:
    raw = encode(cert)
    if not armored:
        return raw
    return (f"{CERT_HEADER} {kind_name(cert)}\n" + base64.b64encode(raw).decode("ascii") + "\n").encode("ascii")


def read_cert(data: bytes):
    if data.startswith(CERT_HEADER.encode("ascii")):
        try:
            header, body = data.decode("ascii").split("\n", 1)
            raw = base64.b64decode(body.strip(), validate=True)
        except (ValueError, UnicodeDecodeError) as exc:
            raise DecodeError("unreadable certificate file") from exc
        parts = header.split()
        if len(parts) != 3 or parts[2] not in KINDS:
            raise DecodeError(f"bad certificate header {header!r}")
        cert = decode(raw)
        if kind_name_safe(cert) != parts[2]:
            raise DecodeError("certificate kind does not match its header")
        return cert
    cert = decode(data)
    if not isinstance(cert, CERT_TYPES):
        raise DecodeError("not a certificate")
    return cert


def kind_name_safe(obj) -> Optional[str]:
    return KIND_NAMES.get(type(obj))


def describe(cert) -> dict:
    """Human-oriented field dump (KeyIds and nonces in hex)."""
    out = {"kind": kind_name(cert)}
    for k, v in cert.__dict__.items():
        if isinstance(v, bytes):
            out[k] = v.hex().upper()
        elif isinstance(v, (date, PrimaryName)):
            out[k] = str(v)
        else:
            out[k] = v
    return out

