from dataclasses import replace
from datetime import date

import pytest

from hints.certs import (
    KeyArchive,
    delegation_path,
    describe,
    generate_key,
    issue_certificate,
    key_owner,
    load_archive,
    make_nonce,
    read_cert,
    sign_archive,
    verify_at,
    walk_delegations,
    write_cert,
)
from hints.errors import BrokenChain, DecodeError, ForkedChain, MissingKey, Rejected, SignerUnknown
from helpers import D, JMOBILE

SCHEMES = ["ed25519", "hmac-test"]


@pytest.fixture(params=SCHEMES)
def scheme(request):
    return request.param


def _keys(scheme, *labels):
    return {lb: generate_key(scheme, seed=lb.encode()) for lb in labels}


def _archive(keys, windows):
    a = KeyArchive()
    for label, (owner, lo, hi) in windows.items():
        a.register(owner or key_owner(keys[label].key_id), keys[label], D(lo), D(hi))
    return a


def test_seeded_keys_are_deterministic(scheme):
    assert generate_key(scheme, seed=b"x") == generate_key(scheme, seed=b"x")
    assert generate_key(scheme, seed=b"x").key_id != generate_key(scheme, seed=b"y").key_id


def test_nonce_embeds_date_and_entropy():
    n = make_nonce(date(2000, 3, 1), bytes(16))
    assert n.startswith(b"2000-03-01") and len(n) == 26
    with pytest.raises(ValueError):
        make_nonce(date(2000, 3, 1), bytes(8))


def test_identity_verifies_with_the_key_valid_at_issuance(scheme):
    k = _keys(scheme, "old", "new", "name")
    archive = _archive(k, {"old": ("yahoo.com", "1995-01-01", "1999-12-31"), "new": ("yahoo.com", "2000-01-01", "2005-12-31")})
    fields = dict(issuer="yahoo.com", subject="jmobile", key=k["name"].key_id, start=D("2000-03-01"),
                  end=D("2001-03-01"), nonce=make_nonce(D("2000-03-01"), bytes(16)))
    good = issue_certificate("identity", fields, {"issuer": k["new"]})
    assert verify_at(good, good.start, archive)
    stale = issue_certificate("identity", fields, {"issuer": k["old"]})
    assert verify_at(stale, stale.start, archive).reason == "signature"  # a different key covers the date
    late = issue_certificate("identity", {**fields, "start": D("2006-01-01"), "end": D("2007-01-01")}, {"issuer": k["new"]})
    assert verify_at(late, late.start, archive).reason == "key-expired-at-issuance"


def test_altered_field_breaks_signature(scheme):
    k = _keys(scheme, "prov", "name")
    archive = _archive(k, {"prov": ("yahoo.com", "1995-01-01", "2005-12-31")})
    cert = issue_certificate("identity", dict(issuer="yahoo.com", subject="jmobile", key=k["name"].key_id,
                                              start=D("2000-03-01"), end=D("2001-03-01"), nonce=bytes(26)),
                             {"issuer": k["prov"]})
    assert verify_at(replace(cert, end=D("2009-03-01")), cert.start, archive).reason == "signature"


def test_link_needs_both_signatures(scheme):
    k = _keys(scheme, "name", "person", "other")
    archive = _archive(k, {"name": (None, "1999-01-01", "2001-12-31"), "person": (None, "1999-01-01", "2001-12-31"),
                           "other": (None, "1999-01-01", "2001-12-31")})
    fields = dict(name=JMOBILE, person_key=k["person"].key_id, start=D("2000-03-02"), end=D("2000-05-01"), nonce=bytes(26))
    link = issue_certificate("link", fields, {"name": k["name"], "person": k["person"]})
    assert verify_at(link, link.start, archive, name_key=k["name"].key_id)
    with pytest.raises(SignerUnknown):
        verify_at(link, link.start, archive)
    forged = issue_certificate("link", fields, {"name": k["other"], "person": k["person"]})
    assert verify_at(forged, forged.start, archive, name_key=k["name"].key_id).reason == "signature"
    with pytest.raises(MissingKey):
        issue_certificate("link", fields, {"person": k["person"]})


def test_unknown_signer(scheme):
    k = _keys(scheme, "prov", "name")
    cert = issue_certificate("revocation", dict(issuer="nowhere.org", subject="x", key=k["name"].key_id,
                                                start=D("2000-01-01"), nonce=bytes(26)), {"issuer": k["prov"]})
    with pytest.raises(SignerUnknown):
        verify_at(cert, cert.start, KeyArchive())


def _delegate(k, a, b, day):
    return issue_certificate("delegation", dict(issuer=k[a].key_id, delegate=k[b].key_id, time=D(day), nonce=bytes(26)),
                             {"issuer": k[a], "delegate": k[b]})


def test_three_step_delegation_walk(scheme):
    k = _keys(scheme, "K1", "K2", "K3", "K4")
    archive = _archive(k, {"K1": (None, "1999-01-01", "2000-12-31"), "K2": (None, "2000-06-01", "2001-12-31"),
                           "K3": (None, "2001-06-01", "2002-12-31"), "K4": (None, "2002-06-01", "2004-12-31")})
    ds = [_delegate(k, "K1", "K2", "2000-07-01"), _delegate(k, "K2", "K3", "2001-07-01"), _delegate(k, "K3", "K4", "2002-07-01")]
    path, end = delegation_path(k["K1"].key_id, reversed(ds), D("2003-01-01"), archive)
    assert end == k["K4"].key_id and path == ds
    assert walk_delegations(k["K1"].key_id, ds, D("2001-01-01"), archive) == k["K2"].key_id


def test_delegation_after_key_expiry_is_broken(scheme):
    k = _keys(scheme, "K1", "K2")
    archive = _archive(k, {"K1": (None, "1999-01-01", "2000-12-31"), "K2": (None, "2000-06-01", "2001-12-31")})
    late = _delegate(k, "K1", "K2", "2001-01-01")  # one day past K1's window
    with pytest.raises(BrokenChain):
        walk_delegations(k["K1"].key_id, [late], D("2001-06-01"), archive)


def test_fork_detected(scheme):
    k = _keys(scheme, "K1", "K2", "K3")
    with pytest.raises(ForkedChain):
        walk_delegations(k["K1"].key_id, [_delegate(k, "K1", "K2", "2000-01-01"), _delegate(k, "K1", "K3", "2000-02-01")],
                         D("2001-01-01"))


def test_cert_file_round_trip(scheme):
    k = _keys(scheme, "K1", "K2")
    d = _delegate(k, "K1", "K2", "2000-07-01")
    assert read_cert(write_cert(d)) == d
    assert read_cert(write_cert(d, armored=False)) == d
    assert write_cert(d).startswith(b"HINTS-CERT v1 delegation\n")
    bad = write_cert(d).replace(b"delegation", b"link", 1)
    with pytest.raises(DecodeError):
        read_cert(bad)
    assert describe(d)["kind"] == "delegation" and describe(d)["time"] == "2000-07-01"


def test_archive_file_signed_and_pinned(scheme):
    k = _keys(scheme, "auth", "evil", "A")
    archive = _archive(k, {"A": (None, "2000-01-01", "2001-01-01")})
    data = sign_archive(archive, k["auth"])
    assert len(load_archive(data, k["auth"].key_id)) == 1
    with pytest.raises(Rejected):
        load_archive(data, k["evil"].key_id)
    lines = data.split(b"\n")
    body = bytearray(lines[1])
    body[40] = ord("A") if body[40] != ord("A") else ord("B")
    with pytest.raises((Rejected, DecodeError)):
        load_archive(b"\n".join([lines[0], bytes(body), b""]))


def test_archive_rejects_overlapping_windows(scheme):
    k = _keys(scheme, "a", "b")
    archive = KeyArchive()
    archive.register("yahoo.com", k["a"], D("2000-01-01"), D("2000-12-31"))
    with pytest.raises(ValueError):
        archive.register("yahoo.com", k["b"], D("2000-12-31"), D("2001-12-31"))
