import json

import pytest

from hints.certified import write_proof
from hints.certs import write_cert
from hints.cli import main
from hints.histname import GRAMMAR_HINT, parse_historic_name
from helpers import CORRUPTIONS, corrupt, jane_certified


@pytest.fixture(scope="module")
def exported(tmp_path_factory):
    d = tmp_path_factory.mktemp("jane") / "store"
    assert main(["sim", "run", "builtin:jane", "--export", str(d)]) == 0
    return d


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out.strip(), err.strip()


def test_resolve_from_exported_storage(exported, capsys):
    conf = str(exported / "hints.conf")
    assert run(capsys, "--config", conf, "resolve", "jmobile@yahoo.com?2000-03") == (0, "jane@sample.edu", "")
    code, out, _ = run(capsys, "--config", conf, "resolve", "jmobile@yahoo.com?2000")
    assert code == 0 and out.startswith("multivalent: #1 2000-03-02..2000-05-01 -> jane@sample.edu; #2")
    code, out, _ = run(capsys, "--config", conf, "--json", "resolve", "nobody@nowhere.org?1998")
    assert json.loads(out)["outcome"] == "no-history"


def test_periods_json_lines(exported, capsys):
    code, out, _ = run(capsys, "--config", str(exported / "hints.conf"), "--json", "periods", "jmobile@yahoo.com")
    rows = [json.loads(line) for line in out.splitlines()]
    assert code == 0 and rows[0] == {"active": False, "end": "2000-05-01", "person": "#1", "start": "2000-03-02"}


@pytest.mark.parametrize("name", ["jmobile@yahoo.com", "jmobile@yahoo.com?2000-13", "not a name?2000"])
def test_malformed_name_exits_2_with_grammar(exported, capsys, name):
    code, _, err = run(capsys, "--config", str(exported / "hints.conf"), "resolve", name)
    assert code == 2 and GRAMMAR_HINT in err or (code == 2 and "month" in err)


def test_usage_error_exits_2(capsys):
    with pytest.raises(SystemExit) as info:
        main(["resolve"])
    assert info.value.code == 2


def test_bad_config_exits_2(tmp_path, capsys):
    (tmp_path / "bad.conf").write_text("mode = sideways\n")
    code, _, err = run(capsys, "--config", str(tmp_path / "bad.conf"), "resolve", "a@b.org?2000")
    assert code == 2 and "mode" in err


def test_account_link_confirm_cycle(tmp_path, capsys):
    conf = tmp_path / "h.conf"
    conf.write_text(f"storage = {tmp_path / 's'}\nclock = virtual:2000-03-01\nkdf_iterations = 1\n")
    base = ["--config", str(conf)]
    code, acct, _ = run(capsys, *base, "account", "new", "--secret", "pw")
    assert code == 0 and acct.startswith("acct-")
    assert run(capsys, *base, "link", "request", "--account", acct, "--secret", "nope", "a@b.org")[0] == 1
    code, cid, _ = run(capsys, *base, "link", "request", "--account", acct, "--secret", "pw", "a@b.org")
    nonce = json.loads((tmp_path / "s" / "outbox" / "a@b.org.jsonl").read_text().splitlines()[-1])["nonce"]
    assert run(capsys, *base, "link", "confirm", cid, "00" * 16)[:2] == (1, "rejected")
    code, cid, _ = run(capsys, *base, "link", "request", "--account", acct, "--secret", "pw", "a@b.org")
    nonce = json.loads((tmp_path / "s" / "outbox" / "a@b.org.jsonl").read_text().splitlines()[-1])["nonce"]
    assert run(capsys, *base, "link", "confirm", cid, nonce)[:2] == (0, "confirmed")
    assert run(capsys, *base, "resolve", "a@b.org?2000-03-01")[:2] == (0, "a@b.org")
    code, out, _ = run(capsys, *base, "sweep", "--to", "2000-05-01")
    assert code == 0 and "2000-04-29 challenge a@b.org" in out
    assert run(capsys, *base, "link", "sever", "--account", acct, "--secret", "pw", "a@b.org")[:2] == (0, "severed a@b.org")
    assert run(capsys, *base, "resolve", "a@b.org?2000-03-01")[:2] == (0, "no-current-name")


def test_sim_failures_exit_1(tmp_path, capsys):
    script = tmp_path / "s.hints"
    script.write_text("2000-01-01 provider x.org\n2000-01-01 resolve a@x.org?1999 => a@x.org\n")
    code, out, _ = run(capsys, "sim", "run", str(script))
    assert code == 1 and "FAIL line 2" in out


@pytest.fixture(scope="module")
def public(tmp_path_factory):
    d = tmp_path_factory.mktemp("public")
    w = jane_certified("ed25519")
    proof = w.hist.certified_resolve(parse_historic_name("jmobile@yahoo.com?2000-03"))
    anchors, archive = w.write_public(d)  # after resolving: the proof may cite a fresh anchor
    return w, d, anchors, archive, proof


def test_proof_verify_accepts(public, capsys):
    w, d, anchors, archive, proof = public
    (d / "ok.proof").write_bytes(write_proof(proof))
    args = ["proof", "verify", str(d / "ok.proof"), "--anchors", str(anchors), "--archive", str(archive)]
    assert run(capsys, *args) == (0, "accept", "")
    assert run(capsys, *args, "--authority", w.authority.key_id.hex())[:2] == (0, "accept")
    assert run(capsys, *args, "--authority", w.keys["yahoo"].key_id.hex())[0] == 1


@pytest.mark.parametrize("label", list(CORRUPTIONS))
def test_proof_verify_names_the_reason(public, capsys, label):
    w, d, anchors, archive, proof = public
    path = d / "bad.proof"
    path.write_bytes(write_proof(corrupt(label, proof, w)))
    code, out, _ = run(capsys, "proof", "verify", str(path), "--anchors", str(anchors), "--archive", str(archive))
    assert (code, out) == (1, f"reject({CORRUPTIONS[label][1]})")


def test_proof_verify_garbage(public, capsys, tmp_path):
    _, _, anchors, archive, _ = public
    (tmp_path / "junk").write_bytes(b"HINTS-PROOF v1\n\x00\x01")
    assert run(capsys, "proof", "verify", str(tmp_path / "junk"), "--anchors", str(anchors), "--archive", str(archive))[:2] == (
        1, "reject(decode)")


def test_cert_show_and_ingest(public, capsys, tmp_path):
    w, d, _, archive, _ = public
    path = tmp_path / "identity.cert"
    path.write_bytes(write_cert(w.certs["identity"]))
    code, out, _ = run(capsys, "--json", "cert", "show", str(path))
    assert code == 0 and json.loads(out)["subject"] == "jmobile"
    store = tmp_path / "cstore"
    store.mkdir()
    (store / "keys.archive").write_bytes(archive.read_bytes())
    conf = tmp_path / "c.conf"
    conf.write_text(f"storage = {store}\nmode = certified\nclock = virtual:1999-08-01\nanchor_period = 1\nkdf_iterations = 1\n")
    code, out, _ = run(capsys, "--config", str(conf), "cert", "ingest", str(path))
    assert code == 0 and "identity at seq 0" in out
    assert run(capsys, "--config", str(conf), "cert", "ingest", str(path))[0] == 1
    proof = tmp_path / "out.proof"
    code, out, _ = run(capsys, "--config", str(conf), "resolve", "jmobile@yahoo.com?1999", "--proof", str(proof))
    assert (code, out) == (0, "no-history") and proof.exists()
    code, out, _ = run(capsys, "proof", "verify", str(proof), "--anchors", str(store / "anchors.log"), "--archive",
                       str(store / "keys.archive"))
    assert (code, out) == (0, "accept")


def test_unreachable_server_exits_1(capsys):
    code, _, err = run(capsys, "--server", "http://127.0.0.1:9", "resolve", "a@b.org?2000")
    assert code == 1 and "server" in err
