"""Storage wiring and request dispatch shared by the HTTP app and in-process clients."""

from __future__ import annotations

import base64
import binascii
from datetime import date
from pathlib import Path
from typing import Callable

from ..certified import CertifiedHistorian, write_proof
from ..certs import describe, kind_name, load_archive_file, read_cert
from ..dates import ONE_DAY
from ..errors import (
    AuthError,
    BadDate,
    ConfigError,
    CorruptJournal,
    DecodeError,
    HintsError,
    MalformedName,
    UnknownAccount,
    UnknownChallenge,
)
from ..historian import Historian
from ..histname import PrimaryName, parse_historic_name
from ..integrity import AnchorLog
from ..journal import Journal
from ..transport import OutboxTransport, SystemClock, VirtualClock
from .config import ServiceConfig
from .models import ApiRequest, ApiResponse, ErrorBody

class BadRequest(HintsError, ValueError):
    reason = "bad-request"


class FileClock(VirtualClock):
    """A virtual clock whose date survives restarts."""

    def __init__(self, path: Path, start: date):
        self.path = path
        if path.exists():
            start = date.fromisoformat(path.read_text().strip())
        super().__init__(start)
        self._save()

    def set(self, day: date) -> None:
        super().set(day)
        self._save()

    def _save(self):
        self.path.write_text(self.today().isoformat() + "\n")


class Service:
    def __init__(self, config: ServiceConfig):
        self.config = config
        storage = Path(config.storage)
        try:
            storage.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise ConfigError(f"storage directory {storage} is not usable: {exc.strerror}") from None
        self.storage = storage
        start = config.virtual_start()
        self.clock = FileClock(storage / "clock", start) if start else SystemClock()
        self.transport = OutboxTransport(storage / "outbox")
        self.journal = Journal(storage / "journal.log")
        self.historian = Historian.replay(
            self.journal.payloads(),
            self.transport,
            config=config.historian_config(),
            clock=self.clock,
            journal=self.journal,
        )
        self.certified = None
        if config.mode == "certified":
            self.certified = self._open_certified(storage)
        self._methods: dict[str, Callable[[dict], dict]] = {
            "create-account": self._create_account,
            "request-link": self._request_link,
            "confirm-link": self._confirm_link,
            "sever-link": self._sever_link,
            "resolve": self._resolve,
            "list-periods": self._list_periods,
            "run-sweep": self._run_sweep,
        }
        if isinstance(self.clock, VirtualClock):
            self._methods["advance-clock"] = self._advance_clock
        if self.certified is not None:
            self._methods.update(
                {
                    "ingest-cert": self._ingest_cert,
                    "certified-resolve": self._certified_resolve,
                    "get-anchors": self._get_anchors,
                    "get-commitments": self._get_commitments,
                    "get-archive": self._get_archive,
                }
            )

    def _open_certified(self, storage: Path) -> CertifiedHistorian:
        archive_path = storage / "keys.archive"
        if not archive_path.exists():
            raise ConfigError(f"certified mode needs a signed key archive at {archive_path}")
        authority = bytes.fromhex(self.config.archive_authority) if self.config.archive_authority else None
        archive = load_archive_file(archive_path, authority)
        anchors = AnchorLog(storage / "anchors.log")
        chain_journal = Journal(storage / "chain.log")
        entries = chain_journal.chain.entries
        for a in anchors:
            if a.seq >= len(entries) or entries[a.seq].entry_digest != a.entry_digest:
                raise CorruptJournal(f"anchor for entry {a.seq} does not match the chain journal", line=a.seq + 1)
        return CertifiedHistorian(archive, anchors, self.clock, self.config.anchor_period, journal=chain_journal)

    @property
    def methods(self) -> list[str]:
        return sorted(self._methods)

    def close(self) -> None:
        self.journal.close()
        if self.certified is not None and self.certified.journal is not None:
            self.certified.journal.close()

    # -- dispatch -----------------------------------------------------------

    def dispatch(self, req: ApiRequest) -> ApiResponse:
        handler = self._methods.get(req.method)
        if handler is None:
            return ApiResponse(
                id=req.id,
                status="unknown-method",
                error=ErrorBody(reason="unknown-method", detail=f"no method {req.method!r}"),
            )
        try:
            body = handler(req.params)
        except (MalformedName, BadDate, DecodeError, BadRequest) as exc:
            return self._error(req, "bad-request", exc)
        except AuthError as exc:
            return self._error(req, "unauthorized", exc)
        except (UnknownAccount, UnknownChallenge) as exc:
            return self._error(req, "not-found", exc)
        except HintsError as exc:
            return self._error(req, "error", exc)
        except ValueError as exc:
            return ApiResponse(id=req.id, status="bad-request", error=ErrorBody(reason="bad-request", detail=str(exc)))
        return ApiResponse(id=req.id, status="ok", body=body)

    @staticmethod
    def _error(req: ApiRequest, status: str, exc: HintsError) -> ApiResponse:
        return ApiResponse(id=req.id, status=status, error=ErrorBody(reason=exc.reason, detail=str(exc)))

    # -- helpers ------------------------------------------------------------

    @staticmethod
    def _need(params: dict, *keys: str) -> list[str]:
        missing = [k for k in keys if not params.get(k)]
        if missing:
            raise BadRequest(f"missing parameter(s): {', '.join(missing)}")
        return [params[k] for k in keys]

    def _authed(self, params: dict) -> str:
        account, secret = self._need(params, "account_id", "secret")
        self.historian.authenticate(account, secret)
        return account

    def _loose(self, params: dict) -> bool:
        raw = params.get("loose")
        if raw is None:
            return self.config.loose
        if raw not in ("true", "false"):
            raise BadRequest("loose must be 'true' or 'false'")
        return raw == "true"

    @staticmethod
    def _b64(params: dict, key: str) -> bytes:
        (raw,) = Service._need(params, key)
        try:
            return base64.b64decode(raw, validate=True)
        except (binascii.Error, ValueError):
            raise BadRequest(f"{key} must be base64") from None

    # -- plain endpoints ----------------------------------------------------

    def _create_account(self, params):
        (secret,) = self._need(params, "secret")
        return {"account_id": self.historian.create_account(secret, params.get("display_hint"))}

    def _request_link(self, params):
        account = self._authed(params)
        (name,) = self._need(params, "name")
        return {"challenge_id": self.historian.request_link(account, PrimaryName.parse(name))}

    def _confirm_link(self, params):
        cid, nonce = self._need(params, "challenge_id", "nonce")
        rec = self.historian.confirm_link(cid, nonce)
        if rec is None:
            return {"outcome": "rejected"}
        return {
            "outcome": "confirmed",
            "name": str(rec.name),
            "start": rec.start.isoformat(),
            "end": rec.end.isoformat(),
            "expiration": rec.expiration.isoformat(),
        }

    def _sever_link(self, params):
        account = self._authed(params)
        (name,) = self._need(params, "name")
        self.historian.sever_link(account, PrimaryName.parse(name))
        return {}

    def _resolve(self, params):
        (name,) = self._need(params, "name")
        return self.historian.resolve(parse_historic_name(name), loose=self._loose(params)).to_dict()

    def _list_periods(self, params):
        (name,) = self._need(params, "name")
        periods = self.historian.list_association_periods(PrimaryName.parse(name))
        return {"periods": [p.to_dict() for p in periods]}

    def _run_sweep(self, params):
        actions = self.historian.reestablish_sweep()
        return {"actions": [{"kind": a.kind, "name": str(a.name)} for a in actions]}

    def _advance_clock(self, params):
        (to,) = self._need(params, "to")
        target = date.fromisoformat(to)
        actions = []
        while self.clock.today() < target:
            self.clock.set(self.clock.today() + ONE_DAY)
            for a in self.historian.reestablish_sweep():
                actions.append({"on": self.clock.today().isoformat(), "kind": a.kind, "name": str(a.name)})
        return {"today": self.clock.today().isoformat(), "actions": actions}

    # -- certified endpoints ------------------------------------------------

    def _ingest_cert(self, params):
        cert = read_cert(self._b64(params, "cert"))
        entry = self.certified.ingest(cert)
        return {"seq": entry.seq, "kind": kind_name(cert), "cert": describe(cert)}

    def _certified_resolve(self, params):
        (name,) = self._need(params, "name")
        proof = self.certified.certified_resolve(parse_historic_name(name), loose=self._loose(params))
        data = write_proof(proof)
        return {
            "outcome": proof.outcome,
            "answer": proof.result().to_dict(),
            "proof": base64.b64encode(data).decode("ascii"),
        }

    def _get_anchors(self, params):
        return {"anchors": self.certified.anchors.to_text()}

    def _get_commitments(self, params):
        return {
            "commitments": [
                {
                    "seq": seq,
                    "as_of": c.as_of.isoformat(),
                    "entries": c.entries,
                    "names_root": c.names.root_digest.hex(),
                    "names_count": c.names.count,
                    "persons_root": c.persons.root_digest.hex(),
                    "persons_count": c.persons.count,
                }
                for seq, c in self.certified.commitments
            ]
        }

    def _get_archive(self, params):
        data = (self.storage / "keys.archive").read_bytes()
        return {"archive": base64.b64encode(data).decode("ascii")}
