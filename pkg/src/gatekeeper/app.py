"""The embeddable engine façade.

A ``Gatekeeper`` owns one published store snapshot and funnels every
mutation through a single writer lock: audit line first (write-ahead), then
the snapshot file, then the in-memory publish.  Readers always see the last
fully published snapshot and never block writers.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable

from . import directory, sessions
from .credentials import DEFAULT_COST, generate_password
from .engine import (
    ANONYMOUS,
    Decision,
    MenuTree,
    Principal,
    decide,
    principal_for,
    visible_menu,
)
from .errors import GatekeeperError, InvalidId, UnknownUser
from .model import (
    AccessLevel,
    PolicyConfig,
    Resource,
    Role,
    Session,
    SpecialGrant,
    StoreDocument,
    UserRecord,
    UserStatus,
    find_user,
    user_id_syntax_error,
)
from .store import (
    AuditEntry,
    AuditEvent,
    AuditLog,
    FileAuditLog,
    MemoryAuditLog,
    audit_path_for,
    load,
    save,
)

Clock = Callable[[], datetime]


def system_clock() -> datetime:
    return datetime.now(timezone.utc)


@dataclass
class BootstrapResult:
    gatekeeper: "Gatekeeper"
    admin: UserRecord
    password: str


class Gatekeeper:
    """Policy engine, user directory and session manager over one store."""

    def __init__(
        self,
        document: StoreDocument,
        *,
        store_path: str | Path | None = None,
        audit_log: AuditLog | None = None,
        clock: Clock | None = None,
        digest_cost: int = DEFAULT_COST,
    ):
        self._doc = document
        self.store_path = Path(store_path) if store_path is not None else None
        if audit_log is None:
            audit_log = FileAuditLog(audit_path_for(self.store_path)) if self.store_path else MemoryAuditLog()
        self.audit = audit_log
        self.clock = clock or system_clock
        self.digest_cost = digest_cost
        self._write_lock = threading.Lock()

    # -- construction ------------------------------------------------------

    @classmethod
    def bootstrap(
        cls,
        admin_id: str,
        password: str | None = None,
        *,
        hint_question: str = "",
        hint_answer: str = "",
        config: PolicyConfig | None = None,
        store_path: str | Path | None = None,
        clock: Clock | None = None,
        digest_cost: int = DEFAULT_COST,
    ) -> BootstrapResult:
        """Create a fresh store holding its first administrator.

        Nothing in the access model can mint the first administrator, so
        bootstrap builds the record directly and audits it as 'system'.
        When no password is supplied a random one is generated; either way
        it is handed back for explicit echo to the operator.
        """
        clock = clock or system_clock
        now = clock()
        if password is None:
            password = generate_password()
        directory.check_password_strength(password)
        syntax_error = user_id_syntax_error(admin_id)
        if syntax_error:
            raise InvalidId(syntax_error)
        admin = directory.build_user_record(
            admin_id,
            password,
            Role.ADMINISTRATOR,
            hint_question,
            hint_answer,
            created_by="system",
            status=UserStatus.ACTIVE,
            now=now,
            digest_cost=digest_cost,
        )
        doc = StoreDocument(config=config or PolicyConfig(), users=(admin,))
        gk = cls(doc, store_path=store_path, clock=clock, digest_cost=digest_cost)
        entry = AuditEntry(actor="system", kind="user_created", detail={"user_id": admin_id, "role": "administrator"})
        gk.audit.append(entry, now)
        if gk.store_path:
            save(doc, gk.store_path)
        return BootstrapResult(gatekeeper=gk, admin=admin, password=password)

    @classmethod
    def open(
        cls,
        store_path: str | Path,
        *,
        clock: Clock | None = None,
        digest_cost: int = DEFAULT_COST,
    ) -> "Gatekeeper":
        return cls(load(store_path), store_path=store_path, clock=clock, digest_cost=digest_cost)

    # -- snapshot plumbing ---------------------------------------------------

    @property
    def snapshot(self) -> StoreDocument:
        """The last published snapshot; safe to read from any thread."""
        return self._doc

    @property
    def config(self) -> PolicyConfig:
        return self._doc.config

    def save(self) -> None:
        if self.store_path:
            save(self._doc, self.store_path)

    def _apply(self, mutate: Callable[[StoreDocument, datetime], sessions.SessionOutcome]):
        """Run one serialized mutation.

        ``mutate`` returns (new snapshot or None, outcome, audit entry or
        None).  The audit line is written before the snapshot; an outcome
        that is an error is raised only after the new snapshot (if any) is
        committed, which lets failure paths such as a hint mismatch still
        advance their counters.
        """
        now = self.clock()
        with self._write_lock:
            new_doc, outcome, entry = mutate(self._doc, now)
            if entry is not None:
                self.audit.append(entry, now)
            if new_doc is not None and new_doc is not self._doc:
                new_doc = sessions.prune_expired_sessions(new_doc, now)
                if self.store_path:
                    save(new_doc, self.store_path)
                self._doc = new_doc
        if isinstance(outcome, GatekeeperError):
            raise outcome
        return outcome

    # -- user directory ------------------------------------------------------

    def validate_user_id(self, candidate: str) -> directory.IdCheck:
        return directory.validate_user_id(self._doc, candidate)

    def create_user(
        self,
        actor: Principal,
        user_id: str,
        password: str,
        role: Role,
        hint_question: str = "",
        hint_answer: str = "",
    ) -> UserRecord:
        return self._apply(
            lambda doc, now: directory.create_user(
                doc, actor, user_id, password, role, hint_question, hint_answer,
                now=now, digest_cost=self.digest_cost,
            )
        )

    def self_register(
        self,
        user_id: str,
        password: str,
        hint_question: str = "",
        hint_answer: str = "",
    ) -> UserRecord:
        return self._apply(
            lambda doc, now: directory.self_register(
                doc, user_id, password, hint_question, hint_answer,
                now=now, digest_cost=self.digest_cost,
            )
        )

    def set_role(self, actor: Principal, user_id: str, new_role: Role) -> UserRecord:
        return self._apply(lambda doc, now: directory.set_role(doc, actor, user_id, new_role))

    def set_status(self, actor: Principal, user_id: str, new_status: UserStatus) -> UserRecord:
        return self._apply(lambda doc, now: directory.set_status(doc, actor, user_id, new_status))

    def grant_special(
        self,
        actor: Principal,
        user_id: str,
        resource_id: str,
        level: AccessLevel,
        expiry: datetime | None = None,
    ) -> SpecialGrant:
        return self._apply(
            lambda doc, now: directory.grant_special(doc, actor, user_id, resource_id, level, expiry, now=now)
        )

    def revoke_grant(self, actor: Principal, grant_id: str) -> None:
        return self._apply(lambda doc, now: directory.revoke_grant(doc, actor, grant_id))

    def list_users(
        self, actor: Principal, role: Role | None = None, status: UserStatus | None = None
    ) -> list[UserRecord]:
        return directory.list_users(self._doc, actor, role, status)

    def list_grants(self, actor: Principal) -> list[SpecialGrant]:
        return directory.list_grants(self._doc, actor)

    def add_resource(self, actor: Principal, resource: Resource) -> Resource:
        return self._apply(lambda doc, now: directory.add_resource(doc, actor, resource))

    def list_resources(self) -> list[Resource]:
        return list(self._doc.resources)

    def principal_for(self, user_id: str) -> Principal:
        """The authenticated principal a user's current record implies."""
        record = find_user(self._doc, user_id)
        if record is None:
            raise UnknownUser(f"no such user: '{user_id}'")
        return principal_for(record)

    # -- authentication ------------------------------------------------------

    def login(self, user_id: str, password: str, now: datetime | None = None) -> Session:
        return self._apply(
            lambda doc, at: sessions.login(
                doc, user_id, password, now=now or at, digest_cost=self.digest_cost
            )
        )

    def resolve(self, token: str, now: datetime | None = None) -> Principal:
        return self._apply(lambda doc, at: sessions.resolve(doc, token, now=now or at))

    def logout(self, token: str) -> None:
        return self._apply(lambda doc, now: sessions.logout(doc, token))

    def change_password(self, token: str, old_password: str, new_password: str) -> None:
        return self._apply(
            lambda doc, now: sessions.change_password(
                doc, token, old_password, new_password, now=now, digest_cost=self.digest_cost
            )
        )

    def recover_begin(self, user_id: str) -> str:
        return self._apply(lambda doc, now: sessions.recover_begin(doc, user_id))

    def recover_complete(self, user_id: str, hint_answer: str) -> str:
        return self._apply(
            lambda doc, now: sessions.recover_complete(
                doc, user_id, hint_answer, now=now, digest_cost=self.digest_cost
            )
        )

    # -- decisions -----------------------------------------------------------

    def decide(
        self,
        principal: Principal,
        resource_id: str,
        level: AccessLevel,
        now: datetime | None = None,
    ) -> Decision:
        return decide(self._doc, principal, resource_id, level, now or self.clock())

    def check(
        self,
        principal: Principal,
        resource_id: str,
        level: AccessLevel,
        now: datetime | None = None,
    ) -> Decision:
        """Like :meth:`decide`, but denials are written to the audit log when
        the policy asks for it.  This is the entry point the CLI and the
        HTTP service use for explicit access checks."""
        at = now or self.clock()
        decision = self.decide(principal, resource_id, level, at)
        if not decision.allowed and self.config.log_denials:
            entry = AuditEntry(
                actor=principal.user_id or "anonymous",
                kind="access_denied",
                detail={
                    "resource_id": resource_id,
                    "level": level.value,
                    "reason": decision.reason.value,
                },
            )
            with self._write_lock:
                self.audit.append(entry, at)
        return decision

    def visible_menu(self, principal: Principal, now: datetime | None = None) -> MenuTree:
        return visible_menu(self._doc, principal, now or self.clock())

    def menu_for(self, user_id: str | None, now: datetime | None = None) -> MenuTree:
        principal = self.principal_for(user_id) if user_id else ANONYMOUS
        return self.visible_menu(principal, now)

    # -- audit ---------------------------------------------------------------

    def audit_events(
        self,
        *,
        kind: str | None = None,
        actor: str | None = None,
        since: datetime | None = None,
        until: datetime | None = None,
        limit: int | None = None,
    ) -> list[AuditEvent]:
        return self.audit.query(kind=kind, actor=actor, since=since, until=until, limit=limit)
