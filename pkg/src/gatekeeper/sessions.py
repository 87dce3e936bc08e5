"""Authentication: login, session resolution, logout, password change, and
hint-based recovery.

Login failure is reported identically for every internal cause (unknown
user, wrong password, disabled, pending) so account names cannot be
enumerated; the audit log records the true cause.  Sessions hold no role
copy: the user's current role and status are re-resolved on every use, so
role changes and disables take effect immediately.

Operations follow the same snapshot-in, snapshot-out convention as the
directory module.  Flows that must both change state and fail (a hint
mismatch increments the failure counter, an expired token is pruned) return
the error as the outcome value alongside the new snapshot, and the calling
shell raises it after committing.
"""

from __future__ import annotations

from dataclasses import replace
from datetime import datetime, timedelta

from .credentials import (
    dummy_digest,
    generate_password,
    make_digest,
    new_session_token,
    verify_hint_answer,
    verify_secret,
    MIN_PASSWORD_LENGTH,
)
from .engine import principal_for
from .errors import (
    AuthFailed,
    HintMismatch,
    InvalidToken,
    OldPasswordMismatch,
    PolicyForbidden,
    RecoveryLocked,
    RecoveryUnavailable,
    WeakPassword,
)
from .model import (
    Session,
    StoreDocument,
    UserRecord,
    UserStatus,
    find_session,
    find_user,
)
from .store import AuditEntry

RECOVERY_LOCK_THRESHOLD = 5

SessionOutcome = tuple[StoreDocument | None, object, AuditEntry | None]


def _live_tokens(doc: StoreDocument) -> set[str]:
    return {s.token for s in doc.sessions}


def _issue_session(doc: StoreDocument, user: UserRecord, now: datetime) -> Session:
    ttl = timedelta(seconds=doc.config.session_ttl_seconds)
    token = new_session_token()
    live = _live_tokens(doc)
    while token in live:  # CSPRNG collisions are absurd, but uniqueness is a contract
        token = new_session_token()
    return Session(token=token, user_id=user.user_id, issued_at=now, expires_at=now + ttl)


def login(
    doc: StoreDocument,
    user_id: str,
    password: str,
    *,
    now: datetime,
    digest_cost: int,
) -> SessionOutcome:
    """Verify credentials and issue a session.

    Every failure surfaces as the same AuthFailed; the audit entry carries
    the internal cause.  Unknown users still pay for one digest
    verification, so timing does not reveal which ids exist.
    """
    user = find_user(doc, user_id)
    if user is None:
        verify_secret(password, dummy_digest(digest_cost))
        return None, AuthFailed(), _login_failed(user_id, "unknown_user")
    if not verify_secret(password, user.password_digest):
        return None, AuthFailed(), _login_failed(user_id, "bad_password")
    if user.status is UserStatus.DISABLED:
        return None, AuthFailed(), _login_failed(user_id, "disabled")
    if user.status is UserStatus.PENDING:
        return None, AuthFailed(), _login_failed(user_id, "pending")

    session = _issue_session(doc, user, now)
    new_doc = replace(doc, sessions=doc.sessions + (session,))
    entry = AuditEntry(actor=user.user_id, kind="login_succeeded", detail={"user_id": user.user_id})
    return new_doc, session, entry


def _login_failed(user_id: str, cause: str) -> AuditEntry:
    return AuditEntry(actor="anonymous", kind="login_failed", detail={"user_id": user_id, "cause": cause})


def _drop_session(doc: StoreDocument, token: str) -> StoreDocument:
    return replace(doc, sessions=tuple(s for s in doc.sessions if s.token != token))


def _locate(
    doc: StoreDocument, token: str, now: datetime
) -> tuple[Session | None, UserRecord | None, StoreDocument | None]:
    """Find a live session and its user.

    Unknown tokens raise immediately.  A session that exists but is dead
    (expired, or its user was disabled) returns a pruned snapshot in the
    third slot so the caller can commit the removal before failing.
    """
    session = find_session(doc, token)
    if session is None:
        raise InvalidToken()
    if now > session.expires_at:
        return None, None, _drop_session(doc, token)
    user = find_user(doc, session.user_id)
    if user is None or user.status is UserStatus.DISABLED:
        return None, None, _drop_session(doc, token)
    return session, user, None


def resolve(doc: StoreDocument, token: str, *, now: datetime) -> SessionOutcome:
    """Resolve a token to a principal carrying the user's current role and
    status; a successful resolve slides the expiry forward to now + TTL."""
    session, user, pruned = _locate(doc, token, now)
    if pruned is not None:
        return pruned, InvalidToken(), None
    extended = replace(session, expires_at=now + timedelta(seconds=doc.config.session_ttl_seconds))
    sessions = tuple(extended if s.token == token else s for s in doc.sessions)
    return replace(doc, sessions=sessions), principal_for(user), None


def logout(doc: StoreDocument, token: str) -> SessionOutcome:
    """Invalidate a token.  Idempotent: unknown tokens are a no-op."""
    session = find_session(doc, token)
    if session is None:
        return None, None, None
    entry = AuditEntry(actor=session.user_id, kind="logged_out", detail={"user_id": session.user_id})
    return _drop_session(doc, token), None, entry


def change_password(
    doc: StoreDocument,
    token: str,
    old_password: str,
    new_password: str,
    *,
    now: datetime,
    digest_cost: int,
) -> SessionOutcome:
    """Self-service password change for the session's own user.

    The old password must verify; on success every other live session of
    the user is invalidated while the acting session stays usable.
    """
    session, user, pruned = _locate(doc, token, now)
    if pruned is not None:
        return pruned, InvalidToken(), None
    if not doc.config.allow_self_password_change:
        raise PolicyForbidden()
    if not verify_secret(old_password, user.password_digest):
        raise OldPasswordMismatch()
    if len(new_password) < MIN_PASSWORD_LENGTH:
        raise WeakPassword()
    updated = replace(user, password_digest=make_digest(new_password, cost=digest_cost))
    users = tuple(updated if u.user_id == user.user_id else u for u in doc.users)
    sessions = tuple(s for s in doc.sessions if s.user_id != user.user_id or s.token == token)
    entry = AuditEntry(actor=user.user_id, kind="password_changed", detail={"user_id": user.user_id})
    return replace(doc, users=users, sessions=sessions), None, entry


def _recovery_failed(user_id: str, cause: str) -> AuditEntry:
    return AuditEntry(actor="anonymous", kind="recovery_failed", detail={"user_id": user_id, "cause": cause})


def _recoverable(user: UserRecord | None) -> str | None:
    """The internal reason recovery is unavailable, or None when it can run."""
    if user is None:
        return "unknown_user"
    if user.status is not UserStatus.ACTIVE:
        return "not_active"
    if not user.hint_question.strip():
        return "no_hint"
    return None


def recover_begin(doc: StoreDocument, user_id: str) -> SessionOutcome:
    """Start recovery: return the stored hint question for an active user.

    Unavailable outcomes (unknown user, non-active user, no hint on file)
    are indistinguishable to the caller.
    """
    user = find_user(doc, user_id)
    cause = _recoverable(user)
    if cause is not None:
        return None, RecoveryUnavailable(), _recovery_failed(user_id, cause)
    entry = AuditEntry(actor="anonymous", kind="recovery_started", detail={"user_id": user.user_id})
    return None, user.hint_question, entry


def recover_complete(
    doc: StoreDocument,
    user_id: str,
    hint_answer: str,
    *,
    now: datetime,
    digest_cost: int,
) -> SessionOutcome:
    """Finish recovery: on a matching hint answer, issue a fresh random
    password (returned exactly once) and invalidate every live session.

    Five consecutive mismatches lock recovery for the account until an
    administrator re-enables it; the counter resets on success.
    """
    user = find_user(doc, user_id)
    cause = _recoverable(user)
    if cause is not None:
        return None, RecoveryUnavailable(), _recovery_failed(user_id, cause)
    if user.recovery_failures >= RECOVERY_LOCK_THRESHOLD:
        return None, RecoveryLocked(), _recovery_failed(user_id, "locked")
    if not verify_hint_answer(hint_answer, user.hint_answer_digest):
        bumped = replace(user, recovery_failures=user.recovery_failures + 1)
        users = tuple(bumped if u.user_id == user.user_id else u for u in doc.users)
        return replace(doc, users=users), HintMismatch(), _recovery_failed(user_id, "hint_mismatch")

    new_password = generate_password()
    updated = replace(user, password_digest=make_digest(new_password, cost=digest_cost), recovery_failures=0)
    users = tuple(updated if u.user_id == user.user_id else u for u in doc.users)
    sessions = tuple(s for s in doc.sessions if s.user_id != user.user_id)
    entry = AuditEntry(actor="anonymous", kind="recovery_completed", detail={"user_id": user.user_id})
    return replace(doc, users=users, sessions=sessions), new_password, entry


def prune_expired_sessions(doc: StoreDocument, now: datetime) -> StoreDocument:
    """Drop sessions past their expiry.  Applied before each snapshot save."""
    live = tuple(s for s in doc.sessions if now <= s.expires_at)
    if len(live) == len(doc.sessions):
        return doc
    return replace(doc, sessions=live)
