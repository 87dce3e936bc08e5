"""User lifecycle and grant administration.

Every operation here takes the current store snapshot and returns a
replacement snapshot plus the audit entry describing what changed; nothing
is mutated in place.  All administrative operations are gated on an acting
principal who must be an active administrator.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass, replace
from datetime import datetime

from .credentials import make_digest, make_hint_digest, MIN_PASSWORD_LENGTH
from .engine import Principal, PrincipalKind
from .errors import (
    AdminCapExceeded,
    AdminLevelNotGrantable,
    GuestWriteForbidden,
    IdAlreadyExists,
    InvalidArgument,
    InvalidId,
    NotAuthorized,
    ResourceAlreadyExists,
    SelfDemotionForbidden,
    SelfDisableForbidden,
    SelfRegistrationDisabled,
    UnknownGrant,
    UnknownResource,
    UnknownUser,
    WeakPassword,
)
from .model import (
    AccessLevel,
    Resource,
    Role,
    SelfRegistrationMode,
    SpecialGrant,
    StoreDocument,
    UserRecord,
    UserStatus,
    active_admin_count,
    find_grant,
    find_resource,
    find_user,
    user_id_syntax_error,
)
from .store import AuditEntry, format_instant

SELF_REGISTRATION_ACTOR = "self-registration"

MutationResult = tuple[StoreDocument, object, AuditEntry]


class IdAvailability(enum.Enum):
    AVAILABLE = "available"
    TAKEN = "taken"
    INVALID = "invalid"


@dataclass(frozen=True)
class IdCheck:
    availability: IdAvailability
    reason: str | None = None


def validate_user_id(doc: StoreDocument, candidate: str) -> IdCheck:
    """Classify a candidate user-id: invalid syntax, taken under
    case-folding, or available.  Read-only; every outcome is a value."""
    reason = user_id_syntax_error(candidate)
    if reason:
        return IdCheck(IdAvailability.INVALID, reason)
    if find_user(doc, candidate) is not None:
        return IdCheck(IdAvailability.TAKEN)
    return IdCheck(IdAvailability.AVAILABLE)


def _require_admin(actor: Principal) -> None:
    if (
        actor.kind is not PrincipalKind.AUTHENTICATED
        or actor.role is not Role.ADMINISTRATOR
        or actor.status is not UserStatus.ACTIVE
    ):
        raise NotAuthorized()


def _check_new_id(doc: StoreDocument, user_id: str) -> None:
    check = validate_user_id(doc, user_id)
    if check.availability is IdAvailability.INVALID:
        raise InvalidId(check.reason)
    if check.availability is IdAvailability.TAKEN:
        raise IdAlreadyExists()


def check_password_strength(password: str) -> None:
    if len(password) < MIN_PASSWORD_LENGTH:
        raise WeakPassword()


def build_user_record(
    user_id: str,
    password: str,
    role: Role,
    hint_question: str,
    hint_answer: str,
    created_by: str,
    status: UserStatus,
    now: datetime,
    digest_cost: int,
) -> UserRecord:
    return UserRecord(
        user_id=user_id,
        password_digest=make_digest(password, cost=digest_cost),
        role=role,
        status=status,
        hint_question=hint_question,
        hint_answer_digest=make_hint_digest(hint_answer, cost=digest_cost),
        created_by=created_by,
        created_at=now,
    )


def create_user(
    doc: StoreDocument,
    actor: Principal,
    user_id: str,
    password: str,
    role: Role,
    hint_question: str = "",
    hint_answer: str = "",
    *,
    now: datetime,
    digest_cost: int,
) -> MutationResult:
    """Provision an account (administrator only).

    The new record is always Active.  Creating a second administrator is
    refused unless the multi-admin policy is enabled.
    """
    _require_admin(actor)
    _check_new_id(doc, user_id)
    if role not in (Role.GUEST, Role.STAFF, Role.MANAGER, Role.ADMINISTRATOR):
        raise InvalidArgument("new users must be guest, staff, manager or administrator")
    if role is Role.ADMINISTRATOR and not doc.config.multi_admin and active_admin_count(doc) >= 1:
        raise AdminCapExceeded()
    check_password_strength(password)
    record = build_user_record(
        user_id, password, role, hint_question, hint_answer,
        created_by=actor.user_id, status=UserStatus.ACTIVE, now=now, digest_cost=digest_cost,
    )
    new_doc = replace(doc, users=doc.users + (record,))
    entry = AuditEntry(
        actor=actor.user_id,
        kind="user_created",
        detail={"user_id": user_id, "role": role.value},
    )
    return new_doc, record, entry


def self_register(
    doc: StoreDocument,
    user_id: str,
    password: str,
    hint_question: str = "",
    hint_answer: str = "",
    *,
    now: datetime,
    digest_cost: int,
) -> MutationResult:
    """Self-service registration, when the policy allows it.

    Auto-guest mode yields an active guest; pending-approval mode yields a
    guest that stays scoped to the outsider baseline until an administrator
    assigns a role or enables the account.
    """
    mode = doc.config.self_registration
    if mode is SelfRegistrationMode.DISABLED:
        raise SelfRegistrationDisabled()
    _check_new_id(doc, user_id)
    check_password_strength(password)
    status = UserStatus.ACTIVE if mode is SelfRegistrationMode.AUTO_GUEST else UserStatus.PENDING
    record = build_user_record(
        user_id, password, Role.GUEST, hint_question, hint_answer,
        created_by=SELF_REGISTRATION_ACTOR, status=status, now=now, digest_cost=digest_cost,
    )
    new_doc = replace(doc, users=doc.users + (record,))
    entry = AuditEntry(
        actor="anonymous",
        kind="user_registered",
        detail={"user_id": user_id, "status": status.value},
    )
    return new_doc, record, entry


def _swap_user(doc: StoreDocument, updated: UserRecord) -> StoreDocument:
    users = tuple(updated if u.user_id == updated.user_id else u for u in doc.users)
    return replace(doc, users=users)


def _is_sole_active_admin(doc: StoreDocument, user: UserRecord) -> bool:
    return (
        user.role is Role.ADMINISTRATOR
        and user.status is UserStatus.ACTIVE
        and active_admin_count(doc) == 1
    )


def set_role(
    doc: StoreDocument,
    actor: Principal,
    user_id: str,
    new_role: Role,
) -> MutationResult:
    """Reassign a user's role.

    Promoting past the administrator cap is refused, as is stripping the
    administrator role from the last active administrator (that would orphan
    the store).  Assigning a role to a pending self-registration activates
    the account.
    """
    _require_admin(actor)
    target = find_user(doc, user_id)
    if target is None:
        raise UnknownUser(f"no such user: '{user_id}'")
    if new_role is Role.OUTSIDER:
        raise InvalidArgument("stored users cannot hold the outsider role")
    if (
        new_role is Role.ADMINISTRATOR
        and target.role is not Role.ADMINISTRATOR
        and not doc.config.multi_admin
        and active_admin_count(doc) >= 1
    ):
        raise AdminCapExceeded()
    if new_role is not Role.ADMINISTRATOR and _is_sole_active_admin(doc, target):
        raise SelfDemotionForbidden()
    if new_role is Role.GUEST and any(
        g.user_id == target.user_id and g.level is AccessLevel.WRITE for g in doc.grants
    ):
        raise GuestWriteForbidden("user holds write grants; revoke them before assigning the guest role")
    status = UserStatus.ACTIVE if target.status is UserStatus.PENDING else target.status
    updated = replace(target, role=new_role, status=status)
    entry = AuditEntry(
        actor=actor.user_id,
        kind="role_changed",
        detail={"user_id": target.user_id, "from": target.role.value, "to": new_role.value},
    )
    return _swap_user(doc, updated), updated, entry


def set_status(
    doc: StoreDocument,
    actor: Principal,
    user_id: str,
    new_status: UserStatus,
) -> MutationResult:
    """Enable or disable an account.

    Pending is a self-registration state and cannot be assigned here.
    Disabling the last active administrator is refused.  Enabling an account
    also clears any recovery lockout.
    """
    _require_admin(actor)
    if new_status is UserStatus.PENDING:
        raise InvalidArgument("pending arises only from self-registration")
    target = find_user(doc, user_id)
    if target is None:
        raise UnknownUser(f"no such user: '{user_id}'")
    if new_status is UserStatus.DISABLED and _is_sole_active_admin(doc, target):
        raise SelfDisableForbidden()
    failures = 0 if new_status is UserStatus.ACTIVE else target.recovery_failures
    updated = replace(target, status=new_status, recovery_failures=failures)
    entry = AuditEntry(
        actor=actor.user_id,
        kind="status_changed",
        detail={"user_id": target.user_id, "from": target.status.value, "to": new_status.value},
    )
    return _swap_user(doc, updated), updated, entry


_GRANT_ID_RE = re.compile(r"^g(\d+)$")


def _next_grant_id(doc: StoreDocument) -> str:
    highest = 0
    for grant in doc.grants:
        match = _GRANT_ID_RE.match(grant.grant_id)
        if match:
            highest = max(highest, int(match.group(1)))
    return f"g{highest + 1}"


def grant_special(
    doc: StoreDocument,
    actor: Principal,
    user_id: str,
    resource_id: str,
    level: AccessLevel,
    expiry: datetime | None = None,
    *,
    now: datetime,
) -> MutationResult:
    """Issue a special allowance for one user on one resource.

    Re-issuing an existing (user, resource, level) grant replaces its expiry
    instead of duplicating it.  The admin level is never grantable, and
    guests never receive write access.
    """
    _require_admin(actor)
    target = find_user(doc, user_id)
    if target is None:
        raise UnknownUser(f"no such user: '{user_id}'")
    if find_resource(doc, resource_id) is None:
        raise UnknownResource(f"no such resource: '{resource_id}'")
    if level is AccessLevel.ADMIN:
        raise AdminLevelNotGrantable()
    if level is AccessLevel.WRITE and target.role is Role.GUEST:
        raise GuestWriteForbidden()

    existing = next(
        (
            g
            for g in doc.grants
            if g.user_id == target.user_id and g.resource_id == resource_id and g.level is level
        ),
        None,
    )
    if existing is not None:
        updated = replace(existing, expiry=expiry, granted_by=actor.user_id, granted_at=now)
        grants = tuple(updated if g.grant_id == existing.grant_id else g for g in doc.grants)
    else:
        updated = SpecialGrant(
            grant_id=_next_grant_id(doc),
            user_id=target.user_id,
            resource_id=resource_id,
            level=level,
            expiry=expiry,
            granted_by=actor.user_id,
            granted_at=now,
        )
        grants = doc.grants + (updated,)
    entry = AuditEntry(
        actor=actor.user_id,
        kind="grant_issued",
        detail={
            "grant_id": updated.grant_id,
            "user_id": updated.user_id,
            "resource_id": resource_id,
            "level": level.value,
            "expiry": format_instant(expiry) if expiry else "never",
        },
    )
    return replace(doc, grants=grants), updated, entry


def revoke_grant(
    doc: StoreDocument,
    actor: Principal,
    grant_id: str,
) -> MutationResult:
    _require_admin(actor)
    grant = find_grant(doc, grant_id)
    if grant is None:
        raise UnknownGrant(f"no such grant: '{grant_id}'")
    grants = tuple(g for g in doc.grants if g.grant_id != grant_id)
    entry = AuditEntry(
        actor=actor.user_id,
        kind="grant_revoked",
        detail={"grant_id": grant_id, "user_id": grant.user_id, "resource_id": grant.resource_id},
    )
    return replace(doc, grants=grants), None, entry


def list_users(
    doc: StoreDocument,
    actor: Principal,
    role: Role | None = None,
    status: UserStatus | None = None,
) -> list[UserRecord]:
    """Directory listing (administrator only), ordered by case-folded id.

    Returned records still hold digests; every serialization boundary must
    go through the redacting wire form.
    """
    _require_admin(actor)
    selected = [
        u
        for u in doc.users
        if (role is None or u.role is role) and (status is None or u.status is status)
    ]
    selected.sort(key=lambda u: u.user_id.casefold())
    return selected


def list_grants(doc: StoreDocument, actor: Principal) -> list[SpecialGrant]:
    """Grant listing (administrator only), in stable store order."""
    _require_admin(actor)
    return list(doc.grants)


def add_resource(doc: StoreDocument, actor: Principal, resource: Resource) -> MutationResult:
    _require_admin(actor)
    if find_resource(doc, resource.resource_id) is not None:
        raise ResourceAlreadyExists()
    entry = AuditEntry(
        actor=actor.user_id,
        kind="resource_added",
        detail={
            "resource_id": resource.resource_id,
            "data_class": resource.data_class.value,
            "menu_group": resource.menu_group.value,
            "required_level": resource.required_level.value,
        },
    )
    return replace(doc, resources=doc.resources + (resource,)), resource, entry
