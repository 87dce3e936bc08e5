"""Outward-facing JSON forms shared by the CLI and the HTTP service.

User records cross this boundary redacted: no digest bytes, no salts, no
plaintext secrets ever appear in a serialized view.
"""

from __future__ import annotations

from .engine import Decision, MenuTree
from .model import Resource, Session, SpecialGrant, UserRecord
from .sessions import RECOVERY_LOCK_THRESHOLD
from .store import AuditEvent, event_to_wire, format_instant


def public_user(user: UserRecord) -> dict:
    return {
        "user_id": user.user_id,
        "role": user.role.value,
        "status": user.status.value,
        "hint_question": user.hint_question,
        "created_by": user.created_by,
        "created_at": format_instant(user.created_at),
        "recovery_locked": user.recovery_failures >= RECOVERY_LOCK_THRESHOLD,
    }


def public_grant(grant: SpecialGrant) -> dict:
    return {
        "grant_id": grant.grant_id,
        "user_id": grant.user_id,
        "resource_id": grant.resource_id,
        "level": grant.level.value,
        "expiry": format_instant(grant.expiry) if grant.expiry else None,
        "granted_by": grant.granted_by,
        "granted_at": format_instant(grant.granted_at),
    }


def public_resource(resource: Resource) -> dict:
    return {
        "resource_id": resource.resource_id,
        "display_name": resource.display_name,
        "data_class": resource.data_class.value,
        "menu_group": resource.menu_group.value,
        "required_level": resource.required_level.value,
        "description": resource.description,
    }


def public_session(session: Session) -> dict:
    return {
        "token": session.token,
        "user_id": session.user_id,
        "issued_at": format_instant(session.issued_at),
        "expires_at": format_instant(session.expires_at),
    }


def decision_wire(decision: Decision) -> dict:
    return {
        "verdict": decision.verdict.value,
        "reason": decision.reason.value,
        "grant_id": decision.grant_id,
        "trace": list(decision.trace),
    }


def menu_wire(tree: MenuTree) -> dict:
    return {
        "groups": [
            {
                "group": group.value,
                "items": [
                    {"resource_id": item.resource_id, "display_name": item.display_name}
                    for item in items
                ],
            }
            for group, items in tree.groups
        ]
    }


def audit_wire(event: AuditEvent) -> dict:
    return event_to_wire(event)
