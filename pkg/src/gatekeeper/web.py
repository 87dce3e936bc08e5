"""HTTP policy service: a stateless-per-request JSON façade over the engine.

Every response body is a JSON object.  Authenticated endpoints take
``Authorization: Bearer <token>``; the token is resolved against the
directory on every request, so role changes and disables bite immediately.
Login and recovery failures are status- and byte-identical across their
internal causes.

Requests may be served concurrently: reads hit the published snapshot and
mutations funnel through the engine's single-writer lock.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from datetime import datetime
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from urllib.parse import parse_qs, urlsplit

from .app import Gatekeeper
from .engine import ANONYMOUS, Principal
from .errors import (
    AdminCapExceeded,
    AdminLevelNotGrantable,
    AuthFailed,
    GatekeeperError,
    GuestWriteForbidden,
    HintMismatch,
    IdAlreadyExists,
    InvalidArgument,
    InvalidId,
    InvalidToken,
    IoFailure,
    NotAuthorized,
    OldPasswordMismatch,
    PolicyForbidden,
    RecoveryLocked,
    RecoveryUnavailable,
    ResourceAlreadyExists,
    SelfDemotionForbidden,
    SelfDisableForbidden,
    SelfRegistrationDisabled,
    UnknownGrant,
    UnknownResource,
    UnknownUser,
    WeakPassword,
)
from .model import AccessLevel, Role, UserStatus
from .store import parse_instant
from .wire import (
    audit_wire,
    decision_wire,
    menu_wire,
    public_grant,
    public_resource,
    public_session,
    public_user,
)

_STATUS_BY_ERROR: dict[type, int] = {
    InvalidArgument: 400,
    InvalidId: 400,
    WeakPassword: 400,
    OldPasswordMismatch: 400,
    PolicyForbidden: 400,
    SelfRegistrationDisabled: 400,
    AdminLevelNotGrantable: 400,
    GuestWriteForbidden: 400,
    AuthFailed: 401,
    InvalidToken: 401,
    HintMismatch: 401,
    RecoveryLocked: 401,
    NotAuthorized: 403,
    UnknownUser: 404,
    UnknownResource: 404,
    UnknownGrant: 404,
    RecoveryUnavailable: 404,
    IdAlreadyExists: 409,
    AdminCapExceeded: 409,
    SelfDemotionForbidden: 409,
    SelfDisableForbidden: 409,
    ResourceAlreadyExists: 409,
    IoFailure: 500,
}


@dataclass(frozen=True)
class HttpRequest:
    method: str
    path: str
    headers: dict[str, str] = field(default_factory=dict)
    query: dict[str, str] = field(default_factory=dict)
    body: bytes = b""

    @classmethod
    def make(cls, method: str, target: str, headers: dict[str, str] | None = None, body: bytes = b"") -> "HttpRequest":
        parts = urlsplit(target)
        query = {k: v[0] for k, v in parse_qs(parts.query, keep_blank_values=True).items()}
        lowered = {k.lower(): v for k, v in (headers or {}).items()}
        return cls(method=method.upper(), path=parts.path, headers=lowered, query=query, body=body)

    def header(self, name: str) -> str | None:
        return self.headers.get(name.lower())


@dataclass(frozen=True)
class HttpResponse:
    status: int
    headers: dict[str, str]
    body: bytes

    def json(self) -> dict:
        return json.loads(self.body.decode("utf-8"))


def _respond(status: int, payload: dict) -> HttpResponse:
    body = json.dumps(payload, sort_keys=True).encode("utf-8")
    return HttpResponse(status=status, headers={"Content-Type": "application/json"}, body=body)


def _error_response(exc: GatekeeperError) -> HttpResponse:
    status = _STATUS_BY_ERROR.get(type(exc), 400)
    return _respond(status, {"error": exc.code, "message": exc.message})


_PAGE_NOT_FOUND = {"error": "not_found", "message": "no such page"}


class PolicyService:
    """Routes HTTP requests onto one Gatekeeper instance."""

    def __init__(self, gatekeeper: Gatekeeper):
        self.gatekeeper = gatekeeper
        self._routes = [
            ("POST", re.compile(r"^/api/login$"), self._login),
            ("POST", re.compile(r"^/api/logout$"), self._logout),
            ("GET", re.compile(r"^/api/menu$"), self._menu),
            ("GET", re.compile(r"^/api/check$"), self._check),
            ("GET", re.compile(r"^/api/pages/(?P<resource_id>[^/]+)$"), self._page),
            ("POST", re.compile(r"^/api/register$"), self._register),
            ("POST", re.compile(r"^/api/password/change$"), self._password_change),
            ("POST", re.compile(r"^/api/password/recover$"), self._recover_begin),
            ("POST", re.compile(r"^/api/password/recover/complete$"), self._recover_complete),
            ("POST", re.compile(r"^/api/admin/users$"), self._admin_create_user),
            ("GET", re.compile(r"^/api/admin/users$"), self._admin_list_users),
            ("PATCH", re.compile(r"^/api/admin/users/(?P<user_id>[^/]+)$"), self._admin_patch_user),
            ("POST", re.compile(r"^/api/admin/grants$"), self._admin_create_grant),
            ("DELETE", re.compile(r"^/api/admin/grants/(?P<grant_id>[^/]+)$"), self._admin_delete_grant),
            ("GET", re.compile(r"^/api/admin/audit$"), self._admin_audit),
        ]

    # -- plumbing ----------------------------------------------------------

    def handle(self, request: HttpRequest) -> HttpResponse:
        matched_path = False
        for method, pattern, handler in self._routes:
            match = pattern.match(request.path)
            if not match:
                continue
            matched_path = True
            if method != request.method:
                continue
            try:
                return handler(request, **match.groupdict())
            except GatekeeperError as exc:
                return _error_response(exc)
            except Exception:  # a handler bug must not break the JSON contract
                return _respond(500, {"error": "internal_error", "message": "internal server error"})
        if matched_path:
            return _respond(405, {"error": "method_not_allowed", "message": "method not allowed for this path"})
        return _respond(404, {"error": "not_found", "message": "no such endpoint"})

    def _body(self, request: HttpRequest) -> dict:
        if not request.body:
            return {}
        try:
            data = json.loads(request.body.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError):
            raise InvalidArgument("request body is not valid JSON") from None
        if not isinstance(data, dict):
            raise InvalidArgument("request body must be a JSON object")
        return data

    def _want(self, body: dict, key: str) -> str:
        value = body.get(key)
        if not isinstance(value, str):
            raise InvalidArgument(f"field '{key}' is required and must be a string")
        return value

    def _opt_str(self, body: dict, key: str) -> str:
        value = body.get(key, "")
        if not isinstance(value, str):
            raise InvalidArgument(f"field '{key}' must be a string")
        return value

    def _token(self, request: HttpRequest) -> str | None:
        header = request.header("authorization")
        if header is None:
            return None
        parts = header.split()
        if len(parts) != 2 or parts[0].lower() != "bearer" or not parts[1]:
            raise InvalidToken()
        return parts[1]

    def _principal(self, request: HttpRequest) -> Principal:
        """Anonymous without an Authorization header; otherwise the resolved
        session principal (which may raise InvalidToken)."""
        token = self._token(request)
        if token is None:
            return ANONYMOUS
        return self.gatekeeper.resolve(token)

    def _authenticated(self, request: HttpRequest) -> Principal:
        token = self._token(request)
        if token is None:
            raise InvalidToken()
        return self.gatekeeper.resolve(token)

    @staticmethod
    def _parse_enum(enum_type, raw: str, what: str):
        try:
            return enum_type(raw)
        except ValueError:
            raise InvalidArgument(f"unknown {what}: '{raw}'") from None

    def _parse_expiry(self, body: dict) -> datetime | None:
        raw = body.get("expiry")
        if raw is None:
            return None
        if not isinstance(raw, str):
            raise InvalidArgument("field 'expiry' must be an RFC 3339 string or null")
        try:
            return parse_instant(raw)
        except ValueError as exc:
            raise InvalidArgument(str(exc)) from None

    # -- open endpoints ------------------------------------------------------

    def _login(self, request: HttpRequest) -> HttpResponse:
        body = self._body(request)
        session = self.gatekeeper.login(self._want(body, "user_id"), self._want(body, "password"))
        return _respond(200, public_session(session))

    def _logout(self, request: HttpRequest) -> HttpResponse:
        token = self._token(request)
        if token is None:
            raise InvalidToken()
        self.gatekeeper.logout(token)
        return _respond(200, {"ok": True})

    def _menu(self, request: HttpRequest) -> HttpResponse:
        principal = self._principal(request)
        return _respond(200, menu_wire(self.gatekeeper.visible_menu(principal)))

    def _check(self, request: HttpRequest) -> HttpResponse:
        principal = self._principal(request)
        resource_id = request.query.get("resource")
        raw_level = request.query.get("level")
        if not resource_id or not raw_level:
            raise InvalidArgument("query parameters 'resource' and 'level' are required")
        level = self._parse_enum(AccessLevel, raw_level, "access level")
        decision = self.gatekeeper.check(principal, resource_id, level)
        return _respond(200, decision_wire(decision))

    def _page(self, request: HttpRequest, resource_id: str) -> HttpResponse:
        principal = self._principal(request)
        try:
            decision = self.gatekeeper.check(principal, resource_id, AccessLevel.READ)
        except UnknownResource:
            return _respond(404, _PAGE_NOT_FOUND)
        if not decision.allowed:
            # Denied and nonexistent pages answer identically.
            return _respond(404, _PAGE_NOT_FOUND)
        resource = next(r for r in self.gatekeeper.snapshot.resources if r.resource_id == resource_id)
        return _respond(200, public_resource(resource))

    def _register(self, request: HttpRequest) -> HttpResponse:
        body = self._body(request)
        record = self.gatekeeper.self_register(
            self._want(body, "user_id"),
            self._want(body, "password"),
            self._opt_str(body, "hint_question"),
            self._opt_str(body, "hint_answer"),
        )
        return _respond(201, public_user(record))

    def _password_change(self, request: HttpRequest) -> HttpResponse:
        token = self._token(request)
        if token is None:
            raise InvalidToken()
        body = self._body(request)
        self.gatekeeper.change_password(token, self._want(body, "old_password"), self._want(body, "new_password"))
        return _respond(200, {"ok": True})

    def _recover_begin(self, request: HttpRequest) -> HttpResponse:
        body = self._body(request)
        question = self.gatekeeper.recover_begin(self._want(body, "user_id"))
        return _respond(200, {"hint_question": question})

    def _recover_complete(self, request: HttpRequest) -> HttpResponse:
        body = self._body(request)
        password = self.gatekeeper.recover_complete(self._want(body, "user_id"), self._want(body, "hint_answer"))
        return _respond(200, {"password": password})

    # -- admin endpoints -----------------------------------------------------

    def _admin_create_user(self, request: HttpRequest) -> HttpResponse:
        actor = self._authenticated(request)
        body = self._body(request)
        record = self.gatekeeper.create_user(
            actor,
            self._want(body, "user_id"),
            self._want(body, "password"),
            self._parse_enum(Role, self._want(body, "role"), "role"),
            self._opt_str(body, "hint_question"),
            self._opt_str(body, "hint_answer"),
        )
        return _respond(201, public_user(record))

    def _admin_list_users(self, request: HttpRequest) -> HttpResponse:
        actor = self._authenticated(request)
        role = status = None
        if "role" in request.query:
            role = self._parse_enum(Role, request.query["role"], "role")
        if "status" in request.query:
            status = self._parse_enum(UserStatus, request.query["status"], "status")
        users = self.gatekeeper.list_users(actor, role, status)
        return _respond(200, {"users": [public_user(u) for u in users]})

    def _admin_patch_user(self, request: HttpRequest, user_id: str) -> HttpResponse:
        actor = self._authenticated(request)
        body = self._body(request)
        if not ("role" in body or "status" in body):
            raise InvalidArgument("provide 'role' and/or 'status'")
        record = None
        if "role" in body:
            role = self._parse_enum(Role, self._want(body, "role"), "role")
            record = self.gatekeeper.set_role(actor, user_id, role)
        if "status" in body:
            status = self._parse_enum(UserStatus, self._want(body, "status"), "status")
            record = self.gatekeeper.set_status(actor, user_id, status)
        return _respond(200, public_user(record))

    def _admin_create_grant(self, request: HttpRequest) -> HttpResponse:
        actor = self._authenticated(request)
        body = self._body(request)
        grant = self.gatekeeper.grant_special(
            actor,
            self._want(body, "user_id"),
            self._want(body, "resource_id"),
            self._parse_enum(AccessLevel, self._want(body, "level"), "access level"),
            self._parse_expiry(body),
        )
        return _respond(201, public_grant(grant))

    def _admin_delete_grant(self, request: HttpRequest, grant_id: str) -> HttpResponse:
        actor = self._authenticated(request)
        self.gatekeeper.revoke_grant(actor, grant_id)
        return _respond(200, {"ok": True})

    def _admin_audit(self, request: HttpRequest) -> HttpResponse:
        actor = self._authenticated(request)
        if actor.role is not Role.ADMINISTRATOR or actor.status is not UserStatus.ACTIVE:
            raise NotAuthorized()
        since = until = None
        try:
            if "since" in request.query:
                since = parse_instant(request.query["since"])
            if "until" in request.query:
                until = parse_instant(request.query["until"])
        except ValueError as exc:
            raise InvalidArgument(str(exc)) from None
        limit = None
        if "limit" in request.query:
            try:
                limit = int(request.query["limit"])
            except ValueError:
                raise InvalidArgument("limit must be an integer") from None
        events = self.gatekeeper.audit_events(
            kind=request.query.get("kind"),
            actor=request.query.get("actor"),
            since=since,
            until=until,
            limit=limit,
        )
        return _respond(200, {"events": [audit_wire(e) for e in events]})


# ---------------------------------------------------------------------------
# Socket server adapter


class _Handler(BaseHTTPRequestHandler):
    service: PolicyService  # assigned by make_server
    protocol_version = "HTTP/1.1"

    def _dispatch(self):
        length = int(self.headers.get("Content-Length") or 0)
        body = self.rfile.read(length) if length else b""
        request = HttpRequest.make(self.command, self.path, dict(self.headers.items()), body)
        response = self.service.handle(request)
        self.send_response(response.status)
        for name, value in response.headers.items():
            self.send_header(name, value)
        self.send_header("Content-Length", str(len(response.body)))
        self.end_headers()
        self.wfile.write(response.body)

    do_GET = do_POST = do_PATCH = do_DELETE = _dispatch

    def log_message(self, format, *args):  # noqa: A002 - BaseHTTPRequestHandler API
        pass


def make_server(gatekeeper: Gatekeeper, host: str, port: int) -> ThreadingHTTPServer:
    """A threading HTTP server bound to host:port, ready for serve_forever."""
    service = PolicyService(gatekeeper)
    handler = type("GatekeeperHandler", (_Handler,), {"service": service})
    return ThreadingHTTPServer((host, port), handler)
