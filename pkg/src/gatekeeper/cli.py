"""Administrator and operator command-line interface.

Commands cover the full lifecycle: store bootstrap, user management, grants,
resources, decision queries, menu projection, login simulation, password
flows, audit inspection, and serving the HTTP API.

Administrative commands authenticate with ``--as <user_id>`` plus a password
taken from GATEKEEPER_PASSWORD (or an interactive prompt); the CLI goes
through the same login path as the service and never bypasses authorization.
Exit codes: 0 success, 1 domain error, 2 usage error.
"""

from __future__ import annotations

import argparse
import contextlib
import fcntl
import getpass
import json
import os
import sys
from dataclasses import dataclass
from datetime import datetime
from pathlib import Path
from typing import IO, Callable, Iterator, Mapping

from .app import Gatekeeper, system_clock
from .credentials import DEFAULT_COST
from .engine import ANONYMOUS, Principal
from .errors import GatekeeperError
from .model import AccessLevel, DataClass, MenuGroup, PolicyConfig, Resource, Role, SelfRegistrationMode, UserStatus
from .store import format_instant, parse_instant
from .web import make_server
from .wire import (
    audit_wire,
    decision_wire,
    menu_wire,
    public_grant,
    public_resource,
    public_session,
    public_user,
)

STORE_ENV = "GATEKEEPER_STORE"
PASSWORD_ENV = "GATEKEEPER_PASSWORD"
KDF_COST_ENV = "GATEKEEPER_KDF_COST"

USAGE_ERROR = 2

_ROLE_CHOICES = [r.value for r in Role]
_LEVEL_CHOICES = [l.value for l in AccessLevel]
_CLASS_CHOICES = [c.value for c in DataClass]
_GROUP_CHOICES = [g.value.replace("_", "-") for g in MenuGroup]


class UsageError(Exception):
    """A problem with how the command was invoked, not with the domain."""


@dataclass
class Ctx:
    env: Mapping[str, str]
    stdout: IO[str]
    stderr: IO[str]
    as_json: bool
    store_path: Path
    clock: Callable[[], datetime]
    digest_cost: int

    def emit(self, human: str, payload: dict) -> None:
        if self.as_json:
            print(json.dumps(payload, sort_keys=True), file=self.stdout)
        else:
            print(human, file=self.stdout)


@contextlib.contextmanager
def _store_lock(store_path: Path) -> Iterator[None]:
    """Advisory exclusive lock taken for mutating commands."""
    lock_path = store_path.with_suffix(".lock")
    fd = os.open(lock_path, os.O_CREAT | os.O_RDWR, 0o600)
    try:
        fcntl.flock(fd, fcntl.LOCK_EX)
        yield
    finally:
        fcntl.flock(fd, fcntl.LOCK_UN)
        os.close(fd)


def _prompt_secret(label: str) -> str:
    try:
        return getpass.getpass(label)
    except (EOFError, KeyboardInterrupt):
        raise UsageError("a password is required and no terminal is available") from None


def _auth_password(ctx: Ctx, label: str) -> str:
    password = ctx.env.get(PASSWORD_ENV)
    if password is not None:
        return password
    return _prompt_secret(f"password for {label}: ")


@contextlib.contextmanager
def _admin_session(gk: Gatekeeper, ctx: Ctx, as_user: str | None) -> Iterator[Principal]:
    """Log in the acting administrator, yield their principal, log out."""
    if not as_user:
        raise UsageError("--as <user_id> is required for this command")
    session = gk.login(as_user, _auth_password(ctx, as_user))
    try:
        yield gk.resolve(session.token)
    finally:
        gk.logout(session.token)


def _open(ctx: Ctx) -> Gatekeeper:
    return Gatekeeper.open(ctx.store_path, clock=ctx.clock, digest_cost=ctx.digest_cost)


# ---------------------------------------------------------------------------
# Command handlers


def cmd_bootstrap(args, ctx: Ctx) -> int:
    if ctx.store_path.exists():
        raise GatekeeperError(f"store already exists at {ctx.store_path}")
    config = PolicyConfig(
        multi_admin=args.multi_admin,
        self_registration=SelfRegistrationMode(args.self_registration.replace("-", "_")),
        allow_self_password_change=not args.no_self_password_change,
        session_ttl_seconds=args.session_ttl,
        log_denials=not args.no_log_denials,
    )
    result = Gatekeeper.bootstrap(
        args.admin_id,
        args.password,
        hint_question=args.hint_question,
        hint_answer=args.hint_answer,
        config=config,
        store_path=ctx.store_path,
        clock=ctx.clock,
        digest_cost=ctx.digest_cost,
    )
    human = (
        f"initialized store at {ctx.store_path}\n"
        f"administrator '{result.admin.user_id}' created\n"
        f"password: {result.password}"
    )
    ctx.emit(human, {
        "store": str(ctx.store_path),
        "admin": public_user(result.admin),
        "password": result.password,
    })
    return 0


def cmd_user_add(args, ctx: Ctx) -> int:
    with _store_lock(ctx.store_path):
        gk = _open(ctx)
        password = args.password if args.password is not None else _prompt_secret(f"password for {args.user_id}: ")
        with _admin_session(gk, ctx, args.as_user) as actor:
            record = gk.create_user(
                actor, args.user_id, password, Role(args.role),
                args.hint_question, args.hint_answer,
            )
    ctx.emit(
        f"created user '{record.user_id}' ({record.role.value}, {record.status.value})",
        public_user(record),
    )
    return 0


def cmd_user_list(args, ctx: Ctx) -> int:
    with _store_lock(ctx.store_path):
        gk = _open(ctx)
        role = Role(args.role) if args.role else None
        status = UserStatus(args.status) if args.status else None
        with _admin_session(gk, ctx, args.as_user) as actor:
            users = gk.list_users(actor, role, status)
    lines = [f"{u.user_id}  {u.role.value}  {u.status.value}" for u in users]
    ctx.emit("\n".join(lines) if lines else "(no users)", {"users": [public_user(u) for u in users]})
    return 0


def cmd_user_set_role(args, ctx: Ctx) -> int:
    with _store_lock(ctx.store_path):
        gk = _open(ctx)
        with _admin_session(gk, ctx, args.as_user) as actor:
            record = gk.set_role(actor, args.user_id, Role(args.role))
    ctx.emit(f"user '{record.user_id}' role is now {record.role.value}", public_user(record))
    return 0


def _set_status(args, ctx: Ctx, status: UserStatus) -> int:
    with _store_lock(ctx.store_path):
        gk = _open(ctx)
        with _admin_session(gk, ctx, args.as_user) as actor:
            record = gk.set_status(actor, args.user_id, status)
    ctx.emit(f"user '{record.user_id}' is now {record.status.value}", public_user(record))
    return 0


def cmd_user_enable(args, ctx: Ctx) -> int:
    return _set_status(args, ctx, UserStatus.ACTIVE)


def cmd_user_disable(args, ctx: Ctx) -> int:
    return _set_status(args, ctx, UserStatus.DISABLED)


def cmd_grant_add(args, ctx: Ctx) -> int:
    expiry = parse_instant(args.expires) if args.expires else None
    with _store_lock(ctx.store_path):
        gk = _open(ctx)
        with _admin_session(gk, ctx, args.as_user) as actor:
            grant = gk.grant_special(actor, args.user_id, args.resource_id, AccessLevel(args.level), expiry)
    until = format_instant(grant.expiry) if grant.expiry else "revoked"
    ctx.emit(
        f"grant {grant.grant_id}: '{grant.user_id}' may {grant.level.value} '{grant.resource_id}' until {until}",
        public_grant(grant),
    )
    return 0


def cmd_grant_revoke(args, ctx: Ctx) -> int:
    with _store_lock(ctx.store_path):
        gk = _open(ctx)
        with _admin_session(gk, ctx, args.as_user) as actor:
            gk.revoke_grant(actor, args.grant_id)
    ctx.emit(f"grant {args.grant_id} revoked", {"revoked": args.grant_id})
    return 0


def cmd_grant_list(args, ctx: Ctx) -> int:
    with _store_lock(ctx.store_path):
        gk = _open(ctx)
        with _admin_session(gk, ctx, args.as_user) as actor:
            grants = gk.list_grants(actor)
    lines = [
        f"{g.grant_id}  {g.user_id}  {g.resource_id}  {g.level.value}  "
        f"{format_instant(g.expiry) if g.expiry else 'never'}"
        for g in grants
    ]
    ctx.emit("\n".join(lines) if lines else "(no grants)", {"grants": [public_grant(g) for g in grants]})
    return 0


def cmd_resource_add(args, ctx: Ctx) -> int:
    group = MenuGroup(args.group.replace("-", "_"))
    if args.level:
        level = AccessLevel(args.level)
    else:
        level = AccessLevel.ADMIN if group is MenuGroup.ADMIN_MENU else AccessLevel.READ
    resource = Resource(
        resource_id=args.resource_id,
        display_name=args.name or args.resource_id,
        data_class=DataClass(args.data_class),
        menu_group=group,
        required_level=level,
        description=args.description,
    )
    with _store_lock(ctx.store_path):
        gk = _open(ctx)
        with _admin_session(gk, ctx, args.as_user) as actor:
            gk.add_resource(actor, resource)
    ctx.emit(
        f"resource '{resource.resource_id}' added to {resource.menu_group.value}",
        public_resource(resource),
    )
    return 0


def cmd_resource_list(args, ctx: Ctx) -> int:
    gk = _open(ctx)
    resources = gk.list_resources()
    lines = [
        f"{r.resource_id}  {r.data_class.value}  {r.menu_group.value}  {r.required_level.value}"
        for r in resources
    ]
    ctx.emit(
        "\n".join(lines) if lines else "(no resources)",
        {"resources": [public_resource(r) for r in resources]},
    )
    return 0


def cmd_check(args, ctx: Ctx) -> int:
    gk = _open(ctx)
    principal = gk.principal_for(args.user) if args.user else ANONYMOUS
    decision = gk.check(principal, args.resource, AccessLevel(args.level))
    trace = "\n".join(f"  - {line}" for line in decision.trace)
    human = f"decision: {decision.verdict.value}\nreason: {decision.reason.value}\ntrace:\n{trace}"
    ctx.emit(human, decision_wire(decision))
    return 0


def cmd_menu(args, ctx: Ctx) -> int:
    gk = _open(ctx)
    tree = gk.menu_for(args.user)
    lines = []
    for group, items in tree.groups:
        lines.append(f"[{group.value}]")
        for item in items:
            lines.append(f"  {item.display_name}  ({item.resource_id})")
    ctx.emit("\n".join(lines) if lines else "(empty menu)", menu_wire(tree))
    return 0


def cmd_login(args, ctx: Ctx) -> int:
    with _store_lock(ctx.store_path):
        gk = _open(ctx)
        password = args.password if args.password is not None else _auth_password(ctx, args.user_id)
        session = gk.login(args.user_id, password)
    ctx.emit(
        f"token: {session.token}\nexpires: {format_instant(session.expires_at)}",
        public_session(session),
    )
    return 0


def cmd_passwd_change(args, ctx: Ctx) -> int:
    with _store_lock(ctx.store_path):
        gk = _open(ctx)
        if not args.as_user:
            raise UsageError("--as <user_id> is required for this command")
        old_password = _auth_password(ctx, args.as_user)
        new_password = args.new_password if args.new_password is not None else _prompt_secret("new password: ")
        session = gk.login(args.as_user, old_password)
        try:
            gk.change_password(session.token, old_password, new_password)
        finally:
            gk.logout(session.token)
    ctx.emit("password changed", {"changed": args.as_user})
    return 0


def cmd_passwd_recover_begin(args, ctx: Ctx) -> int:
    with _store_lock(ctx.store_path):
        gk = _open(ctx)
        question = gk.recover_begin(args.user_id)
    ctx.emit(f"hint question: {question}", {"hint_question": question})
    return 0


def cmd_passwd_recover_complete(args, ctx: Ctx) -> int:
    with _store_lock(ctx.store_path):
        gk = _open(ctx)
        password = gk.recover_complete(args.user_id, args.answer)
    ctx.emit(f"new password: {password}", {"password": password})
    return 0


def cmd_audit_tail(args, ctx: Ctx) -> int:
    gk = _open(ctx)
    events = gk.audit_events(kind=args.kind, actor=args.actor, limit=args.lines)
    lines = []
    for event in events:
        detail = " ".join(f"{k}={v}" for k, v in sorted(event.detail.items()))
        lines.append(f"[{event.seq}] {format_instant(event.at)} {event.actor} {event.kind} {detail}".rstrip())
    ctx.emit("\n".join(lines) if lines else "(no events)", {"events": [audit_wire(e) for e in events]})
    return 0


def cmd_serve(args, ctx: Ctx) -> int:
    host, _, port_text = args.bind.rpartition(":")
    if not host or not port_text.isdigit():
        raise UsageError("--bind must look like HOST:PORT")
    gk = _open(ctx)
    server = make_server(gk, host, int(port_text))
    print(f"serving on http://{host}:{port_text}", file=ctx.stdout)
    ctx.stdout.flush()
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
    return 0


# ---------------------------------------------------------------------------
# Parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--store", help=f"store file path (default: ${STORE_ENV})")
    common.add_argument("--json", action="store_true", help="emit one JSON document on stdout")
    common.add_argument("--now", help="fixed RFC 3339 clock for this invocation")
    common.add_argument("--as", dest="as_user", metavar="USER_ID", help="acting administrator")

    parser = argparse.ArgumentParser(prog="gatekeeper", description="Role-based access control for MIS report sites.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("bootstrap", parents=[common], help="create a store and its first administrator")
    p.add_argument("admin_id")
    p.add_argument("--password", help="admin password (generated and echoed when omitted)")
    p.add_argument("--hint-question", default="")
    p.add_argument("--hint-answer", default="")
    p.add_argument("--multi-admin", action="store_true")
    p.add_argument("--self-registration", default="disabled",
                   choices=["disabled", "auto-guest", "pending-approval"])
    p.add_argument("--session-ttl", type=int, default=1800)
    p.add_argument("--no-self-password-change", action="store_true")
    p.add_argument("--no-log-denials", action="store_true")
    p.set_defaults(func=cmd_bootstrap)

    user = sub.add_parser("user", help="user management").add_subparsers(dest="subcommand", required=True)
    p = user.add_parser("add", parents=[common])
    p.add_argument("user_id")
    p.add_argument("--role", required=True, choices=_ROLE_CHOICES)
    p.add_argument("--password")
    p.add_argument("--hint-question", default="")
    p.add_argument("--hint-answer", default="")
    p.set_defaults(func=cmd_user_add)
    p = user.add_parser("list", parents=[common])
    p.add_argument("--role", choices=_ROLE_CHOICES)
    p.add_argument("--status", choices=[s.value for s in UserStatus])
    p.set_defaults(func=cmd_user_list)
    p = user.add_parser("set-role", parents=[common])
    p.add_argument("user_id")
    p.add_argument("--role", required=True, choices=_ROLE_CHOICES)
    p.set_defaults(func=cmd_user_set_role)
    p = user.add_parser("enable", parents=[common])
    p.add_argument("user_id")
    p.set_defaults(func=cmd_user_enable)
    p = user.add_parser("disable", parents=[common])
    p.add_argument("user_id")
    p.set_defaults(func=cmd_user_disable)

    grant = sub.add_parser("grant", help="special grants").add_subparsers(dest="subcommand", required=True)
    p = grant.add_parser("add", parents=[common])
    p.add_argument("user_id")
    p.add_argument("resource_id")
    p.add_argument("--level", required=True, choices=_LEVEL_CHOICES)
    p.add_argument("--expires", help="RFC 3339 expiry (grant lives until this instant inclusive)")
    p.set_defaults(func=cmd_grant_add)
    p = grant.add_parser("revoke", parents=[common])
    p.add_argument("grant_id")
    p.set_defaults(func=cmd_grant_revoke)
    p = grant.add_parser("list", parents=[common])
    p.set_defaults(func=cmd_grant_list)

    resource = sub.add_parser("resource", help="protected resources").add_subparsers(dest="subcommand", required=True)
    p = resource.add_parser("add", parents=[common])
    p.add_argument("resource_id")
    p.add_argument("--name", help="display name (defaults to the id)")
    p.add_argument("--class", dest="data_class", required=True, choices=_CLASS_CHOICES)
    p.add_argument("--group", required=True, choices=_GROUP_CHOICES)
    p.add_argument("--level", choices=_LEVEL_CHOICES,
                   help="required level (default: admin for the admin menu, read elsewhere)")
    p.add_argument("--description")
    p.set_defaults(func=cmd_resource_add)
    p = resource.add_parser("list", parents=[common])
    p.set_defaults(func=cmd_resource_list)

    p = sub.add_parser("check", parents=[common], help="evaluate one access decision")
    p.add_argument("--user", help="authenticated user (omit for an anonymous outsider)")
    p.add_argument("--resource", required=True)
    p.add_argument("--level", required=True, choices=_LEVEL_CHOICES)
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("menu", parents=[common], help="project the visible menu")
    p.add_argument("--user", help="authenticated user (omit for an anonymous outsider)")
    p.set_defaults(func=cmd_menu)

    p = sub.add_parser("login", parents=[common], help="authenticate and print a session token")
    p.add_argument("user_id")
    p.add_argument("--password")
    p.set_defaults(func=cmd_login)

    passwd = sub.add_parser("passwd", help="password self-service").add_subparsers(dest="subcommand", required=True)
    p = passwd.add_parser("change", parents=[common])
    p.add_argument("--new-password")
    p.set_defaults(func=cmd_passwd_change)
    p = passwd.add_parser("recover-begin", parents=[common])
    p.add_argument("user_id")
    p.set_defaults(func=cmd_passwd_recover_begin)
    p = passwd.add_parser("recover-complete", parents=[common])
    p.add_argument("user_id")
    p.add_argument("--answer", required=True)
    p.set_defaults(func=cmd_passwd_recover_complete)

    audit = sub.add_parser("audit", help="audit log").add_subparsers(dest="subcommand", required=True)
    p = audit.add_parser("tail", parents=[common])
    p.add_argument("-n", "--lines", type=int, default=10)
    p.add_argument("--kind")
    p.add_argument("--actor")
    p.set_defaults(func=cmd_audit_tail)

    p = sub.add_parser("serve", parents=[common], help="run the HTTP policy service")
    p.add_argument("--bind", default="127.0.0.1:8047", metavar="HOST:PORT")
    p.set_defaults(func=cmd_serve)

    return parser


# ---------------------------------------------------------------------------
# Entry points


def execute(
    argv: list[str],
    env: Mapping[str, str] | None = None,
    *,
    stdout: IO[str] | None = None,
    stderr: IO[str] | None = None,
) -> int:
    """Run one CLI invocation; returns the exit code instead of exiting."""
    env = env if env is not None else os.environ
    out = stdout if stdout is not None else sys.stdout
    err = stderr if stderr is not None else sys.stderr

    with contextlib.redirect_stdout(out), contextlib.redirect_stderr(err):
        parser = build_parser()
        try:
            args = parser.parse_args(argv)
        except SystemExit as exc:
            return int(exc.code) if exc.code else 0

        try:
            store_arg = args.store or env.get(STORE_ENV)
            if not store_arg:
                raise UsageError(f"no store given: pass --store or set ${STORE_ENV}")
            clock = system_clock
            if args.now:
                try:
                    fixed = parse_instant(args.now)
                except ValueError as exc:
                    raise UsageError(str(exc)) from None
                clock = lambda: fixed  # noqa: E731 - tiny fixed clock
            try:
                digest_cost = int(env.get(KDF_COST_ENV, DEFAULT_COST))
            except ValueError:
                raise UsageError(f"${KDF_COST_ENV} must be an integer") from None
            ctx = Ctx(
                env=env,
                stdout=out,
                stderr=err,
                as_json=args.json,
                store_path=Path(store_arg),
                clock=clock,
                digest_cost=digest_cost,
            )
            return args.func(args, ctx)
        except UsageError as exc:
            print(f"error: {exc}", file=err)
            return USAGE_ERROR
        except GatekeeperError as exc:
            if getattr(args, "json", False):
                print(json.dumps({"error": exc.code, "message": exc.message}, sort_keys=True), file=out)
            print(f"error: {exc.message}", file=err)
            return 1


def main() -> None:
    raise SystemExit(execute(sys.argv[1:]))
