"""Command-line interface behavior: exit codes, output, engine equivalence."""

from __future__ import annotations

import io
import json

import pytest

from gatekeeper.app import Gatekeeper
from gatekeeper.cli import execute
from gatekeeper.engine import ANONYMOUS
from gatekeeper.model import AccessLevel
from gatekeeper.wire import decision_wire

from worlds import NOW

T0 = "2026-06-01T12:00:00Z"
T_PLUS_30D = "2026-07-01T12:00:00Z"
T_PLUS_31D = "2026-07-02T12:00:00Z"


def run(args, env, stdin=None):
    out, err = io.StringIO(), io.StringIO()
    code = execute(args, env, stdout=out, stderr=err)
    return code, out.getvalue(), err.getvalue()


@pytest.fixture
def env(tmp_path):
    return {
        "GATEKEEPER_STORE": str(tmp_path / "store.json"),
        "GATEKEEPER_PASSWORD": "rootpass1",
        "GATEKEEPER_KDF_COST": "4",
    }


@pytest.fixture
def booted(env):
    code, out, err = run(
        ["bootstrap", "root", "--password", "rootpass1", "--now", T0,
         "--hint-question", "pet?", "--hint-answer", "rex"],
        env,
    )
    assert code == 0, err
    return env


def admin_args(extra):
    return extra + ["--as", "root", "--now", T0]


class TestBootstrap:
    def test_creates_store_and_echoes_password(self, env, tmp_path):
        code, out, err = run(["bootstrap", "root", "--password", "rootpass1", "--now", T0], env)
        assert code == 0
        assert "password: rootpass1" in out
        assert (tmp_path / "store.json").exists()

    def test_generates_password_when_omitted(self, env):
        code, out, _ = run(["bootstrap", "root", "--now", T0], env)
        assert code == 0
        generated = [line for line in out.splitlines() if line.startswith("password: ")][0]
        assert len(generated.split(": ")[1]) == 12

    def test_refuses_to_clobber(self, booted):
        code, _, err = run(["bootstrap", "root2", "--password", "otherpass1"], booted)
        assert code == 1
        assert "already exists" in err

    def test_json_mode(self, env):
        code, out, _ = run(["bootstrap", "root", "--password", "rootpass1", "--json", "--now", T0], env)
        assert code == 0
        doc = json.loads(out)
        assert doc["admin"]["user_id"] == "root"
        assert doc["password"] == "rootpass1"


class TestUserCommands:
    def test_add_prints_created_id(self, booted):
        code, out, err = run(admin_args(["user", "add", "rjones", "--role", "staff", "--password", "password1"]), booted)
        assert code == 0, err
        assert "created user 'rjones'" in out

    def test_duplicate_add_exits_1_with_guidance(self, booted):
        args = admin_args(["user", "add", "rjones", "--role", "staff", "--password", "password1"])
        assert run(args, booted)[0] == 0
        code, _, err = run(args, booted)
        assert code == 1
        assert "user-id already exists; choose a different user-id" in err

    def test_duplicate_any_casing(self, booted):
        assert run(admin_args(["user", "add", "rjones", "--role", "staff", "--password", "password1"]), booted)[0] == 0
        code, _, err = run(admin_args(["user", "add", "RJONES", "--role", "staff", "--password", "password1"]), booted)
        assert code == 1
        assert "different user-id" in err

    def test_list_and_filters(self, booted):
        run(admin_args(["user", "add", "rjones", "--role", "staff", "--password", "password1"]), booted)
        run(admin_args(["user", "add", "mboss", "--role", "manager", "--password", "password1"]), booted)
        code, out, _ = run(admin_args(["user", "list", "--json"]), booted)
        assert code == 0
        users = json.loads(out)["users"]
        assert [u["user_id"] for u in users] == ["mboss", "rjones", "root"]
        code, out, _ = run(admin_args(["user", "list", "--role", "manager", "--json"]), booted)
        assert [u["user_id"] for u in json.loads(out)["users"]] == ["mboss"]

    def test_set_role_enable_disable(self, booted):
        run(admin_args(["user", "add", "rjones", "--role", "staff", "--password", "password1"]), booted)
        code, out, _ = run(admin_args(["user", "set-role", "rjones", "--role", "manager"]), booted)
        assert code == 0 and "manager" in out
        code, out, _ = run(admin_args(["user", "disable", "rjones"]), booted)
        assert code == 0 and "disabled" in out
        code, out, _ = run(admin_args(["user", "enable", "rjones"]), booted)
        assert code == 0 and "active" in out

    def test_wrong_admin_password_fails_auth(self, booted):
        bad = dict(booted, GATEKEEPER_PASSWORD="wrong-password")
        code, _, err = run(["user", "add", "rjones", "--role", "staff", "--password", "password1", "--as", "root"], bad)
        assert code == 1
        assert "invalid credentials" in err

    def test_non_admin_actor_not_authorized(self, booted):
        run(admin_args(["user", "add", "rjones", "--role", "staff", "--password", "password1"]), booted)
        staff_env = dict(booted, GATEKEEPER_PASSWORD="password1")
        code, _, err = run(["user", "add", "other", "--role", "staff", "--password", "password1", "--as", "rjones"], staff_env)
        assert code == 1
        assert "administrator" in err

    def test_missing_as_flag_is_usage_error(self, booted):
        code, _, err = run(["user", "add", "rjones", "--role", "staff", "--password", "password1"], booted)
        assert code == 2
        assert "--as" in err


class TestResourceAndGrantCommands:
    def _site(self, env):
        run(admin_args(["resource", "add", "about-us", "--class", "public", "--group", "public-pages"]), env)
        run(admin_args(["resource", "add", "monthly-report", "--class", "managerial", "--group", "manager-reports"]), env)
        run(admin_args(["user", "add", "guest1", "--role", "guest", "--password", "password1"]), env)

    def test_resource_add_and_list(self, booted):
        self._site(booted)
        code, out, _ = run(["resource", "list", "--json"], booted)
        assert code == 0
        ids = [r["resource_id"] for r in json.loads(out)["resources"]]
        assert ids == ["about-us", "monthly-report"]

    def test_admin_menu_resource_defaults_to_admin_level(self, booted):
        run(admin_args(["resource", "add", "panel", "--class", "sensitive", "--group", "admin-menu"]), booted)
        code, out, _ = run(["resource", "list", "--json"], booted)
        panel = [r for r in json.loads(out)["resources"] if r["resource_id"] == "panel"][0]
        assert panel["required_level"] == "admin"

    def test_grant_lifecycle(self, booted):
        self._site(booted)
        code, out, err = run(
            admin_args(["grant", "add", "guest1", "monthly-report", "--level", "read", "--expires", T_PLUS_30D, "--json"]),
            booted,
        )
        assert code == 0, err
        grant = json.loads(out)
        assert grant["level"] == "read"

        code, out, _ = run(admin_args(["grant", "list", "--json"]), booted)
        assert [g["grant_id"] for g in json.loads(out)["grants"]] == [grant["grant_id"]]

        code, _, _ = run(admin_args(["grant", "revoke", grant["grant_id"]]), booted)
        assert code == 0
        code, _, err = run(admin_args(["grant", "revoke", grant["grant_id"]]), booted)
        assert code == 1
        assert "no such grant" in err

    def test_grant_admin_level_is_domain_error(self, booted):
        self._site(booted)
        code, _, err = run(admin_args(["grant", "add", "guest1", "monthly-report", "--level", "admin"]), booted)
        assert code == 1
        assert "admin" in err


class TestCheckAndMenu:
    def _site(self, env):
        run(admin_args(["resource", "add", "about-us", "--class", "public", "--group", "public-pages"]), env)
        run(admin_args(["resource", "add", "monthly-report", "--class", "managerial", "--group", "manager-reports"]), env)
        run(admin_args(["user", "add", "guest1", "--role", "guest", "--password", "password1"]), env)
        run(admin_args(["user", "add", "mboss", "--role", "manager", "--password", "password1"]), env)
        run(admin_args(["grant", "add", "guest1", "monthly-report", "--level", "read", "--expires", T_PLUS_30D]), env)

    def test_check_human_output(self, booted):
        self._site(booted)
        code, out, _ = run(["check", "--user", "guest1", "--resource", "monthly-report", "--level", "read", "--now", T0], booted)
        assert code == 0
        assert "decision: allow" in out
        assert "reason: special_grant" in out
        assert "trace:" in out

    def test_check_matches_engine_decision_exactly(self, booted):
        self._site(booted)
        cases = [
            (None, "about-us", "read"),
            (None, "monthly-report", "read"),
            ("guest1", "monthly-report", "read"),
            ("guest1", "monthly-report", "write"),
            ("mboss", "monthly-report", "read"),
            ("mboss", "monthly-report", "write"),
            ("root", "monthly-report", "admin"),
        ]
        gk = Gatekeeper.open(booted["GATEKEEPER_STORE"], clock=lambda: NOW)
        for user, resource, level in cases:
            args = ["check", "--resource", resource, "--level", level, "--json", "--now", T0]
            if user:
                args += ["--user", user]
            code, out, _ = run(args, booted)
            assert code == 0
            principal = gk.principal_for(user) if user else ANONYMOUS
            expected = decision_wire(gk.decide(principal, resource, AccessLevel(level), NOW))
            assert json.loads(out) == expected

    def test_check_unknown_resource_is_domain_error(self, booted):
        code, _, err = run(["check", "--resource", "ghost", "--level", "read"], booted)
        assert code == 1
        assert "no such resource" in err

    def test_menu_for_manager_and_anonymous(self, booted):
        self._site(booted)
        code, out, _ = run(["menu", "--user", "mboss", "--json", "--now", T0], booted)
        groups = [g["group"] for g in json.loads(out)["groups"]]
        assert groups == ["public_pages", "manager_reports"]
        code, out, _ = run(["menu", "--json", "--now", T0], booted)
        groups = [g["group"] for g in json.loads(out)["groups"]]
        assert groups == ["public_pages"]

    def test_expired_grant_disappears_from_menu(self, booted):
        self._site(booted)
        code, out, _ = run(["menu", "--user", "guest1", "--json", "--now", T0], booted)
        shown = {i["resource_id"] for g in json.loads(out)["groups"] for i in g["items"]}
        assert "monthly-report" in shown
        code, out, _ = run(["menu", "--user", "guest1", "--json", "--now", T_PLUS_31D], booted)
        shown = {i["resource_id"] for g in json.loads(out)["groups"] for i in g["items"]}
        assert "monthly-report" not in shown


class TestAuthCommands:
    def test_login_prints_token_that_resolves(self, booted):
        code, out, _ = run(["login", "root", "--password", "rootpass1", "--json", "--now", T0], booted)
        assert code == 0
        token = json.loads(out)["token"]
        gk = Gatekeeper.open(booted["GATEKEEPER_STORE"], clock=lambda: NOW)
        assert gk.resolve(token).user_id == "root"

    def test_login_failure_exit_1(self, booted):
        code, _, err = run(["login", "root", "--password", "wrong-pass"], booted)
        assert code == 1
        assert "invalid credentials" in err

    def test_passwd_change_flow(self, booted):
        code, _, err = run(["passwd", "change", "--as", "root", "--new-password", "newpass12", "--now", T0], booted)
        assert code == 0, err
        assert run(["login", "root", "--password", "rootpass1"], booted)[0] == 1
        assert run(["login", "root", "--password", "newpass12"], booted)[0] == 0

    def test_recover_flow(self, booted):
        code, out, _ = run(["passwd", "recover-begin", "root", "--json"], booted)
        assert code == 0
        assert json.loads(out)["hint_question"] == "pet?"
        code, out, _ = run(["passwd", "recover-complete", "root", "--answer", "rex", "--json"], booted)
        assert code == 0
        issued = json.loads(out)["password"]
        assert run(["login", "root", "--password", issued], booted)[0] == 0

    def test_recover_wrong_answer(self, booted):
        code, _, err = run(["passwd", "recover-complete", "root", "--answer", "fido"], booted)
        assert code == 1
        assert "hint answer" in err


class TestAuditCommand:
    def test_tail_shows_recent_events(self, booted):
        run(admin_args(["user", "add", "rjones", "--role", "staff", "--password", "password1"]), booted)
        code, out, _ = run(["audit", "tail", "-n", "50", "--json"], booted)
        assert code == 0
        kinds = [e["kind"] for e in json.loads(out)["events"]]
        assert "user_created" in kinds
        assert "login_succeeded" in kinds

    def test_kind_filter(self, booted):
        run(["login", "root", "--password", "nope"], booted)
        code, out, _ = run(["audit", "tail", "--kind", "login_failed", "--json"], booted)
        events = json.loads(out)["events"]
        assert events and all(e["kind"] == "login_failed" for e in events)

    def test_seq_is_gap_free_across_invocations(self, booted):
        run(admin_args(["user", "add", "rjones", "--role", "staff", "--password", "password1"]), booted)
        run(admin_args(["user", "add", "mboss", "--role", "manager", "--password", "password1"]), booted)
        code, out, _ = run(["audit", "tail", "-n", "1000", "--json"], booted)
        seqs = [e["seq"] for e in json.loads(out)["events"]]
        assert seqs == list(range(1, len(seqs) + 1))


class TestUsageErrors:
    def test_unknown_command(self, env):
        code, _, _ = run(["frobnicate"], env)
        assert code == 2

    def test_missing_store(self):
        code, _, err = run(["user", "list"], {"GATEKEEPER_PASSWORD": "x"})
        assert code == 2
        assert "GATEKEEPER_STORE" in err

    def test_bad_level_choice(self, booted):
        code, _, _ = run(["check", "--resource", "x", "--level", "frob"], booted)
        assert code == 2

    def test_bad_now(self, booted):
        code, _, _ = run(["menu", "--now", "yesterday"], booted)
        assert code == 2

    def test_help_exits_zero(self, env):
        code, out, _ = run(["--help"], env)
        assert code == 0
        assert "bootstrap" in out

    def test_corrupt_store_is_a_domain_error(self, booted, tmp_path):
        with open(booted["GATEKEEPER_STORE"], "w") as handle:
            handle.write('{"version": 1, "users": [')
        code, _, err = run(["user", "list", "--as", "root"], booted)
        assert code == 1
        assert "error:" in err

    def test_unsupported_store_version(self, booted):
        blob = json.load(open(booted["GATEKEEPER_STORE"]))
        blob["version"] = 7
        json.dump(blob, open(booted["GATEKEEPER_STORE"], "w"))
        code, _, err = run(["resource", "list"], booted)
        assert code == 1
        assert "version" in err


class TestDeterminism:
    def test_repeated_reads_are_byte_identical(self, booted):
        run(admin_args(["user", "add", "rjones", "--role", "staff", "--password", "password1"]), booted)
        for args in [
            ["check", "--user", "rjones", "--resource", "ghost", "--level", "read", "--now", T0],
            ["menu", "--user", "rjones", "--json", "--now", T0],
            ["resource", "list", "--json"],
        ]:
            first = run(args, booted)
            second = run(args, booted)
            assert first == second

    def test_grant_ids_are_sequential(self, booted):
        run(admin_args(["resource", "add", "rep", "--class", "managerial", "--group", "manager-reports"]), booted)
        run(admin_args(["user", "add", "guest1", "--role", "guest", "--password", "password1"]), booted)
        run(admin_args(["user", "add", "guest2", "--role", "guest", "--password", "password1"]), booted)
        _, out1, _ = run(admin_args(["grant", "add", "guest1", "rep", "--level", "read", "--json"]), booted)
        _, out2, _ = run(admin_args(["grant", "add", "guest2", "rep", "--level", "read", "--json"]), booted)
        assert json.loads(out1)["grant_id"] == "g1"
        assert json.loads(out2)["grant_id"] == "g2"


class TestServeCommand:
    def test_serve_answers_requests(self, booted):
        import socket
        import subprocess
        import sys
        import time
        import urllib.request

        with socket.socket() as probe:
            probe.bind(("127.0.0.1", 0))
            port = probe.getsockname()[1]

        process = subprocess.Popen(
            [sys.executable, "-m", "gatekeeper", "serve", "--bind", f"127.0.0.1:{port}"],
            env={**booted, "PATH": "/usr/bin:/bin"},
            stdout=subprocess.PIPE,
            stderr=subprocess.PIPE,
        )
        try:
            deadline = time.time() + 10
            last_error = None
            while time.time() < deadline:
                try:
                    with urllib.request.urlopen(f"http://127.0.0.1:{port}/api/menu", timeout=1) as response:
                        assert response.status == 200
                        break
                except OSError as exc:
                    last_error = exc
                    time.sleep(0.1)
            else:
                raise AssertionError(f"server never came up: {last_error}")
        finally:
            process.terminate()
            process.wait(timeout=10)


class TestRedaction:
    def test_no_command_output_contains_digest_material(self, booted):
        run(admin_args(["user", "add", "rjones", "--role", "staff", "--password", "password1",
                        "--hint-question", "pet?", "--hint-answer", "rex"]), booted)
        store_blob = json.loads(open(booted["GATEKEEPER_STORE"]).read())
        secrets = set()
        for user in store_blob["users"]:
            for key in ("password_digest", "hint_answer_digest"):
                secrets.add(user[key]["salt"])
                secrets.add(user[key]["digest"])
        outputs = []
        for args in [
            admin_args(["user", "list", "--json"]),
            admin_args(["user", "list"]),
            admin_args(["grant", "list", "--json"]),
            ["resource", "list", "--json"],
            ["audit", "tail", "-n", "500", "--json"],
            ["menu", "--user", "rjones", "--json"],
            ["check", "--user", "rjones", "--resource", "ghost", "--level", "read"],
        ]:
            _, out, err = run(args, booted)
            outputs.append(out + err)
        joined = "\n".join(outputs)
        for secret in secrets:
            assert secret not in joined
        assert "password1" not in joined
        assert "rootpass1" not in joined
