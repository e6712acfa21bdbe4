"""Vocabulary for the synthetic smoke-scale benchmark.

Each record template describes one reusable failure pattern with two
context-specific variants. Canonical queries are rendered straight from these
templates, so a canonical query matches its own variant's signatures exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from ..memory import FailureFamily as F


@dataclass(frozen=True)
class VariantTemplate:
    suffix: str
    fix: str
    command: str
    paths: tuple[str, ...]
    frames: tuple[tuple[str, str], ...]
    env: dict[str, str] = field(default_factory=dict)


@dataclass(frozen=True)
class RecordTemplate:
    pattern_id: str
    family: F
    symptom: str
    root_cause: str
    variants: tuple[VariantTemplate, VariantTemplate]


V = VariantTemplate

RECORDS: tuple[RecordTemplate, ...] = (
    RecordTemplate(
        "p01-dup-server",
        F.DUPLICATE_SERVER_INSTANCE,
        "OSError: [Errno 98] address already in use while binding port for dev server",
        "a second server instance is still running and holds the socket",
        (
            V("a", "kill the stale uvicorn reloader process before restarting",
              "uvicorn app.main:app --reload --port 8000", ("app/main.py",),
              (("uvicorn/server.py", "startup"), ("asyncio/base_events.py", "create_server")),
              {"PORT": "8000"}),
            V("b", "stop the background flask worker or pick a free port",
              "flask run --port 5000", ("web/app.py",),
              (("werkzeug/serving.py", "run_simple"), ("socketserver.py", "server_bind")),
              {"FLASK_APP": "web/app.py"}),
        ),
    ),
    RecordTemplate(
        "p02-sqlite-lock",
        F.SQLITE_INIT_LOCKING,
        "sqlite3.OperationalError: database query failed because the database is locked",
        "a lingering connection keeps an uncommitted writer transaction open",
        (
            V("a", "close the leaked session in the fixture teardown",
              "pytest tests/test_store.py -x", ("app/store.py", "tests/test_store.py"),
              (("app/store.py", "save_record"), ("sqlite3/dbapi2.py", "execute")),
              {"DB_PATH": "data/app.sqlite"}),
            V("b", "serialize writers and raise busy_timeout",
              "python scripts/import_batch.py", ("scripts/import_batch.py",),
              (("scripts/import_batch.py", "flush_rows"), ("sqlalchemy/engine/base.py", "commit")),
              {"SQLITE_TIMEOUT": "5"}),
        ),
    ),
    RecordTemplate(
        "p03-sqlite-init",
        F.SQLITE_INIT_LOCKING,
        "sqlite3.OperationalError: no such table users on first request",
        "schema was never initialized because init_db did not run create_all",
        (
            V("a", "call init_db at startup before serving",
              "python -m app.server", ("app/server.py", "app/models.py"),
              (("app/models.py", "get_user"), ("sqlalchemy/orm/query.py", "first")),
              {"DATABASE_URL": "sqlite:///app.db"}),
            V("b", "create tables in the session fixture",
              "pytest tests/test_models.py", ("tests/conftest.py",),
              (("tests/conftest.py", "db_session"), ("app/db.py", "connect")),
              {"TESTING": "1"}),
        ),
    ),
    RecordTemplate(
        "p04-stale-migration",
        F.STALE_MIGRATION,
        "sqlite3.OperationalError: database query failed with no such column archived_at",
        "alembic head is outdated so the schema needs alembic upgrade head",
        (
            V("a", "run alembic upgrade head against the local database",
              "alembic current", ("migrations/versions/0042_archive.py",),
              (("app/repository.py", "list_archived"), ("alembic/runtime/migration.py", "run_migrations")),
              {"ALEMBIC_CONFIG": "alembic.ini"}),
            V("b", "regenerate the missing revision and upgrade",
              "make migrate", ("db/migrations/env.py",),
              (("db/migrations/env.py", "run_migrations_online"), ("app/jobs.py", "archive_old")),
              {"MIGRATIONS_DIR": "db/migrations"}),
        ),
    ),
    RecordTemplate(
        "p05-wrong-venv",
        F.WRONG_VIRTUALENV,
        "ModuleNotFoundError: No module named requests imported from site_packages",
        "the wrong virtualenv is active so the interpreter lacks installed packages",
        (
            V("a", "activate the project virtualenv",
              ".venv/bin/python -m app", (".venv/lib/site-packages", "app/__main__.py"),
              (("app/__main__.py", "main"), ("app/http.py", "fetch")),
              {"VIRTUAL_ENV": "/home/dev/.venv"}),
            V("b", "reinstall into the poetry environment",
              "poetry run pytest", ("pyproject.toml", "tests/test_api.py"),
              (("tests/test_api.py", "test_client"), ("app/client.py", "session")),
              {"POETRY_ACTIVE": "0"}),
        ),
    ),
    RecordTemplate(
        "p06-wrong-pythonpath",
        F.WRONG_PYTHONPATH,
        "ModuleNotFoundError: No module named app raised during import of sys_path",
        "pythonpath omits the src layout package root",
        (
            V("a", "export PYTHONPATH=src",
              "python tests/run_all.py", ("src/app/__init__.py", "tests/run_all.py"),
              (("tests/run_all.py", "load_suite"), ("importlib/__init__.py", "import_module")),
              {"PYTHONPATH": "tests"}),
            V("b", "install the package in editable mode",
              "python -m worker", ("src/worker/__main__.py",),
              (("worker/__main__.py", "boot"), ("pkgutil.py", "resolve_name")),
              {"PYTHONPATH": ""}),
        ),
    ),
    RecordTemplate(
        "p07-lockfile",
        F.LOCKFILE_CONFLICT,
        "poetry lockfile conflict content hash mismatch detected",
        "pyproject changed without regenerating poetry lock",
        (
            V("a", "run poetry lock --no-update",
              "poetry install", ("poetry.lock", "pyproject.toml"),
              (("poetry/installation/installer.py", "run"), ("poetry/packages/locker.py", "is_fresh")),
              {"POETRY_VIRTUALENVS_IN_PROJECT": "true"}),
            V("b", "recompile pinned requirements",
              "pip-compile requirements.in", ("requirements.txt", "requirements.in"),
              (("piptools/scripts/compile.py", "cli"), ("piptools/resolver.py", "resolve")),
              {"PIP_INDEX_URL": "https://mirror.local/simple"}),
        ),
    ),
    RecordTemplate(
        "p08-retrieval-fp",
        F.RETRIEVAL_FALSE_POSITIVE,
        "memory injected fix failed retry after unrelated similarity match",
        "retrieved memory belongs to a wrong failure family with only lexical overlap",
        (
            V("a", "require structural signature agreement before injection",
              "agent replay --issue 311", ("agent/memory/retriever.py",),
              (("agent/memory/retriever.py", "rank"), ("agent/loop.py", "inject_context")),
              {"MEMORY_TOPK": "3"}),
            V("b", "raise the structural match floor",
              "agent run --task fix-tests", ("agent/prompting/context.py",),
              (("agent/prompting/context.py", "build_prompt"), ("agent/memory/store.py", "search")),
              {"MEMORY_MIN_SCORE": "0.2"}),
        ),
    ),
    RecordTemplate(
        "p09-rejected-reuse",
        F.REJECTED_MEMORY_REUSE,
        "memory injected fix failed retry and reviewer rejected the suggestion",
        "user declined the same memory earlier in this session feedback",
        (
            V("a", "suppress memories rejected earlier in the session",
              "agent run --session resume", ("agent/session/state.py",),
              (("agent/session/state.py", "record_feedback"), ("agent/loop.py", "propose_fix")),
              {"AGENT_SESSION": "s-17"}),
            V("b", "ask the reviewer before reusing the memory",
              "agent review --pr 88", ("agent/review/gate.py",),
              (("agent/review/gate.py", "check_feedback"), ("agent/memory/store.py", "mark_rejected")),
              {"REVIEW_MODE": "strict"}),
        ),
    ),
    RecordTemplate(
        "p10-wrong-env-var",
        F.WRONG_ENV_VAR,
        "RuntimeError: required environment variable database_url is unset at startup",
        "dotenv file not loaded so the export is missing in the shell",
        (
            V("a", "load the .env file via python-dotenv",
              "python manage.py runserver", (".env", "config/settings.py"),
              (("config/settings.py", "load_settings"), ("os.py", "getenv")),
              {"DATABASE_URL": ""}),
            V("b", "pass env_file in the compose service",
              "docker compose up api", ("docker-compose.yml", "api/config.py"),
              (("api/config.py", "from_env"), ("pydantic/env_settings.py", "build_values")),
              {"COMPOSE_PROJECT_NAME": "api"}),
        ),
    ),
    RecordTemplate(
        "p11-outdated-variant",
        F.OUTDATED_MEMORY_VARIANT,
        "migration step failed because column already exists after deprecated flag",
        "stored fix is an outdated variant superseded by a newer version",
        (
            V("a", "switch to the current variant of the flag migration",
              "agent apply-memory --id m-204", ("migrations/versions/0031_flags.py",),
              (("migrations/versions/0031_flags.py", "upgrade"), ("migrate/ops.py", "add_column")),
              {"FEATURE_FLAGS": "v2"}),
            V("b", "drop the superseded memory variant",
              "flask db upgrade", ("app/flags/migrate.py",),
              (("app/flags/migrate.py", "apply_flags"), ("flask_migrate/__init__.py", "upgrade")),
              {"FLAGS_SCHEMA": "2"}),
        ),
    ),
    RecordTemplate(
        "p12-migration-order",
        F.MIGRATION_ORDER_MISMATCH,
        "migration step failed because column already exists with down_revision dependency",
        "migration order diverged into multiple heads requiring a merge branch",
        (
            V("a", "create a merge revision for the diverged heads",
              "alembic heads", ("migrations/versions/0032_merge.py",),
              (("migrations/versions/0032_merge.py", "upgrade"), ("migrate/script.py", "walk_revisions")),
              {"ALEMBIC_BRANCH": "main"}),
            V("b", "reorder dependencies so the column migration runs first",
              "python manage.py migrate", ("app/migrations/0007_auto.py",),
              (("app/migrations/0007_auto.py", "apply"), ("django/db/migrations/executor.py", "migrate")),
              {"DJANGO_SETTINGS_MODULE": "app.settings"}),
        ),
    ),
    RecordTemplate(
        "p13-corrupted-state",
        F.CORRUPTED_LOCAL_STATE,
        "json.decoder.JSONDecodeError: unexpected end of data reading state cache",
        "local state file corrupted by an interrupted truncated write",
        (
            V("a", "delete the corrupted state file and rebuild",
              "agent resume", (".agent/state.json",),
              (("agent/state.py", "load_state"), ("json/decoder.py", "raw_decode")),
              {"AGENT_HOME": ".agent"}),
            V("b", "write atomically via a temp file and rename",
              "python -m tool.cache warm", ("~/.cache/tool/index.json",),
              (("tool/cache.py", "read_index"), ("json/__init__.py", "load")),
              {"XDG_CACHE_HOME": "~/.cache"}),
        ),
    ),
    RecordTemplate(
        "p14-missing-backup",
        F.MISSING_BACKUP_DIR,
        "KeyError: configuration lookup failed for backup_dir while resolving storage",
        "backup directory path is missing and was never created with mkdir",
        (
            V("a", "create the backup directory before the job",
              "python -m ops.backup run", ("ops/backup.py", "/var/backups/app"),
              (("ops/backup.py", "target_dir"), ("pathlib.py", "resolve")),
              {"BACKUP_ROOT": "/var/backups"}),
            V("b", "set BACKUP_DIR to an existing path",
              "cron-runner nightly", ("jobs/nightly.py",),
              (("jobs/nightly.py", "rotate"), ("shutil.py", "copytree")),
              {"BACKUP_DIR": ""}),
        ),
    ),
    RecordTemplate(
        "p15-invalid-config-key",
        F.INVALID_CONFIG_KEY,
        "KeyError: configuration lookup failed for unknown_key in service settings",
        "config key was renamed so the schema rejects the typo",
        (
            V("a", "rename the key to the new option name",
              "svc start --config config/service.yaml", ("config/service.yaml",),
              (("svc/config.py", "get_option"), ("svc/main.py", "boot")),
              {"SVC_PROFILE": "dev"}),
            V("b", "update defaults to match the schema",
              "python -m svc.validate", ("svc/schema.py", "config/defaults.toml"),
              (("svc/schema.py", "validate"), ("tomllib.py", "loads")),
              {"SVC_STRICT": "1"}),
        ),
    ),
    RecordTemplate(
        "p16-evidence-gap",
        F.RUNTIME_EVIDENCE_GAP,
        "process exited silently with code one and no output captured",
        "logging disabled and stderr swallowed so runtime evidence is missing",
        (
            V("a", "re-enable logging and capture stderr",
              "python worker.py --quiet", ("worker.py",),
              (("worker.py", "main"), ("logging/__init__.py", "disable")),
              {"LOG_LEVEL": "CRITICAL"}),
            V("b", "set PYTHONUNBUFFERED=1 and read journalctl",
              "systemctl start app", ("/etc/systemd/system/app.service",),
              (("app/daemon.py", "run_forever"), ("subprocess.py", "run")),
              {"PYTHONUNBUFFERED": "0"}),
        ),
    ),
)

# Five confusable pairs, used in both directions: (decoy record, true record).
CONFUSABLE_PAIRS: tuple[tuple[str, str], ...] = (
    ("p02-sqlite-lock", "p04-stale-migration"),
    ("p05-wrong-venv", "p06-wrong-pythonpath"),
    ("p15-invalid-config-key", "p14-missing-backup"),
    ("p08-retrieval-fp", "p09-rejected-reuse"),
    ("p11-outdated-variant", "p12-migration-order"),
)

DIRECTED_PAIRS: tuple[tuple[str, str], ...] = tuple(
    p for a, b in CONFUSABLE_PAIRS for p in ((a, b), (b, a))
)

CONFUSABLE_RECORDS = frozenset(r for pair in CONFUSABLE_PAIRS for r in pair)

# Synonyms for paraphrase substitution; keys are lowercase words.
SYNONYMS: dict[str, str] = {
    "address": "endpoint",
    "binding": "attaching",
    "running": "alive",
    "socket": "listener",
    "locked": "busy",
    "lingering": "leftover",
    "connection": "handle",
    "transaction": "txn",
    "table": "relation",
    "initialized": "bootstrapped",
    "column": "field",
    "outdated": "behind",
    "upgrade": "bump",
    "module": "package",
    "virtualenv": "venv",
    "interpreter": "python",
    "installed": "present",
    "omits": "skips",
    "layout": "tree",
    "lockfile": "pinfile",
    "mismatch": "drift",
    "regenerating": "refreshing",
    "unrelated": "foreign",
    "similarity": "likeness",
    "rejected": "refused",
    "declined": "dismissed",
    "environment": "env",
    "unset": "empty",
    "deprecated": "retired",
    "superseded": "replaced",
    "diverged": "forked",
    "merge": "join",
    "corrupted": "damaged",
    "reading": "loading",
    "interrupted": "aborted",
    "missing": "absent",
    "configuration": "config",
    "renamed": "moved",
    "typo": "misspelling",
    "silently": "quietly",
    "swallowed": "dropped",
    "failed": "broke",
    "error": "fault",
}

# Generic agent chatter inserted by the noise transform.
NOISE_TOKENS: tuple[str, ...] = (
    "retrying", "todo", "hmm", "maybe", "ci", "flaky", "again", "watcher",
    "nightly", "verbose", "attempt", "debug", "trace", "wip", "local", "checkpoint",
)

# Structure for thin or novel contexts that must not match any stored variant.
NOVEL_CONTEXTS: tuple[tuple[str, tuple[str, ...], tuple[tuple[str, str], ...], dict[str, str]], ...] = (
    ("make check", ("lib/core.py",), (("lib/core.py", "dispatch"), ("lib/util.py", "wrap")), {"CI": "1"}),
    ("tox -e py310", ("tox.ini",), (("tox/session.py", "runtest"), ("lib/plugin.py", "hook")), {"TOXENV": "py310"}),
    ("nox -s lint", ("noxfile.py",), (("noxfile.py", "lint"), ("lib/checks.py", "walk")), {"NOX_SESSION": "lint"}),
    ("just serve", ("justfile",), (("tools/serve.py", "loop"), ("tools/io.py", "pump")), {"JUST_TARGET": "serve"}),
)
