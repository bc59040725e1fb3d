from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import pytest

import synthetic
from refaudit.cli import main
from refaudit.model import Doi, ReferenceRecord, StructuredFields

FIXTURES = Path(__file__).parent / "fixtures"
FIXED_CLOCK = "2023-01-31T00:00:00+00:00"
PUBIDS = tuple(synthetic.JOURNALS)


def fixture_name(doi: str, suffix: str) -> str:
    return doi.replace("/", "%2F") + suffix


def ref(raw: str, **fields) -> ReferenceRecord:
    return ReferenceRecord(raw, StructuredFields(**fields) if fields else None)


@dataclass(frozen=True)
class FullRun:
    root: Path
    cache: Path
    export: Path
    out: Path
    model: synthetic.Corpus
    exit_code: int

    def argv(self, command: str, out: Path | None = None) -> list[str]:
        return [
            command,
            "--cache-dir", str(self.cache),
            "--out", str(out or self.out),
            "--offline",
            "--dimensions-export", str(self.export),
            "--fixed-clock", FIXED_CLOCK,
            "--corpus-id", "technoscience",
        ]


@pytest.fixture(scope="session")
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture(scope="session")
def synthetic_model() -> synthetic.Corpus:
    return synthetic.build_model()


@pytest.fixture(scope="session")
def full_run(tmp_path_factory, synthetic_model) -> FullRun:
    """The whole synthetic corpus written as a cache, inventoried and audited offline once."""
    root = tmp_path_factory.mktemp("full")
    synthetic.write_corpus(root, synthetic_model)
    run = FullRun(root, root / "cache", root / "export.csv", root / "out", synthetic_model, -1)
    argv = run.argv("inventory")
    for pubid in PUBIDS:
        argv += ["--pubid", pubid]
    assert main(argv) == 0
    code = main(run.argv("audit"))
    return FullRun(run.root, run.cache, run.export, run.out, run.model, code)


@pytest.fixture
def running_example() -> Doi:
    return Doi(synthetic.RUNNING_EXAMPLE)


class FakeResponse:
    def __init__(self, status_code: int, content: bytes = b""):
        self.status_code = status_code
        self.content = content


class FakeSession:
    """Stands in for ``requests.Session``; replies from a script keyed by URL substring."""

    def __init__(self, routes: dict[str, list] | None = None, default: FakeResponse | None = None):
        self.routes = {k: list(v) for k, v in (routes or {}).items()}
        self.default = default or FakeResponse(404)
        self.calls: list[tuple[str, dict | None]] = []

    def get(self, url, params=None, headers=None, timeout=None):
        self.calls.append((url, params))
        for fragment, replies in self.routes.items():
            if fragment in url:
                reply = replies.pop(0) if len(replies) > 1 else replies[0]
                if isinstance(reply, Exception):
                    raise reply
                return reply
        return self.default


def no_wait_http(session: FakeSession, retries: int = 3):
    from refaudit.http import HttpClient, RateLimiter

    clock = [0.0]

    def sleep(seconds: float) -> None:
        clock[0] += seconds

    limiter = RateLimiter(1000.0, clock=lambda: clock[0], sleep=sleep)
    return HttpClient(limiter, session=session, retries=retries, sleep=sleep)
