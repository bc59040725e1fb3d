"""Polite HTTP access shared by the registry and publisher harvesters."""

from __future__ import annotations

import logging
import os
import threading
import time
from dataclasses import dataclass
from typing import Callable, Optional

import requests

from . import __version__
from .errors import TransportError

logger = logging.getLogger(__name__)

RETRY_STATUSES = frozenset({429, 500, 502, 503, 504})
# waits shorter than this are float residue, not time left to wait
_CLOCK_EPSILON = 1e-9


class RateLimiter:
    """Admit at most ``rate`` requests per second, one at a time.

    Admission is serialized under a lock and successive admissions are spaced
    by at least ``1 / rate`` seconds on ``clock``, so no half-open window of
    one second ever holds more than ``ceil(rate)`` admissions.
    """

    def __init__(
        self,
        rate: float = 1.0,
        clock: Callable[[], float] = time.monotonic,
        sleep: Callable[[float], None] = time.sleep,
    ):
        if rate <= 0:
            raise ValueError("rate must be positive")
        self.interval = 1.0 / rate
        self._clock = clock
        self._sleep = sleep
        self._lock = threading.Lock()
        self._last: Optional[float] = None

    def acquire(self) -> float:
        """Block until a request may go out; return the admission time."""
        with self._lock:
            now = self._clock()
            if self._last is not None:
                wait = self._last + self.interval - now
                while wait > _CLOCK_EPSILON:
                    self._sleep(wait)
                    now = self._clock()
                    wait = self._last + self.interval - now
            self._last = now
            return now


def default_user_agent(contact: Optional[str] = None) -> str:
    contact = contact or os.environ.get("REFAUDIT_CONTACT")
    agent = f"refaudit/{__version__} (reference metadata audit"
    if contact:
        agent += f"; mailto:{contact}"
    return agent + ")"


@dataclass(frozen=True)
class HttpResponse:
    status: int
    body: bytes
    url: str


class HttpClient:
    """GET with a shared rate limiter and exponential backoff on 429/5xx."""

    def __init__(
        self,
        limiter: Optional[RateLimiter] = None,
        session: Optional[requests.Session] = None,
        user_agent: Optional[str] = None,
        retries: int = 3,
        backoff: float = 1.0,
        timeout: float = 30.0,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.limiter = limiter or RateLimiter()
        self.session = session or requests.Session()
        self.user_agent = user_agent or default_user_agent()
        self.retries = retries
        self.backoff = backoff
        self.timeout = timeout
        self._sleep = sleep
        self.request_count = 0

    def get(self, url: str, params: Optional[dict] = None) -> HttpResponse:
        last_error: Optional[str] = None
        for attempt in range(self.retries + 1):
            if attempt:
                delay = self.backoff * 2 ** (attempt - 1)
                logger.info("retrying %s in %.1fs (%s)", url, delay, last_error)
                self._sleep(delay)
            self.limiter.acquire()
            self.request_count += 1
            try:
                resp = self.session.get(
                    url,
                    params=params,
                    headers={"User-Agent": self.user_agent},
                    timeout=self.timeout,
                )
            except requests.RequestException as exc:
                last_error = f"{type(exc).__name__}: {exc}"
                continue
            if resp.status_code in RETRY_STATUSES:
                last_error = f"HTTP {resp.status_code}"
                continue
            return HttpResponse(resp.status_code, resp.content, url)
        raise TransportError(f"GET {url} failed after {self.retries + 1} attempts: {last_error}")
