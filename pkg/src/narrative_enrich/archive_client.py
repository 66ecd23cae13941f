"""Best-effort client for a public digital-library HTTP API.

Locates candidate narrative texts for a person name and downloads the
plain-text rendition of a chosen item. Name ambiguity is a human problem: the
CLI surfaces the candidate list and a person picks one; nothing here tries to
disambiguate automatically.

All requests go through a module-level token bucket (default 1 request/s) to
stay polite to the remote service. The base URL comes from
``NARRATIVE_ENRICH_ARCHIVE_BASE`` when set, which is how the test suite points
the client at a local fixture server; no test requires live network.
"""

from __future__ import annotations

import os
import threading
import time
from dataclasses import dataclass

import requests

from .errors import ArchiveError

ENV_ARCHIVE_BASE = "NARRATIVE_ENRICH_ARCHIVE_BASE"
DEFAULT_BASE = "https://archive.org"


class TokenBucket:
    """Minimal rate limiter: at most ``rate`` acquisitions per second."""

    def __init__(self, rate: float = 1.0):
        self.interval = 1.0 / rate
        self._lock = threading.Lock()
        self._next_free = 0.0

    def acquire(self) -> None:
        with self._lock:
            now = time.monotonic()
            wait = self._next_free - now
            self._next_free = max(now, self._next_free) + self.interval
        if wait > 0:
            time.sleep(wait)


_bucket = TokenBucket(rate=float(os.environ.get("NARRATIVE_ENRICH_ARCHIVE_RATE", "1")))


@dataclass(frozen=True)
class ArchiveItem:
    identifier: str
    title: str
    has_text: bool
    text_url: str | None = None

    def __post_init__(self) -> None:
        if self.has_text != (self.text_url is not None):
            raise ValueError("text_url must be present exactly when has_text")


def _is_plain_text(file_record: dict) -> bool:
    name = file_record.get("name", "")
    fmt = file_record.get("format", "")
    return name.endswith(".txt") or fmt in ("DjVuTXT", "Text")


class ArchiveClient:
    """Stateless HTTP client; safe for concurrent searches."""

    def __init__(self, base_url: str | None = None, timeout: float = 30.0):
        self.base_url = (
            base_url or os.environ.get(ENV_ARCHIVE_BASE) or DEFAULT_BASE
        ).rstrip("/")
        self.timeout = timeout

    def _get(self, url: str, params: dict | None = None) -> requests.Response:
        _bucket.acquire()
        last_exc: Exception | None = None
        for _ in range(2):  # single retry on transient failure
            try:
                resp = requests.get(url, params=params, timeout=self.timeout)
                if resp.status_code == 200:
                    return resp
                last_exc = ArchiveError(f"HTTP {resp.status_code} from {url}")
            except requests.RequestException as exc:
                last_exc = exc
        raise ArchiveError(f"request to {url} failed: {last_exc}")

    def _item_text_url(self, identifier: str) -> str | None:
        """Largest plain-text file of an item, if any."""
        resp = self._get(f"{self.base_url}/metadata/{identifier}")
        try:
            files = resp.json().get("files", [])
        except ValueError as exc:
            raise ArchiveError(f"malformed metadata for {identifier}: {exc}") from exc
        texts = [f for f in files if _is_plain_text(f)]
        if not texts:
            return None
        best = max(texts, key=lambda f: int(f.get("size", 0) or 0))
        return f"{self.base_url}/download/{identifier}/{best['name']}"

    def search_person(self, name: str, max_results: int = 10) -> list[ArchiveItem]:
        """Search the library for a person name restricted to text media.

        Items come back in the remote API's order; ``has_text`` reflects
        whether the item's file listing contains a plain-text file. Zero
        results is an empty list, not an error.
        """
        if not name.strip():
            raise ValueError("name must be non-empty")
        resp = self._get(
            f"{self.base_url}/advancedsearch.php",
            params={
                "q": f'"{name}" AND mediatype:(texts)',
                "fl[]": ["identifier", "title"],
                "rows": max_results,
                "output": "json",
            },
        )
        try:
            docs = resp.json()["response"]["docs"]
        except (ValueError, KeyError) as exc:
            raise ArchiveError(f"malformed search response: {exc}") from exc
        items: list[ArchiveItem] = []
        for doc in docs[:max_results]:
            identifier = doc["identifier"]
            text_url = self._item_text_url(identifier)
            items.append(
                ArchiveItem(
                    identifier=identifier,
                    title=doc.get("title", identifier),
                    has_text=text_url is not None,
                    text_url=text_url,
                )
            )
        return items

    def fetch_first_text(self, items) -> tuple[str, str]:
        """Download the first item that has a plain-text rendition.

        Returns (identifier, text); raises ArchiveError when no item has text
        or the download fails.
        """
        for item in items:
            if item.has_text:
                resp = self._get(item.text_url)
                return item.identifier, resp.content.decode("utf-8", errors="replace")
        raise ArchiveError("no text item among the candidates")
