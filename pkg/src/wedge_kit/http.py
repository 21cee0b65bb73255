"""HTTP utilities for fetching external image corpora."""

from __future__ import annotations

import hashlib
import logging
import os
from pathlib import Path

import requests
from requests import Session, exceptions as req_exc
from tenacity import (
    retry,
    retry_if_exception,
    stop_after_attempt,
    wait_exponential,
    wait_random,
)

# Module logger
logger = logging.getLogger(__name__)

# Default timeout for HTTP requests (connect, read)
DEFAULT_TIMEOUT: tuple[float, float] = (5.0, 30.0)

# Default headers; image payloads only
DEFAULT_HEADERS: dict[str, str] = {
    "User-Agent": "wedge-kit/0.1 (+corpus fetcher)",
    "Accept": "image/png,image/*;q=0.8",
}

# HTTP status codes that should trigger a retry
STATUS_FOR_RETRY = {429, 500, 502, 503, 504}

# Environment variable overriding the download cache
CACHE_ENV_VAR = "WEDGE_KIT_CACHE"
DEFAULT_CACHE_DIR = Path.home() / ".cache" / "wedge-kit"


def build_session() -> requests.Session:
    """Build a requests.Session with the fetcher's default headers."""
    session = requests.Session()
    session.headers.update(DEFAULT_HEADERS)
    logger.debug("Built session with default headers: %s", DEFAULT_HEADERS)
    return session


def cache_dir() -> Path:
    """Download cache directory, ``$WEDGE_KIT_CACHE`` when set."""
    override = os.getenv(CACHE_ENV_VAR)
    return Path(override) if override else DEFAULT_CACHE_DIR


def cache_path(url: str, root: Path | None = None) -> Path:
    """Cache location of ``url``, keyed by the SHA-256 of the URL."""
    digest = hashlib.sha256(url.encode("utf-8")).hexdigest()
    return (root or cache_dir()) / digest[:2] / digest


def _is_transient(exc: Exception) -> bool:
    """Whether a failed image download is worth another attempt.

    Connection drops, timeouts and throttling or server-side statuses are; a 404 or a
    malformed URL is not.
    """
    if isinstance(exc, (req_exc.ConnectionError, req_exc.Timeout)):
        return True
    if isinstance(exc, req_exc.HTTPError) and getattr(exc, "response", None) is not None:
        return exc.response.status_code in STATUS_FOR_RETRY
    return False


# Three attempts per record with jittered backoff
_download_retry = {
    "reraise": True,
    "stop": stop_after_attempt(3),
    "wait": wait_exponential(multiplier=0.5, max=8) + wait_random(0, 0.5),
    "retry": retry_if_exception(_is_transient),
}


@retry(**_download_retry)
def download(
    url: str,
    session: Session,
    timeout: tuple[float, float] = DEFAULT_TIMEOUT,
) -> bytes:
    """GET the URL and return the response body. Retries transient failures.

    Args:
        url: The URL to fetch
        session: The requests.Session to use for the request
        timeout: Timeout tuple (connect, read) in seconds

    Returns:
        The raw response content

    Raises:
        HTTPError: On non-retriable HTTP errors or after 3 attempts
        RequestException: On other request failures, after 3 attempts for connection errors
    """
    resp = session.get(url, timeout=timeout)
    resp.raise_for_status()
    return resp.content


def fetch_bytes(
    url: str,
    session: Session,
    cache_root: Path | None = None,
    timeout: tuple[float, float] = DEFAULT_TIMEOUT,
) -> bytes:
    """Return the body of ``url``, served from the cache when present.

    Successful downloads are written to the cache; failures propagate without caching.
    """
    cached = cache_path(url, cache_root)
    if cached.exists():
        logger.debug("Cache hit for %s", url)
        return cached.read_bytes()
    payload = download(url, session, timeout=timeout)
    cached.parent.mkdir(parents=True, exist_ok=True)
    tmp = cached.with_suffix(".part")
    tmp.write_bytes(payload)
    tmp.replace(cached)
    logger.debug("Cached %d bytes for %s", len(payload), url)
    return payload
