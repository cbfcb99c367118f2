"""Corpus APK downloader for AndroZoo-compatible endpoints.

Downloads are requested as GET <endpoint>?apikey=...&sha256=... and
verified against the requested digest before landing in the destination
directory as <sha256>.apk.  The run is resumable: files that already
exist with the right digest are skipped, so an interrupted batch can
simply be re-run.  Authentication failures abort immediately; everything
else is retried with backoff and recorded per-sha, never aborting the
batch.

The API key comes from the environment only (ANDROZOO_API_KEY); it is a
credential tied to a signed usage agreement and must not appear in argv
or in stored reports.
"""

from __future__ import annotations

import hashlib
import os
import time
from dataclasses import dataclass, field

import requests

API_KEY_ENV = "ANDROZOO_API_KEY"


class FetchError(Exception):
    pass


class AuthFailure(FetchError):
    """Rejected credentials; retrying cannot help."""


@dataclass
class FetchResult:
    fetched: int = 0
    skipped: int = 0
    failed: int = 0
    failures: list = field(default_factory=list)  # (sha256, reason)


def read_sha_list(path):
    """One lowercase sha256 per line; blanks and # comments ignored."""
    shas = []
    with open(path, "r", encoding="utf-8") as handle:
        for line in handle:
            line = line.strip()
            if line and not line.startswith("#"):
                shas.append(line.lower())
    return shas


def _file_digest(path):
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for block in iter(lambda: handle.read(1 << 20), b""):
            digest.update(block)
    return digest.hexdigest()


def fetch_apks(shas, endpoint, dest, api_key, rate=None, retries=3,
               backoff=0.5, session=None, timeout=60) -> FetchResult:
    """Download each sha into dest, resuming past verified files.

    rate is a requests-per-second ceiling.  Raises AuthFailure on a 401 or
    403 response; per-sha failures (bad status, digest mismatch, transport
    errors after retries) are recorded and the batch continues.
    """
    if not api_key:
        raise AuthFailure("no API key; set %s in the environment" % API_KEY_ENV)
    os.makedirs(dest, exist_ok=True)
    own_session = session is None
    session = session or requests.Session()
    result = FetchResult()
    try:
        for sha in shas:
            target = os.path.join(dest, "%s.apk" % sha)
            if os.path.exists(target) and _file_digest(target) == sha:
                result.skipped += 1
                continue
            if rate:
                time.sleep(1.0 / rate)
            reason = _fetch_one(session, endpoint, api_key, sha, target,
                                retries, backoff, timeout)
            if reason is None:
                result.fetched += 1
            else:
                result.failed += 1
                result.failures.append((sha, reason))
    finally:
        if own_session:
            session.close()
    return result


def _fetch_one(session, endpoint, api_key, sha, target, retries, backoff, timeout):
    last_reason = "no attempt made"
    for attempt in range(retries + 1):
        if attempt:
            time.sleep(backoff * (2 ** (attempt - 1)))
        try:
            response = session.get(endpoint, params={"apikey": api_key, "sha256": sha},
                                   timeout=timeout)
        except requests.RequestException as exc:
            last_reason = "transport error: %s" % exc
            continue
        if response.status_code in (401, 403):
            raise AuthFailure("endpoint rejected the API key (HTTP %d)"
                              % response.status_code)
        if response.status_code >= 500:
            last_reason = "HTTP %d" % response.status_code
            continue
        if response.status_code != 200:
            return "HTTP %d" % response.status_code  # 404 and friends: no retry
        body = response.content
        if hashlib.sha256(body).hexdigest() != sha:
            return "digest mismatch on downloaded payload"
        tmp = target + ".part"
        with open(tmp, "wb") as handle:
            handle.write(body)
        os.replace(tmp, target)
        return None
    return last_reason
