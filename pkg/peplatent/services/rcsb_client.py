"""RCSB full-sequence fetch client with an on-disk FASTA cache"""
from pathlib import Path
from typing import Dict, Iterable, Optional, Union
import logging
import re
import threading

import httpx

from peplatent.config import settings
from peplatent.errors import CacheMissError, FetchError, InvalidArgumentError
from peplatent.services.fasta import parse_fasta_text
from peplatent.utils.parallel import ordered_map
from peplatent.utils.workspace import atomic_write_text, get_cache_dir

logger = logging.getLogger(__name__)

PDB_ID_PATTERN = re.compile(r"^[0-9A-Za-z]{4}$")


def normalize_pdb_id(pdb_id: str) -> str:
    """
    Raises:
        InvalidArgumentError: If the id is not 4 alphanumeric characters
    """
    if not PDB_ID_PATTERN.match(pdb_id or ""):
        raise InvalidArgumentError(f"malformed PDB id {pdb_id!r}; expected 4 alphanumeric characters")
    return pdb_id.upper()


class RcsbClient:
    """Fetches entry FASTA files from RCSB, one cache file per PDB id"""

    def __init__(
        self,
        cache_dir: Optional[Union[str, Path]] = None,
        offline: bool = False,
        base_url: Optional[str] = None,
        timeout: Optional[float] = None,
        transport: Optional[httpx.BaseTransport] = None,
    ):
        """
        Args:
            cache_dir: Cache root; defaults to settings.cache_dir
            offline: Serve from cache only and never touch the network
            base_url: Entry endpoint; defaults to settings.rcsb_base_url
            timeout: Request timeout in seconds
            transport: Optional httpx transport (tests pass a MockTransport)
        """
        self.cache_dir = get_cache_dir(cache_dir)
        self.offline = offline
        self.base_url = (base_url or settings.rcsb_base_url).rstrip("/")
        self.client = httpx.Client(
            timeout=timeout if timeout is not None else settings.http_timeout,
            transport=transport,
            follow_redirects=True,
        )
        self._locks: Dict[str, threading.Lock] = {}
        self._locks_guard = threading.Lock()

    def close(self) -> None:
        self.client.close()

    def __enter__(self) -> "RcsbClient":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    def cache_path(self, pdb_id: str) -> Path:
        return self.cache_dir / f"{normalize_pdb_id(pdb_id)}.fasta"

    def _lock_for(self, pdb_id: str) -> threading.Lock:
        with self._locks_guard:
            return self._locks.setdefault(pdb_id, threading.Lock())

    def _download(self, pdb_id: str) -> str:
        url = f"{self.base_url}/{pdb_id}"
        logger.info(f"Fetching {url}")
        try:
            response = self.client.get(url)
        except httpx.HTTPError as e:
            logger.error(f"Request for {pdb_id} failed: {e}")
            raise FetchError(f"request for {pdb_id} failed: {e}") from e
        if response.status_code != 200:
            logger.error(f"RCSB returned HTTP {response.status_code} for {pdb_id}")
            raise FetchError(f"RCSB returned HTTP {response.status_code} for {pdb_id}", status=response.status_code)
        return response.text

    def fetch_fasta(self, pdb_id: str) -> Dict[str, str]:
        """
        Returns the chain sequences of one entry, keyed by FASTA header token.

        A cache hit never touches the network. A miss downloads the entry
        and writes it to cache_dir/{PDB_ID}.fasta.

        Raises:
            InvalidArgumentError: On a malformed id
            CacheMissError: In offline mode when the id is not cached
            FetchError: On a non-200 response or a transport failure
        """
        pdb_id = normalize_pdb_id(pdb_id)
        path = self.cache_path(pdb_id)
        with self._lock_for(pdb_id):
            if path.exists():
                logger.debug(f"Cache hit for {pdb_id}")
                return parse_fasta_text(path.read_text(encoding="utf-8"))
            if self.offline:
                raise CacheMissError(f"{pdb_id} is not cached in {self.cache_dir} and offline mode is on")
            text = self._download(pdb_id)
            sequences = parse_fasta_text(text)
            atomic_write_text(path, text)
        logger.info(f"Cached {pdb_id} ({len(sequences)} chains)")
        return sequences

    def fetch_many(self, pdb_ids: Iterable[str], threads: int = 1) -> Dict[str, Dict[str, str]]:
        """Fetches several entries; ids are processed in parallel, results keyed in input order"""
        ids = [normalize_pdb_id(i) for i in pdb_ids]
        results = ordered_map(self.fetch_fasta, ids, threads)
        return dict(zip(ids, results))


def fetch_rcsb_fasta(
    pdb_id: str,
    cache_dir: Optional[Union[str, Path]] = None,
    offline: bool = False,
) -> Dict[str, str]:
    """One-shot fetch through a temporary client"""
    with RcsbClient(cache_dir=cache_dir, offline=offline) as client:
        return client.fetch_fasta(pdb_id)
