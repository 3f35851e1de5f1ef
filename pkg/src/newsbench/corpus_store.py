"""Daily JSONL persistence for harvested articles plus time-window slices.

Layout under the store root:

    corpus_meta.json          {"schema_version": 1}
    2025-03-22.jsonl          one article object per line, canonical JSON

Day files are replaced atomically (write temp, rename), so a re-harvest of
the same day never leaves readers a torn file.  Slices scan every day file
because a day file may legitimately hold articles published earlier (late
harvests); the published_at field, not the file name, decides membership.
"""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass
from datetime import date, datetime, timedelta
from pathlib import Path

from .errors import PersistenceError
from .feed_ingest import Article
from .io_utils import canonical_json

SCHEMA_VERSION = 1
_META_NAME = "corpus_meta.json"


@dataclass(frozen=True)
class CorpusSlice:
    window_days: int
    as_of: datetime
    articles: list

    def ids(self) -> set:
        return {a.id for a in self.articles}


@dataclass(frozen=True)
class DayHandle:
    path: Path
    day: date
    count: int

    def load(self) -> list:
        return _read_day_file(self.path)


class CorpusStore:
    def __init__(self, root):
        self.root = Path(root)

    def _day_path(self, day: date) -> Path:
        return self.root / f"{day.isoformat()}.jsonl"

    def persist_day(self, articles: list, day: date) -> DayHandle:
        """Write one day's harvest, replacing any previous file for that day."""
        ids = [a.id for a in articles]
        if len(ids) != len(set(ids)):
            raise PersistenceError(f"duplicate article ids in harvest for {day}")
        try:
            self.root.mkdir(parents=True, exist_ok=True)
            self._write_meta()
            target = self._day_path(day)
            fd, tmp = tempfile.mkstemp(dir=self.root, prefix=f".{day.isoformat()}.", suffix=".tmp")
            try:
                with os.fdopen(fd, "w", encoding="utf-8") as fh:
                    for article in articles:
                        fh.write(canonical_json(article.to_dict()) + "\n")
                os.replace(tmp, target)
            except BaseException:
                if os.path.exists(tmp):
                    os.unlink(tmp)
                raise
        except OSError as exc:
            raise PersistenceError(f"cannot persist day {day} under {self.root}: {exc}") from exc
        return DayHandle(path=target, day=day, count=len(articles))

    def _write_meta(self) -> None:
        meta = self.root / _META_NAME
        if not meta.exists():
            meta.write_text(canonical_json({"schema_version": SCHEMA_VERSION}) + "\n", encoding="utf-8")

    def days(self) -> list:
        """Stored day files, oldest first."""
        out = []
        if not self.root.exists():
            return out
        for path in sorted(self.root.glob("*.jsonl")):
            try:
                day = date.fromisoformat(path.stem)
            except ValueError:
                continue
            out.append(DayHandle(path=path, day=day, count=-1))
        return out

    def slice(self, as_of: datetime, window_days: int) -> CorpusSlice:
        """Articles with published_at in ``(as_of - window_days*24h, as_of]``.

        If an article id appears in several day files (overlapping harvests)
        the copy from the most recent file wins.
        """
        if window_days <= 0:
            raise ValueError("window_days must be positive")
        start = as_of - timedelta(days=window_days)
        by_id: dict = {}
        for handle in self.days():  # oldest first, so later files overwrite
            for article in _read_day_file(handle.path):
                if start < article.published_at <= as_of:
                    by_id[article.id] = article
        articles = sorted(by_id.values(), key=lambda a: a.id)
        articles.sort(key=lambda a: a.published_at, reverse=True)
        return CorpusSlice(window_days=window_days, as_of=as_of, articles=articles)


def _read_day_file(path: Path) -> list:
    articles = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                articles.append(Article.from_dict(json.loads(line)))
    return articles
