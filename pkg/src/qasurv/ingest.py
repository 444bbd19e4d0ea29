"""Stack Exchange Posts dump ingestion.

``parse_dump`` streams ``<row>`` elements with expat so memory stays flat
regardless of dump size. ``ingest_dump`` makes two passes over a Posts file:
the first indexes answer timestamps, per-user posting history and per-tag
answerer sets; the second turns every question into a :class:`FeatureRow`.
"""

from __future__ import annotations

import bisect
import csv
import hashlib
import io
import logging
import math
import random
import re
from collections import Counter, defaultdict
from dataclasses import asdict, dataclass, field, fields
from datetime import datetime
from html.parser import HTMLParser
from pathlib import Path
from typing import Iterable, Iterator, Mapping, Optional
from xml.parsers import expat

from .errors import DumpParseError, InvalidInputError, InvalidRowError, SchemaError

log = logging.getLogger(__name__)

CSV_HEADER = ("question_id", "site", "tanswer", "solved", "bodylength", "titlelength",
              "hasexample", "tagscount", "sumpeople", "zscore")
AUDIENCE_WINDOW = "whole-dump distinct answerers per tag"
_POST_TYPES = {"1": "question", "2": "answer"}
_TAG_RE = re.compile(r"<([^<>]+)>")


@dataclass(frozen=True)
class RawPost:
    id: int
    post_type: str
    creation: datetime
    accepted_answer_id: Optional[int] = None
    parent_id: Optional[int] = None
    owner_user_id: Optional[int] = None
    title: Optional[str] = None
    body: Optional[str] = None
    tags: tuple = ()
    closed: bool = False


@dataclass(frozen=True)
class FeatureRow:
    question_id: int
    site: str
    tanswer: float
    solved: bool
    bodylength: int
    titlelength: int
    hasexample: bool
    tagscount: int
    sumpeople: int
    zscore: float


def parse_timestamp(text: str) -> datetime:
    """Parse a dump timestamp such as ``2013-03-01T12:34:56.789`` (UTC)."""
    text = text.strip().rstrip("Z")
    if "." in text:
        head, frac = text.split(".", 1)
        text = f"{head}.{frac[:6].ljust(6, '0')}"
    return datetime.fromisoformat(text)


def parse_tags(text: Optional[str]) -> tuple:
    if not text:
        return ()
    if "<" in text:
        return tuple(_TAG_RE.findall(text))
    # newer dumps use |tag1|tag2|
    return tuple(t for t in text.split("|") if t)


def _opt_int(attrs, key):
    value = attrs.get(key)
    return int(value) if value not in (None, "") else None


@dataclass
class ParseStats:
    rows: int = 0
    skipped: int = 0


def parse_dump(stream, stats: Optional[ParseStats] = None,
               chunk_size: int = 1 << 16) -> Iterator[RawPost]:
    """Yield :class:`RawPost` records from a Posts XML byte stream.

    Rows missing ``Id``, ``PostTypeId`` or ``CreationDate`` (or carrying
    unparseable values) are skipped with a warning and counted in
    ``stats.skipped``. Malformed XML raises :class:`DumpParseError`.
    """
    stats = stats if stats is not None else ParseStats()
    pending = []
    parser = expat.ParserCreate()
    parser.buffer_text = True

    def start(name, attrs):
        if name != "row":
            return
        stats.rows += 1
        try:
            post = RawPost(
                id=int(attrs["Id"]),
                post_type=_POST_TYPES.get(attrs["PostTypeId"], "other"),
                creation=parse_timestamp(attrs["CreationDate"]),
                accepted_answer_id=_opt_int(attrs, "AcceptedAnswerId"),
                parent_id=_opt_int(attrs, "ParentId"),
                owner_user_id=_opt_int(attrs, "OwnerUserId"),
                title=attrs.get("Title"),
                body=attrs.get("Body"),
                tags=parse_tags(attrs.get("Tags")),
                closed=bool(attrs.get("ClosedDate")),
            )
        except (KeyError, ValueError) as exc:
            stats.skipped += 1
            log.warning("skipping row %s at byte %d: %s", attrs.get("Id", "?"),
                        parser.CurrentByteIndex, exc)
            return
        pending.append(post)

    parser.StartElementHandler = start

    def feed(data, final=False):
        try:
            parser.Parse(data, final)
        except expat.ExpatError as exc:
            raise DumpParseError(expat.ErrorString(exc.code), parser.ErrorByteIndex) from None

    while True:
        chunk = stream.read(chunk_size)
        if not chunk:
            break
        feed(chunk)
        yield from pending
        pending.clear()
    feed(b"", final=True)
    yield from pending
    pending.clear()


def minutes_between(start: datetime, end: datetime) -> float:
    return (end - start).total_seconds() / 60.0


def compute_event(question: RawPost, answers: Mapping[int, datetime], snapshot: datetime):
    """Resolution time in minutes and whether it was observed.

    A question is resolved when its accepted answer can be found; otherwise
    it is right-censored at ``snapshot``. Raises :class:`InvalidRowError`
    when the accepted answer predates (or equals) the question.
    """
    if snapshot < question.creation:
        raise InvalidInputError("snapshot precedes question creation")
    accepted = question.accepted_answer_id
    if accepted is not None and accepted in answers:
        answered = answers[accepted]
        if answered <= question.creation:
            raise InvalidRowError(f"question {question.id}: accepted answer predates question")
        return minutes_between(question.creation, answered), True
    return minutes_between(question.creation, snapshot), False


class _TextExtractor(HTMLParser):
    def __init__(self):
        super().__init__(convert_charrefs=True)
        self.parts = []
        self.has_code = False

    def handle_starttag(self, tag, attrs):
        if tag in ("pre", "code"):
            self.has_code = True

    def handle_data(self, data):
        self.parts.append(data)


def strip_html(markup: str):
    """Visible text of an HTML fragment and whether it holds pre/code blocks."""
    parser = _TextExtractor()
    parser.feed(markup)
    parser.close()
    return "".join(parser.parts), parser.has_code


def printable_length(text: str) -> int:
    return sum(1 for ch in text if ch.isprintable() or ch.isspace())


class AuthorHistory:
    """Per-user creation times of questions and answers."""

    def __init__(self):
        self._questions = defaultdict(list)
        self._answers = defaultdict(list)
        self._sorted = True

    def add(self, post: RawPost):
        if post.owner_user_id is None:
            return
        if post.post_type == "question":
            self._questions[post.owner_user_id].append(post.creation)
        elif post.post_type == "answer":
            self._answers[post.owner_user_id].append(post.creation)
        else:
            return
        self._sorted = False

    def _sort(self):
        if not self._sorted:
            for lists in (self._questions, self._answers):
                for times in lists.values():
                    times.sort()
            self._sorted = True

    def counts_before(self, user_id, when: datetime):
        """``(answers, questions)`` the user posted strictly before ``when``."""
        if user_id is None:
            return 0, 0
        self._sort()
        a = bisect.bisect_left(self._answers.get(user_id, []), when)
        q = bisect.bisect_left(self._questions.get(user_id, []), when)
        return a, q


def zscore(answers: int, questions: int) -> float:
    """Answer/question balance ``(a - q) / sqrt(a + q)``; 0 with no history."""
    total = answers + questions
    return 0.0 if total == 0 else (answers - questions) / math.sqrt(total)


class TagAudience(dict):
    """tag -> number of distinct users who answered a question with that tag."""

    def sumpeople(self, tags) -> int:
        return sum(self.get(t, 0) for t in tags)


class AudienceCounter:
    """Incremental builder for :class:`TagAudience`; answers may precede
    their question in document order."""

    def __init__(self):
        self.question_tags = {}
        self.answerers = set()

    def add(self, post: RawPost):
        if post.post_type == "question":
            self.question_tags[post.id] = post.tags
        elif post.post_type == "answer" and post.owner_user_id is not None \
                and post.parent_id is not None:
            self.answerers.add((post.parent_id, post.owner_user_id))

    def result(self) -> TagAudience:
        users = defaultdict(set)
        for tags in self.question_tags.values():
            for tag in tags:
                users[tag]
        for parent, owner in self.answerers:
            for tag in self.question_tags.get(parent, ()):
                users[tag].add(owner)
        return TagAudience({tag: len(u) for tag, u in sorted(users.items())})


def build_audience(posts: Iterable[RawPost]) -> TagAudience:
    counter = AudienceCounter()
    for post in posts:
        counter.add(post)
    return counter.result()


def extract_features(question: RawPost, audience: TagAudience, history: AuthorHistory,
                     *, site: str = "", event=(0.0, False)) -> FeatureRow:
    """Compute the six model covariates of a question.

    ``event`` is the ``(tanswer, solved)`` pair from :func:`compute_event`.
    Rows with a missing or empty title/body, or with no answering audience
    (whose log is undefined downstream), raise :class:`InvalidRowError`.
    """
    if question.post_type != "question":
        raise InvalidInputError(f"post {question.id} is not a question")
    if question.closed:
        raise InvalidInputError(f"question {question.id} is closed")
    if question.title is None or question.body is None:
        raise InvalidRowError(f"question {question.id}: missing title or body")
    body_text, has_code = strip_html(question.body)
    title_text, _ = strip_html(question.title)
    bodylength = printable_length(body_text)
    titlelength = printable_length(title_text)
    if bodylength < 1 or titlelength < 1:
        raise InvalidRowError(f"question {question.id}: empty title or body")
    sumpeople = audience.sumpeople(question.tags)
    if sumpeople < 1:
        raise InvalidRowError(f"question {question.id}: tags have no answerers")
    a, q = history.counts_before(question.owner_user_id, question.creation)
    tanswer, solved = event
    return FeatureRow(
        question_id=question.id, site=site, tanswer=float(tanswer), solved=bool(solved),
        bodylength=bodylength, titlelength=titlelength, hasexample=has_code,
        tagscount=len(question.tags), sumpeople=sumpeople, zscore=zscore(a, q),
    )


def sample_questions(rows, n: int, seed: int):
    """Uniform sample without replacement, kept in input order."""
    if n < 1:
        raise InvalidInputError("sample size must be at least 1")
    rows = list(rows)
    if n >= len(rows):
        return rows
    picked = sorted(random.Random(seed).sample(range(len(rows)), n))
    return [rows[i] for i in picked]


@dataclass
class IngestCounters:
    rows_parsed: int = 0
    rows_skipped: int = 0
    questions: int = 0
    excluded_closed: int = 0
    excluded_invalid: int = 0
    emitted: int = 0
    sampled: int = 0
    invalid_reasons: dict = field(default_factory=dict)


def _open(path):
    return open(path, "rb")


def file_sha256(path) -> str:
    h = hashlib.sha256()
    with _open(path) as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def ingest_dump(path, site: str, *, sample: Optional[int] = None, seed: int = 0):
    """Run the full pipeline on a Posts file.

    Returns ``(rows, metadata)``; validity filtering happens before
    sampling.
    """
    path = Path(path)
    stats = ParseStats()
    answers = {}
    history = AuthorHistory()
    audience_counter = AudienceCounter()
    snapshot = None
    with _open(path) as fh:
        for post in parse_dump(fh, stats):
            if snapshot is None or post.creation > snapshot:
                snapshot = post.creation
            if post.post_type == "answer":
                answers[post.id] = post.creation
            history.add(post)
            audience_counter.add(post)
    audience = audience_counter.result()

    counters = IngestCounters(rows_parsed=stats.rows, rows_skipped=stats.skipped)
    reasons = Counter()
    rows = []
    with _open(path) as fh:
        for post in parse_dump(fh):
            if post.post_type != "question":
                continue
            counters.questions += 1
            if post.closed:
                counters.excluded_closed += 1
                continue
            try:
                event = compute_event(post, answers, snapshot)
                if event[0] <= 0:
                    raise InvalidRowError(f"question {post.id}: non-positive duration")
                rows.append(extract_features(post, audience, history, site=site, event=event))
            except InvalidRowError as exc:
                counters.excluded_invalid += 1
                reasons[_reason(str(exc))] += 1
    counters.emitted = len(rows)
    counters.invalid_reasons = dict(sorted(reasons.items()))
    if sample is not None:
        rows = sample_questions(rows, sample, seed)
    counters.sampled = len(rows)

    tagscounts = [r.tagscount for r in rows]
    metadata = {
        "site": site,
        "source": path.name,
        "sha256": file_sha256(path),
        "snapshot": snapshot.isoformat() if snapshot else None,
        "counters": asdict(counters),
        "audience_window": AUDIENCE_WINDOW,
        "seed": seed,
        "sample": sample,
        "tagscount_range": [min(tagscounts), max(tagscounts)] if tagscounts else None,
    }
    return rows, metadata


def _reason(message: str) -> str:
    return message.split(": ", 1)[-1]


def format_row(row: FeatureRow):
    return [str(row.question_id), row.site, f"{row.tanswer:.4f}", str(int(row.solved)),
            str(row.bodylength), str(row.titlelength), str(int(row.hasexample)),
            str(row.tagscount), str(row.sumpeople), repr(float(row.zscore))]


def write_features_csv(rows, target):
    """Write rows in the fixed CSV layout to a path or text stream."""
    if isinstance(target, (str, Path)):
        with open(target, "w", encoding="utf-8", newline="") as fh:
            return write_features_csv(rows, fh)
    writer = csv.writer(target, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for row in rows:
        writer.writerow(format_row(row))


def read_features_csv(source):
    """Read a feature CSV into a list of :class:`FeatureRow`."""
    if isinstance(source, (str, Path)):
        with open(source, encoding="utf-8", newline="") as fh:
            return read_features_csv(fh)
    reader = csv.DictReader(source)
    missing = set(CSV_HEADER) - set(reader.fieldnames or ())
    if missing:
        raise SchemaError(f"feature CSV lacks columns: {sorted(missing)}")
    out = []
    for rec in reader:
        try:
            out.append(FeatureRow(
                question_id=int(rec["question_id"]), site=rec["site"],
                tanswer=float(rec["tanswer"]), solved=rec["solved"] == "1",
                bodylength=int(rec["bodylength"]), titlelength=int(rec["titlelength"]),
                hasexample=rec["hasexample"] == "1", tagscount=int(rec["tagscount"]),
                sumpeople=int(rec["sumpeople"]), zscore=float(rec["zscore"]),
            ))
        except (TypeError, ValueError) as exc:
            raise InvalidInputError(f"bad feature row {rec.get('question_id')!r}: {exc}") from None
    return out


def feature_columns(rows):
    """Column-wise view of feature rows as plain lists."""
    return {f.name: [getattr(r, f.name) for r in rows] for f in fields(FeatureRow)}


def features_to_csv_text(rows) -> str:
    buf = io.StringIO()
    write_features_csv(rows, buf)
    return buf.getvalue()
