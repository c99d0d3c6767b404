"""Counterbalanced review-session apparatus.

A study set holds 8 items, four per class, with AI assistance counterbalanced
across two participant groups: every item is assisted in exactly one group,
each group's assisted subset has two items of each class, and group B's
assisted set is the complement of group A's.  Sessions are persisted through
an append-only per-session event log plus a compacted snapshot, and the
summary applies two narrow outlier exclusions before a paired analysis.
"""

from __future__ import annotations

import csv
import io
import json
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import stats as scipy_stats

from .errors import DataError
from .explain import Explanation, explain
from .pipeline import Pipeline
from .types import Document

GROUPS = ("A", "B")
CONFIDENCE_RANGE = (1, 7)
ITEMS_PER_SESSION = 8
TIME_OUTLIER_FACTOR = 10.0
CONFIDENCE_OUTLIER_GAP = 3


class StudyNotFound(Exception):
    """Unknown session or item (HTTP 404)."""


class StudyConflict(Exception):
    """Lifecycle violation: duplicate response, closed session, missing study (HTTP 409)."""


class StudyBadRequest(Exception):
    """Invalid field value (HTTP 400)."""


@dataclass
class StudyItem:
    item_id: str
    doc_id: str
    text: str
    true_label: str
    assisted_in_group: str  # group that sees the AI assist on this item
    explanation: dict | None = None  # Explanation payload, shown when assisted

    def assist_payload(self) -> dict:
        expl = Explanation.from_dict(self.explanation)
        top = expl.top_evidence
        return {
            "prediction": expl.predicted_class,
            "concept": top.concept,
            "span": [top.span[0], top.span[1]],
            "score": top.score,
        }


@dataclass
class StudySet:
    items: list[StudyItem]
    class_options: list[str]

    def validate(self) -> None:
        if len(self.items) != ITEMS_PER_SESSION:
            raise DataError(f"a study set holds {ITEMS_PER_SESSION} items, got {len(self.items)}")
        labels = sorted({i.true_label for i in self.items})
        if len(labels) != 2:
            raise DataError("study items must span exactly two true classes")
        for label in labels:
            class_items = [i for i in self.items if i.true_label == label]
            if len(class_items) != 4:
                raise DataError(f"class {label!r} needs 4 items, got {len(class_items)}")
            for group in GROUPS:
                assisted = [i for i in class_items if i.assisted_in_group == group]
                if len(assisted) != 2:
                    raise DataError(
                        f"group {group} must be assisted on 2 items of class {label!r}"
                    )
        for item in self.items:
            if item.assisted_in_group not in GROUPS:
                raise DataError(f"item {item.item_id}: bad group {item.assisted_in_group!r}")
            if item.explanation is None:
                raise DataError(f"item {item.item_id} is missing its explanation payload")
        if len({i.item_id for i in self.items}) != ITEMS_PER_SESSION:
            raise DataError("duplicate item ids in study set")

    def item(self, item_id: str) -> StudyItem:
        for it in self.items:
            if it.item_id == item_id:
                return it
        raise StudyNotFound(f"unknown item {item_id!r}")

    def assisted_for(self, group: str) -> set[str]:
        return {i.item_id for i in self.items if i.assisted_in_group == group}

    def to_dict(self) -> dict:
        return {
            "class_options": self.class_options,
            "items": [
                {
                    "item_id": i.item_id,
                    "doc_id": i.doc_id,
                    "text": i.text,
                    "true_label": i.true_label,
                    "assisted_in_group": i.assisted_in_group,
                    "explanation": i.explanation,
                }
                for i in self.items
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "StudySet":
        out = cls(
            items=[StudyItem(**item) for item in data["items"]],
            class_options=list(data["class_options"]),
        )
        out.validate()
        return out


def save_study_set(path: str | Path, study: StudySet) -> None:
    Path(path).write_text(json.dumps(study.to_dict(), sort_keys=True, indent=2) + "\n")


def load_study_set(path: str | Path) -> StudySet:
    path = Path(path)
    if not path.exists():
        raise DataError(f"study set file not found: {path}")
    return StudySet.from_dict(json.loads(path.read_text()))


def build_study_set(
    documents: list[Document],
    pipeline: Pipeline,
    class_pair: tuple[str, str] | None = None,
    split: str = "test",
) -> StudySet:
    """Pick 4 documents of each of two classes and precompute explanations.

    Assistance alternates within each class (first two items go to group A),
    so the counterbalancing invariant holds by construction.
    """
    classes = pipeline.schema.classes
    pool = [d for d in documents if d.split == split and d.label is not None]
    if class_pair is None:
        eligible = [c for c in classes if sum(d.label == c for d in pool) >= 4]
        if len(eligible) < 2:
            raise DataError("need two classes with at least 4 documents each")
        class_pair = (eligible[0], eligible[-1])
    chosen: list[list[Document]] = []
    for label in class_pair:
        docs = sorted((d for d in pool if d.label == label), key=lambda d: d.id)[:4]
        if len(docs) < 4:
            raise DataError(f"class {label!r} has fewer than 4 {split} documents")
        chosen.append(docs)

    items = []
    for pos in range(4):
        for class_idx, docs in enumerate(chosen):
            doc = docs[pos]
            items.append(
                StudyItem(
                    item_id=f"item-{len(items) + 1:02d}",
                    doc_id=doc.id,
                    text=doc.text,
                    true_label=doc.label,
                    assisted_in_group="A" if pos < 2 else "B",
                    explanation=explain(pipeline, doc).to_dict(),
                )
            )
    study = StudySet(items=items, class_options=list(classes))
    study.validate()
    return study


# ---------------------------------------------------------------------------
# Sessions
# ---------------------------------------------------------------------------


@dataclass
class ResponseRecord:
    item_id: str
    label: str
    confidence: int
    elapsed_ms: int
    shown_ai: bool
    server_elapsed_ms: int

    def to_dict(self) -> dict:
        return {
            "item_id": self.item_id,
            "label": self.label,
            "confidence": self.confidence,
            "elapsed_ms": self.elapsed_ms,
            "shown_ai": self.shown_ai,
            "server_elapsed_ms": self.server_elapsed_ms,
        }


@dataclass
class SessionRecord:
    session_id: str
    participant_id: str
    group: str
    seq: int
    responses: dict[str, ResponseRecord] = field(default_factory=dict)
    status: str = "open"
    last_activity: float = 0.0

    def to_dict(self) -> dict:
        return {
            "session_id": self.session_id,
            "participant_id": self.participant_id,
            "group": self.group,
            "status": self.status,
            "responses": {k: v.to_dict() for k, v in sorted(self.responses.items())},
        }


class SessionStore:
    """Crash-safe session persistence: append-only event logs + snapshot."""

    def __init__(self, root: str | Path, study: StudySet, clock=time.time):
        self.root = Path(root)
        self.events_dir = self.root / "events"
        self.events_dir.mkdir(parents=True, exist_ok=True)
        self.snapshot_path = self.root / "snapshot.json"
        self.study = study
        self.clock = clock
        self.sessions: dict[str, SessionRecord] = {}
        self._auto_assigned = 0
        self._next_seq = 1
        self._lock = threading.RLock()
        self._replay()

    # -- persistence --

    def _replay(self) -> None:
        # One file per session, appended in order; file names sort by seq.
        events = []
        for path in sorted(self.events_dir.glob("*.jsonl")):
            for line in path.read_text().splitlines():
                if line.strip():
                    events.append(json.loads(line))
        for event in events:
            if event["event"] == "create":
                record = SessionRecord(
                    session_id=event["session_id"],
                    participant_id=event["participant_id"],
                    group=event["group"],
                    seq=event["seq"],
                    last_activity=event["t"],
                )
                self.sessions[record.session_id] = record
                if event.get("auto"):
                    self._auto_assigned += 1
                self._next_seq = max(self._next_seq, event["seq"] + 1)
            elif event["event"] == "response":
                record = self.sessions[event["session_id"]]
                record.responses[event["item_id"]] = ResponseRecord(
                    item_id=event["item_id"],
                    label=event["label"],
                    confidence=event["confidence"],
                    elapsed_ms=event["elapsed_ms"],
                    shown_ai=event["shown_ai"],
                    server_elapsed_ms=event["server_elapsed_ms"],
                )
                record.last_activity = event["t"]
                if len(record.responses) == len(self.study.items):
                    record.status = "completed"

    def _append_event(self, session_id: str, event: dict) -> None:
        path = self.events_dir / f"{session_id}.jsonl"
        with open(path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(event, sort_keys=True) + "\n")
        tmp = self.snapshot_path.with_suffix(".tmp")
        tmp.write_text(
            json.dumps(
                {sid: s.to_dict() for sid, s in sorted(self.sessions.items())},
                sort_keys=True,
                indent=2,
            )
        )
        tmp.replace(self.snapshot_path)

    # -- API --

    def create_session(self, participant_id: str, group: str | None = None) -> SessionRecord:
        with self._lock:
            if not participant_id or not participant_id.strip():
                raise StudyBadRequest("participant_id must be non-empty")
            auto = group is None
            if auto:
                group = GROUPS[self._auto_assigned % 2]
                self._auto_assigned += 1
            elif group not in GROUPS:
                raise StudyBadRequest(f"group must be one of {GROUPS}, got {group!r}")
            seq = self._next_seq
            self._next_seq += 1
            record = SessionRecord(
                session_id=f"s{seq:04d}",
                participant_id=participant_id,
                group=group,
                seq=seq,
                last_activity=self.clock(),
            )
            self.sessions[record.session_id] = record
            self._append_event(
                record.session_id,
                {
                    "event": "create",
                    "session_id": record.session_id,
                    "participant_id": participant_id,
                    "group": group,
                    "auto": auto,
                    "seq": seq,
                    "t": record.last_activity,
                },
            )
            return record

    def get(self, session_id: str) -> SessionRecord:
        record = self.sessions.get(session_id)
        if record is None:
            raise StudyNotFound(f"unknown session {session_id!r}")
        return record

    def record_response(
        self, session_id: str, item_id: str, label: str, confidence: int, elapsed_ms: int
    ) -> ResponseRecord:
        with self._lock:
            record = self.get(session_id)
            if record.status != "open":
                raise StudyConflict(f"session {session_id} is {record.status}")
            item = self.study.item(item_id)
            if item_id in record.responses:
                raise StudyConflict(f"item {item_id} already answered in {session_id}")
            if label not in self.study.class_options:
                raise StudyBadRequest(f"label must be one of {self.study.class_options}")
            if not isinstance(confidence, int) or not (
                CONFIDENCE_RANGE[0] <= confidence <= CONFIDENCE_RANGE[1]
            ):
                raise StudyBadRequest(
                    f"confidence must be an integer in {CONFIDENCE_RANGE[0]}..{CONFIDENCE_RANGE[1]}"
                )
            if elapsed_ms <= 0:
                raise StudyBadRequest("elapsed_ms must be positive")
            now = self.clock()
            server_elapsed = max(1, int(round((now - record.last_activity) * 1000)))
            response = ResponseRecord(
                item_id=item_id,
                label=label,
                confidence=confidence,
                elapsed_ms=int(elapsed_ms),
                shown_ai=item.assisted_in_group == record.group,
                server_elapsed_ms=server_elapsed,
            )
            record.responses[item_id] = response
            record.last_activity = now
            if len(record.responses) == len(self.study.items):
                record.status = "completed"
            self._append_event(
                session_id,
                {
                    "event": "response",
                    "session_id": session_id,
                    "t": now,
                    **response.to_dict(),
                },
            )
            return response

    def completed_sessions(self) -> list[SessionRecord]:
        return [s for s in sorted(self.sessions.values(), key=lambda s: s.seq) if s.status == "completed"]

    def export_csv(self) -> str:
        """All responses, ordered by session creation then study item order."""
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(
            ["participant", "group", "item", "shown_ai", "label", "correct", "confidence", "elapsed_ms"]
        )
        for session in sorted(self.sessions.values(), key=lambda s: s.seq):
            for item in self.study.items:
                response = session.responses.get(item.item_id)
                if response is None:
                    continue
                writer.writerow(
                    [
                        session.participant_id,
                        session.group,
                        item.item_id,
                        str(response.shown_ai).lower(),
                        response.label,
                        str(response.label == item.true_label).lower(),
                        response.confidence,
                        response.elapsed_ms,
                    ]
                )
        return buf.getvalue()


# ---------------------------------------------------------------------------
# Cleaning and paired summary
# ---------------------------------------------------------------------------


@dataclass
class MetricSummary:
    with_ai_mean: float
    with_ai_se: float | None
    without_ai_mean: float
    without_ai_se: float | None
    t_stat: float | None
    p_value: float | None
    n_pairs: int

    def to_dict(self) -> dict:
        return {
            "with_ai_mean": self.with_ai_mean,
            "with_ai_se": self.with_ai_se,
            "without_ai_mean": self.without_ai_mean,
            "without_ai_se": self.without_ai_se,
            "t_stat": self.t_stat,
            "p_value": self.p_value,
            "n_pairs": self.n_pairs,
        }


@dataclass
class StudySummary:
    per_user: dict[str, dict[str, dict[str, float | None]]]
    pooled: dict[str, MetricSummary]
    exclusions: list[str]
    n_sessions: int

    def to_dict(self) -> dict:
        return {
            "per_user": self.per_user,
            "pooled": {m: s.to_dict() for m, s in self.pooled.items()},
            "exclusions": self.exclusions,
            "n_sessions": self.n_sessions,
        }


def _paired_t(differences: list[float]) -> tuple[float | None, float | None]:
    n = len(differences)
    if n < 2:
        return None, None
    d = np.asarray(differences, dtype=np.float64)
    sd = float(np.std(d, ddof=1))
    if sd == 0.0:
        return None, None
    t = float(np.mean(d) / (sd / np.sqrt(n)))
    p = float(2.0 * scipy_stats.t.sf(abs(t), df=n - 1))
    return t, p


def clean_and_summarize(sessions: list[SessionRecord], study: StudySet) -> StudySummary:
    """Outlier-clean the responses, then report per-user and pooled paired stats.

    Exclusion rules, each dropping only the named metric on the specific
    response: a time more than 10x both the cohort median and the user's own
    median on other items, and a confidence more than 3 Likert points below
    the user's minimum on all other items.
    """
    completed = [s for s in sessions if s.status == "completed"]
    if not completed:
        raise DataError("no completed sessions to summarize")

    rows = []  # (participant, item_id, shown_ai, correct, confidence, elapsed_ms)
    for session in completed:
        for item in study.items:
            response = session.responses.get(item.item_id)
            if response is None:
                continue
            rows.append(
                {
                    "participant": session.participant_id,
                    "item": item.item_id,
                    "shown_ai": response.shown_ai,
                    "correct": 1.0 if response.label == item.true_label else 0.0,
                    "confidence": float(response.confidence),
                    "time": float(response.elapsed_ms),
                }
            )

    exclusions: list[str] = []
    time_ok = [True] * len(rows)
    confidence_ok = [True] * len(rows)
    for i, row in enumerate(rows):
        cohort_others = [r["time"] for j, r in enumerate(rows) if j != i]
        user_others = [
            r["time"] for j, r in enumerate(rows) if j != i and r["participant"] == row["participant"]
        ]
        if cohort_others and user_others:
            if row["time"] > TIME_OUTLIER_FACTOR * float(np.median(cohort_others)) and row[
                "time"
            ] > TIME_OUTLIER_FACTOR * float(np.median(user_others)):
                time_ok[i] = False
                exclusions.append(
                    f"time excluded for {row['participant']} on {row['item']}: "
                    f"{row['time']:.0f} ms exceeds 10x medians"
                )
        user_conf_others = [
            r["confidence"]
            for j, r in enumerate(rows)
            if j != i and r["participant"] == row["participant"]
        ]
        if user_conf_others:
            if row["confidence"] < min(user_conf_others) - CONFIDENCE_OUTLIER_GAP:
                confidence_ok[i] = False
                exclusions.append(
                    f"confidence excluded for {row['participant']} on {row['item']}: "
                    f"{row['confidence']:.0f} is more than {CONFIDENCE_OUTLIER_GAP} below "
                    "their minimum elsewhere"
                )

    participants = sorted({r["participant"] for r in rows})
    metric_filters = {"accuracy": None, "time": time_ok, "confidence": confidence_ok}
    metric_fields = {"accuracy": "correct", "time": "time", "confidence": "confidence"}

    per_user: dict[str, dict[str, dict[str, float | None]]] = {}
    pooled: dict[str, MetricSummary] = {}
    for metric, keep in metric_filters.items():
        field_name = metric_fields[metric]
        with_values: dict[str, float] = {}
        without_values: dict[str, float] = {}
        for user in participants:
            for assisted, target in ((True, with_values), (False, without_values)):
                values = [
                    r[field_name]
                    for j, r in enumerate(rows)
                    if r["participant"] == user
                    and r["shown_ai"] is assisted
                    and (keep is None or keep[j])
                ]
                if values:
                    target[user] = float(np.mean(values))
            per_user.setdefault(user, {})[metric] = {
                "with_ai": with_values.get(user),
                "without_ai": without_values.get(user),
            }

        paired_users = [u for u in participants if u in with_values and u in without_values]
        for user in participants:
            if user not in paired_users:
                exclusions.append(
                    f"{metric}: participant {user} lacks responses in one condition; "
                    "excluded from pairing"
                )

        def pooled_stats(values: list[float]) -> tuple[float, float | None]:
            mean = float(np.mean(values))
            se = (
                float(np.std(values, ddof=1) / np.sqrt(len(values)))
                if len(values) >= 2
                else None
            )
            return mean, se

        with_list = [with_values[u] for u in paired_users]
        without_list = [without_values[u] for u in paired_users]
        if not paired_users:
            pooled[metric] = MetricSummary(
                float("nan"), None, float("nan"), None, None, None, 0
            )
            continue
        w_mean, w_se = pooled_stats(with_list)
        wo_mean, wo_se = pooled_stats(without_list)
        t_stat, p_value = _paired_t(
            [w - wo for w, wo in zip(with_list, without_list)]
        )
        pooled[metric] = MetricSummary(
            with_ai_mean=w_mean,
            with_ai_se=w_se,
            without_ai_mean=wo_mean,
            without_ai_se=wo_se,
            t_stat=t_stat,
            p_value=p_value,
            n_pairs=len(paired_users),
        )

    return StudySummary(
        per_user=per_user,
        pooled=pooled,
        exclusions=exclusions,
        n_sessions=len(completed),
    )
