"""The black-box boundary: prediction instances and predictor adapters.

An adapter maps visit-sequence prefixes to ranked ``(grouped code, score)``
lists. Three deterministic in-process mocks make the whole pipeline testable
without a real model; ``RemoteBlackBox`` speaks the JSON-over-HTTP protocol
(``POST /predict``) for on-premise or SaaS predictors.
"""

from __future__ import annotations

import hashlib
import json
import logging
import time
from collections import Counter
from dataclasses import dataclass, field, replace
from typing import Iterable, Protocol, Sequence

import httpx

from .data_model import CodeGroupMap, PatientRecord, Visit
from .errors import BlackBoxError, DataError
from .rng import Xoshiro256StarStar, derive_seed

logger = logging.getLogger(__name__)

Prefix = Sequence[frozenset[str]]
Ranking = tuple[tuple[str, float], ...]


@dataclass(frozen=True)
class PredictionInstance:
    """One predictable visit: the strictly-prior prefix, the grouped truth set
    of the target visit, and (once attached) the black-box ranking."""

    patient_id: str
    visit_index: int
    prefix: tuple[Visit, ...]
    truth: frozenset[str]
    prediction: Ranking = ()

    def __post_init__(self):
        if len(self.prefix) < 1:
            raise DataError(f"patient {self.patient_id}: empty prefix")
        if not self.truth:
            raise DataError(f"patient {self.patient_id}: empty truth set")


class BlackBoxAdapter(Protocol):
    name: str

    def predict_batch(self, prefixes: Sequence[Prefix], top_k: int) -> list[Ranking]:
        ...


def make_instances(patients: Iterable[PatientRecord],
                   group_map: CodeGroupMap) -> list[PredictionInstance]:
    """One instance per visit j >= 2 of every patient; truth sets are grouped."""
    instances = []
    for patient in patients:
        history = patient.history
        for j in range(1, len(history)):
            instances.append(
                PredictionInstance(
                    patient_id=patient.patient_id,
                    visit_index=j,
                    prefix=history[:j],
                    truth=group_map.group_codes_of(history[j].codes),
                )
            )
    return instances


def _check_ranking(ranking: Ranking, top_k: int) -> None:
    if len(ranking) < top_k:
        raise BlackBoxError(f"ranking covers {len(ranking)} codes, {top_k} requested")
    seen = set()
    last = None
    for code, score in ranking:
        if code in seen:
            raise BlackBoxError(f"duplicate code {code!r} in ranking")
        seen.add(code)
        if last is not None and score > last:
            raise BlackBoxError("ranking scores are not non-increasing")
        last = score


def predict_instances(bb: BlackBoxAdapter, instances: Sequence[PredictionInstance],
                      top_k: int, batch_size: int = 1024) -> list[PredictionInstance]:
    """Attach rankings to instances, batching prefixes through the adapter."""
    out = []
    for start in range(0, len(instances), batch_size):
        chunk = instances[start:start + batch_size]
        prefixes = [[v.codes for v in inst.prefix] for inst in chunk]
        rankings = bb.predict_batch(prefixes, top_k)
        if len(rankings) != len(chunk):
            raise BlackBoxError(
                f"adapter returned {len(rankings)} rankings for {len(chunk)} prefixes"
            )
        for inst, ranking in zip(chunk, rankings):
            ranking = tuple((str(c), float(s)) for c, s in ranking)
            _check_ranking(ranking, top_k)
            out.append(replace(inst, prediction=ranking))
    return out


def _require_prefixes(prefixes: Sequence[Prefix]) -> None:
    for prefix in prefixes:
        if len(prefix) == 0:
            raise BlackBoxError("empty prefix")


def _popularity_from_patients(patients: Iterable[PatientRecord],
                              group_map: CodeGroupMap) -> Counter:
    counts: Counter = Counter()
    for patient in patients:
        for visit in patient.history:
            counts.update(group_map.group(c) for c in visit.codes)
    return counts


class FrequencyMock:
    """Ranks grouped codes by how often they occur in the prefix (count ties
    broken lexicographically), backfilled by global popularity."""

    def __init__(self, group_map: CodeGroupMap, popularity: Counter | None = None):
        self._group_map = group_map
        self._vocab = group_map.grouped_codes
        popularity = popularity or Counter()
        scale = 0.5 / (1.0 + max(popularity.values(), default=0))
        # Zero-count tail, precomputed once: popularity order, scores < 1.
        self._tail = sorted(
            ((code, popularity.get(code, 0) * scale) for code in self._vocab),
            key=lambda e: (-e[1], e[0]),
        )
        self.name = "mock:frequency"

    @classmethod
    def from_patients(cls, patients: Iterable[PatientRecord],
                      group_map: CodeGroupMap) -> "FrequencyMock":
        return cls(group_map, _popularity_from_patients(patients, group_map))

    def predict_batch(self, prefixes: Sequence[Prefix], top_k: int) -> list[Ranking]:
        _require_prefixes(prefixes)
        if top_k > len(self._vocab):
            raise BlackBoxError(
                f"top_k={top_k} exceeds the grouped vocabulary ({len(self._vocab)})"
            )
        group = self._group_map.group
        out = []
        for prefix in prefixes:
            counts: Counter = Counter()
            for codes in prefix:
                counts.update(group(c) for c in codes)
            head = sorted(counts.items(), key=lambda e: (-e[1], e[0]))
            ranking = [(c, float(n)) for c, n in head]
            ranking.extend(e for e in self._tail if e[0] not in counts)
            out.append(tuple(ranking[:max(top_k, len(head))]))
        return out


class PlantedRuleMock:
    """``beta`` is rank 1 exactly when the trigger code occurs in the prefix;
    otherwise beta is last. Everything else follows global popularity."""

    def __init__(self, group_map: CodeGroupMap, trigger: str, beta: str,
                 popularity: Counter | None = None):
        if beta not in group_map.grouped_codes:
            raise DataError(f"beta {beta!r} not in the grouped vocabulary")
        if trigger not in group_map.fine_codes:
            raise DataError(f"trigger {trigger!r} not in the fine-grained vocabulary")
        self._trigger = trigger
        self._beta = beta
        popularity = popularity or Counter()
        scale = 0.5 / (1.0 + max(popularity.values(), default=0))
        base = sorted(
            ((code, popularity.get(code, 0) * scale + 1.0)
             for code in group_map.grouped_codes if code != beta),
            key=lambda e: (-e[1], e[0]),
        )
        top = base[0][1] if base else 1.0
        self._with_beta = ((beta, top + 1.0),) + tuple(base)
        self._without_beta = tuple(base) + ((beta, 0.0),)
        self.name = f"mock:planted:{trigger}:{beta}"

    @classmethod
    def from_patients(cls, patients: Iterable[PatientRecord], group_map: CodeGroupMap,
                      trigger: str, beta: str) -> "PlantedRuleMock":
        return cls(group_map, trigger, beta,
                   _popularity_from_patients(patients, group_map))

    def predict_batch(self, prefixes: Sequence[Prefix], top_k: int) -> list[Ranking]:
        _require_prefixes(prefixes)
        if top_k > len(self._with_beta):
            raise BlackBoxError(
                f"top_k={top_k} exceeds the grouped vocabulary ({len(self._with_beta)})"
            )
        trigger = self._trigger
        out = []
        for prefix in prefixes:
            hit = any(trigger in codes for codes in prefix)
            out.append(self._with_beta if hit else self._without_beta)
        return out


class UniformRandomMock:
    """Seeded random ranking per prefix, pure in the prefix content."""

    def __init__(self, vocabulary: Sequence[str], seed: int):
        self._vocab = tuple(vocabulary)
        self._seed = seed
        self.name = f"mock:uniform:{seed}"

    def _prefix_key(self, prefix: Prefix) -> int:
        digest = hashlib.blake2b(digest_size=8)
        for codes in prefix:
            digest.update("|".join(sorted(codes)).encode())
            digest.update(b"\x00")
        return int.from_bytes(digest.digest(), "big")

    def predict_batch(self, prefixes: Sequence[Prefix], top_k: int) -> list[Ranking]:
        _require_prefixes(prefixes)
        n = len(self._vocab)
        if top_k > n:
            raise BlackBoxError(f"top_k={top_k} exceeds the vocabulary ({n})")
        out = []
        for prefix in prefixes:
            rng = Xoshiro256StarStar(derive_seed(self._seed, self._prefix_key(prefix)))
            order = list(self._vocab)
            rng.shuffle(order)
            out.append(tuple((code, (n - i) / n) for i, code in enumerate(order)))
        return out


@dataclass
class RemoteBlackBox:
    """JSON-over-HTTP adapter.

    ``POST {url}/predict`` with ``{"instances": [{"prefix": [[code, ...], ...]},
    ...], "top_k": int}``; replies ``{"predictions": [[{"code": str, "score":
    float}, ...], ...]}``. Transport failures and 5xx are retried with
    exponential backoff; a malformed reply is fatal and logged with the
    offending payload.
    """

    url: str
    token: str | None = None
    batch_size: int = 256
    max_retries: int = 3
    backoff: float = 0.5
    timeout: float = 30.0
    transport: httpx.BaseTransport | None = None
    name: str = field(init=False)

    def __post_init__(self):
        self.url = self.url.rstrip("/")
        self.name = self.url
        headers = {}
        if self.token:
            headers["Authorization"] = f"Bearer {self.token}"
        self._client = httpx.Client(
            headers=headers, timeout=self.timeout, transport=self.transport
        )

    def close(self) -> None:
        self._client.close()

    def _post_once(self, payload: dict) -> httpx.Response:
        response = self._client.post(self.url + "/predict", json=payload)
        if response.status_code >= 500:
            raise httpx.HTTPStatusError(
                f"server error {response.status_code}",
                request=response.request, response=response,
            )
        return response

    def _post(self, payload: dict) -> dict:
        last_error: Exception | None = None
        for attempt in range(self.max_retries):
            try:
                response = self._post_once(payload)
                break
            except (httpx.TransportError, httpx.HTTPStatusError) as exc:
                last_error = exc
                if attempt + 1 < self.max_retries:
                    time.sleep(self.backoff * (2 ** attempt))
        else:
            raise BlackBoxError(
                f"{self.url}: transport failed after {self.max_retries} attempts: {last_error}"
            )
        if response.status_code != 200:
            raise BlackBoxError(f"{self.url}: HTTP {response.status_code}")
        try:
            return response.json()
        except json.JSONDecodeError:
            logger.error("malformed black-box reply: %r", response.text[:500])
            raise BlackBoxError(f"{self.url}: reply is not JSON") from None

    def predict_batch(self, prefixes: Sequence[Prefix], top_k: int) -> list[Ranking]:
        _require_prefixes(prefixes)
        out: list[Ranking] = []
        for start in range(0, len(prefixes), self.batch_size):
            chunk = prefixes[start:start + self.batch_size]
            payload = {
                "instances": [
                    {"prefix": [sorted(codes) for codes in prefix]} for prefix in chunk
                ],
                "top_k": top_k,
            }
            reply = self._post(payload)
            predictions = reply.get("predictions") if isinstance(reply, dict) else None
            if not isinstance(predictions, list) or len(predictions) != len(chunk):
                logger.error("malformed black-box reply: %r", str(reply)[:500])
                raise BlackBoxError(
                    f"{self.url}: expected {len(chunk)} predictions in reply"
                )
            for entry in predictions:
                try:
                    ranking = tuple((item["code"], float(item["score"])) for item in entry)
                except (TypeError, KeyError) as exc:
                    logger.error("malformed black-box reply entry: %r", str(entry)[:500])
                    raise BlackBoxError(f"{self.url}: malformed prediction entry") from exc
                out.append(ranking)
        return out


def make_blackbox(spec: str, patients: Sequence[PatientRecord],
                  group_map: CodeGroupMap, token: str | None = None) -> BlackBoxAdapter:
    """Build an adapter from its spec string (also the adapter's ``name``).

    Accepted forms: ``mock:frequency``, ``mock:planted:TRIGGER:BETA``,
    ``mock:uniform:SEED``, or an http(s) URL for a remote predictor.
    """
    if spec == "mock:frequency":
        return FrequencyMock.from_patients(patients, group_map)
    if spec.startswith("mock:planted:"):
        parts = spec.split(":")
        if len(parts) != 4 or not all(parts):
            raise DataError(f"planted mock spec must be mock:planted:TRIGGER:BETA, got {spec!r}")
        return PlantedRuleMock.from_patients(patients, group_map, parts[2], parts[3])
    if spec.startswith("mock:uniform:"):
        try:
            seed = int(spec.rsplit(":", 1)[1])
        except ValueError:
            raise DataError(f"uniform mock spec must be mock:uniform:SEED, got {spec!r}") from None
        return UniformRandomMock(group_map.grouped_codes, seed)
    if spec.startswith(("http://", "https://")):
        return RemoteBlackBox(url=spec, token=token)
    raise DataError(f"unknown black-box spec {spec!r}")
