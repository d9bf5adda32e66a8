"""Criterion registry and chat-backed definition generation.

A criterion is a named rigour keyword plus a definition that always starts
with "Refers to". Definitions come either from the bundled registry, a
human-curated file, or a chat-completion provider prompted with a fixed
template; generated definitions are cached by keyword, model and prompt.
"""

from __future__ import annotations

import hashlib
import json
import threading
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .embed import post_json
from .errors import ParseError, ProviderError, SchemaError

DEFINITION_PROMPT_TEMPLATE = (
    'Give the definition of "{keyword}" in the context of Computer science '
    "and Machine learning. In the format: {keyword}: Refers to [definition]"
)

FORMAT_REMINDER = (
    ' Respond with exactly one line of the form "{keyword}: Refers to ...".'
)

SOURCE_GENERATED = "generated"
SOURCE_MANUAL = "manual"


@dataclass(frozen=True)
class Criterion:
    name: str
    definition: str
    source: str = SOURCE_GENERATED
    provider_meta: dict | None = None

    def __post_init__(self):
        if not self.name:
            raise SchemaError("criterion name must be nonempty")
        if not self.definition:
            raise SchemaError(f"criterion {self.name!r} has an empty definition")
        if self.source not in (SOURCE_GENERATED, SOURCE_MANUAL):
            raise SchemaError(f"unknown criterion source {self.source!r}")
        if self.source == SOURCE_GENERATED and not self.definition.startswith("Refers to"):
            raise SchemaError(f"generated definition for {self.name!r} must start with 'Refers to'")


@dataclass
class CriteriaRegistry:
    """Ordered criteria; the order fixes bit positions in the subset search."""

    criteria: list[Criterion] = field(default_factory=list)

    def __post_init__(self):
        names = [c.name for c in self.criteria]
        if len(set(names)) != len(names):
            duplicates = sorted({n for n in names if names.count(n) > 1})
            raise SchemaError(f"duplicate criterion names: {duplicates}")

    def __len__(self) -> int:
        return len(self.criteria)

    def __iter__(self):
        return iter(self.criteria)

    def names(self) -> list[str]:
        return [c.name for c in self.criteria]

    def get(self, name: str) -> Criterion:
        for c in self.criteria:
            if c.name == name:
                return c
        raise KeyError(name)

    def ordering_hash(self) -> str:
        """Digest of the name ordering; binds subset bitmasks to this registry."""
        blob = json.dumps(self.names())
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()

    def subset(self, names: list[str]) -> "CriteriaRegistry":
        return CriteriaRegistry([c for c in self.criteria if c.name in set(names)])

    def add(self, criterion: Criterion) -> None:
        if any(c.name == criterion.name for c in self.criteria):
            raise SchemaError(f"criterion {criterion.name!r} already registered")
        self.criteria.append(criterion)


def _registry_from_payload(payload: dict) -> CriteriaRegistry:
    if not isinstance(payload, dict) or not isinstance(payload.get("criteria"), list):
        raise SchemaError("registry file must contain a 'criteria' list")
    criteria = []
    for entry in payload["criteria"]:
        if not isinstance(entry, dict):
            raise SchemaError("each criterion must be an object")
        try:
            criteria.append(
                Criterion(
                    name=entry.get("name", ""),
                    definition=entry.get("definition", ""),
                    source=entry.get("source", SOURCE_GENERATED),
                    provider_meta=entry.get("provider_meta"),
                )
            )
        except SchemaError:
            raise
        except Exception as exc:
            raise SchemaError(str(exc)) from exc
    return CriteriaRegistry(criteria)


def load_registry(path: str | Path) -> CriteriaRegistry:
    path = Path(path)
    try:
        payload = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SchemaError(f"registry file is not valid JSON: {exc}") from exc
    return _registry_from_payload(payload)


def save_registry(registry: CriteriaRegistry, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    entries = []
    for c in registry:
        entry = {"name": c.name, "definition": c.definition, "source": c.source}
        if c.provider_meta is not None:
            entry["provider_meta"] = c.provider_meta
        entries.append(entry)
    path.write_text(json.dumps({"criteria": entries}, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def default_registry() -> CriteriaRegistry:
    payload = json.loads(
        resources.files("rigourkit.data").joinpath("default_criteria.json").read_text("utf-8")
    )
    return _registry_from_payload(payload)


# ---------------------------------------------------------------------------
# Definition generation
# ---------------------------------------------------------------------------

def build_definition_prompt(keyword: str) -> str:
    return DEFINITION_PROMPT_TEMPLATE.format(keyword=keyword)


def parse_definition_response(keyword: str, response: str) -> str:
    """Extract the 'Refers to ...' definition from a '<keyword>: ...' reply."""
    for line in response.splitlines():
        line = line.strip()
        if not line:
            continue
        prefix = f"{keyword.lower()}:"
        if line.lower().startswith(prefix):
            rest = line[len(prefix):].strip()
            if rest.startswith("Refers to"):
                return rest
        if line.startswith("Refers to"):
            return line
    raise ParseError(response)


class MockChatProvider:
    """Echo-style provider producing deterministic definitions for tests."""

    def __init__(self, model: str = "mock-chat"):
        self.model = model
        self.calls: list[str] = []

    @property
    def model_id(self) -> str:
        return self.model

    def complete(self, prompt: str) -> str:
        self.calls.append(prompt)
        keyword = prompt.split('"')[1] if '"' in prompt else "term"
        return (
            f"{keyword}: Refers to the {keyword.lower()} quality of a method as "
            "evidenced in the text."
        )

    def meta(self) -> dict:
        return {"model": self.model, "timestamp": "1970-01-01T00:00:00Z"}


class HttpChatProvider:
    """Chat-completions wire contract:
    POST {"model", "messages", "temperature": 0} -> {"choices": [{"message": {"content"}}]}.
    """

    def __init__(
        self,
        base_url: str,
        model: str,
        api_key: str | None = None,
        timeout: float = 60.0,
        max_retries: int = 3,
        backoff_base: float = 0.5,
    ):
        self.base_url = base_url
        self.model = model
        self.api_key = api_key
        self.timeout = timeout
        self.max_retries = max_retries
        self.backoff_base = backoff_base

    @property
    def model_id(self) -> str:
        return self.model

    def complete(self, prompt: str) -> str:
        payload = {
            "model": self.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": 0,
        }
        body = post_json(
            self.base_url,
            payload,
            api_key=self.api_key,
            timeout=self.timeout,
            max_retries=self.max_retries,
            backoff_base=self.backoff_base,
        )
        try:
            return body["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise ProviderError(f"malformed chat response: {exc}") from exc

    def meta(self) -> dict:
        import datetime

        return {
            "model": self.model,
            "timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        }


class DefinitionCache:
    """Keyed by (keyword, model id, prompt); optionally persisted as JSON."""

    def __init__(self, path: str | Path | None = None):
        self.path = Path(path) if path is not None else None
        self._entries: dict[str, dict] = {}
        self._lock = threading.Lock()
        if self.path is not None and self.path.exists():
            self._entries = json.loads(self.path.read_text(encoding="utf-8"))

    @staticmethod
    def key(keyword: str, model_id: str, prompt: str) -> str:
        blob = "\x00".join([keyword, model_id, hashlib.sha256(prompt.encode("utf-8")).hexdigest()])
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()

    def get(self, key: str) -> dict | None:
        return self._entries.get(key)

    def put(self, key: str, entry: dict) -> None:
        with self._lock:
            self._entries[key] = entry
            if self.path is not None:
                self.path.parent.mkdir(parents=True, exist_ok=True)
                self.path.write_text(
                    json.dumps(self._entries, indent=2, sort_keys=True) + "\n", encoding="utf-8"
                )


def generate_definition(
    keyword: str,
    provider,
    cache: DefinitionCache | None = None,
) -> Criterion:
    """Prompt the provider for a definition, with one format-reminder retry."""
    if not keyword:
        raise ValueError("keyword must be nonempty")
    prompt = build_definition_prompt(keyword)
    cache = cache if cache is not None else DefinitionCache()
    key = DefinitionCache.key(keyword, provider.model_id, prompt)
    hit = cache.get(key)
    if hit is not None:
        return Criterion(
            name=keyword,
            definition=hit["definition"],
            source=SOURCE_GENERATED,
            provider_meta=hit.get("provider_meta"),
        )

    response = provider.complete(prompt)
    try:
        definition = parse_definition_response(keyword, response)
    except ParseError:
        retry_prompt = prompt + FORMAT_REMINDER.format(keyword=keyword)
        response = provider.complete(retry_prompt)
        definition = parse_definition_response(keyword, response)

    meta = provider.meta() if hasattr(provider, "meta") else {"model": provider.model_id}
    cache.put(key, {"definition": definition, "provider_meta": meta})
    return Criterion(name=keyword, definition=definition, source=SOURCE_GENERATED, provider_meta=meta)


def generate_definitions(
    keywords: list[str],
    provider,
    cache: DefinitionCache | None = None,
) -> CriteriaRegistry:
    cache = cache if cache is not None else DefinitionCache()
    return CriteriaRegistry([generate_definition(k, provider, cache) for k in keywords])
