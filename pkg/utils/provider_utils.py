"""
    Provider Gateway Utilities

    Uniform access to language-model backends for every role of the pipeline (planner,
    instantiator, judge, tutorial authors, classifier). A scripted backend replays canned
    responses keyed by (role, call index within role) for offline, bit-reproducible runs;
    the HTTP backend talks to any OpenAI-compatible chat-completions endpoint. Every
    exchange is appended to a ProviderTranscript, the raw data of the cost ledger.

    Functions:
    ----------
    - Gateway.complete: sends a ProviderRequest through the backend and records it.
    - parse_structured: extracts the first JSON object of a response and validates it
      against a registered pydantic schema.
    - extract_json: first decodable JSON object inside free text.
    - ScriptedBackend.from_file / HttpBackend.from_env: backend constructors.
"""

import base64
import json
import logging
import mimetypes
import os
import threading
import time
from dataclasses import asdict, dataclass, field
from typing import Any, Literal

import requests
from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field, ValidationError, ValidationInfo, field_validator, model_validator

logger = logging.getLogger(__name__)

ROLE_TAGS = ('planner', 'instantiator', 'judge', 'author_doc', 'author_video', 'classifier')


class ProviderError(RuntimeError):
    '''Base class of every provider-gateway failure.'''


class BackendUnavailable(ProviderError):
    pass


class ScriptExhausted(ProviderError):
    pass


class SchemaViolation(ProviderError):
    pass


class NoJsonFound(ProviderError):
    pass


class UnknownSchema(ProviderError):
    pass


# ----------------------------------------------------------------
# Requests, responses and the transcript
# ----------------------------------------------------------------

@dataclass(frozen=True)
class Decoding:
    temperature: float = 0.01
    top_p: float = 0.95
    max_tokens: int = 4096


@dataclass(frozen=True)
class ProviderRequest:
    role_tag: str
    prompt: str
    images: tuple = ()
    decoding: Decoding = field(default_factory=Decoding)

    def __post_init__(self):
        if self.role_tag not in ROLE_TAGS:
            raise ProviderError(f'Unknown role tag {self.role_tag!r}, expected one of {ROLE_TAGS}')
        if not str(self.prompt).strip():
            raise ProviderError(f'Empty prompt for role {self.role_tag!r}')


@dataclass(frozen=True)
class ProviderResponse:
    text: str
    prompt_tokens: int = 0
    completion_tokens: int = 0
    latency: float = 0.0

    @property
    def usage(self):
        return {'prompt_tokens': self.prompt_tokens, 'completion_tokens': self.completion_tokens}


class ProviderTranscript:
    '''
        Append-only log of provider exchanges of one task.

        Entries are plain dicts {role_tag, index, prompt, images, decoding, response,
        prompt_tokens, completion_tokens, latency}. The per-role call counter continues
        from the entries already present, so a transcript reloaded from disk keeps the
        scripted indices of a resumed run aligned.
    '''

    def __init__(self, run_id, entries=None, root=None):
        self.run_id = run_id
        self.root = root
        self.entries = list(entries or [])
        self._lock = threading.Lock()
        self._next = {}
        for entry in self.entries:
            self._next[entry['role_tag']] = max(self._next.get(entry['role_tag'], 0), entry['index'] + 1)

    def reserve(self, role_tag):
        '''Next call index of role_tag; reserved atomically.'''
        with self._lock:
            index = self._next.get(role_tag, 0)
            self._next[role_tag] = index + 1
            return index

    def append(self, request, index, response):
        entry = {
            'role_tag': request.role_tag,
            'index': index,
            'prompt': request.prompt,
            'images': [os.path.relpath(i, self.root) if self.root else str(i) for i in request.images],
            'decoding': asdict(request.decoding),
            'response': response.text,
            'prompt_tokens': int(response.prompt_tokens),
            'completion_tokens': int(response.completion_tokens),
            'latency': float(response.latency),
        }
        with self._lock:
            self.entries.append(entry)
        return entry

    def count(self, role_tag=None):
        return sum(1 for e in self.entries if role_tag is None or e['role_tag'] == role_tag)

    def totals(self):
        return {
            'calls': len(self.entries),
            'prompt_tokens': sum(e['prompt_tokens'] for e in self.entries),
            'completion_tokens': sum(e['completion_tokens'] for e in self.entries),
            'latency': sum(e['latency'] for e in self.entries),
        }

    def to_dict(self):
        return {'run_id': self.run_id, 'entries': list(self.entries)}

    def save(self, path):
        with open(path, 'w', encoding='utf-8') as f:
            json.dump(self.to_dict(), f, indent=2, ensure_ascii=False)
        return path

    @classmethod
    def load(cls, path, run_id=None, root=None):
        '''Loads a saved transcript, or starts an empty one when the file is absent.'''
        if not os.path.exists(path):
            return cls(run_id, root=root)
        with open(path, encoding='utf-8') as f:
            doc = json.load(f)
        return cls(run_id or doc.get('run_id'), doc.get('entries', []), root)


# ----------------------------------------------------------------
# Backends
# ----------------------------------------------------------------

def count_tokens(text):
    '''Whitespace-delimited token count used by the scripted backend.'''
    return len(str(text).split())


class ScriptedBackend:
    '''
        Deterministic backend answering from a script keyed by (role_tag, index).
        Images are ignored.
    '''

    model = 'scripted'

    def __init__(self, entries):
        self.entries = dict(entries)

    @classmethod
    def from_file(cls, path):
        '''
            Loads a script file: JSON array of {role_tag, index, response_text}.

            Raises:
            -------
            ProviderError
                If the file is unreadable or two entries share a key.
        '''
        try:
            with open(path, encoding='utf-8') as f:
                items = json.load(f)
        except (OSError, json.JSONDecodeError) as e:
            raise ProviderError(f'Cannot load script {path}: {e}')
        entries = {}
        for item in items:
            key = (item['role_tag'], int(item['index']))
            if key in entries:
                raise ProviderError(f'Duplicate script entry {key} in {path}')
            entries[key] = item['response_text']
        return cls(entries)

    def complete(self, request, index):
        key = (request.role_tag, index)
        if key not in self.entries:
            raise ScriptExhausted(f'No scripted response for {request.role_tag}#{index}')
        text = self.entries[key]
        return ProviderResponse(text, count_tokens(request.prompt), count_tokens(text), 0.0)


def _image_part(path):
    mime = mimetypes.guess_type(str(path))[0] or 'image/png'
    with open(path, 'rb') as f:
        encoded = base64.b64encode(f.read()).decode('utf-8')
    return {'type': 'image_url', 'image_url': {'url': f'data:{mime};base64,{encoded}'}}


class HttpBackend:
    '''
        OpenAI-compatible chat-completions backend.

        Attributes:
        -----------
        base_url : str
            Endpoint root; requests go to {base_url}/chat/completions.
        model : str
            Model name sent with every request (and the price-table key).
        max_tries : int
            Attempts before BackendUnavailable, with exponential backoff in between.
    '''

    def __init__(self, base_url, api_key, model, timeout=120, max_tries=3, backoff=1.0):
        self.base_url = base_url.rstrip('/')
        self.api_key = api_key
        self.model = model
        self.timeout = timeout
        self.max_tries = max_tries
        self.backoff = backoff

    @classmethod
    def from_env(cls, dotenv_path=None, **kwargs):
        '''
            Builds the backend from TUTORFORGE_API_BASE, TUTORFORGE_API_KEY and
            TUTORFORGE_MODEL (a .env file is read first when present).
        '''
        load_dotenv(dotenv_path)
        base_url = os.environ.get('TUTORFORGE_API_BASE')
        model = os.environ.get('TUTORFORGE_MODEL')
        if not base_url or not model:
            raise BackendUnavailable('TUTORFORGE_API_BASE and TUTORFORGE_MODEL must be set for the http provider')
        return cls(base_url, os.environ.get('TUTORFORGE_API_KEY', ''), model, **kwargs)

    def payload(self, request):
        content = [{'type': 'text', 'text': request.prompt}]
        content += [_image_part(path) for path in request.images]
        return {
            'model': self.model,
            'messages': [{'role': 'user', 'content': content}],
            'temperature': request.decoding.temperature,
            'top_p': request.decoding.top_p,
            'max_tokens': request.decoding.max_tokens,
        }

    def complete(self, request, index):
        payload = self.payload(request)
        headers = {'Content-Type': 'application/json'}
        if self.api_key:
            headers['Authorization'] = f'Bearer {self.api_key}'
        last_error = None
        for attempt in range(self.max_tries):
            if attempt:
                time.sleep(self.backoff * 2 ** (attempt - 1))
            started = time.perf_counter()
            try:
                resp = requests.post(f'{self.base_url}/chat/completions', json=payload,
                                     headers=headers, timeout=self.timeout)
                resp.raise_for_status()
                data = resp.json()
                text = data['choices'][0]['message']['content'] or ''
            except (requests.RequestException, ValueError, KeyError, IndexError) as e:
                last_error = e
                logger.warning('%s#%d attempt %d/%d failed: %s', request.role_tag, index,
                               attempt + 1, self.max_tries, e)
                continue
            usage = data.get('usage') or {}
            return ProviderResponse(text, int(usage.get('prompt_tokens', 0)),
                                    int(usage.get('completion_tokens', 0)),
                                    time.perf_counter() - started)
        raise BackendUnavailable(f'{self.base_url} failed after {self.max_tries} tries: {last_error}')


class Gateway:
    '''
        Shareable front of one backend writing into one transcript.
    '''

    def __init__(self, backend, transcript):
        self.backend = backend
        self.transcript = transcript

    @property
    def model(self):
        return self.backend.model

    def complete(self, request):
        '''
            Sends a request and appends the exchange to the transcript.

            Parameters:
            -----------
            request : ProviderRequest

            Returns:
            --------
            ProviderResponse

            Raises:
            -------
            BackendUnavailable
                HTTP failure after the bounded retries.
            ScriptExhausted
                The script has no entry for (role_tag, index).
        '''
        index = self.transcript.reserve(request.role_tag)
        response = self.backend.complete(request, index)
        self.transcript.append(request, index, response)
        logger.debug('%s#%d: %d prompt / %d completion tokens', request.role_tag, index,
                     response.prompt_tokens, response.completion_tokens)
        return response

    def ask(self, role_tag, prompt, images=(), schema_id=None, context=None):
        '''Shortcut: complete() and, when schema_id is given, parse_structured() the text.'''
        response = self.complete(ProviderRequest(role_tag, prompt, tuple(images)))
        if schema_id is None:
            return response.text
        return parse_structured(response.text, schema_id, context)


# ----------------------------------------------------------------
# Structured output
# ----------------------------------------------------------------

class _Strict(BaseModel):
    model_config = ConfigDict(extra='forbid')


class TaskLabelsOut(_Strict):
    operation_category: str = Field(min_length=1)
    object_category: str = Field(min_length=1)
    level: str = Field(min_length=1)


class TemplateScoreOut(_Strict):
    score: int = Field(ge=0, le=10)
    reason: str = ''


class InstantiatedTaskOut(_Strict):
    instruction: str = Field(min_length=1)
    required_objects: list[str] = []


class PlannerActionOut(_Strict):
    action: Literal['api', 'click', 'type', 'keys', 'finish']
    thought: str = ''
    name: str | None = None
    args: dict[str, Any] = {}
    mark: int | None = None
    node: str | None = None
    shift: bool = False
    text: str | None = None
    keys: str | None = None
    reason: str | None = None

    @model_validator(mode='after')
    def _variant_fields(self):
        if self.action == 'api' and not self.name:
            raise ValueError('api actions need "name"')
        if self.action == 'click' and self.mark is None and not self.node:
            raise ValueError('click actions need "mark" or "node"')
        if self.action == 'type' and self.text is None:
            raise ValueError('type actions need "text"')
        if self.action == 'keys' and not self.keys:
            raise ValueError('keys actions need "keys"')
        return self


class VerdictOut(_Strict):
    success: bool
    rationale: str

    @field_validator('rationale')
    @classmethod
    def _non_empty(cls, value):
        if not value.strip():
            raise ValueError('rationale must be non-empty')
        return value


class TutorialContentOut(_Strict):
    task_title: str = Field(min_length=1)
    task_description: str = Field(min_length=1)
    step_titles: list[str]
    step_descriptions: list[str]

    @model_validator(mode='after')
    def _step_counts(self, info: ValidationInfo):
        expected = (info.context or {}).get('expected_steps')
        if len(self.step_titles) != len(self.step_descriptions):
            raise ValueError(f'{len(self.step_titles)} step_titles but {len(self.step_descriptions)} step_descriptions')
        if expected is not None and len(self.step_titles) != expected:
            raise ValueError(f'expected {expected} steps, got {len(self.step_titles)}')
        return self


class RubricItemOut(_Strict):
    metric_id: str
    score: int = Field(ge=1, le=5)
    justification: str = ''


class RubricScoresOut(_Strict):
    scores: list[RubricItemOut]


SCHEMAS = {
    'task_labels': TaskLabelsOut,
    'template_score': TemplateScoreOut,
    'instantiated_task': InstantiatedTaskOut,
    'planner_action': PlannerActionOut,
    'verdict': VerdictOut,
    'tutorial_content': TutorialContentOut,
    'rubric_scores': RubricScoresOut,
}


def extract_json(text):
    '''
        First JSON object embedded in text (prose or code fences around it are skipped).

        Raises:
        -------
        NoJsonFound
    '''
    decoder = json.JSONDecoder()
    text = str(text)
    start = text.find('{')
    while start != -1:
        try:
            value, _ = decoder.raw_decode(text, start)
        except json.JSONDecodeError:
            value = None
        if isinstance(value, dict):
            return value
        start = text.find('{', start + 1)
    raise NoJsonFound(f'No JSON object in response {text[:80]!r}')


def _describe(error):
    parts = []
    for item in error.errors():
        location = '.'.join(str(p) for p in item['loc']) or '<root>'
        parts.append(f'{location}: {item["msg"]}')
    return '; '.join(parts)


def parse_structured(text, schema_id, context=None):
    '''
        Parses provider output against a registered schema.

        Parameters:
        -----------
        text : str
            Raw response text, possibly with prose before/after the JSON block.
        schema_id : str
            Key of SCHEMAS.
        context : dict, optional
            Validation context (e.g. {"expected_steps": n} for tutorial_content).

        Returns:
        --------
        pydantic.BaseModel
            Validated instance of the schema model.

        Raises:
        -------
        UnknownSchema, NoJsonFound
        SchemaViolation
            Missing, extra or invalid fields; the message names them.
    '''
    if schema_id not in SCHEMAS:
        raise UnknownSchema(f'Schema {schema_id!r} is not registered')
    data = extract_json(text)
    try:
        return SCHEMAS[schema_id].model_validate(data, context=context)
    except ValidationError as e:
        raise SchemaViolation(f'{schema_id}: {_describe(e)}')
