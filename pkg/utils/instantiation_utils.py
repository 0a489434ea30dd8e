"""
    Task Instantiation Utilities

    Stage 1 of the pipeline: raw task descriptions are classified (operation, object,
    level), matched against the workbook templates and rewritten into concrete,
    executable instructions whose referenced objects are then checked mechanically
    against the loaded template.

    Functions:
    ----------
    - load_corpus: JSONL corpus file to a list of RawTask.
    - load_templates: template directory to a list of Template.
    - dedupe_tasks: near-duplicate removal by normalized-token Jaccard similarity.
    - classify_task: provider-backed operation/object/level labels.
    - match_template: provider-scored template selection with a compatibility threshold.
    - rewrite_task: provider-backed rewrite into an InstantiatedTask.
    - validate_instantiated: checks every required object against the template state.
"""

import glob
import json
import logging
import os
import re
from dataclasses import dataclass, field

from sheet_utils import SheetError, load_workbook, parse_range

logger = logging.getLogger(__name__)

SOURCES = ('Search', 'Websites', 'InApp')
LEVELS = ('SpreadsheetLevel', 'ExcelLevel')
VISIBLE_GRID = 'A1:L26'
MATCH_THRESHOLD = 6
DEDUPE_THRESHOLD = 0.9


class InstantiationError(ValueError):
    '''Base class of every Stage-1 failure.'''


class NoCompatibleTemplate(InstantiationError):
    pass


class TemplateLoadError(InstantiationError):
    pass


@dataclass(frozen=True)
class RawTask:
    id: str
    text: str
    source: str
    meta: dict = field(default_factory=dict, compare=False, hash=False)

    def __post_init__(self):
        if not str(self.text).strip():
            raise InstantiationError(f'Task {self.id}: text is empty')
        if self.source not in SOURCES:
            raise InstantiationError(f'Task {self.id}: source {self.source!r} not in {SOURCES}')

    def to_dict(self):
        return {'id': self.id, 'text': self.text, 'source': self.source}


@dataclass(frozen=True)
class TaskLabels:
    operation_category: str
    object_category: str
    level: str

    def to_dict(self):
        return {'operation_category': self.operation_category,
                'object_category': self.object_category, 'level': self.level}


@dataclass(frozen=True)
class Template:
    id: str
    workbook_path: str
    screenshot_paths: tuple
    description: str

    def load_state(self, ui_tree=None):
        '''
            Fresh AppState of this template. Raises TemplateLoadError.
        '''
        try:
            return load_workbook(self.workbook_path, ui_tree)
        except SheetError as e:
            raise TemplateLoadError(f'Template {self.id}: {e}')


@dataclass
class InstantiatedTask:
    raw: RawTask
    template_id: str
    instruction: str
    required_objects: list = field(default_factory=list)
    labels: TaskLabels | None = None

    def to_dict(self):
        return {
            'raw': self.raw.to_dict(),
            'template_id': self.template_id,
            'instruction': self.instruction,
            'required_objects': list(self.required_objects),
            'labels': self.labels.to_dict() if self.labels else None,
        }

    @classmethod
    def from_dict(cls, doc):
        labels = TaskLabels(**doc['labels']) if doc.get('labels') else None
        return cls(RawTask(**doc['raw']), doc['template_id'], doc['instruction'],
                   list(doc.get('required_objects', [])), labels)


# ----------------------------------------------------------------
# Loading
# ----------------------------------------------------------------

def load_corpus(path):
    '''
        Reads the task corpus.

        Parameters:
        -----------
        path : str
            JSONL file, one task per line with at least {id, text, source}. Every other
            field (authored labels, template, plan, expected_success...) is kept in meta.

        Returns:
        --------
        list of RawTask

        Raises:
        -------
        InstantiationError
            For unreadable lines, duplicate ids, empty text or unknown sources.
    '''
    tasks = []
    seen = set()
    with open(path, encoding='utf-8') as f:
        for number, line in enumerate(f, 1):
            if not line.strip():
                continue
            try:
                doc = json.loads(line)
            except json.JSONDecodeError as e:
                raise InstantiationError(f'{path}:{number}: {e}')
            task_id = str(doc.pop('id', '')).strip()
            if not task_id or task_id in seen:
                raise InstantiationError(f'{path}:{number}: missing or duplicate id {task_id!r}')
            seen.add(task_id)
            tasks.append(RawTask(task_id, doc.pop('text', ''), doc.pop('source', ''), doc))
    logger.info('Loaded %d tasks from %s', len(tasks), path)
    return tasks


def load_templates(templates_dir):
    '''
        Loads every template sub-directory ({id}/template.json, description.txt, *.png).

        Returns:
        --------
        list of Template
            Sorted by id.
    '''
    templates = []
    for workbook_path in sorted(glob.glob(os.path.join(templates_dir, '*', 'template.json'))):
        folder = os.path.dirname(workbook_path)
        description_path = os.path.join(folder, 'description.txt')
        if not os.path.exists(description_path):
            raise TemplateLoadError(f'{folder} has no description.txt')
        with open(description_path, encoding='utf-8') as f:
            description = f.read().strip()
        screenshots = tuple(sorted(glob.glob(os.path.join(folder, '*.png'))))
        templates.append(Template(os.path.basename(folder), workbook_path, screenshots, description))
    if not templates:
        raise TemplateLoadError(f'No templates under {templates_dir}')
    return templates


_TOKEN_RE = re.compile(r'[a-z0-9]+')


def _tokens(text):
    return set(_TOKEN_RE.findall(str(text).lower()))


def jaccard(a, b):
    ta, tb = _tokens(a), _tokens(b)
    if not ta and not tb:
        return 1.0
    return len(ta & tb) / len(ta | tb)


def dedupe_tasks(tasks, threshold=DEDUPE_THRESHOLD):
    '''
        Drops near-duplicate tasks, keeping the first occurrence.

        Parameters:
        -----------
        tasks : list of RawTask
        threshold : float
            Normalized-token Jaccard similarity at or above which a task is a duplicate.

        Returns:
        --------
        (list of RawTask, list of (str, str))
            Kept tasks and (dropped id, kept id it duplicates) pairs.
    '''
    kept = []
    dropped = []
    for task in tasks:
        twin = next((k for k in kept if jaccard(task.text, k.text) >= threshold), None)
        if twin is None:
            kept.append(task)
        else:
            dropped.append((task.id, twin.id))
    if dropped:
        logger.info('Dropped %d near-duplicate tasks', len(dropped))
    return kept, dropped


# ----------------------------------------------------------------
# Provider-backed steps
# ----------------------------------------------------------------

CLASSIFY_PROMPT = '''You label spreadsheet help requests.
Extract the operation (verb) and the object it acts on, and decide the level:
"SpreadsheetLevel" when the task changes workbook content (cells, rows, charts, formats),
"ExcelLevel" when it targets the application itself (toolbars, panes, options).
Answer with JSON {{"operation_category": ..., "object_category": ..., "level": ...}}.

Task: {text}
'''

MATCH_PROMPT = '''Rate from 0 to 10 how well the workbook below supports the task.
10 means every object the task needs exists in the workbook; 0 means the task cannot be
performed on it at all. Answer with JSON {{"score": <int>, "reason": <text>}}.

Task: {text}

Workbook {template_id}:
{description}
'''

REWRITE_PROMPT = '''Rewrite the task into one clear, executable instruction for the workbook below.
Name concrete sheets, ranges (A1 notation), columns, charts and commands. List the objects
the instruction relies on as "range:<A1>", "chart:<type or id>", "command:<command id>" or
"column:<header>". Answer with JSON {{"instruction": ..., "required_objects": [...]}}.

Task: {text}

Workbook {template_id}:
{description}
Used ranges: {used}
'''


def snake_case(text):
    return re.sub(r'[^a-z0-9]+', '_', str(text).strip().lower()).strip('_')


def normalise_level(text):
    '''Maps free-form level answers onto SpreadsheetLevel / ExcelLevel.'''
    key = snake_case(text).replace('_', '')
    if key.startswith(('excel', 'application', 'app')):
        return 'ExcelLevel'
    if key.startswith(('spreadsheet', 'sheet', 'workbook', 'content')):
        return 'SpreadsheetLevel'
    raise InstantiationError(f'Level {text!r} is neither SpreadsheetLevel nor ExcelLevel')


def classify_task(task, gateway):
    '''
        Extracts operation, object and level of a raw task.

        Parameters:
        -----------
        task : RawTask
        gateway : provider_utils.Gateway

        Returns:
        --------
        TaskLabels
            operation/object in lower-case snake case.

        Raises:
        -------
        SchemaViolation
            If the provider output does not match the task_labels schema.
    '''
    out = gateway.ask('classifier', CLASSIFY_PROMPT.format(text=task.text), schema_id='task_labels')
    return TaskLabels(snake_case(out.operation_category), snake_case(out.object_category),
                      normalise_level(out.level))


def match_template(task, templates, gateway, threshold=MATCH_THRESHOLD):
    '''
        Selects the most compatible template for a task.

        Every template is scored by the provider (0-10) in id order, so permuting the
        input list never changes the calls nor the outcome. The highest score wins and
        ties go to the lowest id.

        Parameters:
        -----------
        task : RawTask
        templates : list of Template
        gateway : provider_utils.Gateway
        threshold : int
            Minimum winning score.

        Returns:
        --------
        Template

        Raises:
        -------
        NoCompatibleTemplate
            When the best score is below threshold.
    '''
    if not templates:
        raise NoCompatibleTemplate(f'Task {task.id}: no templates to match against')
    best, best_score = None, -1
    for template in sorted(templates, key=lambda t: t.id):
        prompt = MATCH_PROMPT.format(text=task.text, template_id=template.id, description=template.description)
        score = gateway.ask('instantiator', prompt, images=template.screenshot_paths[:1],
                            schema_id='template_score').score
        logger.debug('Task %s vs template %s: %d', task.id, template.id, score)
        if score > best_score:
            best, best_score = template, score
    if best_score < threshold:
        raise NoCompatibleTemplate(f'Task {task.id}: best template score {best_score} below {threshold}')
    return best


def _used_ranges(state):
    return ', '.join(f'{s.name}!{s.used_range}' for s in state.workbook if s.used_range) or 'none'


def rewrite_task(task, template, gateway, state=None):
    '''
        Rewrites a raw task into a concrete instruction for the matched template.

        Parameters:
        -----------
        task : RawTask
        template : Template
        gateway : provider_utils.Gateway
        state : AppState, optional
            Loaded template state, used to list the used ranges in the prompt.

        Returns:
        --------
        InstantiatedTask
    '''
    state = state if state is not None else template.load_state()
    prompt = REWRITE_PROMPT.format(text=task.text, template_id=template.id,
                                   description=template.description, used=_used_ranges(state))
    out = gateway.ask('instantiator', prompt, schema_id='instantiated_task')
    return InstantiatedTask(task, template.id, out.instruction.strip(),
                            [o.strip() for o in out.required_objects if o.strip()])


# ----------------------------------------------------------------
# Validation
# ----------------------------------------------------------------

_A1_IN_TEXT_RE = re.compile(r'(?<![A-Za-z0-9!])([A-Z]{1,3}[1-9][0-9]*(?::[A-Z]{1,3}[1-9][0-9]*)?)(?![A-Za-z0-9])')


def _resolve_range(text, state):
    sheet_name, _, ref = text.rpartition('!')
    sheets = [s for s in state.workbook if s.name == sheet_name.strip("'")] if sheet_name else [state.sheet]
    if not sheets:
        return False
    try:
        rng = parse_range(ref)
    except SheetError:
        return False
    used = sheets[0].used_range
    return used is not None and rng.within(used)


def _resolve(kind, value, state):
    if kind == 'range':
        return _resolve_range(value, state)
    if kind == 'chart':
        return any(value in (c.id, c.chart_type) for s in state.workbook for c in s.charts)
    if kind == 'command':
        return state.ui_tree is not None and state.ui_tree.has_command(value)
    if kind == 'column':
        wanted = value.strip().lower()
        return any(wanted == h.strip().lower()
                   for s in state.workbook if s.used_range
                   for h in s.header_values(s.used_range))
    return False


def validate_instantiated(task, state):
    '''
        Checks that every object an instantiated task relies on exists in the template.

        Parameters:
        -----------
        task : InstantiatedTask
        state : AppState
            Freshly loaded template state (with its ui tree attached).

        Returns:
        --------
        (bool, list of str)
            True iff nothing is unresolved; findings such as "chart: pie" or
            "range: Z99" for every unresolved object or out-of-grid instruction reference.
    '''
    findings = []
    for obj in task.required_objects:
        kind, _, value = obj.partition(':')
        kind, value = kind.strip().lower(), value.strip()
        if not value or not _resolve(kind, value, state):
            findings.append(f'{kind}: {value}')
    grid = parse_range(VISIBLE_GRID)
    for ref in _A1_IN_TEXT_RE.findall(task.instruction):
        try:
            inside = parse_range(ref).within(grid)
        except SheetError:
            inside = False
        if not inside:
            findings.append(f'range: {ref}')
    return not findings, findings
