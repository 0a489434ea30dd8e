"""
    Pipeline Utilities

    Batch driver of the task-to-tutorial workflow: configuration, per-task execution of
    instantiation -> execution -> judging -> tutorial generation with a fresh
    environment per task, and the run reports (success rates, corpus distribution,
    cost ledger, judge agreement, rubric tables).

    Every per-task artifact lives under <output_dir>/<run_id>/tasks/<task_id>/; wall
    clock figures are kept in ledger.json only.

    Functions:
    ----------
    - load_config: PipelineConfig from config.json plus overrides.
    - open_gateway: provider gateway of one task (scripted or http).
    - instantiate_stage / run_stage / judge_stage / generate_stage: one stage of one task.
    - process_task: all stages of one task, failures recorded in status.json.
    - run_single_stage: one stage of one task from the artifacts already on disk.
    - run_pipeline: parallel batch over the corpus + report.
    - report_corpus / category_table: corpus distribution tables.
    - report_costs: CostLedger from transcripts, step counts and a price table.
    - build_report: RunReport from a populated run directory.
"""

import json
import logging
import os
import shutil
import time
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field, fields

import pandas as pd
from tqdm import tqdm

from agent_utils import Trajectory, run_task
from document_utils import synthesize_document
from gui_utils import load_ui_tree
from instantiation_utils import (LEVELS, SOURCES, InstantiatedTask, InstantiationError, classify_task,
                                 dedupe_tasks, load_corpus, load_templates, match_template, rewrite_task,
                                 validate_instantiated)
from judge_utils import (DOCUMENT_METRICS, REFERENCE_AGREEMENT, RUBRICS, VIDEO_METRICS, RubricScore, Verdict,
                         compare_report, correlations, format_mean_variance, aggregate_report, judge_agreement,
                         judge_trajectory, load_ratings, score_distribution, score_tutorial, scores_to_frame)
from provider_utils import Gateway, HttpBackend, ProviderTranscript, ScriptedBackend
from sheet_utils import state_fingerprint
from tutorial_utils import (EncoderFailed, annotate_steps, assemble_package, author_content, filter_steps,
                            load_package, render_background)
from video_utils import synthesize_video

logger = logging.getLogger(__name__)

PROVIDERS = ('scripted', 'http')
MANUAL_HOURS_PER_TUTORIAL = 2.5
REFERENCE_COSTS = {'model': 'GPT-4.1', 'steps': 4.57, 'tokens_k': 132.15, 'dollars': 0.28, 'seconds': 270.58}
LEVEL_COLUMNS = {'SpreadsheetLevel': 'Spreadsheet-Level (%)', 'ExcelLevel': 'Excel-Level (%)'}


class PipelineError(RuntimeError):
    '''Base class of batch-driver failures.'''


class ConfigError(PipelineError):
    pass


class UnknownModelPrice(PipelineError):
    pass


# ----------------------------------------------------------------
# Configuration
# ----------------------------------------------------------------

@dataclass
class PipelineConfig:
    corpus_path: str
    templates_dir: str
    ui_tree_path: str
    output_dir: str = 'out'
    run_id: str = 'seed'
    provider: str = 'scripted'
    script_path: str | None = None
    model: str | None = None
    max_steps: int = 15
    price_table_path: str | None = None
    encoder_command: str | None = None
    tts_command: str | None = None
    render_audio: bool = False
    workers: int = 4
    seed: int = 0
    score_tutorials: bool = True
    dedupe: bool = True
    match_threshold: int = 6
    boilerplate_path: str | None = None
    human_ratings_path: str | None = None

    @property
    def run_dir(self):
        return os.path.join(self.output_dir, self.run_id)

    def task_dir(self, task_id):
        return os.path.join(self.run_dir, 'tasks', task_id)

    def validate(self):
        '''
            Raises ConfigError for missing paths, an unknown provider or counts below 1.
        '''
        if self.provider not in PROVIDERS:
            raise ConfigError(f'provider must be one of {PROVIDERS}, got {self.provider!r}')
        if int(self.max_steps) < 1:
            raise ConfigError(f'max_steps must be >= 1, got {self.max_steps}')
        if int(self.workers) < 1:
            raise ConfigError(f'workers must be >= 1, got {self.workers}')
        required = {'corpus_path': self.corpus_path, 'templates_dir': self.templates_dir,
                    'ui_tree_path': self.ui_tree_path, 'price_table_path': self.price_table_path,
                    'boilerplate_path': self.boilerplate_path}
        if self.provider == 'scripted':
            required['script_path'] = self.script_path
        if self.human_ratings_path:
            required['human_ratings_path'] = self.human_ratings_path
        for name, path in required.items():
            if not path or not os.path.exists(path):
                raise ConfigError(f'{name} {path!r} does not exist')
        return self


_PATH_FIELDS = ('corpus_path', 'templates_dir', 'ui_tree_path', 'output_dir', 'script_path',
                'price_table_path', 'boilerplate_path', 'human_ratings_path')


def load_config(path, **overrides):
    '''
        Reads a PipelineConfig from JSON and applies overrides (None values are ignored).

        Relative paths are resolved against the directory of the config file.

        Raises:
        -------
        ConfigError
            Unknown keys, missing required keys or an invalid resulting config.
    '''
    with open(path, encoding='utf-8') as f:
        doc = json.load(f)
    known = {f.name for f in fields(PipelineConfig)}
    unknown = sorted(set(doc) - known)
    if unknown:
        raise ConfigError(f'{path}: unknown config keys {unknown}')
    doc.update({k: v for k, v in overrides.items() if v is not None})
    base = os.path.dirname(os.path.abspath(path))
    for name in _PATH_FIELDS:
        value = doc.get(name)
        if value and not os.path.isabs(value):
            doc[name] = os.path.normpath(os.path.join(base, value))
    try:
        cfg = PipelineConfig(**doc)
    except TypeError as e:
        raise ConfigError(f'{path}: {e}')
    if cfg.model is None:
        cfg.model = 'scripted' if cfg.provider == 'scripted' else os.environ.get('TUTORFORGE_MODEL')
    return cfg.validate()


def _read_json(path):
    with open(path, encoding='utf-8') as f:
        return json.load(f)


def _write_json(doc, path):
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(doc, f, indent=2, ensure_ascii=False)
    return path


# ----------------------------------------------------------------
# Stages
# ----------------------------------------------------------------

def open_gateway(cfg, task_id):
    '''
        Gateway of one task. The transcript at tasks/<id>/transcript.json is reopened
        when present so stages run separately keep scripted indices aligned.
    '''
    task_dir = cfg.task_dir(task_id)
    os.makedirs(task_dir, exist_ok=True)
    transcript = ProviderTranscript.load(os.path.join(task_dir, 'transcript.json'), cfg.run_id,
                                         root=os.path.abspath(task_dir))
    if cfg.provider == 'scripted':
        backend = ScriptedBackend.from_file(os.path.join(cfg.script_path, f'{task_id}.json'))
    else:
        backend = HttpBackend.from_env()
    return Gateway(backend, transcript)


def _save_transcript(gateway, cfg, task_id):
    gateway.transcript.save(os.path.join(cfg.task_dir(task_id), 'transcript.json'))


def instantiate_stage(cfg, raw, templates, ui_tree, gateway):
    '''
        Stage 1: classify, match, rewrite and validate one raw task.

        Returns:
        --------
        (InstantiatedTask, Template)

        Raises:
        -------
        InstantiationError
            No compatible template, or unresolved objects after rewriting.
    '''
    labels = classify_task(raw, gateway)
    template = match_template(raw, templates, gateway, cfg.match_threshold)
    state = template.load_state(ui_tree)
    task = rewrite_task(raw, template, gateway, state)
    task.labels = labels
    ok, findings = validate_instantiated(task, state)
    doc = {**task.to_dict(), 'valid': ok, 'findings': findings}
    _write_json(doc, os.path.join(cfg.task_dir(raw.id), 'instantiated.json'))
    if not ok:
        raise InstantiationError(f'Task {raw.id}: unresolved objects {findings}')
    logger.debug('Task %s instantiated on %s: %s', raw.id, template.id, task.instruction)
    return task, template


def run_stage(cfg, task, template, ui_tree, gateway):
    '''
        Stage 2: executes the task on a fresh template state and checks the reset
        guarantee (the reloaded template fingerprints as before the run).

        Returns:
        --------
        (Trajectory, bool)
    '''
    traj = run_task(task, template, gateway, cfg.task_dir(task.raw.id), cfg.max_steps, ui_tree)
    reset_ok = None
    if traj.initial_digest is not None:
        reset_ok = state_fingerprint(template.load_state(ui_tree)) == traj.initial_digest
        if not reset_ok:
            logger.warning('Task %s: template %s changed during the run', task.raw.id, template.id)
    return traj, reset_ok


def judge_stage(cfg, traj, gateway):
    '''Stage 2b: verdict of a trajectory, written to verdict.json.'''
    task_dir = cfg.task_dir(traj.task.raw.id)
    verdict = judge_trajectory(traj, gateway, task_dir)
    _write_json(verdict.to_dict(), os.path.join(task_dir, 'verdict.json'))
    return verdict


def generate_stage(cfg, traj, gateway, boilerplate):
    '''
        Stage 3: filtering, annotation, authoring, package, document, video and
        (optionally) rubric scoring of one successful trajectory.

        Returns:
        --------
        (TutorialPackage, list of str)
            The package and non-fatal warnings (encoder failures).
    '''
    task_dir = cfg.task_dir(traj.task.raw.id)
    steps = annotate_steps(filter_steps(traj), task_dir)
    _write_json([s.to_dict() for s in steps], os.path.join(task_dir, 'filtered_steps.json'))
    content = author_content(traj.task, steps, gateway)
    render_background(os.path.join(task_dir, 'background.png'))
    package = assemble_package(traj.task.raw.id, content, steps, task_dir, traj.initial_screenshot,
                               traj.final_screenshot, boilerplate)
    synthesize_document(package, task_dir)
    warnings = []
    try:
        synthesize_video(package, task_dir, cfg.encoder_command, cfg.tts_command, cfg.render_audio)
    except EncoderFailed as e:
        logger.warning('Task %s: %s', package.task_id, e)
        warnings.append(f'EncoderFailed: {e}')
    if cfg.score_tutorials:
        scores = {kind: [s.to_dict() for s in score_tutorial(package, kind, gateway, task_dir)] for kind in RUBRICS}
        _write_json(scores, os.path.join(task_dir, 'scores.json'))
    return package, warnings


def process_task(cfg, raw, templates, ui_tree, boilerplate):
    '''
        Runs every stage of one task. Never raises: failures end up in status.json.

        Returns:
        --------
        dict
            status.json content plus the task's wall seconds under "_wall_seconds".
    '''
    started = time.perf_counter()
    task_dir = cfg.task_dir(raw.id)
    #Full runs start from an empty task directory so transcript indices restart at 0
    shutil.rmtree(task_dir, ignore_errors=True)
    os.makedirs(task_dir, exist_ok=True)
    status = {'task_id': raw.id, 'source': raw.source, 'status': 'Error', 'stage': 'instantiate',
              'template_id': None, 'level': None, 'trajectory_status': None, 'steps': 0,
              'filtered_steps': 0, 'verdict': None, 'reset_ok': None, 'error': None, 'warnings': []}
    gateway = None
    try:
        gateway = open_gateway(cfg, raw.id)
        task, template = instantiate_stage(cfg, raw, templates, ui_tree, gateway)
        status.update(template_id=template.id, level=task.labels.level, stage='run')
        traj, status['reset_ok'] = run_stage(cfg, task, template, ui_tree, gateway)
        status.update(trajectory_status=traj.status, steps=len(traj.steps), stage='judge')
        verdict = judge_stage(cfg, traj, gateway)
        status['verdict'] = verdict.success
        if not verdict.success:
            status.update(status='Failed', stage='judge', error=verdict.rationale)
        else:
            status['stage'] = 'generate'
            package, status['warnings'] = generate_stage(cfg, traj, gateway, boilerplate)
            status.update(status='Success', stage='done', filtered_steps=len(package.content.steps))
    except Exception as e:
        status['error'] = f'{type(e).__name__}: {e}'
        logger.warning('Task %s failed at %s: %s', raw.id, status['stage'], status['error'])
    finally:
        if gateway is not None:
            _save_transcript(gateway, cfg, raw.id)
    _write_json(status, os.path.join(task_dir, 'status.json'))
    return {**status, '_wall_seconds': time.perf_counter() - started}


STAGES = ('instantiate', 'run', 'judge', 'generate')


def run_single_stage(cfg, stage, raw, templates, ui_tree, boilerplate):
    '''
        Runs one stage of one task from the artifacts the previous stages left in its
        task directory. The instantiate stage starts the task directory afresh.

        Returns:
        --------
        object
            (InstantiatedTask, Template), (Trajectory, reset_ok), Verdict or
            (TutorialPackage, warnings).

        Raises:
        -------
        PipelineError
            Unknown stage, or the previous stage's artifact is missing.
    '''
    if stage not in STAGES:
        raise PipelineError(f'stage must be one of {STAGES}, got {stage!r}')
    task_dir = cfg.task_dir(raw.id)
    if stage == 'instantiate':
        shutil.rmtree(task_dir, ignore_errors=True)
    os.makedirs(task_dir, exist_ok=True)
    needed = {'run': 'instantiated.json', 'judge': 'trajectory.json', 'generate': 'trajectory.json'}.get(stage)
    if needed and not os.path.exists(os.path.join(task_dir, needed)):
        raise PipelineError(f'Task {raw.id}: {needed} missing, run the previous stage first')
    gateway = open_gateway(cfg, raw.id)
    try:
        if stage == 'instantiate':
            return instantiate_stage(cfg, raw, templates, ui_tree, gateway)
        if stage == 'run':
            task = load_instantiated(cfg, raw.id)
            template = next((t for t in templates if t.id == task.template_id), None)
            if template is None:
                raise PipelineError(f'Task {raw.id}: template {task.template_id!r} not found')
            return run_stage(cfg, task, template, ui_tree, gateway)
        traj = load_trajectory(cfg, raw.id)
        if stage == 'judge':
            return judge_stage(cfg, traj, gateway)
        return generate_stage(cfg, traj, gateway, boilerplate)
    finally:
        _save_transcript(gateway, cfg, raw.id)


def load_inputs(cfg):
    '''Corpus (deduplicated when configured), templates, ui tree and boilerplate of a config.'''
    tasks = load_corpus(cfg.corpus_path)
    if cfg.dedupe:
        tasks, dropped = dedupe_tasks(tasks)
        for task, kept_id in dropped:
            logger.info('Task %s dropped as near-duplicate of %s', task.id, kept_id)
    return tasks, load_templates(cfg.templates_dir), load_ui_tree(cfg.ui_tree_path), _read_json(cfg.boilerplate_path)


def run_pipeline(cfg, task_ids=None):
    '''
        Runs the whole workflow over the corpus and writes report.md and ledger.json.

        Parameters:
        -----------
        cfg : PipelineConfig
        task_ids : iterable of str, optional
            Restrict the batch to these tasks.

        Returns:
        --------
        RunReport
    '''
    tasks, templates, ui_tree, boilerplate = load_inputs(cfg)
    if task_ids:
        wanted = set(task_ids)
        tasks = [t for t in tasks if t.id in wanted]
    os.makedirs(cfg.run_dir, exist_ok=True)
    wall = {}
    with ThreadPoolExecutor(max_workers=int(cfg.workers)) as executor:
        futures = {executor.submit(process_task, cfg, raw, templates, ui_tree, boilerplate): raw.id
                   for raw in tasks}
        for future in tqdm(as_completed(futures), total=len(futures), desc='Tasks'):
            outcome = future.result()
            wall[outcome['task_id']] = outcome['_wall_seconds']
    report = build_report(cfg, tasks, wall)
    report.write(cfg.run_dir)
    return report


# ----------------------------------------------------------------
# Reports
# ----------------------------------------------------------------

def corpus_records(tasks, statuses=None):
    '''
        Category rows of a corpus: classified labels from status/instantiated files
        when available, the authored labels of the corpus otherwise.
    '''
    rows = []
    for task in tasks:
        labels = dict(task.meta.get('labels') or {})
        if statuses and statuses.get(task.id, {}).get('labels'):
            labels.update(statuses[task.id]['labels'])
        rows.append({'id': task.id, 'source': task.source, 'level': labels.get('level'),
                     'operation_category': labels.get('operation_category'),
                     'object_category': labels.get('object_category')})
    return rows


def report_corpus(records):
    '''
        Count and level percentages per source, plus an "All" row.

        Parameters:
        -----------
        records : list of dict
            {source, level, ...} rows.

        Returns:
        --------
        pandas.DataFrame
            Index = sources in canonical order (empty ones omitted) + "All"; columns
            Count, Spreadsheet-Level (%), Excel-Level (%), rounded to 2 decimals.
    '''
    frame = pd.DataFrame(records, columns=['source', 'level'])
    rows = {}
    for source in [*SOURCES, 'All']:
        part = frame if source == 'All' else frame[frame['source'] == source]
        if part.empty:
            continue
        row = {'Count': len(part)}
        for level in LEVELS:
            row[LEVEL_COLUMNS[level]] = round(100.0 * (part['level'] == level).sum() / len(part), 2)
        rows[source] = row
    return pd.DataFrame.from_dict(rows, orient='index', columns=['Count', *LEVEL_COLUMNS.values()])


def category_table(records, column):
    '''Counts per operation or object category, most frequent first, ties by name.'''
    frame = pd.DataFrame(records)
    if frame.empty or column not in frame:
        return pd.DataFrame(columns=['Count'])
    counts = frame[column].dropna().value_counts()
    counts = counts.sort_index().sort_values(ascending=False, kind='stable')
    return counts.rename('Count').to_frame()


def load_prices(path):
    return _read_json(path)


def price_of(prices, model, prompt_tokens, completion_tokens):
    '''
        Dollar cost of a token count; prices are dollars per 1K tokens.

        Raises:
        -------
        UnknownModelPrice
    '''
    if model not in prices:
        raise UnknownModelPrice(f'No price for model {model!r}; known: {sorted(prices)}')
    rate = prices[model]
    return (prompt_tokens * rate['prompt'] + completion_tokens * rate['completion']) / 1000.0


@dataclass
class CostLedger:
    model: str
    rows: list = field(default_factory=list)

    def frame(self):
        return pd.DataFrame(self.rows, columns=['task_id', 'steps', 'calls', 'prompt_tokens', 'completion_tokens',
                                                'tokens_k', 'dollars', 'latency', 'wall_seconds'])

    def totals(self):
        frame = self.frame()
        return {c: (int(frame[c].sum()) if c in ('steps', 'calls', 'prompt_tokens', 'completion_tokens')
                    else float(frame[c].sum())) for c in frame.columns if c != 'task_id'}

    def means(self):
        frame = self.frame()
        if frame.empty:
            return {c: 0.0 for c in frame.columns if c != 'task_id'}
        return {c: float(frame[c].mean()) for c in frame.columns if c != 'task_id'}

    def manual_speedup(self, hours=MANUAL_HOURS_PER_TUTORIAL):
        '''How many times faster than manual authoring, from the mean wall seconds per task.'''
        seconds = self.means()['wall_seconds']
        return hours * 3600.0 / seconds if seconds else None

    def to_dict(self):
        return {'model': self.model, 'rows': self.rows, 'totals': self.totals(), 'means': self.means(),
                'manual_speedup': self.manual_speedup(), 'reference': REFERENCE_COSTS}


def report_costs(transcripts, steps, prices, model, wall_seconds=None):
    '''
        Cost ledger of a run.

        Parameters:
        -----------
        transcripts : dict
            task id -> ProviderTranscript (or its to_dict()).
        steps : dict
            task id -> trajectory step count.
        prices : dict
            model -> {"prompt": $/1K, "completion": $/1K}.
        model : str
        wall_seconds : dict, optional

        Returns:
        --------
        CostLedger
            One row per task, sorted by id; totals are the sums of the rows, which are the
            sums of the transcript entries.

        Raises:
        -------
        UnknownModelPrice
    '''
    if model not in prices:
        raise UnknownModelPrice(f'No price for model {model!r}; known: {sorted(prices)}')
    ledger = CostLedger(model)
    for task_id in sorted(transcripts):
        entries = transcripts[task_id]
        entries = entries.entries if hasattr(entries, 'entries') else entries.get('entries', [])
        prompt = sum(int(e['prompt_tokens']) for e in entries)
        completion = sum(int(e['completion_tokens']) for e in entries)
        ledger.rows.append({
            'task_id': task_id,
            'steps': int(steps.get(task_id, 0)),
            'calls': len(entries),
            'prompt_tokens': prompt,
            'completion_tokens': completion,
            'tokens_k': (prompt + completion) / 1000.0,
            'dollars': price_of(prices, model, prompt, completion),
            'latency': float(sum(e['latency'] for e in entries)),
            'wall_seconds': float((wall_seconds or {}).get(task_id, 0.0)),
        })
    return ledger


@dataclass
class RunReport:
    statuses: list
    corpus: pd.DataFrame
    operations: pd.DataFrame
    objects: pd.DataFrame
    ledger: CostLedger
    agreement: float | None = None
    rubric_tables: dict = field(default_factory=dict)
    human_tables: dict = field(default_factory=dict)
    human_correlations: dict = field(default_factory=dict)

    def success_rates(self):
        '''Percentage of attempted tasks judged successful, per source and overall.'''
        frame = pd.DataFrame(self.statuses, columns=['task_id', 'source', 'status'])
        rows = {}
        for source in [*SOURCES, 'All']:
            part = frame if source == 'All' else frame[frame['source'] == source]
            if part.empty:
                continue
            rows[source] = {'Attempted': len(part), 'Success': int((part['status'] == 'Success').sum()),
                            'Success rate (%)': round(100.0 * (part['status'] == 'Success').mean(), 2)}
        return pd.DataFrame.from_dict(rows, orient='index', columns=['Attempted', 'Success', 'Success rate (%)'])

    def mean_steps(self):
        steps = [s['steps'] for s in self.statuses if s['status'] == 'Success']
        return sum(steps) / len(steps) if steps else 0.0

    def to_markdown(self):
        totals = self.ledger.totals()
        means = self.ledger.means()
        cost = pd.DataFrame([
            {'Model': self.ledger.model, '# Step': round(means['steps'], 2),
             'Token (k)': round(means['tokens_k'], 2), 'Money ($)': round(means['dollars'], 4)},
            {'Model': f"{REFERENCE_COSTS['model']} (reference)", '# Step': REFERENCE_COSTS['steps'],
             'Token (k)': REFERENCE_COSTS['tokens_k'], 'Money ($)': REFERENCE_COSTS['dollars']},
        ])
        failures = [s for s in self.statuses if s['status'] != 'Success']
        lines = ['# Run report', '',
                 '## Success rate', '', self.success_rates().to_markdown(), '',
                 f'Mean step count of successful tasks: {self.mean_steps():.2f}', '',
                 '## Corpus', '', self.corpus.to_markdown(), '',
                 '### Operation categories', '', self.operations.to_markdown(), '',
                 '### Object categories', '', self.objects.to_markdown(), '',
                 '## Cost per task', '', cost.to_markdown(index=False), '',
                 f"Totals: {totals['calls']} calls, {totals['prompt_tokens']} prompt tokens, "
                 f"{totals['completion_tokens']} completion tokens, ${totals['dollars']:.4f}", '',
                 '## Judge agreement', '']
        if self.agreement is None:
            lines.append('No authored verdicts to compare against.')
        else:
            lines.append(f'Agreement with authored labels: {self.agreement:.2f}% (reference {REFERENCE_AGREEMENT}%)')
        lines.append('')
        for kind, table in self.rubric_tables.items():
            lines += [f'## LLM rubric scores ({kind})', '', table.to_markdown(), '']
        for kind, table in self.human_tables.items():
            lines += [f'## Human vs LLM ({kind})', '', table.to_markdown(), '']
        for kind, corr in self.human_correlations.items():
            lines += [f"Correlation ({kind}, {corr['cases']} cases): Pearson {_fmt(corr['pearson'])}, "
                      f"Kendall tau-b {_fmt(corr['kendall'])}", '']
        if failures:
            lines += ['## Failed tasks', '', pd.DataFrame(failures, columns=['task_id', 'status', 'stage', 'error'])
                      .to_markdown(index=False), '']
        return '\n'.join(lines)

    def write(self, run_dir):
        with open(os.path.join(run_dir, 'report.md'), 'w', encoding='utf-8') as f:
            f.write(self.to_markdown())
        _write_json(self.ledger.to_dict(), os.path.join(run_dir, 'ledger.json'))
        logger.info('Report written to %s', run_dir)


def _fmt(value):
    return 'n/a' if value is None else f'{value:.4f}'


def _llm_frames(cfg, statuses):
    frames = {kind: [] for kind in RUBRICS}
    for status in statuses:
        path = os.path.join(cfg.task_dir(status['task_id']), 'scores.json')
        if status['status'] != 'Success' or not os.path.exists(path):
            continue
        for kind, scores in _read_json(path).items():
            frames[kind].append(scores_to_frame(f"{status['task_id']}/{kind}", f'llm:{cfg.model}',
                                                [RubricScore(**s) for s in scores]))
    return {kind: pd.concat(parts, ignore_index=True) for kind, parts in frames.items() if parts}


def build_report(cfg, tasks, wall_seconds=None, ratings_path=None):
    '''
        Reduces a populated run directory to a RunReport.

        Parameters:
        -----------
        cfg : PipelineConfig
        tasks : list of RawTask
        wall_seconds : dict, optional
            task id -> seconds, ledger only.
        ratings_path : str, optional
            Human ratings CSV for the Human vs LLM tables (defaults to cfg.human_ratings_path).
    '''
    statuses, transcripts, verdicts = [], {}, {}
    for task in tasks:
        task_dir = cfg.task_dir(task.id)
        status_path = os.path.join(task_dir, 'status.json')
        if not os.path.exists(status_path):
            continue
        status = _read_json(status_path)
        inst_path = os.path.join(task_dir, 'instantiated.json')
        if os.path.exists(inst_path):
            status['labels'] = _read_json(inst_path).get('labels')
        statuses.append(status)
        transcripts[task.id] = ProviderTranscript.load(os.path.join(task_dir, 'transcript.json'), cfg.run_id)
        if status['verdict'] is not None:
            verdicts[task.id] = status['verdict']
    by_id = {s['task_id']: s for s in statuses}
    records = corpus_records([t for t in tasks if t.id in by_id], by_id)
    ledger = report_costs(transcripts, {s['task_id']: s['steps'] for s in statuses},
                          load_prices(cfg.price_table_path), cfg.model, wall_seconds)
    reference = {t.id: bool(t.meta['expected_success']) for t in tasks if 'expected_success' in t.meta}
    llm = _llm_frames(cfg, statuses)
    metrics = {'document': DOCUMENT_METRICS, 'video': VIDEO_METRICS}
    report = RunReport(
        statuses=statuses,
        corpus=report_corpus(records),
        operations=category_table(records, 'operation_category'),
        objects=category_table(records, 'object_category'),
        ledger=ledger,
        agreement=judge_agreement(verdicts, reference),
        rubric_tables={k: format_mean_variance(aggregate_report(f, metrics[k])).rename('mean (variance)').to_frame()
                       for k, f in llm.items()},
    )
    ratings_path = ratings_path or cfg.human_ratings_path
    if ratings_path:
        human = load_ratings(ratings_path)
        for kind, frame in llm.items():
            part = human[human['case_id'].str.endswith(f'/{kind}')]
            if part.empty:
                continue
            groups = {'Human': part, 'LLM': frame}
            report.human_tables[kind] = compare_report(groups, metrics[kind])
            report.human_tables[f'{kind} distribution'] = score_distribution(groups)
            report.human_correlations[kind] = correlations(part, frame)
    return report


def load_trajectory(cfg, task_id):
    return Trajectory.load(os.path.join(cfg.task_dir(task_id), 'trajectory.json'))


def load_instantiated(cfg, task_id):
    doc = _read_json(os.path.join(cfg.task_dir(task_id), 'instantiated.json'))
    return InstantiatedTask.from_dict(doc)


def load_task_package(cfg, task_id):
    return load_package(os.path.join(cfg.task_dir(task_id), 'tutorial.json'))


def load_verdict(cfg, task_id):
    path = os.path.join(cfg.task_dir(task_id), 'verdict.json')
    return Verdict(**_read_json(path)) if os.path.exists(path) else None
