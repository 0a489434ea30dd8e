"""
    Seed Data Utilities

    Builds the offline seed the pipeline runs on without any network access: template
    screenshots, the published JSON schemas, and one scripted provider transcript per
    corpus task. Every authored plan is replayed in the simulator first, so a script is
    only written for plans that actually reach their goal; the tutorial texts are
    derived from the steps that survive trajectory filtering.

    Functions:
    ----------
    - plan_actions: AgentActions of a task's authored plan.
    - replay_plan: executes a plan from the template state, failing on the first error.
    - script_for_task: scripted responses of every provider role for one task.
    - render_template_screenshots: screenshot.png of every template.
    - published_schemas: the JSON schemas shipped in data/, by file name.
    - write_schemas: ui_tree.schema.json and tutorial.schema.json.
    - build_seed: the whole seed under a data directory.
"""

import json
import logging
import os
import zlib

import numpy as np
from tqdm import tqdm

from agent_utils import AgentAction, Finish, StepRecord, Trajectory, assign_marks, execute
from gui_utils import ActionResult, UiTreeSpec, accessibility_snapshot, load_ui_tree
from instantiation_utils import InstantiatedTask, load_corpus, load_templates
from judge_utils import RUBRICS
from render_utils import render_screenshot, save_png
from sheet_utils import state_fingerprint
from tutorial_utils import filter_trajectory, package_schema

logger = logging.getLogger(__name__)

MATCH_SCORE = 9
MISMATCH_SCORE = 2
FINISH_REASON = 'The instruction has been carried out.'

KEY_DESCRIPTIONS = {
    'ctrl+a': 'Press Ctrl+A to select the whole table.',
    'ctrl+c': 'Press Ctrl+C to copy the selection.',
    'ctrl+v': 'Press Ctrl+V to paste.',
    'escape': 'Press Esc to close the open menu.',
}


class SeedError(RuntimeError):
    pass


def plan_actions(raw):
    '''AgentActions of the authored plan stored in a corpus task's meta.'''
    return [AgentAction.from_dict(step['action']) for step in raw.meta.get('plan', [])]


def replay_plan(raw, template, ui_tree):
    '''
        Executes the authored plan of a task from a fresh template state.

        Returns:
        --------
        list of dict
            One entry per step: state before, action, mark of the clicked node, result,
            target name and digest after.

        Raises:
        -------
        SeedError
            When a clicked node is not on screen or a step fails.
    '''
    state = template.load_state(ui_tree)
    replayed = []
    for position, (step, action) in enumerate(zip(raw.meta['plan'], plan_actions(raw)), 1):
        marks = {node_id: mark for mark, node_id in assign_marks(accessibility_snapshot(state)).items()}
        mark = None
        if action.variant == 'click':
            if action.node not in marks:
                raise SeedError(f'Task {raw.id} step {position}: {action.node} is not clickable')
            mark = marks[action.node]
        before = state
        state, result, bbox, name = execute(state, action)
        if not result.success:
            raise SeedError(f'Task {raw.id} step {position}: {result.text}')
        replayed.append({'title': step['title'], 'action': action, 'mark': mark, 'before': before,
                         'result': result, 'bbox': bbox, 'name': name,
                         'digest': state_fingerprint(state)})
    return replayed


def _effective(raw, template, ui_tree, replayed):
    #Same filter the generation stage applies, run on the authored steps plus finish
    records = [StepRecord(i, '', r['title'], r['action'], r['result'], r['bbox'], r['name'], r['digest'])
               for i, r in enumerate(replayed, 1)]
    last = replayed[-1]['digest'] if replayed else state_fingerprint(template.load_state(ui_tree))
    records.append(StepRecord(len(records) + 1, '', FINISH_REASON, Finish(FINISH_REASON),
                              ActionResult(True, 'finished'), None, None, last))
    task = InstantiatedTask(raw, template.id, raw.meta['instruction'])
    initial = state_fingerprint(template.load_state(ui_tree))
    traj = Trajectory(task, records, 'Finished', initial, last)
    kept = {s.index for s in filter_trajectory(traj).steps}
    return [r for i, r in enumerate(replayed, 1) if i in kept]


def _lower_first(text):
    return text[:1].lower() + text[1:] if text[1:2].islower() or len(text) < 2 else text


def _written(step):
    '''Document sentence of one executed step.'''
    action = step['action']
    if action.variant == 'click':
        if action.node.startswith('cell.'):
            cell = action.node.split('.', 1)[1]
            return f'Hold Shift and click cell {cell}.' if action.shift else f'Click cell {cell}.'
        name = step['name'] or action.node
        return f'Click **{name}**.'
    if action.variant == 'type':
        return f'Type `{action.text}`.'
    if action.variant == 'keys':
        return KEY_DESCRIPTIONS.get(action.text, f'Press {action.text}.')
    args = action.args
    if action.name == 'select_table_range':
        return f'Select the range {args["range"]}.'
    if action.name == 'set_cell_value':
        return f'Enter {args["value"]} in cell {args["cell"]}.'
    if action.name == 'insert_excel_table':
        return f'Starting at cell {args["anchor"]}, enter {", ".join(args["data"][0])}.'
    if action.name == 'auto_fill':
        return f'Drag the fill handle of {args["source"]} across {args["target"]}.'
    if action.name == 'reorder_columns':
        return 'Drag the columns into their new positions.'
    return f'{step["title"]}.'


def _narration(position, count, title):
    if position == 1:
        lead = 'First'
    elif position == count and count > 1:
        lead = 'Finally'
    else:
        lead = 'Next'
    return f"{lead}, let's {_lower_first(title)}."


def _planner_text(position, step):
    action = step['action']
    out = {'thought': f'I need to {_lower_first(step["title"])}.', 'action': action.variant}
    if action.variant == 'click':
        out['mark'] = step['mark']
        if action.shift:
            out['shift'] = True
    elif action.variant == 'type':
        out['text'] = action.text
    elif action.variant == 'keys':
        out['keys'] = action.text
    elif action.variant == 'api':
        out.update(name=action.name, args=action.args)
    payload = json.dumps(out, ensure_ascii=False)
    #Alternate bare JSON and prose-wrapped answers
    if position % 2:
        return payload
    return f'Looking at the screen, the next move is clear.\n```json\n{payload}\n```'


def script_for_task(raw, templates, ui_tree, seed=0):
    '''
        Scripted provider responses for one corpus task.

        Parameters:
        -----------
        raw : RawTask
            Corpus task whose meta carries labels, template, instruction,
            required_objects, title and plan.
        templates : list of Template
        ui_tree : UiCommandTree
        seed : int

        Returns:
        --------
        list of dict
            {role_tag, index, response_text} in call order: classifier, one
            instantiator score per template (id order) plus the rewrite, one planner
            answer per plan step plus finish, the verdict, both authoring calls and the
            document and video rubric scores.
    '''
    meta = raw.meta
    by_id = {t.id: t for t in templates}
    if meta.get('template') not in by_id:
        raise SeedError(f'Task {raw.id}: unknown template {meta.get("template")!r}')
    template = by_id[meta['template']]
    counters = {}
    entries = []

    def add(role, response):
        index = counters.get(role, 0)
        counters[role] = index + 1
        text = response if isinstance(response, str) else json.dumps(response, ensure_ascii=False)
        entries.append({'role_tag': role, 'index': index, 'response_text': text})

    add('classifier', meta['labels'])
    for t in sorted(templates, key=lambda t: t.id):
        matched = t.id == template.id
        add('instantiator', {'score': MATCH_SCORE if matched else MISMATCH_SCORE,
                             'reason': 'The workbook holds the data the task needs.' if matched
                             else 'The workbook lacks the data the task refers to.'})
    add('instantiator', {'instruction': meta['instruction'], 'required_objects': meta.get('required_objects', [])})

    replayed = replay_plan(raw, template, ui_tree)
    for position, step in enumerate(replayed, 1):
        add('planner', _planner_text(position, step))
    add('planner', {'thought': 'The requested change is visible on screen.', 'action': 'finish',
                    'reason': FINISH_REASON})

    success = bool(meta.get('expected_success', True))
    rationale = ('The final screenshot shows the requested change applied to the workbook.' if success
                 else 'The final screenshot does not show the requested change.')
    add('judge', f'Comparing the first and last screenshots.\n{json.dumps({"success": success, "rationale": rationale})}')

    effective = _effective(raw, template, ui_tree, replayed)
    titles = [s['title'] for s in effective]
    title = meta.get('title') or meta['instruction']
    add('author_doc', {'task_title': title, 'task_description': meta['instruction'],
                       'step_titles': titles, 'step_descriptions': [_written(s) for s in effective]})
    add('author_video', {'task_title': title, 'task_description': meta['instruction'],
                         'step_titles': titles,
                         'step_descriptions': [_narration(i, len(titles), t) for i, t in enumerate(titles, 1)]})

    rng = np.random.default_rng([seed, zlib.crc32(raw.id.encode('utf-8'))])
    for kind, rubric in RUBRICS.items():
        scores = [{'metric_id': metric, 'score': int(rng.integers(3, 6)),
                   'justification': f'{label} is adequate for this {kind} tutorial.'}
                  for metric, (label, _) in rubric.items()]
        add('judge', {'scores': scores})
    return entries


def render_template_screenshots(templates_dir, ui_tree):
    '''Writes screenshot.png (initial state) into every template directory.'''
    paths = []
    for template in load_templates(templates_dir):
        path = os.path.join(os.path.dirname(template.workbook_path), 'screenshot.png')
        save_png(render_screenshot(template.load_state(ui_tree)).image, path)
        paths.append(path)
    return paths


def _drop_open_maps(node):
    '''Removes "additionalProperties": true, the JSON Schema default some pydantic releases spell out.'''
    if isinstance(node, dict):
        return {k: _drop_open_maps(v) for k, v in node.items() if not (k == 'additionalProperties' and v is True)}
    if isinstance(node, list):
        return [_drop_open_maps(v) for v in node]
    return node


def published_schemas():
    '''
        JSON schemas of the ui tree config and of tutorial.json.

        Returns:
        --------
        dict
            File name -> schema document, as committed under data/.
    '''
    return {'ui_tree.schema.json': _drop_open_maps(UiTreeSpec.model_json_schema()),
            'tutorial.schema.json': _drop_open_maps(package_schema())}


def write_schemas(data_dir):
    '''Published JSON schemas of the ui tree and of tutorial.json.'''
    written = []
    for name, schema in published_schemas().items():
        path = os.path.join(data_dir, name)
        with open(path, 'w', encoding='utf-8') as f:
            json.dump(schema, f, indent=2, ensure_ascii=False)
        written.append(path)
    return written


def build_seed(data_dir, seed=0, corpus='seed_corpus.jsonl', scripts_dir='scripts'):
    '''
        Builds the seed under data_dir.

        Parameters:
        -----------
        data_dir : str
            Holds ui_tree.json, templates/ and the corpus.
        seed : int
            Seed of the scripted rubric scores.

        Returns:
        --------
        dict
            {"tasks", "scripts", "screenshots", "schemas"} counts and paths.

        Raises:
        -------
        SeedError
            On the first plan that does not replay.
    '''
    ui_tree = load_ui_tree(os.path.join(data_dir, 'ui_tree.json'))
    templates_dir = os.path.join(data_dir, 'templates')
    screenshots = render_template_screenshots(templates_dir, ui_tree)
    templates = load_templates(templates_dir)
    tasks = load_corpus(os.path.join(data_dir, corpus))
    out_dir = os.path.join(data_dir, scripts_dir)
    os.makedirs(out_dir, exist_ok=True)
    for raw in tqdm(tasks, desc='Scripting tasks'):
        entries = script_for_task(raw, templates, ui_tree, seed)
        with open(os.path.join(out_dir, f'{raw.id}.json'), 'w', encoding='utf-8') as f:
            json.dump(entries, f, indent=2, ensure_ascii=False)
    schemas = write_schemas(data_dir)
    logger.info('Seed built: %d scripts, %d template screenshots', len(tasks), len(screenshots))
    return {'tasks': len(tasks), 'scripts': out_dir, 'screenshots': screenshots, 'schemas': schemas}
