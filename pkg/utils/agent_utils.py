"""
    Execution Agent Utilities

    Stage 2 of the pipeline: the reactive perceive -> decide -> execute loop over the
    simulated spreadsheet application. Perception combines the rendered screenshot
    with the accessibility snapshot and a Set-of-Marks overlay; actions mix GUI
    primitives (click, type, key chords) with the six programmatic spreadsheet
    operations. Every step is recorded in a replayable Trajectory.

    Functions:
    ----------
    - assign_marks: deterministic mark numbers for the actionable nodes of a snapshot.
    - perceive: screenshot + nodes + numbered Set-of-Marks overlay of a state.
    - decide: planner prompt -> parsed AgentAction (one reprompt on unparseable output).
    - execute: runs an AgentAction, turning environment errors into failed results.
    - run_task: the loop, writing per-step PNGs and trajectory.json.
    - replay_actions: re-executes recorded actions and returns the digest chain.
"""

import json
import logging
import os
from dataclasses import dataclass, field

from geometry_utils import GRID_VIEWPORT, union_bbox
from gui_utils import (ActionResult, Click, GuiError, PressKeys, Type, UnknownNode, accessibility_snapshot,
                       apply_gui_action, layout_state)
from instantiation_utils import InstantiatedTask, InstantiationError
from provider_utils import NoJsonFound, ProviderRequest, SchemaViolation, parse_structured
from render_utils import draw_marks, render_screenshot, save_png
from sheet_utils import (API_NAMES, RangeRef, auto_fill, insert_excel_table, parse_cell, parse_range, reorder_columns,
                         select_table_range, set_cell_value, state_fingerprint, table2markdown)

logger = logging.getLogger(__name__)

MAX_STEPS = 15
HISTORY_REASONING_CHARS = 200
STATUSES = ('Finished', 'StepLimit', 'Error')


class AgentError(RuntimeError):
    '''Base class of every agent-loop failure.'''


class UnparseableAction(AgentError):
    pass


# ----------------------------------------------------------------
# Observation
# ----------------------------------------------------------------

@dataclass
class Observation:
    screenshot: object
    som_overlay: object
    nodes: list
    mark_index: dict

    @property
    def node_by_id(self):
        return {n.id: n for n in self.nodes}

    def legend(self):
        '''Mark legend lines: every non-cell node, plus cells that hold a value.'''
        by_id = self.node_by_id
        lines = []
        for mark, node_id in self.mark_index.items():
            node = by_id[node_id]
            if node.control_type == 'Cell' and ':' not in node.name:
                continue
            lines.append(f'[{mark}] {node.name} ({node.control_type}, id={node.id})')
        return lines


def assign_marks(nodes):
    '''
        Numbers the actionable nodes of a snapshot.

        Parameters:
        -----------
        nodes : list of AccessibilityNode

        Returns:
        --------
        dict
            mark number (consecutive from 1) -> node id, row-major by bbox top-left.
            Disabled nodes and the dialog frame itself carry no mark.
    '''
    actionable = [n for n in nodes if n.enabled and n.control_type != 'Dialog']
    actionable.sort(key=lambda n: (n.bbox[1], n.bbox[0], n.id))
    return {i: n.id for i, n in enumerate(actionable, 1)}


def perceive(state):
    '''
        Renders the state and builds its Set-of-Marks observation.

        Returns:
        --------
        Observation
    '''
    screenshot = render_screenshot(state)
    nodes = accessibility_snapshot(state)
    mark_index = assign_marks(nodes)
    by_id = {n.id: n for n in nodes}
    som = draw_marks(screenshot.image, [(m, by_id[i].bbox) for m, i in mark_index.items()])
    return Observation(screenshot, som, nodes, mark_index)


# ----------------------------------------------------------------
# Actions
# ----------------------------------------------------------------

API_SIGNATURES = {
    'table2markdown': 'table2markdown(range) - returns the range as a Markdown table',
    'insert_excel_table': 'insert_excel_table(data, anchor) - writes a 2-D list of values with its top-left cell at anchor',
    'select_table_range': 'select_table_range(range) - selects a range',
    'set_cell_value': 'set_cell_value(cell, value) - sets a value or formula',
    'auto_fill': 'auto_fill(source, target) - extends the pattern of source into target',
    'reorder_columns': 'reorder_columns(order) - order[i] is the new column index of used column i',
}


@dataclass(frozen=True)
class AgentAction:
    variant: str #click, type, keys, api, finish
    node: str | None = None
    mark: int | None = None
    shift: bool = False
    text: str | None = None
    name: str | None = None
    args: dict = field(default_factory=dict)
    reason: str | None = None

    def key(self):
        '''Identity of the action for duplicate detection (marks excluded).'''
        return json.dumps([self.variant, self.node, self.shift, self.text, self.name, self.args],
                          sort_keys=True, ensure_ascii=False)

    @property
    def is_observation(self):
        return self.variant == 'finish' or (self.variant == 'api' and self.name == 'table2markdown')

    def describe(self):
        if self.variant == 'api':
            args = ', '.join(f'{k}={json.dumps(v, ensure_ascii=False)}' for k, v in sorted(self.args.items()))
            return f'{self.name}({args})'
        if self.variant == 'click':
            return f'{"shift+click" if self.shift else "click"} {self.node or f"mark {self.mark}"}'
        if self.variant == 'type':
            return f'type {self.text!r}'
        if self.variant == 'keys':
            return f'press {self.text}'
        return f'finish: {self.reason or ""}'.rstrip(': ')

    def to_dict(self):
        doc = {'variant': self.variant}
        for name in ('node', 'mark', 'text', 'name', 'reason'):
            if getattr(self, name) is not None:
                doc[name] = getattr(self, name)
        if self.shift:
            doc['shift'] = True
        if self.args:
            doc['args'] = self.args
        return doc

    @classmethod
    def from_dict(cls, doc):
        return cls(doc['variant'], doc.get('node'), doc.get('mark'), bool(doc.get('shift', False)),
                   doc.get('text'), doc.get('name'), dict(doc.get('args', {})), doc.get('reason'))


def GuiClick(node, shift=False, mark=None):
    return AgentAction('click', node=node, mark=mark, shift=shift)


def GuiType(text):
    return AgentAction('type', text=text)


def GuiKeys(chord):
    return AgentAction('keys', text=chord)


def ApiCall(name, **args):
    return AgentAction('api', name=name, args=args)


def Finish(reason=''):
    return AgentAction('finish', reason=reason)


def action_from_output(out, mark_index):
    '''
        Converts a validated planner_action payload into an AgentAction.

        Raises:
        -------
        UnparseableAction
            For API names outside the programmatic whitelist.
    '''
    if out.action == 'api':
        if out.name not in API_NAMES:
            raise UnparseableAction(f'API {out.name!r} is not one of {API_NAMES}')
        return AgentAction('api', name=out.name, args=dict(out.args))
    if out.action == 'click':
        node = out.node or mark_index.get(out.mark)
        return AgentAction('click', node=node, mark=out.mark, shift=out.shift)
    if out.action == 'type':
        return GuiType(out.text)
    if out.action == 'keys':
        return GuiKeys(out.keys)
    return Finish(out.reason or '')


# ----------------------------------------------------------------
# Decide
# ----------------------------------------------------------------

PLANNER_PROMPT = '''You operate a spreadsheet application to complete a task.
At every step choose exactly one action and answer with JSON:
{{"thought": <your reasoning>, "action": "click"|"type"|"keys"|"api"|"finish", ...}}
- click: {{"mark": <number>}} or {{"node": <id>}}, optional "shift": true to extend a cell selection
- type: {{"text": <text>}} types into the focused field or the selected cell
- keys: {{"keys": "ctrl+a"|"ctrl+c"|"ctrl+v"|"escape"}}
- api: {{"name": <api>, "args": {{...}}}} one of
{apis}
- finish: {{"reason": <text>}} when the task is complete

Task: {instruction}

Screen elements (mark, name, type, id):
{legend}

Previous steps:
{history}
'''

REPROMPT_SUFFIX = '''
Your previous answer could not be used ({error}). Answer again with a single JSON object.
'''


def _history_lines(history):
    lines = []
    for step in history:
        reasoning = step.reasoning[:HISTORY_REASONING_CHARS]
        status = 'ok' if step.result.success else 'failed'
        lines.append(f'{step.index}. {reasoning} -> {step.action.describe()} -> {status}: {step.result.text}')
    return '\n'.join(lines) or '(none)'


def build_planner_prompt(obs, task, history):
    apis = '\n'.join(f'  {s}' for s in API_SIGNATURES.values())
    return PLANNER_PROMPT.format(apis=apis, instruction=task.instruction,
                                 legend='\n'.join(obs.legend()), history=_history_lines(history))


def _reasoning_of(text, out):
    if out.thought.strip():
        return out.thought.strip()
    return text.split('{', 1)[0].strip()


def decide(obs, task, history, gateway, images=()):
    '''
        Asks the planner for the next action.

        Parameters:
        -----------
        obs : Observation
        task : InstantiatedTask
        history : list of StepRecord
            The prior steps, all of which appear in the prompt.
        gateway : provider_utils.Gateway
        images : sequence of str
            Saved screenshot / overlay paths attached to the request.

        Returns:
        --------
        (str, AgentAction)
            Reasoning text and the parsed action.

        Raises:
        -------
        UnparseableAction
            If the output is still unusable after one reprompt.
    '''
    prompt = build_planner_prompt(obs, task, history)
    error = None
    for attempt in range(2):
        request_prompt = prompt if attempt == 0 else prompt + REPROMPT_SUFFIX.format(error=error)
        text = gateway.complete(ProviderRequest('planner', request_prompt, tuple(images))).text
        try:
            out = parse_structured(text, 'planner_action')
            return _reasoning_of(text, out), action_from_output(out, obs.mark_index)
        except (SchemaViolation, NoJsonFound, UnparseableAction) as e:
            error = str(e)
            logger.warning('Unusable planner output (attempt %d): %s', attempt + 1, error)
    raise UnparseableAction(error)


# ----------------------------------------------------------------
# Execute
# ----------------------------------------------------------------

def _api(state, name, args):
    '''Dispatches one programmatic operation. Returns (state, result text, target range list).'''
    if name == 'table2markdown':
        rng = parse_range(args['range'])
        return state, table2markdown(state, rng), [rng]
    if name == 'insert_excel_table':
        anchor = parse_cell(args['anchor'])
        new, covered = insert_excel_table(state, args['data'], anchor)
        return new, f'inserted {covered.height}x{covered.width} table at {covered}', [covered]
    if name == 'select_table_range':
        rng = parse_range(args['range'])
        return select_table_range(state, rng), f'selected {rng}', [rng]
    if name == 'set_cell_value':
        addr = parse_cell(args['cell'])
        new = set_cell_value(state, addr, args['value'])
        return new, f'set {addr} to {new.sheet.display(addr)!r}', [RangeRef.single(addr)]
    if name == 'auto_fill':
        source, target = parse_range(args['source']), parse_range(args['target'])
        return auto_fill(state, source, target), f'filled {target} from {source}', [source, target]
    if name == 'reorder_columns':
        new = reorder_columns(state, args['order'])
        used = new.sheet.used_range
        return new, f'reordered columns to {list(args["order"])}', [used] if used else []
    raise UnknownNode(f'API {name!r} is not one of {API_NAMES}')


def _typing_target(state):
    if state.open_dialog:
        focus = state.dialog_state.get('focus')
        for placed in layout_state(state).visible():
            if placed.effect == 'focus_edit' and placed.args.get('key') == focus:
                return placed.node.bbox, placed.node.name
        return None, None
    if state.selection is not None:
        cell = RangeRef.single(state.selection.top_left)
        return cell.bbox(), cell.to_a1()
    return None, None


def execute(state, action):
    '''
        Executes an AgentAction.

        Parameters:
        -----------
        state : AppState
        action : AgentAction

        Returns:
        --------
        (AppState, ActionResult, tuple or None, str or None)
            New state, result, target bbox (node bbox or union bbox of the range's visible
            cells; None for finish and escape) and target name. Environment errors come
            back as a failed result naming the exception class, with the state unchanged.
    '''
    if action.variant == 'finish':
        return state, ActionResult(True, f'finished: {action.reason or "task complete"}'), None, None
    bbox, name = None, None
    try:
        if action.variant == 'api':
            new, text, ranges = _api(state, action.name, action.args)
            bbox = union_bbox([r.bbox() for r in ranges]) if ranges else None
            bbox = bbox or GRID_VIEWPORT
            name = ', '.join(r.to_a1() for r in ranges) or None
            return new, ActionResult(True, text), bbox, name
        if action.variant == 'click':
            if action.node is None:
                raise UnknownNode(f'Mark {action.mark} is not on screen')
            placed = {p.node.id: p for p in layout_state(state).visible()}.get(action.node)
            if placed is not None:
                bbox, name = placed.node.bbox, placed.node.name
            new, result = apply_gui_action(state, Click(action.node, action.shift))
            return new, result, bbox, name
        if action.variant == 'type':
            bbox, name = _typing_target(state)
            new, result = apply_gui_action(state, Type(action.text))
            return new, result, bbox, name
        if action.variant == 'keys':
            new, result = apply_gui_action(state, PressKeys(action.text))
            if new.selection is not None and not new.open_dialog and 'escape' not in str(action.text).lower():
                bbox, name = new.selection.bbox() or GRID_VIEWPORT, new.selection.to_a1()
            return new, result, bbox, name
        raise GuiError(f'Unknown action variant {action.variant!r}')
    except (ValueError, KeyError, TypeError) as e:
        logger.debug('Action %s failed: %s', action.describe(), e)
        return state, ActionResult(False, f'{type(e).__name__}: {e}'), None, None


def replay_actions(state, actions):
    '''
        Re-executes a sequence of actions from a state.

        Returns:
        --------
        (AppState, list of str)
            Final state and the digest after every action.
    '''
    digests = []
    for action in actions:
        state, _, _, _ = execute(state, action)
        digests.append(state_fingerprint(state))
    return state, digests


# ----------------------------------------------------------------
# Trajectory
# ----------------------------------------------------------------

@dataclass
class StepRecord:
    index: int
    screenshot_before: str
    reasoning: str
    action: AgentAction
    result: ActionResult
    target_bbox: tuple | None
    target_name: str | None
    state_digest_after: str
    som_image: str | None = None

    def to_dict(self):
        return {
            'index': self.index,
            'screenshot_before': self.screenshot_before,
            'som_image': self.som_image,
            'reasoning': self.reasoning,
            'action': self.action.to_dict(),
            'result': {'success': self.result.success, 'text': self.result.text},
            'target_bbox': list(self.target_bbox) if self.target_bbox else None,
            'target_name': self.target_name,
            'state_digest_after': self.state_digest_after,
        }

    @classmethod
    def from_dict(cls, doc):
        return cls(doc['index'], doc['screenshot_before'], doc['reasoning'],
                   AgentAction.from_dict(doc['action']),
                   ActionResult(doc['result']['success'], doc['result']['text']),
                   tuple(doc['target_bbox']) if doc.get('target_bbox') else None,
                   doc.get('target_name'), doc['state_digest_after'], doc.get('som_image'))


@dataclass
class Trajectory:
    task: InstantiatedTask
    steps: list
    status: str
    initial_digest: str | None = None
    final_digest: str | None = None
    initial_screenshot: str | None = None
    final_screenshot: str | None = None
    error: str | None = None

    def to_dict(self):
        return {
            'task': self.task.to_dict(),
            'steps': [s.to_dict() for s in self.steps],
            'status': self.status,
            'initial_digest': self.initial_digest,
            'final_digest': self.final_digest,
            'initial_screenshot': self.initial_screenshot,
            'final_screenshot': self.final_screenshot,
            'error': self.error,
        }

    @classmethod
    def from_dict(cls, doc):
        return cls(InstantiatedTask.from_dict(doc['task']), [StepRecord.from_dict(s) for s in doc['steps']],
                   doc['status'], doc.get('initial_digest'), doc.get('final_digest'),
                   doc.get('initial_screenshot'), doc.get('final_screenshot'), doc.get('error'))

    def save(self, path):
        with open(path, 'w', encoding='utf-8') as f:
            json.dump(self.to_dict(), f, indent=2, ensure_ascii=False)
        return path

    @classmethod
    def load(cls, path):
        with open(path, encoding='utf-8') as f:
            return cls.from_dict(json.load(f))


def run_task(task, template, gateway, run_dir, max_steps=MAX_STEPS, ui_tree=None):
    '''
        Runs the perceive -> decide -> execute loop for one instantiated task.

        Parameters:
        -----------
        task : InstantiatedTask
        template : Template
        gateway : provider_utils.Gateway
        run_dir : str
            Task directory; receives steps/NNN_before.png, steps/NNN_som.png,
            initial.png, final.png and trajectory.json.
        max_steps : int
        ui_tree : UiCommandTree

        Returns:
        --------
        Trajectory
            Finished on a finish action, StepLimit after max_steps actions, Error on
            unparseable planner output or a template that does not load. The working
            state is discarded afterwards; the template file is never written.
    '''
    if max_steps < 1:
        raise AgentError(f'max_steps must be >= 1, got {max_steps}')
    os.makedirs(os.path.join(run_dir, 'steps'), exist_ok=True)
    try:
        state = template.load_state(ui_tree)
    except InstantiationError as e:
        logger.warning('Task %s: %s', task.raw.id, e)
        traj = Trajectory(task, [], 'Error', error=str(e))
        traj.save(os.path.join(run_dir, 'trajectory.json'))
        return traj
    initial_digest = state_fingerprint(state)
    save_png(render_screenshot(state).image, os.path.join(run_dir, 'initial.png'))
    steps = []
    status = 'StepLimit'
    error = None
    for index in range(1, max_steps + 1):
        obs = perceive(state)
        before = f'steps/{index:03d}_before.png'
        som = f'steps/{index:03d}_som.png'
        save_png(obs.screenshot.image, os.path.join(run_dir, before))
        save_png(obs.som_overlay, os.path.join(run_dir, som))
        try:
            reasoning, action = decide(obs, task, steps, gateway, images=[os.path.join(run_dir, som)])
        except UnparseableAction as e:
            error = str(e)
            steps.append(StepRecord(index, before, '', Finish(f'error: {e}'),
                                    ActionResult(False, f'UnparseableAction: {e}'), None, None,
                                    state_fingerprint(state), som))
            status = 'Error'
            break
        state, result, bbox, name = execute(state, action)
        steps.append(StepRecord(index, before, reasoning, action, result, bbox, name,
                                state_fingerprint(state), som))
        logger.debug('Task %s step %d: %s -> %s', task.raw.id, index, action.describe(), result.text)
        if action.variant == 'finish':
            status = 'Finished'
            break
    save_png(render_screenshot(state).image, os.path.join(run_dir, 'final.png'))
    traj = Trajectory(task, steps, status, initial_digest, state_fingerprint(state),
                      'initial.png', 'final.png', error)
    traj.save(os.path.join(run_dir, 'trajectory.json'))
    logger.info('Task %s: %s after %d steps', task.raw.id, status, len(steps))
    return traj
