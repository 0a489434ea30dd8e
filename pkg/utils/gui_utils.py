"""
    Simulated GUI Utilities

    Declarative GUI surface of the simulated spreadsheet application. The command tree
    (ribbon tabs -> groups -> controls, dropdown menus, modal dialogs, the quick-access
    command catalog) is loaded from a versioned JSON config and validated with pydantic.
    Layout assigns pixel rectangles to everything currently visible; the accessibility
    snapshot and the renderer both read that layout.

    Functions:
    ----------
    - load_ui_tree: JSON config to a validated UiCommandTree.
    - layout_state: visible nodes of an AppState, split in base / dropdown / dialog layers.
    - accessibility_snapshot: actionable nodes a user could click right now.
    - apply_gui_action: Click / Type / PressKeys on a state, returning the new state and result.
    - Click, Type, PressKeys: GuiAction constructors.
"""

import copy
import json
import logging
import re
from dataclasses import dataclass, field
from typing import Any, Literal

from pydantic import BaseModel, ConfigDict, ValidationError

from geometry_utils import (CANVAS_WIDTH, DIALOG_BOX, DIALOG_ROW, MENU_ITEM_HEIGHT, MENU_ITEM_WIDTH, NAV_PANE,
                            VIEW_COLUMNS, VIEW_ROWS, cell_bbox, inside_canvas, overlaps)
from sheet_utils import (CHART_TYPES, CellAddress, CellFormat, ChartObject, RangeRef, chart_anchor,
                         parse_cell)

logger = logging.getLogger(__name__)

CONTROL_TYPES = ('MenuItem', 'Button', 'Tab', 'Cell', 'Edit', 'CheckBox', 'ListItem', 'Dialog')


class GuiError(ValueError):
    '''Base class of every GUI-level failure.'''


class InvalidUiTree(GuiError):
    pass


class UnknownNode(GuiError):
    pass


class DisabledTarget(GuiError):
    pass


class NoFocusForTyping(GuiError):
    pass


class UnboundChord(GuiError):
    pass


class EffectFailed(GuiError):
    pass


# ----------------------------------------------------------------
# Command tree config
# ----------------------------------------------------------------

class ControlSpec(BaseModel):
    model_config = ConfigDict(extra='forbid')

    id: str
    name: str
    control_type: Literal['MenuItem', 'Button', 'Tab', 'Edit', 'CheckBox', 'ListItem']
    effect: str | None = None
    args: dict[str, Any] = {}
    enabled_when: str | None = None
    submenu: list['ControlSpec'] = []


ControlSpec.model_rebuild()


class GroupSpec(BaseModel):
    model_config = ConfigDict(extra='forbid')

    name: str
    controls: list[ControlSpec]


class TabSpec(BaseModel):
    model_config = ConfigDict(extra='forbid')

    id: str
    name: str
    control_type: Literal['Tab', 'MenuItem']
    groups: list[GroupSpec] = []
    submenu: list[ControlSpec] = []


class OptionSpec(BaseModel):
    model_config = ConfigDict(extra='forbid')

    value: str
    name: str


class PaneSpec(BaseModel):
    model_config = ConfigDict(extra='forbid')

    id: str
    title: str | None = None
    width: int = 200
    visible_when: dict[str, Any] = {}
    controls: list[ControlSpec] = []
    key: str | None = None
    options: list[OptionSpec] = []
    options_from: str | None = None
    option_type: Literal['ListItem', 'Tab'] = 'ListItem'
    resets: list[str] = []


class DialogSpec(BaseModel):
    model_config = ConfigDict(extra='forbid')

    name: str
    state: dict[str, Any] = {}
    on_open: str | None = None
    panes: list[PaneSpec] = []
    buttons: list[ControlSpec] = []


class CommandSpec(BaseModel):
    model_config = ConfigDict(extra='forbid')

    name: str
    category: str
    effect: str
    args: dict[str, Any] = {}


class UiTreeSpec(BaseModel):
    model_config = ConfigDict(extra='forbid')

    version: str
    quick_access: ControlSpec
    tabs: list[TabSpec]
    dialogs: dict[str, DialogSpec] = {}
    commands: dict[str, CommandSpec] = {}


@dataclass(frozen=True)
class TreeNode:
    '''Static node of the command tree (tabs, ribbon controls, menu items).'''
    id: str
    name: str
    control_type: str
    effect: str | None = None
    args: dict = field(default_factory=dict)
    enabled_when: str | None = None
    children: tuple = ()
    parent: str | None = None
    group: str | None = None


class UiCommandTree:
    '''
        Validated, indexed command tree.

        Attributes:
        -----------
        version : str
        spec : UiTreeSpec
        nodes : dict
            Static node id -> TreeNode (quick access dropdown, tabs, ribbon controls, submenus).
        roots : list
            Root node ids in title-bar / tab-row order.
    '''

    def __init__(self, spec):
        self.spec = spec
        self.version = spec.version
        self.nodes = {}
        self.roots = []
        self._add(spec.quick_access, parent=None)
        self.roots.append(spec.quick_access.id)
        for tab in spec.tabs:
            if tab.control_type == 'Tab':
                controls = []
                for group in tab.groups:
                    for control in group.controls:
                        self._add(control, parent=tab.id, group=group.name)
                        controls.append(control.id)
                self._register(TreeNode(tab.id, tab.name, 'Tab', children=tuple(controls)))
            else:
                for item in tab.submenu:
                    self._add(item, parent=tab.id)
                self._register(TreeNode(tab.id, tab.name, 'MenuItem',
                                        children=tuple(i.id for i in tab.submenu)))
            self.roots.append(tab.id)
        self._validate()

    def _register(self, node):
        if node.id in self.nodes:
            raise InvalidUiTree(f'Duplicate node id {node.id!r}')
        self.nodes[node.id] = node

    def _add(self, control, parent, group=None):
        for item in control.submenu:
            self._add(item, parent=control.id, group=group)
        self._register(TreeNode(control.id, control.name, control.control_type, control.effect,
                                dict(control.args), control.enabled_when,
                                tuple(i.id for i in control.submenu), parent, group))

    def _validate(self):
        problems = []
        controls = [(n.id, n.effect, n.enabled_when, n.args) for n in self.nodes.values()]
        for dialog_id, dialog in self.spec.dialogs.items():
            for pane in dialog.panes:
                controls += [(c.id, c.effect, c.enabled_when, c.args) for c in pane.controls]
                if pane.options_from and pane.options_from not in OPTION_SOURCES:
                    problems.append(f'{pane.id}: unknown option source {pane.options_from!r}')
                if (pane.options or pane.options_from) and not pane.key:
                    problems.append(f'{pane.id}: option list without a key')
            controls += [(c.id, c.effect, c.enabled_when, c.args) for c in dialog.buttons]
            if dialog.on_open and dialog.on_open not in EFFECTS:
                problems.append(f'{dialog_id}: unknown on_open effect {dialog.on_open!r}')
        for command_id, command in self.spec.commands.items():
            controls.append((f'command:{command_id}', command.effect, None, command.args))
        seen = set(self.nodes)
        for dialog_id, dialog in self.spec.dialogs.items():
            for node_id in [dialog_id] + [c.id for p in dialog.panes for c in p.controls] + [b.id for b in dialog.buttons]:
                if node_id in seen:
                    problems.append(f'duplicate node id {node_id!r}')
                seen.add(node_id)
        for node_id, effect, predicate, args in controls:
            if effect is not None and effect not in EFFECTS:
                problems.append(f'{node_id}: unknown effect {effect!r}')
            if predicate is not None and predicate.split(':', 1)[0] not in PREDICATES:
                problems.append(f'{node_id}: unknown predicate {predicate!r}')
            if effect == 'open_dialog' and args.get('dialog') not in self.spec.dialogs:
                problems.append(f'{node_id}: unknown dialog {args.get("dialog")!r}')
            if effect in ('toggle_quick_access', 'run_command') and args.get('command') not in self.spec.commands:
                problems.append(f'{node_id}: unknown command {args.get("command")!r}')
        if problems:
            raise InvalidUiTree('; '.join(problems))

    def path_to(self, node_id):
        '''Root-to-node list of static ids.'''
        path = []
        while node_id is not None:
            path.append(node_id)
            node_id = self.nodes[node_id].parent
        return path[::-1]

    def has_command(self, name):
        '''True for a static node id, dialog control id or catalog command id.'''
        if name in self.nodes or name in self.spec.commands or name in self.spec.dialogs:
            return True
        return any(name == c.id for d in self.spec.dialogs.values()
                   for c in [*(c for p in d.panes for c in p.controls), *d.buttons])


def load_ui_tree(path):
    '''
        Loads and validates the UI command tree config.

        Parameters:
        -----------
        path : str
            JSON file following data/ui_tree.schema.json.

        Returns:
        --------
        UiCommandTree

        Raises:
        -------
        InvalidUiTree
            On schema violations, duplicate ids, unknown effects/predicates/dialogs.
    '''
    try:
        with open(path, encoding='utf-8') as f:
            spec = UiTreeSpec.model_validate(json.load(f))
    except (OSError, json.JSONDecodeError, ValidationError) as e:
        raise InvalidUiTree(f'Cannot load UI tree {path}: {e}')
    tree = UiCommandTree(spec)
    logger.debug('Loaded UI tree version %s with %d static nodes', tree.version, len(tree.nodes))
    return tree


# ----------------------------------------------------------------
# Effects and predicates
# ----------------------------------------------------------------

EFFECTS = {}
PREDICATES = {}
OPTION_SOURCES = {}


def effect(name):
    def register(fn):
        EFFECTS[name] = fn
        return fn
    return register


def predicate(name):
    def register(fn):
        PREDICATES[name] = fn
        return fn
    return register


def option_source(name):
    def register(fn):
        OPTION_SOURCES[name] = fn
        return fn
    return register


def _require_selection(state):
    if state.selection is None:
        raise EffectFailed('nothing is selected')
    return state.selection


def _close_menus(state):
    '''Closes dropdowns; a ribbon tab stays open.'''
    path = state.open_menu_path
    if path and state.ui_tree.nodes[path[0]].control_type == 'Tab':
        state.open_menu_path = path[:1]
    else:
        state.open_menu_path = []


@predicate('has_selection')
def _has_selection(state, arg=None):
    return state.selection is not None


@predicate('multi_cell_selection')
def _multi_cell_selection(state, arg=None):
    sel = state.selection
    return sel is not None and sel.width * sel.height > 1


@predicate('multi_row_selection')
def _multi_row_selection(state, arg=None):
    return state.selection is not None and state.selection.height > 1


@predicate('has_chart')
def _has_chart(state, arg=None):
    return bool(state.sheet.charts)


@predicate('dialog_has')
def _dialog_has(state, arg=None):
    value = state.dialog_state.get(arg)
    return value not in (None, '', [])


def is_enabled(state, enabled_when):
    if not enabled_when:
        return True
    name, _, arg = enabled_when.partition(':')
    return bool(PREDICATES[name](state, arg or None))


@effect('noop')
def _noop(state, args):
    return ''


@effect('open_dialog')
def _open_dialog(state, args):
    dialog_id = args['dialog']
    spec = state.ui_tree.spec.dialogs[dialog_id]
    state.open_dialog = dialog_id
    state.dialog_state = copy.deepcopy(spec.state)
    state.dialog_state.update({k: v for k, v in args.items() if k != 'dialog'})
    if spec.on_open:
        EFFECTS[spec.on_open](state, {})
    _close_menus(state)
    return f'opened {spec.name}'


@effect('close_dialog')
def _close_dialog(state, args):
    name = state.ui_tree.spec.dialogs[state.open_dialog].name if state.open_dialog else 'dialog'
    state.open_dialog = None
    state.dialog_state = {}
    return f'closed {name}'


@effect('dialog_set')
def _dialog_set(state, args):
    state.dialog_state[args['key']] = args['value']
    for key in args.get('resets', []):
        state.dialog_state[key] = None
    return ''


@effect('dialog_toggle')
def _dialog_toggle(state, args):
    state.dialog_state[args['key']] = not state.dialog_state.get(args['key'], False)
    return 'on' if state.dialog_state[args['key']] else 'off'


@effect('dialog_page')
def _dialog_page(state, args):
    key = args['key']
    page = min(max(int(state.dialog_state.get(key) or 0) + int(args['delta']), 0), int(args['pages']) - 1)
    state.dialog_state[key] = page
    return f'page {page + 1} of {args["pages"]}'


@effect('focus_edit')
def _focus_edit(state, args):
    state.dialog_state['focus'] = args['key']
    return ''


@effect('toggle_bold')
def _toggle_bold(state, args):
    sel = _require_selection(state)
    sheet = state.sheet
    make_bold = not all(sheet.format_of(a).bold for a in sel.cells())
    for addr in sel.cells():
        fmt = sheet.format_of(addr)
        sheet.set_format(addr, CellFormat(make_bold, fmt.fill))
    return f'bold {"applied to" if make_bold else "removed from"} {sel}'


@effect('merge_cells')
def _merge_cells(state, args):
    sel = _require_selection(state)
    if sel.width * sel.height < 2:
        raise EffectFailed('merging needs more than one cell')
    sheet = state.sheet
    sheet.merged = [m for m in sheet.merged if not m.intersects(sel)] + [sel]
    #Only the top-left value survives a merge
    for addr in sel.cells()[1:]:
        sheet.set_raw(addr, '')
    sheet.recalculate()
    return f'merged {sel}'


@effect('fill_color')
def _fill_color(state, args):
    sel = _require_selection(state)
    sheet = state.sheet
    for addr in sel.cells():
        sheet.set_format(addr, CellFormat(sheet.format_of(addr).bold, args.get('color')))
    return f'fill {args.get("color") or "removed"} on {sel}'


@effect('insert_chart')
def _insert_chart(state, args):
    sel = _require_selection(state)
    chart_type = args['chart_type']
    if chart_type not in CHART_TYPES:
        raise EffectFailed(f'unknown chart type {chart_type!r}')
    sheet = state.sheet
    used = sheet.used_range
    if used is None or not sel.within(used):
        raise EffectFailed(f'selection {sel} is outside the data')
    taken = {c.id for c in sheet.charts}
    number = len(sheet.charts) + 1
    while f'chart{number}' in taken:
        number += 1
    chart = ChartObject(f'chart{number}', chart_type, sel, None, chart_anchor(sel, len(sheet.charts)))
    sheet.charts.append(chart)
    return f'inserted {chart_type} chart {chart.id} from {sel}'


@effect('apply_chart_title')
def _apply_chart_title(state, args):
    sheet = state.sheet
    text = str(state.dialog_state.get('text') or '').strip()
    if not sheet.charts:
        raise EffectFailed('the sheet has no chart')
    if not text:
        raise EffectFailed('title text is empty')
    chart = sheet.charts[-1]
    sheet.charts[-1] = ChartObject(chart.id, chart.chart_type, chart.source, text, chart.anchor_bbox)
    _close_dialog(state, {})
    return f'set title of {chart.id} to {text!r}'


@effect('freeze_panes')
def _freeze_panes(state, args):
    sel = _require_selection(state)
    state.sheet.freeze_at = sel.top_left
    return f'froze panes at {sel.top_left}'


@effect('toggle_navigation_pane')
def _toggle_navigation_pane(state, args):
    state.navigation_pane = not state.navigation_pane
    return f'navigation pane {"shown" if state.navigation_pane else "hidden"}'


@effect('activate_sheet')
def _activate_sheet(state, args):
    index = int(args['index'])
    state.active_sheet = index
    state.selection = None
    state.selection_anchor = None
    return f'switched to sheet {state.sheet.name!r}'


def _sort_key(value):
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return (0, value, '')
    return (1, 0, str(value).lower())


def sort_rows(state, rng, column, descending=False):
    '''
        Sorts the body rows of rng (first row is the header) by an absolute column.
        Numbers sort before text; blank keys always go last. The sort is stable.
    '''
    if rng.height < 2:
        raise EffectFailed('sorting needs a header row and at least one data row')
    if not rng.top_left.column <= column <= rng.bottom_right.column:
        raise EffectFailed(f'column {column} is outside {rng}')
    sheet = state.sheet
    body = rng.rows()[1:]
    records = []
    for row in body:
        key_cell = CellAddress(column, row[0].row)
        records.append((sheet.get(key_cell).computed,
                        [sheet.get(a).raw for a in row], [sheet.format_of(a) for a in row]))
    filled = [r for r in records if r[0] != '']
    blanks = [r for r in records if r[0] == '']
    filled.sort(key=lambda r: _sort_key(r[0]), reverse=descending)
    for row, (_, raws, fmts) in zip(body, filled + blanks):
        for addr, raw, fmt in zip(row, raws, fmts):
            sheet.set_raw(addr, raw)
            sheet.set_format(addr, fmt)
    sheet.recalculate()
    header = sheet.display(CellAddress(column, rng.top_left.row)) or CellAddress(column, 0).to_a1()[:-1]
    return f'sorted {rng} by {header} {"descending" if descending else "ascending"}'


@effect('sort_selection')
def _sort_selection(state, args):
    sel = _require_selection(state)
    return sort_rows(state, sel, sel.top_left.column, args.get('order') == 'descending')


@effect('sort_from_dialog')
def _sort_from_dialog(state, args):
    sel = _require_selection(state)
    column = state.dialog_state.get('column')
    if column is None:
        raise EffectFailed('no sort column chosen')
    message = sort_rows(state, sel, int(column), state.dialog_state.get('order') == 'descending')
    _close_dialog(state, {})
    return message


@effect('toggle_quick_access')
def _toggle_quick_access(state, args):
    command = args['command']
    name = state.ui_tree.spec.commands[command].name
    if command in state.quick_access_items:
        state.quick_access_items.remove(command)
        return f'removed {name} from the Quick Access Toolbar'
    state.quick_access_items.append(command)
    return f'added {name} to the Quick Access Toolbar'


@effect('load_options')
def _load_options(state, args):
    state.dialog_state['pending'] = list(state.quick_access_items)
    state.dialog_state['live_preview'] = bool(state.app_options.get('live_preview', True))
    return ''


@effect('stage_quick_access')
def _stage_quick_access(state, args):
    command = state.dialog_state.get('selected_command')
    pending = state.dialog_state.setdefault('pending', [])
    if command in pending:
        raise EffectFailed(f'{command} is already on the toolbar')
    pending.append(command)
    return f'staged {state.ui_tree.spec.commands[command].name}'


@effect('unstage_quick_access')
def _unstage_quick_access(state, args):
    command = state.dialog_state.get('selected_command')
    pending = state.dialog_state.setdefault('pending', [])
    if command not in pending:
        raise EffectFailed(f'{command} is not on the toolbar')
    pending.remove(command)
    return f'unstaged {state.ui_tree.spec.commands[command].name}'


@effect('commit_options')
def _commit_options(state, args):
    state.quick_access_items = list(state.dialog_state.get('pending', []))
    state.app_options['live_preview'] = bool(state.dialog_state.get('live_preview', True))
    _close_dialog(state, {})
    return 'applied options'


@effect('run_command')
def _run_command(state, args):
    command = state.ui_tree.spec.commands[args['command']]
    return EFFECTS[command.effect](state, dict(command.args))


def _slug(text):
    return re.sub(r'[^a-z0-9]+', '_', str(text).lower()).strip('_') or 'item'


@option_source('commands_in_category')
def _commands_in_category(state):
    category = state.dialog_state.get('category')
    return [(cid, c.name) for cid, c in state.ui_tree.spec.commands.items() if c.category == category]


@option_source('selection_headers')
def _selection_headers(state):
    sel = state.selection
    if sel is None:
        return []
    options = []
    for addr in sel.rows()[0]:
        label = state.sheet.display(addr) or f'Column {addr.to_a1().rstrip("0123456789")}'
        options.append((str(addr.column), label))
    return options


# ----------------------------------------------------------------
# Layout and snapshot
# ----------------------------------------------------------------

@dataclass(frozen=True)
class AccessibilityNode:
    id: str
    name: str
    control_type: str
    bbox: tuple
    enabled: bool = True
    children: tuple = ()

    def to_dict(self):
        return {'id': self.id, 'name': self.name, 'control_type': self.control_type,
                'bbox': list(self.bbox), 'enabled': self.enabled, 'children': list(self.children)}


@dataclass(frozen=True)
class PlacedNode:
    '''A laid-out node plus what clicking it does and how it is drawn.'''
    node: AccessibilityNode
    effect: str | None = None
    args: dict = field(default_factory=dict)
    checked: bool = False
    kind: str = 'control' #control, root, cell, sheet_tab, nav, menu, dialog, button


@dataclass
class Layout:
    base: list
    menus: list #list of (panel rect, [PlacedNode])
    dialog: list | None = None

    def visible(self):
        '''PlacedNodes a user can reach: dialog only when modal, else unoccluded base + menus.'''
        if self.dialog is not None:
            return list(self.dialog)
        panels = [rect for rect, _ in self.menus]
        items = [p for _, placed in self.menus for p in placed]
        keep = [p for p in self.base if not any(overlaps(p.node.bbox, rect) for rect in panels)]
        return keep + items


def _checked(state, node_id, effect_name, args):
    if effect_name == 'toggle_navigation_pane':
        return state.navigation_pane
    if effect_name == 'toggle_quick_access':
        return args.get('command') in state.quick_access_items
    if effect_name == 'dialog_toggle':
        return bool(state.dialog_state.get(args.get('key')))
    return False


def _place_tree_node(state, tree_node, bbox, kind='control'):
    children = tree_node.children if tree_node.id in state.open_menu_path else ()
    node = AccessibilityNode(tree_node.id, tree_node.name, tree_node.control_type, bbox,
                             is_enabled(state, tree_node.enabled_when), children)
    return PlacedNode(node, tree_node.effect, tree_node.args,
                      _checked(state, tree_node.id, tree_node.effect, tree_node.args), kind)


def _layout_ribbon(state, tab_id):
    tree = state.ui_tree
    placed = []
    x = 8
    for group in next(t for t in tree.spec.tabs if t.id == tab_id).groups:
        for start in range(0, len(group.controls), 2):
            for j, control in enumerate(group.controls[start:start + 2]):
                bbox = (x, 60 + 28 * j, x + 116, 84 + 28 * j)
                placed.append(_place_tree_node(state, tree.nodes[control.id], bbox))
            x += 120
        x += 12
    return placed


def _layout_dialog(state):
    tree = state.ui_tree
    spec = tree.spec.dialogs[state.open_dialog]
    left, top, right, bottom = DIALOG_BOX
    placed = []
    x = left + 12
    for pane in spec.panes:
        if any(state.dialog_state.get(k) != v for k, v in pane.visible_when.items()):
            continue
        y = top + 40 + (22 if pane.title else 0)
        #Rows that fit between the pane title and the button row
        rows = (bottom - 44 - 24 - y) // DIALOG_ROW + 1
        entries = []
        for control in pane.controls:
            entries.append((control.id, control.name, control.control_type, control.effect,
                            dict(control.args), is_enabled(state, control.enabled_when)))
        options = [(o.value, o.name) for o in pane.options]
        if pane.options_from:
            options = OPTION_SOURCES[pane.options_from](state)
        paging = None
        capacity = rows - len(entries)
        if len(options) > capacity:
            per_page = capacity - 2
            if per_page < 1:
                raise InvalidUiTree(f'{pane.id}: no room for a paged option list')
            key = f'page:{pane.id}'
            pages = -(-len(options) // per_page)
            page = min(max(int(state.dialog_state.get(key) or 0), 0), pages - 1)
            options = options[page * per_page:(page + 1) * per_page]
            paging = [(f'{pane.id}.previous', 'Previous', 'Button', 'dialog_page',
                       {'key': key, 'delta': -1, 'pages': pages}, page > 0),
                      (f'{pane.id}.more', 'More', 'Button', 'dialog_page',
                       {'key': key, 'delta': 1, 'pages': pages}, page < pages - 1)]
        used_ids = {e[0] for e in paging or ()}
        for value, name in options:
            node_id = f'{pane.id}.{_slug(name) if pane.options_from == "selection_headers" else value}'
            while node_id in used_ids:
                node_id += '_'
            used_ids.add(node_id)
            entries.append((node_id, name, pane.option_type, 'dialog_set',
                            {'key': pane.key, 'value': value, 'resets': list(pane.resets)}, True))
        entries += paging or []
        for node_id, name, control_type, effect_name, args, enabled in entries:
            bbox = (x, y, x + pane.width, y + 24)
            checked = _checked(state, node_id, effect_name, args)
            if effect_name == 'dialog_set':
                checked = state.dialog_state.get(args['key']) == args['value']
            node = AccessibilityNode(node_id, name, control_type, bbox, enabled)
            placed.append(PlacedNode(node, effect_name, args, checked, 'dialog_control'))
            y += DIALOG_ROW
        x += pane.width + 12
    bx = right - 12
    for button in reversed(spec.buttons):
        bbox = (bx - 96, bottom - 36, bx, bottom - 12)
        node = AccessibilityNode(button.id, button.name, button.control_type, bbox,
                                 is_enabled(state, button.enabled_when))
        placed.append(PlacedNode(node, button.effect, dict(button.args), False, 'button'))
        bx -= 104
    dialog_node = AccessibilityNode(state.open_dialog, spec.name, 'Dialog', DIALOG_BOX, True,
                                    tuple(p.node.id for p in placed))
    return [PlacedNode(dialog_node, None, {}, False, 'dialog')] + placed


def layout_state(state):
    '''
        Assigns pixel rectangles to every node the state shows.

        Parameters:
        -----------
        state : AppState

        Returns:
        --------
        Layout
            base nodes (title bar, tabs, open ribbon tab, cells, sheet tabs, navigation pane),
            open dropdown panels and, when a dialog is open, its nodes. Option lists longer
            than a dialog pane are paged behind Previous / More buttons.

        Raises:
        -------
        GuiError
            If any node would fall outside the canvas.
    '''
    tree = state.ui_tree
    base = []
    #Quick access items, then the customization dropdown
    for i, command in enumerate(state.quick_access_items):
        bbox = (8 + 28 * i, 3, 32 + 28 * i, 25)
        node = AccessibilityNode(f'qat.item.{command}', tree.spec.commands[command].name, 'Button', bbox)
        base.append(PlacedNode(node, 'run_command', {'command': command}, False, 'qat_item'))
    n = len(state.quick_access_items)
    qat = tree.nodes[tree.spec.quick_access.id]
    base.append(_place_tree_node(state, qat, (8 + 28 * n, 3, 32 + 28 * n, 25), 'root'))
    #Tab row
    x = 8
    for root_id in tree.roots[1:]:
        base.append(_place_tree_node(state, tree.nodes[root_id], (x, 30, x + 88, 54), 'root'))
        x += 92
    path = state.open_menu_path
    if path and tree.nodes[path[0]].control_type == 'Tab':
        base += _layout_ribbon(state, path[0])
    #Grid
    sheet = state.sheet
    for row in range(VIEW_ROWS):
        for column in range(VIEW_COLUMNS):
            addr = CellAddress(column, row)
            text = sheet.display(addr)
            name = f'{addr.to_a1()}: {text}' if text else addr.to_a1()
            node = AccessibilityNode(f'cell.{addr.to_a1()}', name, 'Cell', cell_bbox(column, row))
            base.append(PlacedNode(node, None, {}, False, 'cell'))
    #Only the sheet tabs and navigation entries that fit on the canvas
    for i, s in enumerate(state.workbook[:(CANVAS_WIDTH - 4) // 100]):
        node = AccessibilityNode(f'sheet.tab.{i}', s.name, 'Tab', (8 + 100 * i, 774, 104 + 100 * i, 794))
        base.append(PlacedNode(node, 'activate_sheet', {'index': i}, i == state.active_sheet, 'sheet_tab'))
    if state.navigation_pane:
        for i, s in enumerate(state.workbook[:(NAV_PANE[3] - NAV_PANE[1] - 26) // 28]):
            bbox = (NAV_PANE[0] + 2, NAV_PANE[1] + 26 + 28 * i, NAV_PANE[2] - 2, NAV_PANE[1] + 50 + 28 * i)
            node = AccessibilityNode(f'nav.sheet.{i}', s.name, 'ListItem', bbox)
            base.append(PlacedNode(node, 'activate_sheet', {'index': i}, i == state.active_sheet, 'nav'))
    #Dropdown panels for every open MenuItem on the path
    by_id = {p.node.id: p for p in base}
    menus = []
    for node_id in path:
        tree_node = tree.nodes[node_id]
        if tree_node.control_type != 'MenuItem' or not tree_node.children:
            continue
        anchor = by_id.get(node_id)
        if anchor is None:
            break
        left = min(anchor.node.bbox[0], CANVAS_WIDTH - MENU_ITEM_WIDTH)
        top = anchor.node.bbox[3] + 2
        items = []
        for i, child_id in enumerate(tree_node.children):
            bbox = (left, top + MENU_ITEM_HEIGHT * i, left + MENU_ITEM_WIDTH, top + MENU_ITEM_HEIGHT * (i + 1))
            items.append(_place_tree_node(state, tree.nodes[child_id], bbox, 'menu'))
        panel = (left, top, left + MENU_ITEM_WIDTH, top + MENU_ITEM_HEIGHT * len(items))
        menus.append((panel, items))
        by_id.update({p.node.id: p for p in items})
    dialog = _layout_dialog(state) if state.open_dialog else None
    outside = [p.node.id for p in base + [i for _, items in menus for i in items] + (dialog or [])
               if not inside_canvas(p.node.bbox)]
    if outside:
        raise GuiError(f'Layout places {outside} outside the canvas')
    return Layout(base, menus, dialog)


def accessibility_snapshot(state):
    '''
        Actionable nodes currently visible.

        Parameters:
        -----------
        state : AppState

        Returns:
        --------
        list of AccessibilityNode
            Only the dialog subtree while a modal dialog is open; otherwise title bar,
            tabs, the open ribbon tab, unoccluded cells of the viewport, sheet tabs,
            navigation pane items and open dropdown items.
    '''
    return [p.node for p in layout_state(state).visible()]


# ----------------------------------------------------------------
# Actions
# ----------------------------------------------------------------

@dataclass(frozen=True)
class GuiAction:
    kind: str #click, type, keys
    target: str | None = None
    text: str | None = None
    shift: bool = False


def Click(node_id, shift=False):
    return GuiAction('click', target=node_id, shift=shift)


def Type(text):
    return GuiAction('type', text=text)


def PressKeys(chord):
    return GuiAction('keys', text=chord)


@dataclass(frozen=True)
class ActionResult:
    success: bool
    text: str


def _normalise_chord(chord):
    parts = [p.strip().lower() for p in str(chord).replace('-', '+').split('+') if p.strip()]
    parts = ['ctrl' if p in ('control', 'ctl') else 'escape' if p == 'esc' else p for p in parts]
    return '+'.join(parts)


def _click(state, placed, shift):
    tree = state.ui_tree
    node = placed.node
    if placed.kind == 'cell':
        addr = parse_cell(node.id.split('.', 1)[1])
        if shift and state.selection is not None:
            anchor = state.selection_anchor
            if anchor is None or not state.selection.contains(anchor):
                anchor = state.selection.top_left
            rng = RangeRef(CellAddress(min(anchor.column, addr.column), min(anchor.row, addr.row)),
                           CellAddress(max(anchor.column, addr.column), max(anchor.row, addr.row)))
            state.selection = rng
            state.selection_anchor = anchor
            message = f'selected {rng}'
        else:
            state.selection = RangeRef.single(addr)
            state.selection_anchor = addr
            message = f'clicked cell {addr}'
        _close_menus(state)
        return message
    if node.id in tree.nodes:
        tree_node = tree.nodes[node.id]
        if tree_node.control_type == 'Tab':
            state.open_menu_path = [node.id]
            return f'clicked {node.name}'
        if tree_node.children:
            state.open_menu_path = tree.path_to(node.id)
            return f'opened {node.name}'
    message = f'clicked {node.name}'
    if placed.effect:
        detail = EFFECTS[placed.effect](state, dict(placed.args))
        if detail:
            message = f'{message}: {detail}'
    if placed.kind not in ('dialog', 'dialog_control', 'button'):
        _close_menus(state)
    return message


def _press(state, chord):
    if chord == 'escape':
        if state.open_dialog:
            return _close_dialog(state, {})
        state.open_menu_path = []
        return 'closed menus'
    if state.open_dialog:
        raise EffectFailed(f'{chord} is not available while a dialog is open')
    sheet = state.sheet
    if chord == 'ctrl+a':
        state.selection = sheet.used_range or RangeRef.single(CellAddress(0, 0))
        state.selection_anchor = state.selection.top_left
        return f'selected {state.selection}'
    if chord == 'ctrl+c':
        sel = _require_selection(state)
        state.clipboard = [[sheet.get(a).raw for a in row] for row in sel.rows()]
        return f'copied {sel}'
    if chord == 'ctrl+v':
        sel = _require_selection(state)
        if not state.clipboard:
            raise EffectFailed('the clipboard is empty')
        grid = state.clipboard
        target = RangeRef(sel.top_left, sel.top_left.offset(len(grid[0]) - 1, len(grid) - 1))
        for values, row in zip(grid, target.rows()):
            for raw, addr in zip(values, row):
                sheet.set_raw(addr, raw)
        sheet.recalculate()
        state.selection = target
        state.selection_anchor = target.top_left
        return f'pasted into {target}'
    raise UnboundChord(f'Key chord {chord!r} is not bound')


def apply_gui_action(state, action):
    '''
        Applies a GUI action to a copy of state.

        Parameters:
        -----------
        state : AppState
        action : GuiAction
            Click(node_id[, shift]), Type(text) or PressKeys(chord).

        Returns:
        --------
        (AppState, ActionResult)

        Raises:
        -------
        UnknownNode
            Click on an id that is not currently visible.
        DisabledTarget
            Click on a disabled node; the state is left unchanged.
        NoFocusForTyping
            Type with neither a focused edit field nor a selected cell.
        UnboundChord, EffectFailed
            Key chords that are not bound, effects whose preconditions fail.
    '''
    new = state.clone()
    if action.kind == 'click':
        placed = {p.node.id: p for p in layout_state(state).visible()}.get(action.target)
        if placed is None:
            raise UnknownNode(f'Node {action.target!r} is not visible')
        if not placed.node.enabled:
            raise DisabledTarget(f'Node {action.target!r} ({placed.node.name}) is disabled')
        message = _click(new, placed, action.shift)
    elif action.kind == 'type':
        text = '' if action.text is None else str(action.text)
        if new.open_dialog:
            focus = new.dialog_state.get('focus')
            if not focus:
                raise NoFocusForTyping('No edit field has focus')
            new.dialog_state[focus] = text
            message = f'typed {text!r} into {focus}'
        elif new.selection is not None:
            addr = new.selection.top_left
            new.sheet.set_raw(addr, text)
            new.sheet.recalculate()
            _close_menus(new)
            message = f'typed {text!r} into {addr}'
        else:
            raise NoFocusForTyping('No cell is selected')
    elif action.kind == 'keys':
        message = _press(new, _normalise_chord(action.text))
    else:
        raise GuiError(f'Unknown GUI action kind {action.kind!r}')
    return new, ActionResult(True, message)

