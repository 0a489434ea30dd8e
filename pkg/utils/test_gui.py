import json

import pytest

from geometry_utils import inside_canvas, overlaps
from gui_utils import (Click, DisabledTarget, EffectFailed, GuiError, InvalidUiTree, NoFocusForTyping, PressKeys,
                       Type, UnboundChord, UnknownNode, accessibility_snapshot, apply_gui_action, load_ui_tree)
from sheet_utils import (AppState, CellAddress, RangeRef, auto_fill, build_sheet, column_letters, insert_excel_table,
                         parse_cell, parse_range, reorder_columns, select_table_range, set_cell_value,
                         state_fingerprint)


def run(state, *actions):
    for action in actions:
        state, result = apply_gui_action(state, action)
        assert result.success
    return state


def visible_ids(state):
    return {n.id for n in accessibility_snapshot(state)}


def node(state, node_id):
    return next(n for n in accessibility_snapshot(state) if n.id == node_id)


def cell(state, a1):
    return state.sheet.display(parse_cell(a1))


def observable(state):
    return [s.to_dict() for s in state.workbook], state.active_sheet, state.selection


def assert_on_canvas(state):
    nodes = accessibility_snapshot(state)
    ids = [n.id for n in nodes]
    assert len(ids) == len(set(ids))
    assert [n.id for n in nodes if not inside_canvas(n.bbox)] == []


def wide_selection(state, width):
    return select_table_range(state, RangeRef(CellAddress(0, 0), CellAddress(width - 1, 10)))


def sort_column_labels(state):
    '''Walks every page of the Sort dialog's column list.'''
    labels = []
    while True:
        assert_on_canvas(state)
        nodes = accessibility_snapshot(state)
        labels += [n.name for n in nodes if n.id.startswith('sort.columns.') and n.control_type == 'ListItem']
        more = [n for n in nodes if n.id == 'sort.columns.more']
        if not more or not more[0].enabled:
            return labels, state
        state = run(state, Click('sort.columns.more'))


class TestSnapshot:
    '''What the accessibility tree exposes.'''

    def test_initial_nodes(self, template_state):
        ids = visible_ids(template_state())
        assert {'qat.dropdown', 'ribbon.file', 'ribbon.home', 'ribbon.data', 'cell.A1', 'cell.L26',
                'sheet.tab.0', 'sheet.tab.1'} <= ids
        assert 'home.bold' not in ids
        assert 'cell.M1' not in ids

    def test_cell_names_carry_values(self, template_state):
        state = template_state()
        assert node(state, 'cell.A1').name == 'A1: Name'
        assert node(state, 'cell.H1').name == 'H1'

    def test_ribbon_tab_shows_controls(self, template_state):
        state = run(template_state(), Click('ribbon.home'))
        assert {'home.bold', 'home.fill_color', 'home.merge_cells'} <= visible_ids(state)
        assert not node(state, 'home.bold').enabled

    def test_ribbon_controls_do_not_overlap(self, template_state):
        closed = template_state()
        base = visible_ids(closed)
        tabs = sorted(i for i in base if i.startswith('ribbon.'))
        assert len(tabs) >= 5
        for tab in tabs:
            opened = run(closed, Click(tab))
            boxes = [n.bbox for n in accessibility_snapshot(opened) if n.id not in base]
            assert boxes, tab
            for i, a in enumerate(boxes):
                assert inside_canvas(a), tab
                assert not any(overlaps(a, b) for b in boxes[i + 1:]), tab

    def test_every_panel_stays_on_canvas(self, template_state, ui_tree):
        starts = [run(template_state(), Click('cell.A1'), Click('cell.F11', shift=True)),
                  run(template_state('t03_sales_chart'), Click('cell.A1'), Click('cell.B7', shift=True))]
        for start in starts:
            pending, followed, dialogs = [start], set(), set()
            while pending:
                state = pending.pop()
                assert_on_canvas(state)
                if state.open_dialog:
                    dialogs.add(state.open_dialog)
                for n in accessibility_snapshot(state):
                    tree_node = ui_tree.nodes.get(n.id)
                    opens = tree_node is not None and (tree_node.control_type == 'Tab' or bool(tree_node.children)
                                                       or tree_node.effect == 'open_dialog')
                    in_dialog = state.open_dialog is not None and n.control_type in ('Tab', 'ListItem')
                    if not n.enabled or n.id in followed or not (opens or in_dialog):
                        continue
                    followed.add(n.id)
                    try:
                        pending.append(apply_gui_action(state, Click(n.id))[0])
                    except GuiError:
                        continue
            assert {'dialog.sort', 'dialog.options'} <= dialogs
        assert 'dialog.chart_title' in dialogs

    def test_sort_dialog_pages_wide_selections(self, template_state):
        for width in range(1, 41):
            state = run(wide_selection(template_state(), width), Click('ribbon.data'), Click('data.sort'))
            labels, _ = sort_column_labels(state)
            expected = [state.sheet.display(CellAddress(c, 0)) or f'Column {column_letters(c)}'
                        for c in range(width)]
            assert labels == expected, width

    def test_sort_by_column_on_last_page(self, template_state):
        state = run(wide_selection(template_state(), 26), Click('ribbon.data'), Click('data.sort'))
        assert not node(state, 'sort.columns.previous').enabled
        _, last = sort_column_labels(state)
        assert node(last, 'sort.columns.previous').enabled
        assert not node(last, 'sort.columns.more').enabled
        chosen = run(last, Click('sort.columns.column_z'))
        assert chosen.dialog_state['column'] == '25'
        assert node(chosen, 'sort.ok').enabled

    def test_many_sheets_stay_on_canvas(self, ui_tree):
        workbook = [build_sheet({'name': f'S{i}', 'cells': {'A1': str(i)}}) for i in range(30)]
        state = AppState(workbook, ui_tree, navigation_pane=True)
        assert_on_canvas(state)
        ids = visible_ids(state)
        assert 'sheet.tab.11' in ids and 'sheet.tab.12' not in ids
        assert 'nav.sheet.20' in ids and 'nav.sheet.21' not in ids

    def test_dropdown_occludes_cells(self, template_state):
        state = run(template_state(), Click('cell.D4'), Click('ribbon.home'), Click('home.fill_color'))
        ids = visible_ids(state)
        assert {'fill.yellow', 'fill.none'} <= ids
        assert 'cell.A1' not in ids
        assert 'cell.C1' in ids

    def test_dialog_is_modal(self, template_state):
        state = run(template_state(), Click('cell.A1'), Click('cell.F11', shift=True),
                    Click('ribbon.data'), Click('data.sort'))
        ids = visible_ids(state)
        assert 'dialog.sort' in ids
        assert 'cell.A1' not in ids
        assert 'ribbon.home' not in ids
        with pytest.raises(UnknownNode):
            apply_gui_action(state, Click('cell.A1'))

    def test_input_state_is_not_mutated(self, template_state):
        state = template_state()
        before = state_fingerprint(state)
        apply_gui_action(state, Click('cell.B2'))
        apply_gui_action(state, Click('ribbon.view'))
        assert state_fingerprint(state) == before


class TestEffects:
    '''Ribbon controls, menus and dialogs.'''

    def test_disabled_target(self, template_state):
        state = run(template_state(), Click('ribbon.home'))
        before = state_fingerprint(state)
        with pytest.raises(DisabledTarget):
            apply_gui_action(state, Click('home.bold'))
        assert state_fingerprint(state) == before

    def test_bold_toggles(self, template_state):
        start = run(template_state(), Click('cell.A2'), Click('cell.B3', shift=True), Click('ribbon.home'))
        bold = run(start, Click('home.bold'))
        assert all(bold.sheet.format_of(a).bold for a in parse_range('A2:B3').cells())
        assert bold.open_menu_path == ['ribbon.home']
        assert state_fingerprint(run(bold, Click('home.bold'))) == state_fingerprint(start)

    def test_fill_color(self, template_state):
        state = run(template_state(), Click('cell.A1'), Click('cell.F1', shift=True), Click('ribbon.home'),
                    Click('home.fill_color'), Click('fill.yellow'))
        assert state.sheet.format_of(parse_cell('C1')).fill == '#FFFF00'
        assert state.open_menu_path == ['ribbon.home']
        state = run(state, Click('home.fill_color'), Click('fill.none'))
        assert state.sheet.format_of(parse_cell('C1')).fill is None

    def test_merge_keeps_top_left(self, template_state):
        state = run(template_state(), Click('cell.A2'), Click('cell.B2', shift=True), Click('ribbon.home'),
                    Click('home.merge_cells'))
        assert state.sheet.merged == [parse_range('A2:B2')]
        assert cell(state, 'A2') == 'Alice Brown'
        assert cell(state, 'B2') == ''

    def test_insert_chart_and_title(self, template_state):
        state = run(template_state('t03_sales_chart'), Click('cell.A1'), Click('cell.B7', shift=True),
                    Click('ribbon.insert'), Click('insert.line_chart'))
        chart = state.sheet.charts[-1]
        assert (chart.id, chart.chart_type, chart.source) == ('chart2', 'line', parse_range('A1:B7'))
        state = run(state, Click('insert.chart_title'))
        assert not node(state, 'chart_title.ok').enabled
        state = run(state, Click('chart_title.text'), Type('North trend'), Click('chart_title.ok'))
        assert state.sheet.charts[-1].title == 'North trend'
        assert state.open_dialog is None

    def test_chart_outside_data(self, template_state):
        state = run(template_state('t03_sales_chart'), Click('cell.H1'), Click('ribbon.insert'))
        with pytest.raises(EffectFailed):
            apply_gui_action(state, Click('insert.bar_chart'))

    def test_sort_dialog(self, template_state):
        state = run(template_state(), Click('cell.A1'), Click('cell.F11', shift=True), Click('ribbon.data'),
                    Click('data.sort'), Click('sort.columns.age'), Click('sort.orders.descending'),
                    Click('sort.ok'))
        assert cell(state, 'A1') == 'Name'
        assert cell(state, 'A2') == 'Hugo Silva'
        assert cell(state, 'C2') == '52'
        assert cell(state, 'A11') == 'Ines Costa'
        assert state.open_dialog is None

    def test_sort_button_uses_first_column(self, template_state):
        state = run(template_state(), Click('cell.A1'), Click('cell.F11', shift=True), Click('ribbon.data'),
                    Click('data.sort_descending'))
        assert cell(state, 'A2') == 'Jonas Weber'
        assert cell(state, 'C2') == '39'

    def test_quick_access_checkbox(self, template_state):
        state = run(template_state(), Click('qat.dropdown'), Click('qat.menu.save'))
        assert state.quick_access_items == ['save']
        assert node(state, 'qat.item.save').bbox == (8, 3, 32, 25)
        assert node(state, 'qat.dropdown').bbox == (36, 3, 60, 25)
        assert state.open_menu_path == []

    def test_options_dialog_adds_command(self, template_state):
        state = run(template_state(), Click('qat.dropdown'), Click('qat.menu.more_commands'))
        assert state.dialog_state['page'] == 'quick_access'
        assert not node(state, 'options.add').enabled
        state = run(state, Click('options.categories.not_in_ribbon'), Click('options.commands.camera'),
                    Click('options.add'))
        assert state.quick_access_items == []
        state = run(state, Click('options.ok'))
        assert state.quick_access_items == ['camera']
        assert 'qat.item.camera' in visible_ids(state)

    def test_options_cancel_discards(self, template_state):
        state = run(template_state(), Click('ribbon.file'), Click('file.options'), Click('options.live_preview'),
                    Click('options.cancel'))
        assert state.app_options == {'live_preview': True}
        assert state.open_dialog is None

    def test_navigation_pane(self, template_state):
        state = run(template_state(), Click('ribbon.view'), Click('view.navigation_pane'))
        assert state.navigation_pane
        state = run(state, Click('nav.sheet.1'))
        assert state.sheet.name == 'Summary'
        assert state.selection is None


class TestKeysAndTyping:
    '''Key chords and typed text.'''

    def test_typing_needs_focus(self, template_state):
        with pytest.raises(NoFocusForTyping):
            apply_gui_action(template_state(), Type('x'))
        state = run(template_state(), Click('ribbon.file'), Click('file.options'))
        with pytest.raises(NoFocusForTyping):
            apply_gui_action(state, Type('x'))

    def test_escape(self, template_state):
        state = run(template_state(), Click('qat.dropdown'), PressKeys('Esc'))
        assert state.open_menu_path == []
        state = run(state, Click('qat.dropdown'), Click('qat.menu.more_commands'), PressKeys('escape'))
        assert state.open_dialog is None

    def test_unbound_chord(self, template_state):
        with pytest.raises(UnboundChord):
            apply_gui_action(template_state(), PressKeys('ctrl+shift+q'))

    def test_paste_needs_clipboard(self, template_state):
        with pytest.raises(EffectFailed):
            apply_gui_action(run(template_state(), Click('cell.A1')), PressKeys('ctrl+v'))

    def test_chords_blocked_by_dialog(self, template_state):
        state = run(template_state(), Click('ribbon.file'), Click('file.options'))
        with pytest.raises(EffectFailed):
            apply_gui_action(state, PressKeys('ctrl+a'))


class TestSelectionAnchor:
    '''Shift-click extends from the cell the selection started at.'''

    def test_extend_from_anchor_after_upward_selection(self, template_state):
        state = run(template_state(), Click('cell.E5'), Click('cell.C3', shift=True))
        assert state.selection == parse_range('C3:E5')
        assert state.selection_anchor == parse_cell('E5')
        state = run(state, Click('cell.G7', shift=True))
        assert state.selection == parse_range('E5:G7')
        state = run(state, Click('cell.A1', shift=True))
        assert state.selection == parse_range('A1:E5')

    def test_plain_click_moves_anchor(self, template_state):
        state = run(template_state(), Click('cell.E5'), Click('cell.C3', shift=True), Click('cell.B2'),
                    Click('cell.D4', shift=True))
        assert state.selection == parse_range('B2:D4')
        assert state.selection_anchor == parse_cell('B2')

    def test_programmatic_selection_anchors_top_left(self, template_state):
        state = run(template_state(), Click('cell.E5'))
        state = select_table_range(state, parse_range('B2:F8'))
        assert state.selection_anchor == parse_cell('B2')
        assert run(state, Click('cell.C3', shift=True)).selection == parse_range('B2:C3')
        state = run(template_state(), Click('cell.E5'), PressKeys('ctrl+a'), Click('cell.B2', shift=True))
        assert state.selection == parse_range('A1:B2')

    def test_anchor_is_part_of_the_state(self, template_state):
        upward = run(template_state(), Click('cell.E5'), Click('cell.C3', shift=True))
        downward = run(template_state(), Click('cell.C3'), Click('cell.E5', shift=True))
        assert upward.selection == downward.selection
        assert state_fingerprint(upward) != state_fingerprint(downward)


class TestGuiApiEquivalence:
    '''GUI sequences and programmatic calls that must leave the same workbook.'''

    @pytest.mark.parametrize('gui, api', [
        ([Click('cell.G1'), Type('x')],
         lambda s: set_cell_value(select_table_range(s, parse_range('G1')), parse_cell('G1'), 'x')),
        ([Click('cell.A1'), Click('cell.F11', shift=True)],
         lambda s: select_table_range(s, parse_range('A1:F11'))),
        ([PressKeys('ctrl+a')],
         lambda s: select_table_range(s, parse_range('A1:F11'))),
        ([Click('cell.F11'), Click('cell.A1', shift=True)],
         lambda s: select_table_range(s, parse_range('A1:F11'))),
        ([Click('cell.G2'), Type('=SUM(C2:D2)')],
         lambda s: set_cell_value(select_table_range(s, parse_range('G2')), parse_cell('G2'), '=SUM(C2:D2)')),
        ([Click('cell.G1'), Type('Bonus'), Click('cell.G2'), Type('100')],
         lambda s: select_table_range(insert_excel_table(s, [['Bonus'], ['100']], parse_cell('G1'))[0],
                                      parse_range('G2'))),
        ([Click('cell.G2'), Type('1'), Click('cell.G3'), Type('2'), Click('cell.G4'), Type('3')],
         lambda s: select_table_range(auto_fill(insert_excel_table(s, [['1'], ['2']], parse_cell('G2'))[0],
                                                parse_range('G2:G3'), parse_range('G4')),
                                      parse_range('G4'))),
        ([Click('cell.A2'), Click('cell.F2', shift=True), PressKeys('ctrl+c'), Click('cell.A12'),
          PressKeys('ctrl+v')],
         lambda s: select_table_range(insert_excel_table(
             s, [['Alice Brown', 'Sales', '34', '52000', '2015', 'Boston']], parse_cell('A12'))[0],
             parse_range('A12:F12'))),
        ([Click('cell.F12'), Type('=AVERAGE(D2:D11)'), Click('cell.B3'), Type('Sales'), Click('cell.A1'),
          Click('cell.D4', shift=True)],
         lambda s: select_table_range(set_cell_value(set_cell_value(s, parse_cell('F12'), '=AVERAGE(D2:D11)'),
                                                     parse_cell('B3'), 'Sales'), parse_range('A1:D4'))),
        ([Click('cell.H5'), Type('')],
         lambda s: select_table_range(s, parse_range('H5'))),
    ])
    def test_staff_sheet(self, template_state, gui, api):
        state = template_state()
        assert observable(run(state, *gui)) == observable(api(state))

    def test_column_swap(self, ui_tree):
        state = AppState([build_sheet({'name': 'S', 'cells': {'A1': 'a', 'B1': 'b', 'A2': '1', 'B2': '2'}})],
                         ui_tree)
        gui = run(state, Click('cell.A1'), Type('b'), Click('cell.B1'), Type('a'), Click('cell.A2'), Type('2'),
                  Click('cell.B2'), Type('1'))
        api = select_table_range(reorder_columns(state, [1, 0]), parse_range('B2'))
        assert state_fingerprint(gui) == state_fingerprint(api)


class TestUiTreeLoading:
    '''Validation of the command tree config.'''

    def test_shipped_tree(self, ui_tree):
        assert ui_tree.version == '1'
        assert ui_tree.path_to('fill.yellow') == ['ribbon.home', 'home.fill_color', 'fill.yellow']
        assert ui_tree.has_command('camera')
        assert ui_tree.has_command('sort.ok')

    def test_unknown_effect(self, tmp_path):
        doc = {'version': '1',
               'quick_access': {'id': 'qat', 'name': 'QAT', 'control_type': 'MenuItem'},
               'tabs': [{'id': 'ribbon.home', 'name': 'Home', 'control_type': 'Tab',
                         'groups': [{'name': 'G', 'controls': [
                             {'id': 'x', 'name': 'X', 'control_type': 'Button', 'effect': 'explode'}]}]}]}
        path = tmp_path / 'tree.json'
        path.write_text(json.dumps(doc), encoding='utf-8')
        with pytest.raises(InvalidUiTree, match='explode'):
            load_ui_tree(str(path))

    def test_duplicate_id(self, tmp_path):
        doc = {'version': '1',
               'quick_access': {'id': 'qat', 'name': 'QAT', 'control_type': 'MenuItem'},
               'tabs': [{'id': 'qat', 'name': 'Home', 'control_type': 'Tab', 'groups': []}]}
        path = tmp_path / 'tree.json'
        path.write_text(json.dumps(doc), encoding='utf-8')
        with pytest.raises(InvalidUiTree):
            load_ui_tree(str(path))

    def test_missing_file(self, tmp_path):
        with pytest.raises(InvalidUiTree):
            load_ui_tree(str(tmp_path / 'nope.json'))
