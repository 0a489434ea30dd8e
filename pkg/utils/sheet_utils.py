"""
    Workbook Engine Utilities

    Headless workbook model behind the simulated spreadsheet application: A1 addressing,
    cell classification, the small formula engine, sheets/charts/application state, the
    six programmatic spreadsheet operations exposed to the agent, state fingerprints and
    template loading.

    All public operations are pure: they clone the incoming AppState, mutate the clone
    and return it. The incoming state is never touched, so an operation that raises
    leaves the caller's state exactly as it was.

    Functions:
    ----------
    - parse_cell / parse_range: A1 text to CellAddress / RangeRef.
    - classify_raw: raw text to a CellContent (kind + parsed value).
    - table2markdown: GitHub-flavoured pipe table of a range.
    - insert_excel_table: write a rectangular grid at an anchor.
    - select_table_range: set the selection.
    - set_cell_value: set a value or formula and recompute dependents.
    - auto_fill: extend a single-row/column source into a target following its pattern.
    - reorder_columns: permute the used columns of the active sheet.
    - state_fingerprint: sha256 digest over the canonical state document.
    - load_workbook: template JSON file to a fresh AppState.
"""

import copy
import hashlib
import json
import logging
import re
from dataclasses import dataclass, field, replace
from decimal import Decimal, InvalidOperation
from typing import Any

from geometry_utils import CELL_HEIGHT, CELL_WIDTH, GRID_VIEWPORT, cell_bbox, range_bbox

logger = logging.getLogger(__name__)

MAX_COLUMNS = 16384
MAX_ROWS = 1048576
ERROR_VALUE = '#ERROR'
CHART_TYPES = ('bar', 'line', 'pie')


class SheetError(ValueError):
    '''Base class of every workbook-level failure.'''


class MalformedRange(SheetError):
    pass


class OutOfBounds(SheetError):
    pass


class EmptyRange(SheetError):
    pass


class NonRectangularData(SheetError):
    pass


class IncompatibleRanges(SheetError):
    pass


class InvalidPermutation(SheetError):
    pass


class WorkbookLoadError(SheetError):
    pass


# ----------------------------------------------------------------
# A1 addressing
# ----------------------------------------------------------------

_CELL_RE = re.compile(r'^([A-Z]{1,3})([0-9]+)$')
_NUMBER_RE = re.compile(r'^[+-]?(\d+(\.\d*)?|\.\d+)$')


def column_letters(index):
    '''
        Zero-based column index to spreadsheet letters (0 -> A, 26 -> AA).
    '''
    letters = ''
    index += 1
    while index:
        index, rem = divmod(index - 1, 26)
        letters = chr(65 + rem) + letters
    return letters


def column_index(letters):
    index = 0
    for ch in letters:
        index = index * 26 + (ord(ch) - 64)
    return index - 1


@dataclass(frozen=True, order=True)
class CellAddress:
    column: int
    row: int

    def __post_init__(self):
        if not 0 <= self.column < MAX_COLUMNS:
            raise OutOfBounds(f'Column {self.column} outside [0, {MAX_COLUMNS - 1}]')
        if not 0 <= self.row < MAX_ROWS:
            raise OutOfBounds(f'Row {self.row} outside [0, {MAX_ROWS - 1}]')

    def to_a1(self):
        return f'{column_letters(self.column)}{self.row + 1}'

    def offset(self, columns=0, rows=0):
        return CellAddress(self.column + columns, self.row + rows)

    def __str__(self):
        return self.to_a1()


@dataclass(frozen=True)
class RangeRef:
    top_left: CellAddress
    bottom_right: CellAddress

    def __post_init__(self):
        if (self.top_left.column > self.bottom_right.column
                or self.top_left.row > self.bottom_right.row):
            raise MalformedRange(f'Range corners {self.top_left}:{self.bottom_right} are inverted')

    @classmethod
    def single(cls, addr):
        return cls(addr, addr)

    @property
    def width(self):
        return self.bottom_right.column - self.top_left.column + 1

    @property
    def height(self):
        return self.bottom_right.row - self.top_left.row + 1

    @property
    def is_single_row(self):
        return self.height == 1

    @property
    def is_single_column(self):
        return self.width == 1

    def contains(self, addr):
        return (self.top_left.column <= addr.column <= self.bottom_right.column
                and self.top_left.row <= addr.row <= self.bottom_right.row)

    def within(self, other):
        return other.contains(self.top_left) and other.contains(self.bottom_right)

    def intersects(self, other):
        return not (self.bottom_right.column < other.top_left.column
                    or other.bottom_right.column < self.top_left.column
                    or self.bottom_right.row < other.top_left.row
                    or other.bottom_right.row < self.top_left.row)

    def rows(self):
        '''Addresses grouped by row, top to bottom.'''
        return [[CellAddress(c, r) for c in range(self.top_left.column, self.bottom_right.column + 1)]
                for r in range(self.top_left.row, self.bottom_right.row + 1)]

    def cells(self):
        return [addr for row in self.rows() for addr in row]

    def bbox(self):
        '''Union pixel rectangle of the visible cells, None when nothing is visible.'''
        return range_bbox((self.top_left.column, self.top_left.row),
                          (self.bottom_right.column, self.bottom_right.row))

    def to_a1(self):
        if self.top_left == self.bottom_right:
            return self.top_left.to_a1()
        return f'{self.top_left.to_a1()}:{self.bottom_right.to_a1()}'

    def __str__(self):
        return self.to_a1()


def parse_cell(text):
    '''
        Parses a single A1 cell token.

        Parameters:
        -----------
        text : str
            Token such as "B7" (case-insensitive).

        Returns:
        --------
        CellAddress

        Raises:
        -------
        MalformedRange
            If the token is not column-letters followed by row digits.
        OutOfBounds
            If the address exceeds the addressable space.
    '''
    match = _CELL_RE.match(str(text).strip().upper())
    if not match or match.group(2).startswith('0'):
        raise MalformedRange(f'Cell reference {text!r} is malformed')
    return CellAddress(column_index(match.group(1)), int(match.group(2)) - 1)


def parse_range(text):
    '''
        Parses A1 notation ("A1" or "A1:G3") into an inclusive RangeRef.

        Parameters:
        -----------
        text : str
            Non-empty A1 reference. Corners given in reverse order are normalised.

        Returns:
        --------
        RangeRef
            Single-cell references yield a 1x1 range.

        Raises:
        -------
        MalformedRange
            For empty text or tokens not matching letters+digits[:letters+digits].
    '''
    if text is None or not str(text).strip():
        raise MalformedRange('Empty range reference')
    parts = str(text).strip().split(':')
    if len(parts) > 2:
        raise MalformedRange(f'Range {text!r} is malformed')
    first = parse_cell(parts[0])
    second = parse_cell(parts[1]) if len(parts) == 2 else first
    return RangeRef(CellAddress(min(first.column, second.column), min(first.row, second.row)),
                    CellAddress(max(first.column, second.column), max(first.row, second.row)))


# ----------------------------------------------------------------
# Cells and formulas
# ----------------------------------------------------------------

def _parse_number(raw):
    text = raw.strip()
    if '.' in text:
        return float(text)
    return int(text)


def format_number(value):
    '''Display text of a numeric value; integral values drop their decimals.'''
    if isinstance(value, float):
        if value.is_integer():
            return str(int(value))
        return f'{value:.15g}'
    return str(value)


@dataclass(frozen=True)
class CellContent:
    raw: str = ''
    kind: str = 'empty' #empty, number, text, formula
    computed: Any = ''

    @property
    def display(self):
        if isinstance(self.computed, (int, float)) and not isinstance(self.computed, bool):
            return format_number(self.computed)
        return str(self.computed)


EMPTY_CELL = CellContent()


def classify_raw(raw):
    '''
        Classifies raw text into a CellContent. Formulas are left with an empty computed
        value; Sheet.recalculate fills it in.
    '''
    raw = '' if raw is None else str(raw)
    if raw == '':
        return EMPTY_CELL
    if raw.startswith('='):
        return CellContent(raw, 'formula', '')
    if _NUMBER_RE.match(raw.strip()):
        return CellContent(raw, 'number', _parse_number(raw))
    return CellContent(raw, 'text', raw)


_LITERAL_FORMULA_RE = re.compile(r'^=\s*([+-]?(\d+(\.\d*)?|\.\d+))\s*$')
_REF_FORMULA_RE = re.compile(r'^=\s*([A-Z]{1,3}[0-9]+)\s*$', re.IGNORECASE)
_FUNC_FORMULA_RE = re.compile(
    r'^=\s*(SUM|AVERAGE)\s*\(\s*([A-Z]{1,3}[0-9]+(?:\s*:\s*[A-Z]{1,3}[0-9]+)?)\s*\)\s*$',
    re.IGNORECASE)


def _normalise_result(value):
    if isinstance(value, float) and value.is_integer():
        return int(value)
    return value


@dataclass(frozen=True)
class CellFormat:
    bold: bool = False
    fill: str | None = None #"#RRGGBB"

    @property
    def is_default(self):
        return not self.bold and self.fill is None


@dataclass(frozen=True)
class ChartObject:
    id: str
    chart_type: str
    source: RangeRef
    title: str | None = None
    anchor_bbox: tuple = GRID_VIEWPORT


def chart_anchor(source, chart_count=0):
    '''
        Anchor rectangle of a chart: four columns wide, ten rows tall, placed to the right
        of its source and shifted down for every chart already on the sheet.
    '''
    column = min(source.bottom_right.column + 2, 8)
    row = min(source.top_left.row + chart_count * 2, 15)
    left, top, _, _ = cell_bbox(column, row)
    right = min(left + 4 * CELL_WIDTH, GRID_VIEWPORT[2])
    bottom = min(top + 10 * CELL_HEIGHT, GRID_VIEWPORT[3])
    return (left, top, right, bottom)


@dataclass
class Sheet:
    name: str
    cells: dict = field(default_factory=dict)
    formats: dict = field(default_factory=dict)
    charts: list = field(default_factory=list)
    merged: list = field(default_factory=list)
    freeze_at: CellAddress | None = None

    def get(self, addr):
        return self.cells.get(addr, EMPTY_CELL)

    def display(self, addr):
        return self.get(addr).display

    def format_of(self, addr):
        return self.formats.get(addr, CellFormat())

    def set_format(self, addr, fmt):
        if fmt.is_default:
            self.formats.pop(addr, None)
        else:
            self.formats[addr] = fmt

    def set_raw(self, addr, raw):
        '''Stores raw text without recomputing; callers finish with recalculate().'''
        content = classify_raw(raw)
        if content.kind == 'empty':
            self.cells.pop(addr, None)
        else:
            self.cells[addr] = content

    @property
    def used_range(self):
        if not self.cells:
            return None
        columns = [a.column for a in self.cells]
        rows = [a.row for a in self.cells]
        return RangeRef(CellAddress(min(columns), min(rows)), CellAddress(max(columns), max(rows)))

    @property
    def column_count_used(self):
        used = self.used_range
        return used.width if used else 0

    @property
    def row_count_used(self):
        used = self.used_range
        return used.height if used else 0

    def header_values(self, rng):
        '''Display texts of the first row of a range.'''
        return [self.display(addr) for addr in rng.rows()[0]]

    def recalculate(self):
        '''Re-evaluates every formula from raw text.'''
        memo = {}
        for addr, content in list(self.cells.items()):
            if content.kind == 'formula':
                value = self._evaluate(addr, memo, set())
                self.cells[addr] = replace(content, computed=value)

    def _value_of(self, addr, memo, visiting):
        content = self.cells.get(addr)
        if content is None:
            return 0
        if content.kind == 'formula':
            return self._evaluate(addr, memo, visiting)
        return content.computed

    def _evaluate(self, addr, memo, visiting):
        if addr in memo:
            return memo[addr]
        if addr in visiting:
            return ERROR_VALUE
        visiting.add(addr)
        try:
            value = self._evaluate_formula(self.cells[addr].raw, memo, visiting)
        except SheetError:
            value = ERROR_VALUE
        visiting.discard(addr)
        memo[addr] = value
        return value

    def _evaluate_formula(self, raw, memo, visiting):
        match = _LITERAL_FORMULA_RE.match(raw)
        if match:
            return _parse_number(match.group(1))
        match = _REF_FORMULA_RE.match(raw)
        if match:
            return self._value_of(parse_cell(match.group(1)), memo, visiting)
        match = _FUNC_FORMULA_RE.match(raw)
        if not match:
            return ERROR_VALUE
        rng = parse_range(match.group(2).replace(' ', ''))
        numbers = []
        #Populated cells inside the range, row-major
        populated = sorted((a for a in self.cells if rng.contains(a)), key=lambda a: (a.row, a.column))
        for cell in populated:
            value = self._value_of(cell, memo, visiting)
            if value == ERROR_VALUE:
                return ERROR_VALUE
            if isinstance(value, (int, float)) and not isinstance(value, bool):
                numbers.append(value)
        if match.group(1).upper() == 'SUM':
            return _normalise_result(sum(numbers))
        if not numbers:
            return ERROR_VALUE
        return _normalise_result(sum(numbers) / len(numbers))

    def copy(self):
        return Sheet(self.name, dict(self.cells), dict(self.formats), list(self.charts),
                     list(self.merged), self.freeze_at)

    def to_dict(self):
        return {
            'name': self.name,
            'cells': {a.to_a1(): c.raw for a, c in sorted(self.cells.items())},
            'formats': {a.to_a1(): {'bold': f.bold, 'fill': f.fill}
                        for a, f in sorted(self.formats.items())},
            'charts': [{'id': ch.id, 'chart_type': ch.chart_type, 'source': ch.source.to_a1(),
                        'title': ch.title, 'anchor_bbox': list(ch.anchor_bbox)}
                       for ch in self.charts],
            'merged': [m.to_a1() for m in self.merged],
            'freeze_at': self.freeze_at.to_a1() if self.freeze_at else None,
        }


# ----------------------------------------------------------------
# Application state
# ----------------------------------------------------------------

@dataclass
class AppState:
    workbook: list
    ui_tree: Any = None
    active_sheet: int = 0
    selection: RangeRef | None = None
    selection_anchor: CellAddress | None = None #cell a shift-click extends from
    open_menu_path: list = field(default_factory=list)
    open_dialog: str | None = None
    dialog_state: dict = field(default_factory=dict)
    quick_access_items: list = field(default_factory=list)
    navigation_pane: bool = False
    app_options: dict = field(default_factory=lambda: {'live_preview': True})
    clipboard: list | None = None

    @property
    def sheet(self):
        return self.workbook[self.active_sheet]

    def clone(self):
        return AppState(
            workbook=[s.copy() for s in self.workbook],
            ui_tree=self.ui_tree,
            active_sheet=self.active_sheet,
            selection=self.selection,
            selection_anchor=self.selection_anchor,
            open_menu_path=list(self.open_menu_path),
            open_dialog=self.open_dialog,
            dialog_state=copy.deepcopy(self.dialog_state),
            quick_access_items=list(self.quick_access_items),
            navigation_pane=self.navigation_pane,
            app_options=dict(self.app_options),
            clipboard=copy.deepcopy(self.clipboard),
        )

    def to_document(self):
        '''Canonical JSON-ready view of everything except the UI tree object itself.'''
        return {
            'ui_tree_version': getattr(self.ui_tree, 'version', None),
            'sheets': [s.to_dict() for s in self.workbook],
            'active_sheet': self.active_sheet,
            'selection': self.selection.to_a1() if self.selection else None,
            'selection_anchor': self.selection_anchor.to_a1() if self.selection_anchor else None,
            'open_menu_path': list(self.open_menu_path),
            'open_dialog': self.open_dialog,
            'dialog_state': self.dialog_state,
            'quick_access_items': list(self.quick_access_items),
            'navigation_pane': self.navigation_pane,
            'app_options': self.app_options,
            'clipboard': self.clipboard,
        }


def state_fingerprint(state):
    '''
        Digest of an AppState: sha256 over the canonical JSON document.

        Parameters:
        -----------
        state : AppState

        Returns:
        --------
        str
            64 hexadecimal characters. Equal states give equal digests.
    '''
    doc = json.dumps(state.to_document(), sort_keys=True, separators=(',', ':'), ensure_ascii=False)
    return hashlib.sha256(doc.encode('utf-8')).hexdigest()


# ----------------------------------------------------------------
# Programmatic spreadsheet operations
# ----------------------------------------------------------------

API_NAMES = ('table2markdown', 'insert_excel_table', 'select_table_range',
             'set_cell_value', 'auto_fill', 'reorder_columns')


def _escape_markdown(text):
    return text.replace('|', '\\|').replace('\n', ' ')


def table2markdown(state, rng):
    '''
        Converts a range of the active sheet into a GitHub-flavoured pipe table.

        Parameters:
        -----------
        state : AppState
        rng : RangeRef
            First row becomes the header row.

        Returns:
        --------
        str
            Header line, "---" separator line and one line per body row, joined by newlines.

        Raises:
        -------
        EmptyRange
            If every cell of the range is empty.
    '''
    sheet = state.sheet
    rows = [[_escape_markdown(sheet.display(addr)) for addr in row] for row in rng.rows()]
    if not any(cell for row in rows for cell in row):
        raise EmptyRange(f'Range {rng} is empty')
    lines = ['| ' + ' | '.join(rows[0]) + ' |',
             '| ' + ' | '.join('---' for _ in rows[0]) + ' |']
    lines += ['| ' + ' | '.join(row) + ' |' for row in rows[1:]]
    return '\n'.join(lines)


def insert_excel_table(state, data, anchor):
    '''
        Writes a rectangular grid of raw values with its top-left cell at anchor.

        Parameters:
        -----------
        state : AppState
        data : list of list of str
            Non-empty, every row the same length.
        anchor : CellAddress

        Returns:
        --------
        (AppState, RangeRef)
            New state and the covered range.

        Raises:
        -------
        NonRectangularData
            For empty or ragged grids.
        OutOfBounds
            If the grid would leave the addressable space.
    '''
    if not data or not data[0] or any(len(row) != len(data[0]) for row in data):
        raise NonRectangularData('Table data must be a non-empty rectangular grid')
    covered = RangeRef(anchor, anchor.offset(len(data[0]) - 1, len(data) - 1))
    new = state.clone()
    sheet = new.sheet
    for row_values, row_addrs in zip(data, covered.rows()):
        for value, addr in zip(row_values, row_addrs):
            sheet.set_raw(addr, '' if value is None else str(value))
    sheet.recalculate()
    logger.debug('Inserted %dx%d table at %s', len(data), len(data[0]), anchor)
    return new, covered


def select_table_range(state, rng):
    '''
        Sets the selection to rng. Cell contents are never touched.
    '''
    if not isinstance(rng, RangeRef):
        raise MalformedRange(f'{rng!r} is not a range')
    new = state.clone()
    new.selection = rng
    new.selection_anchor = rng.top_left
    return new


def set_cell_value(state, addr, value):
    '''
        Sets the raw text (value or formula) of a cell and recomputes the sheet.

        Parameters:
        -----------
        state : AppState
        addr : CellAddress
        value : str
            Formulas outside the supported subset compute to "#ERROR" but keep their raw text.

        Returns:
        --------
        AppState
    '''
    new = state.clone()
    new.sheet.set_raw(addr, '' if value is None else str(value))
    new.sheet.recalculate()
    return new


_TRAILING_INT_RE = re.compile(r'^(.*?)(\d+)$')


def _decimal_text(value):
    if value == value.to_integral_value():
        return str(int(value))
    return format(value.normalize(), 'f')


def _fill_values(raws, count):
    '''
        Extends a list of source raws by count values: arithmetic progression for numbers,
        incremented trailing integers for labels, cyclic copy otherwise.
    '''
    kinds = [classify_raw(r).kind for r in raws]
    if all(k == 'number' for k in kinds):
        try:
            numbers = [Decimal(r.strip()) for r in raws]
        except InvalidOperation:
            numbers = None
        if numbers is not None:
            step = numbers[-1] - numbers[-2] if len(numbers) > 1 else Decimal(0)
            return [_decimal_text(numbers[-1] + step * (k + 1)) for k in range(count)]
    matches = [_TRAILING_INT_RE.match(r) if k == 'text' else None for r, k in zip(raws, kinds)]
    if all(matches):
        prefix, digits = matches[-1].group(1), matches[-1].group(2)
        step = 1
        if len(matches) > 1 and matches[-2].group(1) == prefix:
            step = int(digits) - int(matches[-2].group(2))
        width = len(digits) if digits.startswith('0') else 0
        return [f'{prefix}{str(int(digits) + step * (k + 1)).zfill(width)}' for k in range(count)]
    return [raws[(len(raws) + k) % len(raws)] for k in range(count)]


def auto_fill(state, source, target):
    '''
        Fills target from the pattern recognised in source.

        Parameters:
        -----------
        state : AppState
        source : RangeRef
            Single row or single column.
        target : RangeRef
            Same row/column as source; either starts right after source or starts at
            source and reaches past it.

        Returns:
        --------
        AppState

        Raises:
        -------
        IncompatibleRanges
            For two-dimensional, non-collinear or non-extending ranges.
    '''
    axes = []
    if (source.is_single_column and target.is_single_column
            and source.top_left.column == target.top_left.column):
        axes.append('row')
    if (source.is_single_row and target.is_single_row
            and source.top_left.row == target.top_left.row):
        axes.append('column')
    if not axes:
        raise IncompatibleRanges(f'Cannot fill {target} from {source}')
    for axis in axes:
        s0 = getattr(source.top_left, axis)
        s1 = getattr(source.bottom_right, axis)
        t0 = getattr(target.top_left, axis)
        t1 = getattr(target.bottom_right, axis)
        #Target either follows the source or starts with it
        if t0 == s1 + 1:
            start = t0
            break
        if t0 == s0 and t1 > s1:
            start = s1 + 1
            break
    else:
        raise IncompatibleRanges(f'Target {target} does not extend source {source}')
    new = state.clone()
    sheet = new.sheet
    raws = [sheet.get(addr).raw for addr in source.cells()]
    values = _fill_values(raws, t1 - start + 1)
    for k, value in enumerate(values):
        if axis == 'row':
            addr = CellAddress(source.top_left.column, start + k)
        else:
            addr = CellAddress(start + k, source.top_left.row)
        sheet.set_raw(addr, value)
    sheet.recalculate()
    return new


def reorder_columns(state, order):
    '''
        Permutes the used columns of the active sheet.

        Parameters:
        -----------
        state : AppState
        order : list of int
            order[i] is the destination column of used column start+i, where start is
            the first used column. Must be a permutation of the used column indices.

        Returns:
        --------
        AppState

        Raises:
        -------
        InvalidPermutation
            For duplicate, missing or foreign indices.
    '''
    used = state.sheet.used_range
    start = used.top_left.column if used else 0
    width = used.width if used else 0
    expected = set(range(start, start + width))
    try:
        order = [int(i) for i in order]
    except (TypeError, ValueError):
        raise InvalidPermutation(f'Order {order!r} is not a list of column indices')
    if len(order) != width or set(order) != expected:
        raise InvalidPermutation(f'Order {order} is not a permutation of columns {sorted(expected)}')
    new = state.clone()
    if width == 0:
        return new
    sheet = new.sheet
    moved_cells = {}
    moved_formats = {}
    for addr, content in sheet.cells.items():
        moved_cells[CellAddress(order[addr.column - start], addr.row)
                    if start <= addr.column < start + width else addr] = content
    for addr, fmt in sheet.formats.items():
        moved_formats[CellAddress(order[addr.column - start], addr.row)
                      if start <= addr.column < start + width else addr] = fmt
    sheet.cells = moved_cells
    sheet.formats = moved_formats
    sheet.recalculate()
    return new


# ----------------------------------------------------------------
# Template workbooks
# ----------------------------------------------------------------

def build_sheet(spec):
    '''
        Builds a Sheet from its template JSON entry {name, cells, formats, charts}.
    '''
    name = str(spec.get('name', '')).strip()
    if not name:
        raise WorkbookLoadError('Sheet name must be non-empty')
    sheet = Sheet(name)
    for a1, raw in spec.get('cells', {}).items():
        sheet.set_raw(parse_cell(a1), str(raw))
    for a1, fmt in spec.get('formats', {}).items():
        sheet.set_format(parse_cell(a1), CellFormat(bool(fmt.get('bold', False)), fmt.get('fill')))
    sheet.recalculate()
    for entry in spec.get('charts', []):
        if entry.get('chart_type') not in CHART_TYPES:
            raise WorkbookLoadError(f'Chart type {entry.get("chart_type")!r} not in {CHART_TYPES}')
        source = parse_range(entry['source'])
        sheet.charts.append(ChartObject(entry['id'], entry['chart_type'], source, entry.get('title'),
                                        chart_anchor(source, len(sheet.charts))))
    return sheet


def load_workbook(path, ui_tree=None):
    '''
        Loads a template workbook JSON file into a fresh AppState.

        Parameters:
        -----------
        path : str
            Template JSON file {sheets: [...], ui_tree_version}.
        ui_tree : UiCommandTree, optional
            Tree attached to the state; its version must match the template's.

        Returns:
        --------
        AppState

        Raises:
        -------
        WorkbookLoadError
            If the file is missing, unreadable or structurally invalid.
    '''
    try:
        with open(path, encoding='utf-8') as f:
            doc = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise WorkbookLoadError(f'Cannot load workbook {path}: {e}')
    sheets = doc.get('sheets') or []
    if not sheets:
        raise WorkbookLoadError(f'Workbook {path} has no sheets')
    try:
        workbook = [build_sheet(s) for s in sheets]
    except (KeyError, TypeError) as e:
        raise WorkbookLoadError(f'Workbook {path} is invalid: {e}')
    names = [s.name for s in workbook]
    if len(set(names)) != len(names):
        raise WorkbookLoadError(f'Duplicate sheet names in {path}: {names}')
    version = doc.get('ui_tree_version')
    if ui_tree is not None and version is not None and str(version) != str(ui_tree.version):
        raise WorkbookLoadError(f'Workbook {path} targets ui tree version {version}, loaded {ui_tree.version}')
    return AppState(workbook=workbook, ui_tree=ui_tree)
