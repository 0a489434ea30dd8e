"""
    Screenshot Rendering Utilities

    Pure Pillow renderer of an AppState: ribbon strip, grid with headers, cell text,
    formats, merges, charts, selection highlight, sheet tabs, navigation pane, dropdown
    menus and modal dialogs drawn topmost. Also draws the Set-of-Marks badges and the
    cursor glyph used by the tutorial annotator.

    Pixel tests only rely on geometry and fill colours, never on glyph shapes.

    Functions:
    ----------
    - render_screenshot: AppState to a Screenshot (RGB raster + region index).
    - draw_marks: numbered 16x16 badges at each marked node's top-left corner.
    - draw_cursor: composites the 24x24 arrow glyph with its hotspot at a point.
    - save_png: writes a 24-bit RGB PNG deterministically.
"""

import logging
from dataclasses import dataclass, field

from PIL import Image, ImageDraw, ImageFont

from geometry_utils import (BADGE_SIZE, CANVAS_HEIGHT, CANVAS_WIDTH, CELL_HEIGHT, CELL_WIDTH, GRID_VIEWPORT,
                            CURSOR_SIZE, NAV_PANE, RIBBON_HEIGHT, SHEET_TAB_ROW, TAB_ROW,
                            TITLE_BAR, VIEW_COLUMNS, VIEW_ROWS, cell_bbox, range_bbox)
from gui_utils import layout_state
from sheet_utils import column_letters

logger = logging.getLogger(__name__)

WHITE = (255, 255, 255)
BLACK = (0, 0, 0)
TEXT = (32, 32, 32)
DISABLED_TEXT = (160, 160, 160)
TITLE_GREEN = (33, 115, 70)
CHROME = (243, 243, 243)
RIBBON = (250, 250, 250)
HEADER = (230, 230, 230)
GRIDLINE = (212, 212, 212)
BORDER = (171, 171, 171)
SELECTION_TINT = (204, 232, 214)
SELECTION_BORDER = (16, 124, 65)
HIGHLIGHT = (0, 120, 215)
BADGE_COLOR = (0, 92, 197)
CHART_PALETTE = [(68, 114, 196), (237, 125, 49), (165, 165, 165), (255, 192, 0), (91, 155, 213), (112, 173, 71)]

FONT = ImageFont.load_default(size=12)
BOLD_OFFSET = 1
BADGE_FONT = ImageFont.load_default(size=10)

#Arrow on a transparent CURSOR_SIZE x CURSOR_SIZE sprite, tip at (0, 0)
CURSOR_ART = [row.ljust(CURSOR_SIZE, '.') for row in (
    'B',
    'BB',
    'BWB',
    'BWWB',
    'BWWWB',
    'BWWWWB',
    'BWWWWWB',
    'BWWWWWWB',
    'BWWWWWWWB',
    'BWWWWWWWWB',
    'BWWWWWWWWWB',
    'BWWWWWWWWWWB',
    'BWWWWWWWWWWWB',
    'BWWWWWWWWWWWWB',
    'BWWWWWWWWWWWWWB',
    'BWWWWWWWWWWWWWWB',
    'BWWWWWWWWWWWWWWWB',
    'BWWWWWWWWWWWBBBBBB',
    'BWWWWBBBBBWWBB',
    'BWWWB.....BBWWBB',
    'BWWB........BBWWBB',
    'BWB...........BBWWBB',
    'BB..............BBWWBB',
    'B.................BBBBBB',
)]


@dataclass
class Screenshot:
    image: Image.Image
    region_index: dict = field(default_factory=dict)
    width: int = CANVAS_WIDTH
    height: int = CANVAS_HEIGHT

    @property
    def pixels(self):
        return self.image

    def save(self, path):
        save_png(self.image, path)
        return path


def save_png(image, path):
    '''
        Saves an image as 24-bit RGB PNG. Fixed encoder settings keep the bytes reproducible.
    '''
    image.convert('RGB').save(path, format='PNG', compress_level=1)


def _fit(draw, text, width, font=FONT):
    '''Truncates text so it fits in width pixels.'''
    text = str(text)
    if draw.textlength(text, font=font) <= width:
        return text
    while text and draw.textlength(text + '...', font=font) > width:
        text = text[:-1]
    return text + '...' if text else ''


def _text(draw, xy, text, width, fill=TEXT, bold=False, font=FONT):
    text = _fit(draw, text, width, font)
    draw.text(xy, text, fill=fill, font=font)
    if bold:
        draw.text((xy[0] + BOLD_OFFSET, xy[1]), text, fill=fill, font=font)


def _hex_to_rgb(value):
    value = value.lstrip('#')
    return tuple(int(value[i:i + 2], 16) for i in (0, 2, 4))


def _draw_control(draw, placed):
    node = placed.node
    left, top, right, bottom = node.bbox
    color = TEXT if node.enabled else DISABLED_TEXT
    width = right - left - 8
    if node.control_type == 'CheckBox':
        draw.rectangle((left, top, right - 1, bottom - 1), fill=WHITE)
        box = (left + 4, top + 6, left + 15, top + 17)
        draw.rectangle(box, outline=BORDER, fill=HIGHLIGHT if placed.checked else WHITE)
        _text(draw, (left + 20, top + 5), node.name, width - 16, color)
    elif node.control_type in ('ListItem', 'Tab') and placed.kind in ('dialog_control', 'nav', 'sheet_tab'):
        fill = HIGHLIGHT if placed.checked and node.control_type == 'ListItem' else (
            WHITE if placed.checked else CHROME)
        draw.rectangle((left, top, right - 1, bottom - 1), fill=fill, outline=BORDER)
        text_color = WHITE if placed.checked and node.control_type == 'ListItem' else color
        _text(draw, (left + 4, top + 4), node.name, width, text_color, bold=placed.checked)
    elif node.control_type == 'Edit':
        draw.rectangle((left, top, right - 1, bottom - 1), fill=WHITE, outline=BORDER)
    else:
        draw.rectangle((left, top, right - 1, bottom - 1), fill=WHITE, outline=BORDER)
        _text(draw, (left + 4, top + 5), node.name, width, color)
        if node.control_type == 'MenuItem' and placed.kind != 'menu':
            draw.polygon([(right - 12, top + 10), (right - 4, top + 10), (right - 8, top + 15)], fill=color)


def _draw_chrome(draw, state, layout):
    draw.rectangle(TITLE_BAR, fill=TITLE_GREEN)
    title = f'{state.sheet.name} - Workbook'
    draw.text((CANVAS_WIDTH // 2 - 60, 8), title, fill=WHITE, font=FONT)
    draw.rectangle(TAB_ROW, fill=TITLE_GREEN)
    draw.rectangle((0, 56, CANVAS_WIDTH - 1, RIBBON_HEIGHT - 1), fill=RIBBON)
    draw.line((0, RIBBON_HEIGHT - 1, CANVAS_WIDTH, RIBBON_HEIGHT - 1), fill=BORDER)
    path = state.open_menu_path
    for placed in layout.base:
        node = placed.node
        left, top, right, bottom = node.bbox
        if placed.kind == 'qat_item':
            draw.rectangle((left, top, right - 1, bottom - 1), fill=(56, 140, 94))
            draw.text((left + 8, top + 4), node.name[:1], fill=WHITE, font=FONT)
        elif placed.kind == 'root' and node.bbox[1] < 28:
            fill = (56, 140, 94) if node.id in path else TITLE_GREEN
            draw.rectangle((left, top, right - 1, bottom - 1), fill=fill)
            draw.polygon([(left + 7, top + 9), (left + 17, top + 9), (left + 12, top + 15)], fill=WHITE)
        elif placed.kind == 'root':
            is_open = bool(path) and path[0] == node.id
            if node.control_type == 'MenuItem':
                draw.rectangle((left, top, right - 1, bottom - 1), fill=(20, 90, 50) if is_open else TITLE_GREEN)
                _text(draw, (left + 8, top + 6), node.name, right - left - 12, WHITE)
            else:
                draw.rectangle((left, top, right - 1, bottom + 1), fill=RIBBON if is_open else TITLE_GREEN)
                _text(draw, (left + 8, top + 6), node.name, right - left - 12,
                      TEXT if is_open else WHITE, bold=is_open)
        elif placed.kind == 'control':
            _draw_control(draw, placed)


def _draw_grid(draw, state):
    sheet = state.sheet
    vleft, vtop, vright, vbottom = GRID_VIEWPORT
    #Headers
    draw.rectangle((0, RIBBON_HEIGHT, CANVAS_WIDTH - 1, vtop - 1), fill=HEADER)
    draw.rectangle((0, vtop, vleft - 1, vbottom - 1), fill=HEADER)
    draw.rectangle((vleft, vtop, vright - 1, vbottom - 1), fill=WHITE)
    sel = state.selection
    for column in range(VIEW_COLUMNS):
        x = vleft + column * CELL_WIDTH
        letter = column_letters(column)
        highlighted = sel is not None and sel.top_left.column <= column <= sel.bottom_right.column
        if highlighted:
            draw.rectangle((x, RIBBON_HEIGHT, x + CELL_WIDTH - 1, vtop - 1), fill=(210, 210, 210))
        draw.text((x + CELL_WIDTH // 2 - 4, RIBBON_HEIGHT + 6), letter, fill=TEXT, font=FONT)
    for row in range(VIEW_ROWS):
        y = vtop + row * CELL_HEIGHT
        draw.text((8, y + 5), str(row + 1), fill=TEXT, font=FONT)
    #Fills, then selection tint
    for addr, fmt in sheet.formats.items():
        rect = cell_bbox(addr.column, addr.row)
        if rect and fmt.fill:
            draw.rectangle((rect[0], rect[1], rect[2] - 1, rect[3] - 1), fill=_hex_to_rgb(fmt.fill))
    if sel is not None:
        tint = range_bbox((sel.top_left.column, sel.top_left.row), (sel.bottom_right.column, sel.bottom_right.row))
        if tint:
            draw.rectangle((tint[0], tint[1], tint[2] - 1, tint[3] - 1), fill=SELECTION_TINT)
    #Gridlines
    for column in range(VIEW_COLUMNS + 1):
        x = vleft + column * CELL_WIDTH
        draw.line((x, RIBBON_HEIGHT, x, vbottom - 1), fill=GRIDLINE)
    for row in range(VIEW_ROWS + 1):
        y = vtop + row * CELL_HEIGHT
        draw.line((0, y, vright - 1, y), fill=GRIDLINE)
    #Merged ranges hide inner gridlines
    for merged in sheet.merged:
        rect = merged.bbox()
        if rect:
            fill = SELECTION_TINT if sel is not None and merged.intersects(sel) else WHITE
            fmt = sheet.format_of(merged.top_left)
            if fmt.fill and not (sel is not None and merged.intersects(sel)):
                fill = _hex_to_rgb(fmt.fill)
            draw.rectangle((rect[0] + 1, rect[1] + 1, rect[2] - 2, rect[3] - 2), fill=fill)
    if sheet.freeze_at is not None:
        fx = vleft + min(sheet.freeze_at.column, VIEW_COLUMNS) * CELL_WIDTH
        fy = vtop + min(sheet.freeze_at.row, VIEW_ROWS) * CELL_HEIGHT
        if sheet.freeze_at.column:
            draw.line((fx, vtop, fx, vbottom - 1), fill=(120, 120, 120), width=2)
        if sheet.freeze_at.row:
            draw.line((vleft, fy, vright - 1, fy), fill=(120, 120, 120), width=2)
    #Cell text, left aligned
    merged_width = {m.top_left: m.bbox() for m in sheet.merged}
    for addr, content in sheet.cells.items():
        rect = cell_bbox(addr.column, addr.row)
        if rect is None or not content.display:
            continue
        area = merged_width.get(addr) or rect
        _text(draw, (rect[0] + 4, rect[1] + 5), content.display, area[2] - rect[0] - 8,
              bold=sheet.format_of(addr).bold)
    if sel is not None:
        box = sel.bbox()
        if box:
            draw.rectangle((box[0], box[1], box[2] - 1, box[3] - 1), outline=SELECTION_BORDER, width=2)


def _draw_chart(draw, sheet, chart):
    left, top, right, bottom = chart.anchor_bbox
    draw.rectangle((left, top, right - 1, bottom - 1), fill=WHITE, outline=BORDER)
    _text(draw, (left + 8, top + 6), chart.title or 'Chart Title', right - left - 16,
          TEXT if chart.title else DISABLED_TEXT, bold=bool(chart.title))
    rows = chart.source.rows()
    body = rows[1:] if len(rows) > 1 else rows
    values = []
    for row in body:
        value = sheet.get(row[-1]).computed
        values.append(float(value) if isinstance(value, (int, float)) and not isinstance(value, bool) else 0.0)
    plot = (left + 16, top + 30, right - 16, bottom - 16)
    peak = max([abs(v) for v in values] + [1.0])
    if chart.chart_type == 'pie':
        total = sum(abs(v) for v in values) or 1.0
        size = min(plot[2] - plot[0], plot[3] - plot[1])
        box = (plot[0], plot[1], plot[0] + size, plot[1] + size)
        start = -90.0
        for i, v in enumerate(values):
            sweep = 360.0 * abs(v) / total
            if sweep > 0:
                draw.pieslice(box, start, start + sweep, fill=CHART_PALETTE[i % len(CHART_PALETTE)])
            start += sweep
        return
    draw.line((plot[0], plot[3], plot[2], plot[3]), fill=BORDER)
    n = max(len(values), 1)
    step = (plot[2] - plot[0]) / n
    points = []
    for i, v in enumerate(values):
        height = int((plot[3] - plot[1]) * abs(v) / peak)
        x0 = plot[0] + int(i * step)
        if chart.chart_type == 'bar':
            draw.rectangle((x0 + 4, plot[3] - height, x0 + max(int(step) - 4, 5), plot[3] - 1),
                           fill=CHART_PALETTE[0])
        else:
            points.append((x0 + int(step / 2), plot[3] - height))
    if len(points) > 1:
        draw.line(points, fill=CHART_PALETTE[1], width=2)


def _draw_furniture(draw, state, layout):
    draw.rectangle((0, SHEET_TAB_ROW[1] - 4, CANVAS_WIDTH - 1, CANVAS_HEIGHT - 1), fill=CHROME)
    for placed in layout.base:
        if placed.kind == 'sheet_tab':
            _draw_control(draw, placed)
    if state.navigation_pane:
        draw.rectangle((NAV_PANE[0], NAV_PANE[1], NAV_PANE[2] - 1, NAV_PANE[3] - 1), fill=CHROME, outline=BORDER)
        draw.text((NAV_PANE[0] + 4, NAV_PANE[1] + 6), 'Navigation', fill=TEXT, font=FONT)
        for placed in layout.base:
            if placed.kind == 'nav':
                _draw_control(draw, placed)


def _draw_menus(draw, layout):
    for panel, items in layout.menus:
        draw.rectangle((panel[0] + 3, panel[1] + 3, panel[2] + 2, panel[3] + 2), fill=(200, 200, 200))
        draw.rectangle((panel[0], panel[1], panel[2] - 1, panel[3] - 1), fill=WHITE, outline=BORDER)
        for placed in items:
            node = placed.node
            left, top, right, bottom = node.bbox
            color = TEXT if node.enabled else DISABLED_TEXT
            if placed.checked:
                draw.rectangle((left + 4, top + 6, left + 15, top + 17), fill=HIGHLIGHT)
            _text(draw, (left + 22, top + 5), node.name, right - left - 28, color)


def _draw_dialog(draw, state, placed_nodes):
    dialog = placed_nodes[0].node
    left, top, right, bottom = dialog.bbox
    draw.rectangle((left + 4, top + 4, right + 3, bottom + 3), fill=(160, 160, 160))
    draw.rectangle((left, top, right - 1, bottom - 1), fill=WHITE, outline=BORDER)
    draw.rectangle((left + 1, top + 1, right - 2, top + 28), fill=CHROME)
    _text(draw, (left + 24, top + 8), dialog.name, right - left - 40, TEXT, bold=True)
    spec = state.ui_tree.spec.dialogs[state.open_dialog]
    x = left + 12
    for pane in spec.panes:
        if any(state.dialog_state.get(k) != v for k, v in pane.visible_when.items()):
            continue
        if pane.title:
            _text(draw, (x, top + 42), pane.title, pane.width, TEXT)
        x += pane.width + 12
    for placed in placed_nodes[1:]:
        _draw_control(draw, placed)
        node = placed.node
        if node.control_type == 'Edit':
            value = state.dialog_state.get(placed.args.get('key'), '')
            _text(draw, (node.bbox[0] + 4, node.bbox[1] + 5), value or '', node.bbox[2] - node.bbox[0] - 8)
            if state.dialog_state.get('focus') == placed.args.get('key'):
                draw.rectangle((node.bbox[0], node.bbox[1], node.bbox[2] - 1, node.bbox[3] - 1),
                               outline=HIGHLIGHT, width=2)


def render_screenshot(state):
    '''
        Renders an AppState to a 1280x800 RGB raster.

        Parameters:
        -----------
        state : AppState

        Returns:
        --------
        Screenshot
            Raster plus region_index mapping every visible node id to its bbox.
    '''
    layout = layout_state(state)
    image = Image.new('RGB', (CANVAS_WIDTH, CANVAS_HEIGHT), WHITE)
    draw = ImageDraw.Draw(image)
    _draw_chrome(draw, state, layout)
    _draw_grid(draw, state)
    for chart in state.sheet.charts:
        _draw_chart(draw, state.sheet, chart)
    _draw_furniture(draw, state, layout)
    _draw_menus(draw, layout)
    if layout.dialog is not None:
        _draw_dialog(draw, state, layout.dialog)
    region_index = {p.node.id: p.node.bbox for p in layout.visible()}
    return Screenshot(image, region_index)


def _badge(number):
    badge = Image.new('RGB', (BADGE_SIZE, BADGE_SIZE), BADGE_COLOR)
    draw = ImageDraw.Draw(badge)
    text = str(number)
    width = draw.textlength(text, font=BADGE_FONT)
    draw.text((max(2, (BADGE_SIZE - width) / 2), 2), text, fill=WHITE, font=BADGE_FONT)
    return badge


def draw_marks(image, marked):
    '''
        Set-of-Marks overlay.

        Parameters:
        -----------
        image : PIL.Image
            Screenshot raster (left untouched).
        marked : list of (int, tuple)
            (mark number, node bbox) pairs.

        Returns:
        --------
        PIL.Image
            Copy with a filled 16x16 badge and white numeral at each bbox's top-left corner.
    '''
    overlay = image.copy()
    cache = {}
    for number, bbox in marked:
        if number not in cache:
            cache[number] = _badge(number)
        overlay.paste(cache[number], (bbox[0], bbox[1]))
    return overlay


def draw_cursor(image, hotspot):
    '''
        Draws the arrow cursor glyph in place with its tip at hotspot.
    '''
    hx, hy = hotspot
    for dy, line in enumerate(CURSOR_ART):
        for dx, ch in enumerate(line):
            x, y = hx + dx, hy + dy
            if ch == '.' or not (0 <= x < image.width and 0 <= y < image.height):
                continue
            image.putpixel((x, y), BLACK if ch == 'B' else WHITE)
    return image
