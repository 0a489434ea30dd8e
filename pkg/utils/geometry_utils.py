"""
    Canvas Geometry Utilities

    Fixed pixel geometry of the simulated spreadsheet window. Every module that places,
    draws or hit-tests something (layout, renderer, annotator, agent) reads its numbers
    from here so that pixel tests can rely on a single layout.

    Rectangles are (left, top, right, bottom) tuples with right/bottom exclusive.

    Functions:
    ----------
    - cell_bbox: pixel rectangle of a cell, or None when the cell is outside the viewport.
    - range_bbox: union rectangle of the visible cells of a range.
    - union_bbox: smallest rectangle covering a list of rectangles.
    - overlaps: True when two rectangles share at least one pixel.
    - inside_canvas: True when a rectangle lies fully within the canvas.
"""

CANVAS_WIDTH = 1280
CANVAS_HEIGHT = 800
CANVAS = (0, 0, CANVAS_WIDTH, CANVAS_HEIGHT)

#Ribbon strip: title bar, tab row, ribbon body
RIBBON_HEIGHT = 120
TITLE_BAR = (0, 0, CANVAS_WIDTH, 28)
TAB_ROW = (0, 28, CANVAS_WIDTH, 56)
RIBBON_BODY = (0, 56, CANVAS_WIDTH, RIBBON_HEIGHT)

#Grid
CELL_WIDTH = 96
CELL_HEIGHT = 24
GRID_LEFT = 40
GRID_TOP = 144
VIEW_COLUMNS = 12 #A-L
VIEW_ROWS = 26 #1-26
GRID_VIEWPORT = (GRID_LEFT, GRID_TOP,
                 GRID_LEFT + VIEW_COLUMNS * CELL_WIDTH,
                 GRID_TOP + VIEW_ROWS * CELL_HEIGHT)

#Side and bottom furniture
NAV_PANE = (1196, GRID_TOP, 1276, GRID_VIEWPORT[3])
SHEET_TAB_ROW = (0, 772, CANVAS_WIDTH, 796)

#Dropdown and dialog boxes
MENU_ITEM_WIDTH = 200
MENU_ITEM_HEIGHT = 24
DIALOG_BOX = (290, 160, 990, 640)
DIALOG_ROW = 28

#Annotation
BADGE_SIZE = 16
CURSOR_SIZE = 24


def cell_bbox(column, row):
    '''
        Pixel rectangle of the cell at (column, row).

        Parameters:
        -----------
        column : int
            Zero-based column index.
        row : int
            Zero-based row index.

        Returns:
        --------
        tuple or None
            (left, top, right, bottom), or None when the cell is outside the viewport.
    '''
    if not (0 <= column < VIEW_COLUMNS and 0 <= row < VIEW_ROWS):
        return None
    left = GRID_LEFT + column * CELL_WIDTH
    top = GRID_TOP + row * CELL_HEIGHT
    return (left, top, left + CELL_WIDTH, top + CELL_HEIGHT)


def range_bbox(top_left, bottom_right):
    '''
        Union rectangle of the visible cells between two corner addresses.

        Parameters:
        -----------
        top_left, bottom_right : (column, row) pairs

        Returns:
        --------
        tuple or None
            Union rectangle, or None when no cell of the range is visible.
    '''
    c0 = max(top_left[0], 0)
    r0 = max(top_left[1], 0)
    c1 = min(bottom_right[0], VIEW_COLUMNS - 1)
    r1 = min(bottom_right[1], VIEW_ROWS - 1)
    if c0 > c1 or r0 > r1:
        return None
    first = cell_bbox(c0, r0)
    last = cell_bbox(c1, r1)
    return (first[0], first[1], last[2], last[3])


def union_bbox(rects):
    rects = [r for r in rects if r is not None]
    if not rects:
        return None
    return (min(r[0] for r in rects), min(r[1] for r in rects),
            max(r[2] for r in rects), max(r[3] for r in rects))


def overlaps(a, b):
    return a[0] < b[2] and b[0] < a[2] and a[1] < b[3] and b[1] < a[3]


def inside_canvas(rect):
    left, top, right, bottom = rect
    return 0 <= left < right <= CANVAS_WIDTH and 0 <= top < bottom <= CANVAS_HEIGHT
