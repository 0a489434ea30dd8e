from PIL import Image, ImageChops

from geometry_utils import (CANVAS, CURSOR_SIZE, DIALOG_BOX, GRID_VIEWPORT, cell_bbox, inside_canvas, overlaps,
                            range_bbox, union_bbox)
from gui_utils import Click, accessibility_snapshot, apply_gui_action
from render_utils import (BADGE_COLOR, BLACK, CURSOR_ART, SELECTION_TINT, WHITE, draw_cursor, draw_marks,
                          render_screenshot, save_png)


def run(state, *actions):
    for action in actions:
        state, _ = apply_gui_action(state, action)
    return state


class TestGeometry:
    '''Cell rectangles of the visible grid.'''

    def test_cell_bbox(self):
        assert cell_bbox(0, 0) == (40, 144, 136, 168)
        assert cell_bbox(11, 25) == (1096, 744, 1192, 768)
        assert cell_bbox(12, 0) is None
        assert cell_bbox(0, 26) is None

    def test_range_bbox_is_clipped(self):
        assert range_bbox((0, 0), (1, 1)) == (40, 144, 232, 192)
        assert range_bbox((10, 24), (40, 90)) == (1000, 720, 1192, 768)
        assert range_bbox((20, 0), (30, 5)) is None

    def test_helpers(self):
        assert union_bbox([(0, 0, 10, 10), (5, 5, 20, 30)]) == (0, 0, 20, 30)
        assert overlaps((0, 0, 10, 10), (9, 9, 12, 12))
        assert not overlaps((0, 0, 10, 10), (10, 0, 20, 10))
        assert inside_canvas(GRID_VIEWPORT)
        assert not inside_canvas((1200, 700, 1300, 820))
        assert inside_canvas(CANVAS)


class TestScreenshot:
    '''Rasters of application states.'''

    def test_size_and_region_index(self, template_state):
        state = template_state()
        shot = render_screenshot(state)
        assert shot.image.size == (1280, 800)
        assert shot.image.mode == 'RGB'
        assert set(shot.region_index) == {n.id for n in accessibility_snapshot(state)}

    def test_deterministic(self, template_state, tmp_path):
        state = template_state('t03_sales_chart')
        save_png(render_screenshot(state).image, str(tmp_path / 'a.png'))
        save_png(render_screenshot(state).image, str(tmp_path / 'b.png'))
        assert (tmp_path / 'a.png').read_bytes() == (tmp_path / 'b.png').read_bytes()

    def test_fill_colour(self, template_state):
        image = render_screenshot(template_state('t05_inventory')).image
        left, top, right, bottom = cell_bbox(0, 0)
        assert image.getpixel((right - 3, bottom - 3)) == (0xBD, 0xD7, 0xEE)

    def test_selection_tint(self, template_state):
        state = run(template_state(), Click('cell.H20'))
        left, top, right, bottom = cell_bbox(7, 19)
        image = render_screenshot(state).image
        assert image.getpixel(((left + right) // 2, (top + bottom) // 2)) == SELECTION_TINT

    def test_dialog_drawn_on_top(self, template_state):
        state = run(template_state(), Click('ribbon.file'), Click('file.options'))
        image = render_screenshot(state).image
        left, top, right, bottom = DIALOG_BOX
        assert image.getpixel((right + 1, bottom + 1)) == (160, 160, 160)
        assert image.getpixel((right - 20, bottom - 60)) == WHITE

    def test_state_changes_show(self, template_state):
        state = template_state()
        edited = run(state, Click('cell.B2'))
        assert render_screenshot(state).image.tobytes() != render_screenshot(edited).image.tobytes()


class TestOverlays:
    '''Mark badges and the cursor glyph.'''

    def test_marks_leave_source(self, template_state):
        image = render_screenshot(template_state()).image
        before = image.tobytes()
        overlay = draw_marks(image, [(1, (200, 300, 260, 320)), (12, (400, 300, 460, 320))])
        assert image.tobytes() == before
        assert overlay.getpixel((200, 300)) == BADGE_COLOR
        assert overlay.getpixel((415, 315)) == BADGE_COLOR

    def test_cursor_hotspot(self, template_state):
        image = render_screenshot(template_state()).image
        draw_cursor(image, (500, 400))
        assert image.getpixel((500, 400)) == BLACK
        assert image.getpixel((501, 403)) == WHITE

    def test_cursor_clipped_at_edge(self, template_state):
        image = render_screenshot(template_state()).image
        draw_cursor(image, (1275, 795))
        assert image.getpixel((1275, 795)) == BLACK

    def test_cursor_fills_its_sprite(self):
        assert len(CURSOR_ART) == CURSOR_SIZE
        assert {len(row) for row in CURSOR_ART} == {CURSOR_SIZE}
        blank = Image.new('RGB', (80, 80), (128, 128, 128))
        drawn = draw_cursor(blank.copy(), (20, 30))
        assert ImageChops.difference(blank, drawn).getbbox() == (20, 30, 20 + CURSOR_SIZE, 30 + CURSOR_SIZE)
