import json
import os
import random

import pytest
from PIL import Image

from agent_utils import (ApiCall, Finish, GuiClick, GuiKeys, GuiType, StepRecord, Trajectory, execute,
                         replay_actions)
from gui_utils import ActionResult
from instantiation_utils import InstantiatedTask, RawTask
from provider_utils import Gateway, ProviderTranscript, SchemaViolation, ScriptedBackend
from render_utils import BLACK, render_screenshot
from seed_utils import script_for_task
from sheet_utils import state_fingerprint
from tutorial_utils import (RED, BboxOutOfCanvas, EmptyAfterFilter, FilteredStep, MissingAsset, StepContent,
                            TutorialContent, annotate_screenshot, annotate_steps, assemble_package,
                            author_content, cursor_anchor, filter_steps, filter_trajectory, load_package,
                            package_schema, render_background)

ACTION_POOL = [GuiClick('cell.A1'), GuiClick('cell.B2'), GuiClick('cell.F1', shift=True), GuiClick('nowhere'),
               GuiClick('ribbon.home'), GuiClick('home.bold'), GuiType('x'), GuiKeys('escape'),
               ApiCall('select_table_range', range='A1:B2'), ApiCall('table2markdown', range='A1:B2'),
               ApiCall('set_cell_value', cell='G2', value='1'), Finish('done')]

BOILERPLATE = {'intro': 'Welcome! Today: {title}.', 'outro': 'That was {title}.',
               'completion': 'You have completed {title}.'}


def task(task_id='x1'):
    return InstantiatedTask(RawTask(task_id, 'some task', 'Search'), 't01_staff', 'Do the task.')


def record(index, action, digest, success=True):
    return StepRecord(index, f'steps/{index:03d}_before.png', 'r', action, ActionResult(success, 'ok'),
                      (40, 144, 136, 168), 'A1', digest)


def random_trajectory(initial, rng):
    state = initial
    steps = []
    for index in range(1, rng.randint(1, 8) + 1):
        action = rng.choice(ACTION_POOL)
        state, result, bbox, name = execute(state, action)
        steps.append(StepRecord(index, '', '', action, result, bbox, name, state_fingerprint(state)))
    digest = state_fingerprint(initial)
    return Trajectory(task(), steps, 'Finished', digest, steps[-1].state_digest_after)


def content(n):
    return TutorialContent(task_title='Bold the Header Row', task_description='Make headers stand out.',
                           steps=[StepContent(index=i, title=f'Step {i}', written_description=f'Do {i}.',
                                              spoken_narration=f"Now let's do {i}.") for i in range(1, n + 1)])


class TestFilter:
    '''Removal of non-operational and repeated steps.'''

    def test_repeated_selection(self):
        select = ApiCall('select_table_range', range='A1:B2')
        traj = Trajectory(task(), [record(1, select, 'd1'), record(2, select, 'd1'),
                                   record(3, GuiClick('home.bold'), 'd2')], 'Finished', 'd0', 'd2')
        kept = filter_trajectory(traj).steps
        assert [s.index for s in kept] == [1, 3]
        assert [s.action_summary for s in filter_steps(traj)] == ['select_table_range(range="A1:B2")',
                                                                   'click home.bold']

    def test_failed_and_observations_dropped(self):
        traj = Trajectory(task(), [record(1, GuiClick('cell.A1'), 'd1'), record(2, GuiClick('nowhere'), 'd1', False),
                                   record(3, ApiCall('table2markdown', range='A1:B2'), 'd1'),
                                   record(4, Finish('done'), 'd1')], 'Finished', 'd0', 'd1')
        assert [s.index for s in filter_trajectory(traj).steps] == [1]

    def test_unchanged_but_new_action_kept(self):
        traj = Trajectory(task(), [record(1, GuiClick('cell.A1'), 'd0')], 'Finished', 'd0', 'd0')
        assert [s.index for s in filter_trajectory(traj).steps] == [1]

    def test_finish_only(self):
        traj = Trajectory(task(), [record(1, Finish('nothing to do'), 'd0')], 'Finished', 'd0', 'd0')
        with pytest.raises(EmptyAfterFilter):
            filter_steps(traj)

    def test_random_trajectories_sound_and_idempotent(self, template_state):
        initial = template_state()
        rng = random.Random(11)
        for _ in range(500):
            traj = random_trajectory(initial, rng)
            filtered = filter_trajectory(traj)
            final, digests = replay_actions(initial, [s.action for s in filtered.steps])
            assert state_fingerprint(final) == traj.final_digest
            assert digests == [s.state_digest_after for s in filtered.steps]
            assert filter_trajectory(filtered).steps == filtered.steps


class TestAnnotation:
    '''Red box and cursor glyph.'''

    def test_random_boxes(self, template_state):
        image = render_screenshot(template_state()).image
        rng = random.Random(5)
        for _ in range(100):
            left, top = rng.randint(0, 1270), rng.randint(0, 790)
            right, bottom = rng.randint(left + 8, 1280), rng.randint(top + 8, 800)
            out = annotate_screenshot(image, (left, top, right, bottom))
            mid_x, mid_y = (left + right - 1) // 2, (top + bottom - 1) // 2
            for point in ((left, top), (right - 1, top), (left, bottom - 1), (right - 1, bottom - 1),
                          (mid_x, top), (mid_x, bottom - 1), (left, mid_y), (right - 1, mid_y)):
                assert out.getpixel(point) == RED
        assert out.size == image.size

    def test_source_untouched(self, template_state):
        shot = render_screenshot(template_state())
        before = shot.image.tobytes()
        annotate_screenshot(shot, (40, 144, 136, 168))
        assert shot.image.tobytes() == before

    def test_cursor_clamped(self):
        assert cursor_anchor((100, 100, 200, 150)) == (200, 150)
        assert cursor_anchor((1200, 700, 1280, 800)) == (1256, 776)
        out = annotate_screenshot(Image.new('RGB', (1280, 800), (255, 255, 255)), (1200, 700, 1280, 800))
        assert out.getpixel((1256, 776)) == BLACK

    def test_outside_canvas(self):
        with pytest.raises(BboxOutOfCanvas):
            annotate_screenshot(Image.new('RGB', (1280, 800)), (1200, 700, 1300, 820))

    def test_annotate_steps(self, tmp_path):
        (tmp_path / 'steps').mkdir()
        Image.new('RGB', (1280, 800), (255, 255, 255)).save(tmp_path / 'steps' / '001_before.png')
        steps = [FilteredStep(1, 'steps/001_before.png', 'click cell.A1', (40, 144, 136, 168), 'd1'),
                 FilteredStep(2, 'steps/001_before.png', 'press escape', None, 'd1')]
        annotate_steps(steps, str(tmp_path))
        assert [s.annotated_image for s in steps] == ['annotated/001.png', 'annotated/002.png']
        with Image.open(tmp_path / 'annotated' / '001.png') as image:
            assert image.getpixel((40, 144)) == RED

    def test_background(self, tmp_path):
        a = render_background(str(tmp_path / 'a.png'))
        b = render_background(str(tmp_path / 'b.png'))
        assert open(a, 'rb').read() == open(b, 'rb').read()
        with Image.open(a) as image:
            assert image.size == (1280, 800)
            assert image.getpixel((0, 0)) == (33, 115, 70)


class TestAuthoring:
    '''Provider-written texts of a tutorial.'''

    def gateway(self, doc, video):
        backend = ScriptedBackend({('author_doc', 0): json.dumps(doc), ('author_video', 0): json.dumps(video)})
        return Gateway(backend, ProviderTranscript('test'))

    def steps(self, n):
        return [FilteredStep(i, '', f'click cell.A{i}', None, f'd{i}') for i in range(1, n + 1)]

    def test_merges_both_calls(self):
        doc = {'task_title': ' Bold Headers ', 'task_description': 'D', 'step_titles': ['Select', 'Bold'],
               'step_descriptions': ['Select A1:F1.', 'Click **Bold**.']}
        video = dict(doc, task_title='ignored', step_descriptions=["First, let's select.", 'Then bold.'])
        out = author_content(task(), self.steps(2), self.gateway(doc, video))
        assert out.task_title == 'Bold Headers'
        assert [(s.index, s.title, s.written_description, s.spoken_narration) for s in out.steps] == \
            [(1, 'Select', 'Select A1:F1.', "First, let's select."), (2, 'Bold', 'Click **Bold**.', 'Then bold.')]

    def test_step_count_checked(self):
        doc = {'task_title': 'T', 'task_description': 'D', 'step_titles': ['a'], 'step_descriptions': ['x']}
        with pytest.raises(SchemaViolation):
            author_content(task(), self.steps(2), self.gateway(doc, doc))

    def test_camera_walkthrough_titles(self, corpus, templates, ui_tree):
        raw = next(t for t in corpus if t.id == 's012')
        entries = script_for_task(raw, templates, ui_tree)
        backend = ScriptedBackend({(e['role_tag'], e['index']): e['response_text'] for e in entries})
        out = author_content(InstantiatedTask(raw, 't01_staff', raw.meta['instruction']), self.steps(7),
                             Gateway(backend, ProviderTranscript('test')))
        titles = [s.title for s in out.steps]
        assert len(titles) == 7
        assert 'Commands Not in the Ribbon' in titles[3]
        assert 'add' in titles[5]


class TestPackage:
    '''tutorial.json assembly.'''

    def prepare(self, root, n=2):
        os.makedirs(root / 'annotated')
        blank = Image.new('RGB', (8, 8))
        for name in ('initial.png', 'final.png', 'background.png', *[f'annotated/{i:03d}.png' for i in
                                                                         range(1, n + 1)]):
            blank.save(root / name)
        return [FilteredStep(i, '', 's', None, 'd', annotated_image=f'annotated/{i:03d}.png')
                for i in range(1, n + 1)]

    def test_round_trip(self, tmp_path):
        steps = self.prepare(tmp_path)
        package = assemble_package('x1', content(2), steps, str(tmp_path), 'initial.png', 'final.png', BOILERPLATE)
        assert package.intro == 'Welcome! Today: Bold the Header Row.'
        assert package.completion == 'You have completed Bold the Header Row.'
        assert load_package(str(tmp_path / 'tutorial.json')) == package
        assert 'step_images' in package_schema()['properties']

    def test_missing_asset(self, tmp_path):
        steps = self.prepare(tmp_path)
        os.remove(tmp_path / 'annotated' / '002.png')
        with pytest.raises(MissingAsset, match='annotated/002.png'):
            assemble_package('x1', content(2), steps, str(tmp_path), 'initial.png', 'final.png', BOILERPLATE)

    def test_image_count_must_match(self, tmp_path):
        steps = self.prepare(tmp_path, 1)
        with pytest.raises(ValueError):
            assemble_package('x1', content(2), steps, str(tmp_path), 'initial.png', 'final.png', BOILERPLATE)
