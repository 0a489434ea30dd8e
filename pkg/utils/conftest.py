import os
import shutil
import sys

import pytest
from PIL import Image

HERE = os.path.dirname(os.path.abspath(__file__))
sys.path.insert(0, HERE)

from gui_utils import load_ui_tree
from instantiation_utils import load_corpus, load_templates
from seed_utils import build_seed
from tutorial_utils import StepContent, TutorialContent, TutorialPackage, render_background

ROOT = os.path.dirname(HERE)
DATA = os.path.join(ROOT, 'data')


@pytest.fixture(name='data_dir', scope='session')
def fixture_data_dir():
    '''The data/ directory shipped with the repo.'''
    return DATA


@pytest.fixture(name='ui_tree', scope='session')
def fixture_ui_tree():
    return load_ui_tree(os.path.join(DATA, 'ui_tree.json'))


@pytest.fixture(name='templates', scope='session')
def fixture_templates():
    return load_templates(os.path.join(DATA, 'templates'))


@pytest.fixture(name='corpus', scope='session')
def fixture_corpus():
    return load_corpus(os.path.join(DATA, 'seed_corpus.jsonl'))


@pytest.fixture(name='template_state')
def fixture_template_state(templates, ui_tree):
    '''Factory: fresh AppState of a template id.'''
    by_id = {t.id: t for t in templates}

    def make(template_id='t01_staff'):
        return by_id[template_id].load_state(ui_tree)

    return make


@pytest.fixture(name='seed_dir', scope='session')
def fixture_seed_dir(tmp_path_factory):
    '''Copy of data/ with screenshots, scripts and schemas built.'''
    target = tmp_path_factory.mktemp('seed') / 'data'
    shutil.copytree(DATA, target, ignore=shutil.ignore_patterns('scripts', '*.png', '*.schema.json'))
    build_seed(str(target), seed=0)
    return str(target)


@pytest.fixture(name='tutorial_package')
def fixture_tutorial_package(tmp_path):
    '''Factory: TutorialPackage with n steps and its images written under tmp_path.'''

    def make(n=3, title='Bold the Header Row'):
        (tmp_path / 'annotated').mkdir(exist_ok=True)
        images = [f'annotated/{i:03d}.png' for i in range(1, n + 1)]
        for name in ('initial.png', 'final.png', *images):
            Image.new('RGB', (1280, 800), (255, 255, 255)).save(tmp_path / name)
        render_background(str(tmp_path / 'background.png'))
        steps = [StepContent(index=i, title=f'Do step {i}', written_description=f'Click **Button {i}**.',
                             spoken_narration=f"Next, let's press button number {i} on the ribbon.")
                 for i in range(1, n + 1)]
        content = TutorialContent(task_title=title, task_description='Make the headers stand out.', steps=steps)
        return TutorialPackage(task_id='x1', content=content, step_images=images, initial_state='initial.png',
                               final_state='final.png', intro='Welcome to this tutorial.',
                               outro='Thanks for watching.', completion=f'You have completed {title}.',
                               background='background.png')

    return make
