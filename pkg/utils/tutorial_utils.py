"""
    Tutorial Generation Utilities

    Stage 3 of the pipeline up to the tutorial package: trajectory filtering, visual
    enhancement of the step screenshots (red box + cursor glyph), provider-backed
    authoring of the written and spoken texts, and assembly of the tutorial.json package
    from which the document and the video are synthesized.

    Functions:
    ----------
    - filter_trajectory / filter_steps: drop non-operational and repeated steps.
    - cursor_anchor: clamped hotspot of the cursor glyph for a bbox.
    - annotate_screenshot: red 3 px box + cursor at the box's bottom-right corner.
    - annotate_steps: writes one annotated image per filtered step.
    - author_content: document and video texts from two provider calls.
    - render_background: deterministic background image of the intro/ending frames.
    - assemble_package / load_package: tutorial.json writer / reader.
"""

import json
import logging
import os
from dataclasses import dataclass, replace

import numpy as np
from PIL import Image, ImageDraw
from pydantic import BaseModel, ConfigDict, model_validator

from geometry_utils import CANVAS_HEIGHT, CANVAS_WIDTH, CURSOR_SIZE, GRID_VIEWPORT, inside_canvas
from render_utils import draw_cursor, save_png

logger = logging.getLogger(__name__)

RED = (255, 0, 0)
STROKE = 3


class TutorialError(ValueError):
    '''Base class of every tutorial-generation failure.'''


class EmptyAfterFilter(TutorialError):
    pass


class BboxOutOfCanvas(TutorialError):
    pass


class MissingAsset(TutorialError):
    pass


class EncoderFailed(TutorialError):
    pass


# ----------------------------------------------------------------
# Step filtering
# ----------------------------------------------------------------

@dataclass
class FilteredStep:
    original_index: int
    screenshot: str
    action_summary: str
    target_bbox: tuple | None
    state_digest_after: str
    target_name: str | None = None
    result_text: str = ''
    annotated_image: str | None = None

    def to_dict(self):
        return {
            'original_index': self.original_index,
            'screenshot': self.screenshot,
            'annotated_image': self.annotated_image,
            'action_summary': self.action_summary,
            'target_bbox': list(self.target_bbox) if self.target_bbox else None,
            'target_name': self.target_name,
            'result_text': self.result_text,
            'state_digest_after': self.state_digest_after,
        }


def filter_trajectory(traj):
    '''
        Trajectory restricted to its effective steps.

        A step is dropped when its state digest equals the previous step's digest and
        either (a) it failed or only observed (finish, table2markdown), or (b) its
        action and arguments equal those of the last retained step. Every dropped step
        left the state unchanged, so replaying the retained steps reaches the same
        final state; applying the filter twice gives the same result.

        Returns:
        --------
        agent_utils.Trajectory
            Same task, status and digests, retained steps only (original indices kept).
    '''
    kept = []
    previous = traj.initial_digest
    for step in traj.steps:
        unchanged = step.state_digest_after == previous
        previous = step.state_digest_after
        if unchanged and (not step.result.success or step.action.is_observation):
            continue
        if unchanged and kept and kept[-1].action.key() == step.action.key():
            continue
        kept.append(step)
    return replace(traj, steps=kept)


def filter_steps(traj):
    '''
        Effective steps of a judged-successful trajectory.

        Returns:
        --------
        list of FilteredStep
            Order preserved; numbered 1..n by position.

        Raises:
        -------
        EmptyAfterFilter
            When no step survives.
    '''
    kept = filter_trajectory(traj).steps
    if not kept:
        raise EmptyAfterFilter(f'Task {traj.task.raw.id}: no effective step in {len(traj.steps)} steps')
    logger.debug('Task %s: kept %d of %d steps', traj.task.raw.id, len(kept), len(traj.steps))
    return [FilteredStep(s.index, s.screenshot_before, s.action.describe(), s.target_bbox,
                         s.state_digest_after, s.target_name, s.result.text) for s in kept]


# ----------------------------------------------------------------
# Visual enhancement
# ----------------------------------------------------------------

def cursor_anchor(bbox, width=CANVAS_WIDTH, height=CANVAS_HEIGHT):
    '''Cursor hotspot: bbox bottom-right corner, clamped so the glyph stays on the canvas.'''
    return (min(bbox[2], width - CURSOR_SIZE), min(bbox[3], height - CURSOR_SIZE))


def annotate_screenshot(image, bbox):
    '''
        Highlights a region of a screenshot.

        Parameters:
        -----------
        image : PIL.Image or render_utils.Screenshot
        bbox : tuple
            (left, top, right, bottom), right/bottom exclusive.

        Returns:
        --------
        PIL.Image
            Copy with a pure red 3 px outline inside bbox and the cursor glyph whose tip
            sits at the bbox's bottom-right corner (clamped inside the canvas).

        Raises:
        -------
        BboxOutOfCanvas
    '''
    image = getattr(image, 'image', image)
    bbox = tuple(int(v) for v in bbox)
    if not inside_canvas(bbox) or bbox[2] > image.width or bbox[3] > image.height:
        raise BboxOutOfCanvas(f'Bbox {bbox} is outside the {image.width}x{image.height} canvas')
    out = image.convert('RGB')
    draw_cursor(out, cursor_anchor(bbox, out.width, out.height))
    #Box drawn last so the outline stays pure red where a clamped cursor touches it
    ImageDraw.Draw(out).rectangle((bbox[0], bbox[1], bbox[2] - 1, bbox[3] - 1), outline=RED, width=STROKE)
    return out


def annotate_steps(steps, run_dir, out_dir='annotated'):
    '''
        Writes one annotated image per filtered step (falls back to the grid viewport
        for steps without a target) and records its relative path on the step.
    '''
    os.makedirs(os.path.join(run_dir, out_dir), exist_ok=True)
    for position, step in enumerate(steps, 1):
        with Image.open(os.path.join(run_dir, step.screenshot)) as source:
            annotated = annotate_screenshot(source, step.target_bbox or GRID_VIEWPORT)
        step.annotated_image = f'{out_dir}/{position:03d}.png'
        save_png(annotated, os.path.join(run_dir, step.annotated_image))
    return steps


def render_background(path, size=(CANVAS_WIDTH, CANVAS_HEIGHT)):
    '''Deterministic diagonal green gradient used behind the intro and ending frames.'''
    width, height = size
    ramp = np.add.outer(np.linspace(0.0, 0.5, height), np.linspace(0.0, 0.5, width))
    top = np.array([33, 115, 70], dtype=float)
    bottom = np.array([12, 48, 30], dtype=float)
    pixels = top + (bottom - top) * ramp[..., None]
    save_png(Image.fromarray(pixels.round().astype(np.uint8), 'RGB'), path)
    return path


# ----------------------------------------------------------------
# Content authoring
# ----------------------------------------------------------------

class StepContent(BaseModel):
    model_config = ConfigDict(extra='forbid')

    index: int
    title: str
    written_description: str
    spoken_narration: str


class TutorialContent(BaseModel):
    model_config = ConfigDict(extra='forbid')

    task_title: str
    task_description: str
    steps: list[StepContent]


AUTHOR_PROMPT = '''You are a tutorial authoring expert for spreadsheet software.
Write {style} for the task and the executed steps below.

Fields:
- task_title: short title that tells the reader at once what the tutorial achieves
- task_description: one or two sentences on what the task does and when it is useful
- step_titles: one short imperative title per step, in order
- step_descriptions: one {register} per step, in order

Example:
{{"task_title": "Bold the Header Row", "task_description": "Make the column headers stand out.",
  "step_titles": ["Select the header row", "Apply bold"],
  "step_descriptions": [{example_a}, {example_b}]}}

Answer with one JSON object with exactly these fields and exactly {n} steps.

Task: {instruction}

Steps:
{steps}
'''

STYLES = {
    'author_doc': ('a written, step-by-step document tutorial', 'formal written instruction',
                   '"Select the range A1:G1."', '"On the Home tab, click **Bold**."'),
    'author_video': ('the narration of a video tutorial', 'conversational spoken sentence',
                     '"First, let\'s select the header row, A1 to G1."',
                     '"Now head to the Home tab and click Bold."'),
}


def _author(role, task, steps, gateway):
    style, register, example_a, example_b = STYLES[role]
    lines = '\n'.join(f'{i}. {s.action_summary} -> {s.result_text}' for i, s in enumerate(steps, 1))
    prompt = AUTHOR_PROMPT.format(style=style, register=register, example_a=example_a, example_b=example_b,
                                  n=len(steps), instruction=task.instruction, steps=lines)
    return gateway.ask(role, prompt, schema_id='tutorial_content',
                       context={'expected_steps': len(steps)})


def author_content(task, steps, gateway):
    '''
        Authors the written and spoken texts of a tutorial.

        Parameters:
        -----------
        task : InstantiatedTask
        steps : list of FilteredStep
        gateway : provider_utils.Gateway

        Returns:
        --------
        TutorialContent
            Title, description and step titles come from the document call; every step
            carries the document's written description and the video's spoken narration.

        Raises:
        -------
        SchemaViolation
            When an output misses fields or has a step count other than len(steps).
    '''
    if not steps:
        raise EmptyAfterFilter(f'Task {task.raw.id}: nothing to author')
    doc = _author('author_doc', task, steps, gateway)
    video = _author('author_video', task, steps, gateway)
    return TutorialContent(
        task_title=doc.task_title.strip(),
        task_description=doc.task_description.strip(),
        steps=[StepContent(index=i, title=t.strip(), written_description=w.strip(), spoken_narration=s.strip())
               for i, (t, w, s) in enumerate(zip(doc.step_titles, doc.step_descriptions,
                                                 video.step_descriptions), 1)],
    )


# ----------------------------------------------------------------
# Package
# ----------------------------------------------------------------

class TutorialPackage(BaseModel):
    model_config = ConfigDict(extra='forbid')

    task_id: str
    content: TutorialContent
    step_images: list[str]
    initial_state: str
    final_state: str
    intro: str
    outro: str
    completion: str
    background: str

    @model_validator(mode='after')
    def _contiguous_steps(self):
        indices = [s.index for s in self.content.steps]
        if indices != list(range(1, len(indices) + 1)):
            raise ValueError(f'step indices must be 1..n, got {indices}')
        if len(self.step_images) != len(indices):
            raise ValueError(f'{len(self.step_images)} step images for {len(indices)} steps')
        return self

    def asset_paths(self):
        return [*self.step_images, self.initial_state, self.final_state, self.background]


def assemble_package(task_id, content, steps, package_dir, initial_state, final_state, boilerplate,
                     background='background.png'):
    '''
        Builds, checks and writes tutorial.json.

        Parameters:
        -----------
        task_id : str
        content : TutorialContent
        steps : list of FilteredStep
            Annotated steps; their annotated_image paths become the step images.
        package_dir : str
            Directory every path is relative to; tutorial.json is written there.
        initial_state, final_state, background : str
            Relative image paths.
        boilerplate : dict
            {"intro", "outro", "completion"} texts; "{title}" is replaced by the task title.

        Returns:
        --------
        TutorialPackage

        Raises:
        -------
        MissingAsset
            Naming the first referenced path that does not exist.
    '''
    title = content.task_title
    package = TutorialPackage(
        task_id=task_id,
        content=content,
        step_images=[s.annotated_image for s in steps],
        initial_state=initial_state,
        final_state=final_state,
        intro=boilerplate['intro'].replace('{title}', title),
        outro=boilerplate['outro'].replace('{title}', title),
        completion=boilerplate['completion'].replace('{title}', title),
        background=background,
    )
    for path in package.asset_paths():
        if not path or not os.path.exists(os.path.join(package_dir, path)):
            raise MissingAsset(f'Missing tutorial asset {path!r} in {package_dir}')
    with open(os.path.join(package_dir, 'tutorial.json'), 'w', encoding='utf-8') as f:
        f.write(package.model_dump_json(indent=2))
    return package


def load_package(path):
    with open(path, encoding='utf-8') as f:
        return TutorialPackage.model_validate(json.load(f))


def package_schema():
    '''Published JSON schema of tutorial.json.'''
    return TutorialPackage.model_json_schema()
