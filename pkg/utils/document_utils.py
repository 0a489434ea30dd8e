"""
    Document Tutorial Utilities

    Renders a tutorial package as a single self-contained HTML page and as the
    equivalent Markdown file. Both carry the same blocks in the same order: centred
    title, introduction, one block per step (title, annotated image, description) and
    the result block with the final-state screenshot.

    Functions:
    ----------
    - render_html: tutorial.html text.
    - render_markdown: tutorial.md text.
    - synthesize_document: writes both files next to tutorial.json.
"""

import html
import logging
import os

logger = logging.getLogger(__name__)

STYLE = '''body { font-family: "Segoe UI", Arial, sans-serif; max-width: 960px; margin: 32px auto; color: #202020; }
h1 { text-align: center; }
.intro, .result { background: #f3f3f3; padding: 12px 16px; }
.step { margin: 28px 0; }
.step img, .result img { max-width: 100%; border: 1px solid #ababab; }'''


def _e(text):
    return html.escape(str(text), quote=True)


def render_html(package):
    '''
        Builds the HTML document of a tutorial package.

        Parameters:
        -----------
        package : tutorial_utils.TutorialPackage

        Returns:
        --------
        str
            Static page, inline style, relative image references, no scripts.
    '''
    content = package.content
    parts = [
        '<!DOCTYPE html>',
        '<html lang="en">',
        '<head>',
        '<meta charset="utf-8">',
        f'<title>{_e(content.task_title)}</title>',
        f'<style>\n{STYLE}\n</style>',
        '</head>',
        '<body>',
        f'<h1 style="text-align:center">{_e(content.task_title)}</h1>',
        '<section class="intro">',
        f'<p>{_e(package.intro)}</p>',
        f'<p>{_e(content.task_description)}</p>',
        f'<img src="{_e(package.initial_state)}" alt="Initial state">',
        '</section>',
    ]
    for step, image in zip(content.steps, package.step_images):
        parts += [
            f'<section class="step" id="step-{step.index}">',
            f'<h2 class="step-title">Step {step.index}: {_e(step.title)}</h2>',
            f'<img src="{_e(image)}" alt="Step {step.index}">',
            f'<p>{_e(step.written_description)}</p>',
            '</section>',
        ]
    parts += [
        '<section class="result">',
        '<h2>Result</h2>',
        f'<img src="{_e(package.final_state)}" alt="Final state">',
        f'<p>{_e(package.completion)}</p>',
        f'<p>{_e(package.outro)}</p>',
        '</section>',
        '</body>',
        '</html>',
    ]
    return '\n'.join(parts) + '\n'


def _md_inline(text):
    #Keeps provider text from opening headings or tables
    text = ' '.join(str(text).split())
    return text.replace('|', '\\|').lstrip('#').strip()


def render_markdown(package):
    '''Markdown twin of render_html: same blocks, same order, same step titles.'''
    content = package.content
    lines = [
        f'# {_md_inline(content.task_title)}',
        '',
        _md_inline(package.intro),
        '',
        _md_inline(content.task_description),
        '',
        f'![Initial state]({package.initial_state})',
        '',
    ]
    for step, image in zip(content.steps, package.step_images):
        lines += [
            f'## Step {step.index}: {_md_inline(step.title)}',
            '',
            f'![Step {step.index}]({image})',
            '',
            _md_inline(step.written_description),
            '',
        ]
    lines += [
        '## Result',
        '',
        f'![Final state]({package.final_state})',
        '',
        _md_inline(package.completion),
        '',
        _md_inline(package.outro),
        '',
    ]
    return '\n'.join(lines)


def synthesize_document(package, package_dir):
    '''
        Writes tutorial.html and tutorial.md into package_dir.

        Returns:
        --------
        (str, str)
            Paths of the HTML and Markdown files.
    '''
    html_path = os.path.join(package_dir, 'tutorial.html')
    md_path = os.path.join(package_dir, 'tutorial.md')
    with open(html_path, 'w', encoding='utf-8') as f:
        f.write(render_html(package))
    with open(md_path, 'w', encoding='utf-8') as f:
        f.write(render_markdown(package))
    logger.info('Task %s: document with %d steps written', package.task_id, len(package.content.steps))
    return html_path, md_path
