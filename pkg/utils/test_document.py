import html
import re

from markdown_it import MarkdownIt

from document_utils import render_html, render_markdown, synthesize_document


def markdown_outline(text):
    '''(level, heading text) pairs and image sources of a Markdown document, in order.'''
    tokens = MarkdownIt('commonmark').enable('table').parse(text)
    headings, images = [], []
    for token, following in zip(tokens, tokens[1:]):
        if token.type == 'heading_open':
            headings.append((token.tag, ''.join(c.content for c in following.children
                                                   if c.type in ('text', 'text_special'))))
    for token in tokens:
        for child in token.children or []:
            if child.type == 'image':
                images.append(child.attrGet('src'))
    return headings, images


class TestHtml:
    '''HTML rendering of a package.'''

    def test_structure(self, tutorial_package):
        page = render_html(tutorial_package(3))
        assert page.startswith('<!DOCTYPE html>')
        assert page.count('<h1') == 1
        assert '<h1 style="text-align:center">Bold the Header Row</h1>' in page
        assert page.count('class="step"') == 3
        assert '<script' not in page
        assert page.index('initial.png') < page.index('annotated/001.png') < page.index('final.png')
        assert page.index('Step 3: Do step 3') < page.index('<h2>Result</h2>')

    def test_escaping(self, tutorial_package):
        page = render_html(tutorial_package(1, title='<script>alert(1)</script> & Co'))
        assert '<script>' not in page
        assert '&lt;script&gt;alert(1)&lt;/script&gt; &amp; Co' in page

    def test_completion_in_result(self, tutorial_package):
        page = render_html(tutorial_package(2))
        result = page[page.index('<section class="result">'):]
        assert 'You have completed Bold the Header Row.' in result
        assert 'final.png' in result


class TestMarkdown:
    '''Markdown rendering and agreement with the HTML page.'''

    def test_same_outline_as_html(self, tutorial_package):
        package = tutorial_package(4)
        page = render_html(package)
        headings, images = markdown_outline(render_markdown(package))
        assert [text for tag, text in headings if tag == 'h1'] == ['Bold the Header Row']
        html_steps = [html.unescape(t) for t in re.findall(r'<h2 class="step-title">(.*?)</h2>', page)]
        assert [text for tag, text in headings if tag == 'h2'] == html_steps + ['Result']
        assert images == re.findall(r'<img src="(.*?)"', page)

    def test_provider_text_stays_inline(self, tutorial_package):
        package = tutorial_package(1, title='## Totals | by region')
        headings, _ = markdown_outline(render_markdown(package))
        assert headings[0] == ('h1', 'Totals | by region')
        assert not any('<table>' in line for line in MarkdownIt('commonmark').enable('table')
                       .render(render_markdown(package)).splitlines())

    def test_synthesize_writes_both(self, tutorial_package, tmp_path):
        package = tutorial_package(2)
        html_path, md_path = synthesize_document(package, str(tmp_path))
        assert open(html_path, encoding='utf-8').read() == render_html(package)
        assert open(md_path, encoding='utf-8').read() == render_markdown(package)
