import json
import os
import shutil

import pytest

from pipeline_utils import (ConfigError, PipelineError, UnknownModelPrice, category_table, load_config,
                            load_inputs, load_task_package, price_of, report_corpus, report_costs, run_pipeline,
                            run_single_stage)
from provider_utils import ProviderTranscript

ARTIFACTS = ('tutorial.json', 'tutorial.html', 'tutorial.md', 'subtitles.srt', 'plan.json', 'trajectory.json',
             'verdict.json', 'status.json', 'transcript.json', 'frames/001.png', 'annotated/001.png')


def write_config(directory, seed_dir, **changes):
    doc = {
        'corpus_path': os.path.join(seed_dir, 'seed_corpus.jsonl'),
        'templates_dir': os.path.join(seed_dir, 'templates'),
        'ui_tree_path': os.path.join(seed_dir, 'ui_tree.json'),
        'output_dir': os.path.join(directory, 'out'),
        'run_id': 'test',
        'provider': 'scripted',
        'script_path': os.path.join(seed_dir, 'scripts'),
        'price_table_path': os.path.join(seed_dir, 'prices.json'),
        'boilerplate_path': os.path.join(seed_dir, 'boilerplate.json'),
        'workers': 4,
    }
    doc.update(changes)
    path = os.path.join(directory, 'config.json')
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(doc, f)
    return path


def snapshot(directory):
    return {name: open(os.path.join(directory, name), 'rb').read() for name in sorted(os.listdir(directory))}


@pytest.fixture(name='seed_run', scope='module')
def fixture_seed_run(seed_dir, tmp_path_factory):
    '''Full scripted run over the seed corpus, template files captured before it.'''
    root = str(tmp_path_factory.mktemp('run'))
    templates_before = {t: snapshot(os.path.join(seed_dir, 'templates', t))
                        for t in os.listdir(os.path.join(seed_dir, 'templates'))}
    cfg = load_config(write_config(root, seed_dir))
    return cfg, run_pipeline(cfg), templates_before


class TestConfig:
    '''config.json loading.'''

    def test_relative_paths(self, seed_dir, tmp_path):
        shutil.copytree(seed_dir, tmp_path / 'data')
        path = write_config(str(tmp_path), seed_dir, corpus_path='data/seed_corpus.jsonl', output_dir='runs')
        cfg = load_config(path, workers=1, run_id=None)
        assert cfg.corpus_path == str(tmp_path / 'data' / 'seed_corpus.jsonl')
        assert cfg.output_dir == str(tmp_path / 'runs')
        assert (cfg.workers, cfg.run_id, cfg.model) == (1, 'test', 'scripted')
        assert cfg.task_dir('s001') == os.path.join(str(tmp_path / 'runs'), 'test', 'tasks', 's001')

    @pytest.mark.parametrize('changes', [{'colour': 'red'}, {'provider': 'carrier-pigeon'}, {'max_steps': 0},
                                         {'workers': 0}, {'templates_dir': '/nowhere/templates'},
                                         {'script_path': None}])
    def test_rejected(self, seed_dir, tmp_path, changes):
        with pytest.raises(ConfigError):
            load_config(write_config(str(tmp_path), seed_dir, **changes))

    def test_missing_required_key(self, seed_dir, tmp_path):
        path = write_config(str(tmp_path), seed_dir)
        doc = json.load(open(path, encoding='utf-8'))
        del doc['corpus_path']
        with open(path, 'w', encoding='utf-8') as f:
            json.dump(doc, f)
        with pytest.raises(ConfigError):
            load_config(path)


class TestCosts:
    '''Price table arithmetic and the cost ledger.'''

    def test_price(self):
        prices = {'m': {'prompt': 1.0, 'completion': 2.0}}
        assert price_of(prices, 'm', 200, 100) == pytest.approx(0.40)
        with pytest.raises(UnknownModelPrice):
            price_of(prices, 'other', 1, 1)

    def test_ledger_of_two_calls(self):
        entries = [{'prompt_tokens': 100, 'completion_tokens': 50, 'latency': 0.5}] * 2
        ledger = report_costs({'t1': {'entries': entries}}, {'t1': 3}, {'m': {'prompt': 1.0, 'completion': 2.0}},
                              'm', {'t1': 12.0})
        totals = ledger.totals()
        assert (totals['calls'], totals['prompt_tokens'], totals['completion_tokens']) == (2, 200, 100)
        assert totals['dollars'] == pytest.approx(0.40)
        assert totals['latency'] == pytest.approx(1.0)
        assert ledger.manual_speedup() == pytest.approx(2.5 * 3600 / 12.0)
        with pytest.raises(UnknownModelPrice):
            report_costs({}, {}, {}, 'm')


class TestCorpusTables:
    '''Distribution tables of the corpus.'''

    def test_levels_per_source(self):
        records = [{'source': 'Search', 'level': 'ExcelLevel'}, {'source': 'Search', 'level': 'SpreadsheetLevel'},
                   {'source': 'InApp', 'level': 'SpreadsheetLevel'}]
        frame = report_corpus(records)
        assert list(frame.index) == ['Search', 'InApp', 'All']
        assert frame.loc['Search', 'Excel-Level (%)'] == 50.0
        assert frame.loc['All', 'Count'] == 3
        assert frame.loc['All', 'Spreadsheet-Level (%)'] == pytest.approx(66.67)

    def test_category_counts(self):
        records = [{'operation_category': c} for c in ('sort', 'format', 'sort', 'chart', None)]
        table = category_table(records, 'operation_category')
        assert list(table.index) == ['sort', 'chart', 'format']
        assert list(table['Count']) == [2, 1, 1]


class TestSeedRun:
    '''The scripted pipeline over the whole seed corpus.'''

    def test_every_task_succeeds(self, seed_run, corpus):
        cfg, report, _ = seed_run
        assert len(report.statuses) == len(corpus) == 50
        assert [s['task_id'] for s in report.statuses if s['status'] != 'Success'] == []
        assert report.success_rates().loc['All', 'Success rate (%)'] == 100.0
        assert report.agreement == 100.0
        assert set(report.rubric_tables) == {'document', 'video'}
        assert os.path.exists(os.path.join(cfg.run_dir, 'report.md'))

    def test_artifacts(self, seed_run, corpus):
        cfg, _, _ = seed_run
        for raw in corpus:
            task_dir = cfg.task_dir(raw.id)
            for name in ARTIFACTS:
                assert os.path.exists(os.path.join(task_dir, name)), (raw.id, name)
            package = load_task_package(cfg, raw.id)
            plan = json.load(open(os.path.join(task_dir, 'plan.json'), encoding='utf-8'))
            assert len(plan['segments']) == len(package.content.steps) + 4
            status = json.load(open(os.path.join(task_dir, 'status.json'), encoding='utf-8'))
            assert status['filtered_steps'] == len(package.step_images)

    def test_reset_guarantee(self, seed_run, seed_dir):
        _, report, templates_before = seed_run
        assert all(s['reset_ok'] is True for s in report.statuses)
        for name, files in templates_before.items():
            assert snapshot(os.path.join(seed_dir, 'templates', name)) == files

    def test_ledger_conservation(self, seed_run, corpus):
        cfg, report, _ = seed_run
        prompt = completion = calls = 0
        for raw in corpus:
            transcript = ProviderTranscript.load(os.path.join(cfg.task_dir(raw.id), 'transcript.json'), cfg.run_id)
            prompt += sum(e['prompt_tokens'] for e in transcript.entries)
            completion += sum(e['completion_tokens'] for e in transcript.entries)
            calls += len(transcript.entries)
        totals = report.ledger.totals()
        assert (totals['prompt_tokens'], totals['completion_tokens'], totals['calls']) == (prompt, completion, calls)
        assert sum(r['prompt_tokens'] for r in report.ledger.rows) == prompt
        expected = (prompt * 0.002 + completion * 0.008) / 1000
        assert round(totals['dollars'], 2) == round(expected, 2)
        ledger = json.load(open(os.path.join(cfg.run_dir, 'ledger.json'), encoding='utf-8'))
        assert ledger['totals']['prompt_tokens'] == prompt

    def test_rerun_is_identical_and_isolated(self, seed_run, seed_dir, tmp_path):
        cfg, _, _ = seed_run
        scripts = tmp_path / 'scripts'
        shutil.copytree(os.path.join(seed_dir, 'scripts'), scripts)
        os.remove(scripts / 's003.json')
        again = load_config(write_config(str(tmp_path), seed_dir, script_path=str(scripts), workers=1))
        report = run_pipeline(again, ['s004', 's003', 's001'])
        by_id = {s['task_id']: s for s in report.statuses}
        assert by_id['s003']['status'] == 'Error'
        assert by_id['s003']['stage'] == 'instantiate'
        for task_id in ('s001', 's004'):
            assert by_id[task_id]['status'] == 'Success'
            for name in ARTIFACTS:
                first = open(os.path.join(cfg.task_dir(task_id), name), 'rb').read()
                assert open(os.path.join(again.task_dir(task_id), name), 'rb').read() == first, (task_id, name)


class TestSingleStages:
    '''Stages run one at a time from the artifacts on disk.'''

    def test_stage_by_stage_matches_full_run(self, seed_run, seed_dir, tmp_path):
        cfg, _, _ = seed_run
        staged = load_config(write_config(str(tmp_path), seed_dir))
        tasks, templates, ui_tree, boilerplate = load_inputs(staged)
        raw = next(t for t in tasks if t.id == 's001')
        task, template = run_single_stage(staged, 'instantiate', raw, templates, ui_tree, boilerplate)
        assert template.id == raw.meta['template']
        traj, reset_ok = run_single_stage(staged, 'run', raw, templates, ui_tree, boilerplate)
        assert traj.status == 'Finished' and reset_ok
        assert run_single_stage(staged, 'judge', raw, templates, ui_tree, boilerplate).success
        package, warnings = run_single_stage(staged, 'generate', raw, templates, ui_tree, boilerplate)
        assert warnings == []
        for name in ('tutorial.json', 'tutorial.md', 'subtitles.srt', 'plan.json'):
            assert open(os.path.join(staged.task_dir('s001'), name), 'rb').read() == \
                open(os.path.join(cfg.task_dir('s001'), name), 'rb').read()

    def test_previous_stage_required(self, seed_dir, tmp_path):
        staged = load_config(write_config(str(tmp_path), seed_dir))
        tasks, templates, ui_tree, boilerplate = load_inputs(staged)
        with pytest.raises(PipelineError, match='trajectory.json'):
            run_single_stage(staged, 'judge', tasks[0], templates, ui_tree, boilerplate)
        with pytest.raises(PipelineError):
            run_single_stage(staged, 'publish', tasks[0], templates, ui_tree, boilerplate)
