'''
    tutorforge - from spreadsheet tasks to tutorials

    Command-line entry point of the task-to-tutorial pipeline. Each sub-command runs one
    part of the workflow against the configuration in config.json; every artifact is
    written under <output_dir>/<run_id>/.

    Main features:
    - instantiate / run / judge / generate: one stage for the selected tasks.
    - pipeline: every stage for the whole corpus (parallel), then report.md + ledger.json.
    - report: rebuild the run report from an existing run directory.
    - corpus-stats: source/level distribution and category counts of the corpus.
    - rating-sheet: category-covering evaluation sample and blank human rating CSV.

    Note:
    - The default configuration uses the scripted provider; run build_seed.py first.
    - Set provider to "http" and the TUTORFORGE_* variables (or a .env file) to use a
      real OpenAI-compatible endpoint.
'''

# -------------------------------------------------------------------------------------------
#Import libraries and utils
import argparse
import logging
import os
import sys
#custom utils
sys.path.insert(0, './utils')
from instantiation_utils import load_corpus
from judge_utils import sample_cases, write_rating_sheet
from pipeline_utils import (STAGES, build_report, category_table, corpus_records, load_config, load_inputs,
                            report_corpus, run_pipeline, run_single_stage)

# -------------------------------------------------------------------------------------------
#Paths and global settings
sep = '-----------------------------------------------------------------------------------------'

parser = argparse.ArgumentParser(description='Turn spreadsheet tasks into document and video tutorials.')
parser.add_argument('command', choices=[*STAGES, 'pipeline', 'report', 'corpus-stats', 'rating-sheet'])
parser.add_argument('--config', default='./config.json', help='pipeline configuration file')
parser.add_argument('--task', action='append', dest='tasks', help='task id (repeatable); default: all tasks')
parser.add_argument('--provider', choices=['scripted', 'http'])
parser.add_argument('--max-steps', type=int)
parser.add_argument('--workers', type=int)
parser.add_argument('--run-id')
parser.add_argument('--output-dir')
parser.add_argument('--ratings', help='human ratings CSV for the report command')
parser.add_argument('--sample-size', type=int, default=10, help='cases in the rating sheet sample')
parser.add_argument('--log-level', default='WARNING')
args = parser.parse_args()

logging.basicConfig(level=args.log_level.upper(), format='%(asctime)s %(levelname)s %(name)s: %(message)s')

output_dir = os.path.abspath(args.output_dir) if args.output_dir else None
cfg = load_config(args.config, provider=args.provider, max_steps=args.max_steps, workers=args.workers,
                  run_id=args.run_id, output_dir=output_dir)

#********************************************************************************************
#1) Corpus statistics
if args.command == 'corpus-stats':
    records = corpus_records(load_corpus(cfg.corpus_path))
    print(sep)
    print(report_corpus(records).to_markdown())
    print(sep)
    print(category_table(records, 'operation_category').to_markdown())
    print(sep)
    print(category_table(records, 'object_category').to_markdown())
    print(sep)

#********************************************************************************************
#2) Single stages
elif args.command in STAGES:
    tasks, templates, ui_tree, boilerplate = load_inputs(cfg)
    if args.tasks:
        tasks = [t for t in tasks if t.id in set(args.tasks)]
    print(sep)
    print(f'Stage {args.command} on {len(tasks)} task(s), run {cfg.run_id}')
    failed = 0
    for raw in tasks:
        try:
            run_single_stage(cfg, args.command, raw, templates, ui_tree, boilerplate)
            print(f'{raw.id}: ok')
        except Exception as e:
            failed += 1
            print(f'{raw.id}: {type(e).__name__}: {e}')
    print(sep)
    sys.exit(1 if failed else 0)

#********************************************************************************************
#3) Whole pipeline
elif args.command == 'pipeline':
    print(sep)
    print(f'Running the pipeline into {cfg.run_dir}')
    report = run_pipeline(cfg, args.tasks)
    print(sep)
    print(report.success_rates().to_markdown())
    print(f'Mean steps of successful tasks: {report.mean_steps():.2f}')
    print(f"Report: {os.path.join(cfg.run_dir, 'report.md')}")
    print(sep)

#********************************************************************************************
#4) Report of an existing run
elif args.command == 'report':
    tasks, _, _, _ = load_inputs(cfg)
    report = build_report(cfg, tasks, ratings_path=args.ratings)
    report.write(cfg.run_dir)
    print(sep)
    print(report.to_markdown())
    print(sep)

#********************************************************************************************
#5) Human evaluation sheet
elif args.command == 'rating-sheet':
    records = corpus_records(load_corpus(cfg.corpus_path))
    cases = sample_cases(records, args.sample_size, seed=cfg.seed)
    os.makedirs(cfg.run_dir, exist_ok=True)
    path = write_rating_sheet(os.path.join(cfg.run_dir, 'rating_sheet.csv'), cases)
    print(sep)
    print(f'{len(cases)} cases sampled: {", ".join(cases)}')
    print(f'Rating sheet: {path}')
    print(sep)
