"""
    Judge and Evaluation Utilities

    LLM-as-judge success filtering of trajectories, rubric scoring of finished tutorials
    (11 document metrics, 7 video metrics, 1-5 Likert scale) and the rating statistics
    used to compare raters: mean (variance) tables, Likert distributions, Pearson and
    Kendall tau-b correlations, verdict agreement and seeded case sampling.

    Variances are population variances (divide by n). Correlations between two rater
    groups are computed over per-case overall means.

    Functions:
    ----------
    - judge_trajectory: Verdict for a trajectory (auto-fail unless it Finished).
    - score_tutorial: one RubricScore per metric of the document or video rubric.
    - pearson / kendall_tau: rating-vector correlations.
    - aggregate_report / compare_report / score_distribution: rating tables.
    - load_ratings / scores_to_frame: long-format rating frames.
    - judge_agreement: percentage agreement of verdicts with reference labels.
    - sample_cases / write_rating_sheet: category-covering evaluation sample.
"""

import logging
import os
from dataclasses import dataclass

import numpy as np
import pandas as pd
from scipy import stats

from provider_utils import SchemaViolation

logger = logging.getLogger(__name__)

MAX_JUDGE_IMAGES = 8
REFERENCE_AGREEMENT = 86.8
RATING_COLUMNS = ['case_id', 'rater_id', 'metric_id', 'score']

DOCUMENT_METRICS = {
    'clarity': ('Clarity', 'Each step is described explicitly and unambiguously.'),
    'conciseness': ('Conciseness', 'Redundant, repetitive, or irrelevant steps are avoided.'),
    'correctness': ('Correctness', 'All necessary steps are performed accurately and correctly.'),
    'completeness': ('Completeness', 'All essential operations are covered.'),
    'sequential_order': ('Sequential Order', 'Steps are presented in a logical and coherent sequence.'),
    'text_image_mapping': ('Text-Image Mapping', 'Text and images are accurately aligned.'),
    'understandability': ('Understandability', 'The content is clear, intuitive, and easy to follow.'),
    'efficiency': ('Efficiency', 'The format enables faster task completion compared to alternatives.'),
    'task_completion': ('Task Completion', 'Users can complete the intended tasks smoothly.'),
    'satisfaction': ('Satisfaction', 'Users are satisfied with the tutorial.'),
    'preference': ('Preference', 'Users prefer this type of tutorial over other formats.'),
}

VIDEO_METRICS = {
    'usability': ('Usability', 'The operation process is clear, enabling users to follow it easily.'),
    'correctness': ('Correctness', 'All necessary steps are performed completely and accurately.'),
    'interactivity': ('Interactivity', 'Key operations are highlighted, allowing users to easily notice them.'),
    'design_quality': ('Design Quality', 'The video is well-structured and user-friendly.'),
    'transferability': ('Transferability', 'The methods can be effectively applied to similar tasks.'),
    'comp_sat': ('Comp & Sat', 'Users can complete the task smoothly, and their overall satisfaction is high.'),
    'eff_pref': ('Eff & Pref', 'The tutorial improves efficiency and is the preferred format for future learning.'),
}

RUBRICS = {'document': DOCUMENT_METRICS, 'video': VIDEO_METRICS}


class JudgeError(ValueError):
    '''Base class of every judging / statistics failure.'''


class MissingMetric(JudgeError):
    pass


class DegenerateInput(JudgeError):
    pass


@dataclass(frozen=True)
class Verdict:
    success: bool
    rationale: str

    def to_dict(self):
        return {'success': self.success, 'rationale': self.rationale}


@dataclass(frozen=True)
class RubricScore:
    metric_id: str
    score: int
    justification: str = ''

    def to_dict(self):
        return {'metric_id': self.metric_id, 'score': self.score, 'justification': self.justification}


@dataclass(frozen=True)
class RatingVector:
    rater_id: str
    scores: tuple
    case_ids: tuple = ()


# ----------------------------------------------------------------
# Trajectory verdicts
# ----------------------------------------------------------------

JUDGE_PROMPT = '''You evaluate whether an agent completed a spreadsheet task.
Read the instruction, the executed steps and the attached screenshots (initial state,
sampled steps, final state). Answer with JSON {{"success": true|false, "rationale": <text>}}.

Instruction: {instruction}

Steps:
{steps}
'''


def judge_images(traj, run_dir, limit=MAX_JUDGE_IMAGES):
    '''
        Screenshot paths sent to the judge: the first, the last and evenly sampled ones
        in between, at most limit of them.
    '''
    paths = [traj.initial_screenshot] + [s.screenshot_before for s in traj.steps] + [traj.final_screenshot]
    paths = [os.path.join(run_dir, p) for p in paths if p]
    if len(paths) <= limit:
        return paths
    picks = np.unique(np.round(np.linspace(0, len(paths) - 1, limit)).astype(int))
    return [paths[i] for i in picks]


def judge_trajectory(traj, gateway, run_dir=''):
    '''
        Decides whether a trajectory completed its task.

        Parameters:
        -----------
        traj : agent_utils.Trajectory
        gateway : provider_utils.Gateway
        run_dir : str
            Directory the trajectory's screenshot paths are relative to.

        Returns:
        --------
        Verdict
            StepLimit and Error trajectories fail without any provider call.
    '''
    if traj.status != 'Finished':
        return Verdict(False, f'auto-fail: trajectory status {traj.status}')
    lines = []
    for step in traj.steps:
        status = 'ok' if step.result.success else 'failed'
        lines.append(f'{step.index}. {step.reasoning} | {step.action.describe()} | {status}: {step.result.text}')
    prompt = JUDGE_PROMPT.format(instruction=traj.task.instruction, steps='\n'.join(lines))
    out = gateway.ask('judge', prompt, images=judge_images(traj, run_dir), schema_id='verdict')
    return Verdict(out.success, out.rationale.strip())


def judge_agreement(verdicts, reference):
    '''
        Percentage of cases where the verdict equals the reference label.

        Parameters:
        -----------
        verdicts, reference : dict
            case id -> bool. Only ids present in both are compared.

        Returns:
        --------
        float or None
            None when no case is shared.
    '''
    shared = sorted(set(verdicts) & set(reference))
    if not shared:
        return None
    hits = sum(bool(verdicts[c]) == bool(reference[c]) for c in shared)
    return 100.0 * hits / len(shared)


# ----------------------------------------------------------------
# Rubric scoring
# ----------------------------------------------------------------

RUBRIC_PROMPT = '''You are an expert reviewer of software tutorials. Score the {kind} tutorial below
on every metric from 1 (very poor) to 5 (excellent) and justify each score briefly.

Metrics:
{metrics}

Examples:
- A tutorial whose step 3 says "do the usual thing" scores clarity 2: "step 3 does not say which control to use".
- A tutorial that shows the selected range boxed in red next to each instruction scores text_image_mapping 5:
  "every image marks the control the text names".

Answer with JSON {{"scores": [{{"metric_id": <id>, "score": <1-5>, "justification": <text>}}, ...]}}
with exactly one entry per metric id.

Tutorial: {title}
{description}

{steps}
'''


def _package_steps(package, kind):
    lines = []
    for step in package.content.steps:
        text = step.written_description if kind == 'document' else step.spoken_narration
        lines.append(f'Step {step.index}: {step.title}\n{text}')
    return '\n\n'.join(lines)


def score_tutorial(package, kind, gateway, package_dir=''):
    '''
        Scores a tutorial package against the document or video rubric.

        Parameters:
        -----------
        package : tutorial_utils.TutorialPackage
        kind : str
            "document" or "video".
        gateway : provider_utils.Gateway
        package_dir : str
            Directory the package image paths are relative to.

        Returns:
        --------
        list of RubricScore
            Exactly one per rubric metric, in rubric order.

        Raises:
        -------
        MissingMetric
            If a rubric metric is absent from the output.
        SchemaViolation
            For unknown or repeated metric ids, or scores outside 1-5.
    '''
    if kind not in RUBRICS:
        raise JudgeError(f'Unknown rubric {kind!r}, expected one of {sorted(RUBRICS)}')
    rubric = RUBRICS[kind]
    metrics = '\n'.join(f'- {mid} ({label}): {desc}' for mid, (label, desc) in rubric.items())
    prompt = RUBRIC_PROMPT.format(kind=kind, metrics=metrics, title=package.content.task_title,
                                  description=package.content.task_description,
                                  steps=_package_steps(package, kind))
    images = [os.path.join(package_dir, p) for p in package.step_images][:MAX_JUDGE_IMAGES]
    out = gateway.ask('judge', prompt, images=images, schema_id='rubric_scores')
    by_id = {}
    for item in out.scores:
        if item.metric_id not in rubric:
            raise SchemaViolation(f'rubric_scores: unknown {kind} metric {item.metric_id!r}')
        if item.metric_id in by_id:
            raise SchemaViolation(f'rubric_scores: metric {item.metric_id!r} scored twice')
        by_id[item.metric_id] = RubricScore(item.metric_id, item.score, item.justification)
    missing = [m for m in rubric if m not in by_id]
    if missing:
        raise MissingMetric(f'{kind} rubric output lacks {missing}')
    return [by_id[m] for m in rubric]


# ----------------------------------------------------------------
# Correlations
# ----------------------------------------------------------------

def _as_arrays(a, b):
    a = np.asarray(a.scores if isinstance(a, RatingVector) else a, dtype=float)
    b = np.asarray(b.scores if isinstance(b, RatingVector) else b, dtype=float)
    if a.ndim != 1 or a.shape != b.shape:
        raise JudgeError(f'Rating vectors must have equal lengths, got {a.shape} and {b.shape}')
    if len(a) < 2:
        raise DegenerateInput('Rating vectors need at least 2 cases')
    return a, b


def pearson(a, b):
    '''
        Sample Pearson correlation of two rating vectors.

        Raises:
        -------
        DegenerateInput
            If either vector is constant (the coefficient is undefined) or shorter than 2.
    '''
    a, b = _as_arrays(a, b)
    x = a - a.mean()
    y = b - b.mean()
    sxx = float(np.dot(x, x))
    syy = float(np.dot(y, y))
    if sxx == 0.0 or syy == 0.0:
        raise DegenerateInput('Pearson correlation is undefined for a constant vector')
    r = float(np.dot(x, y)) / float(np.sqrt(sxx * syy))
    return max(-1.0, min(1.0, r))


def kendall_tau(a, b):
    '''
        Kendall tau-b (tie-corrected) of two rating vectors.

        Raises:
        -------
        DegenerateInput
            If every pair is tied in either vector.
    '''
    a, b = _as_arrays(a, b)
    if len(np.unique(a)) < 2 or len(np.unique(b)) < 2:
        raise DegenerateInput('Kendall tau-b is undefined when every pair is tied')
    tau = stats.kendalltau(a, b, variant='b').statistic
    return max(-1.0, min(1.0, float(tau)))


def case_means(frame):
    '''Per-case overall mean: raters averaged per metric, then metrics averaged.'''
    per_metric = frame.groupby(['case_id', 'metric_id'])['score'].mean()
    return per_metric.groupby('case_id').mean()


def correlations(frame_a, frame_b):
    '''
        Pearson and Kendall tau-b between two rater groups over their shared cases.

        Returns:
        --------
        dict
            {"cases": n, "pearson": r, "kendall": tau}; a coefficient is None when the
            shared vectors are degenerate.
    '''
    a = case_means(frame_a)
    b = case_means(frame_b)
    shared = sorted(set(a.index) & set(b.index))
    result = {'cases': len(shared), 'pearson': None, 'kendall': None}
    va, vb = a.loc[shared].to_numpy(), b.loc[shared].to_numpy()
    for name, fn in (('pearson', pearson), ('kendall', kendall_tau)):
        try:
            result[name] = fn(va, vb)
        except DegenerateInput as e:
            logger.warning('%s correlation skipped: %s', name, e)
    return result


# ----------------------------------------------------------------
# Rating frames and tables
# ----------------------------------------------------------------

def scores_to_frame(case_id, rater_id, scores):
    '''RubricScores of one case / rater as a long-format frame.'''
    return pd.DataFrame([{'case_id': case_id, 'rater_id': rater_id, 'metric_id': s.metric_id,
                          'score': int(s.score)} for s in scores], columns=RATING_COLUMNS)


def load_ratings(path):
    '''
        Reads a ratings CSV with header case_id, rater_id, metric_id, score.

        Raises:
        -------
        JudgeError
            For missing columns, unknown metric ids or scores outside 1-5.
    '''
    frame = pd.read_csv(path, dtype={'case_id': str, 'rater_id': str, 'metric_id': str})
    missing = [c for c in RATING_COLUMNS if c not in frame.columns]
    if missing:
        raise JudgeError(f'{path} lacks columns {missing}')
    frame = frame[RATING_COLUMNS].dropna(subset=['score'])
    frame['score'] = frame['score'].astype(int)
    known = set(DOCUMENT_METRICS) | set(VIDEO_METRICS)
    unknown = sorted(set(frame['metric_id']) - known)
    if unknown:
        raise JudgeError(f'{path}: unknown metric ids {unknown}')
    if not frame['score'].between(1, 5).all():
        raise JudgeError(f'{path}: scores must lie in 1-5')
    return frame


def aggregate_report(frame, metrics=None):
    '''
        Mean (variance) per metric over cases, plus an Average row.

        Parameters:
        -----------
        frame : pandas.DataFrame
            Long format (case_id, rater_id, metric_id, score). Scores of several raters
            of the same case are averaged first.
        metrics : dict, optional
            Rubric (DOCUMENT_METRICS / VIDEO_METRICS) fixing row order and labels.

        Returns:
        --------
        pandas.DataFrame
            Index = metric labels + "Average"; columns "mean", "variance" (population).
            The Average row summarises the per-case overall means.
    '''
    per_case = frame.groupby(['metric_id', 'case_id'])['score'].mean()
    table = per_case.groupby('metric_id').agg(mean='mean', variance=lambda s: float(np.var(s.to_numpy())))
    order = [m for m in (metrics or {}) if m in table.index] if metrics else sorted(table.index)
    table = table.loc[order]
    overall = case_means(frame).to_numpy()
    table.loc['average'] = [float(overall.mean()), float(np.var(overall))]
    labels = {m: label for m, (label, _) in (metrics or {}).items()}
    table.index = [labels.get(m, 'Average' if m == 'average' else m) for m in table.index]
    return table


def format_mean_variance(table):
    '''"4.50 (0.25)" cells of an aggregate_report table.'''
    return table.apply(lambda row: f'{row["mean"]:.2f} ({row["variance"]:.2f})', axis=1)


def compare_report(frames, metrics=None):
    '''
        Side-by-side mean (variance) columns for several rater groups.

        Parameters:
        -----------
        frames : dict
            group name (e.g. "Human", "LLM") -> long-format rating frame.

        Returns:
        --------
        pandas.DataFrame
    '''
    columns = {name: format_mean_variance(aggregate_report(frame, metrics)) for name, frame in frames.items()}
    return pd.DataFrame(columns)


def score_distribution(frames):
    '''Counts of each Likert value (1-5) per rater group.'''
    rows = {name: frame['score'].value_counts().reindex(range(1, 6), fill_value=0)
            for name, frame in frames.items()}
    return pd.DataFrame(rows).T.astype(int)


def sample_cases(cases, n, seed=0, max_draws=1000):
    '''
        Seeded rejection sampling of evaluation cases covering every category.

        Parameters:
        -----------
        cases : list of dict
            Each with "id", "operation_category" and "object_category".
        n : int
            Sample size.
        seed : int
        max_draws : int
            Draws before falling back to the sample with the best coverage.

        Returns:
        --------
        list of str
            Sorted case ids.
    '''
    if n >= len(cases):
        return sorted(c['id'] for c in cases)
    operations = {c['operation_category'] for c in cases}
    objects = {c['object_category'] for c in cases}
    rng = np.random.default_rng(seed)
    best, best_cover = None, -1
    for _ in range(max_draws):
        picks = [cases[i] for i in rng.choice(len(cases), size=n, replace=False)]
        cover = len({c['operation_category'] for c in picks}) + len({c['object_category'] for c in picks})
        if cover > best_cover:
            best, best_cover = picks, cover
        if cover == len(operations) + len(objects):
            break
    return sorted(c['id'] for c in best)


def write_rating_sheet(path, case_ids, rubric_kinds=('document', 'video'), rater_id=''):
    '''Blank rating sheet CSV, one row per (case, metric), score left empty.'''
    rows = [{'case_id': f'{case}/{kind}', 'rater_id': rater_id, 'metric_id': metric, 'score': ''}
            for case in case_ids for kind in rubric_kinds for metric in RUBRICS[kind]]
    pd.DataFrame(rows, columns=RATING_COLUMNS).to_csv(path, index=False)
    return path
