"""
    Video Tutorial Utilities

    Turns a tutorial package into a video plan: a fixed sequence of segments (intro,
    initial state, one per step, final state, ending), one 1280x800 frame per segment,
    an SRT subtitle track whose cues map 1:1 onto the segments, and optionally narration
    audio and an encoded video produced by external commands.

    Functions:
    ----------
    - segment_duration: narration length in seconds at the configured pace, with a floor.
    - wrap_title: greedy word wrap followed by balancing of the last two lines.
    - build_plan: VideoPlan of a package (no file written).
    - render_frame: frame image of one segment.
    - write_subtitles: SRT file of a plan (pysrt).
    - synthesize_video: frames/, subtitles.srt, plan.json and optional audio/ + encoded file.
"""

import json
import logging
import os
import shlex
import subprocess
from dataclasses import asdict, dataclass, field

import numpy as np
import pysrt
from PIL import Image, ImageDraw, ImageFont
from scipy.io import wavfile

from geometry_utils import CANVAS_HEIGHT, CANVAS_WIDTH
from render_utils import TITLE_GREEN, WHITE, save_png
from tutorial_utils import EncoderFailed

logger = logging.getLogger(__name__)

WORDS_PER_MINUTE = 150
MIN_SEGMENT_SECONDS = 2.0
TITLE_WRAP = 36
FPS = 30
AUDIO_RATE = 16000

HEADER_HEIGHT = 80
SHOT_SIZE = (1152, 720)
SEGMENT_KINDS = ('Intro', 'InitialState', 'Step', 'FinalState', 'Ending')
INITIAL_NARRATION = "Here is the spreadsheet before we begin."

TITLE_FONT = ImageFont.load_default(size=44)
HEADER_FONT = ImageFont.load_default(size=28)
BODY_FONT = ImageFont.load_default(size=22)


@dataclass
class Segment:
    kind: str
    frame: str
    subtitle: str
    narration: str
    duration: float
    start_ms: int = 0
    end_ms: int = 0
    step: int | None = None
    source_image: str | None = None
    title_lines: list = field(default_factory=list)
    audio: str | None = None

    @property
    def label(self):
        return f'Step({self.step})' if self.kind == 'Step' else self.kind


@dataclass
class VideoPlan:
    task_id: str
    segments: list
    fps: int = FPS
    video: str | None = None

    @property
    def total_ms(self):
        return self.segments[-1].end_ms if self.segments else 0

    @property
    def total_duration(self):
        return self.total_ms / 1000.0

    def kinds(self):
        return [s.label for s in self.segments]

    def to_dict(self):
        return {
            'task_id': self.task_id,
            'fps': self.fps,
            'total_duration': self.total_duration,
            'video': self.video,
            'segments': [{'label': s.label, **asdict(s)} for s in self.segments],
        }


def segment_duration(text, wpm=WORDS_PER_MINUTE, floor=MIN_SEGMENT_SECONDS):
    '''Seconds needed to narrate text at wpm words per minute, never below floor.'''
    words = len(str(text).split())
    return max(floor, words / wpm * 60.0)


def wrap_title(text, width=TITLE_WRAP):
    '''
        Adaptive title layout.

        Words are packed greedily into lines of at most width characters; the last two
        lines are then re-split at the word boundary that makes their lengths closest,
        among the splits that keep both lines within width (or within the longest word).

        Returns:
        --------
        list of str
    '''
    words = str(text).split()
    if not words:
        return []
    lines = [[words[0]]]
    for word in words[1:]:
        if len(' '.join(lines[-1] + [word])) <= width:
            lines[-1].append(word)
        else:
            lines.append([word])
    if len(lines) >= 2:
        tail = lines[-2] + lines[-1]
        limit = max(width, max(len(w) for w in tail))
        best = None
        for cut in range(1, len(tail)):
            a, b = ' '.join(tail[:cut]), ' '.join(tail[cut:])
            if len(a) > limit or len(b) > limit:
                continue
            cost = abs(len(a) - len(b))
            if best is None or cost < best[0]:
                best = (cost, cut)
        if best is not None:
            lines[-2:] = [tail[:best[1]], tail[best[1]:]]
    return [' '.join(line) for line in lines]


def build_plan(package):
    '''
        Video plan of a tutorial package.

        Parameters:
        -----------
        package : tutorial_utils.TutorialPackage

        Returns:
        --------
        VideoPlan
            Segments Intro, InitialState, Step 1..n, FinalState, Ending; each step segment
            shows the annotated image and speaks the narration. Cue spans are integer
            milliseconds laid end to end from 0.
    '''
    content = package.content
    title_lines = wrap_title(content.task_title)
    intro = f'{package.intro} {content.task_description}'.strip()
    segments = [Segment('Intro', '', intro, intro, segment_duration(intro),
                        source_image=package.background, title_lines=title_lines),
                Segment('InitialState', '', INITIAL_NARRATION, INITIAL_NARRATION,
                        segment_duration(INITIAL_NARRATION), source_image=package.initial_state)]
    for step, image in zip(content.steps, package.step_images):
        segments.append(Segment('Step', '', f'Step {step.index}: {step.title}\n{step.spoken_narration}',
                                step.spoken_narration, segment_duration(step.spoken_narration),
                                step=step.index, source_image=image))
    segments += [Segment('FinalState', '', package.completion, package.completion,
                         segment_duration(package.completion), source_image=package.final_state),
                 Segment('Ending', '', package.outro, package.outro, segment_duration(package.outro),
                         source_image=package.background, title_lines=title_lines)]
    start = 0
    for number, segment in enumerate(segments, 1):
        segment.frame = f'frames/{number:03d}.png'
        segment.start_ms = start
        segment.end_ms = start + int(round(segment.duration * 1000))
        start = segment.end_ms
    return VideoPlan(package.task_id, segments)


def _centered(draw, y, text, font, fill):
    width = draw.textlength(text, font=font)
    draw.text(((CANVAS_WIDTH - width) / 2, y), text, fill=fill, font=font)


def render_frame(segment, package, package_dir):
    '''
        Frame of one segment: title card over the background for intro and ending,
        header band + screenshot for the others.
    '''
    with Image.open(os.path.join(package_dir, segment.source_image)) as source:
        source = source.convert('RGB')
        if segment.kind in ('Intro', 'Ending'):
            frame = source.resize((CANVAS_WIDTH, CANVAS_HEIGHT), Image.Resampling.LANCZOS)
            draw = ImageDraw.Draw(frame)
            top = CANVAS_HEIGHT // 2 - 30 * len(segment.title_lines)
            for i, line in enumerate(segment.title_lines):
                _centered(draw, top + 60 * i, line, TITLE_FONT, WHITE)
            if segment.kind == 'Ending':
                _centered(draw, top + 60 * len(segment.title_lines) + 20, package.outro, BODY_FONT, WHITE)
            return frame
        frame = Image.new('RGB', (CANVAS_WIDTH, CANVAS_HEIGHT), WHITE)
        shot = source.resize(SHOT_SIZE, Image.Resampling.LANCZOS)
    draw = ImageDraw.Draw(frame)
    draw.rectangle((0, 0, CANVAS_WIDTH - 1, HEADER_HEIGHT - 1), fill=TITLE_GREEN)
    header = {'InitialState': 'Initial state', 'FinalState': 'Result'}.get(segment.kind)
    if header is None:
        header = segment.subtitle.split('\n', 1)[0]
    draw.text((24, (HEADER_HEIGHT - 28) // 2), header, fill=WHITE, font=HEADER_FONT)
    frame.paste(shot, ((CANVAS_WIDTH - SHOT_SIZE[0]) // 2, HEADER_HEIGHT))
    return frame


def write_subtitles(plan, path):
    '''SRT track with one cue per segment, numbered from 1.'''
    track = pysrt.SubRipFile()
    for number, segment in enumerate(plan.segments, 1):
        track.append(pysrt.SubRipItem(index=number,
                                      start=pysrt.SubRipTime.from_ordinal(segment.start_ms),
                                      end=pysrt.SubRipTime.from_ordinal(segment.end_ms),
                                      text=segment.subtitle))
    track.save(path, encoding='utf-8', eol='\n')
    return path


def _silence(path, seconds):
    wavfile.write(path, AUDIO_RATE, np.zeros(int(round(seconds * AUDIO_RATE)), dtype=np.int16))


def render_audio(plan, package_dir, tts_command=None):
    '''
        One WAV per segment under audio/: the external tts command when configured
        ("{text}" and "{output}" placeholders), silence of the segment's length otherwise
        or when the command fails.
    '''
    os.makedirs(os.path.join(package_dir, 'audio'), exist_ok=True)
    for number, segment in enumerate(plan.segments, 1):
        segment.audio = f'audio/{number:03d}.wav'
        output = os.path.join(package_dir, segment.audio)
        if tts_command:
            args = [a.format(text=segment.narration, output=output) for a in shlex.split(tts_command)]
            proc = subprocess.run(args, capture_output=True, text=True)
            if proc.returncode == 0 and os.path.exists(output):
                continue
            logger.warning('TTS failed for %s (exit %d), writing silence: %s', segment.label,
                           proc.returncode, proc.stderr.strip()[:200])
        _silence(output, (segment.end_ms - segment.start_ms) / 1000.0)
    return plan


def _write_concat_list(plan, path):
    lines = []
    for segment in plan.segments:
        lines += [f"file '{segment.frame}'", f'duration {(segment.end_ms - segment.start_ms) / 1000:.3f}']
    #Concat demuxer ignores the last duration unless the last file is repeated
    lines.append(f"file '{plan.segments[-1].frame}'")
    with open(path, 'w', encoding='utf-8') as f:
        f.write('\n'.join(lines) + '\n')
    return path


def encode_video(plan, package_dir, encoder_command, output='tutorial.mp4'):
    '''
        Runs the configured encoder command inside package_dir.

        Placeholders: {frame_pattern}, {fps}, {output}, {concat_list}, {subtitles}.

        Raises:
        -------
        EncoderFailed
            Nonzero exit status or missing executable.
    '''
    concat = _write_concat_list(plan, os.path.join(package_dir, 'frames.txt'))
    values = {'frame_pattern': 'frames/%03d.png', 'fps': plan.fps, 'output': output,
              'concat_list': os.path.basename(concat), 'subtitles': 'subtitles.srt'}
    args = [a.format(**values) for a in shlex.split(encoder_command)]
    logger.debug('Encoding %s: %s', plan.task_id, ' '.join(args))
    try:
        proc = subprocess.run(args, cwd=package_dir, capture_output=True, text=True)
    except OSError as e:
        raise EncoderFailed(f'Encoder {args[0]!r} could not start: {e}')
    if proc.returncode != 0:
        raise EncoderFailed(f'Encoder exited with {proc.returncode}: {proc.stderr.strip()[-500:]}')
    plan.video = output
    return output


def _save_plan(plan, package_dir):
    with open(os.path.join(package_dir, 'plan.json'), 'w', encoding='utf-8') as f:
        json.dump(plan.to_dict(), f, indent=2, ensure_ascii=False)


def synthesize_video(package, package_dir, encoder_command=None, tts_command=None, audio=False):
    '''
        Writes the video deliverables of a package.

        Parameters:
        -----------
        package : tutorial_utils.TutorialPackage
        package_dir : str
        encoder_command : str, optional
            Command template; when set, frames + timing are encoded into tutorial.mp4.
        tts_command : str, optional
        audio : bool
            Render narration audio (tts_command or silence).

        Returns:
        --------
        VideoPlan

        Raises:
        -------
        EncoderFailed
            After frames, subtitles.srt and plan.json have been written.
    '''
    plan = build_plan(package)
    os.makedirs(os.path.join(package_dir, 'frames'), exist_ok=True)
    for segment in plan.segments:
        save_png(render_frame(segment, package, package_dir), os.path.join(package_dir, segment.frame))
    write_subtitles(plan, os.path.join(package_dir, 'subtitles.srt'))
    if audio or tts_command:
        render_audio(plan, package_dir, tts_command)
    _save_plan(plan, package_dir)
    if encoder_command:
        encode_video(plan, package_dir, encoder_command)
        _save_plan(plan, package_dir)
    logger.info('Task %s: video plan with %d segments, %.1f s', package.task_id, len(plan.segments),
                plan.total_duration)
    return plan
