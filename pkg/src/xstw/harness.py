"""Experiment driver: corpus fitness, CMA-ES over weight tables, folds,
external fitness commands, and bitrate interpolation.

A fitness evaluation encodes and decodes every corpus image at the target
rate with the candidate table and averages the per-image loss (1-MS-SSIM,
-PSNR, 1-IoU, or the scalar printed by an external command).  For the
native iou metric the corpus images are themselves label images: the
decoded gray values are scored against the paired ground-truth maps.
"""

from __future__ import annotations

import dataclasses
import math
import shlex
import shutil
import subprocess
import tempfile
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from xstw import metrics
from xstw.codec import BudgetError, decode, encode
from xstw.pixel_io import LabelMap, load_image, load_label_map, store_image
from xstw.weights import (
    NUM_ENTRIES,
    WeightTable,
    default_table,
    table_to_config,
    table_to_vector,
    vector_to_table,
)
from xstw.cma import CmaConfig, HistoryRow, default_population, optimize

METRICS = ("psnr", "ms_ssim", "iou", "external")
PSNR_LOSS_CAP = 1000.0  # keeps the -PSNR loss finite on lossless corpora
TOP_K = 10
INTERP_EVALS = 150
INTERP_SIGMA = 0.3


@dataclasses.dataclass(frozen=True)
class FitnessSpec:
    """One optimization problem: metric, corpus, and target rate."""

    metric: str
    corpus: tuple
    target_bpp: float
    labels: tuple = ()
    command: str | None = None

    def __post_init__(self):
        if self.metric not in METRICS:
            raise ValueError(f"unknown metric {self.metric!r} (want one of {METRICS})")
        if not self.corpus:
            raise ValueError("corpus is empty")
        if not self.target_bpp > 0:
            raise ValueError("target_bpp must be positive")
        if self.metric == "iou" and len(self.labels) != len(self.corpus):
            raise ValueError("iou needs one label map per corpus image")
        if self.metric == "external" and not self.command:
            raise ValueError("external metric needs a command template")
        object.__setattr__(self, "corpus", tuple(str(p) for p in self.corpus))
        object.__setattr__(self, "labels", tuple(str(p) for p in self.labels))


@dataclasses.dataclass(frozen=True)
class FoldPlan:
    """Named image groups and (train groups, test group) assignments."""

    groups: dict
    folds: tuple

    def __post_init__(self):
        for train, test in self.folds:
            unknown = [g for g in list(train) + [test] if g not in self.groups]
            if unknown:
                raise ValueError(f"unknown fold groups {unknown}")
            if test in train:
                raise ValueError(f"fold test group {test!r} appears in its train set")
            if not train:
                raise ValueError("fold has an empty train set")


@dataclasses.dataclass
class RunRecord:
    seed: int
    spec: FitnessSpec
    history: list
    best_vector: np.ndarray
    best_loss: float
    top10: list  # [(loss, vector)] best first
    wall_clock: float


def external_fitness(command_template: str, decoded_dir, original_dir) -> float:
    """Run the command and parse one scalar loss from its last stdout line."""
    command = command_template.format(decoded=str(decoded_dir), original=str(original_dir))
    result = subprocess.run(
        shlex.split(command), capture_output=True, text=True, timeout=600
    )
    if result.returncode != 0:
        raise RuntimeError(
            f"external fitness exited {result.returncode}: {result.stderr.strip()}"
        )
    lines = [ln for ln in result.stdout.splitlines() if ln.strip()]
    if not lines:
        raise RuntimeError("external fitness printed no output")
    try:
        return float(lines[-1])
    except ValueError:
        raise RuntimeError(f"unparsable fitness output {lines[-1]!r}") from None


class Evaluator:
    """Loads a corpus once and scores weight tables against it.

    Encode failures (infeasible budgets) are penalized with the worst loss
    observed so far plus a margin, so single bad candidates cannot abort a
    long optimization run.
    """

    def __init__(self, spec: FitnessSpec, threads: int = 1):
        self.spec = spec
        self.threads = max(1, threads)
        self.images = [load_image(p) for p in spec.corpus]
        self.truths = None
        if spec.metric == "iou":
            self.truths = [load_label_map(p) for p in spec.labels]
            for img, truth, path in zip(self.images, self.truths, spec.corpus):
                if img.channels != 1:
                    raise ValueError(f"{path}: iou corpus images must be grayscale")
                if (img.height, img.width) != (truth.height, truth.width):
                    raise ValueError(f"{path}: label map dimensions differ from image")
        self._worst_seen = 0.0 if spec.metric == "psnr" else 1.0
        self._staged_originals = None
        self._workdir = None

    def _penalty(self) -> float:
        return self._worst_seen + 0.1 * max(1.0, abs(self._worst_seen))

    def _score_image(self, index: int, table: WeightTable) -> float:
        """Per-image loss, or NaN when the encode budget is infeasible."""
        img = self.images[index]
        try:
            reconstructed = decode(encode(img, table, self.spec.target_bpp))
        except BudgetError:
            return math.nan
        metric = self.spec.metric
        if metric == "ms_ssim":
            return 1.0 - metrics.ms_ssim(img, reconstructed).value
        if metric == "psnr":
            return -min(metrics.psnr(img, reconstructed).value, PSNR_LOSS_CAP)
        truth = self.truths[index]
        pred = LabelMap(
            labels=np.minimum(
                reconstructed.samples.astype(np.int64), truth.num_classes - 1
            ),
            num_classes=truth.num_classes,
        )
        return 1.0 - metrics.iou(pred, truth, truth.num_classes).value

    def _stage_originals(self) -> Path:
        if self._staged_originals is None:
            self._workdir = Path(tempfile.mkdtemp(prefix="xstw-eval-"))
            originals = self._workdir / "original"
            originals.mkdir()
            for i, (img, path) in enumerate(zip(self.images, self.spec.corpus)):
                store_image(img, originals / self._staged_name(i, path))
            self._staged_originals = originals
        return self._staged_originals

    @staticmethod
    def _staged_name(index: int, path: str) -> str:
        suffix = Path(path).suffix or ".pnm"
        return f"{index:04d}_{Path(path).stem}{suffix}"

    def _external_loss(self, table: WeightTable) -> float:
        originals = self._stage_originals()
        decoded_dir = Path(tempfile.mkdtemp(prefix="decoded-", dir=self._workdir))
        try:
            for i, (img, path) in enumerate(zip(self.images, self.spec.corpus)):
                try:
                    out = decode(encode(img, table, self.spec.target_bpp))
                except BudgetError:
                    return math.nan
                store_image(out, decoded_dir / self._staged_name(i, path))
            for attempt in (0, 1):
                try:
                    return external_fitness(self.spec.command, decoded_dir, originals)
                except (RuntimeError, subprocess.TimeoutExpired):
                    if attempt == 1:
                        return math.nan
        finally:
            shutil.rmtree(decoded_dir, ignore_errors=True)

    def loss_for_table(self, table: WeightTable) -> float:
        if self.spec.metric == "external":
            loss = self._external_loss(table)
            if math.isnan(loss):
                return self._penalty()
            self._worst_seen = max(self._worst_seen, loss)
            return loss

        if self.threads > 1:
            with ThreadPoolExecutor(max_workers=self.threads) as pool:
                losses = list(
                    pool.map(lambda i: self._score_image(i, table), range(len(self.images)))
                )
        else:
            losses = [self._score_image(i, table) for i in range(len(self.images))]

        finite = [x for x in losses if not math.isnan(x)]
        if finite:
            self._worst_seen = max(self._worst_seen, max(finite))
        losses = [self._penalty() if math.isnan(x) else x for x in losses]
        return float(np.mean(losses))

    def loss_for_vector(self, v) -> float:
        return self.loss_for_table(vector_to_table(v))

    def close(self):
        if self._workdir is not None:
            shutil.rmtree(self._workdir, ignore_errors=True)
            self._workdir = None
            self._staged_originals = None


def evaluate_weights(v, spec: FitnessSpec, threads: int = 1) -> float:
    """Mean corpus loss of one weight vector; fresh state, fully deterministic."""
    evaluator = Evaluator(spec, threads=threads)
    try:
        return evaluator.loss_for_vector(v)
    finally:
        evaluator.close()


class _TopK:
    """Best-k distinct vectors seen, ordered by (loss, arrival)."""

    def __init__(self, k: int):
        self.k = k
        self._items: list[tuple[float, int, np.ndarray]] = []
        self._counter = 0

    def offer(self, loss: float, vector: np.ndarray) -> None:
        if math.isnan(loss):
            return
        key = vector.tobytes()
        for existing_loss, _, existing in self._items:
            if existing.tobytes() == key:
                return
        self._items.append((loss, self._counter, vector.copy()))
        self._counter += 1
        self._items.sort(key=lambda item: (item[0], item[1]))
        del self._items[self.k :]

    def results(self) -> list[tuple[float, np.ndarray]]:
        return [(loss, vector) for loss, _, vector in self._items]


def initial_vector() -> np.ndarray:
    """x0: default gains with fractions encoding the default priorities."""
    return table_to_vector(default_table())


def initial_sigma() -> float:
    """sigma0: standard deviation of the default gain values."""
    return float(np.std(default_table().gains))


def run_optimization(
    spec: FitnessSpec, seed: int, budget_evals: int, threads: int = 1
) -> RunRecord:
    """CMA-ES over 30-entry weight vectors starting from the default table."""
    population = default_population(NUM_ENTRIES)
    if budget_evals < population:
        raise ValueError(
            f"budget below one generation ({budget_evals} < population {population})"
        )
    evaluator = Evaluator(spec, threads=threads)
    top = _TopK(TOP_K)

    def objective(v):
        loss = evaluator.loss_for_vector(v)
        top.offer(loss, np.asarray(v))
        return loss

    start = time.perf_counter()
    try:
        config = CmaConfig(
            x0=initial_vector(),
            sigma0=initial_sigma(),
            population=population,
            seed=seed,
            max_evals=budget_evals,
        )
        best_x, best_f, history = optimize(config, objective)
    finally:
        evaluator.close()
    return RunRecord(
        seed=seed,
        spec=spec,
        history=history,
        best_vector=best_x,
        best_loss=best_f,
        top10=top.results(),
        wall_clock=time.perf_counter() - start,
    )


def history_csv(history: list[HistoryRow]) -> str:
    lines = ["generation,evals,best_loss,median_loss,sigma"]
    for row in history:
        lines.append(
            f"{row.generation},{row.evals},{row.best_f:.12g},"
            f"{row.median_f:.12g},{row.sigma:.12g}"
        )
    return "\n".join(lines) + "\n"


def write_run_record(record: RunRecord, out_dir) -> None:
    """Persist a run: history.csv, top10/*.weights, summary.txt."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "history.csv").write_text(history_csv(record.history))
    top_dir = out / "top10"
    top_dir.mkdir(exist_ok=True)
    for rank, (loss, vector) in enumerate(record.top10, start=1):
        table = vector_to_table(vector)
        text = table_to_config(table)
        (top_dir / f"rank{rank:02d}.weights").write_text(text)
    summary = [
        f"metric: {record.spec.metric}",
        f"target_bpp: {record.spec.target_bpp:.6f}",
        f"corpus_size: {len(record.spec.corpus)}",
        f"seed: {record.seed}",
        f"evaluations: {record.history[-1].evals}",
        f"best_loss: {record.best_loss:.6f}",
        f"wall_clock_seconds: {record.wall_clock:.3f}",
    ]
    (out / "summary.txt").write_text("\n".join(summary) + "\n")


def load_top10(run_dir) -> list[WeightTable]:
    from xstw.weights import parse_config

    top_dir = Path(run_dir) / "top10"
    tables = []
    for path in sorted(top_dir.glob("rank*.weights")):
        tables.append(parse_config(path.read_text()))
    if not tables:
        raise ValueError(f"no top10 weights under {run_dir}")
    return tables


def run_folds(
    plan: FoldPlan, spec_template: FitnessSpec, seed: int, budget_evals: int, threads: int = 1
):
    """Optimize per fold on the train groups, score on the held-out group.

    Returns (records, fold_scores, weighted_summary); the summary weights
    each fold's test loss by its test image count.
    """
    records, scores, sizes = [], [], []
    for fold_index, (train, test) in enumerate(plan.folds):
        train_corpus = [p for g in train for p in plan.groups[g]]
        test_corpus = list(plan.groups[test])
        if not test_corpus or not train_corpus:
            raise ValueError(f"fold {fold_index} has an empty corpus")
        overlap = set(train_corpus) & set(test_corpus)
        if overlap:
            raise ValueError(f"fold {fold_index} train/test overlap: {sorted(overlap)}")

        def with_corpus(corpus):
            labels = ()
            if spec_template.metric == "iou":
                by_image = dict(zip(spec_template.corpus, spec_template.labels))
                labels = tuple(by_image[str(p)] for p in corpus)
            return dataclasses.replace(
                spec_template, corpus=tuple(corpus), labels=labels
            )

        record = run_optimization(
            with_corpus(train_corpus), seed + fold_index, budget_evals, threads
        )
        score = evaluate_weights(record.best_vector, with_corpus(test_corpus), threads)
        records.append(record)
        scores.append(score)
        sizes.append(len(test_corpus))
    summary = weighted_fold_summary(scores, sizes)
    return records, scores, summary


def weighted_fold_summary(scores, sizes) -> float:
    total = sum(sizes)
    if total == 0:
        raise ValueError("no test images across folds")
    return float(sum(s * n for s, n in zip(scores, sizes)) / total)


def interpolate_bitrates(
    anchors: list[RunRecord], target_bpps, seed: int = 0, threads: int = 1
):
    """Best table per target rate from the nearest anchor's top-10 plus a
    short re-optimization seeded at that anchor's best vector.

    Ties in anchor distance resolve toward the lower bitrate.
    """
    if not anchors:
        raise ValueError("no anchor runs")
    results = {}
    for target in target_bpps:
        anchor = min(
            anchors, key=lambda rec: (abs(rec.spec.target_bpp - target), rec.spec.target_bpp)
        )
        spec = dataclasses.replace(anchor.spec, target_bpp=float(target))
        evaluator = Evaluator(spec, threads=threads)
        try:
            candidates = []
            for loss, vector in anchor.top10:
                candidates.append((evaluator.loss_for_vector(vector), vector))
            config = CmaConfig(
                x0=anchor.best_vector,
                sigma0=INTERP_SIGMA,
                population=default_population(NUM_ENTRIES),
                seed=seed,
                max_evals=INTERP_EVALS,
            )
            best_x, best_f, _ = optimize(config, evaluator.loss_for_vector)
            candidates.append((best_f, best_x))
        finally:
            evaluator.close()
        loss, vector = min(candidates, key=lambda c: c[0])
        results[float(target)] = (loss, vector)
    return results


def parse_spec_file(path):
    """Plain key=value run description; see README for the keys."""
    text = Path(path).read_text()
    values = {}
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{line_no}: expected key=value, got {raw!r}")
        key, _, value = line.partition("=")
        values[key.strip()] = value.strip()

    unknown = set(values) - {
        "metric",
        "bpp",
        "corpus",
        "labels",
        "command",
        "seed",
        "evals",
        "folds",
    }
    if unknown:
        raise ValueError(f"{path}: unknown keys {sorted(unknown)}")
    for required in ("metric", "bpp", "corpus"):
        if required not in values:
            raise ValueError(f"{path}: missing required key {required!r}")

    corpus_dir = Path(values["corpus"])
    corpus = sorted(
        str(p) for ext in ("*.pgm", "*.ppm") for p in corpus_dir.glob(ext)
    )
    labels = ()
    if "labels" in values:
        label_dir = Path(values["labels"])
        labels = tuple(str(label_dir / Path(p).name) for p in corpus)
    spec = FitnessSpec(
        metric=values["metric"],
        corpus=tuple(corpus),
        target_bpp=float(values["bpp"]),
        labels=labels,
        command=values.get("command"),
    )
    seed = int(values.get("seed", "0"))
    evals = int(values.get("evals", "300"))
    folds = values.get("folds")
    return spec, seed, evals, folds


def parse_folds_file(path, corpus_dir) -> FoldPlan:
    """Fold lines 'train=<g1,g2> test=<g3>'; groups are corpus subdirectories."""
    groups = {}
    for sub in sorted(Path(corpus_dir).iterdir()):
        if sub.is_dir():
            images = sorted(
                str(p) for ext in ("*.pgm", "*.ppm") for p in sub.glob(ext)
            )
            if images:
                groups[sub.name] = images
    folds = []
    for raw in Path(path).read_text().splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = dict(tok.split("=", 1) for tok in line.split())
        train = tuple(g for g in parts["train"].split(",") if g)
        folds.append((train, parts["test"]))
    return FoldPlan(groups=groups, folds=tuple(folds))
