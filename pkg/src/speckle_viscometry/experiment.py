"""Corpus generation and end-to-end experiment runs for scenarios."""

import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass

import duckdb
import numpy as np
import pandas as pd
from scipy import stats

import speckle_viscometry.registry as registry
from speckle_viscometry import capturefx, classifier, framestore, pipeline, rheocal, specklesim
from speckle_viscometry.errors import InvalidArgumentError, StageError
from speckle_viscometry.models import (
    CaptureArtifactConfig,
    Catalog,
    Column,
    ConfusionMatrix,
    CorrelationCurve,
    Criterion,
    CriterionKind,
    CriterionResult,
    CropRegion,
    ExperimentReport,
    LiquidSpec,
    ManifestEntry,
    OpticsConfig,
    ResultTable,
    ScenarioSpec,
    TableKind,
    Variant,
)
from speckle_viscometry.stabilizer import consecutive_selection, stabilize
from speckle_viscometry.stores import ArtifactStore
from speckle_viscometry.utils import SpeckleMessage, derive_seed, resolve_threads, rng_stream, setup_logging

MANIFEST_FILE = "manifest.json"
TRAIN_FILE = "train.json"
TEST_FILE = "test.json"
CAPTURE_SEED_KEY = 1


@dataclass(frozen=True)
class PlannedSequence:
    """Everything needed to synthesize one corpus sequence."""

    entry: ManifestEntry
    liquid: LiquidSpec
    optics: OpticsConfig
    capture: CaptureArtifactConfig | None


@dataclass
class SequenceResult:
    """Analysis of one corpus sequence."""

    entry: ManifestEntry
    curve: CorrelationCurve
    v_clean: float | None = None
    v_unstabilized: float | None = None
    v_clean_unstabilized: float | None = None
    features: list[classifier.FeatureVector] | None = None


@contextmanager
def stage(name: str, sequence_id: str):
    """Re-raise any failure inside the block as a StageError naming stage and sequence."""
    try:
        yield
    except StageError:
        raise
    except Exception as e:
        logging.error(SpeckleMessage(stage=name, target=sequence_id, message=str(e)).to_json())
        raise StageError(name, sequence_id, e) from e


def _variants(scenario: ScenarioSpec) -> list[Variant]:
    """The scenario variants, or one unnamed variant."""
    return scenario.variants or [Variant(name="")]


def plan_corpus(scenario: ScenarioSpec) -> list[PlannedSequence]:
    """Lay out every sequence of a scenario.

    Sequences of the same class and replicate share their seed across
    variants, so benchmark settings are compared on the same underlying
    scatterer trajectories. Replicates below train_replicates form the
    training split.
    """
    if not scenario.classes:
        raise InvalidArgumentError(f"Scenario '{scenario.name}' has no classes")
    planned = []
    for variant in _variants(scenario):
        capture = variant.capture or scenario.capture
        for spec in scenario.classes:
            for replicate in range(scenario.replicates):
                seed = derive_seed(scenario.seed, spec.label, replicate)
                viscosity = spec.liquid.viscosity_pa_s
                if spec.viscosity_jitter > 0:
                    jitter = rng_stream(scenario.seed, spec.label, replicate).standard_normal()
                    viscosity *= float(np.exp(spec.viscosity_jitter * jitter))
                liquid = LiquidSpec(
                    viscosity_pa_s=viscosity,
                    particle_radius_m=spec.liquid.particle_radius_m,
                    temperature_k=spec.liquid.temperature_k,
                    opacity=spec.liquid.opacity * variant.opacity_scale,
                )
                optics = OpticsConfig(**{**scenario.optics.model_dump(), **variant.optics, "seed": seed})
                sequence_capture = None
                if capture is not None:
                    sequence_capture = capture.model_copy(update={"seed": derive_seed(seed, CAPTURE_SEED_KEY)})
                parts = [p for p in (variant.name, spec.name, f"rep_{replicate:02d}") if p]
                sequence_id = "/".join(parts)
                entry = ManifestEntry(
                    dir=f"{sequence_id}/captured" if capture is not None else sequence_id,
                    label=spec.label,
                    class_name=spec.name,
                    sequence_id=sequence_id,
                    replicate=replicate,
                    split="train" if replicate < scenario.train_replicates else "test",
                    variant=variant.name,
                    viscosity_pa_s=viscosity,
                    clean_dir=f"{sequence_id}/clean" if capture is not None else None,
                )
                planned.append(PlannedSequence(entry, liquid, optics, sequence_capture))
    return planned


def _write_manifest(path: str, entries: list[ManifestEntry]) -> None:
    """Write a manifest list as indented JSON."""
    with open(path, "w", encoding="utf-8") as f:
        json.dump([e.model_dump(mode="json") for e in entries], f, indent=2)


def _synthesize(planned: PlannedSequence, out_dir: str) -> None:
    """Simulate, distort and write one sequence."""
    sequence_id = planned.entry.sequence_id
    with stage("simulate", sequence_id):
        clean = specklesim.simulate(planned.liquid, planned.optics, threads=1)
    if planned.capture is not None:
        with stage("distort", sequence_id):
            captured = capturefx.distort(clean, planned.capture)
        with stage("write", sequence_id):
            framestore.write_sequence(clean, os.path.join(out_dir, planned.entry.clean_dir))
            framestore.write_sequence(captured, os.path.join(out_dir, planned.entry.dir))
    else:
        with stage("write", sequence_id):
            framestore.write_sequence(clean, os.path.join(out_dir, planned.entry.dir))


def gen_corpus(scenario: ScenarioSpec, out_dir: str, threads: int | None = None) -> list[ManifestEntry]:
    """Synthesize the corpus of a scenario.

    Layout is out_dir/[variant/]class/rep_XX, with captured/ and clean/
    subdirectories when the scenario applies capture distortions.
    manifest.json lists every sequence; train.json and test.json list the
    two splits. All paths are relative to out_dir.

    Args:
        scenario: The scenario.
        out_dir: Corpus root.
        threads: Number of sequences synthesized concurrently.

    Returns:
        The manifest entries.

    """
    planned = plan_corpus(scenario)
    os.makedirs(out_dir, exist_ok=True)
    logging.info(
        SpeckleMessage(
            stage="corpus", target=scenario.name, message=f"Generating {len(planned)} sequences"
        ).to_json()
    )
    with ThreadPoolExecutor(max_workers=resolve_threads(threads)) as executor:
        list(executor.map(lambda p: _synthesize(p, out_dir), planned))

    entries = [p.entry for p in planned]
    _write_manifest(os.path.join(out_dir, MANIFEST_FILE), entries)
    _write_manifest(os.path.join(out_dir, TRAIN_FILE), [e for e in entries if e.split == "train"])
    _write_manifest(os.path.join(out_dir, TEST_FILE), [e for e in entries if e.split == "test"])
    return entries


def _analyze(entry: ManifestEntry, scenario: ScenarioSpec, capture: CaptureArtifactConfig | None, out_dir: str):
    """Read back and analyze one sequence."""
    sequence_id = entry.sequence_id
    with stage("read", sequence_id):
        seq = framestore.read_sequence(os.path.join(out_dir, entry.dir), threads=1)
        if scenario.trim_leading_s or scenario.trim_trailing_s:
            seq = framestore.trim_transient(seq, scenario.trim_leading_s, scenario.trim_trailing_s)
    baseline = consecutive_selection(0, min(len(seq), (pipeline.CURVE_POINTS - 1) * scenario.tau + 1))
    with stage("stabilize", sequence_id):
        if capture is not None and capture.disturbs_timing:
            selection = stabilize(seq, scenario.threshold, scenario.n_select)
        else:
            selection = consecutive_selection(0, scenario.n_select)
    with stage("analyze", sequence_id):
        if scenario.crop == "full":
            region = CropRegion.full_frame(seq.height, seq.width)
        else:
            region = pipeline.crop_dynamic(seq.frames[selection.indices[0]])
        curve = pipeline.analyze_sequence(seq, selection, region, scenario.tau)
    result = SequenceResult(entry=entry, curve=curve)
    if entry.clean_dir is not None:
        with stage("compare", sequence_id):
            clean = framestore.read_sequence(os.path.join(out_dir, entry.clean_dir), threads=1)
            if scenario.trim_leading_s or scenario.trim_trailing_s:
                clean = framestore.trim_transient(clean, scenario.trim_leading_s, scenario.trim_trailing_s)
            result.v_clean = pipeline.correlation_curve(clean, selection, region, scenario.tau).viscosity_coefficient
            result.v_unstabilized = pipeline.correlation_curve(
                seq, baseline, region, scenario.tau
            ).viscosity_coefficient
            result.v_clean_unstabilized = pipeline.correlation_curve(
                clean, baseline, region, scenario.tau
            ).viscosity_coefficient
    if scenario.classify:
        with stage("featurize", sequence_id):
            result.features = classifier.featurize(seq, selection, region, entry.label, sequence_id)
    return result


def _sequence_rows(results: list[SequenceResult]) -> pd.DataFrame:
    """One row per sequence with its curve."""
    rows = []
    for r in results:
        row = {
            "sequence_id": r.entry.sequence_id,
            "variant": r.entry.variant,
            "class_name": r.entry.class_name,
            "label": r.entry.label,
            "replicate": r.entry.replicate,
            "split": r.entry.split,
            "viscosity_pa_s": r.entry.viscosity_pa_s,
            "V": r.curve.viscosity_coefficient,
            "tau_c": r.curve.tau_c,
            "contrast": r.curve.contrast_first_frame,
            "first_frame": r.curve.frame_indices[0],
            "second_frame": r.curve.frame_indices[1],
            "v_clean": r.v_clean,
            "v_unstabilized": r.v_unstabilized,
            "v_clean_unstabilized": r.v_clean_unstabilized,
        }
        for k in range(pipeline.CURVE_POINTS):
            row[f"c{k}"] = r.curve.coefficients[k] if k < len(r.curve.coefficients) else None
        rows.append(row)
    frame = pd.DataFrame(rows)
    numeric = ["tau_c", "v_clean", "v_unstabilized", "v_clean_unstabilized"]
    numeric += [f"c{k}" for k in range(pipeline.CURVE_POINTS)]
    frame[numeric] = frame[numeric].astype(float)
    return frame.sort_values("sequence_id", kind="stable").reset_index(drop=True)


def class_summary(sequences: pd.DataFrame) -> pd.DataFrame:
    """Per-variant, per-class statistics of V and tau_c."""
    connection = duckdb.connect()
    try:
        connection.execute("SET threads TO 1")
        connection.register("sequences", sequences)
        return connection.execute(
            """
            SELECT variant, class_name, label,
                   COUNT(*) AS n,
                   AVG(viscosity_pa_s) AS viscosity_pa_s,
                   AVG(V) AS v_mean,
                   MIN(V) AS v_min,
                   MAX(V) AS v_max,
                   STDDEV_POP(V) AS v_std,
                   AVG(tau_c) FILTER (WHERE NOT isnan(tau_c)) AS tau_c_mean,
                   COUNT(tau_c) FILTER (WHERE NOT isnan(tau_c)) AS tau_c_n
            FROM sequences
            GROUP BY variant, class_name, label
            ORDER BY variant, label
            """
        ).df()
    finally:
        connection.close()


def benchmark_table(classes: pd.DataFrame, order: list[str]) -> pd.DataFrame:
    """Mean V per class for every variant and whether the given order holds."""
    rows = []
    for variant, group in classes.groupby("variant", sort=True):
        means = dict(zip(group["class_name"], group["v_mean"], strict=False))
        row = {"variant": variant}
        row.update({f"v_{name}": means.get(name) for name in order})
        values = [means.get(name) for name in order]
        row["order_preserved"] = all(v is not None for v in values) and all(
            a < b for a, b in zip(values, values[1:], strict=False)
        )
        rows.append(row)
    return pd.DataFrame(rows)


def _group_mapping(scenario: ScenarioSpec) -> dict[int, int] | None:
    """Label to group id for scenarios whose classes carry groups."""
    if not any(c.group for c in scenario.classes):
        return None
    groups = sorted({c.group or "" for c in scenario.classes})
    return {c.label: groups.index(c.group or "") for c in scenario.classes}


def _classify(scenario: ScenarioSpec, results: list[SequenceResult], threads: int | None):
    """Train on the train split and evaluate the test split of every variant."""
    confusion: dict[str, ConfusionMatrix] = {}
    names = {c.label: c.name for c in scenario.classes}
    mapping = _group_mapping(scenario)
    for variant in _variants(scenario):
        chosen = [r for r in results if r.entry.variant == variant.name]
        train = [v for r in chosen if r.entry.split == "train" for v in r.features]
        test = [v for r in chosen if r.entry.split == "test" for v in r.features]
        if not train or not test:
            raise InvalidArgumentError(f"Scenario '{scenario.name}' needs both train and test replicates")
        tag = variant.name or "all"
        with stage("train", tag):
            model = classifier.train_svm(
                classifier.Dataset.from_vectors(train, names), C=scenario.svm_c, threads=threads
            )
        with stage("evaluate", tag):
            test_set = classifier.Dataset.from_vectors(test, names)
            confusion[variant.name or "multiclass"] = classifier.evaluate(model, test_set)
            if mapping is not None:
                confusion[f"{variant.name}/binary" if variant.name else "binary"] = classifier.evaluate(
                    model, test_set, mapping
                )
    return confusion


def _calibrate(scenario: ScenarioSpec, sequences: pd.DataFrame, store: ArtifactStore):
    """Fit the cubic on the train split and correlate calibrated test values with ground truth."""
    densities = {c.label: c.density_g_ml for c in scenario.classes}
    truth = [
        rheocal.ostwald_viscosity(rheocal.simulate_reading(row.viscosity_pa_s * 1000.0, densities[row.label]))
        for row in sequences.itertuples()
    ]
    sequences = sequences.assign(viscosity_cp=truth)
    train = sequences[sequences["split"] == "train"]
    test = sequences[sequences["split"] == "test"]
    with stage("calibrate", scenario.name):
        model = rheocal.fit_calibration(
            train[["V", "viscosity_cp"]], liquid_class=scenario.name
        )
    rheocal.save_calibration(model, store)
    predicted = [rheocal.apply_calibration(model, v).viscosity_cp for v in test["V"]]
    r = float(stats.pearsonr(predicted, test["viscosity_cp"]).statistic) if len(test) >= 2 else float("nan")
    return model, r


def _separability(scenario: ScenarioSpec, results: list[SequenceResult]) -> pd.DataFrame:
    """Per-lag ANOVA across classes of the first variant, when every class has two curves."""
    first = _variants(scenario)[0].name
    groups: dict[int, list[CorrelationCurve]] = {}
    for r in results:
        if r.entry.variant == first:
            groups.setdefault(r.entry.label, []).append(r.curve)
    if len(groups) < 2 or any(len(curves) < 2 for curves in groups.values()):
        return pd.DataFrame(columns=["lag", "f_statistic", "p_value"])
    return pipeline.lag_separability(groups)


def _too_few(values: pd.Series, minimum: int) -> bool:
    """True when a statistic would be undefined."""
    return len(values) < minimum or values.nunique() < 2


def _control_gaps(classes: pd.DataFrame, names: list[str]) -> list[float]:
    """Gap between the V range of names[0] and that of every other named class, per variant.

    A negative gap is an overlap.
    """
    gaps = []
    for _, group in classes.groupby("variant", sort=True):
        ranges = group.set_index("class_name")
        if names[0] not in ranges.index:
            continue
        low, high = float(ranges.at[names[0], "v_min"]), float(ranges.at[names[0], "v_max"])
        for other in names[1:]:
            if other in ranges.index:
                gaps.append(max(float(ranges.at[other, "v_min"]) - high, low - float(ranges.at[other, "v_max"])))
    return gaps


def evaluate_criterion(
    criterion: Criterion,
    sequences: pd.DataFrame,
    classes: pd.DataFrame,
    confusion: dict[str, ConfusionMatrix],
    calibration_r: float | None,
) -> CriterionResult:
    """Evaluate one acceptance criterion on the run's tables."""
    kind = criterion.kind
    value = float("nan")
    if kind in (CriterionKind.v_order, CriterionKind.order_preserved):
        table = benchmark_table(classes, criterion.order)
        value = float(table["order_preserved"].mean()) if len(table) else 0.0
        threshold = criterion.threshold if kind == CriterionKind.order_preserved else 1.0
        passed = value >= threshold
        detail = "fraction of settings with " + " < ".join(criterion.order)
    elif kind == CriterionKind.v_separation:
        if criterion.order:
            gaps = _control_gaps(classes, criterion.order)
            detail = f"smallest gap between the {criterion.order[0]} V range and each other listed class"
        else:
            ranked = classes.sort_values("v_mean", kind="stable")
            gaps = [float(b - a) for a, b in zip(ranked["v_max"].iloc[:-1], ranked["v_min"].iloc[1:], strict=False)]
            detail = "smallest gap between neighbouring V clusters"
        if gaps:
            value = min(gaps)
        passed = bool(gaps) and value > criterion.threshold
    elif kind == CriterionKind.v_spearman:
        if not _too_few(classes["v_mean"], 2):
            value = float(stats.spearmanr(classes["viscosity_pa_s"], classes["v_mean"]).statistic)
        passed = value >= criterion.threshold
        detail = "Spearman rho of mean V against viscosity"
    elif kind == CriterionKind.tau_linearity:
        fitted = sequences.dropna(subset=["tau_c"])
        if not _too_few(fitted["tau_c"], 3):
            value = float(stats.pearsonr(fitted["viscosity_pa_s"], fitted["tau_c"]).statistic)
        passed = value >= criterion.threshold
        detail = f"Pearson r of tau_c against viscosity over {len(fitted)} sequences"
    elif kind == CriterionKind.stabilizer_gain:
        compared = sequences.dropna(subset=["v_clean"])
        stabilized = float((compared["V"] - compared["v_clean"]).abs().max()) if len(compared) else value
        unstabilized = (
            float((compared["v_unstabilized"] - compared["v_clean_unstabilized"]).abs().median())
            if len(compared)
            else value
        )
        value = stabilized
        passed = bool(len(compared)) and stabilized <= criterion.threshold < unstabilized
        detail = f"max stabilized error {stabilized:.4f}, median unstabilized error {unstabilized:.4f}"
    elif kind in (CriterionKind.accuracy, CriterionKind.binary_accuracy):
        binary = kind == CriterionKind.binary_accuracy
        matrices = [m for name, m in confusion.items() if name.endswith("binary") == binary]
        if matrices:
            value = min(m.accuracy for m in matrices)
        passed = bool(matrices) and value >= criterion.threshold
        detail = f"lowest accuracy over {len(matrices)} evaluations"
    else:
        if calibration_r is not None:
            value = calibration_r
        passed = value >= criterion.threshold
        detail = "Pearson r of calibrated viscosity against ground truth"
    return CriterionResult(
        name=criterion.name, passed=bool(passed), value=None if np.isnan(value) else value, detail=detail
    )


def publish_catalog(scenario: str, store=None) -> Catalog:
    """Describe the stored tables of a run and write the catalog next to them."""
    store = store or registry.resolve_store()
    described = [
        (TableKind.sequences, "One row per sequence with its correlation curve", ["sequence_id", "V", "tau_c"]),
        (TableKind.classes, "Per-class statistics of V and tau_c", ["class_name", "v_mean", "v_std"]),
        (TableKind.criteria, "Pass/fail line per acceptance criterion", ["name", "passed", "value"]),
        (TableKind.separability, "Per-lag one-way ANOVA across classes", ["lag", "f_statistic", "p_value"]),
        (TableKind.benchmark, "Mean V per class per benchmark setting", ["variant", "order_preserved"]),
    ]
    catalog = Catalog(
        scenario=scenario,
        tables=[
            ResultTable(
                name=f"{scenario}/{kind.value}",
                description=description,
                location=store.get_location(f"{scenario}/{kind.value}"),
                type=kind,
                columns=[Column(name=c, description=c.replace("_", " ")) for c in columns],
            )
            for kind, description, columns in described
        ],
    )
    store.save_json(f"{scenario}/catalog.json", catalog.model_dump_json())
    return catalog


def _records(frame: pd.DataFrame) -> list[dict]:
    """DataFrame rows as JSON-safe dicts (NaN becomes None)."""
    return json.loads(frame.to_json(orient="records"))


def run_experiment(scenario: ScenarioSpec, out_dir: str, threads: int | None = None) -> ExperimentReport:
    """Generate, analyze, classify and check a scenario end to end.

    Writes into out_dir: the corpus, report.json, sequences.csv,
    classes.csv, criteria.csv, separability.csv, one confusion_<name>.csv per
    evaluation and benchmark.csv for scenarios with variants. The same
    tables are saved to the configured artifact store, or to a file store
    under out_dir/store when SPECKLE_STORE_ROOT is unset.

    Raises:
        InvalidArgumentError: The scenario has no classes.
        StageError: Any stage failed; names the stage and sequence.

    """
    setup_logging()
    store = registry.resolve_store(out_dir)
    corpus_dir = os.path.join(out_dir, "corpus")
    entries = gen_corpus(scenario, corpus_dir, threads)
    captures = {v.name: v.capture or scenario.capture for v in _variants(scenario)}

    with ThreadPoolExecutor(max_workers=resolve_threads(threads)) as executor:
        results = list(executor.map(lambda e: _analyze(e, scenario, captures[e.variant], corpus_dir), entries))

    sequences = _sequence_rows(results)
    classes = class_summary(sequences)
    confusion = _classify(scenario, results, threads) if scenario.classify else {}
    calibration, calibration_r = _calibrate(scenario, sequences, store) if scenario.calibrate else (None, None)
    separability = _separability(scenario, results)
    benchmark = pd.DataFrame()
    if scenario.variants:
        order = next((c.order for c in scenario.criteria if c.order), [c.name for c in scenario.classes])
        benchmark = benchmark_table(classes, order)

    criteria = [evaluate_criterion(c, sequences, classes, confusion, calibration_r) for c in scenario.criteria]
    criteria_frame = pd.DataFrame(
        [c.model_dump() for c in criteria], columns=["name", "passed", "value", "detail"]
    )
    for c in criteria:
        logging.log(
            logging.INFO if c.passed else logging.WARNING,
            SpeckleMessage(
                stage="criteria", target=c.name, message=f"{'PASS' if c.passed else 'FAIL'} {c.detail}"
            ).to_json(),
        )

    report = ExperimentReport(
        scenario=scenario.name,
        seed=scenario.seed,
        sequences=len(entries),
        classes=_records(classes),
        confusion=confusion,
        calibration=calibration,
        separability=_records(separability),
        benchmark=_records(benchmark),
        criteria=criteria,
        passed=all(c.passed for c in criteria),
    )

    with stage("report", scenario.name):
        with open(os.path.join(out_dir, "report.json"), "w", encoding="utf-8") as f:
            f.write(report.model_dump_json(indent=2))
        sequences.to_csv(os.path.join(out_dir, "sequences.csv"), index=False)
        classes.to_csv(os.path.join(out_dir, "classes.csv"), index=False)
        criteria_frame.to_csv(os.path.join(out_dir, "criteria.csv"), index=False)
        separability.to_csv(os.path.join(out_dir, "separability.csv"), index=False)
        for name, matrix in confusion.items():
            classifier.confusion_frame(matrix, _confusion_names(scenario, name)).to_csv(
                os.path.join(out_dir, f"confusion_{name.replace('/', '_')}.csv")
            )
        if not benchmark.empty:
            benchmark.to_csv(os.path.join(out_dir, "benchmark.csv"), index=False)

    store.save_table(f"{scenario.name}/{TableKind.sequences.value}", sequences)
    store.save_table(f"{scenario.name}/{TableKind.classes.value}", classes)
    store.save_table(f"{scenario.name}/{TableKind.criteria.value}", criteria_frame)
    store.save_table(f"{scenario.name}/{TableKind.separability.value}", separability)
    if not benchmark.empty:
        store.save_table(f"{scenario.name}/{TableKind.benchmark.value}", benchmark)
    publish_catalog(scenario.name, store)
    return report


def _confusion_names(scenario: ScenarioSpec, name: str) -> dict[int, str]:
    """Row/column names for a confusion matrix."""
    if name.endswith("binary"):
        groups = sorted({c.group or "" for c in scenario.classes})
        return {i: g or "ungrouped" for i, g in enumerate(groups)}
    return {c.label: c.name for c in scenario.classes}


def run_benchmark(scenario: ScenarioSpec, out_dir: str, threads: int | None = None) -> pd.DataFrame:
    """Run a sweep scenario and return mean V per liquid per setting with order flags.

    Raises:
        InvalidArgumentError: The scenario defines no variants.

    """
    if not scenario.variants:
        raise InvalidArgumentError(f"Scenario '{scenario.name}' defines no benchmark settings")
    report = run_experiment(scenario, out_dir, threads)
    return pd.DataFrame(report.benchmark)

