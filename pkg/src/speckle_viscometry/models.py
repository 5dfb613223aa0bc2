"""Pydantic models for speckle-viscometry configuration, metadata and results."""

from enum import Enum
from typing import Any

from pydantic import BaseModel, ConfigDict, Field, computed_field, field_validator, model_validator


class Channel(str, Enum):
    """Enumeration of frame channel tags."""

    gray = "gray"
    red = "red"
    green = "green"
    blue = "blue"
    rgb = "rgb"


class LiquidSpec(BaseModel):
    """Physical description of the liquid under the laser spot."""

    model_config = ConfigDict(frozen=True)

    viscosity_pa_s: float = Field(gt=0)
    particle_radius_m: float = Field(default=1e-6, gt=0)
    temperature_k: float = Field(default=293.15, gt=0)
    opacity: float = Field(default=1.0, ge=0, le=1)


class OpticsConfig(BaseModel):
    """Imaging geometry and capture timing for the speckle simulator.

    The default pixel pitch (0.2 um) puts about one speckle grain on each pixel;
    the default spot radius models a 1 mm beam at 5 cm.
    """

    model_config = ConfigDict(frozen=True)

    wavelength_m: float = Field(default=800e-9, gt=0)
    width: int = Field(default=256, ge=16)
    height: int = Field(default=256, ge=16)
    pixels_per_meter: float = Field(default=5e6, gt=0)
    frames: int = Field(default=120, ge=1)
    fps: float = Field(default=30.0, gt=0)
    seed: int = Field(default=0, ge=0, lt=2**64)
    particle_count: int = Field(default=500, ge=1)
    spot_radius_m: float = Field(default=0.5e-3, gt=0)
    shutter_s: float | None = Field(default=None, gt=0)
    exposure_samples: int = Field(default=1, ge=1)
    supersample: int = Field(default=1, ge=1)

    @property
    def effective_shutter_s(self) -> float:
        """Shutter time, defaulting to one frame interval."""
        return self.shutter_s if self.shutter_s is not None else 1.0 / self.fps


class SimulationConfig(BaseModel):
    """Flat JSON document accepted by `speckle sim`."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    viscosity_pa_s: float
    particle_radius_m: float
    temperature_k: float
    opacity: float
    wavelength_m: float
    width: int
    height: int
    pixels_per_meter: float
    frames: int
    fps: float
    seed: int
    particle_count: int
    spot_radius_m: float = 0.5e-3
    shutter_s: float | None = None
    exposure_samples: int = 1
    supersample: int = 1

    @model_validator(mode="after")
    def _check_ranges(self):
        """Validate by building the liquid and optics models."""
        self.liquid()
        self.optics()
        return self

    def liquid(self) -> LiquidSpec:
        """Return the liquid part of the configuration."""
        return LiquidSpec(
            viscosity_pa_s=self.viscosity_pa_s,
            particle_radius_m=self.particle_radius_m,
            temperature_k=self.temperature_k,
            opacity=self.opacity,
        )

    def optics(self) -> OpticsConfig:
        """Return the optics part of the configuration."""
        return OpticsConfig(
            wavelength_m=self.wavelength_m,
            width=self.width,
            height=self.height,
            pixels_per_meter=self.pixels_per_meter,
            frames=self.frames,
            fps=self.fps,
            seed=self.seed,
            particle_count=self.particle_count,
            spot_radius_m=self.spot_radius_m,
            shutter_s=self.shutter_s,
            exposure_samples=self.exposure_samples,
            supersample=self.supersample,
        )


class CaptureArtifactConfig(BaseModel):
    """Parameters of the smartphone capture distortions.

    The flicker, bars and skew switches allow lighting-only configurations.
    """

    model_config = ConfigDict(extra="forbid", frozen=True)

    flicker_period_frames: int = Field(default=6, ge=2)
    flicker_duty: float = Field(default=0.5, gt=0, lt=1)
    bar_period_frames: int = Field(default=45, ge=2)
    bar_sweep_frames: int = Field(default=10, ge=1)
    bar_width_frac: float = Field(default=0.3, gt=0, le=1)
    skew_max_px: int = Field(default=8, ge=0)
    skew_event_prob: float = Field(default=0.1, ge=0, le=1)
    background_lux_offset: float = Field(default=0.0, ge=0, le=255)
    attenuation: float = Field(default=1.0, gt=0, le=1)
    seed: int = Field(default=0, ge=0, lt=2**64)
    flicker: bool = True
    bars: bool = True
    skew: bool = True

    @model_validator(mode="after")
    def _check_periods(self):
        """Bars repeat no faster than the flicker and sweep within one period."""
        if self.bar_period_frames < self.flicker_period_frames:
            raise ValueError("bar_period_frames must be >= flicker_period_frames")
        if self.bar_sweep_frames > self.bar_period_frames:
            raise ValueError("bar_sweep_frames must be <= bar_period_frames")
        return self

    @property
    def disturbs_timing(self) -> bool:
        """True when any distortion that the stabilizer must reject is enabled."""
        return self.flicker or self.bars or (self.skew and self.skew_event_prob > 0 and self.skew_max_px > 0)


class SequenceManifest(BaseModel):
    """Contents of a sequence directory's metadata.json."""

    fps: float = Field(gt=0)
    shutter_s: float = Field(gt=0)
    width: int = Field(ge=1)
    height: int = Field(ge=1)
    channel: Channel = Channel.gray
    frame_count: int = Field(ge=0)


class FrameSelection(BaseModel):
    """Frame indices chosen for the correlation analysis."""

    indices: list[int]
    range_score: float = 0.0

    @field_validator("indices")
    @classmethod
    def _strictly_increasing(cls, value: list[int]) -> list[int]:
        """Indices are non-negative and strictly increasing."""
        if not value:
            raise ValueError("selection must contain at least one index")
        if value[0] < 0 or any(b <= a for a, b in zip(value, value[1:], strict=False)):
            raise ValueError("indices must be non-negative and strictly increasing")
        return value


class CropRegion(BaseModel):
    """Axis-aligned box grown around the image center.

    Columns span [cx - width // 2, cx - width // 2 + width); rows likewise.
    half_width counts the pixels right of the center column.
    """

    model_config = ConfigDict(frozen=True)

    cx: int = Field(ge=0)
    cy: int = Field(ge=0)
    width: int = Field(ge=1)
    height: int = Field(ge=1)

    @computed_field
    @property
    def hw(self) -> int:
        """Half width: pixels right of the center column."""
        return (self.width - 1) // 2

    @computed_field
    @property
    def hh(self) -> int:
        """Half height: pixels below the center row."""
        return (self.height - 1) // 2

    @property
    def x0(self) -> int:
        """First column of the box."""
        return self.cx - self.width // 2

    @property
    def y0(self) -> int:
        """First row of the box."""
        return self.cy - self.height // 2

    def slices(self) -> tuple[slice, slice]:
        """Return (row, column) slices selecting the box."""
        return slice(self.y0, self.y0 + self.height), slice(self.x0, self.x0 + self.width)

    def fits(self, height: int, width: int) -> bool:
        """Whether the box lies inside an image of the given size."""
        return self.x0 >= 0 and self.y0 >= 0 and self.x0 + self.width <= width and self.y0 + self.height <= height

    @classmethod
    def full_frame(cls, height: int, width: int) -> "CropRegion":
        """The region covering a whole height x width frame."""
        return cls(cx=width // 2, cy=height // 2, width=width, height=height)


class CorrelationCurve(BaseModel):
    """Correlation of the anchor frame against each lag."""

    lags: list[int]
    coefficients: list[float]
    viscosity_coefficient: float
    tau_c: float | None = None
    crop: CropRegion | None = None
    contrast_first_frame: float | None = None
    frame_indices: list[int] = []

    @model_validator(mode="after")
    def _check_curve(self):
        """Anchor equals one, all values in [-1, 1], V is the second point."""
        if len(self.coefficients) < 2 or len(self.coefficients) != len(self.lags):
            raise ValueError("curve needs matching lags and at least two coefficients")
        if self.coefficients[0] != 1.0:
            raise ValueError("coefficients[0] must be exactly 1")
        if any(abs(c) > 1.0 for c in self.coefficients):
            raise ValueError("coefficients must lie in [-1, 1]")
        if self.viscosity_coefficient != self.coefficients[1]:
            raise ValueError("viscosity_coefficient must equal coefficients[1]")
        return self


class ViscometerReading(BaseModel):
    """One Ostwald viscometer measurement plus its water reference."""

    density_g_ml: float
    efflux_time_s: float
    ref_time_s: float
    ref_density_g_ml: float = 0.997
    ref_viscosity_cp: float = 0.8937


class CalibrationModel(BaseModel):
    """Cubic map from viscosity coefficient V to viscosity in cP."""

    coefficients: tuple[float, float, float, float]
    residual_norm: float
    n_points: int = Field(ge=4)
    v_min: float
    v_max: float
    liquid_class: str | None = None


class CalibratedViscosity(BaseModel):
    """Result of applying a calibration to one coefficient."""

    viscosity_cp: float
    out_of_range: bool


class PairwiseSvm(BaseModel):
    """One binary sub-problem of a one-vs-one SVM.

    Support vectors of the positive class carry label +1.
    """

    positive: int
    negative: int
    support_vectors: list[list[float]]
    alphas: list[float]
    sv_labels: list[int]
    bias: float


class SvmModel(BaseModel):
    """Trained one-vs-one RBF SVM with its feature standardization."""

    classes: list[int]
    class_names: dict[int, str] = {}
    gamma: float = Field(gt=0)
    C: float = Field(gt=0)
    tolerance: float = 1e-3
    feature_mean: list[float]
    feature_std: list[float]
    pairs: list[PairwiseSvm]
    training_sequences: list[str] = []


class ConfusionMatrix(BaseModel):
    """Counts of true (rows) against predicted (columns) labels."""

    labels: list[int]
    counts: list[list[int]]
    accuracy: float
    recall: list[float]


class ClassSpec(BaseModel):
    """One liquid class of a scenario."""

    name: str
    label: int = Field(ge=0)
    liquid: LiquidSpec
    viscosity_jitter: float = Field(default=0.0, ge=0)
    group: str | None = None
    density_g_ml: float = Field(default=1.0, gt=0)


class Variant(BaseModel):
    """A benchmark setting: optics/capture overrides applied to every class."""

    name: str
    optics: dict[str, float | int | None] = {}
    capture: CaptureArtifactConfig | None = None
    opacity_scale: float = Field(default=1.0, gt=0, le=1)


class CriterionKind(str, Enum):
    """Acceptance checks evaluated at the end of an experiment."""

    v_order = "v_order"
    v_separation = "v_separation"
    v_spearman = "v_spearman"
    tau_linearity = "tau_linearity"
    stabilizer_gain = "stabilizer_gain"
    accuracy = "accuracy"
    binary_accuracy = "binary_accuracy"
    calibration_linearity = "calibration_linearity"
    order_preserved = "order_preserved"


class Criterion(BaseModel):
    """A named pass/fail check over the experiment results."""

    name: str
    kind: CriterionKind
    threshold: float = 0.0
    order: list[str] = []


class CriterionResult(BaseModel):
    """Outcome of one criterion."""

    name: str
    passed: bool
    value: float | None = None
    detail: str = ""


class ScenarioSpec(BaseModel):
    """A reproducible synthetic experiment."""

    name: str
    description: str = ""
    classes: list[ClassSpec]
    replicates: int = Field(default=1, ge=1)
    train_replicates: int = Field(default=0, ge=0)
    seed: int = Field(default=0, ge=0, lt=2**64)
    optics: OpticsConfig = OpticsConfig()
    capture: CaptureArtifactConfig | None = None
    variants: list[Variant] = []
    classify: bool = False
    n_select: int = Field(default=10, ge=2)
    tau: int = Field(default=1, ge=1)
    threshold: float = Field(default=0.85, ge=0, le=1)
    trim_leading_s: float = Field(default=0.0, ge=0)
    trim_trailing_s: float = Field(default=0.0, ge=0)
    crop: str = Field(default="full", pattern="^(full|auto)$")
    svm_c: float = Field(default=10.0, gt=0)
    calibrate: bool = False
    criteria: list[Criterion] = []

    @model_validator(mode="after")
    def _check_scenario(self):
        """At least one class, unique labels and names, sane split."""
        if not self.classes:
            raise ValueError("scenario needs at least one class")
        if len({c.name for c in self.classes}) != len(self.classes):
            raise ValueError("class names must be unique")
        if len({c.label for c in self.classes}) != len(self.classes):
            raise ValueError("class labels must be unique")
        if self.train_replicates > self.replicates:
            raise ValueError("train_replicates cannot exceed replicates")
        return self


class ManifestEntry(BaseModel):
    """One sequence listed in a dataset or corpus manifest."""

    dir: str
    label: int
    class_name: str = ""
    sequence_id: str = ""
    replicate: int = 0
    split: str = "train"
    variant: str = ""
    viscosity_pa_s: float | None = None
    clean_dir: str | None = None


class TableKind(str, Enum):
    """Enumeration of stored result tables."""

    sequences = "sequences"
    classes = "classes"
    criteria = "criteria"
    separability = "separability"
    benchmark = "benchmark"


class Column(BaseModel):
    """Column definition of a stored table."""

    name: str
    description: str


class ResultTable(BaseModel):
    """A stored result table and where to find it."""

    name: str
    description: str
    location: str
    type: TableKind
    columns: list[Column] = []


class Catalog(BaseModel):
    """Tables stored for one scenario run."""

    scenario: str
    tables: list[ResultTable]


class ExperimentReport(BaseModel):
    """Machine-readable summary of an experiment run."""

    scenario: str
    seed: int
    sequences: int
    classes: list[dict[str, Any]]
    confusion: dict[str, ConfusionMatrix] = {}
    calibration: CalibrationModel | None = None
    separability: list[dict[str, Any]] = []
    benchmark: list[dict[str, Any]] = []
    criteria: list[CriterionResult] = []
    passed: bool = True
