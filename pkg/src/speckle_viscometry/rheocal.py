"""Ostwald viscometry and the cubic calibration from V to viscosity."""

import logging

import numpy as np
import pandas as pd
from scipy import linalg

import speckle_viscometry.registry as registry
from speckle_viscometry.errors import CalibrationError, InvalidArgumentError
from speckle_viscometry.models import CalibratedViscosity, CalibrationModel, ViscometerReading
from speckle_viscometry.stores import ArtifactStore
from speckle_viscometry.utils import SpeckleMessage, load_model

WATER_VISCOSITY_CP = 0.8937
WATER_DENSITY_G_ML = 0.997
MIN_POINTS = 4


def ostwald_viscosity(reading: ViscometerReading) -> float:
    """Viscosity in cP relative to the reference fluid: (rho * t) / (rho_ref * t_ref) * eta_ref.

    Raises:
        InvalidArgumentError: Any input is not positive.

    """
    for name, value in reading.model_dump().items():
        if not value > 0:
            raise InvalidArgumentError(f"{name} must be positive, got {value}")
    return (
        (reading.density_g_ml * reading.efflux_time_s)
        / (reading.ref_density_g_ml * reading.ref_time_s)
        * reading.ref_viscosity_cp
    )


def simulate_reading(viscosity_cp: float, density_g_ml: float, ref_time_s: float = 40.0) -> ViscometerReading:
    """Viscometer reading whose Ostwald evaluation returns viscosity_cp."""
    if not (viscosity_cp > 0 and density_g_ml > 0 and ref_time_s > 0):
        raise InvalidArgumentError("viscosity, density and reference time must be positive")
    efflux = viscosity_cp / WATER_VISCOSITY_CP * WATER_DENSITY_G_ML * ref_time_s / density_g_ml
    return ViscometerReading(density_g_ml=density_g_ml, efflux_time_s=efflux, ref_time_s=ref_time_s)


def mixture_viscosity(base: float, diluent: float, parts_diluent: float) -> float:
    """Viscosity of one part base mixed with parts_diluent parts diluent (log-linear mixing)."""
    if not (base > 0 and diluent > 0) or parts_diluent < 0:
        raise InvalidArgumentError("viscosities must be positive and parts_diluent non-negative")
    fraction = 1.0 / (1.0 + parts_diluent)
    return float(np.exp(fraction * np.log(base) + (1.0 - fraction) * np.log(diluent)))


def fit_calibration(points, liquid_class: str | None = None) -> CalibrationModel:
    """Least-squares cubic from viscosity coefficient V to viscosity in cP.

    Columns of the Vandermonde matrix are scaled to unit max before the normal
    equations are formed and solved.

    Args:
        points: Iterable of (V, viscosity_cp) pairs or a DataFrame with
            columns V and viscosity_cp.
        liquid_class: Name recorded in the model.

    Returns:
        The fitted model with residual norm and V range.

    Raises:
        CalibrationError: Fewer than four points, fewer than four distinct V
            values, or a singular system.

    """
    if isinstance(points, pd.DataFrame):
        data = points[["V", "viscosity_cp"]].to_numpy(dtype=np.float64)
    else:
        data = np.asarray(list(points), dtype=np.float64).reshape(-1, 2)
    if data.shape[0] < MIN_POINTS:
        raise CalibrationError(f"Calibration needs at least {MIN_POINTS} points, got {data.shape[0]}")
    v, target = data[:, 0], data[:, 1]
    if not np.all(np.isfinite(data)):
        raise CalibrationError("Calibration points must be finite")
    if np.unique(v).size < MIN_POINTS:
        raise CalibrationError(f"Calibration needs {MIN_POINTS} distinct V values, got {np.unique(v).size}")

    design = np.vander(v, MIN_POINTS)
    scale = np.abs(design).max(axis=0)
    scale[scale == 0] = 1.0
    scaled = design / scale
    if np.linalg.matrix_rank(scaled) < MIN_POINTS:
        raise CalibrationError("Calibration system is rank deficient")
    try:
        solution = linalg.solve(scaled.T @ scaled, scaled.T @ target, assume_a="pos")
    except linalg.LinAlgError as e:
        raise CalibrationError(f"Calibration system is singular: {e}") from e
    coefficients = solution / scale
    residual = float(np.linalg.norm(design @ coefficients - target))
    logging.info(
        SpeckleMessage(
            stage="calibrate",
            target=liquid_class or "unnamed",
            message=f"Fitted cubic on {data.shape[0]} points, residual norm {residual:.6g}",
        ).to_json()
    )
    return CalibrationModel(
        coefficients=tuple(float(c) for c in coefficients),
        residual_norm=residual,
        n_points=int(data.shape[0]),
        v_min=float(v.min()),
        v_max=float(v.max()),
        liquid_class=liquid_class,
    )


def apply_calibration(model: CalibrationModel, v: float) -> CalibratedViscosity:
    """Evaluate the cubic at V (Horner order), flagging V outside the fitted range."""
    a3, a2, a1, a0 = model.coefficients
    viscosity = ((a3 * v + a2) * v + a1) * v + a0
    out_of_range = bool(v < model.v_min or v > model.v_max)
    if out_of_range:
        logging.warning(
            SpeckleMessage(
                stage="viscosity",
                target=model.liquid_class or "unnamed",
                message=f"V={v} is outside the calibrated range [{model.v_min}, {model.v_max}]",
            ).to_json()
        )
    return CalibratedViscosity(viscosity_cp=float(viscosity), out_of_range=out_of_range)


def calibration_key(liquid_class: str) -> str:
    """Store key of a class calibration."""
    return f"calibration/{liquid_class}.json"


def save_calibration(model: CalibrationModel, store: ArtifactStore | None = None) -> str:
    """Store a model under its liquid class and return the key."""
    if not model.liquid_class:
        raise InvalidArgumentError("Only calibrations with a liquid_class can be stored")
    store = store or registry.resolve_store()
    key = calibration_key(model.liquid_class)
    store.save_json(key, model.model_dump_json(indent=2))
    return key


def load_calibration(liquid_class: str, store: ArtifactStore | None = None) -> CalibrationModel:
    """Load the stored calibration of a liquid class.

    Raises:
        CalibrationError: No calibration is stored for the class.

    """
    store = store or registry.resolve_store()
    document = store.load_json(calibration_key(liquid_class))
    if document is None:
        raise CalibrationError(f"No calibration stored for liquid class '{liquid_class}'")
    return load_model(CalibrationModel, document)


def load_points_csv(path: str) -> pd.DataFrame:
    """Read calibration points from a CSV with columns V and viscosity_cp."""
    try:
        points = pd.read_csv(path)
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise InvalidArgumentError(f"Cannot read calibration points from {path}: {e}") from e
    missing = {"V", "viscosity_cp"} - set(points.columns)
    if missing:
        raise InvalidArgumentError(f"{path} lacks columns {sorted(missing)}")
    return points[["V", "viscosity_cp"]]
