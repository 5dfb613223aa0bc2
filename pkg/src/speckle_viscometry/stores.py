"""Storage backends for experiment tables and JSON artifacts.

Every key names a run and an artifact inside it, ``<run>/<name>``: result
tables of a scenario run live under the scenario name and calibrations
under ``calibration``.
"""

import io
import json
import logging
import os
from abc import ABC, abstractmethod

import duckdb
import pandas as pd

from speckle_viscometry.errors import InvalidArgumentError
from speckle_viscometry.utils import SpeckleMessage


def table_filename(table_name: str) -> str:
    """Add the parquet extension to a table name.

    Args:
        table_name: The base table name, may contain '/' for nesting.

    Returns:
        Relative filename ending in '.pqt'.

    """
    return table_name + ".pqt"


def split_key(key: str) -> tuple[str, str]:
    """Split a store key into its run id and the artifact name within the run.

    Raises:
        InvalidArgumentError: The key has no run part, or an empty or
            relative segment that would leave the run.

    """
    parts = key.split("/")
    if len(parts) < 2 or any(part in ("", ".", "..") for part in parts):
        raise InvalidArgumentError(f"Store key '{key}' must look like '<run>/<name>'")
    return parts[0], "/".join(parts[1:])


def _check_json(key: str, data: str) -> None:
    """Reject an artifact that is not a JSON document."""
    try:
        json.loads(data)
    except json.JSONDecodeError as e:
        raise InvalidArgumentError(f"Artifact '{key}' is not valid JSON: {e}") from e


def _sql_literal(value: str) -> str:
    """Quote a string as a SQL literal."""
    return "'" + value.replace("'", "''") + "'"


def _union(sources: list[tuple[str, str]], views: dict[str, pd.DataFrame] | None = None) -> pd.DataFrame:
    """Stack tables by column name, adding a 'source' column with each table's name.

    Args:
        sources: (table name, duckdb FROM expression) pairs.
        views: DataFrames registered under the view names the expressions use.

    """
    query = " UNION ALL BY NAME ".join(
        f"SELECT *, {_sql_literal(name)} AS source FROM {expression}" for name, expression in sources
    )
    connection = duckdb.connect()
    try:
        for view, frame in (views or {}).items():
            connection.register(view, frame)
        return connection.execute(query).df()
    finally:
        connection.close()


class ArtifactStore(ABC):
    """Base class for a storage backend for result tables and JSON artifacts."""

    def __init__(self) -> None:
        """Initialize the store."""
        super().__init__()

    @abstractmethod
    def save_table(self, table_name: str, data: pd.DataFrame) -> None:
        """Store a table."""
        pass  # pragma: no cover

    @abstractmethod
    def load_table(self, table_name: str | list[str]) -> pd.DataFrame:
        """Fetch a table.

        Args:
            table_name: Single table name or list of table names.
                When a list is provided, merges all tables and adds
                a 'source' column naming the table each row came from.

        """
        pass  # pragma: no cover

    @abstractmethod
    def get_location(self, table_name: str) -> str:
        """Return the storage location string for a given table."""
        pass  # pragma: no cover

    @abstractmethod
    def save_json(self, key: str, data: str) -> None:
        """Write a JSON string under the given key."""
        pass  # pragma: no cover

    @abstractmethod
    def load_json(self, key: str) -> str | None:
        """Read a JSON string stored under the given key, or None if absent."""
        pass  # pragma: no cover


class FileStore(ArtifactStore):
    """Stores tables as parquet files and artifacts as JSON under a directory root."""

    def __init__(self, root: str) -> None:
        """Initialize the store rooted at a directory (created on first write)."""
        super().__init__()
        self.root = os.path.abspath(root)

    def _path(self, relative: str) -> str:
        """Absolute path of a key inside the root."""
        run, name = split_key(relative)
        return os.path.join(self.root, run, *name.split("/"))

    def save_table(self, table_name: str, data: pd.DataFrame) -> None:
        """Store a DataFrame as a parquet file plus a column sidecar."""
        path = self.get_location(table_name)
        os.makedirs(os.path.dirname(path), exist_ok=True)
        data.to_parquet(path, index=False)
        with open(path.replace(".pqt", ".json"), "w", encoding="utf-8") as f:
            json.dump({"columns": data.columns.tolist()}, f)
        logging.info(
            SpeckleMessage(stage="FileStore", target=table_name, message=f"Stored table to {path}").to_json()
        )

    def load_table(self, table_name: str | list[str]) -> pd.DataFrame:
        """Fetch a DataFrame from parquet file(s).

        When given a list of table names, merges them using DuckDB
        and adds a 'source' column.
        """
        names = table_name if isinstance(table_name, list) else [table_name]
        present = [(name, self.get_location(name)) for name in names]
        present = [(name, path) for name, path in present if os.path.exists(path)]
        if not present:
            logging.warning(
                SpeckleMessage(stage="FileStore", target=str(table_name), message="No stored table").to_json()
            )
            return pd.DataFrame()
        if not isinstance(table_name, list):
            connection = duckdb.connect()
            try:
                return connection.execute(f"SELECT * FROM read_parquet({_sql_literal(present[0][1])})").df()
            finally:
                connection.close()
        logging.info(
            SpeckleMessage(stage="FileStore", target="merged", message=f"Merged {len(present)} tables").to_json()
        )
        return _union([(name, f"read_parquet({_sql_literal(path)})") for name, path in present])

    def get_location(self, table_name: str) -> str:
        """Return the parquet path for a given table."""
        return self._path(table_filename(table_name))

    def save_json(self, key: str, data: str) -> None:
        """Write a JSON document under the root."""
        path = self._path(key)
        _check_json(key, data)
        os.makedirs(os.path.dirname(path), exist_ok=True)
        with open(path, "w", encoding="utf-8") as f:
            f.write(data)
        logging.info(SpeckleMessage(stage="FileStore", target=key, message=f"Stored artifact to {path}").to_json())

    def load_json(self, key: str) -> str | None:
        """Read a JSON document from under the root."""
        path = self._path(key)
        if not os.path.exists(path):
            return None
        with open(path, encoding="utf-8") as f:
            return f.read()


class MemoryStore(ArtifactStore):
    """Keeps each run's tables as parquet bytes and its artifacts as JSON in memory.

    Tables are encoded the way FileStore writes them, so a table read back
    has the dtypes and the fresh index it would have from disk.
    """

    def __init__(self) -> None:
        """Initialize with no runs."""
        super().__init__()
        self._tables: dict[str, dict[str, bytes]] = {}
        self._artifacts: dict[str, dict[str, str]] = {}

    def runs(self) -> list[str]:
        """Run ids with at least one stored table or artifact."""
        return sorted(set(self._tables) | set(self._artifacts))

    def save_table(self, table_name: str, data: pd.DataFrame) -> None:
        """Encode a DataFrame to parquet and keep it under its run."""
        run, name = split_key(table_name)
        self._tables.setdefault(run, {})[name] = data.to_parquet(index=False)
        logging.info(
            SpeckleMessage(stage="MemoryStore", target=table_name, message=f"Stored table in run {run}").to_json()
        )

    def _decode(self, table_name: str) -> pd.DataFrame | None:
        """Read back one stored table, or None."""
        run, name = split_key(table_name)
        encoded = self._tables.get(run, {}).get(name)
        return None if encoded is None else pd.read_parquet(io.BytesIO(encoded))

    def load_table(self, table_name: str | list[str]) -> pd.DataFrame:
        """Fetch a table, or merge several with a 'source' column the way FileStore does."""
        names = table_name if isinstance(table_name, list) else [table_name]
        present = {name: frame for name in names if (frame := self._decode(name)) is not None}
        if not present:
            logging.warning(
                SpeckleMessage(stage="MemoryStore", target=str(table_name), message="No stored table").to_json()
            )
            return pd.DataFrame()
        if not isinstance(table_name, list):
            return present[table_name]
        views = {f"t{i}": frame for i, frame in enumerate(present.values())}
        return _union([(name, f"t{i}") for i, name in enumerate(present)], views)

    def get_location(self, table_name: str) -> str:
        """Return the in-memory identifier for a given table."""
        run, name = split_key(table_name)
        return f"memory://{run}/{table_filename(name)}"

    def save_json(self, key: str, data: str) -> None:
        """Keep a JSON document under its run."""
        run, name = split_key(key)
        _check_json(key, data)
        self._artifacts.setdefault(run, {})[name] = data

    def load_json(self, key: str) -> str | None:
        """Read a JSON document kept under its run."""
        run, name = split_key(key)
        return self._artifacts.get(run, {}).get(name)
