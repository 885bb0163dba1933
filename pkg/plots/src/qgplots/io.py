"""Reading qgflow CSV artifacts.

Every artifact starts with a single comment row `# schema_version=N`
followed by a header row and data rows. Numeric columns are detected per
column; anything that fails float conversion stays a string column.
"""

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


@dataclass
class Table:
    """A parsed artifact: column name -> numpy array (float or object)."""

    path: Path
    schema_version: int
    columns: dict = field(default_factory=dict)

    def __getitem__(self, name):
        return self.columns[name]

    def __len__(self):
        if not self.columns:
            return 0
        return len(next(iter(self.columns.values())))

    def require(self, *names) -> None:
        missing = [n for n in names if n not in self.columns]
        if missing:
            raise ValueError(
                f"{self.path.name}: missing columns {missing}, "
                f"found {sorted(self.columns)}"
            )


def read_table(path) -> Table:
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        rows = list(reader)
    if not rows or not rows[0] or not rows[0][0].startswith("# schema_version="):
        raise ValueError(f"{path.name}: missing schema_version header")
    version = int(rows[0][0].split("=", 1)[1])
    if len(rows) < 2:
        raise ValueError(f"{path.name}: missing column header")
    header = rows[1]
    data = rows[2:]
    columns = {}
    for j, name in enumerate(header):
        raw = [r[j] for r in data]
        try:
            columns[name] = np.array([float(v) for v in raw])
        except ValueError:
            columns[name] = np.array(raw, dtype=object)
    return Table(path=path, schema_version=version, columns=columns)
