"""
The machine-readable reports of the experiments: a CSV table and a JSON document.

Both are deterministic: the same plan with the same seed and checkpoints
produces byte-identical files. Hence no timestamps, no host names,
no absolute timings; the floats are written with their full ``repr``.

The CSV files have one header row and one row per record, so they can be
plotted by the external tools directly (e.g. gnuplot with ``separator ','``).
The JSON documents carry the same rows plus the non-tabular parts
(curves, BD tables, per-frame traces, online telemetry), the metric
conventions, and the provenance: the settings and the plan as used,
and the sha256 of every input checkpoint and of every produced bitstream.
"""
import csv
import dataclasses
import hashlib
import io
import logging
import math
import pathlib
from typing import Any, Dict, Iterable, Mapping, Optional, Sequence, Tuple

from epac.storage import files
from epac.structs import configuration

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1


def metric_conventions(scales: int) -> Dict[str, Any]:
    return {
        'psnr': 'all channels jointly, peak 1.0, capped at 100 dB',
        'ms_ssim_scales': scales,
        'ms_ssim_weights': 'the standard 5-scale weights re-normalised to the used scales',
        'bpp': '8 * bitstream bytes / (width * height * frames), container overhead included',
        'bd': 'cubic fits of log10(rate) and quality, exact integration over the overlap',
    }


@dataclasses.dataclass(frozen=True)
class Report:
    kind: str
    columns: Tuple[str, ...]
    rows: Sequence[Mapping[str, Any]]
    extra: Mapping[str, Any] = dataclasses.field(default_factory=dict)
    provenance: Mapping[str, Any] = dataclasses.field(default_factory=dict)
    scales: int = 3

    def as_dict(self) -> Dict[str, Any]:
        document: Dict[str, Any] = {
            'schema': SCHEMA_VERSION,
            'kind': self.kind,
            'metrics': metric_conventions(self.scales),
            'columns': list(self.columns),
            'rows': [_jsonable(dict(row)) for row in self.rows],
            'provenance': _jsonable(dict(self.provenance)),
        }
        for key, value in self.extra.items():
            document[key] = _jsonable(value)
        return document


def _jsonable(value: Any) -> Any:
    """ Plain JSON values; the non-finite floats become ``null`` (JSON has no NaN). """
    if isinstance(value, float):
        return value if math.isfinite(value) else None
    if isinstance(value, Mapping):
        return {str(key): _jsonable(val) for key, val in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(item) for item in value]
    if hasattr(value, 'item') and callable(value.item):
        return _jsonable(value.item())  # numpy scalars
    if isinstance(value, pathlib.PurePath):
        return str(value)
    return value


def _cell(value: Any) -> str:
    if value is None:
        return ''
    if isinstance(value, bool):
        return 'true' if value else 'false'
    if isinstance(value, float):
        return repr(value) if math.isfinite(value) else ''
    return str(value)


def format_csv(columns: Sequence[str], rows: Iterable[Mapping[str, Any]]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator='\n')
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_cell(row.get(column)) for column in columns])
    return buffer.getvalue()


def file_digest(path: files.PathLike) -> str:
    digest = hashlib.sha256()
    with open(path, 'rb') as f:
        for block in iter(lambda: f.read(1 << 16), b''):
            digest.update(block)
    return digest.hexdigest()


def provenance(
        settings: configuration.LabSettings,
        plan: Optional[Mapping[str, Any]] = None,
        *,
        inputs: Optional[Mapping[str, files.PathLike]] = None,
) -> Dict[str, Any]:
    """ The echo of the settings and the plan, and the content hashes of the inputs. """
    return {
        'settings': settings.as_dict(),
        'plan': dict(plan) if plan is not None else None,
        'inputs': {label: file_digest(path) for label, path in sorted((inputs or {}).items())},
    }


def write_report(report: Report, directory: files.PathLike) -> Tuple[pathlib.Path, pathlib.Path]:
    """ Store ``<kind>.csv`` and ``<kind>.json`` in the directory. """
    directory = pathlib.Path(directory)
    csv_path = directory / f'{report.kind}.csv'
    json_path = directory / f'{report.kind}.json'
    files.write_atomic(csv_path, format_csv(report.columns, report.rows).encode('utf-8'))
    files.write_json(json_path, report.as_dict())
    logger.info(f"Stored the {report.kind} report with {len(report.rows)} rows to {directory}.")
    return csv_path, json_path
