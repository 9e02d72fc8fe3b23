"""JSON manifests describing a chart, a connection and an auxiliary metric.

Example::

    {
      "dimension": 2,
      "coordinates": ["x0", "x1"],
      "domain": {"lo": [-1, -1], "hi": [1, 1]},
      "connection": {"0_00": "x1"},
      "metric": {"0_0": "1", "1_1": "1"},
      "seed": 0
    }

Connection keys are ``"h_ij"`` with ``i <= j`` (``"h_i_j"`` is also accepted
and is required once ``n > 10``); metric keys are ``"i_j"`` with ``i <= j``.
Unlisted connection entries are zero, unlisted metric entries follow the
identity.  Output of ``equiaffinize`` adds ``"psi"`` (a list of expressions)
and ``"source"`` (the connection it was derived from).
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass, field

from . import expr as ex
from .geometry import Chart, ChartError, ConnectionField, MetricField, OneFormField


class ManifestError(ValueError):
    pass


@dataclass
class Manifest:
    chart: Chart
    connection: ConnectionField
    metric: MetricField
    seed: int = 0
    psi: OneFormField | None = None
    source: ConnectionField | None = None
    digest: str = ""
    metric_given: bool = field(default=False, repr=False)


def digest_bytes(data: bytes) -> str:
    return "sha256:" + hashlib.sha256(data).hexdigest()


def _parse_key(key: str, parts: int, n: int, where: str) -> tuple[int, ...]:
    key = key.strip()
    if re.fullmatch(r"\d+(_\d+)+", key):
        pieces = key.split("_")
        if len(pieces) == parts:
            idx = tuple(int(v) for v in pieces)
        elif parts == 3 and len(pieces) == 2 and len(pieces[1]) == 2 and n <= 10:
            idx = (int(pieces[0]), int(pieces[1][0]), int(pieces[1][1]))
        else:
            raise ManifestError(f"{where}: malformed key {key!r}")
    else:
        raise ManifestError(f"{where}: malformed key {key!r}")
    if any(v >= n for v in idx):
        raise ManifestError(f"{where}: key {key!r} has an index >= dimension {n}")
    if idx[-2] > idx[-1]:
        raise ManifestError(
            f"{where}: key {key!r} has i > j; store the symmetric representative with i <= j")
    return idx


def _parse_expr(chart: Chart, text, where: str) -> ex.Expression:
    if isinstance(text, (int, float)) and not isinstance(text, bool):
        text = repr(float(text))
    if not isinstance(text, str):
        raise ManifestError(f"{where}: expected an expression string, got {text!r}")
    try:
        return chart.parse(text)
    except ex.ParseError as err:
        raise ManifestError(f"{where}: {err.message} at position {err.position}\n"
                            f"  {err.text}\n  {' ' * err.position}^") from err


def _connection(chart, table, where) -> ConnectionField:
    if not isinstance(table, dict):
        raise ManifestError(f"{where}: expected an object of 'h_ij' keys")
    comps = {}
    for key, text in table.items():
        idx = _parse_key(key, 3, chart.n, where)
        comps[idx] = _parse_expr(chart, text, f"{where}[{key}]")
    return ConnectionField.from_components(chart, comps)


def parse_manifest(data: dict, digest: str = "") -> Manifest:
    if not isinstance(data, dict):
        raise ManifestError("manifest must be a JSON object")
    try:
        n = int(data["dimension"])
    except (KeyError, TypeError, ValueError):
        raise ManifestError("manifest needs an integer 'dimension'") from None
    names = data.get("coordinates") or ex.default_names(n)
    domain = data.get("domain")
    if not isinstance(domain, dict) or "lo" not in domain or "hi" not in domain:
        raise ManifestError("manifest needs 'domain' with 'lo' and 'hi' arrays")
    try:
        chart = Chart(n, tuple(domain["lo"]), tuple(domain["hi"]), tuple(names))
    except (ChartError, TypeError, ValueError) as err:
        raise ManifestError(f"domain: {err}") from err

    connection = _connection(chart, data.get("connection", {}), "connection")
    metric_table = data.get("metric")
    comps = {}
    if metric_table is not None:
        if not isinstance(metric_table, dict):
            raise ManifestError("metric: expected an object of 'i_j' keys")
        for key, text in metric_table.items():
            idx = _parse_key(key, 2, n, "metric")
            comps[idx] = _parse_expr(chart, text, f"metric[{key}]")
    metric = MetricField.from_components(chart, comps)

    psi = None
    if "psi" in data:
        items = data["psi"]
        if not isinstance(items, list) or len(items) != n:
            raise ManifestError(f"psi: expected a list of {n} expressions")
        psi = OneFormField(chart, tuple(_parse_expr(chart, t, f"psi[{k}]")
                                        for k, t in enumerate(items)))
    source = None
    if "source" in data:
        source = _connection(chart, data["source"], "source")
    seed = data.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool):
        raise ManifestError("seed must be an integer")
    return Manifest(chart, connection, metric, seed, psi, source, digest,
                    metric_table is not None)


def load_manifest(path) -> Manifest:
    with open(path, "rb") as fh:
        raw = fh.read()
    try:
        data = json.loads(raw)
    except json.JSONDecodeError as err:
        raise ManifestError(f"invalid JSON at line {err.lineno} column {err.colno}: {err.msg}")
    return parse_manifest(data, digest_bytes(raw))


def _key3(h, i, j, n):
    return f"{h}_{i}{j}" if n <= 10 else f"{h}_{i}_{j}"


def connection_table(c: ConnectionField) -> dict:
    return {_key3(h, i, j, c.n): c.chart.render(e) for (h, i, j), e in c.nonzero().items()}


def manifest_dict(chart: Chart, connection: ConnectionField, metric: MetricField | None = None,
                  seed: int = 0, psi: OneFormField | None = None,
                  source: ConnectionField | None = None) -> dict:
    out = {
        "dimension": chart.n,
        "coordinates": list(chart.names),
        "domain": {"lo": list(chart.lo), "hi": list(chart.hi)},
        "connection": connection_table(connection),
    }
    if metric is not None:
        out["metric"] = {f"{i}_{j}": chart.render(e) for (i, j), e in metric.components()}
    if psi is not None:
        out["psi"] = [chart.render(e) for e in psi.psi]
    if source is not None:
        out["source"] = connection_table(source)
    out["seed"] = seed
    return out


def dumps(data: dict) -> str:
    return json.dumps(data, indent=2) + "\n"


def write_manifest(path, data: dict) -> None:
    with open(path, "w") as fh:
        fh.write(dumps(data))
