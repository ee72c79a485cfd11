"""Corpus loading, deduplication, label attachment and node RPC fetch.

A corpus is JSON Lines, one contract per line: required "id" and
"bytecode" (hex), optional "label" (0/1), "category" (vulnerability tag)
and "verdicts" ([bool, bool, bool] from three analyzers).  Malformed lines
are collected with their numbers, not fatal unless nothing parses.
"""

from __future__ import annotations

import json
import os
import urllib.error
import urllib.request
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

from .evaluation import ToolVerdicts, majority_label, union_label
from .opcodes import Bytecode, MalformedHexError, parse_hex

RPC_URL_ENV = "EVMSCAN_RPC_URL"
DEFAULT_RPC_TIMEOUT = 10.0


class CorpusParseError(ValueError):
    """Every line of the corpus failed to parse."""


class MissingVerdictsError(ValueError):
    """Voting label modes need tool verdicts on every record."""


class MissingLabelsError(ValueError):
    """mode='given' needs an explicit label on every record."""


class TransportError(RuntimeError):
    """Connection, timeout or HTTP-level failure talking to the endpoint."""


class RpcError(RuntimeError):
    """The endpoint answered with a JSON-RPC error object."""


class EmptyCodeError(ValueError):
    """The address has no deployed code ("0x" result)."""


@dataclass(frozen=True)
class ContractRecord:
    source_id: str
    bytecode: Bytecode
    label: int | None = None
    category: str | None = None
    tool_verdicts: ToolVerdicts | None = None


@dataclass(frozen=True)
class ParseIssue:
    line_no: int
    message: str


def _record_from_obj(obj: dict) -> ContractRecord:
    source_id = obj["id"]
    bytecode = replace(parse_hex(obj["bytecode"]), source_id=source_id)
    if len(bytecode) == 0:
        raise ValueError("empty bytecode")
    label = obj.get("label")
    if label is not None:
        label = int(label)
        if label not in (0, 1):
            raise ValueError(f"label must be 0 or 1, got {label}")
    verdicts = obj.get("verdicts")
    if verdicts is not None:
        if len(verdicts) != 3:
            raise ValueError("verdicts must be a triple")
        verdicts = ToolVerdicts(tuple(bool(v) for v in verdicts))
    return ContractRecord(
        source_id=source_id,
        bytecode=bytecode,
        label=label,
        category=obj.get("category"),
        tool_verdicts=verdicts,
    )


def load_jsonl(path) -> tuple[list[ContractRecord], list[ParseIssue]]:
    """Parse records in file order; returns (records, per-line issues)."""
    records: list[ContractRecord] = []
    issues: list[ParseIssue] = []
    saw_line = False
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            saw_line = True
            try:
                obj = json.loads(line)
                if not isinstance(obj, dict):
                    raise ValueError("line is not a JSON object")
                if "id" not in obj or "bytecode" not in obj:
                    raise ValueError('missing required "id" or "bytecode"')
                records.append(_record_from_obj(obj))
            except (ValueError, KeyError, TypeError, MalformedHexError) as exc:
                issues.append(ParseIssue(line_no, str(exc)))
    if saw_line and not records:
        raise CorpusParseError(
            f"no usable records in {path}; first issue: "
            f"line {issues[0].line_no}: {issues[0].message}"
        )
    return records, issues


def save_jsonl(records, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            obj: dict = {"id": record.source_id, "bytecode": record.bytecode.to_hex()}
            if record.label is not None:
                obj["label"] = record.label
            if record.category is not None:
                obj["category"] = record.category
            if record.tool_verdicts is not None:
                obj["verdicts"] = [bool(v) for v in record.tool_verdicts.flags]
            fh.write(json.dumps(obj, separators=(",", ":")))
            fh.write("\n")


def dedup(records) -> tuple[list[ContractRecord], int]:
    """Drop exact-bytecode duplicates, keeping first occurrences in order."""
    seen: set[bytes] = set()
    kept: list[ContractRecord] = []
    removed = 0
    for record in records:
        key = record.bytecode.data
        if key in seen:
            removed += 1
        else:
            seen.add(key)
            kept.append(record)
    return kept, removed


def attach_labels(records, mode: str) -> list[ContractRecord]:
    """Label records by tool voting or pass explicit labels through."""
    if mode not in ("majority", "union", "given"):
        raise ValueError(f"unknown label mode {mode!r}")
    if mode == "given":
        missing = [r.source_id for r in records if r.label is None]
        if missing:
            raise MissingLabelsError(f"records without labels: {missing}")
        return list(records)
    vote = majority_label if mode == "majority" else union_label
    missing = [r.source_id for r in records if r.tool_verdicts is None]
    if missing:
        raise MissingVerdictsError(f"records without verdicts: {missing}")
    return [replace(r, label=vote(r.tool_verdicts)) for r in records]


def default_endpoint() -> str:
    endpoint = os.environ.get(RPC_URL_ENV)
    if not endpoint:
        raise ValueError(f"no endpoint given and {RPC_URL_ENV} is not set")
    return endpoint


def fetch_code(
    endpoint: str | None, address: str, timeout: float = DEFAULT_RPC_TIMEOUT
) -> Bytecode:
    """eth_getCode over JSON-RPC 2.0; returns the deployed bytecode.

    endpoint=None falls back to the EVMSCAN_RPC_URL environment variable.
    """
    if endpoint is None:
        endpoint = default_endpoint()
    if not (address.startswith("0x") and len(address) == 42):
        raise ValueError(f"address must be 20-byte hex with 0x prefix, got {address!r}")
    body = json.dumps(
        {"jsonrpc": "2.0", "id": 1, "method": "eth_getCode", "params": [address, "latest"]}
    ).encode("ascii")
    request = urllib.request.Request(
        endpoint, data=body, headers={"Content-Type": "application/json"}
    )
    try:
        with urllib.request.urlopen(request, timeout=timeout) as response:
            payload = json.loads(response.read().decode("utf-8"))
    except urllib.error.HTTPError as exc:
        raise TransportError(f"HTTP {exc.code} from {endpoint}") from exc
    except (urllib.error.URLError, OSError, TimeoutError) as exc:
        raise TransportError(f"cannot reach {endpoint}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise TransportError(f"non-JSON response from {endpoint}") from exc
    if "error" in payload:
        error = payload["error"]
        raise RpcError(f"code {error.get('code')}: {error.get('message')}")
    result = payload.get("result")
    if result in (None, "0x", "0X"):
        raise EmptyCodeError(f"no code deployed at {address}")
    bytecode = parse_hex(result)
    return replace(bytecode, source_id=address)


def fetch_many(
    endpoint: str | None,
    addresses,
    timeout: float = DEFAULT_RPC_TIMEOUT,
    max_in_flight: int = 8,
) -> list[Bytecode]:
    """Concurrent fetch_code with a bounded pool; results in request order."""
    if endpoint is None:
        endpoint = default_endpoint()
    addresses = list(addresses)
    with ThreadPoolExecutor(max_workers=max(1, max_in_flight)) as pool:
        return list(pool.map(lambda a: fetch_code(endpoint, a, timeout), addresses))
