"""Engine driver: shells out to the cvm CLI with JSON file handoff.

All semantics live in the engine process; this module only writes documents,
invokes `cvm rewrite` / `cvm run`, and parses the JSON that comes back. The
binary is located through the constructor argument or the CVM_BIN environment
variable, falling back to `cvm` on PATH.
"""

from __future__ import annotations

import json
import os
import shlex
import subprocess
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

BIN_ENV = "CVM_BIN"
DEFAULT_PASSES = "parallelize:4,lower,extract_pipelines"


class EngineError(Exception):
    """Nonzero engine exit; carries the exit code and parsed stderr JSON."""

    def __init__(self, exit_code: int, error: dict | None, stderr: str):
        detail = error.get("error", {}).get("message") if error else stderr.strip()
        super().__init__(f"engine exited with {exit_code}: {detail}")
        self.exit_code = exit_code
        self.error = error
        self.stderr = stderr


def _binary() -> list[str]:
    configured = os.environ.get(BIN_ENV, "cvm")
    return shlex.split(configured)


@dataclass(frozen=True)
class EngineHandle:
    """How to reach the engine and the default execution configuration."""

    binary: tuple[str, ...] = field(default_factory=lambda: tuple(_binary()))
    passes: str = DEFAULT_PASSES
    backend: str = "mt"
    workers: int = 4

    def _invoke(self, args: list[str]) -> subprocess.CompletedProcess:
        proc = subprocess.run(
            list(self.binary) + args,
            capture_output=True,
            text=True,
        )
        if proc.returncode != 0:
            try:
                error = json.loads(proc.stderr)
            except json.JSONDecodeError:
                error = None
            raise EngineError(proc.returncode, error, proc.stderr)
        return proc

    def check(self, document: dict) -> None:
        with tempfile.TemporaryDirectory(prefix="cvmfe_") as tmp:
            doc_path = Path(tmp) / "program.json"
            doc_path.write_text(json.dumps(document, indent=2) + "\n")
            self._invoke(["check", str(doc_path)])

    def run(
        self,
        document: dict,
        data: dict,
        passes: str | None = None,
        backend: str | None = None,
        workers: int | None = None,
    ) -> dict:
        """Rewrite (unless the pass list is empty) and execute a document.

        `data` is a values file object ({"format_version": 1, "values": [...]})
        with one value per program parameter. Returns the parsed output file.
        """
        passes = self.passes if passes is None else passes
        backend = self.backend if backend is None else backend
        workers = self.workers if workers is None else workers
        with tempfile.TemporaryDirectory(prefix="cvmfe_") as tmp:
            tmp_path = Path(tmp)
            doc_path = tmp_path / "program.json"
            doc_path.write_text(json.dumps(document, indent=2) + "\n")
            data_path = tmp_path / "input.json"
            data_path.write_text(json.dumps(data, indent=2) + "\n")
            out_path = tmp_path / "output.json"

            run_target = doc_path
            if passes:
                rewritten = tmp_path / "rewritten.json"
                self._invoke(["rewrite", str(doc_path), "--passes", passes, "-o", str(rewritten)])
                run_target = rewritten
            self._invoke(
                [
                    "run",
                    str(run_target),
                    "--backend",
                    backend,
                    "--workers",
                    str(workers),
                    "--input",
                    str(data_path),
                    "--output",
                    str(out_path),
                ]
            )
            return json.loads(out_path.read_text())


def result_rows(output: dict) -> list[dict]:
    """Flatten the first returned value into rows keyed by field name.

    Understands bag/seq collections of tuples and the materialized
    Single<Vec<tuple>> layout lowered programs return.
    """
    value = output["values"][0]
    if value["coll"] == "single" and value["items"] and value["items"][0].get("coll") == "vec":
        value = value["items"][0]
    rows = []
    for item in value["items"]:
        rows.append({name: fv["value"] for name, fv in item["fields"]})
    return rows
