"""End-to-end tests driving the installed cvm CLI as a subprocess."""

import json
import random
import shutil

import pytest

from cvm_frontend import (
    Dataflow,
    EngineError,
    EngineHandle,
    LINEITEM_FIELDS,
    build_q6,
    result_rows,
)

pytestmark = pytest.mark.skipif(shutil.which("cvm") is None, reason="cvm CLI not on PATH")


def _random_lineitem_rows(n: int, seed: int) -> list[dict]:
    rng = random.Random(seed)
    rows = []
    for _ in range(n):
        rows.append(
            {
                "l_shipdate": rng.randint(8700, 9300),
                "l_discount": rng.randint(0, 10) / 100.0,
                "l_quantity": float(rng.randint(1, 50)),
                "l_eprice": rng.randint(90000, 10_500_000) / 100.0,
            }
        )
        rows[-1]["l_disc"] = rows[-1]["l_discount"]
    return rows


@pytest.fixture(scope="module")
def flow():
    return Dataflow.source("lineitem", LINEITEM_FIELDS)


class TestRunQ6:
    def test_document_passes_check(self):
        EngineHandle().check(build_q6())  # raises on failure

    def test_ref_vs_mt_within_tolerance(self, flow):
        rows = _random_lineitem_rows(3000, 13)
        doc = build_q6()
        handle = EngineHandle()
        ref_out = handle.run(doc, flow.dataset_document(rows, "bag"), passes="", backend="ref")
        mt_out = handle.run(
            doc, flow.dataset_document(rows, "vec"), passes="parallelize:4,lower,extract_pipelines",
            backend="mt", workers=4,
        )
        ref_rev = result_rows(ref_out)[0]["revenue"]
        mt_rev = result_rows(mt_out)[0]["revenue"]
        assert ref_rev != 0.0
        assert abs(ref_rev - mt_rev) <= 1e-9 * abs(ref_rev)

    def test_empty_dataset_gives_zero_revenue(self, flow):
        handle = EngineHandle()
        out = handle.run(build_q6(), flow.dataset_document([], "vec"))
        assert result_rows(out) == [{"revenue": 0.0}]

    def test_invalid_document_maps_exit_1(self):
        doc = build_q6()
        doc = json.loads(json.dumps(doc).replace('"t0"', '"lineitem"'))  # SSA violation
        with pytest.raises(EngineError) as err:
            EngineHandle().run(doc, Dataflow.source("lineitem", LINEITEM_FIELDS).dataset_document([], "bag"), passes="", backend="ref")
        assert err.value.exit_code == 1
        assert err.value.error and "error" in err.value.error

    def test_runtime_error_maps_exit_2(self):
        from cvm_frontend import col, lit

        t = Dataflow.source("t", [("a", "int64")])
        bad = t.select_extended(x=lit(1) / (col("a") - col("a"))).document()
        with pytest.raises(EngineError) as err:
            EngineHandle().run(bad, t.dataset_document([{"a": 5}], "bag"), passes="", backend="ref")
        assert err.value.exit_code == 2
        assert err.value.error["error"]["code"] == "DivisionByZero"

    def test_custom_chain_end_to_end(self):
        from cvm_frontend import col, lit

        t = Dataflow.source("t", [("k", "int64"), ("v", "float64")])
        q = t.filter((col("k") % lit(2)).eq(lit(0))).aggregate(
            ("v", "sum", "total"), ("v", "count", "n")
        )
        rows = [{"k": i, "v": float(i)} for i in range(10)]
        out = EngineHandle().run(q.document(), t.dataset_document(rows, "bag"), passes="", backend="ref")
        got = result_rows(out)[0]
        assert got == {"total": 20.0, "n": 5}

    def test_missing_binary_raises(self, monkeypatch, flow):
        monkeypatch.setenv("CVM_BIN", "/nonexistent/cvm-binary")
        handle = EngineHandle(binary=("/nonexistent/cvm-binary",))
        with pytest.raises(FileNotFoundError):
            handle.run(build_q6(), flow.dataset_document([], "bag"), passes="", backend="ref")
