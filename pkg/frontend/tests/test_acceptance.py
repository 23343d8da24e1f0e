"""Frontend acceptance: builder fidelity, end-to-end execution, error mapping."""

import json
import pathlib
import random
import shutil

import pytest

from cvm_frontend import (
    Dataflow,
    EngineError,
    EngineHandle,
    LINEITEM_FIELDS,
    build_q6,
    documents_structurally_equal,
    result_rows,
)

BUNDLED = pathlib.Path(__file__).resolve().parents[2] / "programs" / "q6.json"

pytestmark = pytest.mark.skipif(shutil.which("cvm") is None, reason="cvm CLI not on PATH")


def test_criterion_11_frontend():
    flow = Dataflow.source("lineitem", LINEITEM_FIELDS)
    doc = build_q6()

    bundled = json.loads(BUNDLED.read_text())
    assert documents_structurally_equal(doc, bundled), "builder output differs from the bundled document"

    rng = random.Random(7)
    rows = []
    for _ in range(2500):
        discount = rng.randint(0, 10) / 100.0
        rows.append(
            {
                "l_shipdate": rng.randint(8700, 9300),
                "l_discount": discount,
                "l_quantity": float(rng.randint(1, 50)),
                "l_eprice": rng.randint(90000, 10_500_000) / 100.0,
                "l_disc": discount,
            }
        )
    handle = EngineHandle()
    ref = handle.run(doc, flow.dataset_document(rows, "bag"), passes="", backend="ref")
    mt = handle.run(doc, flow.dataset_document(rows, "vec"), backend="mt", workers=4)
    ref_rev = result_rows(ref)[0]["revenue"]
    mt_rev = result_rows(mt)[0]["revenue"]
    assert ref_rev != 0.0 and abs(ref_rev - mt_rev) <= 1e-9 * abs(ref_rev)

    broken = json.loads(json.dumps(doc).replace('"t0"', '"lineitem"'))
    with pytest.raises(EngineError) as err:
        handle.run(broken, flow.dataset_document([], "bag"), passes="", backend="ref")
    assert err.value.exit_code == 1

    print(
        f"\n[PASS] criterion 11: builder matches bundled document; "
        f"ref/mt revenue {ref_rev!r} vs {mt_rev!r}; engine errors map to exit codes"
    )
