import json
from pathlib import Path

import jsonschema
import numpy as np

from almost_mathieu import core
from almost_mathieu.cli import load_schema
from almost_mathieu.verify import CHECKS, gap_neighbour_distance, mutation, sub_rng, verify_all

GOLDEN_FILE = Path(__file__).parent / "golden" / "verify_report_structure.json"


def test_report_structure_matches_golden_file():
    golden = json.loads(GOLDEN_FILE.read_text())
    rep = verify_all("quick", seed=3, only=["gordon_inequality", "duality_scaling"])
    jsonschema.validate(json.loads(json.dumps(rep)), load_schema("verify"))
    assert sorted(rep) == golden["report_keys"]
    assert all(sorted(c) == golden["check_keys"] for c in rep["checks"])
    assert [[n, k] for n, k, _ in CHECKS] == golden["checks"]
    assert sorted(rep["tolerances"]) == golden["tolerance_keys"]


def test_seeded_checks_reproducible():
    a = verify_all("quick", seed=11, only=["determinant_identity", "gordon_inequality"])
    b = verify_all("quick", seed=11, only=["determinant_identity", "gordon_inequality"])
    assert [c["detail"] for c in a["checks"]] == [c["detail"] for c in b["checks"]]
    assert sub_rng(5, "x").random() == sub_rng(5, "x").random()
    assert sub_rng(5, "x").random() != sub_rng(5, "y").random()


def test_mutation_restores_and_fails():
    original = core.transfer_step
    rep = verify_all("quick", mutate="flip-transfer-sign", only=["determinant_identity"])
    assert core.transfer_step is original
    assert not rep["passed"] and rep["hard_failures"] == ["determinant_identity"]
    with mutation("flip-transfer-sign"):
        assert core.transfer_step is not original
    assert core.transfer_step is original


def test_gap_neighbour_distance():
    g = np.array([[0.0, 1.0, 1.0], [3.0, 4.0, 1.0], [4.5, 5.0, 0.5]])
    assert list(gap_neighbour_distance(g)) == [2.0, 0.5, 0.5]
