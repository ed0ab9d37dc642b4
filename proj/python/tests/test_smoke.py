# Copyright 2026 The selinf Authors.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

import json
import math
import pathlib
import shutil

import jsonschema
import pytest

import selinf

ROOT = pathlib.Path(__file__).resolve().parents[2]
SCHEMA = json.loads((ROOT / "schema" / "infer_result.schema.json").read_text())


@pytest.fixture()
def small_config(tmp_path):
    shutil.copy(ROOT / "configs" / "example_data.csv", tmp_path / "data.csv")
    cfg = {
        "data": "data.csv",
        "candidates": [
            {"id": "full", "terms": [{"linear": "x1"}, {"linear": "x2"}, {"linear": "x3"}]}
        ],
        "selection": {"procedure": "backward"},
        "inference": {
            "samples": 200,
            "seed": 3,
            "proposal_scale": 4.0,
            "min_congruent": 10,
            "targets": [{"coefficient": "x1"}, {"group": "x1"}],
        },
    }
    path = tmp_path / "config.json"
    path.write_text(json.dumps(cfg))
    return path


def test_infer_bundle_matches_schema(small_config):
    bundle, table = selinf.infer(str(small_config))
    data = json.loads(bundle)
    jsonschema.validate(data, SCHEMA)
    assert [r["target"] for r in data["results"]] == ["coefficient", "group"]
    assert "p-value" in table


def test_infer_is_deterministic(small_config):
    a = selinf.infer(str(small_config), workers=1)
    b = selinf.infer(str(small_config), workers=3)
    assert a == b
    c = selinf.infer_bundle(str(small_config), seed=4)
    assert c["provenance"]["seed"] == 4


def test_errors_map_to_exceptions(tmp_path, small_config):
    with pytest.raises(selinf.ConfigError):
        selinf.infer(str(tmp_path / "missing.json"))
    cfg = json.loads(small_config.read_text())
    cfg["inference"]["min_congruent"] = 10**6
    low = tmp_path / "low.json"
    low.write_text(json.dumps(cfg))
    with pytest.raises(selinf.LowCongruencyError):
        selinf.infer(str(low))
    with pytest.raises(selinf.SelinfError):
        selinf.simulate("lmm51", snr=3.0)


def test_select_and_fit(small_config):
    outcome = json.loads(selinf.select(str(small_config)))["outcome"]
    assert "x1" in outcome["fixed"]
    fits = json.loads(selinf.fit(str(small_config)))["fits"]
    assert fits[0]["status"] == "ok"


def test_truncated_normal_closed_form():
    # N(0, 1) truncated to T > 1: P(T > 2 | T > 1) = Phi(-2) / Phi(-1)
    phi = lambda x: 0.5 * math.erfc(-x / math.sqrt(2.0))
    got = selinf.truncated_normal_survival(2.0, 0.0, 1.0, [(1.0, math.inf)])
    assert got == pytest.approx(phi(-2.0) / phi(-1.0), rel=1e-10)
    # chi_2 survival is exp(-t^2 / 2)
    got = selinf.truncated_chi_survival(2.0, 1.0, 2, [(1.0, math.inf)])
    assert got == pytest.approx(math.exp(-2.0) / math.exp(-0.5), rel=1e-10)


def test_small_oracle_suite():
    cases = selinf.oracle_suite("normal", samples=20000, configs=2, workers=1)
    assert len(cases) == 6
    assert max(c["error"] for c in cases) < 0.02


def test_simulate_csv_columns():
    csv, report = selinf.simulate("lmm51", replicates=2, samples=20, workers=1)
    assert csv.splitlines()[0] == "setting,term,replicate,p_naive,p_selective,power_flag"
    assert json.loads(report)["design"]["design_id"] == "lmm51"


def test_ks_uniform():
    d, p = selinf.ks_uniform([(i + 0.5) / 200 for i in range(200)])
    assert d < 0.01 and p > 0.99
