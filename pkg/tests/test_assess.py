"""Assessor, CSV formats, trace replay, and the CLI exit-code contract."""

import json

import pytest

from natsim import assess
from natsim import scenario as sc
from natsim.cli import main


def fast_doc(name, **kw):
    defaults = dict(ephemeral_range=(40000, 40063), port_range=(40000, 40063),
                    interleave_batch=16)
    defaults.update(kw)
    return sc.nat_scenario_doc(name, **defaults)


def small_set():
    return [
        sc.load_scenario(fast_doc("a-vuln", expect={"verdict": "nat-device",
                                                    "attack_success": True})),
        sc.load_scenario(fast_doc("b-strict", rst_handling="strict-validate",
                                  expect={"attack_success": False})),
    ]


class TestAssess:
    def test_csv_deterministic_across_invocations(self):
        _, csv1, _, _ = assess.assess(small_set())
        _, csv2, _, _ = assess.assess(small_set())
        assert csv1 == csv2

    def test_csv_columns_fixed(self):
        rows, csv, _, matched = assess.assess(small_set())
        lines = csv.strip().split("\n")
        assert lines[0] == assess.ASSESS_CSV_HEADER
        assert len(lines) == 3
        assert matched
        first = lines[1].split(",")
        assert first[0] == "a-vuln" and first[3] == "true"

    def test_rows_sorted_by_name(self):
        rows, _, _, _ = assess.assess(list(reversed(small_set())))
        assert [r.scenario for r in rows] == ["a-vuln", "b-strict"]

    def test_failing_scenario_becomes_row(self):
        doc = fast_doc("broken", force_attack=True)
        doc["workload"]["connections"] = 0
        rows, csv, _, matched = assess.assess([sc.load_scenario(doc)] + small_set())
        assert len(rows) == 3
        broken = [r for r in rows if r.scenario == "broken"][0]
        assert broken.error and "nothing-to-attack" in broken.error
        assert not matched  # the error counts against the suite
        assert "error" in csv

    def test_expectation_mismatch_detected(self):
        doc = fast_doc("wrong", expect={"attack_success": False})
        rows, _, _, matched = assess.assess([sc.load_scenario(doc)])
        assert not matched
        assert rows[0].expected_mismatch

    def test_packet_budget_identity_on_rows(self):
        rows, _, _, _ = assess.assess(small_set())
        for r in rows:
            if r.report is None:
                continue
            scn = {"a-vuln": 0, "b-strict": 1}[r.scenario]
            span = 40063 - 40000 + 1
            assert r.report.rst_packets_sent == 2 * span  # rounds=2
            assert r.report.push_ack_packets_sent == 2 * span


class TestReplay:
    def write_trace(self, tmp_path, doc, mode="attack"):
        scn = sc.load_scenario(doc)
        if mode == "attack":
            _, handles = assess.attack_scenario(scn)
        else:
            _, handles = assess.identify_scenario(scn)
        sink = assess.TraceFile()
        sink.add_section(scn, mode, handles.sim)
        path = tmp_path / "run.trace"
        sink.write(str(path))
        return path

    def test_identical(self, tmp_path):
        path = self.write_trace(tmp_path, fast_doc("r1"))
        result = assess.replay(str(path))
        assert result.identical and not result.version_mismatch
        assert result.describe() == "identical"

    def test_identify_mode_replays(self, tmp_path):
        path = self.write_trace(tmp_path, fast_doc("r2"), mode="identify")
        assert assess.replay(str(path)).identical

    def test_altered_seed_diverges(self, tmp_path):
        path = self.write_trace(tmp_path, fast_doc("r3"))
        text = path.read_text().replace("#seed 1", "#seed 99")
        path.write_text(text)
        result = assess.replay(str(path))
        assert not result.identical
        assert "line" in result.divergence

    def test_altered_policy_diverges_at_rst_handling(self, tmp_path):
        path = self.write_trace(tmp_path, fast_doc("r4"))
        text = path.read_text().replace('"rst_handling": "vulnerable-remove"',
                                        '"rst_handling": "forward-only"')
        path.write_text(text)
        result = assess.replay(str(path))
        assert not result.identical

    def test_version_mismatch_flagged_but_compared(self, tmp_path):
        path = self.write_trace(tmp_path, fast_doc("r5"))
        lines = path.read_text().splitlines()
        lines[0] = "#natsim-trace 0.0.0"
        path.write_text("\n".join(lines) + "\n")
        result = assess.replay(str(path))
        assert result.version_mismatch
        assert result.identical  # comparison still attempted and clean

    def test_empty_file_rejected(self, tmp_path):
        path = tmp_path / "empty.trace"
        path.write_text("")
        with pytest.raises(sc.ScenarioError):
            assess.replay(str(path))


class TestCli:
    def scenario_file(self, tmp_path, doc):
        path = tmp_path / f"{doc['name']}.json"
        path.write_text(json.dumps(doc))
        return str(path)

    def test_identify_ok(self, tmp_path, capsys):
        rc = main(["identify", self.scenario_file(tmp_path, fast_doc("c1")), "--quiet"])
        assert rc == 0

    def test_attack_csv_and_trace(self, tmp_path):
        csv = tmp_path / "out.csv"
        trace = tmp_path / "out.trace"
        rc = main(["attack", self.scenario_file(tmp_path, fast_doc("c2")), "--quiet",
                   "--csv", str(csv), "--trace", str(trace)])
        assert rc == 0
        lines = csv.read_text().strip().split("\n")
        assert lines[0] == assess.STRIKE_CSV_HEADER
        assert lines[1].split(",")[2] == "true"
        rc = main(["replay", str(trace)])
        assert rc == 0

    def test_attack_repeat_rows(self, tmp_path):
        csv = tmp_path / "out.csv"
        rc = main(["attack", self.scenario_file(tmp_path, fast_doc("c3")), "--quiet",
                   "--repeat", "3", "--csv", str(csv)])
        assert rc == 0
        assert len(csv.read_text().strip().split("\n")) == 4

    def test_assess_exit_codes(self, tmp_path):
        good = self.scenario_file(tmp_path, fast_doc(
            "c4", expect={"attack_success": True}))
        assert main(["assess", good, "--quiet"]) == 0
        bad = self.scenario_file(tmp_path, fast_doc(
            "c5", expect={"attack_success": False}))
        assert main(["assess", bad, "--quiet"]) == 2

    def test_config_error_exit_code(self, tmp_path):
        doc = fast_doc("c6")
        doc["nat"]["rst_handling"] = "nope"
        assert main(["identify", self.scenario_file(tmp_path, doc)]) == 1
        assert main(["identify", str(tmp_path / "missing.json")]) == 1

    def test_assess_directory(self, tmp_path):
        self.scenario_file(tmp_path, fast_doc("c7", expect={"attack_success": True}))
        self.scenario_file(tmp_path, fast_doc(
            "c8", rst_handling="forward-only", expect={"attack_success": False}))
        assert main(["assess", str(tmp_path), "--quiet"]) == 0

    def test_identify_csv_format(self, tmp_path):
        csv = tmp_path / "probe.csv"
        main(["identify", self.scenario_file(tmp_path, fast_doc("c9")), "--quiet",
              "--csv", str(csv)])
        lines = csv.read_text().strip().split("\n")
        assert lines[0] == assess.PROBE_CSV_HEADER
        assert lines[1].startswith("6.6.6.6,nat-device,")
