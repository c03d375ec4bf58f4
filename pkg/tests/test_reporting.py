import csv
import io
import json
import xml.etree.ElementTree as ET
from pathlib import Path

from fracdet.evaluation import evaluate
from fracdet.reporting import (
    curve_svg,
    f1_curves_csv,
    pr_curves_csv,
    render_table,
    report_to_json,
    write_curve_files,
)

from fixtures_eval import as_plain, golden_fixture
from oracles import evaluate_brute

GOLDEN_PATH = Path(__file__).parent / "data" / "golden_eval_report.json"


def fixture_report():
    preds, gts, class_names = golden_fixture()
    return evaluate(preds, gts, class_names)


class TestGoldenReport:
    def test_fixture_agrees_with_brute_force(self):
        preds, gts, class_names = golden_fixture()
        report = evaluate(preds, gts, class_names)
        p, g = as_plain(preds, gts)
        expected = evaluate_brute(p, g, len(class_names))
        for cls, r in enumerate(report.classes):
            assert r.ap50 == expected["ap50"][cls]
            assert r.ap50_95 == expected["ap50_95"][cls]
            assert r.precision == expected["precision"][cls]
            assert r.recall == expected["recall"][cls]
        assert report.overall.ap50 == expected["map50"]
        assert report.overall.ap50_95 == expected["map50_95"]

    def test_json_reproduces_golden_bytes(self):
        got = report_to_json(fixture_report()).encode("utf-8")
        assert got == GOLDEN_PATH.read_bytes()

    def test_json_is_deterministic(self):
        assert report_to_json(fixture_report()) == report_to_json(fixture_report())


class TestTable:
    def test_contains_all_rows_and_columns(self):
        table = render_table(fixture_report())
        lines = table.strip().splitlines()
        assert len(lines) == 1 + 1 + 2  # header + overall + two classes
        for col in ("Class", "Images", "Boxes", "Instances", "Precision", "Recall", "mAP50", "mAP50-95"):
            assert col in lines[0]
        assert lines[1].startswith("overall")
        assert lines[2].startswith("fracture")


class TestCurveCsv:
    def test_pr_rows_per_class(self):
        report = fixture_report()
        rows = list(csv.reader(io.StringIO(pr_curves_csv(report))))
        assert rows[0] == ["class", "recall", "precision"]
        for name, curve in report.pr_curves.items():
            class_rows = [r for r in rows[1:] if r[0] == name]
            # one row per distinct confidence plus the anchor endpoint
            assert len(class_rows) == len(curve.thresholds)

    def test_f1_rows_per_class(self):
        report = fixture_report()
        rows = list(csv.reader(io.StringIO(f1_curves_csv(report))))
        assert rows[0] == ["class", "confidence", "f1"]
        for name, curve in report.f1_curves.items():
            class_rows = [r for r in rows[1:] if r[0] == name]
            assert len(class_rows) == len(curve.thresholds)

    def test_csv_values_roundtrip(self):
        report = fixture_report()
        rows = list(csv.reader(io.StringIO(pr_curves_csv(report))))
        overall = report.pr_curves["overall"]
        got = [(float(r[1]), float(r[2])) for r in rows[1:] if r[0] == "overall"]
        assert got == list(zip(overall.recalls, overall.precisions))


class TestSvg:
    def test_wellformed_xml(self):
        svg = curve_svg([(0.0, 1.0), (0.5, 0.8), (1.0, 0.2)], "recall", "precision", "demo")
        root = ET.fromstring(svg)
        assert root.tag.endswith("svg")
        assert root.get("version") == "1.1"

    def test_write_curve_files(self, tmp_path):
        report = fixture_report()
        written = write_curve_files(report, tmp_path)
        names = {p.name for p in written}
        assert "pr_curve.csv" in names and "f1_curve.csv" in names
        # per class + overall SVGs for both curve families
        assert "pr_curve_overall.svg" in names
        assert "f1_curve_fracture.svg" in names
        assert "pr_curve_metal.svg" in names
        for p in written:
            if p.suffix == ".svg":
                ET.parse(p)  # raises on malformed XML

    def test_empty_curve_svg_still_valid(self):
        svg = curve_svg([], "x", "y", "empty")
        ET.fromstring(svg)


class TestJsonShape:
    def test_schema_and_curve_nulls(self):
        data = json.loads(report_to_json(fixture_report()))
        assert data["schema"] == "fracdet-eval-report/v1"
        assert data["overall"]["name"] == "overall"
        assert {c["name"] for c in data["classes"]} == {"fracture", "metal"}
        # the anchor threshold is serialized as null
        assert data["curves"]["pr"]["overall"]["thresholds"][0] is None
        assert "conventions" in data
