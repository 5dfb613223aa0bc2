"""Unit tests for the speckle command line."""

import io
import json
import os
import tempfile
import unittest
from unittest.mock import patch

import numpy as np
import pandas as pd

from speckle_viscometry import cli, framestore
from speckle_viscometry.frames import RgbSequence
from speckle_viscometry.stores import MemoryStore

SIM_CONFIG = {
    "viscosity_pa_s": 1e-3,
    "particle_radius_m": 1e-6,
    "temperature_k": 293.15,
    "opacity": 1.0,
    "wavelength_m": 800e-9,
    "width": 32,
    "height": 32,
    "pixels_per_meter": 5e6,
    "frames": 12,
    "fps": 30.0,
    "seed": 3,
    "particle_count": 200,
}


class CliTestCase(unittest.TestCase):
    """Temporary workspace for command runs."""

    def setUp(self):
        """Create the workspace."""
        self.tmp = tempfile.TemporaryDirectory()
        self.root = self.tmp.name

    def tearDown(self):
        """Remove the workspace."""
        self.tmp.cleanup()

    def path(self, *parts: str) -> str:
        """Path inside the workspace."""
        return os.path.join(self.root, *parts)

    def write(self, name: str, text: str) -> str:
        """Write a file into the workspace."""
        with open(self.path(name), "w", encoding="utf-8") as f:
            f.write(text)
        return self.path(name)

    def run_cli(self, *argv: str) -> tuple[int, str]:
        """Run main and capture stdout."""
        with patch("sys.stdout", new_callable=io.StringIO) as stdout:
            code = cli.main(list(argv))
        return code, stdout.getvalue()


class TestSimulateAndAnalyze(CliTestCase):
    """Tests for sim, distort, stabilize and analyze."""

    def setUp(self):
        """Write the simulation config."""
        super().setUp()
        self.config = self.write("sim.json", json.dumps(SIM_CONFIG))

    def test_sim_and_analyze(self):
        """Test a simulated sequence analyzed to a curve."""
        self.assertEqual(self.run_cli("sim", self.config, "--out", self.path("seq"))[0], 0)
        self.assertEqual(len(framestore.read_sequence(self.path("seq"))), 12)
        code, stdout = self.run_cli("analyze", self.path("seq"), "--crop", "full")
        self.assertEqual(code, 0)
        curve = json.loads(stdout)
        self.assertEqual(curve["coefficients"][0], 1.0)
        self.assertEqual(curve["viscosity_coefficient"], curve["coefficients"][1])

    def test_seed_override(self):
        """Test that --seed changes the frames."""
        self.run_cli("sim", self.config, "--out", self.path("a"))
        self.run_cli("sim", self.config, "--out", self.path("b"), "--seed", "99")
        a = framestore.read_sequence(self.path("a")).frames
        b = framestore.read_sequence(self.path("b")).frames
        self.assertFalse(np.array_equal(a, b))

    def test_analyze_with_selection_and_region(self):
        """Test explicit selection and region files."""
        self.run_cli("sim", self.config, "--out", self.path("seq"))
        selection = self.write("selection.json", json.dumps({"indices": [0, 2, 4, 6]}))
        region = self.write("region.json", json.dumps({"cx": 16, "cy": 16, "width": 8, "height": 8}))
        code, stdout = self.run_cli("analyze", self.path("seq"), "--selection", selection, "--region", region)
        self.assertEqual(code, 0)
        curve = json.loads(stdout)
        self.assertEqual(curve["frame_indices"], [0, 2, 4, 6])
        self.assertEqual(curve["crop"]["width"], 8)

    def test_distort_log(self):
        """Test that distortion writes frames and the artifact log."""
        self.run_cli("sim", self.config, "--out", self.path("seq"))
        code, _ = self.run_cli("distort", self.path("seq"), self.path("captured"), "--log", self.path("log.json"))
        self.assertEqual(code, 0)
        self.assertEqual(len(framestore.read_sequence(self.path("captured"))), 12)
        with open(self.path("log.json"), encoding="utf-8") as f:
            log = json.load(f)
        self.assertEqual(sorted(log), ["bar_frames", "dark_frames", "skewed_frames"])
        self.assertTrue(log["dark_frames"])

    def test_stabilize_flickering_capture(self):
        """Test that only frames lit by the flicker are selected."""
        rng = np.random.default_rng(13)
        frames = rng.integers(0, 150, size=(30, 64, 64)) + np.where(np.arange(30) % 2 == 0, 50, 0)[:, None, None]
        framestore.write_sequence(list(frames.astype(np.uint8)), self.path("flicker"))
        code, _ = self.run_cli("stabilize", self.path("flicker"), "--out", self.path("out", "selection.json"))
        self.assertEqual(code, 0)
        with open(self.path("out", "selection.json"), encoding="utf-8") as f:
            indices = json.load(f)["indices"]
        self.assertEqual(len(indices), 10)
        self.assertTrue(all(i % 2 == 0 for i in indices))

    def test_distort_config_and_curve_file(self):
        """Test a lighting-only distortion config and a curve written to a file."""
        self.run_cli("sim", self.config, "--out", self.path("seq"))
        config = self.write("capture.json", json.dumps({"flicker": False, "bars": False, "skew": False}))
        code, _ = self.run_cli("distort", self.path("seq"), self.path("lit"), "--config", config, "--seed", "4")
        self.assertEqual(code, 0)
        code, stdout = self.run_cli("analyze", self.path("lit"), "--crop", "full", "--out", self.path("curve.json"))
        self.assertEqual((code, stdout), (0, ""))
        with open(self.path("curve.json"), encoding="utf-8") as f:
            self.assertEqual(json.load(f)["coefficients"][0], 1.0)

    def test_missing_out_and_config(self):
        """Test validation exit codes."""
        self.assertEqual(self.run_cli("sim", self.config)[0], 2)
        self.assertEqual(self.run_cli("sim", self.path("absent.json"), "--out", self.path("x"))[0], 2)
        bad = self.write("bad.json", json.dumps({**SIM_CONFIG, "width": 4}))
        self.assertEqual(self.run_cli("sim", bad, "--out", self.path("x"))[0], 2)
        self.assertEqual(self.run_cli("analyze", self.path("absent"))[0], 2)

    def test_analysis_failures(self):
        """Test analysis exit codes for flat and too short captures."""
        framestore.write_sequence([np.full((16, 16), 5, dtype=np.uint8)] * 12, self.path("flat"))
        self.assertEqual(self.run_cli("analyze", self.path("flat"))[0], 3)
        rng = np.random.default_rng(0)
        framestore.write_sequence(
            [rng.integers(0, 256, size=(16, 16), dtype=np.uint8) for _ in range(20)], self.path("short")
        )
        self.assertEqual(self.run_cli("stabilize", self.path("short"))[0], 3)


class TestPreprocess(CliTestCase):
    """Tests for channel extraction and trimming."""

    def test_blue_and_trim(self):
        """Test the blue plane with transients removed."""
        rng = np.random.default_rng(2)
        rgb = RgbSequence(rng.integers(0, 256, size=(20, 4, 5, 3), dtype=np.uint8), fps=2.0, shutter_s=0.5)
        framestore.write_rgb_sequence(rgb, self.path("rgb"))
        code, _ = self.run_cli(
            "preprocess", self.path("rgb"), "--leading", "2", "--trailing", "1", "--out", self.path("gray")
        )
        self.assertEqual(code, 0)
        np.testing.assert_array_equal(framestore.read_sequence(self.path("gray")).frames, rgb.frames[4:18, :, :, 2])

    def test_too_short(self):
        """Test trimming away too much."""
        rgb = RgbSequence(np.zeros((20, 4, 5, 3), dtype=np.uint8), fps=2.0, shutter_s=0.5)
        framestore.write_rgb_sequence(rgb, self.path("rgb"))
        self.assertEqual(self.run_cli("preprocess", self.path("rgb"), "--out", self.path("gray"))[0], 2)


class TestCalibration(CliTestCase):
    """Tests for calibrate and viscosity."""

    def setUp(self):
        """Write points from a known cubic."""
        super().setUp()
        v = np.linspace(0.1, 0.9, 9)
        frame = pd.DataFrame({"V": v, "viscosity_cp": 2 * v**3 - v + 1})
        self.points = self.path("points.csv")
        frame.to_csv(self.points, index=False)

    def test_calibrate_and_apply(self):
        """Test the model file round trip."""
        self.assertEqual(self.run_cli("calibrate", "--points", self.points, "--out", self.path("model.json"))[0], 0)
        code, stdout = self.run_cli("viscosity", "--model", self.path("model.json"), "--v", "0.5")
        self.assertEqual(code, 0)
        result = json.loads(stdout)
        self.assertAlmostEqual(result["viscosity_cp"], 0.75, places=6)
        self.assertFalse(result["out_of_range"])

    @patch("speckle_viscometry.registry.STORE", new_callable=MemoryStore)
    def test_stored_class(self, store):
        """Test storing and applying a class calibration."""
        code, stdout = self.run_cli("calibrate", "--points", self.points, "--liquid-class", "syrup")
        self.assertEqual(code, 0)
        self.assertEqual(json.loads(stdout)["liquid_class"], "syrup")
        self.assertIsNotNone(store.load_json("calibration/syrup.json"))
        code, stdout = self.run_cli("viscosity", "--liquid-class", "syrup", "--v", "0.95")
        self.assertEqual(code, 0)
        self.assertTrue(json.loads(stdout)["out_of_range"])
        self.assertEqual(self.run_cli("viscosity", "--liquid-class", "oil", "--v", "0.5")[0], 3)

    @patch("speckle_viscometry.registry.STORE", new=None)
    def test_stored_class_needs_configured_store(self):
        """Test that class calibrations are not written to an unconfigured location."""
        self.assertEqual(self.run_cli("calibrate", "--points", self.points, "--liquid-class", "syrup")[0], 2)
        self.assertEqual(self.run_cli("viscosity", "--liquid-class", "syrup", "--v", "0.5")[0], 2)

    def test_errors(self):
        """Test missing model, too few points and a bad file."""
        self.assertEqual(self.run_cli("viscosity", "--v", "0.5")[0], 2)
        few = self.write("few.csv", "V,viscosity_cp\n0.1,1\n0.2,2\n")
        self.assertEqual(self.run_cli("calibrate", "--points", few)[0], 3)
        self.assertEqual(self.run_cli("calibrate", "--points", self.path("absent.csv"))[0], 2)


class TestClassify(CliTestCase):
    """Tests for classify train and eval."""

    def setUp(self):
        """Write still and fluctuating sequences with train and test manifests."""
        super().setUp()
        rng = np.random.default_rng(4)
        still = rng.integers(0, 256, size=(64, 64))
        for replicate in range(2):
            frames = [np.clip(still + rng.integers(-2, 3, size=(64, 64)), 0, 255).astype(np.uint8) for _ in range(11)]
            framestore.write_sequence(frames, self.path(f"still_{replicate}"))
            frames = [rng.integers(0, 256, size=(64, 64), dtype=np.uint8) for _ in range(11)]
            framestore.write_sequence(frames, self.path(f"moving_{replicate}"))
        for split, replicate in (("train", 0), ("test", 1)):
            entries = [
                {"dir": f"still_{replicate}", "label": 0, "class_name": "still"},
                {"dir": f"moving_{replicate}", "label": 1, "class_name": "moving"},
            ]
            self.write(f"{split}.json", json.dumps(entries))

    def test_train_and_eval(self):
        """Test a trained model evaluated on held-out sequences."""
        code, _ = self.run_cli(
            "classify", "train", "--manifest", self.path("train.json"), "--out", self.path("svm.json")
        )
        self.assertEqual(code, 0)
        code, _ = self.run_cli(
            "classify",
            "eval",
            "--manifest",
            self.path("test.json"),
            "--model",
            self.path("svm.json"),
            "--out",
            self.path("confusion.csv"),
        )
        self.assertEqual(code, 0)
        confusion = pd.read_csv(self.path("confusion.csv"), index_col=0)
        self.assertEqual(confusion.index.tolist(), ["still", "moving"])
        self.assertEqual(int(np.trace(confusion.to_numpy())), 18)

    def test_grouped_eval_to_stdout(self):
        """Test a regrouped matrix printed as CSV."""
        self.run_cli("classify", "train", "--manifest", self.path("train.json"), "--out", self.path("svm.json"))
        groups = self.write("groups.json", json.dumps({"0": 0, "1": 0}))
        code, stdout = self.run_cli(
            "classify",
            "eval",
            "--manifest",
            self.path("test.json"),
            "--model",
            self.path("svm.json"),
            "--groups",
            groups,
        )
        self.assertEqual(code, 0)
        self.assertIn("18", stdout)

    def test_malformed_groups_rejected(self):
        """Test group files that are not a mapping of integer labels to integer groups."""
        self.run_cli("classify", "train", "--manifest", self.path("train.json"), "--out", self.path("svm.json"))
        for index, document in enumerate(('{"0": "viscous", "1": 0}', '{"zero": 0}', "[0, 1]", "{not json")):
            groups = self.write(f"groups_{index}.json", document)
            code, _ = self.run_cli(
                "classify",
                "eval",
                "--manifest",
                self.path("test.json"),
                "--model",
                self.path("svm.json"),
                "--groups",
                groups,
            )
            self.assertEqual(code, 2, document)

    def test_train_to_stdout(self):
        """Test that without --out the model is printed."""
        code, stdout = self.run_cli("classify", "train", "--manifest", self.path("train.json"), "--C", "5")
        self.assertEqual(code, 0)
        model = json.loads(stdout)
        self.assertEqual((model["classes"], model["C"]), ([0, 1], 5.0))

    def test_unwritable_output(self):
        """Test that a confusion matrix aimed at a directory fails validation."""
        self.run_cli("classify", "train", "--manifest", self.path("train.json"), "--out", self.path("svm.json"))
        code, _ = self.run_cli(
            "classify",
            "eval",
            "--manifest",
            self.path("test.json"),
            "--model",
            self.path("svm.json"),
            "--out",
            self.root,
        )
        self.assertEqual(code, 2)

    def test_overlap_rejected(self):
        """Test evaluating on the training sequences."""
        self.run_cli("classify", "train", "--manifest", self.path("train.json"), "--out", self.path("svm.json"))
        code, _ = self.run_cli(
            "classify", "eval", "--manifest", self.path("train.json"), "--model", self.path("svm.json")
        )
        self.assertEqual(code, 2)


class TestScenarios(CliTestCase):
    """Tests for scenario commands."""

    def test_list(self):
        """Test the registered names."""
        code, stdout = self.run_cli("scenarios")
        self.assertEqual(code, 0)
        names = stdout.split()
        self.assertIn("milk_fat", names)
        self.assertIn("benchmark_surface", names)

    def test_dump_alias_with_seed(self):
        """Test dumping a scenario by alias with a seed override."""
        code, stdout = self.run_cli("scenarios", "milk", "--seed", "5")
        self.assertEqual(code, 0)
        document = json.loads(stdout)
        self.assertEqual((document["name"], document["seed"]), ("milk_fat", 5))

    def test_unknown_scenario(self):
        """Test an unknown name."""
        self.assertEqual(self.run_cli("experiment", "nope", "--out", self.path("run"))[0], 2)
        self.assertEqual(self.run_cli("corpus", "milk")[0], 2)

    @patch("speckle_viscometry.registry.STORE", new_callable=MemoryStore)
    def test_corpus_and_benchmark_from_file(self, store):
        """Test corpus synthesis and a two-setting sweep from a scenario file."""
        scenario = {
            "name": "cli_sweep",
            "classes": [
                {"name": "water", "label": 0, "liquid": {"viscosity_pa_s": 1e-3}},
                {"name": "syrup", "label": 1, "liquid": {"viscosity_pa_s": 1e-1}},
            ],
            "optics": {"width": 32, "height": 32, "frames": 12, "particle_count": 300},
            "variants": [{"name": "slow"}, {"name": "fast", "optics": {"fps": 60.0}}],
        }
        path = self.write("sweep.json", json.dumps(scenario))
        self.assertEqual(self.run_cli("corpus", path, "--out", self.path("corpus"))[0], 0)
        self.assertTrue(os.path.isfile(self.path("corpus", "fast", "syrup", "rep_00", "metadata.json")))
        code, stdout = self.run_cli("benchmark", path, "--out", self.path("run"))
        self.assertEqual(code, 0)
        table = pd.read_csv(io.StringIO(stdout))
        self.assertEqual(table["variant"].tolist(), ["fast", "slow"])
        self.assertEqual(len(store.load_table("cli_sweep/benchmark")), 2)

    @patch("speckle_viscometry.registry.STORE", new_callable=MemoryStore)
    def test_experiment_from_file(self, store):
        """Test a scenario JSON file run end to end."""
        scenario = {
            "name": "cli_tiny",
            "classes": [
                {"name": "water", "label": 0, "liquid": {"viscosity_pa_s": 1e-3}},
                {"name": "syrup", "label": 1, "liquid": {"viscosity_pa_s": 1e-1}},
            ],
            "optics": {"width": 32, "height": 32, "frames": 12, "particle_count": 300},
            "criteria": [{"name": "order", "kind": "v_order", "order": ["water", "syrup"]}],
        }
        path = self.write("scenario.json", json.dumps(scenario))
        code, stdout = self.run_cli("experiment", path, "--out", self.path("run"))
        self.assertEqual(code, 0)
        self.assertTrue(stdout.startswith("PASS order"))
        self.assertTrue(os.path.isfile(self.path("run", "report.json")))


if __name__ == "__main__":
    unittest.main()
