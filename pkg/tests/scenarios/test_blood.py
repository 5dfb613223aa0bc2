"""Unit tests for the blood scenario."""

import unittest

from speckle_viscometry.experiment import plan_corpus
from speckle_viscometry.models import CriterionKind
from speckle_viscometry.scenarios.blood import blood


class TestBloodScenario(unittest.TestCase):
    """Tests for blood()."""

    def test_classes_and_split(self):
        """Test two classes with an 18/6 split."""
        scenario = blood()
        self.assertEqual([c.name for c in scenario.classes], ["uncoagulated", "coagulated"])
        self.assertTrue(scenario.classify)
        planned = plan_corpus(scenario)
        self.assertEqual(len(planned), 48)
        self.assertEqual(sum(p.entry.split == "train" for p in planned), 36)

    def test_criteria(self):
        """Test accuracy and cluster separation checks."""
        kinds = [c.kind for c in blood().criteria]
        self.assertEqual(kinds, [CriterionKind.accuracy, CriterionKind.v_separation])

    def test_replicate_viscosity_spread(self):
        """Test that replicates draw different viscosities around the class value."""
        planned = [p for p in plan_corpus(blood()) if p.entry.class_name == "coagulated"]
        viscosities = {p.entry.viscosity_pa_s for p in planned}
        self.assertEqual(len(viscosities), 24)
        self.assertTrue(all(2.0 < v < 50.0 for v in viscosities))


if __name__ == "__main__":
    unittest.main()
