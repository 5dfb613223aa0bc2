"""Unit tests for the dairy scenarios."""

import unittest

from speckle_viscometry.models import CriterionKind
from speckle_viscometry.registry import get_scenario
from speckle_viscometry.scenarios.milk import milk_adulteration, milk_fat


class TestMilkFat(unittest.TestCase):
    """Tests for milk_fat()."""

    def test_classes_rise_in_viscosity(self):
        """Test five grades ordered by viscosity."""
        scenario = milk_fat()
        names = [c.name for c in scenario.classes]
        self.assertEqual(names, ["skim", "one_percent", "two_percent", "whole", "cream"])
        viscosities = [c.liquid.viscosity_pa_s for c in scenario.classes]
        self.assertEqual(viscosities, sorted(viscosities))
        self.assertEqual(scenario.criteria[0].order, names)

    def test_classified_on_held_out_replicates(self):
        """Test the train/test split and the accuracy criterion."""
        scenario = milk_fat()
        self.assertTrue(scenario.classify)
        self.assertGreater(scenario.train_replicates, 0)
        self.assertLess(scenario.train_replicates, scenario.replicates)
        accuracy = [c for c in scenario.criteria if c.kind == CriterionKind.accuracy]
        self.assertEqual(len(accuracy), 1)
        self.assertGreaterEqual(accuracy[0].threshold, 0.9)

    def test_alias(self):
        """Test lookup by short name."""
        self.assertEqual(get_scenario("milk"), milk_fat())


class TestMilkAdulteration(unittest.TestCase):
    """Tests for milk_adulteration()."""

    def test_thickeners(self):
        """Test that thickeners are more viscous than the control."""
        scenario = milk_adulteration()
        eta = {c.name: c.liquid.viscosity_pa_s for c in scenario.classes}
        self.assertEqual(len(eta), 6)
        self.assertLess(eta["milk"], eta["cornstarch"])
        self.assertLess(eta["cornstarch"], eta["xanthan_gum"])
        self.assertLess(eta["water"], eta["milk"])
        self.assertEqual(scenario.criteria[0].order, ["milk", "cornstarch", "xanthan_gum"])

    def test_control_range_disjoint_from_adulterants(self):
        """Test that every adulterant is compared against the milk control."""
        scenario = milk_adulteration()
        separation = [c for c in scenario.criteria if c.kind == CriterionKind.v_separation]
        self.assertEqual(len(separation), 1)
        self.assertEqual(separation[0].order[0], "milk")
        self.assertEqual(sorted(separation[0].order), sorted(c.name for c in scenario.classes))
        eta = {c.name: c.liquid.viscosity_pa_s for c in scenario.classes}
        for name in ("water", "detergent", "salt"):
            self.assertLess(eta[name], 0.75 * eta["milk"])


if __name__ == "__main__":
    unittest.main()
