import math

import numpy as np
import pytest

from vlmnav.context import (
    ANTI_HALLUCINATION_PREAMBLE,
    CatalogEntry,
    ClassifierError,
    ColorVoteClassifier,
    ContextCatalog,
    OracleContextClassifier,
    build_behavior_prompt,
    build_prompt_bundle,
    classify_context,
    classify_patch_paved,
    default_catalog,
    load_catalog,
    normalize_scores,
)
from vlmnav.rendering import TERRAIN_COLORS
from vlmnav.world import SemanticWorld, TerrainClass, TerrainRegion


class FixedScoreClassifier:
    realtime = True

    def __init__(self, scores):
        self.scores = scores

    def context_scores(self, image, catalog):
        return self.scores

    def patch_paved(self, patch, ground_point_odom=None):
        return True


def region(cls, context=None, half=50.0):
    return TerrainRegion(
        ((-half, -half), (half, -half), (half, half), (-half, half)), cls, context
    )


def two_entry_catalog():
    return ContextCatalog(
        entries=(
            CatalogEntry("a", "scenario a", "do a"),
            CatalogEntry("b", "scenario b", "do b"),
        )
    )


class TestCatalog:
    def test_default_catalog_has_five_contexts(self):
        cat = default_catalog()
        assert len(cat) == 5
        assert cat.index_of("crosswalk") == 3

    def test_duplicate_phrases_rejected(self):
        with pytest.raises(ValueError):
            ContextCatalog(
                entries=(
                    CatalogEntry("a", "same", "x"),
                    CatalogEntry("b", "same", "y"),
                )
            )

    def test_empty_behavior_rejected(self):
        with pytest.raises(ValueError):
            ContextCatalog(entries=(CatalogEntry("a", "p", "  "),))

    def test_query_prompts_template(self):
        cat = two_entry_catalog()
        assert cat.query_prompts() == [
            "This is a picture of scenario a",
            "This is a picture of scenario b",
        ]

    def test_catalog_extensible_without_other_changes(self):
        # adding a context makes it selectable with no other edits
        base = default_catalog()
        extended = ContextCatalog(
            entries=base.entries
            + (CatalogEntry("construction", "a construction zone", "slow down"),)
        )
        world = SemanticWorld(
            terrain_regions=[region(TerrainClass.PAVEMENT, context="construction")]
        )
        clf = OracleContextClassifier(world, lambda: (0.0, 0.0))
        est = classify_context(clf, None, extended)
        assert est.context_id == "construction"
        assert est.behavior == "slow down"

    def test_load_catalog_rejects_unknown_fields(self, tmp_path):
        p = tmp_path / "cat.yaml"
        p.write_text(
            "version: 1\ncontexts:\n  - id: a\n    phrase: x\n    behavior: y\n    bogus: 1\n"
        )
        with pytest.raises(ValueError, match="bogus"):
            load_catalog(str(p))

    def test_load_catalog_round_trip(self, tmp_path):
        p = tmp_path / "cat.yaml"
        p.write_text(
            "version: 1\n"
            "contexts:\n"
            "  - id: corridor\n"
            "    phrase: an indoor corridor\n"
            "    behavior: keep close to the right wall\n"
            "    oracle_rule: keep_right\n"
            "    terrain_hints: [indoor_floor]\n"
        )
        cat = load_catalog(str(p))
        assert cat.entries[0].terrain_hints == (TerrainClass.INDOOR_FLOOR,)


class TestClassifyContext:
    def test_oracle_reads_declared_context(self):
        world = SemanticWorld(
            terrain_regions=[region(TerrainClass.CROSSWALK, context="crosswalk")]
        )
        clf = OracleContextClassifier(world, lambda: (1.0, 1.0))
        est = classify_context(clf, None, default_catalog())
        assert est.context_id == "crosswalk"
        assert est.probabilities[est.winner_index] == 1.0

    def test_tie_breaks_to_lowest_index(self):
        est = classify_context(FixedScoreClassifier([2.0, 2.0]), None, two_entry_catalog())
        assert est.probabilities == pytest.approx((0.5, 0.5))
        assert est.winner_index == 0

    def test_softmax_normalization(self):
        # independent hand computation: e = (e^1, e^3, e^6), p = e / sum(e)
        exp = [math.exp(1), math.exp(3), math.exp(6)]
        expected = [v / sum(exp) for v in exp]
        catalog = ContextCatalog(
            entries=(
                CatalogEntry("a", "pa", "x"),
                CatalogEntry("b", "pb", "y"),
                CatalogEntry("c", "pc", "z"),
            )
        )
        est = classify_context(FixedScoreClassifier([1.0, 3.0, 6.0]), None, catalog)
        assert est.probabilities == pytest.approx(expected, abs=1e-9)
        assert est.probabilities == pytest.approx((0.006377, 0.047123, 0.946499), abs=1e-5)
        assert est.winner_index == 2

    def test_probabilities_sum_to_one(self):
        rng = np.random.default_rng(0)
        for _ in range(100):
            scores = rng.uniform(-5, 5, rng.integers(1, 6)).tolist()
            probs = normalize_scores(scores)
            assert abs(probs.sum() - 1.0) <= 1e-6

    def test_winner_invariant_to_pre_softmax_shift(self):
        rng = np.random.default_rng(1)
        for _ in range(100):
            scores = rng.uniform(-5, 5, 5)
            shift = rng.uniform(-10, 10)
            a = int(np.argmax(normalize_scores(scores.tolist())))
            b = int(np.argmax(normalize_scores((scores + shift).tolist())))
            assert a == b

    def test_backend_failure_wrapped(self):
        class Exploder:
            realtime = True

            def context_scores(self, image, catalog):
                raise RuntimeError("boom")

        with pytest.raises(ClassifierError, match="boom"):
            classify_context(Exploder(), None, two_entry_catalog())

    def test_wrong_score_count_rejected(self):
        with pytest.raises(ClassifierError):
            classify_context(FixedScoreClassifier([1.0]), None, two_entry_catalog())

    def test_oracle_unknown_context_is_uniform(self):
        world = SemanticWorld(terrain_regions=[region(TerrainClass.GRASS)])
        clf = OracleContextClassifier(world, lambda: (0.0, 0.0))
        est = classify_context(clf, None, default_catalog())
        assert est.probabilities == pytest.approx((0.2,) * 5)
        assert est.winner_index == 0


class TestPrompts:
    def test_keep_right_prompt(self):
        text = build_behavior_prompt("keep close to the right wall")
        assert text.startswith(ANTI_HALLUCINATION_PREAMBLE)
        assert text.endswith("such that the robot keep close to the right wall")

    def test_move_on_pavement_prompt(self):
        text = build_behavior_prompt("move on pavement")
        assert text.endswith("such that the robot move on pavement")
        assert "numbers marked in the image" in text

    def test_empty_behavior_rejected(self):
        with pytest.raises(ValueError):
            build_behavior_prompt("")

    def test_bundle_has_no_unresolved_placeholders(self):
        bundle = build_prompt_bundle("stay on the crosswalk")
        assert "{}" not in bundle.behavior_prompt
        assert "stay on the crosswalk" in bundle.behavior_prompt

    def test_combined_prompt_covers_every_behavior(self):
        from vlmnav.context import build_combined_prompt

        catalog = default_catalog()
        prompt = build_combined_prompt(catalog)
        assert prompt.startswith(ANTI_HALLUCINATION_PREAMBLE)
        assert "{}" not in prompt
        for entry in catalog.entries:
            assert entry.behavior in prompt
            assert entry.phrase in prompt


class TestPatchClassification:
    def test_oracle_patch_paved(self):
        world = SemanticWorld(terrain_regions=[region(TerrainClass.PAVEMENT)])
        clf = OracleContextClassifier(world, lambda: (0.0, 0.0))
        assert classify_patch_paved(clf, None, ground_point_odom=(2.0, 0.0)) is True

    def test_oracle_patch_unpaved(self):
        world = SemanticWorld(terrain_regions=[region(TerrainClass.GRASS)])
        clf = OracleContextClassifier(world, lambda: (0.0, 0.0))
        assert classify_patch_paved(clf, None, ground_point_odom=(2.0, 0.0)) is False

    def test_color_vote_crosswalk_patch_is_paved(self):
        patch = np.zeros((200, 200, 3), dtype=np.uint8)
        patch[:] = TERRAIN_COLORS[TerrainClass.CROSSWALK]
        patch[:20] = TERRAIN_COLORS[TerrainClass.ASPHALT_ROAD]
        assert classify_patch_paved(ColorVoteClassifier(), patch) is True

    def test_color_vote_grass_patch_is_unpaved(self):
        patch = np.zeros((200, 200, 3), dtype=np.uint8)
        patch[:] = TERRAIN_COLORS[TerrainClass.GRASS]
        assert classify_patch_paved(ColorVoteClassifier(), patch) is False

    def test_color_vote_no_terrain_pixels_is_unpaved(self):
        patch = np.zeros((200, 200, 3), dtype=np.uint8)
        assert classify_patch_paved(ColorVoteClassifier(), patch) is False

    def test_color_vote_context_scores_use_hints(self):
        img = np.zeros((100, 100, 3), dtype=np.uint8)
        img[:50] = TERRAIN_COLORS[TerrainClass.CROSSWALK]
        img[50:] = TERRAIN_COLORS[TerrainClass.ASPHALT_ROAD]
        est = classify_context(ColorVoteClassifier(), img, default_catalog())
        assert est.context_id == "crosswalk"
