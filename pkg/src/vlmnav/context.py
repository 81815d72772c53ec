"""Environment context classification and behavior prompt construction.

A :class:`ContextCatalog` pairs each context phrase with one behavior
phrase. A classifier backend scores the catalog contexts for the current
camera view; scores are normalized to a probability simplex and the winner
selects the behavior used to prompt the large VLM.

Three backends are provided: a ground-truth oracle that reads the declared
context under the robot (deterministic tests), a color-vote reference
classifier over rendered images (offline, deterministic), and a generic
remote HTTP service for CLIP-style models.
"""

from __future__ import annotations

import base64
import io
import os
from dataclasses import dataclass
from typing import Callable, Protocol, Sequence

import numpy as np
import yaml

from .rendering import color_to_terrain
from .world import PAVED_CLASSES, SemanticWorld, TerrainClass, context_at, semantic_at

CONTEXT_QUERY_TEMPLATE = "This is a picture of {}"

BEHAVIOR_TEMPLATE = (
    "You are navigating a robot in this scenario. The numbers marked in the "
    "image denote regions where you can navigate the robot. Pick a list of "
    "numbers marked in the image such that the robot {}"
)

ANTI_HALLUCINATION_PREAMBLE = (
    "Treat this query as a completely new task and disregard past inputs and outputs."
)


class ClassifierError(RuntimeError):
    """Classifier backend failure; carries the underlying cause."""


@dataclass(frozen=True)
class CatalogEntry:
    context_id: str
    phrase: str
    behavior: str
    oracle_rule: str | None = None
    terrain_hints: tuple[TerrainClass, ...] = ()


@dataclass(frozen=True)
class ContextCatalog:
    entries: tuple[CatalogEntry, ...]

    def __post_init__(self):
        if len(self.entries) < 1:
            raise ValueError("catalog needs at least one context")
        phrases = [e.phrase for e in self.entries]
        if len(set(phrases)) != len(phrases):
            raise ValueError("context phrases must be unique")
        for e in self.entries:
            if not e.behavior.strip():
                raise ValueError(f"context {e.context_id!r} has an empty behavior")

    def __len__(self) -> int:
        return len(self.entries)

    def index_of(self, context_id: str) -> int | None:
        for i, e in enumerate(self.entries):
            if e.context_id == context_id:
                return i
        return None

    def query_prompts(self) -> list[str]:
        return [CONTEXT_QUERY_TEMPLATE.format(e.phrase) for e in self.entries]


def default_catalog() -> ContextCatalog:
    """Five stock contexts covering the shipped scenario suite."""
    T = TerrainClass
    return ContextCatalog(
        entries=(
            CatalogEntry(
                "indoor_corridor",
                "an indoor corridor",
                "keep close to the right wall",
                oracle_rule="keep_right",
                terrain_hints=(T.INDOOR_FLOOR,),
            ),
            CatalogEntry(
                "indoor_people",
                "an indoor space with groups of people",
                "avoid moving in-between groups of people",
                oracle_rule="group_clearance",
                terrain_hints=(T.INDOOR_FLOOR,),
            ),
            CatalogEntry(
                "outdoor_terrains",
                "an outdoor area with multiple terrains",
                "move on pavement",
                oracle_rule="pavement",
                terrain_hints=(T.PAVEMENT, T.GRASS, T.GRAVEL),
            ),
            CatalogEntry(
                "crosswalk",
                "a street crossing with a crosswalk",
                "stay on the crosswalk",
                oracle_rule="crosswalk",
                terrain_hints=(T.CROSSWALK, T.ASPHALT_ROAD),
            ),
            CatalogEntry(
                "detour_sign",
                "a blocked path with a detour sign",
                "move to the side the detour sign points to",
                oracle_rule="detour",
                terrain_hints=(),
            ),
        )
    )


def load_catalog(path: str) -> ContextCatalog:
    """Load a catalog file; unknown fields are rejected."""
    with open(path, "r", encoding="utf-8") as fh:
        doc = yaml.safe_load(fh)
    if not isinstance(doc, dict) or doc.get("version") != 1:
        raise ValueError("catalog file must declare version: 1")
    extra = set(doc) - {"version", "contexts"}
    if extra:
        raise ValueError(f"unknown catalog fields: {sorted(extra)}")
    entries = []
    for item in doc.get("contexts", []):
        unknown = set(item) - {"id", "phrase", "behavior", "oracle_rule", "terrain_hints"}
        if unknown:
            raise ValueError(f"unknown context fields: {sorted(unknown)}")
        entries.append(
            CatalogEntry(
                context_id=item["id"],
                phrase=item["phrase"],
                behavior=item["behavior"],
                oracle_rule=item.get("oracle_rule"),
                terrain_hints=tuple(
                    TerrainClass(h) for h in item.get("terrain_hints", [])
                ),
            )
        )
    return ContextCatalog(entries=tuple(entries))


@dataclass(frozen=True)
class ContextEstimate:
    probabilities: tuple[float, ...]
    winner_index: int
    context_id: str
    behavior: str
    tick: int = 0


@dataclass(frozen=True)
class PromptBundle:
    behavior_prompt: str
    anti_hallucination_preamble: str = ANTI_HALLUCINATION_PREAMBLE
    context_query_template: str = CONTEXT_QUERY_TEMPLATE


class ContextClassifier(Protocol):
    realtime: bool  # cheap enough to consult every tick
    needs_image: bool  # whether context_scores reads pixels

    def context_scores(self, image: np.ndarray | None, catalog: ContextCatalog) -> Sequence[float]:
        ...

    def patch_paved(
        self, patch: np.ndarray | None, ground_point_odom: tuple[float, float] | None = None
    ) -> bool:
        ...


def _softmax(scores: np.ndarray) -> np.ndarray:
    shifted = scores - scores.max()
    e = np.exp(shifted)
    return e / e.sum()


def normalize_scores(scores: Sequence[float]) -> np.ndarray:
    """Scores to a probability simplex: kept as-is when already one,
    softmax otherwise."""
    arr = np.asarray(scores, dtype=float)
    if arr.ndim != 1 or arr.size == 0:
        raise ClassifierError("backend returned malformed scores")
    if not np.all(np.isfinite(arr)):
        raise ClassifierError("backend returned non-finite scores")
    if np.all(arr >= 0.0) and abs(arr.sum() - 1.0) <= 1e-6:
        return arr
    return _softmax(arr)


def classify_context(
    classifier: ContextClassifier,
    image: np.ndarray | None,
    catalog: ContextCatalog,
    tick: int = 0,
) -> ContextEstimate:
    """Run the backend and wrap its scores into a ContextEstimate.

    Ties break toward the lowest catalog index. Backend failures surface
    as :class:`ClassifierError`; the caller decides the fallback.
    """
    try:
        raw = classifier.context_scores(image, catalog)
    except ClassifierError:
        raise
    except Exception as exc:
        raise ClassifierError(f"context backend failed: {exc}") from exc
    probs = normalize_scores(raw)
    if probs.size != len(catalog):
        raise ClassifierError(
            f"backend returned {probs.size} scores for {len(catalog)} contexts"
        )
    winner = int(np.argmax(probs))
    entry = catalog.entries[winner]
    return ContextEstimate(
        probabilities=tuple(float(p) for p in probs),
        winner_index=winner,
        context_id=entry.context_id,
        behavior=entry.behavior,
        tick=tick,
    )


def build_behavior_prompt(behavior: str) -> str:
    """Anti-hallucination preamble plus the behavior template, blank filled."""
    if not behavior.strip():
        raise ValueError("behavior phrase must be nonempty")
    return f"{ANTI_HALLUCINATION_PREAMBLE} {BEHAVIOR_TEMPLATE.format(behavior)}"


def build_combined_prompt(catalog: ContextCatalog) -> str:
    """Single detailed prompt describing every behavior at once (the
    prompting-ablation mode: no context selection, the model must match
    the scenario itself)."""
    rules = "; ".join(
        f"if the scenario is {e.phrase}, {e.behavior}" for e in catalog.entries
    )
    behavior = f"follows the rule matching the scenario: {rules}"
    return f"{ANTI_HALLUCINATION_PREAMBLE} {BEHAVIOR_TEMPLATE.format(behavior)}"


def build_prompt_bundle(behavior: str) -> PromptBundle:
    return PromptBundle(behavior_prompt=build_behavior_prompt(behavior))


def classify_patch_paved(
    classifier: ContextClassifier,
    patch: np.ndarray | None,
    ground_point_odom: tuple[float, float] | None = None,
) -> bool:
    """Binary paved/unpaved verdict for an image patch."""
    try:
        return bool(classifier.patch_paved(patch, ground_point_odom))
    except ClassifierError:
        raise
    except Exception as exc:
        raise ClassifierError(f"patch backend failed: {exc}") from exc


class OracleContextClassifier:
    """Answers from ground-truth world semantics at the robot's position.

    Cheap enough to run every tick; used for all deterministic testing.
    """

    realtime = True
    needs_image = False

    def __init__(self, world: SemanticWorld, pose_provider: Callable[[], tuple[float, float]]):
        self.world = world
        self.pose_provider = pose_provider

    def context_scores(self, image, catalog: ContextCatalog) -> list[float]:
        declared = context_at(self.world, self.pose_provider())
        idx = catalog.index_of(declared) if declared is not None else None
        if idx is None:
            return [1.0 / len(catalog)] * len(catalog)
        return [1.0 if i == idx else 0.0 for i in range(len(catalog))]

    def patch_paved(self, patch, ground_point_odom=None) -> bool:
        if ground_point_odom is None:
            raise ClassifierError("oracle patch classifier needs the patch ground point")
        return semantic_at(self.world, ground_point_odom) in PAVED_CLASSES


class ColorVoteClassifier:
    """Reference classifier over rendered flat-color images.

    Patch verdicts take the majority terrain class among exactly-matching
    terrain pixels. Context scores are the image fraction of each entry's
    hinted terrain classes (uniform when nothing matches).
    """

    realtime = True
    needs_image = True

    def _terrain_fractions(self, image: np.ndarray) -> dict[TerrainClass, float]:
        flat = image.reshape(-1, 3)
        colors, counts = np.unique(flat, axis=0, return_counts=True)
        total = flat.shape[0]
        fractions: dict[TerrainClass, float] = {}
        for color, count in zip(colors, counts):
            cls = color_to_terrain(tuple(color))
            if cls is not None:
                fractions[cls] = fractions.get(cls, 0.0) + count / total
        return fractions

    def context_scores(self, image, catalog: ContextCatalog) -> list[float]:
        if image is None:
            raise ClassifierError("color-vote classifier needs an image")
        fractions = self._terrain_fractions(image)
        scores = [
            sum(fractions.get(cls, 0.0) for cls in e.terrain_hints)
            for e in catalog.entries
        ]
        if sum(scores) <= 0.0:
            return [1.0 / len(catalog)] * len(catalog)
        return [s / sum(scores) for s in scores]

    def patch_paved(self, patch, ground_point_odom=None) -> bool:
        if patch is None:
            raise ClassifierError("color-vote classifier needs a patch")
        fractions = self._terrain_fractions(patch)
        if not fractions:
            return False
        majority = max(fractions.items(), key=lambda kv: kv[1])[0]
        return majority in PAVED_CLASSES


class HttpContextClassifier:
    """Remote CLIP-style scoring service over a simple JSON API.

    POST {base_url}/classify with {"prompts": [...], "image_png_b64": ...}
    expecting {"scores": [...]}; same endpoint with binary prompts for
    patches. The auth token is read from an environment variable so keys
    never land in scenario files or logs.
    """

    realtime = False
    needs_image = True

    def __init__(
        self,
        base_url: str,
        auth_env_var: str | None = None,
        timeout: float = 10.0,
        transport=None,
    ):
        import httpx

        headers = {}
        if auth_env_var:
            token = os.environ.get(auth_env_var, "")
            if token:
                headers["Authorization"] = f"Bearer {token}"
        self.base_url = base_url.rstrip("/")
        self._client = httpx.Client(timeout=timeout, headers=headers, transport=transport)

    def _png_b64(self, image: np.ndarray) -> str:
        from PIL import Image

        buf = io.BytesIO()
        Image.fromarray(image).save(buf, format="PNG")
        return base64.b64encode(buf.getvalue()).decode("ascii")

    def _post(self, prompts: list[str], image: np.ndarray) -> list[float]:
        import httpx

        try:
            resp = self._client.post(
                f"{self.base_url}/classify",
                json={"prompts": prompts, "image_png_b64": self._png_b64(image)},
            )
            resp.raise_for_status()
            return list(resp.json()["scores"])
        except httpx.HTTPError as exc:
            raise ClassifierError(f"classifier service error: {exc}") from exc
        except (KeyError, ValueError) as exc:
            raise ClassifierError(f"classifier service bad payload: {exc}") from exc

    def context_scores(self, image, catalog: ContextCatalog) -> list[float]:
        if image is None:
            raise ClassifierError("remote classifier needs an image")
        return self._post(catalog.query_prompts(), image)

    def patch_paved(self, patch, ground_point_odom=None) -> bool:
        if patch is None:
            raise ClassifierError("remote classifier needs a patch")
        scores = self._post(
            [
                CONTEXT_QUERY_TEMPLATE.format("a paved surface like a sidewalk or indoor floor"),
                CONTEXT_QUERY_TEMPLATE.format("an unpaved surface like grass, gravel, or asphalt"),
            ],
            patch,
        )
        if len(scores) != 2:
            raise ClassifierError("patch service must return two scores")
        return scores[0] >= scores[1]
