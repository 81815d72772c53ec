"""Large-VLM query client: oracle and HTTP backends plus reply parsing.

A backend turns a request (marked image + behavior prompt) into raw text;
:func:`query_reference` parses the text into a validated, deduplicated
marker list and records the end-to-end latency. The deterministic oracle
backend answers from ground-truth world semantics with a fixed rule per
behavior, which makes every closed-loop test reproducible without a GPU
or network.
"""

from __future__ import annotations

import base64
import copy
import io
import json
import math
import os
import re
import time
import uuid
from dataclasses import dataclass, field

import numpy as np
from shapely.geometry import LineString, MultiPoint, Point

from .marking import MarkerEntry, MarkerSet
from .world import PAVED_CLASSES, SemanticWorld, TerrainClass, semantic_at


class VlmError(RuntimeError):
    """Base class for query failures; the navigator falls back to the
    baseline planner on any of these."""


class VlmTimeout(VlmError):
    pass


class VlmTransportError(VlmError):
    pass


class VlmEmptyReply(VlmError):
    """Reply contained no valid marker after parsing."""


@dataclass(frozen=True)
class VlmRequest:
    marked_image: np.ndarray | None
    prompt: str
    valid_labels: frozenset[int]
    timeout: float = 15.0
    request_id: str = field(default_factory=lambda: uuid.uuid4().hex[:12])
    # context for the oracle backend; HTTP backends ignore these
    marker_set: MarkerSet | None = None
    behavior_rule: str | None = None
    robot_pose: tuple[float, float, float] | None = None

    def __post_init__(self):
        if not self.valid_labels:
            raise ValueError("valid_labels must be nonempty")
        if self.timeout <= 0:
            raise ValueError("timeout must be positive")


@dataclass(frozen=True)
class VlmResponse:
    raw_text: str
    markers: tuple[int, ...]
    latency: float
    backend_id: str
    request_id: str


def parse_marker_list(raw: str, valid_labels: frozenset[int] | set[int]) -> list[int]:
    """Integer tokens in order of appearance, out-of-range dropped,
    duplicates removed keeping the first occurrence."""
    seen: list[int] = []
    for token in re.findall(r"\d+", raw):
        value = int(token)
        if value in valid_labels and value not in seen:
            seen.append(value)
    return seen


def query_reference(backend, req: VlmRequest) -> VlmResponse:
    """Run one query through a backend and parse the reply.

    Transport errors are retried once; timeouts are not (the navigation
    loop must not stall behind a slow service).
    """
    start = time.perf_counter()
    attempts = 0
    while True:
        attempts += 1
        try:
            raw = backend.answer(req)
            break
        except VlmTimeout:
            raise
        except VlmTransportError:
            if attempts >= 2:
                raise
    latency = time.perf_counter() - start
    markers = parse_marker_list(raw, req.valid_labels)
    if not markers:
        raise VlmEmptyReply(f"no valid markers in reply {raw!r}")
    return VlmResponse(
        raw_text=raw,
        markers=tuple(markers),
        latency=latency,
        backend_id=backend.backend_id,
        request_id=req.request_id,
    )


def _rows(ms: MarkerSet) -> list[list[MarkerEntry]]:
    rows: dict[int, list[MarkerEntry]] = {}
    for e in ms.entries:
        rows.setdefault(e.row_index, []).append(e)
    return [rows[k] for k in sorted(rows)]


def _to_odom(p_robot, pose):
    x, y, theta = pose
    c, s = math.cos(theta), math.sin(theta)
    return (x + c * p_robot[0] - s * p_robot[1], y + s * p_robot[0] + c * p_robot[1])


def oracle_select(
    world: SemanticWorld,
    marker_set: MarkerSet,
    behavior_rule: str,
    robot_pose: tuple[float, float, float],
    t: float = 0.0,
) -> list[int]:
    """Deterministic stand-in for a large VLM: one marker per candidate row.

    Rules (rows with no qualifying marker are skipped; all skipped raises):
      keep_right       rightmost marker on paved ground
      pavement         paved marker nearest the row's paved centroid
      crosswalk        in-crosswalk marker nearest the crosswalk centerline
      group_clearance  marker maximizing clearance from pedestrian group hulls
      detour           outermost paved marker on the signed side
    """
    picks: list[int] = []
    for row in _rows(marker_set):
        entry = _select_in_row(world, row, behavior_rule, robot_pose, t)
        if entry is not None:
            picks.append(entry.label)
    if not picks:
        raise VlmEmptyReply(f"no marker qualifies under rule {behavior_rule!r}")
    return picks


def _select_in_row(world, row, rule, robot_pose, t) -> MarkerEntry | None:
    odom_pts = {e.label: _to_odom(e.ground_point, robot_pose) for e in row}

    def paved(e):
        return semantic_at(world, odom_pts[e.label]) in PAVED_CLASSES

    if rule == "keep_right":
        candidates = [e for e in row if paved(e)]
        # rightmost = most negative lateral offset in the robot frame
        return min(candidates, key=lambda e: (e.ground_point[1], e.label), default=None)

    if rule == "pavement":
        candidates = [e for e in row if paved(e)]
        if not candidates:
            return None
        cy = sum(e.ground_point[1] for e in candidates) / len(candidates)
        return min(candidates, key=lambda e: (abs(e.ground_point[1] - cy), e.label))

    if rule == "crosswalk":
        bands = [r for r in world.terrain_regions if r.terrain is TerrainClass.CROSSWALK]
        if not bands:
            return None
        candidates = [
            e
            for e in row
            if semantic_at(world, odom_pts[e.label]) is TerrainClass.CROSSWALK
        ]
        if not candidates:
            return None
        centerlines = [_region_centerline(r) for r in bands]

        def dist_to_center(e):
            p = Point(odom_pts[e.label])
            return min(line.distance(p) for line in centerlines)

        return min(candidates, key=lambda e: (dist_to_center(e), e.label))

    if rule == "group_clearance":
        hulls = _group_hulls(world, t)
        if not hulls:
            return min(row, key=lambda e: e.label, default=None)

        def clearance(e):
            p = Point(odom_pts[e.label])
            return min(h.distance(p) for h in hulls)

        return max(row, key=lambda e: (clearance(e), -e.label), default=None)

    if rule == "detour":
        if not world.signs:
            return None
        side = world.signs[0].direction
        candidates = [
            e
            for e in row
            if paved(e)
            and (e.ground_point[1] > 0 if side == "left" else e.ground_point[1] < 0)
        ]
        if not candidates:
            return None
        key = (lambda e: (e.ground_point[1], -e.label)) if side == "left" else (
            lambda e: (-e.ground_point[1], -e.label)
        )
        return max(candidates, key=key)

    raise ValueError(f"unknown oracle rule {rule!r}")


def _region_centerline(region) -> LineString:
    """Long-axis midline of a (near-rectangular) region."""
    box = region.shapely().minimum_rotated_rectangle
    coords = list(box.exterior.coords)[:4]
    edges = [(coords[i], coords[(i + 1) % 4]) for i in range(4)]
    lengths = [math.dist(a, b) for a, b in edges]
    long_i = int(np.argmax(lengths))
    a0, a1 = edges[long_i]
    b0, b1 = edges[(long_i + 2) % 4]
    mid_a = ((a0[0] + b1[0]) / 2, (a0[1] + b1[1]) / 2)
    mid_b = ((a1[0] + b0[0]) / 2, (a1[1] + b0[1]) / 2)
    return LineString([mid_a, mid_b])


def _group_hulls(world: SemanticWorld, t: float):
    groups: dict[object, list[tuple[float, float]]] = {}
    radii: dict[object, float] = {}
    for i, (pos, radius, group) in enumerate(world.pedestrian_states(t)):
        key = group if group is not None else f"solo-{i}"
        groups.setdefault(key, []).append(pos)
        radii[key] = max(radii.get(key, 0.0), radius)
    return [
        MultiPoint(pts).convex_hull.buffer(radii[key]) for key, pts in groups.items()
    ]


class OracleVlmBackend:
    """Answers queries from world ground truth via the fixed rule table."""

    backend_id = "oracle"
    instant = True  # resolves within the inter-tick gap

    def __init__(self, world: SemanticWorld, time_provider=None):
        self.world = world
        self.time_provider = time_provider or (lambda: 0.0)

    def answer(self, req: VlmRequest) -> str:
        if req.marker_set is None or req.behavior_rule is None or req.robot_pose is None:
            raise VlmTransportError("oracle backend needs marker_set, rule, and pose")
        try:
            picks = oracle_select(
                self.world,
                req.marker_set,
                req.behavior_rule,
                req.robot_pose,
                t=self.time_provider(),
            )
        except VlmEmptyReply:
            return "[]"
        return ", ".join(str(p) for p in picks)


class ScriptedVlmBackend:
    """Replays a fixed sequence of raw replies (tests, transcript replay)."""

    backend_id = "scripted"
    instant = True

    def __init__(self, replies: list[str]):
        self.replies = list(replies)
        self.calls = 0

    def answer(self, req: VlmRequest) -> str:
        if self.calls >= len(self.replies):
            raise VlmTransportError("scripted backend exhausted")
        raw = self.replies[self.calls]
        self.calls += 1
        return raw


class DelayedBackend:
    """Wraps a backend with an artificial delay (latency testing).

    ``cancel()`` aborts in-flight sleeps so test teardown never waits out
    the full delay.
    """

    instant = False

    def __init__(self, inner, delay: float):
        import threading

        self.inner = inner
        self.delay = delay
        self.backend_id = f"delayed-{inner.backend_id}"
        self._cancelled = threading.Event()

    def cancel(self):
        self._cancelled.set()

    def answer(self, req: VlmRequest) -> str:
        if self._cancelled.wait(self.delay):
            raise VlmTransportError("delayed backend cancelled")
        return self.inner.answer(req)


DEFAULT_HTTP_TEMPLATE = {
    "model": "{model}",
    "prompt": "{prompt}",
    "image_png_b64": "{image_b64}",
}


@dataclass(frozen=True)
class HttpVlmConfig:
    """Generic vision-chat endpoint description.

    ``request_template`` is a JSON object whose string leaves may contain
    the placeholders {model}, {prompt}, and {image_b64}; ``response_path``
    walks the reply JSON (keys and list indices) to the answer text. This
    keeps vendor adaptation in config instead of per-vendor code.
    """

    url: str
    model: str = ""
    auth_env_var: str | None = None
    timeout: float = 15.0
    request_template: dict = field(default_factory=lambda: copy.deepcopy(DEFAULT_HTTP_TEMPLATE))
    response_path: tuple = ("text",)


class HttpVlmBackend:
    backend_id = "http"
    instant = False

    def __init__(self, config: HttpVlmConfig, transport=None):
        import httpx

        self.config = config
        headers = {}
        if config.auth_env_var:
            token = os.environ.get(config.auth_env_var, "")
            if token:
                headers["Authorization"] = f"Bearer {token}"
        self._client = httpx.Client(headers=headers, transport=transport)

    def _fill(self, node, values):
        if isinstance(node, dict):
            return {k: self._fill(v, values) for k, v in node.items()}
        if isinstance(node, list):
            return [self._fill(v, values) for v in node]
        if isinstance(node, str):
            for key, val in values.items():
                node = node.replace("{" + key + "}", val)
            return node
        return node

    def answer(self, req: VlmRequest) -> str:
        import httpx
        from PIL import Image

        if req.marked_image is None:
            raise VlmTransportError("http backend needs the marked image")
        buf = io.BytesIO()
        Image.fromarray(req.marked_image).save(buf, format="PNG")
        body = self._fill(
            self.config.request_template,
            {
                "model": self.config.model,
                "prompt": req.prompt,
                "image_b64": base64.b64encode(buf.getvalue()).decode("ascii"),
            },
        )
        try:
            resp = self._client.post(self.config.url, json=body, timeout=req.timeout)
            resp.raise_for_status()
            payload = resp.json()
        except httpx.TimeoutException as exc:
            raise VlmTimeout(f"query timed out after {req.timeout}s") from exc
        except httpx.HTTPError as exc:
            raise VlmTransportError(f"transport failure: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise VlmTransportError(f"non-JSON reply: {exc}") from exc
        node = payload
        try:
            for step in self.config.response_path:
                node = node[step]
        except (KeyError, IndexError, TypeError) as exc:
            raise VlmTransportError(f"reply missing {self.config.response_path}") from exc
        return str(node)
