"""Scoring and regularization: similarity aggregation, uniform-Laplacian
energy with its reverse pass, the decaying regularizer weight, target-image
and remote scorers, and the composed objective with gradients for all
parameter groups."""

from __future__ import annotations

import base64
import json
import time
import urllib.error
import urllib.request
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import ContractError, ParameterError, ProtocolError, TransportError


@dataclass
class PromptContext:
    prompt: str
    text_embedding: np.ndarray
    scorer_id: str

    def __post_init__(self):
        e = np.asarray(self.text_embedding, dtype=np.float64)
        if abs(np.linalg.norm(e) - 1.0) > 1e-4:
            raise ContractError("text embedding must be unit-norm within 1e-4")
        self.text_embedding = e


@dataclass
class ScoreResult:
    loss: float
    per_image_similarity: list
    grad_images: list  # per-image (H, W, 3) arrays, empty if gradients not requested


@dataclass
class LambdaSchedule:
    """Regularizer weight decaying toward 2% of its initial value.

    Step t applies lambda_t = (lambda_{t-1} - lambda_min) * 10^(-k t) + lambda_min.
    """

    lambda0: float
    k: float = 1e-6
    t: int = 0
    current: float = field(default=None)
    lambda_min: float = field(default=None)

    def __post_init__(self):
        if self.lambda_min is None:
            self.lambda_min = 0.02 * self.lambda0
        if self.current is None:
            self.current = self.lambda0


def lambda_step(s: LambdaSchedule) -> LambdaSchedule:
    """Advance the schedule by one iteration (in place) and return it."""
    s.t += 1
    s.current = (s.current - s.lambda_min) * 10.0 ** (-s.k * s.t) + s.lambda_min
    return s


def similarity_loss(embeddings, text_embedding) -> float:
    """Negative mean cosine similarity, so minimizing improves alignment."""
    e_t = np.asarray(text_embedding, dtype=np.float64)
    if abs(np.linalg.norm(e_t) - 1.0) > 1e-4:
        raise ContractError("text embedding must be unit-norm within 1e-4")
    sims = []
    for e in embeddings:
        e = np.asarray(e, dtype=np.float64)
        if abs(np.linalg.norm(e) - 1.0) > 1e-4:
            raise ContractError("image embedding must be unit-norm within 1e-4")
        sims.append(float(e @ e_t))
    if not sims:
        raise ParameterError("need at least one embedding")
    return -float(np.mean(sims))


class LaplacianEnergy:
    """Mean squared uniform-Laplacian offset over a fixed topology.

    delta_i = v_i - mean(one-ring of v_i); value = mean_i ||delta_i||^2.
    """

    def __init__(self, faces: np.ndarray, n_vertices: int):
        faces = np.asarray(faces)
        raw = np.concatenate([faces[:, [0, 1]], faces[:, [1, 2]], faces[:, [2, 0]]])
        edges = np.unique(np.sort(raw, axis=1), axis=0)
        valence = np.bincount(edges.ravel(), minlength=n_vertices).astype(np.float64)
        if valence.min() <= 0:
            raise ParameterError("every vertex needs at least one neighbor")
        inv = 1.0 / valence
        rows = np.concatenate([edges[:, 0], edges[:, 1]])
        cols = np.concatenate([edges[:, 1], edges[:, 0]])
        vals = np.concatenate([inv[edges[:, 0]], inv[edges[:, 1]]])
        avg = sp.csr_matrix((vals, (rows, cols)), shape=(n_vertices, n_vertices))
        self.operator = (sp.identity(n_vertices, format="csr") - avg).tocsr()
        self.n_vertices = n_vertices

    def value(self, vertices: np.ndarray) -> float:
        delta = self.operator @ np.asarray(vertices, dtype=np.float64)
        return float(np.sum(delta * delta) / self.n_vertices)

    def grad(self, vertices: np.ndarray) -> np.ndarray:
        delta = self.operator @ np.asarray(vertices, dtype=np.float64)
        return (2.0 / self.n_vertices) * (self.operator.T @ delta)


def laplacian_loss(vertices: np.ndarray, faces: np.ndarray):
    """One-shot energy + gradient for a given topology."""
    lap = LaplacianEnergy(faces, len(vertices))
    return lap.value(vertices), lap.grad(vertices)


# ---------------------------------------------------------------------------
# scorers
# ---------------------------------------------------------------------------

def _image_embedding(image: np.ndarray):
    z = np.asarray(image, dtype=np.float64).ravel()
    z = z - z.mean()
    norm = np.linalg.norm(z)
    if norm < 1e-12:
        return np.zeros_like(z), 0.0
    return z / norm, norm


class TargetImageScorer:
    """Verification scorer: cosine similarity of mean-subtracted, normalized
    pixels against fixed target images, with exact analytic pixel gradients."""

    scorer_id = "target-image"

    def __init__(self, targets):
        self.targets = [np.asarray(t, dtype=np.float64) for t in targets]
        self._embeddings = [_image_embedding(t)[0] for t in self.targets]

    def score(self, images, want_grad: bool = True) -> ScoreResult:
        if len(images) != len(self.targets):
            raise ParameterError(
                f"expected {len(self.targets)} images, got {len(images)}"
            )
        k = len(images)
        sims = []
        grads = []
        for img, target, e_t in zip(images, self.targets, self._embeddings):
            img = np.asarray(img, dtype=np.float64)
            if img.shape != target.shape:
                raise ParameterError(
                    f"image shape {img.shape} != target shape {target.shape}"
                )
            e, norm = _image_embedding(img)
            sim = float(e @ e_t)
            sims.append(sim)
            if want_grad:
                if norm < 1e-12:
                    g = np.zeros_like(img)
                else:
                    gz = (e_t - sim * e) / norm
                    gz = gz - gz.mean()
                    g = (-1.0 / k) * gz.reshape(img.shape)
                grads.append(g)
        return ScoreResult(
            loss=-float(np.mean(sims)), per_image_similarity=sims, grad_images=grads
        )


def encode_image_payload(image: np.ndarray) -> str:
    """Little-endian float32 row-major RGB, base64."""
    arr = np.ascontiguousarray(image, dtype="<f4")
    return base64.b64encode(arr.tobytes()).decode("ascii")


def decode_image_payload(payload: str, shape) -> np.ndarray:
    raw = base64.b64decode(payload.encode("ascii"))
    expected = int(np.prod(shape)) * 4
    if len(raw) != expected:
        raise ProtocolError(
            f"payload is {len(raw)} bytes, expected {expected}", field="grads"
        )
    return np.frombuffer(raw, dtype="<f4").reshape(shape).astype(np.float64)


class RemoteScorer:
    """Client for the HTTP scoring service (POST /v1/score, /v1/encode_text)."""

    scorer_id = "remote"

    def __init__(self, endpoint: str, prompt: str, timeout: float = 60.0, retries: int = 3):
        self.endpoint = endpoint.rstrip("/")
        self.prompt = prompt
        self.timeout = timeout
        self.retries = retries
        self._prompt_context = None

    def _post(self, path: str, body: dict) -> dict:
        data = json.dumps(body).encode("utf-8")
        req = urllib.request.Request(
            self.endpoint + path, data=data, headers={"Content-Type": "application/json"}
        )
        last = None
        for attempt in range(self.retries):
            try:
                with urllib.request.urlopen(req, timeout=self.timeout) as resp:
                    return json.loads(resp.read().decode("utf-8"))
            except (urllib.error.URLError, TimeoutError, ConnectionError) as err:
                last = err
                if attempt + 1 < self.retries:
                    time.sleep(0.2 * (attempt + 1))
        raise TransportError(f"scorer unreachable at {self.endpoint}: {last}")

    def prompt_context(self) -> PromptContext:
        if self._prompt_context is None:
            reply = self._post("/v1/encode_text", {"prompt": self.prompt})
            if "embedding" not in reply:
                raise ProtocolError("missing embedding", field="embedding")
            e = np.asarray(reply["embedding"], dtype=np.float64)
            self._prompt_context = PromptContext(self.prompt, e, self.scorer_id)
        return self._prompt_context

    def score(self, images, want_grad: bool = True) -> ScoreResult:
        images = [np.asarray(i, dtype=np.float64) for i in images]
        if not images:
            raise ParameterError("need at least one image")
        h, w = images[0].shape[0], images[0].shape[1]
        for img in images:
            if img.shape != (h, w, 3):
                raise ParameterError("all images in a batch must share one shape")
        body = {
            "prompt": self.prompt,
            "width": w,
            "height": h,
            "images": [encode_image_payload(i) for i in images],
            "want_grad": bool(want_grad),
        }
        reply = self._post("/v1/score", body)
        if "loss" not in reply:
            raise ProtocolError("missing loss", field="loss")
        loss = float(reply["loss"])
        if not np.isfinite(loss):
            raise ProtocolError("non-finite loss", field="loss")
        sims = reply.get("similarities")
        if not isinstance(sims, list) or len(sims) != len(images):
            raise ProtocolError("similarities count mismatch", field="similarities")
        grads = []
        if want_grad:
            enc = reply.get("grads")
            if not isinstance(enc, list) or len(enc) != len(images):
                raise ProtocolError("grads count mismatch", field="grads")
            for g in enc:
                arr = decode_image_payload(g, (h, w, 3))
                if not np.all(np.isfinite(arr)):
                    raise ProtocolError("non-finite gradient", field="grads")
                grads.append(arr)
        return ScoreResult(loss=loss, per_image_similarity=[float(s) for s in sims],
                           grad_images=grads)


# ---------------------------------------------------------------------------
# composed objective
# ---------------------------------------------------------------------------

def total_objective(control_vertices, texture, normal_map, operator, laplacian,
                    scorer, cameras, backgrounds, lam, render_cfg,
                    background_logits=None):
    """Score rendered views plus lam * Laplacian energy of the refined mesh.

    Returns (total, parts, grads) where parts is a dict of the two terms and
    grads holds 'vertices' (control), 'texture', 'normal_map'. When
    ``background_logits`` (3 values, sigmoid-decoded solid color) is given it
    replaces ``backgrounds`` for every view and 'background' gradients are
    returned as a fourth group.
    """
    from scipy.special import expit

    from .raster import render, render_backward

    learned_bg = background_logits is not None
    if learned_bg:
        color = expit(np.asarray(background_logits, dtype=np.float64))
        res = render_cfg.resolution
        backgrounds = [np.broadcast_to(color, (res, res, 3)).copy()
                       for _ in cameras]

    refined = operator.apply(control_vertices)
    images = []
    tapes = []
    for cam, bg in zip(cameras, backgrounds):
        img, tape = render(
            refined, operator.refined_faces, operator.refined_uvs,
            operator.refined_uv_indices, texture, normal_map, cam, bg, render_cfg,
        )
        images.append(img.rgb)
        tapes.append(tape)

    result = scorer.score(images, want_grad=True)
    lap_value = laplacian.value(refined)
    total = result.loss + lam * lap_value

    g_refined = lam * laplacian.grad(refined)
    g_texture = np.zeros_like(texture.data)
    g_normal = np.zeros_like(normal_map.data)
    g_bg_color = np.zeros(3)
    for tape, g_img in zip(tapes, result.grad_images):
        grads = render_backward(tape, g_img)
        g_refined += grads["vertices"]
        g_texture += grads["texture"]
        g_normal += grads["normal_map"]
        if learned_bg:
            g_bg_color += grads["background"].sum(axis=(0, 1))

    grads = {
        "vertices": operator.apply_adjoint(g_refined),
        "texture": g_texture,
        "normal_map": g_normal,
    }
    if learned_bg:
        grads["background"] = g_bg_color * color * (1.0 - color)
    parts = {"similarity": result.loss, "laplacian": lap_value}
    return total, parts, grads
