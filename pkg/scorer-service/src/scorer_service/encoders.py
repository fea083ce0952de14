"""Image-text encoder backends.

``echo`` answers instantly with zero scores and zero gradients and imports no
ML libraries, so integration tests of callers need nothing beyond this
package. ``tiny-random-clip`` is a small randomly initialized (but fixed-seed)
two-tower encoder used to exercise the full differentiable scoring path
offline. Any other model identifier is loaded from the transformers hub and
needs the ``model`` extra plus downloadable weights.
"""

from __future__ import annotations

import numpy as np

# ImageNet-style normalization used by the CLIP family of image encoders.
_PIXEL_MEAN = (0.48145466, 0.4578275, 0.40821073)
_PIXEL_STD = (0.26862954, 0.26130258, 0.27577711)


class EchoEncoder:
    """Zero scores, zero gradients, fixed unit text embedding."""

    model_id = "echo"
    embedding_dim = 16

    def encode_text(self, prompt: str) -> np.ndarray:
        e = np.zeros(self.embedding_dim, dtype=np.float64)
        e[0] = 1.0
        return e

    def score(self, prompt: str, images: np.ndarray, want_grad: bool):
        k = images.shape[0]
        sims = [0.0] * k
        grads = [np.zeros(images.shape[1:], dtype=np.float32) for _ in range(k)] \
            if want_grad else None
        return 0.0, sims, grads


def _hash_token_ids(prompt: str, vocab_size: int, max_len: int, bos: int, eos: int):
    """Deterministic byte-level tokenization; no vocabulary files needed."""
    body = [2 + (b % (vocab_size - 3)) for b in prompt.encode("utf-8")]
    body = body[: max_len - 2]
    return [bos] + body + [eos]


class TorchClipEncoder:
    """Two-tower scoring with autograd gradients in the caller's pixel space."""

    def __init__(self, model, tokenize, image_size: int, device: str = "cpu",
                 model_id: str = "", dtype=None):
        import torch

        self.torch = torch
        self.model = model.eval().to(device)
        if dtype is not None:
            self.model = self.model.to(dtype)
        self.dtype = dtype or next(model.parameters()).dtype
        self.tokenize = tokenize
        self.image_size = image_size
        self.device = device
        self.model_id = model_id
        self._text_cache = {}
        mean = torch.tensor(_PIXEL_MEAN, dtype=self.dtype, device=device)
        std = torch.tensor(_PIXEL_STD, dtype=self.dtype, device=device)
        self._mean = mean.view(1, 3, 1, 1)
        self._std = std.view(1, 3, 1, 1)

    def _text_features(self, prompt: str):
        torch = self.torch
        if prompt not in self._text_cache:
            ids, mask = self.tokenize(prompt)
            with torch.no_grad():
                feats = self.model.get_text_features(
                    input_ids=ids.to(self.device), attention_mask=mask.to(self.device)
                )
            feats = getattr(feats, "pooler_output", feats)
            feats = feats / feats.norm(dim=-1, keepdim=True)
            self._text_cache[prompt] = feats[0]
        return self._text_cache[prompt]

    def encode_text(self, prompt: str) -> np.ndarray:
        feats = self._text_features(prompt)
        return feats.detach().cpu().double().numpy()

    def _preprocess(self, x):
        torch = self.torch
        nchw = x.permute(0, 3, 1, 2)
        resized = torch.nn.functional.interpolate(
            nchw, size=(self.image_size, self.image_size), mode="bicubic",
            align_corners=False, antialias=False,
        )
        return (resized - self._mean) / self._std

    def score(self, prompt: str, images: np.ndarray, want_grad: bool):
        torch = self.torch
        e_t = self._text_features(prompt)
        x = torch.tensor(images, dtype=self.dtype, device=self.device,
                         requires_grad=want_grad)
        feats = self.model.get_image_features(pixel_values=self._preprocess(x))
        feats = getattr(feats, "pooler_output", feats)
        feats = feats / feats.norm(dim=-1, keepdim=True)
        sims = feats @ e_t
        loss = -sims.mean()
        grads = None
        if want_grad:
            loss.backward()
            grads = [g.astype(np.float32) for g in x.grad.detach().cpu().numpy()]
        return float(loss.item()), [float(s) for s in sims.detach().cpu()], grads


def build_tiny_random_clip(device: str = "cpu", seed: int = 1234) -> TorchClipEncoder:
    import torch
    from transformers import CLIPConfig, CLIPModel

    vocab, max_len, bos, eos = 259, 32, 0, 1
    config = CLIPConfig(
        text_config=dict(
            hidden_size=64, intermediate_size=128, num_hidden_layers=2,
            num_attention_heads=2, vocab_size=vocab,
            max_position_embeddings=max_len, bos_token_id=bos, eos_token_id=eos,
        ),
        vision_config=dict(
            hidden_size=64, intermediate_size=128, num_hidden_layers=2,
            num_attention_heads=2, image_size=32, patch_size=8,
        ),
        projection_dim=32,
    )
    torch.manual_seed(seed)
    model = CLIPModel(config)

    def tokenize(prompt: str):
        ids = _hash_token_ids(prompt, vocab, max_len, bos, eos)
        t = torch.tensor([ids], dtype=torch.long)
        return t, torch.ones_like(t)

    return TorchClipEncoder(model, tokenize, image_size=32, device=device,
                            model_id="tiny-random-clip", dtype=torch.float64)


def build_pretrained_clip(model_id: str, device: str = "cpu") -> TorchClipEncoder:
    from transformers import AutoTokenizer, CLIPModel

    import torch

    model = CLIPModel.from_pretrained(model_id)
    tok = AutoTokenizer.from_pretrained(model_id)

    def tokenize(prompt: str):
        out = tok([prompt], return_tensors="pt", padding=True, truncation=True)
        return out["input_ids"], out["attention_mask"]

    image_size = model.config.vision_config.image_size
    return TorchClipEncoder(model, tokenize, image_size=image_size, device=device,
                            model_id=model_id)


def build_encoder(model_id: str, device: str = "cpu"):
    if model_id == "echo":
        return EchoEncoder()
    if model_id == "tiny-random-clip":
        return build_tiny_random_clip(device=device)
    return build_pretrained_clip(model_id, device=device)
