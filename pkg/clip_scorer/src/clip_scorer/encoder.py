"""Image/text embedding backends.

ClipEncoder wraps a pretrained CLIP checkpoint via transformers. StubEncoder
produces deterministic pseudo-embeddings from content hashes; it exists so the
wire protocol can be exercised end to end without model weights.
"""

from __future__ import annotations

import hashlib

import numpy as np

DEFAULT_MODEL = "openai/clip-vit-base-patch32"


class EncoderError(RuntimeError):
    pass


class ClipEncoder:
    """Eval-mode CLIP inference with unit-normalized embeddings."""

    def __init__(self, model_name: str = DEFAULT_MODEL, device: str = "cpu",
                 max_batch_size: int = 16):
        if max_batch_size < 1:
            raise ValueError("max_batch_size must be >= 1")
        import torch
        from transformers import CLIPModel, CLIPProcessor

        self._torch = torch
        self.name = model_name
        self.device = device
        self.max_batch_size = max_batch_size
        self.model = CLIPModel.from_pretrained(model_name).to(device).eval()
        self.processor = CLIPProcessor.from_pretrained(model_name)

    def embed_text(self, prompt: str) -> np.ndarray:
        torch = self._torch
        with torch.no_grad():
            inputs = self.processor(text=[prompt], return_tensors="pt", padding=True)
            inputs = {k: v.to(self.device) for k, v in inputs.items()}
            features = self.model.get_text_features(**inputs)
        vec = features[0].cpu().numpy().astype(np.float64)
        return vec / np.linalg.norm(vec)

    def embed_images(self, images) -> np.ndarray:
        torch = self._torch
        chunks = []
        with torch.no_grad():
            for start in range(0, len(images), self.max_batch_size):
                batch = images[start : start + self.max_batch_size]
                inputs = self.processor(images=batch, return_tensors="pt")
                inputs = {k: v.to(self.device) for k, v in inputs.items()}
                features = self.model.get_image_features(**inputs)
                chunks.append(features.cpu().numpy().astype(np.float64))
        out = np.concatenate(chunks)
        return out / np.linalg.norm(out, axis=1, keepdims=True)


class StubEncoder:
    """Deterministic hash-seeded embeddings for protocol tests and dev runs.

    Not a vision model: similarities are meaningless but stable for identical
    inputs, which is exactly what byte-level protocol fixtures need.
    """

    name = "stub"
    dim = 32

    def __init__(self, max_batch_size: int = 16):
        self.max_batch_size = max_batch_size

    def _vector(self, payload: bytes) -> np.ndarray:
        digest = hashlib.sha256(payload).digest()
        seed = int.from_bytes(digest[:8], "little")
        rng = np.random.Generator(np.random.Philox(seed))
        v = rng.standard_normal(self.dim)
        return v / np.linalg.norm(v)

    def embed_text(self, prompt: str) -> np.ndarray:
        return self._vector(b"text:" + prompt.encode("utf-8"))

    def embed_images(self, images) -> np.ndarray:
        out = []
        for img in images:
            arr = np.asarray(img.convert("RGB"), dtype=np.uint8)
            out.append(self._vector(b"image:" + arr.tobytes()))
        return np.stack(out)
