"""Scoring service exposing pretrained CLIP image-text similarity over the
JSON wire protocol used by the deformation optimizer."""

from .app import ServiceConfig, canonical_json, create_app, score_payload

__version__ = "0.1.0"

__all__ = ["ServiceConfig", "canonical_json", "create_app", "score_payload"]
