"""Privacy-preserving teacher-to-student dataset pipeline for surgical scene
understanding: composite-overlay imaging, a gated teacher client, SFT and
preference dataset builders, verified DPO numerics, an evaluation harness,
and a human-in-the-loop review service."""

__version__ = "0.1.0"
