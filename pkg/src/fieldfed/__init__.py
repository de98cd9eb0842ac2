"""Field-coordinated federated learning: a deterministic round simulator with
self-stabilizing coordination blocks, a minimal MLP trainer, non-IID
partitioners, centralized baselines, and an experiment harness."""

__version__ = "0.1.0"
