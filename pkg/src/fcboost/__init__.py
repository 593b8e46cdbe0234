"""FCBoost: diversified outfit completion via latent-space compatibility boosting."""

__version__ = "0.1.0"
