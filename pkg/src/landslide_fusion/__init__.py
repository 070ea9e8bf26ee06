"""Multi-modal landslide patch classification: index features, boosted trees,
multi-encoder transformers, out-of-fold ensembling and F1 calibration."""

__version__ = "0.1.0"
