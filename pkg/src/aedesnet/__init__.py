"""Binary CNN classifier for Aedes mosquito species.

Submodules:
    tensor      float32/float64 array helpers and layout conventions
    rng         splittable deterministic random streams
    preprocess  rescale, resize, normalize, ZCA whitening
    data        dataset ingestion, splits, synthetic generator
    layers      conv / pool / dense / dropout with backprop
    model       layer-spec assembly and the reference architecture
    train       BCE loss, Adam, the training loop, evaluation
    modelfmt    binary model artifact serialization
    service     HTTP inference service
    cli         command-line orchestrator

This top-level module stays import-light on purpose: the CLI pins the
numeric libraries to one thread (strict mode) before anything imports
numpy, so the heavy submodules are imported lazily where needed.
"""

__version__ = "0.1.0"

from .errors import AedesnetError  # noqa: F401  (re-export of the base error)
