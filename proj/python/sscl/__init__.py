"""Self-supervised contrastive audio representations.

Thin Python surface over the C++ core: audio I/O, log-Mel spectrograms,
the two-branch encoder, NT-Xent loss, contrastive pretraining, feature
extraction, CCA fusion, and the linear evaluation probe.
"""

from ._sscl import (
    Encoder,
    Fusion,
    Probe,
    SsclError,
    extract_features,
    fit_cca,
    load_wav,
    mel_spectrogram,
    normalize,
    ntxent,
    pretrain,
    resample,
    train_probe,
    write_wav,
)

__all__ = [
    "Encoder",
    "Fusion",
    "Probe",
    "SsclError",
    "extract_features",
    "fit_cca",
    "load_wav",
    "mel_spectrogram",
    "normalize",
    "ntxent",
    "pretrain",
    "resample",
    "train_probe",
    "write_wav",
]
