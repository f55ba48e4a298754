"""Video-to-sound pipeline: class-conditioned Foley synthesis at desk scale.

The flow: frames in, per-frame features through a shared two-branch
encoder, a recurrent or relational classifier over time, then a predicted
spectrogram (class average plus learned residual) rendered to a waveform
by iterative phase recovery.
"""

from .config import RunConfig, profile
from .dataset import (CLASS_NAMES, DatasetManifest, ManifestEntry,
                      generate_synthetic_corpus, manifest_load, manifest_save)
from .dsp import (AudioClip, Spectrogram, StftParams, griffin_lim, istft_ola,
                  normalized_cross_correlation, spectrogram_of, stft)
from .errors import (AlignmentError, BankError, CodecError, ConfigError,
                     FoleyError, IngestError, InvalidArgument, NumericFault,
                     ShapeError, SplitError, UndefinedCorrelationError)
from .models import (FrameRelationClassifier, FrameSequenceClassifier,
                     load_classifier)
from .synthesis import (ClassSpectrogramBank, align_frames, bank_load,
                        bank_save, build_bank, compose_spectrogram,
                        extract_residual, synthesize_waveform)
from .video import (FrameSequence, interpolate_frames, load_frames,
                    replicate_frames, space_time_image)
from .wav import wav_read, wav_write

__version__ = "0.1.0"

__all__ = [
    "AlignmentError", "AudioClip", "BankError", "CLASS_NAMES",
    "ClassSpectrogramBank", "CodecError", "ConfigError", "DatasetManifest",
    "FoleyError", "FrameRelationClassifier", "FrameSequence",
    "FrameSequenceClassifier", "IngestError", "InvalidArgument",
    "ManifestEntry", "NumericFault", "RunConfig", "ShapeError",
    "Spectrogram", "SplitError", "StftParams", "UndefinedCorrelationError",
    "align_frames", "bank_load", "bank_save", "build_bank",
    "compose_spectrogram", "extract_residual", "generate_synthetic_corpus",
    "griffin_lim", "interpolate_frames", "istft_ola", "load_classifier",
    "load_frames", "manifest_load", "manifest_save",
    "normalized_cross_correlation", "profile", "replicate_frames",
    "space_time_image", "spectrogram_of", "stft", "synthesize_waveform",
    "wav_read", "wav_write",
]
