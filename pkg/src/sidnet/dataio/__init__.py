"""File formats, manifests, folds and the synthetic corpus generator."""
from .folds import FoldSpec, make_folds
from .formats import parse_pgm, parse_trajectory_file, write_pgm, write_trajectory_file
from .manifest import (DEFAULT_SCRIPTS, LabelRegistry, SampleDescriptor, load_manifest,
                       write_manifest)
from .synth import SynthConfig, synth_dataset, synth_samples

__all__ = [
    "FoldSpec", "make_folds", "parse_pgm", "parse_trajectory_file", "write_pgm",
    "write_trajectory_file", "DEFAULT_SCRIPTS", "LabelRegistry", "SampleDescriptor",
    "load_manifest", "write_manifest", "SynthConfig", "synth_dataset", "synth_samples",
]
