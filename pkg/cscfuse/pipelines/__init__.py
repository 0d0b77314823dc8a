"""The three fusion networks, their training loops, checkpoints and data."""

from cscfuse.pipelines.checkpoint import Checkpoint, load_checkpoint, load_model, save_checkpoint
from cscfuse.pipelines.ivf import ivfn_fuse, ivfn_reconstruct, ivfn_train
from cscfuse.pipelines.mef import mefn_fuse, mefn_fuse_detailed, mefn_train
from cscfuse.pipelines.mmf import bicubic_baseline, mmfn_fuse, mmfn_train, wald_protocol
from cscfuse.pipelines.models import IvfnModel, MefnModel, MmfnModel, build_model
from cscfuse.pipelines.synthetic import synth_exposure_stack, synth_ivf_pair, synth_spectral_scene
from cscfuse.pipelines.trainer import TrainingLog

__all__ = [
    "Checkpoint", "IvfnModel", "MefnModel", "MmfnModel", "TrainingLog", "bicubic_baseline", "build_model",
    "ivfn_fuse", "ivfn_reconstruct", "ivfn_train", "load_checkpoint", "load_model", "mefn_fuse",
    "mefn_fuse_detailed", "mefn_train", "mmfn_fuse", "mmfn_train", "save_checkpoint", "synth_exposure_stack",
    "synth_ivf_pair", "synth_spectral_scene", "wald_protocol",
]
