"""Fully convolutional networks for raw eye-tracking data: segmentation,
reconstruction and VAE-based scanpath generation, on a small numpy autograd."""

from gazeconv.data import CLASS_NAMES, GazeSample, GazeSequence, load_csv, to_delta_tensor, to_input_tensor
from gazeconv.genvae import build_vae, generate_scanpath, vae_decode, vae_encode, vae_train
from gazeconv.reconnet import build_recon_model, inject_errors, recon_evaluate, recon_forward, recon_train
from gazeconv.segnet import build_seg_model, seg_forward, seg_predict, seg_train
from gazeconv.tensor import ConvLayer, OptimConfig, Tensor

__version__ = "0.1.0"
