"""Byte-image malware corpora, WGAN-GP/DCGAN augmentation gated by FID_inf, and a CNN classifier."""
__version__ = "0.1.0"
