"""Minimal reverse-mode autodiff plus the octave-structured GAN."""
