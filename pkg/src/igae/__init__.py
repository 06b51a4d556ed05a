"""3-D aware latent autoencoders and latent NeRFs on a numpy autodiff engine."""

__version__ = "0.1.0"
