"""Planning in the latent space of a discrete image autoencoder."""

__version__ = "0.1.0"
