"""NIR skin-lesion spectra classification toolkit."""
__version__ = "0.1.0"
