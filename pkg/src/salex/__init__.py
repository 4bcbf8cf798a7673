"""salex: facial expression classification from saliency maps.

From-scratch CNN training on FER2013/CK+-style data, spectral-residual
saliency generation, ten-crop evaluation, and Pearson correlation between
saliency-mode and face-mode per-class recall.
"""

__version__ = "0.1.0"
